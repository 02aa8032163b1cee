"""
Levy measures for the jump part of the log-price.

Four variants are supported: no jumps, Merton (Gaussian log-jumps),
Kou (double exponential) and Variance Gamma (infinite activity).
Each measure can be bounded by an admissible envelope

    h(z) = C |z|^(-alpha) (e^(D- z) 1_{z>=0} + e^(D+ z) 1_{z<0}) e^(-mu z^2),

discretised on a uniform log-jump grid, and used to compute the
risk-neutral drift of the exponential Levy model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import (
    ActivityClassError,
    IntegrabilityError,
    NoEnvelopeError,
    SingularityError,
)

__all__ = [
    "LevyModel",
    "Zero",
    "Merton",
    "Kou",
    "VarianceGamma",
    "AdmissibleEnvelope",
    "JumpQuadrature",
    "density",
    "envelope_params",
    "envelope",
    "check_admissible",
    "default_truncation",
    "build_quadrature",
    "total_intensity",
    "martingale_drift",
]


class LevyModel:
    """Common interface of the Levy density variants."""

    finite_activity: bool = True

    def density(self, z):
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Zero(LevyModel):
    finite_activity = True

    def density(self, z):
        return np.zeros_like(np.asarray(z, dtype=float))

    def to_dict(self) -> dict:
        return {"kind": "zero"}


@dataclass(frozen=True)
class Merton(LevyModel):
    intensity: float
    mean: float
    std: float

    finite_activity = True

    def __post_init__(self):
        if not self.intensity > 0:
            raise ValueError(f"Merton intensity must be > 0, got {self.intensity}")
        if not self.std > 0:
            raise ValueError(f"Merton jump std must be > 0, got {self.std}")

    def density(self, z):
        z = np.asarray(z, dtype=float)
        norm = self.intensity / (self.std * math.sqrt(2.0 * math.pi))
        return norm * np.exp(-((z - self.mean) ** 2) / (2.0 * self.std**2))

    def to_dict(self) -> dict:
        return {"kind": "merton", "intensity": self.intensity, "mean": self.mean, "std": self.std}


@dataclass(frozen=True)
class Kou(LevyModel):
    intensity: float
    p_up: float
    eta_up: float
    eta_down: float

    finite_activity = True

    def __post_init__(self):
        if not self.intensity > 0:
            raise ValueError(f"Kou intensity must be > 0, got {self.intensity}")
        if not 0.0 <= self.p_up <= 1.0:
            raise ValueError(f"Kou p_up must lie in [0, 1], got {self.p_up}")
        if not (self.eta_up > 0 and self.eta_down > 0):
            raise ValueError("Kou decay rates must be > 0")

    def density(self, z):
        z = np.asarray(z, dtype=float)
        up = self.p_up * self.eta_up * np.exp(-self.eta_up * np.where(z > 0, z, 0.0))
        down = (1.0 - self.p_up) * self.eta_down * np.exp(self.eta_down * np.where(z < 0, z, 0.0))
        return self.intensity * np.where(z > 0, up, np.where(z < 0, down, 0.0))

    def to_dict(self) -> dict:
        return {
            "kind": "kou",
            "intensity": self.intensity,
            "p_up": self.p_up,
            "eta_up": self.eta_up,
            "eta_down": self.eta_down,
        }


@dataclass(frozen=True)
class VarianceGamma(LevyModel):
    """Variance Gamma measure  e^(A z - B |z|) / (kappa |z|)."""

    theta: float
    sigma: float
    kappa: float

    finite_activity = False

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"VG sigma must be > 0, got {self.sigma}")
        if not self.kappa > 0:
            raise ValueError(f"VG kappa must be > 0, got {self.kappa}")
        if not self.B > abs(self.A):
            raise ValueError("VG constants must satisfy B > |A|")

    @property
    def A(self) -> float:
        return self.theta / self.sigma**2

    @property
    def B(self) -> float:
        return math.sqrt(self.theta**2 + 2.0 * self.sigma**2 / self.kappa) / self.sigma**2

    def density(self, z):
        z = np.asarray(z, dtype=float)
        if np.any(z == 0.0):
            raise SingularityError("Variance Gamma density is singular at z = 0")
        az = np.abs(z)
        return np.exp(self.A * z - self.B * az) / (self.kappa * az)

    def to_dict(self) -> dict:
        return {"kind": "variance_gamma", "theta": self.theta, "sigma": self.sigma, "kappa": self.kappa}


def density(model: LevyModel, z):
    """Levy density of ``model`` at log-jump size(s) ``z``."""
    out = model.density(z)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class AdmissibleEnvelope:
    C: float
    alpha: float
    D_minus: float
    D_plus: float
    mu: float

    def __post_init__(self):
        if not self.C > 0:
            raise ValueError("envelope constant C must be > 0")
        if self.alpha < 0 or self.mu < 0:
            raise ValueError("envelope requires alpha >= 0 and mu >= 0")
        if self.mu == 0 and not (self.D_minus + 1 < 0 < self.D_plus):
            raise ValueError("with mu = 0 the envelope needs D- + 1 < 0 < D+")
        if self.mu > 0 and not self.alpha < 3:
            raise ValueError("with mu > 0 the envelope needs alpha < 3")

    def shape(self, z):
        """Envelope with C = 1."""
        z = np.asarray(z, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            power = np.abs(z) ** (-self.alpha) if self.alpha else np.ones_like(z)
            side = np.where(z >= 0, np.exp(self.D_minus * z), np.exp(self.D_plus * z))
            return power * side * np.exp(-self.mu * z * z)

    def __call__(self, z):
        return self.C * self.shape(z)


# scan used to fix the envelope constant C numerically
_C_SCAN = np.concatenate([np.linspace(-5.0, -1e-4, 50_000), np.linspace(1e-4, 5.0, 50_000)])


def _exponents(model: LevyModel) -> tuple[float, float, float, float]:
    """(alpha, D-, D+, mu) of the envelope shape."""
    if isinstance(model, Merton):
        return 0.0, 0.0, 0.0, 1.0 / (2.0 * model.std**2)
    if isinstance(model, Kou):
        return 0.0, -model.eta_up, model.eta_down, 0.0
    if isinstance(model, VarianceGamma):
        return 1.0, model.A - model.B, model.A + model.B, 0.0
    raise NoEnvelopeError(f"no admissible envelope for {type(model).__name__}")


def envelope_params(model: LevyModel) -> AdmissibleEnvelope:
    """Shape parameters of the admissible envelope dominating ``model``.

    ``C`` is the smallest constant for which the bound holds on a dense scan of
    |z| <= 5.  For Kou and VG the ratio density/shape is piecewise constant so
    the scan value is exact; for Merton with nonzero mean the ratio grows in
    one tail and the scan range sets C.
    """
    alpha, d_minus, d_plus, mu = _exponents(model)
    shape = AdmissibleEnvelope(1.0, alpha, d_minus, d_plus, mu).shape(_C_SCAN)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = model.density(_C_SCAN) / shape
    C = float(np.nanmax(ratio[np.isfinite(ratio)]))
    return AdmissibleEnvelope(C, alpha, d_minus, d_plus, mu)


def envelope(env: AdmissibleEnvelope, z):
    return env(z)


def check_admissible(model: LevyModel, env: AdmissibleEnvelope, samples, rel_slack: float = 1e-12) -> bool:
    """True iff density(z) <= h(z) at every sample (up to relative slack)."""
    z = np.asarray(samples, dtype=float)
    if z.size == 0:
        raise ValueError("samples must be nonempty")
    if isinstance(model, Zero):
        return True
    if env.alpha > 0:
        z = z[z != 0.0]
    dens = model.density(z)
    bound = env(z)
    return bool(np.all(dens >= 0) and np.all(dens <= bound * (1.0 + rel_slack)))


def default_truncation(model: LevyModel, dx: float, rel: float = 1e-10, cap: float = 5.0) -> tuple[float, float]:
    """Symmetric truncation [-B, B] where the envelope has fallen below ``rel`` of its peak.

    The peak is taken over |z| >= dx so that the VG envelope (singular at 0)
    has a finite reference value.  B is capped at ``cap``.
    """
    if isinstance(model, Zero):
        return -dx, dx
    env = envelope_params(model)
    grid = np.arange(1, int(round(cap / dx)) + 1) * dx
    right = env(grid)
    left = env(-grid)
    peak = max(right.max(), left.max())
    tol = rel * peak

    def reach(vals):
        above = np.nonzero(vals > tol)[0]
        return grid[above[-1] + 1] if above.size and above[-1] + 1 < grid.size else (cap if above.size else dx)

    b = max(reach(right), reach(left))
    return -b, b


@dataclass(frozen=True)
class JumpQuadrature:
    """Jump nodes z_k = k dx, k = k_lo..k_hi, with midpoint-averaged weights."""

    dx: float
    k_lo: int
    k_hi: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    exclude_origin: bool
    finite_activity: bool

    @property
    def offsets(self) -> np.ndarray:
        return np.arange(self.k_lo, self.k_hi + 1)

    def __len__(self) -> int:
        return self.nodes.size


def build_quadrature(model: LevyModel, B_l: float, B_r: float, dx: float) -> JumpQuadrature:
    """Discretise ``model`` on [B_l, B_r] with nu_k = (nu(z_k+dx/2) + nu(z_k-dx/2)) dx / 2."""
    if not dx > 0:
        raise ValueError(f"dx must be > 0, got {dx}")
    if not (B_l < 0 < B_r):
        raise ValueError(f"truncation must satisfy B_l < 0 < B_r, got [{B_l}, {B_r}]")

    # [B_l, B_r] inside [(k_lo - 1/2) dx, (k_hi + 1/2) dx]
    k_lo = math.floor(B_l / dx + 0.5 + 1e-12)
    k_hi = math.ceil(B_r / dx - 0.5 - 1e-12)
    k = np.arange(k_lo, k_hi + 1)
    z = k * dx
    # half-cell endpoints are never 0, so the VG singularity is only hit at k = 0
    w = 0.5 * (model.density(z + 0.5 * dx) + model.density(z - 0.5 * dx)) * dx
    exclude = not model.finite_activity
    if exclude:
        w = np.where(k == 0, 0.0, w)
    z.setflags(write=False)
    w.setflags(write=False)
    return JumpQuadrature(dx, k_lo, k_hi, z, w, exclude, model.finite_activity)


def total_intensity(q: JumpQuadrature) -> float:
    if not q.finite_activity:
        raise ActivityClassError("total intensity is infinite for an infinite-activity measure")
    return float(np.sum(q.weights))


def _integration_window(model: LevyModel) -> tuple[float, float]:
    _, d_minus, d_plus, mu = _exponents(model)
    if mu > 0:
        centre = getattr(model, "mean", 0.0)
        half = max(10.0, 12.0 / math.sqrt(mu))
        return centre - half, centre + half
    right_rate = -(d_minus + 1.0)
    left_rate = d_plus
    if right_rate <= 0 or left_rate <= 0:
        raise IntegrabilityError(
            f"exponential moment diverges for {type(model).__name__}: "
            f"right tail rate {right_rate:.4g}, left tail rate {left_rate:.4g}"
        )
    return -max(10.0, 40.0 / left_rate), max(10.0, 40.0 / right_rate)


def _quad_pieces(f, lo: float, hi: float) -> float:
    cuts = [lo, -1.0, 0.0, 1.0, hi]
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b > a:
            total += integrate.quad(f, a, b, limit=400, epsabs=1e-13, epsrel=1e-12)[0]
    return total


def compensator_integral(model: LevyModel) -> float:
    """Integral of (e^y - 1) nu(dy); requires the exponential moment."""
    if isinstance(model, Zero):
        return 0.0
    lo, hi = _integration_window(model)
    f = lambda y: math.expm1(y) * float(model.density(y)) if y != 0.0 else 0.0
    return _quad_pieces(f, lo, hi)


def small_jump_mean(model: LevyModel) -> float:
    """Integral of y 1_{|y|<=1} nu(dy)."""
    if isinstance(model, Zero):
        return 0.0
    f = lambda y: y * float(model.density(y)) if y != 0.0 else 0.0
    return _quad_pieces(f, -1.0, 1.0)


def martingale_drift(model: LevyModel, sigma: float) -> float:
    """Drift gamma making exp(X_t) a martingale for the triplet (sigma, gamma, nu)."""
    if isinstance(model, Zero):
        return -0.5 * sigma * sigma
    lo, hi = _integration_window(model)

    def f(y):
        if y == 0.0:
            return 0.0
        trunc = y if abs(y) <= 1.0 else 0.0
        return (math.expm1(y) - trunc) * float(model.density(y))

    return -0.5 * sigma * sigma - _quad_pieces(f, lo, hi)
