"""
Hedging strategies and the instantaneous variance of their tracking error.

For a strategy alpha held at (t, S) the tracking error accrues variance at
the rate

    v^2 S^2 (V_S - alpha)^2 + int (V(S + H) - V(S) - alpha H)^2 nu(dz),

and the variance-minimising alpha solves a fixed-point problem because H and
v depend on the strategy itself.  Value surfaces are evaluated off-grid with
cubic splines in x = ln(S/K).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import BandError, BlowUpError, ContractionError
from .feedback import solve_relative_amplitudes
from .levy import JumpQuadrature
from .solver import Surface, boundary_g

__all__ = [
    "SurfaceSlice",
    "FunctionSlice",
    "GridStrategy",
    "VarianceRate",
    "HedgeReport",
    "delta_strategy",
    "variance_rate",
    "jump_amplitudes",
    "optimal_strategy_zeroth",
    "optimal_strategy_implicit",
    "optimal_strategy_first_order",
    "hedge_report",
]


class SurfaceSlice:
    """V(t, .) at one time level of a solved surface."""

    def __init__(self, surface: Surface, level: int | None = None):
        grid, mkt = surface.grid, surface.market
        self.level = grid.M if level is None else level
        self.tau = float(grid.tau[self.level])
        self.K, self.r = mkt.K, mkt.r
        self.kind = surface.options.payoff
        self.x = grid.x
        self.band = grid.interior_bounds
        self._spline = CubicSpline(self.x, surface.values(self.level))
        self._d1 = self._spline.derivative()
        self._disc = math.exp(-self.r * self.tau)

    def window(self) -> tuple[float, float]:
        lo, hi = self.band
        return self.K * math.exp(lo), self.K * math.exp(hi)

    def __call__(self, S):
        xq = np.log(np.asarray(S, dtype=float) / self.K)
        inside = (xq >= self.x[0]) & (xq <= self.x[-1])
        far = self._disc * boundary_g(self.tau, xq, self.K, self.r, self.kind)
        return np.where(inside, self._spline(np.clip(xq, self.x[0], self.x[-1])), far)

    def delta(self, S):
        S = np.asarray(S, dtype=float)
        xq = np.log(S / self.K)
        inside = (xq >= self.x[0]) & (xq <= self.x[-1])
        sign = -1.0 if self.kind == "put" else 1.0
        far = np.where(sign * (xq + self.r * self.tau) < 0, sign * self._disc * math.exp(self.r * self.tau), 0.0)
        return np.where(inside, self._d1(np.clip(xq, self.x[0], self.x[-1])) / S, far)


@dataclass
class FunctionSlice:
    """V(t, .) given in closed form, with its S-derivative."""

    value: Callable
    derivative: Callable
    lo: float = 1e-8
    hi: float = 1e8

    def window(self) -> tuple[float, float]:
        return self.lo, self.hi

    def __call__(self, S):
        return self.value(np.asarray(S, dtype=float))

    def delta(self, S):
        return self.derivative(np.asarray(S, dtype=float))


class GridStrategy:
    """A strategy phi(S) tabulated on log-spaced nodes; constant beyond them."""

    def __init__(self, S_nodes, values):
        self.S = np.asarray(S_nodes, dtype=float)
        self.x = np.log(self.S)
        self.values = np.asarray(values, dtype=float)
        self._spline = CubicSpline(self.x, self.values)
        self._d1 = self._spline.derivative()

    def __call__(self, S):
        return self._spline(np.clip(np.log(np.asarray(S, dtype=float)), self.x[0], self.x[-1]))

    def s_dphi(self, S):
        """S dphi/dS (zero beyond the nodes)."""
        xq = np.log(np.asarray(S, dtype=float))
        inside = (xq >= self.x[0]) & (xq <= self.x[-1])
        return np.where(inside, self._d1(np.clip(xq, self.x[0], self.x[-1])), 0.0)

    def dphi(self, S):
        return self.s_dphi(S) / np.asarray(S, dtype=float)


class VarianceRate(NamedTuple):
    diffusion: float
    jump: float

    @property
    def total(self) -> float:
        return self.diffusion + self.jump


def _check_band(V, S):
    lo, hi = V.window()
    S = np.asarray(S, dtype=float)
    if np.any((S < lo * (1 - 1e-12)) | (S > hi * (1 + 1e-12))):
        raise BandError(f"spot(s) outside [{lo:.6g}, {hi:.6g}]")


def delta_strategy(surface: Surface, S, level: int | None = None):
    """Central-difference delta dV/dS at the given level (default t = 0)."""
    V = SurfaceSlice(surface, level)
    _check_band(V, S)
    S = np.asarray(S, dtype=float)
    dx = surface.grid.dx
    up, dn = S * math.exp(dx), S * math.exp(-dx)
    out = (V(up) - V(dn)) / (up - dn)
    return float(out) if np.ndim(out) == 0 else out


def variance_rate(S: float, alpha: float, V, v: float, q: JumpQuadrature | None, H=None) -> VarianceRate:
    """Instantaneous tracking-error variance of holding ``alpha`` shares.

    ``H`` holds the jump amplitudes H(t, z_k, S) at the quadrature nodes
    (default S(e^z - 1)).
    """
    diff = float((v * S) ** 2 * (float(V.delta(S)) - alpha) ** 2)
    if q is None or len(q) == 0:
        return VarianceRate(diff, 0.0)
    Hk = S * np.expm1(q.nodes) if H is None else np.asarray(H, dtype=float)
    resid = V(S + Hk) - float(V(S)) - alpha * Hk
    return VarianceRate(diff, float(np.sum(resid**2 * q.weights)))


def jump_amplitudes(phi, S, z, rho: float, tol: float = 1e-10, max_iter: int = 200, floor: float = 1e-12):
    """H on the (S, z) lattice for strategy ``phi`` (a function of S alone)."""
    S = np.asarray(S, dtype=float)[:, None]
    base = np.expm1(np.asarray(z, dtype=float))[None, :]
    if rho == 0.0:
        return S * base
    phi_S = phi(S)
    target_of = lambda h: base + rho * (phi(S * np.maximum(1.0 + h, floor)) - phi_S)
    return S * solve_relative_amplitudes(target_of, base + np.zeros_like(S), S, tol, max_iter, floor)


def _node_spots(V, S, spacing: float, reach: float):
    """Log-spaced nodes covering every spot widened by the jump reach, clipped to V's window."""
    lo, hi = V.window()
    S = np.atleast_1d(np.asarray(S, dtype=float))
    a = max(math.log(lo), math.log(S.min()) - reach)
    b = min(math.log(hi), math.log(S.max()) + reach)
    n = max(int(math.ceil((b - a) / spacing)), 4)
    return np.exp(np.linspace(a, b, n + 1))


def _reach(q):
    if q is None or len(q) == 0:
        return 0.1
    return float(max(abs(q.nodes[0]), abs(q.nodes[-1]))) + 0.1


def _zeroth_pointwise(S, V, sigma, q):
    S = np.asarray(S, dtype=float)
    gamma = sigma**2 * S**2 * V.delta(S)
    denom = sigma**2 * S**2
    if q is not None and len(q):
        em1 = np.expm1(q.nodes)[None, :]
        jumps = V(S[:, None] * (1.0 + em1)) - V(S)[:, None]
        gamma = gamma + (S[:, None] * em1 * jumps) @ q.weights
        denom = denom + S**2 * float(np.sum(np.expm1(q.nodes) ** 2 * q.weights))
    return gamma / denom, 1.0 / denom


def optimal_strategy_zeroth(S, V, sigma: float, q: JumpQuadrature | None):
    """Variance-minimising strategy without feedback (closed form)."""
    phi, _ = _zeroth_pointwise(np.atleast_1d(S), V, sigma, q)
    return float(phi[0]) if np.ndim(S) == 0 else phi


def _implicit_update(S, phi: GridStrategy, V, sigma, q, rho, L):
    dpsi = phi.s_dphi(S)
    if L is not None:
        dpsi = np.clip(dpsi, -L, L)
    denom = 1.0 - rho * dpsi
    if np.any(denom <= 0):
        raise BlowUpError("rho * S dphi/dS >= 1 while solving for the optimal strategy")
    v2 = (sigma / denom) ** 2
    gamma = v2 * S**2 * V.delta(S)
    beta_inv = v2 * S**2
    if q is not None and len(q):
        H = jump_amplitudes(phi, S, q.nodes, rho)
        gamma = gamma + ((V(S[:, None] + H) - V(S)[:, None]) * H) @ q.weights
        beta_inv = beta_inv + (H**2) @ q.weights
    return gamma / beta_inv


def optimal_strategy_implicit(
    S,
    V,
    sigma: float,
    q: JumpQuadrature | None,
    rho: float,
    tol: float = 1e-10,
    max_iter: int = 200,
    spacing: float = 0.01,
    L: float | None = None,
):
    """Variance-minimising strategy with feedback.

    The strategy enters through v = sigma / (1 - rho S phi') and through H, so
    it is solved as a fixed point on log-spaced nodes (nested with the H
    iteration), then evaluated at the requested spots.
    """
    S_in = np.atleast_1d(np.asarray(S, dtype=float))
    _check_band(V, S_in)
    nodes = _node_spots(V, S_in, spacing, _reach(q))
    phi_vals, _ = _zeroth_pointwise(nodes, V, sigma, q)
    if rho > 0:
        damping, prev = 1.0, np.inf
        for _ in range(max_iter):
            new = _implicit_update(nodes, GridStrategy(nodes, phi_vals), V, sigma, q, rho, L)
            res = float(np.max(np.abs(new - phi_vals)))
            if res <= tol:
                phi_vals = new
                break
            if res >= prev:
                damping = 0.5
            prev = res
            phi_vals = phi_vals + damping * (new - phi_vals)
        else:
            raise ContractionError(f"optimal strategy iteration stalled at residual {res:.3e}")
        out = _implicit_update(S_in, GridStrategy(nodes, phi_vals), V, sigma, q, rho, L)
    else:
        out, _ = _zeroth_pointwise(S_in, V, sigma, q)
    return float(out[0]) if np.ndim(S) == 0 else out


def optimal_strategy_first_order(
    S,
    V,
    sigma: float,
    q: JumpQuadrature | None,
    rho: float,
    spacing: float = 0.01,
    full_output: bool = False,
):
    """phi0 + rho phi1, the expansion of the optimal strategy to first order in rho.

    With ``full_output`` returns (phi0, phi1) instead.
    """
    S_in = np.atleast_1d(np.asarray(S, dtype=float))
    _check_band(V, S_in)
    nodes = _node_spots(V, S_in, spacing, _reach(q))
    phi0_nodes, _ = _zeroth_pointwise(nodes, V, sigma, q)
    phi0 = GridStrategy(nodes, phi0_nodes)

    p0, b0 = _zeroth_pointwise(S_in, V, sigma, q)
    dV = V.delta(S_in)
    dphi0 = phi0.dphi(S_in)
    s2 = sigma**2
    gamma1 = 2.0 * s2 * S_in**3 * dV * dphi0
    gamma0 = s2 * S_in**2 * dV
    b1_bracket = 2.0 * s2 * S_in**3 * dphi0
    if q is not None and len(q):
        w = q.weights
        Sj = S_in[:, None] * np.exp(q.nodes)[None, :]
        H0 = Sj - S_in[:, None]
        H1 = S_in[:, None] * (phi0(Sj) - phi0(S_in)[:, None])
        dV_jump = V(Sj) - V(S_in)[:, None]
        gamma1 = gamma1 + ((dV_jump + V.delta(Sj) * H0) * H1) @ w
        gamma0 = gamma0 + (dV_jump * H0) @ w
        b1_bracket = b1_bracket + 2.0 * S_in**2 * ((np.expm1(q.nodes)[None, :] * H1 / S_in[:, None]) @ w)
    b1 = -(b0**2) * b1_bracket
    phi1 = b0 * gamma1 + b1 * gamma0
    if full_output:
        if np.ndim(S) == 0:
            return float(p0[0]), float(phi1[0])
        return p0, phi1
    out = p0 + rho * phi1
    return float(out[0]) if np.ndim(S) == 0 else out


@dataclass
class HedgeReport:
    S: np.ndarray
    mode: str
    phi: np.ndarray
    var_rate_diff: np.ndarray
    var_rate_jump: np.ndarray

    def rows(self):
        for i in range(self.S.size):
            yield {
                "S": float(self.S[i]),
                "mode": self.mode,
                "phi": float(self.phi[i]),
                "var_rate_diff": float(self.var_rate_diff[i]),
                "var_rate_jump": float(self.var_rate_jump[i]),
            }

    def to_csv(self, path_or_file) -> None:
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["S", "mode", "phi", "var_rate_diff", "var_rate_jump"])
            for row in self.rows():
                w.writerow([f"{row['S']:.9g}", row["mode"], f"{row['phi']:.9g}",
                            f"{row['var_rate_diff']:.9g}", f"{row['var_rate_jump']:.9g}"])
        finally:
            if own:
                fh.close()


HEDGE_MODES = ("delta", "optimal-implicit", "optimal-first-order")


def hedge_report(surface: Surface, spots, mode: str = "delta", q: JumpQuadrature | None = None, level=None) -> HedgeReport:
    """Strategy and tracking-error variance rates at each spot for one hedging mode."""
    if mode not in HEDGE_MODES:
        raise ValueError(f"mode must be one of {HEDGE_MODES}")
    mkt = surface.market
    q = surface.quadrature if q is None else q
    V = SurfaceSlice(surface, level)
    S = np.atleast_1d(np.asarray(spots, dtype=float))
    _check_band(V, S)
    rho, sigma = mkt.rho, mkt.sigma

    nodes = _node_spots(V, S, 0.01, _reach(q))
    if mode == "delta":
        strategy = GridStrategy(nodes, V.delta(nodes))
    elif mode == "optimal-implicit":
        strategy = GridStrategy(nodes, optimal_strategy_implicit(nodes, V, sigma, q, rho, L=mkt.L))
    else:
        strategy = GridStrategy(nodes, optimal_strategy_first_order(nodes, V, sigma, q, rho))
    phi = V.delta(S) if mode == "delta" else strategy(S)

    dpsi = np.clip(strategy.s_dphi(S), -mkt.L, mkt.L)
    v = sigma / (1.0 - rho * dpsi)
    H = jump_amplitudes(strategy, S, q.nodes, rho) if q is not None and len(q) else None
    diff = np.empty_like(S)
    jump = np.empty_like(S)
    for i, s in enumerate(S):
        vr = variance_rate(s, float(phi[i]), V, float(v[i]), q, None if H is None else H[i])
        diff[i], jump[i] = vr.diffusion, vr.jump
    return HedgeReport(S, mode, np.asarray(phi, dtype=float), diff, jump)
