"""
Semi-implicit finite differences for the log-transformed nonlinear PIDE.

With tau = T - t, x = ln(S/K) and V(t, S) = e^(-r tau) u(tau, x), the price
solves

    u_tau = 1/2 s^2 u_xx + (r - 1/2 s^2 - omega) u_x
            + int [u(x + xi) - u(x)] nu(dz),      s = sigma / (1 - rho psi_x),

where psi(tau, x) = phi(t, S) is the large trader's (delta) strategy.  The
differential part is implicit, the jump integral and psi are taken from the
previous time level, and each step is one tridiagonal solve.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .errors import ActivityClassError, BandError, ContractionError, SchemeError
from .feedback import MarketParams, solve_relative_amplitudes
from .levy import JumpQuadrature, LevyModel, Zero, build_quadrature, default_truncation, total_intensity

__all__ = [
    "SolverGrid",
    "SchemeOptions",
    "SchemeCoefficients",
    "Surface",
    "payoff_h",
    "boundary_g",
    "assemble_row",
    "assemble_rows",
    "sample_shifted",
    "integral_term_finite",
    "integral_term_infinite",
    "strategy_update",
    "march",
    "price_at",
]


@dataclass(frozen=True)
class SolverGrid:
    """Nodes x_i = i dx for i = -N+1..N-1 and levels tau_j = j dtau, j = 0..M.

    Rows -N/2+1..N/2-1 form the interior band; the rest (including the row
    i = -N/2 that the discrete system leaves unassigned) carry boundary values.
    """

    N: int
    M: int
    dx: float
    dtau: float

    def __post_init__(self):
        if self.N < 4 or self.N % 2:
            raise ValueError(f"N must be an even integer >= 4, got {self.N}")
        if self.M < 1:
            raise ValueError(f"M must be >= 1, got {self.M}")
        if not (self.dx > 0 and self.dtau > 0):
            raise ValueError("dx and dtau must be > 0")

    @classmethod
    def for_maturity(cls, T: float, dx: float = 0.01, dtau: float = 0.005, N: int = 400) -> "SolverGrid":
        M = int(round(T / dtau))
        if M < 1 or not math.isclose(M * dtau, T, rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError(f"T = {T} is not a multiple of dtau = {dtau}")
        return cls(N, M, dx, dtau)

    @property
    def index(self) -> np.ndarray:
        return np.arange(-self.N + 1, self.N)

    @property
    def x(self) -> np.ndarray:
        return self.index * self.dx

    @property
    def tau(self) -> np.ndarray:
        return np.arange(self.M + 1) * self.dtau

    @property
    def interior(self) -> np.ndarray:
        i = self.index
        return (i >= -self.N // 2 + 1) & (i <= self.N // 2 - 1)

    @property
    def interior_bounds(self) -> tuple[float, float]:
        return (-self.N // 2 + 1) * self.dx, (self.N // 2 - 1) * self.dx


@dataclass(frozen=True)
class SchemeOptions:
    """Discretisation switches.

    scheme      'finite', 'infinite' or 'auto' (by activity class of the measure)
    h_mode      'first-order' or 'fixed-point' jump amplitude
    shift       'interp' evaluates u(x + xi) by linear interpolation,
                'taylor' by u_i + D+u_i * xi
    convection  'central' uses central differences where they keep the row
                monotone (|a| dx <= s^2) and upwinding elsewhere; 'upwind'
                always upwinds
    fitted_drift  make the differential stencils exact on e^x
    payoff      'put' or 'call'
    """

    scheme: str = "auto"
    h_mode: str = "first-order"
    shift: str = "interp"
    convection: str = "central"
    payoff: str = "put"
    fitted_drift: bool = True
    xi_floor: float = 1e-12
    truncation: tuple[float, float] | None = None

    def __post_init__(self):
        checks = {
            "scheme": ("auto", "finite", "infinite"),
            "h_mode": ("first-order", "fixed-point"),
            "shift": ("interp", "taylor"),
            "convection": ("central", "upwind"),
            "payoff": ("put", "call"),
        }
        for name, allowed in checks.items():
            if getattr(self, name) not in allowed:
                raise ValueError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")


def payoff_h(x, K: float, kind: str = "put"):
    S = K * np.exp(np.asarray(x, dtype=float))
    out = np.maximum(K - S, 0.0) if kind == "put" else np.maximum(S - K, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def boundary_g(tau: float, x, K: float, r: float, kind: str = "put"):
    """Far-field values g(tau, x) = h(x + r tau)."""
    return payoff_h(np.asarray(x, dtype=float) + r * tau, K, kind)


@dataclass(frozen=True)
class SchemeCoefficients:
    beta_minus: float
    beta: float
    beta_plus: float


def assemble_rows(sig, om, lam, dx: float, dtau: float, r: float, convection: str = "central", fitted: bool = False):
    """Tridiagonal coefficients (beta_minus, beta, beta_plus) for every node.

    ``lam`` is the total intensity for the finite-activity scheme and None for
    the infinite-activity one.  With ``fitted`` the convection speed is
    rescaled so that each stencil reproduces e^x exactly, which keeps the
    forward price (and hence K - S) an exact discrete solution.
    """
    sig2 = np.asarray(sig, dtype=float) ** 2
    a = r - 0.5 * sig2 - np.asarray(om, dtype=float)
    if fitted:
        c2 = 2.0 * (math.cosh(dx) - 1.0) / (dx * dx)
        a = a + 0.5 * sig2 * (1.0 - c2)
    diff = -dtau / (2.0 * dx * dx) * sig2
    if fitted:
        a_fwd = a / (math.expm1(dx) / dx)
        a_bwd = a / (-math.expm1(-dx) / dx)
        a_ctr = a / (math.sinh(dx) / dx)
    else:
        a_fwd = a_bwd = a_ctr = a
    up_plus = diff - dtau / dx * np.maximum(a_fwd, 0.0)
    up_minus = diff - dtau / dx * np.maximum(-a_bwd, 0.0)
    if convection == "central":
        ok = np.abs(a_ctr) * dx <= sig2
        b_plus = np.where(ok, diff - dtau / (2.0 * dx) * a_ctr, up_plus)
        b_minus = np.where(ok, diff + dtau / (2.0 * dx) * a_ctr, up_minus)
    elif convection == "upwind":
        b_plus, b_minus = up_plus, up_minus
    else:
        raise ValueError(f"unknown convection {convection!r}")
    b_diag = 1.0 - (b_minus + b_plus)
    if lam is not None:
        b_diag = b_diag + dtau * lam
    return b_minus, b_diag, b_plus


def assemble_row(sig: float, om: float, lam, dx: float, dtau: float, r: float, convection: str = "upwind") -> SchemeCoefficients:
    bm, b0, bp = assemble_rows(sig, om, lam, dx, dtau, r, convection)
    return SchemeCoefficients(float(bm), float(b0), float(bp))


def sample_shifted(u, x0: float, dx: float, xq, fallback):
    """Interpolate nodal values ``u`` at ``xq``, linearly in S = K e^x; ``fallback(xq)`` off the grid.

    Interpolating in S rather than x reproduces functions affine in S (the
    intrinsic value of a put or call) exactly.
    """
    u = np.asarray(u, dtype=float)
    xq = np.asarray(xq, dtype=float)
    pos = (xq - x0) / dx
    near = np.rint(pos)
    pos = np.where(np.abs(pos - near) < 1e-9, near, pos)
    idx = np.floor(pos).astype(np.int64)
    frac = np.expm1((pos - idx) * dx) / math.expm1(dx)
    n = u.size
    inside = (idx >= 0) & ((idx < n - 1) | ((idx == n - 1) & (frac == 0.0)))
    lo = np.clip(idx, 0, n - 1)
    hi = np.clip(idx + 1, 0, n - 1)
    val = u[lo] * (1.0 - frac) + u[hi] * frac
    if np.all(inside):
        return val
    return np.where(inside, val, fallback(xq))


def _shifted_values(u, xi, dx, x, shift, fallback):
    """u(x_i + xi_ik) for all i, k."""
    if shift == "taylor":
        fwd = np.zeros_like(u)
        fwd[:-1] = (u[1:] - u[:-1]) / dx
        return u[:, None] + fwd[:, None] * xi
    return sample_shifted(u, x[0], dx, x[:, None] + xi, fallback)


def integral_term_finite(u, xi, weights, dx: float, dtau: float, x=None, shift: str = "taylor", fallback=None):
    """dtau * sum_k u(x_i + xi_ik) nu_k."""
    u = np.asarray(u, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if x is None:
        x = np.arange(u.size) * dx
    vals = _shifted_values(u, xi, dx, x, shift, fallback)
    return dtau * (vals @ np.asarray(weights, dtype=float))


def integral_term_infinite(u, xi, weights, dx: float, dtau: float, x=None, shift: str = "taylor", fallback=None):
    """dtau * sum_k [u(x_i + xi_ik) - u_i] nu_k."""
    u = np.asarray(u, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if x is None:
        x = np.arange(u.size) * dx
    vals = _shifted_values(u, xi, dx, x, shift, fallback)
    return dtau * ((vals - u[:, None]) @ np.asarray(weights, dtype=float))


def strategy_update(u, tau: float, x, dx: float, K: float, r: float, L: float | None = None):
    """Delta strategy psi = dV/dS from one level of u, and its clamped slope.

    Returns (psi, dpsi, n_clamped) where dpsi is the forward difference of psi
    in x (equal to S dphi/dS), clamped to [-L, L] when L is given.
    """
    u = np.asarray(u, dtype=float)
    x = np.asarray(x, dtype=float)
    ux = np.empty_like(u)
    ux[1:-1] = (u[2:] - u[:-2]) / (2.0 * dx)
    ux[0] = (u[1] - u[0]) / dx
    ux[-1] = (u[-1] - u[-2]) / dx
    psi = math.exp(-r * tau) * np.exp(-x) / K * ux
    dpsi = np.empty_like(psi)
    dpsi[:-1] = (psi[1:] - psi[:-1]) / dx
    dpsi[-1] = dpsi[-2]
    n_clamped = 0
    if L is not None:
        over = np.abs(dpsi) > L
        n_clamped = int(np.count_nonzero(over))
        dpsi = np.clip(dpsi, -L, L)
    return psi, dpsi, n_clamped


@dataclass
class Surface:
    """Solution u_i^j on the solver grid plus the strategy grid psi_i^j."""

    grid: SolverGrid
    market: MarketParams
    model: LevyModel
    options: SchemeOptions
    quadrature: JumpQuadrature | None
    u: np.ndarray = field(repr=False)
    psi: np.ndarray = field(repr=False)
    diagnostics: dict = field(default_factory=dict)

    @property
    def x(self) -> np.ndarray:
        return self.grid.x

    @property
    def tau(self) -> np.ndarray:
        return self.grid.tau

    def level_for_time(self, t: float) -> int:
        j = int(round((self.market.T - t) / self.grid.dtau))
        if not 0 <= j <= self.grid.M:
            raise ValueError(f"t = {t} outside [0, T]")
        return j

    def values(self, j: int | None = None) -> np.ndarray:
        """Option values V on the grid at level j (default: t = 0)."""
        j = self.grid.M if j is None else j
        return math.exp(-self.market.r * self.grid.tau[j]) * self.u[j]

    def to_csv(self, path, levels=None) -> None:
        """Write tau,x,S,u,V,psi rows, level by level, with 9 significant digits."""
        K, r = self.market.K, self.market.r
        x = self.x
        S = K * np.exp(x)
        levels = range(self.grid.M + 1) if levels is None else levels
        fmt = lambda v: f"{v:.9g}"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["tau", "x", "S", "u", "V", "psi"])
            for j in levels:
                tau = self.grid.tau[j]
                V = math.exp(-r * tau) * self.u[j]
                for i in range(x.size):
                    w.writerow([fmt(tau), fmt(x[i]), fmt(S[i]), fmt(self.u[j, i]), fmt(V[i]), fmt(self.psi[j, i])])


def _resolve_scheme(model: LevyModel, requested: str) -> str:
    if requested == "auto":
        return "finite" if model.finite_activity else "infinite"
    if requested == "finite" and not model.finite_activity:
        raise ActivityClassError(f"{type(model).__name__} has infinite activity; use the infinite scheme")
    return requested


def _jump_amplitudes(psi, x, z, rho, h_mode, K):
    """H/S on the (node, jump) lattice with psi^j as the strategy."""
    base = np.expm1(z)[None, :]
    if rho == 0.0:
        return np.broadcast_to(base, (x.size, z.size))
    phi = lambda xq: np.interp(xq, x, psi)
    if h_mode == "first-order":
        return base + rho * (phi(x[:, None] + z[None, :]) - psi[:, None])
    # fixed point in relative units h = H/S: h = e^z - 1 + rho [phi(S(1+h)) - phi(S)]
    target_of = lambda h: base + rho * (phi(x[:, None] + np.log(np.maximum(1.0 + h, 1e-300))) - psi[:, None])
    try:
        return solve_relative_amplitudes(target_of, base + np.zeros((x.size, 1)), K * np.exp(x)[:, None])
    except ContractionError as exc:
        raise SchemeError(f"jump amplitude inside the march: {exc}") from None


def march(
    grid: SolverGrid,
    market: MarketParams,
    model: LevyModel | None = None,
    options: SchemeOptions | None = None,
    quadrature: JumpQuadrature | None = None,
) -> Surface:
    """Time-march the PIDE from the payoff at tau = 0 to tau = T."""
    model = Zero() if model is None else model
    options = SchemeOptions() if options is None else options
    if grid.M * grid.dtau - market.T > 1e-9 * market.T or market.T - grid.M * grid.dtau > 1e-9 * market.T:
        raise ValueError("grid levels do not span [0, T]")
    scheme = _resolve_scheme(model, options.scheme)

    K, r, rho, sigma = market.K, market.r, market.rho, market.sigma
    x = grid.x
    dx, dtau = grid.dx, grid.dtau
    interior = grid.interior
    kind = options.payoff

    jumps = not isinstance(model, Zero)
    if jumps and quadrature is None:
        lo, hi = options.truncation or default_truncation(model, dx)
        quadrature = build_quadrature(model, lo, hi, dx)
    lam = None
    if scheme == "finite":
        lam = total_intensity(quadrature) if jumps else 0.0

    u = np.empty((grid.M + 1, x.size))
    psi_all = np.empty_like(u)
    u[0] = payoff_h(x, K, kind)
    clamped = floored = 0

    for j in range(grid.M):
        tau_j, tau_next = grid.tau[j], grid.tau[j + 1]
        uj = u[j]
        psi, dpsi, n_cl = strategy_update(uj, tau_j, x, dx, K, r, market.L if rho > 0 else None)
        psi_all[j] = psi
        clamped += n_cl
        sig = sigma / (1.0 - rho * dpsi)

        if jumps:
            z, w = quadrature.nodes, quadrature.weights
            amp = _jump_amplitudes(psi, x, z, rho, options.h_mode, K)
            om = amp @ w
            ratio = 1.0 + amp
            bad = ratio <= options.xi_floor
            if bad.any():
                floored += int(np.count_nonzero(bad & (w[None, :] > 0) & interior[:, None]))
                ratio = np.maximum(ratio, options.xi_floor)
            shift = np.log(ratio)
            fallback = lambda xq: boundary_g(tau_j, xq, K, r, kind)
            term = integral_term_finite if scheme == "finite" else integral_term_infinite
            jump_rhs = term(uj, shift, w, dx, dtau, x=x, shift=options.shift, fallback=fallback)
        else:
            om = np.zeros_like(x)
            jump_rhs = 0.0

        bm, b0, bp = assemble_rows(sig, om, lam, dx, dtau, r, options.convection, options.fitted_drift)
        dominance = b0 - np.abs(bm) - np.abs(bp)
        if np.any(dominance[interior] <= 0) or not np.all(np.isfinite(b0[interior])):
            worst = int(np.argmin(np.where(interior, dominance, np.inf)))
            raise SchemeError(
                f"row {grid.index[worst]} at level {j} is not diagonally dominant "
                f"(beta-={bm[worst]:.4g}, beta={b0[worst]:.4g}, beta+={bp[worst]:.4g})"
            )

        rhs = np.where(interior, uj + jump_rhs, boundary_g(tau_next, x, K, r, kind))
        ab = np.zeros((3, x.size))
        ab[0, 1:] = np.where(interior, bp, 0.0)[:-1]
        ab[1] = np.where(interior, b0, 1.0)
        ab[2, :-1] = np.where(interior, bm, 0.0)[1:]
        u[j + 1] = solve_banded((1, 1), ab, rhs, check_finite=False)
        if not np.all(np.isfinite(u[j + 1])):
            raise SchemeError(f"non-finite values after level {j + 1}")

    psi_all[grid.M] = strategy_update(u[grid.M], grid.tau[grid.M], x, dx, K, r)[0]
    diagnostics = {"scheme": scheme, "clamped": clamped, "xi_floored": floored,
                   "jump_nodes": 0 if quadrature is None else len(quadrature)}
    return Surface(grid, market, model, options, quadrature, u, psi_all, diagnostics)


def price_at(surface: Surface, S, level: int | None = None):
    """V(t, S) by linear interpolation in x at a level (default t = 0)."""
    S = np.asarray(S, dtype=float)
    grid = surface.grid
    j = grid.M if level is None else level
    xq = np.log(S / surface.market.K)
    lo, hi = grid.interior_bounds
    if np.any((xq < lo - 1e-12) | (xq > hi + 1e-12)):
        raise BandError(f"spot(s) outside the interior band [{lo:.4g}, {hi:.4g}] in log-moneyness")
    out = math.exp(-surface.market.r * grid.tau[j]) * np.interp(xq, grid.x, surface.u[j])
    return float(out) if np.ndim(out) == 0 else out
