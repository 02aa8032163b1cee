"""
Large-trader feedback quantities.

A strategy phi(t, S) held by a large trader with market-impact parameter rho
modifies the asset dynamics: diffusion is scaled by 1 / (1 - rho S dphi/dS)
and a log-jump z moves the price by the implicit amount

    H = S (e^z - 1) + rho S [phi(t, S + H) - phi(t, S)].

Every function here is a pure, vectorised evaluation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import BlowUpError, ContractionError, XiDomainError
from .levy import JumpQuadrature

__all__ = [
    "MarketParams",
    "solve_H_fixed_point",
    "solve_relative_amplitudes",
    "approx_H_first_order",
    "make_H_provider",
    "effective_vol",
    "xi",
    "omega",
    "drift_b",
]

Strategy = Callable[[float, np.ndarray], np.ndarray]
HProvider = Callable[[float, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class MarketParams:
    """Market and contract data.

    ``L`` bounds |S dphi/dS| for the large trader's strategy; the solver clamps
    the discrete strategy slope to [-L, L].
    """

    sigma: float
    r: float
    rho: float
    K: float
    T: float
    mu: float = 0.0
    L: float = 1.0

    def __post_init__(self):
        problems = self.violations()
        if problems:
            raise ValueError("; ".join(problems))

    def violations(self) -> list[str]:
        out = []
        if not self.sigma > 0:
            out.append(f"sigma must be > 0 (got {self.sigma})")
        if not self.K > 0:
            out.append(f"K must be > 0 (got {self.K})")
        if not self.T > 0:
            out.append(f"T must be > 0 (got {self.T})")
        if not self.rho >= 0:
            out.append(f"rho must be >= 0 (got {self.rho})")
        if not self.L > 0:
            out.append(f"L must be > 0 (got {self.L})")
        if not self.rho * self.L < 1:
            out.append(f"rho * L must be < 1 (got {self.rho * self.L:.6g})")
        return out


def solve_H_fixed_point(
    phi: Strategy,
    t: float,
    z,
    S,
    rho: float,
    tol: float = 1e-10,
    max_iter: int = 100,
    full_output: bool = False,
):
    """Jump amplitude H solving H = S(e^z - 1) + rho S [phi(t, S+H) - phi(t, S)].

    Picard iteration from H0 = S(e^z - 1); switches to 0.5 damping once the
    residual stops decreasing.  With ``full_output`` returns (H, iterations,
    max residual).
    """
    z = np.asarray(z, dtype=float)
    S = np.asarray(S, dtype=float)
    base = S * np.expm1(z)
    if rho == 0.0:
        H = np.broadcast_to(base, np.broadcast(z, S).shape).astype(float)
        return (H, 1, 0.0) if full_output else H

    phi_S = phi(t, S)
    H = base
    damping = 1.0
    prev = np.inf
    for n in range(1, max_iter + 1):
        target = base + rho * S * (phi(t, S + H) - phi_S)
        step = target - H
        res = float(np.max(np.abs(step))) if step.size else 0.0
        if res <= tol:
            H = np.asarray(target, dtype=float)
            return (H, n, res) if full_output else H
        if res >= prev:
            damping = 0.5
        prev = res
        H = H + damping * step
    raise ContractionError(f"H fixed point did not converge in {max_iter} iterations (residual {res:.3e})")


def solve_relative_amplitudes(target_of, h0, scale, tol: float = 1e-10, max_iter: int = 200, floor: float = 1e-12):
    """Solve h = target_of(h) elementwise for relative amplitudes h = H / S.

    ``target_of(h)`` is e^z - 1 + rho [phi(S (1 + h)) - phi(S)]; ``scale`` is S,
    so ``tol`` is in currency.  Damped Picard iteration runs first.  When it
    stalls (the map need not contract where S + H falls into a region with
    steep phi) every entry is solved by bracketing bisection instead.
    """
    h = np.asarray(h0, dtype=float)
    damping, prev = 1.0, np.inf
    for _ in range(max_iter):
        target = target_of(h)
        res = float(np.max(np.abs(target - h) * scale)) if h.size else 0.0
        if res <= tol:
            return target
        if res >= prev:
            if damping < 1.0:
                break
            damping = 0.5
        prev = res
        h = h + damping * (target - h)
    return _bisect_relative(target_of, np.asarray(h0, dtype=float), scale, tol, floor)


def _bisect_relative(target_of, h0, scale, tol, floor):
    f = lambda h: h - target_of(h)
    lo_edge = floor - 1.0
    lo, hi = np.maximum(h0 - 0.1, lo_edge), h0 + 0.1
    for _ in range(60):
        f_lo, f_hi = f(lo), f(hi)
        if np.all(f_lo <= 0) and np.all(f_hi >= 0):
            break
        width = hi - lo
        lo = np.where(f_lo > 0, np.maximum(lo - 2.0 * width, lo_edge), lo)
        hi = np.where(f_hi < 0, hi + 2.0 * width, hi)
    else:
        raise ContractionError("jump amplitude equation has no bracketed root")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        neg = f(mid) <= 0
        lo, hi = np.where(neg, mid, lo), np.where(neg, hi, mid)
        if float(np.max((hi - lo) * scale)) <= tol:
            break
    return target_of(0.5 * (lo + hi))


def approx_H_first_order(phi: Strategy, t: float, z, S, rho: float):
    """S(e^z - 1) + rho S [phi(t, S e^z) - phi(t, S)], accurate to O(rho^2)."""
    z = np.asarray(z, dtype=float)
    S = np.asarray(S, dtype=float)
    H = S * np.expm1(z)
    if rho == 0.0:
        return H
    return H + rho * S * (phi(t, S * np.exp(z)) - phi(t, S))


def make_H_provider(phi: Strategy, rho: float, mode: str = "first-order", **kw) -> HProvider:
    if mode == "first-order":
        return lambda t, z, S: approx_H_first_order(phi, t, z, S, rho)
    if mode == "fixed-point":
        return lambda t, z, S: solve_H_fixed_point(phi, t, z, S, rho, **kw)
    raise ValueError(f"unknown H mode {mode!r}")


def effective_vol(sigma: float, rho: float, dpsi):
    """sigma / (1 - rho * dpsi), where dpsi is the local value of S dphi/dS."""
    denom = 1.0 - rho * np.asarray(dpsi, dtype=float)
    if np.any(denom <= 0):
        raise BlowUpError("rho * S dphi/dS >= 1: effective volatility is unbounded")
    out = sigma / denom
    return float(out) if np.ndim(out) == 0 else out


def xi(tau: float, z, x, H: HProvider, K: float, T: float):
    """Log-jump seen in x = ln(S/K) after the feedback: ln(1 + H / S)."""
    S = K * np.exp(np.asarray(x, dtype=float))
    arg = 1.0 + H(T - tau, np.asarray(z, dtype=float), S) / S
    if np.any(arg <= 0):
        raise XiDomainError("jump would move the price to a nonpositive value")
    out = np.log(arg)
    return float(out) if np.ndim(out) == 0 else out


def omega(tau: float, x, q: JumpQuadrature, H: HProvider, K: float, T: float):
    """Compensator drift sum_k H(T - tau, z_k, K e^x) e^(-x) / K * nu_k."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    S = K * np.exp(x)
    amp = H(T - tau, q.nodes[None, :], S[:, None]) / S[:, None]
    out = amp @ q.weights
    return float(out[0]) if out.size == 1 else out


def drift_b(S, dphi_dt, dphi_dS, d2phi_dS2, v, mu: float, rho: float):
    """Physical drift of the feedback dynamics."""
    S = np.asarray(S, dtype=float)
    denom = 1.0 - rho * S * np.asarray(dphi_dS, dtype=float)
    if np.any(denom <= 0):
        raise BlowUpError("rho * S dphi/dS >= 1 in drift")
    out = (mu + rho * (dphi_dt + 0.5 * np.asarray(v) ** 2 * S * S * d2phi_dS2)) / denom
    return float(out) if np.ndim(out) == 0 else out
