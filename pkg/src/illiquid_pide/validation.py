"""
Desk-scale self-check suite.

Each check returns a record ``{"check", "passed", "detail", "seconds"}``; the
CLI prints one JSON line per record.  Published-table reproduction is
optional (``tables=True``) because it compares against fixed numbers rather
than properties of the model.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import benchmarks
from .errors import PideError
from .feedback import MarketParams, solve_H_fixed_point, approx_H_first_order, xi
from .hedging import SurfaceSlice, optimal_strategy_first_order, optimal_strategy_implicit
from .implied_vol import bs_put, smile
from .levy import LevyModel, Merton, Zero, build_quadrature, martingale_drift, total_intensity
from .montecarlo import McConfig, price_put_mc
from .solver import SchemeOptions, SolverGrid, march, price_at

__all__ = ["run_suite", "SMILE_STRIKES", "smile_prices"]

SMILE_STRIKES = np.arange(80.0, 121.0, 5.0)


def smile_prices(surface, strikes, S0: float):
    """Put prices V(S0; K) read off one surface struck at K0 using V(S; K) = (K/K0) V(S K0/K; K0)."""
    K0 = surface.market.K
    strikes = np.asarray(strikes, dtype=float)
    return strikes / K0 * price_at(surface, S0 * K0 / strikes)


class _Runs:
    """Marches shared between checks, computed once in parallel."""

    def __init__(self, market: MarketParams, model: LevyModel, grid: SolverGrid, options: SchemeOptions, threads: int):
        self.market, self.model, self.grid, self.options = market, model, grid, options
        jobs = {("bs", 0.0): (0.0, Zero()), ("bs_pide", 0.0): (0.0, model)}
        for rho in benchmarks.RHOS:
            jobs[("fs", rho)] = (rho, Zero())
            jobs[("fs_pide", rho)] = (rho, model)
        base = dict(sigma=market.sigma, r=market.r, K=market.K, T=market.T, mu=market.mu, L=market.L)

        def run(item):
            rho, mdl = item
            return march(grid, MarketParams(rho=rho, **base), mdl, options)

        with ThreadPoolExecutor(max(1, threads)) as pool:
            self.surfaces = dict(zip(jobs, pool.map(run, jobs.values())))

    def prices(self, key):
        return price_at(self.surfaces[key], benchmarks.SPOTS)


def _record(name, fn):
    t0 = time.perf_counter()
    try:
        passed, detail = fn()
    except PideError as exc:
        passed, detail = False, f"{type(exc).__name__}: {exc}"
    return {"check": name, "passed": bool(passed), "detail": detail, "seconds": round(time.perf_counter() - t0, 3)}


def _check_bs(runs: _Runs):
    V = runs.prices(("bs", 0.0))
    m = runs.market
    exact = bs_put(benchmarks.SPOTS, m.K, m.r, m.T, m.sigma)
    err = float(np.max(np.abs(V - exact)))
    return err <= 0.05, f"max |V - closed form| = {err:.4g} (tol 0.05)"


ROUNDOFF = 1e-9


def _check_ordering(runs: _Runs):
    """Strict at the benchmark spots; at every interior node up to round-off."""
    band = runs.grid.interior
    pairs = [(("fs_pide", rho), ("fs", rho)) for rho in benchmarks.RHOS]
    pairs.append((("bs_pide", 0.0), ("bs", 0.0)))
    pairs += [(("fs_pide", hi), ("fs_pide", lo)) for lo, hi in zip(benchmarks.RHOS[:-1], benchmarks.RHOS[1:])]
    bad = []
    worst = 0.0
    for big, small in pairs:
        if np.any(runs.prices(big) < runs.prices(small)):
            bad.append(f"{big} < {small} at a benchmark spot")
        gap = runs.surfaces[big].values()[band] - runs.surfaces[small].values()[band]
        worst = min(worst, float(gap.min()))
        if gap.min() < -ROUNDOFF:
            bad.append(f"{big} < {small} by {-gap.min():.3g} on the grid")
    return not bad, "; ".join(bad) or f"all orderings hold (largest grid shortfall {-worst:.2e})"


def _check_invariants(runs: _Runs):
    bad = []
    band = runs.grid.interior
    S = runs.market.K * np.exp(runs.grid.x[band])
    for key, surf in runs.surfaces.items():
        V = surf.values()[band]
        intrinsic = np.maximum(runs.market.K - S, 0.0)
        if np.any(V < intrinsic - 1e-9) or np.any(V > runs.market.K + 1e-9):
            bad.append(f"put bounds fail for {key}")
        if np.any(np.diff(V) > 1e-9):
            bad.append(f"V increases in S for {key}")
    q = build_quadrature(Merton(0.1, -0.2, 0.15), -5.0, 5.0, 0.01)
    lam_err = abs(total_intensity(q) - 0.1)
    if lam_err > 1e-3:
        bad.append(f"Merton intensity error {lam_err:.3g}")
    gamma = martingale_drift(Zero(), runs.market.sigma)
    if gamma != -0.5 * runs.market.sigma**2:
        bad.append(f"drift without jumps {gamma!r} != -sigma^2/2")
    # every march checks strict diagonal dominance row by row and raises otherwise
    return not bad, "; ".join(bad) or (
        f"bounds, monotonicity, diagonal dominance over {len(runs.surfaces)} marches; "
        f"|sum nu_k - 0.1| = {lam_err:.2e}; drift = -sigma^2/2 exactly"
    )


def _tanh_strategy(L: float, K: float):
    # S dphi/dS = L sech^2(ln(S/K)) <= L; the fixed-point map then contracts with
    # factor rho S phi'(S + H) <= 1.3 rho L S / K, below 0.65 for rho L = 0.5, S <= K
    return lambda t, S: L * np.tanh(np.log(np.asarray(S, dtype=float) / K))


def _saturating_strategy(L: float, scale: float):
    # sup_S |S dphi/dS| = L exactly (attained at S = scale); the fixed-point map
    # contracts with factor rho S phi'(S + H) <= rho L e S / scale
    return lambda t, S: math.e * L * -np.expm1(-np.asarray(S, dtype=float) / scale)


def _check_feedback(runs: _Runs):
    K, T = runs.market.K, runs.market.T
    zs = np.linspace(-1.0, 1.0, 100)
    xs = np.linspace(-2.0, 2.0, 100)
    Z, X = np.meshgrid(zs, xs, indexing="ij")
    H0 = lambda t, z, S: solve_H_fixed_point(None, t, z, S, 0.0)
    err = float(np.max(np.abs(xi(0.3, Z, X, H0, K, T) - Z)))
    L, rho = 2.5, 0.2
    phi = _saturating_strategy(L, 3.0 * K)
    worst_res, worst_it = 0.0, 0
    for S in (60.0, 80.0, 100.0):
        for z in np.linspace(-1.0, 1.0, 41):
            _, n, res = solve_H_fixed_point(phi, 0.0, z, S, rho, full_output=True)
            worst_res, worst_it = max(worst_res, res), max(worst_it, n)
    ok = err <= 1e-12 and worst_res <= 1e-10 and worst_it <= 50
    return ok, f"max |xi - z| = {err:.2e}; fixed point rho L = {rho * L}: residual {worst_res:.2e}, iterations {worst_it}"


def _check_orders(runs: _Runs):
    K = runs.market.K
    phi = _tanh_strategy(1.0, K)
    ratios = []
    for S, z in ((100.0, 0.2), (90.0, -0.3)):
        d = [abs(approx_H_first_order(phi, 0.0, z, S, r) - solve_H_fixed_point(phi, 0.0, z, S, r)) for r in (0.1, 0.05)]
        ratios.append(d[0] / d[1])
    surf = runs.surfaces[("bs_pide", 0.0)]
    V = SurfaceSlice(surf)
    q = surf.quadrature
    sig = runs.market.sigma
    p0, p1 = optimal_strategy_first_order(K, V, sig, q, 0.1, full_output=True)
    d = [abs(optimal_strategy_implicit(K, V, sig, q, r) - (p0 + r * p1)) for r in (0.1, 0.05)]
    ratios.append(d[0] / d[1])
    ok = all(3.5 <= r <= 4.5 for r in ratios)
    return ok, "error ratios under rho halving: " + ", ".join(f"{r:.3f}" for r in ratios)


def _check_smile(runs: _Runs, rho: float):
    S0 = runs.market.K
    r, T = runs.market.r, runs.market.T
    classical = smile(smile_prices(runs.surfaces[("bs_pide", 0.0)], SMILE_STRIKES, S0), SMILE_STRIKES, S0, r, T, "classical")
    fs_pide = smile(smile_prices(runs.surfaces[("fs_pide", rho)], SMILE_STRIKES, S0), SMILE_STRIKES, S0, r, T, "fs-pide")
    bad = []
    for c in (classical, fs_pide):
        if not np.all(np.diff(c.vols) < 0):
            bad.append(f"{c.source} smile not strictly decreasing")
    if np.any(fs_pide.vols < classical.vols):
        bad.append("F-S PIDE smile below classical")
    return not bad, "; ".join(bad) or (
        f"K={SMILE_STRIKES[0]:g}..{SMILE_STRIKES[-1]:g}: classical {classical.vols[0]:.4f}->{classical.vols[-1]:.4f}, "
        f"F-S PIDE {fs_pide.vols[0]:.4f}->{fs_pide.vols[-1]:.4f}"
    )


def _check_mc(runs: _Runs, cfg: McConfig):
    m = runs.market
    V = float(price_at(runs.surfaces[("bs_pide", 0.0)], m.K))
    mc, se = price_put_mc(runs.model, m.sigma, m.r, m.T, m.K, m.K, cfg)
    gap = abs(V - mc)
    return gap <= 3 * se + 0.1, f"PIDE {V:.4f} vs MC {mc:.4f} (SE {se:.4f}, {cfg.paths} paths): gap {gap:.4f}"


def _check_tables(runs: _Runs):
    out = []
    V = runs.prices(("bs_pide", 0.0))
    ref = np.array(benchmarks.TABLE1["bs_pide"])
    ok = np.abs(V - ref) <= np.maximum(0.03 * ref, 0.15)
    out.append(("table1_bs_pide", bool(ok.all()), f"{int(ok.sum())}/11 cells within 3%/0.15; at S=100 {V[6]:.4f} vs {ref[6]}"))
    for (kind, rho), ref in benchmarks.TABLE2.items():
        ref = np.array(ref)
        V = runs.prices((kind, rho))
        rel, absol = (0.02, 0.1) if kind == "fs" else (0.04, 0.25)
        ok = np.abs(V - ref) <= np.maximum(rel * np.abs(ref), absol)
        out.append((f"table2_{kind}_rho{rho}", bool(ok.all()), f"{int(ok.sum())}/11 cells; at S=100 {V[6]:.4f} vs {ref[6]}"))
    return out


def run_suite(market: MarketParams, model: LevyModel, grid: SolverGrid, options: SchemeOptions,
              mc: McConfig, threads: int = 1, tables: bool = False):
    """Run every check; returns the list of records."""
    t0 = time.perf_counter()
    try:
        runs = _Runs(market, model, grid, options, threads)
    except PideError as exc:
        return [{"check": "marches", "passed": False, "detail": f"{type(exc).__name__}: {exc}",
                 "seconds": round(time.perf_counter() - t0, 3)}]
    records = [{"check": "marches", "passed": True, "detail": f"{len(runs.surfaces)} surfaces",
                "seconds": round(time.perf_counter() - t0, 3)}]
    records.append(_record("bs_closed_form", lambda: _check_bs(runs)))
    records.append(_record("orderings", lambda: _check_ordering(runs)))
    records.append(_record("smile", lambda: _check_smile(runs, market.rho if market.rho in benchmarks.RHOS else 0.2)))
    records.append(_record("monte_carlo", lambda: _check_mc(runs, mc)))
    records.append(_record("feedback_identities", lambda: _check_feedback(runs)))
    records.append(_record("expansion_orders", lambda: _check_orders(runs)))
    records.append(_record("invariants", lambda: _check_invariants(runs)))
    if tables:
        for name, passed, detail in _check_tables(runs):
            records.append({"check": name, "passed": passed, "detail": detail, "seconds": 0.0})
    return records
