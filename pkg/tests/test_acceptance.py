"""Acceptance criteria, one PASS/FAIL line each.

Run under pytest (``pytest tests/test_acceptance.py -s``) or directly with
``python3 tests/test_acceptance.py``.
"""

import math
import sys
import time

import numpy as np
import pytest

from illiquid_pide import MarketParams, SolverGrid, Zero, march, price_at
from illiquid_pide.cli import main as cli_main
from illiquid_pide.feedback import approx_H_first_order, solve_H_fixed_point, xi
from illiquid_pide.hedging import SurfaceSlice, optimal_strategy_first_order, optimal_strategy_implicit
from illiquid_pide.implied_vol import smile
from illiquid_pide.montecarlo import McConfig, price_put_mc
from illiquid_pide.validation import SMILE_STRIKES, smile_prices

from conftest import K, SIGMA, T, VG, bs_put_erfc, build_surfaces

SPOTS = np.array([61.8783, 67.032, 72.6149, 78.6628, 85.2144, 92.3116, 100.0, 108.329, 117.351, 127.125, 137.713])
RHOS = (0.1, 0.2, 0.3)

# published put prices at SPOTS
PUBLISHED_BS = [38.1217, 32.9691, 27.3972, 21.4275, 15.2547, 9.42895, 4.78444, 1.88555, 0.550422, 0.114716, 0.016615]
PUBLISHED_BS_PIDE = [38.2297, 33.4319, 28.4887, 23.5224, 18.6979, 14.2078, 10.243, 6.95353, 4.41257, 2.60009, 1.41444]
PUBLISHED_FS = {
    0.1: [38.1257, 32.9759, 27.4191, 21.5061, 15.4688, 9.83127, 5.29421, 2.31882, 0.797286, 0.209195, 0.040995],
    0.2: [38.1258, 32.9763, 27.4207, 21.5118, 15.4835, 9.85754, 5.32697, 2.34727, 0.814477, 0.216426, 0.043112],
    0.3: [38.1373, 33.019, 27.5623, 21.8893, 16.2645, 11.0916, 6.8043, 3.68338, 1.72932, 0.693804, 0.234949],
}
PUBLISHED_FS_PIDE = {
    0.1: [38.4958, 33.7763, 28.9293, 24.0698, 19.3477, 14.9344, 10.9999, 7.68096, 5.05246, 3.11214, 1.78547],
    0.2: [38.8234, 34.1889, 29.4425, 24.6911, 20.0701, 15.7321, 11.8282, 8.48304, 5.77178, 3.70615, 2.2351],
    0.3: [39.2259, 34.6865, 30.049, 25.4118, 20.896, 16.6367, 12.7672, 9.4005, 6.61053, 4.41995, 2.79821],
}
ATM = 6  # index of S = 100


def _within(V, ref, rel, absolute):
    ref = np.asarray(ref)
    return np.abs(V - ref) <= np.maximum(rel * np.abs(ref), absolute)


def _grid():
    return SolverGrid.for_maturity(T, dx=0.01, dtau=0.005, N=400)


def _market(rho):
    return MarketParams(sigma=SIGMA, r=0.0, rho=rho, K=K, T=T)


def _prices(surfaces, kind, rho):
    return np.asarray(price_at(surfaces[(kind, rho)], SPOTS))


# -- criteria -------------------------------------------------------------------


def c1_black_scholes(surfaces):
    t0 = time.perf_counter()
    surf = march(_grid(), _market(0.0), Zero())
    elapsed = time.perf_counter() - t0
    V = np.asarray(price_at(surf, SPOTS))
    exact = np.array([bs_put_erfc(s, K, 0.0, T, SIGMA) for s in SPOTS])
    err_exact = float(np.max(np.abs(V - exact)))
    err_pub = float(np.max(np.abs(V - PUBLISHED_BS)))
    ok = err_exact <= 0.05 and err_pub <= 0.05 and elapsed <= 10.0
    return ok, f"max err vs closed form {err_exact:.4f}, vs published {err_pub:.4f} (tol 0.05); V(100) = {V[ATM]:.5f}; {elapsed:.2f} s"


def c2_feedback_columns(surfaces):
    atm = _prices(surfaces, "fs", 0.2)[ATM]
    atm_ok = abs(atm - 5.32697) <= 0.02 * 5.32697
    counts, ok = [], atm_ok
    for rho in RHOS:
        hit = _within(_prices(surfaces, "fs", rho), PUBLISHED_FS[rho], 0.02, 0.1)
        counts.append(f"rho {rho}: {int(hit.sum())}/11")
        ok = ok and bool(hit.all())
    return ok, f"V(100; rho 0.2) = {atm:.4f} vs 5.32697 (2%); " + ", ".join(counts)


def c3_classical_pide(surfaces):
    V = _prices(surfaces, "bs_pide", 0.0)
    atm_ok = abs(V[ATM] - 10.243) <= 0.03 * 10.243
    hit = _within(V, PUBLISHED_BS_PIDE, 0.03, 0.15)
    return atm_ok and bool(hit.all()), f"V(100) = {V[ATM]:.4f} vs 10.243 (3%); {int(hit.sum())}/11 cells within 3%/0.15"


def c4_fs_pide(surfaces):
    ok, parts = True, []
    for rho in RHOS:
        V = _prices(surfaces, "fs_pide", rho)
        hit = _within(V, PUBLISHED_FS_PIDE[rho], 0.04, 0.25)
        ok = ok and bool(hit.all())
        parts.append(f"rho {rho}: {int(hit.sum())}/11, V(100) = {V[ATM]:.4f} vs {PUBLISHED_FS_PIDE[rho][ATM]}")
    return ok, "; ".join(parts)


def c5_orderings(surfaces):
    bad = []
    for rho in RHOS:
        if np.any(_prices(surfaces, "fs_pide", rho) < _prices(surfaces, "fs", rho)):
            bad.append(f"fs_pide < fs at rho {rho}")
    if np.any(_prices(surfaces, "bs_pide", 0.0) < _prices(surfaces, "bs", 0.0)):
        bad.append("bs_pide < bs")
    for lo, hi in zip(RHOS[:-1], RHOS[1:]):
        if np.any(_prices(surfaces, "fs_pide", hi) < _prices(surfaces, "fs_pide", lo)):
            bad.append(f"fs_pide decreases from rho {lo} to {hi}")
    return not bad, "; ".join(bad) or "fs_pide >= fs, bs_pide >= bs, fs_pide nondecreasing in rho at all 11 spots"


def c6_smile(surfaces):
    def curve(key):
        return smile(smile_prices(surfaces[key], SMILE_STRIKES, K), SMILE_STRIKES, K, 0.0, T).vols

    def problems(rho):
        fs = curve(("fs_pide", rho))
        out = [] if np.all(np.diff(fs) < 0) else [f"fs_pide rho {rho} not strictly decreasing"]
        if np.any(fs < classical):
            out.append(f"fs_pide rho {rho} below classical")
        return out

    classical = curve(("bs_pide", 0.0))
    # gated at the configured rho = 0.2; the other two are reported only
    bad = [] if np.all(np.diff(classical) < 0) else ["classical not strictly decreasing"]
    bad += problems(0.2)
    others = [p for rho in (0.1, 0.3) for p in problems(rho)]
    detail = "; ".join(bad) or f"K 80..120: classical {classical[0]:.4f} -> {classical[-1]:.4f}, fs_pide rho 0.2 above and decreasing"
    return not bad, detail + f" [rho 0.1/0.3: {'; '.join(others) or 'same properties hold'}]"


def c7_monte_carlo(surfaces):
    V = float(price_at(surfaces[("bs_pide", 0.0)], K))
    t0 = time.perf_counter()
    mc, se = price_put_mc(VG, SIGMA, 0.0, T, K, K, McConfig(paths=1_000_000, threads=8))
    elapsed = time.perf_counter() - t0
    gap = abs(V - mc)
    return gap <= 3 * se + 0.1 and elapsed <= 60.0, f"PIDE {V:.4f}, MC {mc:.4f} (SE {se:.4f}), gap {gap:.4f} <= {3 * se + 0.1:.4f}; {elapsed:.2f} s"


def c8_feedback_identities(surfaces):
    Z, X = np.meshgrid(np.linspace(-1.0, 1.0, 100), np.linspace(-2.0, 2.0, 100), indexing="ij")
    no_feedback = lambda t, z, S: solve_H_fixed_point(None, t, z, S, 0.0)
    xi_err = float(np.max(np.abs(xi(0.4, Z, X, no_feedback, K, T) - Z)))

    # sup |S phi'(S)| = L, attained at S = 300
    L = 2.0
    phi = lambda t, S: math.e * L * -np.expm1(-np.asarray(S, dtype=float) / 300.0)
    worst_res, worst_it = 0.0, 0
    for rho in (0.05, 0.125, 0.25):
        for S in (60.0, 80.0, 100.0, 120.0):
            z = np.linspace(-1.0, 1.0, 41)
            H, n, _ = solve_H_fixed_point(phi, 0.0, z, S, rho, full_output=True)
            res = float(np.max(np.abs(H - S * np.expm1(z) - rho * S * (phi(0.0, S + H) - phi(0.0, S)))))
            worst_res, worst_it = max(worst_res, res), max(worst_it, n)
    ok = xi_err <= 1e-12 and worst_res <= 1e-10 and worst_it <= 50
    return ok, f"max |xi - z| = {xi_err:.1e}; rho L up to 0.5: residual {worst_res:.1e}, {worst_it} iterations"


def c9_expansion_orders(surfaces):
    phi = lambda t, S: np.tanh(np.log(np.asarray(S, dtype=float) / K))
    ratios = []
    for S, z in ((100.0, 0.2), (90.0, -0.3), (110.0, 0.1)):
        gaps = [abs(approx_H_first_order(phi, 0.0, z, S, r) - solve_H_fixed_point(phi, 0.0, z, S, r)) for r in (0.1, 0.05)]
        ratios.append(gaps[0] / gaps[1])
    surf = surfaces[("bs_pide", 0.0)]
    V, q = SurfaceSlice(surf), surf.quadrature
    p0, p1 = optimal_strategy_first_order(K, V, SIGMA, q, 0.1, full_output=True)
    gaps = [abs(optimal_strategy_implicit(K, V, SIGMA, q, r) - (p0 + r * p1)) for r in (0.1, 0.05)]
    ratios.append(gaps[0] / gaps[1])
    ok = all(3.5 <= r <= 4.5 for r in ratios)
    return ok, "ratios H: " + ", ".join(f"{r:.3f}" for r in ratios[:-1]) + f"; phi: {ratios[-1]:.3f} (need 3.5..4.5)"


def c10_validate(surfaces):
    import contextlib
    import io
    import json

    buf = io.StringIO()
    t0 = time.perf_counter()
    with contextlib.redirect_stdout(buf):
        code = cli_main(["validate", "--threads", "8"])
    elapsed = time.perf_counter() - t0
    records = [json.loads(line) for line in buf.getvalue().splitlines()]
    failed = [r["check"] for r in records if not r["passed"]]
    checks = {r["check"] for r in records}
    ok = code == 0 and not failed and "invariants" in checks and elapsed <= 120.0
    return ok, f"exit {code}, {len(records)} checks, failed: {failed or 'none'}; {elapsed:.1f} s"


CRITERIA = [
    ("C1 linear Black-Scholes", c1_black_scholes),
    ("C2 feedback columns without jumps", c2_feedback_columns),
    ("C3 classical PIDE column", c3_classical_pide),
    ("C4 feedback columns with jumps", c4_fs_pide),
    ("C5 orderings", c5_orderings),
    ("C6 smile properties", c6_smile),
    ("C7 Monte Carlo cross-check", c7_monte_carlo),
    ("C8 feedback identities", c8_feedback_identities),
    ("C9 expansion orders", c9_expansion_orders),
    ("C10 validate command", c10_validate),
]


def _line(name, passed, detail):
    return f"{'PASS' if passed else 'FAIL'}  {name}: {detail}"


@pytest.mark.parametrize("name, check", CRITERIA, ids=[n.split()[0] for n, _ in CRITERIA])
def test_criterion(name, check, surfaces, capsys):
    passed, detail = check(surfaces)
    with capsys.disabled():
        print("\n" + _line(name, passed, detail))
    assert passed, detail


if __name__ == "__main__":
    surfaces = build_surfaces(_grid())
    results = [(name, *check(surfaces)) for name, check in CRITERIA]
    for name, passed, detail in results:
        print(_line(name, passed, detail))
    sys.exit(0 if all(p for _, p, _ in results) else 1)
