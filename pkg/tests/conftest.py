import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from scipy import integrate

from illiquid_pide import MarketParams, SolverGrid, VarianceGamma, Zero, march
from illiquid_pide.benchmarks import RHOS

SIGMA, K, T = 0.12, 100.0, 1.0
VG = VarianceGamma(theta=-0.33, sigma=0.12, kappa=0.16)


def bs_put_erfc(S, K, r, T, sigma):
    """Closed-form put written against math.erfc, independent of the package's CDF."""
    ncdf = lambda v: 0.5 * math.erfc(-v / math.sqrt(2.0))
    sd = sigma * math.sqrt(T)
    d1 = (math.log(S / K) + (r + 0.5 * sigma * sigma) * T) / sd
    return K * math.exp(-r * T) * ncdf(-(d1 - sd)) - S * ncdf(-d1)


def bs_put_delta_erfc(S, K, r, T, sigma):
    sd = sigma * math.sqrt(T)
    d1 = (math.log(S / K) + (r + 0.5 * sigma * sigma) * T) / sd
    return 0.5 * math.erfc(-d1 / math.sqrt(2.0)) - 1.0


def vg_put_fourier(S0, K, r, T, sigma, theta, sigma_vg, kappa):
    """Put under Brownian motion plus full (untruncated) VG jumps, by Gil-Pelaez inversion."""
    w = math.log(1.0 - theta * kappa - 0.5 * sigma_vg**2 * kappa) / kappa
    mu = r - 0.5 * sigma**2 + w

    def cf(u):
        return np.exp(1j * u * mu * T - 0.5 * sigma**2 * u * u * T) * (
            1.0 - 1j * u * theta * kappa + 0.5 * sigma_vg**2 * kappa * u * u
        ) ** (-T / kappa)

    k = math.log(K / S0)

    def prob(shift):
        norm = cf(-1j * shift)
        f = lambda u: (np.exp(-1j * u * k) * cf(u - 1j * shift) / norm / (1j * u)).real
        return 0.5 - integrate.quad(f, 1e-12, 400.0, limit=2000)[0] / math.pi

    return K * math.exp(-r * T) * prob(0.0) - S0 * prob(1.0)


@pytest.fixture(scope="session")
def grid():
    return SolverGrid.for_maturity(T, dx=0.01, dtau=0.005, N=400)


def build_surfaces(grid, threads=4):
    """Benchmark marches keyed like ('bs', 0.0), ('fs_pide', 0.2), ..."""
    jobs = {("bs", 0.0): (0.0, Zero()), ("bs_pide", 0.0): (0.0, VG)}
    for rho in RHOS:
        jobs[("fs", rho)] = (rho, Zero())
        jobs[("fs_pide", rho)] = (rho, VG)

    def run(item):
        rho, model = item
        return march(grid, MarketParams(sigma=SIGMA, r=0.0, rho=rho, K=K, T=T), model)

    with ThreadPoolExecutor(threads) as pool:
        return dict(zip(jobs, pool.map(run, jobs.values())))


@pytest.fixture(scope="session")
def surfaces(grid):
    return build_surfaces(grid)


def merton_put_series(S0, K, r, T, sigma, lam, m, delta, terms=80):
    """Merton's Poisson-weighted sum of Black-Scholes puts."""
    k = math.exp(m + 0.5 * delta**2) - 1.0
    lt = lam * (1.0 + k) * T
    total, weight = 0.0, math.exp(-lt)
    for n in range(terms):
        if n:
            weight *= lt / n
        sig_n = math.sqrt(sigma**2 + n * delta**2 / T)
        r_n = r - lam * k + n * math.log1p(k) / T
        total += weight * bs_put_erfc(S0, K, r_n, T, sig_n)
    return total
