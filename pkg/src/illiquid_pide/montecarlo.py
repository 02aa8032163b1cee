"""
Monte Carlo pricing under the risk-neutral exponential Levy model (no feedback).

Paths are generated in fixed-size blocks, each with its own Philox stream keyed
by (seed, block index), so results do not depend on the number of threads.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .levy import Kou, LevyModel, Merton, VarianceGamma, Zero, martingale_drift, small_jump_mean

__all__ = ["McConfig", "McResult", "simulate_terminal", "price_put_mc", "write_mc_csv"]

BLOCK = 1 << 16


@dataclass(frozen=True)
class McConfig:
    paths: int = 1_000_000
    steps: int = 1
    seed: int = 20240601
    antithetic: bool = False
    threads: int = 1

    def __post_init__(self):
        if self.paths < 1 or self.steps < 1:
            raise ValueError("paths and steps must be >= 1")
        if self.antithetic and self.paths % 2:
            raise ValueError("antithetic sampling needs an even number of paths")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")


@dataclass(frozen=True)
class McResult:
    price: float
    se: float
    paths: int
    seed: int


def _rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed, block], dtype=np.uint64)))


def _kou_jumps(u, model: Kou) -> np.ndarray:
    """Inverse CDF of the two-sided exponential mixture."""
    n = u.size
    p = model.p_up
    out = np.empty(n)
    up = u < p
    if p > 0:
        out[up] = -np.log1p(-u[up] / p) / model.eta_up
    if p < 1:
        w = (u[~up] - p) / (1.0 - p)
        out[~up] = np.log1p(-w) / model.eta_down
    return out


def _levy_increment(rng, model: LevyModel, dt: float, n: int, flip: bool) -> np.ndarray:
    """Pure-jump increments over dt for n paths (second half mirrored when ``flip``)."""
    half = n // 2 if flip else n
    if isinstance(model, Zero):
        return np.zeros(n)
    if isinstance(model, VarianceGamma):
        g = rng.gamma(shape=dt / model.kappa, scale=model.kappa, size=half)
        z = rng.standard_normal(half)
        inc = model.theta * g + model.sigma * np.sqrt(g) * z
        if flip:
            inc = np.concatenate([inc, model.theta * g - model.sigma * np.sqrt(g) * z])
        return inc
    counts = rng.poisson(model.intensity * dt, size=half)
    if isinstance(model, Merton):
        z = rng.standard_normal(half)
        inc = model.mean * counts + model.std * np.sqrt(counts) * z
        if flip:
            inc = np.concatenate([inc, model.mean * counts - model.std * np.sqrt(counts) * z])
        return inc
    if isinstance(model, Kou):
        u = rng.random(int(counts.sum()))
        owner = np.repeat(np.arange(half), counts)
        inc = np.bincount(owner, weights=_kou_jumps(u, model), minlength=half)
        if flip:
            inc = np.concatenate([inc, np.bincount(owner, weights=_kou_jumps(1.0 - u, model), minlength=half)])
        return inc
    raise TypeError(f"unsupported model {type(model).__name__}")


def _block(model, sigma, r, T, S0, cfg: McConfig, drift: float, block: int, n: int) -> np.ndarray:
    rng = _rng(cfg.seed, block)
    dt = T / cfg.steps
    X = np.zeros(n)
    flip = cfg.antithetic
    for _ in range(cfg.steps):
        if flip:
            w = rng.standard_normal(n // 2)
            w = np.concatenate([w, -w])
        else:
            w = rng.standard_normal(n)
        X += drift * dt + sigma * math.sqrt(dt) * w + _levy_increment(rng, model, dt, n, flip)
    return S0 * np.exp(r * T + X)


def _blocks(paths: int):
    n_full, rest = divmod(paths, BLOCK)
    sizes = [BLOCK] * n_full + ([rest] if rest else [])
    return list(enumerate(sizes))


def simulate_terminal(model: LevyModel | None, sigma: float, r: float, T: float, S0: float, cfg: McConfig) -> np.ndarray:
    """Samples of S_T = S0 exp(rT + X_T) with E[exp(X_T)] = 1.

    With antithetic sampling, each block stores its base draws first and the
    mirrored draws second.
    """
    model = Zero() if model is None else model
    # the simulated jump part has no compensation, so remove the truncated small-jump mean
    drift = martingale_drift(model, sigma) - small_jump_mean(model)
    blocks = _blocks(cfg.paths)
    if cfg.antithetic and any(n % 2 for _, n in blocks):
        raise ValueError("antithetic sampling needs even block sizes")
    job = lambda bn: _block(model, sigma, r, T, S0, cfg, drift, bn[0], bn[1])
    if cfg.threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(cfg.threads) as pool:
            parts = list(pool.map(job, blocks))
    else:
        parts = [job(b) for b in blocks]
    return np.concatenate(parts)


def price_put_mc(model: LevyModel | None, sigma: float, r: float, T: float, S0: float, K: float, cfg: McConfig) -> tuple[float, float]:
    """Discounted mean of (K - S_T)+ and its standard error."""
    ST = simulate_terminal(model, sigma, r, T, S0, cfg)
    pay = math.exp(-r * T) * np.maximum(K - ST, 0.0)
    if cfg.antithetic:
        # pair each base draw with its mirror inside the block
        pairs = []
        start = 0
        for _, n in _blocks(cfg.paths):
            h = n // 2
            pairs.append(0.5 * (pay[start : start + h] + pay[start + h : start + n]))
            start += n
        pay = np.concatenate(pairs)
    price = float(pay.mean())
    se = float(pay.std(ddof=1) / math.sqrt(pay.size)) if pay.size > 1 else float("nan")
    return price, se


def write_mc_csv(path_or_file, result: McResult) -> None:
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["price", "se", "paths", "seed"])
        w.writerow([f"{result.price:.9g}", f"{result.se:.9g}", result.paths, result.seed])
    finally:
        if own:
            fh.close()
