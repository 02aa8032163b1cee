"""Black-Scholes put prices and implied volatilities."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import bisect
from scipy.special import ndtr

from .errors import NoSolutionError

__all__ = ["bs_put", "implied_vol", "SmileCurve", "smile", "VOL_LO", "VOL_HI"]

VOL_LO, VOL_HI = 1e-4, 5.0


def bs_put(S, K, r: float, T: float, sigma: float):
    S = np.asarray(S, dtype=float)
    K = np.asarray(K, dtype=float)
    sd = sigma * math.sqrt(T)
    with np.errstate(divide="ignore"):
        d1 = (np.log(S / K) + (r + 0.5 * sigma * sigma) * T) / sd
    d2 = d1 - sd
    out = K * math.exp(-r * T) * ndtr(-d2) - S * ndtr(-d1)
    out = np.maximum(out, 0.0)
    return float(out) if np.ndim(out) == 0 else out


def implied_vol(price: float, S: float, K: float, r: float, T: float) -> float:
    """Volatility reproducing ``price`` to 1e-8 K, by bisection on [1e-4, 5]."""
    disc_K = K * math.exp(-r * T)
    lo_bound = max(disc_K - S, 0.0)
    if not (lo_bound < price < disc_K):
        raise NoSolutionError(f"price {price:.6g} outside the no-arbitrage band ({lo_bound:.6g}, {disc_K:.6g})")
    f = lambda s: bs_put(S, K, r, T, s) - price
    f_lo, f_hi = f(VOL_LO), f(VOL_HI)
    if f_lo > 1e-8 * K or f_hi < -1e-8 * K:
        raise NoSolutionError(f"price {price:.6g} not attained for volatility in [{VOL_LO}, {VOL_HI}]")
    if abs(f_lo) <= 1e-8 * K and f_lo >= 0:
        return VOL_LO
    return float(bisect(f, VOL_LO, VOL_HI, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=200))


@dataclass(frozen=True)
class SmileCurve:
    strikes: np.ndarray
    vols: np.ndarray
    source: str

    def __post_init__(self):
        k = np.asarray(self.strikes, dtype=float)
        v = np.asarray(self.vols, dtype=float)
        if k.shape != v.shape:
            raise ValueError("strikes and vols differ in length")
        if k.size > 1 and not np.all(np.diff(k) > 0):
            raise ValueError("strikes must be strictly increasing")
        ok = np.isnan(v) | ((v > 0) & (v < 5))
        if not np.all(ok):
            raise ValueError("implied vols must lie in (0, 5)")
        object.__setattr__(self, "strikes", k)
        object.__setattr__(self, "vols", v)

    def rows(self):
        return [(float(k), float(v), self.source) for k, v in zip(self.strikes, self.vols)]

    def to_csv(self, path_or_file, header: bool = True) -> None:
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh, lineterminator="\n")
            if header:
                w.writerow(["K", "iv", "source"])
            for k, v, s in self.rows():
                w.writerow([f"{k:.9g}", f"{v:.9g}", s])
        finally:
            if own:
                fh.close()


def smile(prices, strikes, S: float, r: float, T: float, source: str = "", strict: bool = True):
    """Implied vols for put prices quoted over strikes.

    With ``strict=False`` a failed inversion yields NaN and its message is
    returned alongside the curve as (curve, failures).
    """
    prices = np.asarray(prices, dtype=float)
    strikes = np.asarray(strikes, dtype=float)
    vols = np.empty_like(prices)
    failures = []
    for i, (p, k) in enumerate(zip(prices, strikes)):
        try:
            vols[i] = implied_vol(float(p), S, float(k), r, T)
        except NoSolutionError as exc:
            if strict:
                raise
            vols[i] = np.nan
            failures.append((float(k), str(exc)))
    curve = SmileCurve(strikes, vols, source)
    return curve if strict else (curve, failures)
