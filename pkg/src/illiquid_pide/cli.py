"""
Command-line entry point.

    illiquid-pide price    [--spots S ...] [--layout single|table1]
    illiquid-pide table2
    illiquid-pide smile    [--strikes K ...]
    illiquid-pide hedge    [--spots S ...] [--hedge-mode MODE]
    illiquid-pide mc       [--spot S]
    illiquid-pide validate [--tables]

Exit codes: 0 success, 2 rejected configuration, 3 numerical failure,
4 failed validation.
"""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from . import benchmarks
from .config import RunConfig, load_config
from .errors import ConfigError, PideError
from .hedging import HEDGE_MODES, hedge_report
from .levy import Zero
from .montecarlo import McResult, price_put_mc
from .implied_vol import smile
from .solver import march, price_at
from .validation import SMILE_STRIKES, run_suite, smile_prices

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VALIDATION = 0, 2, 3, 4


def _threads(arg: int | None) -> int:
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("ILLIQUID_PIDE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError([f"ILLIQUID_PIDE_THREADS = {env!r} is not an integer"]) from None
    return 1


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    return str(v)


def _emit(out, fmt: str, columns, rows) -> None:
    rows = list(rows)
    if fmt == "json":
        json.dump([{c: (float(v) if isinstance(v, np.floating) else v) for c, v in zip(columns, r)} for r in rows], out, indent=1)
        out.write("\n")
        return
    w = csv.writer(out, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(v) for v in r])


@contextlib.contextmanager
def _sink(path: str):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _parallel(fn, items, threads):
    if threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def _march(cfg: RunConfig, rho=None, jumps=True):
    market = cfg.market() if rho is None else cfg.market(rho=rho)
    model = cfg.model() if jumps else Zero()
    opts = cfg.options()
    if not jumps and opts.scheme == "infinite":
        opts = replace(opts, scheme="auto")
    return march(cfg.grid(), market, model, opts)


# -- commands ---------------------------------------------------------------


def cmd_price(cfg: RunConfig, spots, layout: str, threads: int):
    spots = np.asarray(benchmarks.SPOTS if spots is None else spots, dtype=float)
    if layout == "single":
        if spots.size == 0:
            return ["S", "V"], []
        surf = _march(cfg)
        return ["S", "V"], [(s, v) for s, v in zip(spots, np.atleast_1d(price_at(surf, spots)))]
    rho = cfg.market().rho
    cases = [(0.0, False), (rho, False), (0.0, True), (rho, True)]
    columns = ["S", "bs", "fs", "bs_pide", "fs_pide"]
    if spots.size == 0:
        return columns, []
    surfaces = _parallel(lambda c: _march(cfg, rho=c[0], jumps=c[1]), cases, threads)
    cols = [np.atleast_1d(price_at(s, spots)) for s in surfaces]
    return columns, [(s, *(c[i] for c in cols)) for i, s in enumerate(spots)]


def cmd_table2(cfg: RunConfig, spots, threads: int):
    spots = np.asarray(benchmarks.SPOTS if spots is None else spots, dtype=float)
    cases = [(rho, jumps) for rho in benchmarks.RHOS for jumps in (False, True)]
    surfaces = _parallel(lambda c: _march(cfg, rho=c[0], jumps=c[1]), cases, threads)
    columns = ["S"] + [f"{'fs_pide' if j else 'fs'}_rho{rho:g}" for rho, j in cases]
    cols = [np.atleast_1d(price_at(s, spots)) for s in surfaces]
    return columns, [(s, *(c[i] for c in cols)) for i, s in enumerate(spots)]


def cmd_smile(cfg: RunConfig, strikes, threads: int, spot: float | None = None):
    strikes = np.asarray(SMILE_STRIKES if strikes is None else sorted(strikes), dtype=float)
    market = cfg.market()
    S0 = market.K if spot is None else spot
    cases = [("fs", market.rho, False), ("classical", 0.0, True), ("fs-pide", market.rho, True)]
    surfaces = _parallel(lambda c: _march(cfg, rho=c[1], jumps=c[2]), cases, threads)
    rows, failures = [], []
    for (tag, _, _), surf in zip(cases, surfaces):
        prices = smile_prices(surf, strikes, S0)
        curve, bad = smile(prices, strikes, S0, market.r, market.T, tag, strict=False)
        rows.extend(curve.rows())
        failures.extend((tag, k, msg) for k, msg in bad)
    for tag, k, msg in failures:
        print(f"warning: {tag} K={k:g}: {msg}", file=sys.stderr)
    return ["K", "iv", "source"], rows


def cmd_hedge(cfg: RunConfig, spots, mode: str | None):
    spots = np.asarray([cfg.market().K] if spots is None else spots, dtype=float)
    mode = mode or cfg.strategy_mode()
    market = cfg.market()
    if mode == "optimal-first-order" and market.rho * market.L > 0.3:
        raise ConfigError([f"[market] first-order strategy needs rho * L <= 0.3 (got {market.rho * market.L:.4g})"])
    surf = _march(cfg)
    rep = hedge_report(surf, spots, mode)
    cols = ["S", "mode", "phi", "var_rate_diff", "var_rate_jump"]
    return cols, [tuple(r[c] for c in cols) for r in rep.rows()]


def cmd_mc(cfg: RunConfig, seed, threads: int, spot: float | None):
    market = cfg.market()
    mc = cfg.mc(seed=seed, threads=threads)
    S0 = market.K if spot is None else spot
    price, se = price_put_mc(cfg.model(), market.sigma, market.r, market.T, S0, market.K, mc)
    res = McResult(price, se, mc.paths, mc.seed)
    return ["price", "se", "paths", "seed"], [(res.price, res.se, res.paths, res.seed)]


def cmd_validate(cfg: RunConfig, seed, threads: int, tables: bool, out) -> bool:
    records = run_suite(cfg.market(), cfg.model(), cfg.grid(), cfg.options(), cfg.mc(seed=seed, threads=threads),
                        threads=threads, tables=tables)
    for rec in records:
        out.write(json.dumps(rec) + "\n")
    return all(r["passed"] for r in records)


# -- argument parsing -------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI file layered over the built-in defaults")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override one config entry (repeatable)")
    common.add_argument("--out", metavar="PATH", help="output file (default: [output] path, '-' for stdout)")
    common.add_argument("--format", choices=("csv", "json"), help="output format")
    common.add_argument("--threads", type=int, help="worker threads (fallback: ILLIQUID_PIDE_THREADS)")
    common.add_argument("--seed", type=int, help="Monte Carlo seed (unsigned 64-bit)")
    common.add_argument("--print-config", action="store_true", help="print the resolved configuration and exit")

    p = argparse.ArgumentParser(prog="illiquid-pide", description="Put pricing under jumps and large-trader feedback.")
    sub = p.add_subparsers(dest="command", required=True)
    sp = sub.add_parser("price", parents=[common], help="price puts at given spots")
    sp.add_argument("--spots", type=float, nargs="*", help="spot prices (default: the benchmark spots)")
    sp.add_argument("--layout", choices=("single", "table1"), default="single",
                    help="one column for the configured model, or the four-column comparison")
    st = sub.add_parser("table2", parents=[common], help="feedback prices with and without jumps for rho = 0.1, 0.2, 0.3")
    st.add_argument("--spots", type=float, nargs="*")
    ss = sub.add_parser("smile", parents=[common], help="implied-vol smiles of the three models")
    ss.add_argument("--strikes", type=float, nargs="*")
    ss.add_argument("--spot", type=float)
    sh = sub.add_parser("hedge", parents=[common], help="hedge ratios and tracking-error variance rates")
    sh.add_argument("--spots", type=float, nargs="*")
    sh.add_argument("--hedge-mode", choices=HEDGE_MODES)
    sm = sub.add_parser("mc", parents=[common], help="Monte Carlo put price without feedback")
    sm.add_argument("--spot", type=float)
    sv = sub.add_parser("validate", parents=[common], help="run the self-check suite (JSON lines)")
    sv.add_argument("--tables", action="store_true", help="also compare with the published price tables")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides)
        if args.format:
            cfg.set("output.format", args.format)
        if args.out:
            cfg.set("output.path", args.out)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError([f"--seed {args.seed} is not an unsigned 64-bit integer"])
            cfg.set("mc.seed", str(args.seed))
        if args.print_config:
            sys.stdout.write(cfg.dumps())
            return EXIT_OK
        cfg.validate()
        threads = _threads(args.threads)
        path, fmt = cfg.output()
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "validate":
            with _sink(path) as out:
                ok = cmd_validate(cfg, args.seed, threads, args.tables, out)
            return EXIT_OK if ok else EXIT_VALIDATION
        if args.command == "price":
            columns, rows = cmd_price(cfg, args.spots, args.layout, threads)
        elif args.command == "table2":
            columns, rows = cmd_table2(cfg, args.spots, threads)
        elif args.command == "smile":
            columns, rows = cmd_smile(cfg, args.strikes, threads, args.spot)
        elif args.command == "hedge":
            columns, rows = cmd_hedge(cfg, args.spots, args.hedge_mode)
        else:
            columns, rows = cmd_mc(cfg, args.seed, threads, args.spot)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except PideError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    with _sink(path) as out:
        _emit(out, fmt, columns, rows)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
