"""INI run configuration: loading, overrides, validation and object construction."""

from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass
from importlib import resources

from .errors import ConfigError
from .feedback import MarketParams
from .hedging import HEDGE_MODES
from .levy import Kou, LevyModel, Merton, VarianceGamma, Zero, envelope_params
from .montecarlo import McConfig
from .solver import SchemeOptions, SolverGrid

__all__ = ["RunConfig", "load_config", "default_text", "MODEL_KINDS"]

MODEL_KINDS = ("zero", "merton", "kou", "variance_gamma")
_MODEL_FIELDS = {
    "zero": (),
    "merton": ("intensity", "mean", "std"),
    "kou": ("intensity", "p_up", "eta_up", "eta_down"),
    "variance_gamma": ("theta", "sigma", "kappa"),
}
_FORMATS = ("csv", "json")


def default_text() -> str:
    return resources.files(__package__).joinpath("default.ini").read_text()


def _parser() -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str  # keep K, T, N, B_l as written
    return cp


@dataclass
class RunConfig:
    parser: configparser.ConfigParser

    # -- raw access -------------------------------------------------------
    def get(self, section: str, key: str, fallback=None) -> str | None:
        val = self.parser.get(section, key, fallback=fallback)
        return None if val is None or val.strip() == "" else val.strip()

    def _float(self, section, key, problems, fallback=None):
        raw = self.get(section, key)
        if raw is None:
            if fallback is None:
                problems.append(f"[{section}] {key} is required")
            return fallback
        try:
            val = float(raw)
        except ValueError:
            problems.append(f"[{section}] {key} = {raw!r} is not a number")
            return fallback
        if not math.isfinite(val):
            problems.append(f"[{section}] {key} must be finite")
        return val

    def _optional_float(self, section, key, problems):
        if self.get(section, key) is None:
            return None
        return self._float(section, key, problems)

    def _int(self, section, key, problems, fallback=None):
        raw = self.get(section, key)
        if raw is None:
            if fallback is None:
                problems.append(f"[{section}] {key} is required")
            return fallback
        try:
            return int(raw)
        except ValueError:
            problems.append(f"[{section}] {key} = {raw!r} is not an integer")
            return fallback

    # -- builders ---------------------------------------------------------
    def market(self, **overrides) -> MarketParams:
        problems: list[str] = []
        vals = {k: self._float("market", k, problems) for k in ("sigma", "r", "rho", "K", "T")}
        vals["mu"] = self._float("market", "mu", problems, 0.0)
        vals["L"] = self._float("market", "L", problems, 1.0)
        vals.update(overrides)
        if problems:
            raise ConfigError(problems)
        try:
            return MarketParams(**vals)
        except ValueError as exc:
            raise ConfigError([f"[market] {p}" for p in str(exc).split("; ")]) from None

    def model(self) -> LevyModel:
        problems: list[str] = []
        kind = (self.get("model", "kind") or "zero").lower()
        if kind not in MODEL_KINDS:
            raise ConfigError([f"[model] kind = {kind!r}; expected one of {MODEL_KINDS}"])
        vals = {k: self._float("model", k, problems) for k in _MODEL_FIELDS[kind]}
        if problems:
            raise ConfigError(problems)
        cls = {"zero": Zero, "merton": Merton, "kou": Kou, "variance_gamma": VarianceGamma}[kind]
        try:
            return cls(**vals)
        except ValueError as exc:
            raise ConfigError([f"[model] {exc}"]) from None

    def options(self, **overrides) -> SchemeOptions:
        keys = ("scheme", "h_mode", "shift", "convection", "payoff")
        vals = {k: self.get("mode", k) for k in keys if self.get("mode", k) is not None}
        problems: list[str] = []
        lo, hi = self._optional_float("grid", "B_l", problems), self._optional_float("grid", "B_r", problems)
        if (lo is None) != (hi is None):
            problems.append("[grid] B_l and B_r must be given together")
        elif lo is not None:
            if not lo < 0 < hi:
                problems.append(f"[grid] truncation needs B_l < 0 < B_r (got {lo}, {hi})")
            vals["truncation"] = (lo, hi)
        vals.update(overrides)
        if problems:
            raise ConfigError(problems)
        try:
            return SchemeOptions(**vals)
        except ValueError as exc:
            raise ConfigError([f"[mode] {exc}"]) from None

    def grid(self, T: float | None = None) -> SolverGrid:
        problems: list[str] = []
        dx = self._float("grid", "dx", problems, 0.01)
        dtau = self._float("grid", "dtau", problems, 0.005)
        N = self._int("grid", "N", problems, 400)
        T = self._float("market", "T", problems) if T is None else T
        if problems:
            raise ConfigError(problems)
        try:
            return SolverGrid.for_maturity(T, dx, dtau, N)
        except ValueError as exc:
            raise ConfigError([f"[grid] {exc}"]) from None

    def strategy_mode(self) -> str:
        mode = self.get("mode", "strategy") or "delta"
        if mode not in HEDGE_MODES:
            raise ConfigError([f"[mode] strategy = {mode!r}; expected one of {HEDGE_MODES}"])
        return mode

    def mc(self, seed: int | None = None, threads: int = 1) -> McConfig:
        problems: list[str] = []
        paths = self._int("mc", "paths", problems, 1_000_000)
        steps = self._int("mc", "steps", problems, 1)
        seed = self._int("mc", "seed", problems, 20240601) if seed is None else seed
        try:
            anti = self.parser.getboolean("mc", "antithetic", fallback=False)
        except ValueError:
            problems.append("[mc] antithetic must be a boolean")
            anti = False
        if problems:
            raise ConfigError(problems)
        try:
            return McConfig(paths=paths, steps=steps, seed=seed, antithetic=anti, threads=threads)
        except ValueError as exc:
            raise ConfigError([f"[mc] {exc}"]) from None

    def output(self) -> tuple[str, str]:
        fmt = (self.get("output", "format") or "csv").lower()
        if fmt not in _FORMATS:
            raise ConfigError([f"[output] format = {fmt!r}; expected one of {_FORMATS}"])
        return self.get("output", "path") or "-", fmt

    # -- validation -------------------------------------------------------
    def problems(self) -> list[str]:
        """Every violated constraint, collected across sections."""
        out: list[str] = []
        built = {}
        for name, build in (
            ("market", self.market),
            ("model", self.model),
            ("options", self.options),
            ("grid", self.grid),
            ("strategy", self.strategy_mode),
            ("mc", self.mc),
            ("output", self.output),
        ):
            try:
                built[name] = build()
            except ConfigError as exc:
                out.extend(exc.problems)
        model, opts, mkt = built.get("model"), built.get("options"), built.get("market")
        if model is not None and opts is not None:
            if opts.scheme == "finite" and not model.finite_activity:
                out.append(f"[mode] scheme = finite does not match the infinite-activity {type(model).__name__} measure")
            if opts.scheme == "infinite" and model.finite_activity and not isinstance(model, Zero):
                out.append(f"[mode] scheme = infinite does not match the finite-activity {type(model).__name__} measure")
        if isinstance(model, VarianceGamma):
            env = envelope_params(model)
            if not env.D_minus + 1 < 0:
                out.append("[model] exponential moment diverges: need B - A > 1")
        if mkt is not None and built.get("strategy") == "optimal-first-order" and mkt.rho * mkt.L > 0.3:
            out.append(f"[market] first-order strategy needs rho * L <= 0.3 (got {mkt.rho * mkt.L:.4g})")
        return out

    def validate(self) -> "RunConfig":
        problems = self.problems()
        if problems:
            raise ConfigError(problems)
        return self

    def set(self, dotted: str, value: str) -> None:
        if "." not in dotted:
            raise ConfigError([f"override {dotted!r} must look like section.key"])
        section, key = dotted.split(".", 1)
        if not self.parser.has_section(section):
            self.parser.add_section(section)
        self.parser.set(section, key, value)

    def dumps(self) -> str:
        buf = io.StringIO()
        self.parser.write(buf)
        return buf.getvalue()


def load_config(path=None, overrides=()) -> RunConfig:
    """Defaults, then the file at ``path`` (if any), then ``section.key=value`` overrides."""
    cp = _parser()
    cp.read_string(default_text())
    if path is not None:
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ConfigError([f"cannot read config {path}: {exc.strerror}"]) from None
        except configparser.Error as exc:
            raise ConfigError([f"malformed config {path}: {exc}"]) from None
    cfg = RunConfig(cp)
    for item in overrides:
        if "=" not in item:
            raise ConfigError([f"override {item!r} must look like section.key=value"])
        key, value = item.split("=", 1)
        cfg.set(key.strip(), value.strip())
    return cfg
