"""Plain-text experiment configuration: ``key = value`` lines, ``#`` comments."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

COMMANDS = ("simulate", "verify", "bounds", "report")
SUITES = ("trace", "swap", "moments", "tensor-lemmas", "drift", "martingale", "potential", "all")
FAMILIES = ("gaussian", "uniform-box", "uniform-ball", "product-exponential")


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "config"):
        self.line = line
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


def _floats(text: str) -> list[float]:
    text = text.strip()
    if text.startswith("logspace:"):
        # logspace:start:stop:count over powers of ten
        parts = text.split(":")
        if len(parts) != 4:
            raise ValueError("logspace needs start:stop:count")
        a, b, k = float(parts[1]), float(parts[2]), int(parts[3])
        if k < 1:
            raise ValueError("logspace count must be >= 1")
        return [10.0 ** (a + (b - a) * i / (k - 1)) if k > 1 else 10.0**a for i in range(k)]
    if not text:
        return []
    return [float(v) for v in text.split(",")]


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass
class ExperimentConfig:
    command: str | None = None
    family: str = "gaussian"
    d: int = 4
    # family parameters; vectors are comma-separated
    mean: list | None = None
    cov: str = "identity"  # identity | random
    cond: float = 10.0
    low: list | None = None
    high: list | None = None
    radius: float = 1.0
    center: list | None = None
    rates: list | None = None
    loc: list | None = None
    n_atoms: int = 2000
    sampling: str = "iid"
    q: int = 3
    T: float = 1.0
    dt: float | None = None
    record_times: list = field(default_factory=list)
    diagnostics: bool = True
    master_seed: int = 0
    paths: int = 10
    slack: float = 1.1
    suite: str = "all"
    cases: int = 200
    d_max: int = 8
    alpha: float = 4.0
    beta: float = 0.5
    c: float = 1.0
    c_lv: float = 1.0
    d_list: list = field(default_factory=list)
    directions: int = 16
    k_neighbors: int = 10
    mass_target: float = 0.2
    atom_sample: int = 20
    lines: dict = field(default_factory=dict, repr=False)
    source: str = field(default="config", repr=False)

    def echo(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("lines", "source")}

    def line_of(self, key: str) -> int | None:
        return self.lines.get(key)

    def error(self, key: str, message: str) -> ConfigError:
        return ConfigError(f"{key}: {message}", self.line_of(key), self.source)


_PARSERS = {
    "command": str, "family": str, "d": int, "mean": _floats, "cov": str, "cond": float,
    "low": _floats, "high": _floats, "radius": float, "center": _floats, "rates": _floats,
    "loc": _floats, "n_atoms": int, "sampling": str, "q": int, "T": float, "dt": float,
    "record_times": _floats, "diagnostics": _bool, "master_seed": int, "paths": int,
    "slack": float, "suite": str, "cases": int, "d_max": int, "alpha": float, "beta": float,
    "c": float, "c_lv": float, "d_list": _floats, "directions": int, "k_neighbors": int,
    "mass_target": float, "atom_sample": int,
}


def parse_config(text: str, source: str = "config") -> ExperimentConfig:
    cfg = ExperimentConfig(source=source)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno, source)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"unknown key {key!r}", lineno, source)
        if key in cfg.lines:
            raise ConfigError(f"duplicate key {key!r} (first on line {cfg.lines[key]})", lineno, source)
        try:
            parsed = _PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{key}: bad value {value!r} ({exc})", lineno, source) from None
        if key == "d_list":
            parsed = [int(round(v)) if abs(v - round(v)) < 1e-6 * max(1.0, abs(v)) else v for v in parsed]
        setattr(cfg, key, parsed)
        cfg.lines[key] = lineno
    validate(cfg)
    return cfg


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", None, str(p)) from None
    return parse_config(text, str(p))


def validate(cfg: ExperimentConfig) -> None:
    def need(ok: bool, key: str, message: str):
        if not ok:
            raise cfg.error(key, message)

    need(cfg.command is None or cfg.command in COMMANDS, "command", f"must be one of {COMMANDS}")
    need(cfg.family in FAMILIES, "family", f"must be one of {FAMILIES}")
    need(cfg.d >= 1, "d", "must be >= 1")
    need(cfg.cov in ("identity", "random"), "cov", "must be identity or random")
    need(cfg.cond >= 1, "cond", "must be >= 1")
    need(cfg.radius > 0, "radius", "must be positive")
    need(cfg.n_atoms >= 2, "n_atoms", "must be >= 2")
    need(cfg.sampling in ("iid", "sobol"), "sampling", "must be iid or sobol")
    need(cfg.q >= 2, "q", "must be an integer >= 2")
    need(math.isfinite(cfg.T) and cfg.T >= 0, "T", "must be finite and >= 0")
    if cfg.dt is not None:
        need(cfg.dt > 0, "dt", "must be positive")
        need(cfg.T == 0 or cfg.dt <= cfg.T, "dt", f"dt = {cfg.dt} exceeds T = {cfg.T}")
    need(all(0 <= t <= cfg.T for t in cfg.record_times), "record_times", "must lie in [0, T]")
    need(cfg.master_seed >= 0, "master_seed", "must be >= 0")
    need(cfg.paths >= 1, "paths", "must be >= 1")
    need(cfg.slack >= 1, "slack", "must be >= 1")
    need(cfg.suite in SUITES, "suite", f"unknown suite {cfg.suite!r}; choose from {SUITES}")
    need(cfg.cases >= 1, "cases", "must be >= 1")
    need(1 <= cfg.d_max <= 64, "d_max", "must lie in [1, 64]")
    need(cfg.alpha >= 1, "alpha", "must be >= 1")
    need(0 < cfg.beta <= 0.5, "beta", "must lie in (0, 1/2]")
    need(cfg.c > 0, "c", "must be positive")
    need(cfg.c_lv > 0, "c_lv", "must be positive")
    need(all(v >= 1 for v in cfg.d_list), "d_list", "dimensions must be >= 1")
    need(cfg.directions >= 1, "directions", "must be >= 1")
    need(cfg.k_neighbors >= 3, "k_neighbors", "must be >= 3")
    need(0 < cfg.mass_target < 1, "mass_target", "must lie in (0, 1)")
    need(cfg.atom_sample >= 0, "atom_sample", "must be >= 0")
    for key in ("mean", "center", "low", "high", "rates", "loc"):
        val = getattr(cfg, key)
        need(val is None or len(val) in (1, cfg.d), key, f"needs 1 or d = {cfg.d} entries")
    if cfg.rates is not None:
        need(all(r > 0 for r in cfg.rates), "rates", "must be positive")
    if cfg.low is not None and cfg.high is not None:
        lo = cfg.low * cfg.d if len(cfg.low) == 1 else cfg.low
        hi = cfg.high * cfg.d if len(cfg.high) == 1 else cfg.high
        need(all(a < b for a, b in zip(lo, hi)), "high", "must exceed low in every coordinate")
