"""Flat ``key = value`` run configuration with dotted namespaces.

Lines are ``key = value``; ``#`` starts a comment; blank lines are ignored.
Unknown keys, duplicate keys and out-of-range values are rejected with the
offending line number.  Lists are comma separated.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from .nonlin import (DiagonalLinear, NonlinearityModel, NemytskiiSine1D,
                     ScalarFunction, Zero, build_counterexample, build_gap_blocker,
                     constant_function, cubic_function, linear_function, read_table,
                     sine_function, zero_function)
from .spectrum import Custom, Dirichlet1D, EigenvalueSequence, Sphere, Torus, eigenvalues


class ConfigError(ValueError):
    """Malformed or invalid configuration (exit code 2)."""


# ---------------------------------------------------------------------------
# value parsers

def _float(lo: float = -math.inf, hi: float = math.inf, lo_open: bool = False):
    def parse(text: str) -> float:
        x = float(text)
        if not math.isfinite(x):
            raise ValueError("must be finite")
        if x < lo or (lo_open and x == lo) or x > hi:
            bound = f"> {lo}" if lo_open else f">= {lo}"
            raise ValueError(f"must be {bound}" + (f" and <= {hi}" if hi < math.inf else ""))
        return x
    return parse


def _int(lo: int = 0):
    def parse(text: str) -> int:
        x = int(text)
        if x < lo:
            raise ValueError(f"must be >= {lo}")
        return x
    return parse


def _choice(*options: str):
    def parse(text: str) -> str:
        t = text.strip().lower()
        if t not in options:
            raise ValueError(f"must be one of {', '.join(options)}")
        return t
    return parse


def _float_list(positive: bool = False):
    def parse(text: str) -> list:
        vals = [float(x) for x in text.split(",") if x.strip()]
        if not vals:
            raise ValueError("empty list")
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("entries must be finite")
        if positive and any(v <= 0 for v in vals):
            raise ValueError("entries must be positive")
        return vals
    return parse


def _N(text: str):
    t = text.strip().lower()
    if t == "auto":
        return "auto"
    n = int(t)
    if n < 1:
        raise ValueError("must be >= 1 or 'auto'")
    return n


def _path(text: str) -> str:
    return text.strip()


_POS = _float(0.0, lo_open=True)
_NONNEG = _float(0.0)

SCHEMA: dict[str, tuple[Callable[[str], Any], Any]] = {
    "operator.kind": (_choice("dirichlet", "torus", "sphere", "custom"), "dirichlet"),
    "operator.modes": (_int(2), 16),
    "operator.length": (_POS, math.pi),
    "operator.dimension": (_int(1), None),
    "operator.scale": (_POS, 1.0),
    "operator.values": (_float_list(positive=True), None),
    "eps": (_NONNEG, 0.05),
    "L": (_POS, 1.0),
    "N": (_N, "auto"),
    "nonlinearity.kind": (_choice("zero", "diagonal_linear", "gap_blocker", "counterexample",
                                  "sine", "table", "cubic", "constant", "linear"), "sine"),
    "nonlinearity.c": (_float(), 0.5),
    "nonlinearity.amplitude": (_float(), 1.0),
    "nonlinearity.frequency": (_float(), 1.0),
    "nonlinearity.slope": (_float(), 0.5),
    "nonlinearity.value": (_float(), 0.0),
    "nonlinearity.a": (_float(), 1.0),
    "nonlinearity.b": (_float(), 1.0),
    "nonlinearity.table": (_path, None),
    "nonlinearity.delta_rot": (_NONNEG, 0.0),
    "nonlinearity.L": (_POS, 3.0),
    "nonlinearity.delta": (_POS, 0.5),
    "nonlinearity.R": (_POS, None),
    "nonlinearity.widths": (_float(0.0, 0.5, lo_open=True), 0.05),
    "perron.h": (_POS, 0.01),
    "perron.T": (_POS, None),
    "perron.fp_tol": (_POS, 1e-10),
    "perron.max_iter": (_int(1), 200),
    "evolve.h": (_POS, 0.01),
    "evolve.T": (_POS, 5.0),
    "evolve.method": (_choice("midpoint", "etdrk4"), "midpoint"),
    "chart.axis_points": (_int(2), 5),
    "chart.random": (_int(0), 4),
    "chart.radius": (_POS, 1.0),
    "invariance.t_check": (_POS, 1.0),
    "track.count": (_int(1), 5),
    "track.scale": (_POS, 1.0),
    "compare.eps": (_float_list(positive=True), [1e-2, 3e-3, 1e-3, 3e-4, 1e-4]),
    "compare.p": (_float_list(), [1.0]),
    "wave.R": (_POS, 5.0),
    "wave.g": (_float_list(), [1.0]),
    "wave.g_table": (_path, None),
    "wave.cut_factor": (_POS, 2.0),
    "wave.width_fraction": (_POS, 0.1),
    "wave.newton_tol": (_POS, 1e-12),
    "wave.track_count": (_int(0), 3),
    "output.dir": (_path, None),
    "seed": (_int(0), 0),
    "threads": (_int(1), 1),
}

_PATH_KEYS = ("nonlinearity.table", "wave.g_table")


@dataclass
class RunConfig:
    values: dict
    source: Optional[str] = None
    explicit: set = field(default_factory=set)

    def __getitem__(self, key: str):
        return self.values[key]

    def get(self, key: str, default=None):
        v = self.values.get(key)
        return default if v is None else v

    def with_overrides(self, **kw) -> "RunConfig":
        vals = dict(self.values)
        for k, v in kw.items():
            if v is not None:
                vals[k] = v
        return RunConfig(vals, self.source, self.explicit | {k for k, v in kw.items() if v is not None})

    def canonical(self) -> dict:
        out = {}
        for k in sorted(self.values):
            v = self.values[k]
            out[k] = v
        return out

    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def parse_config_text(text: str, source: str = "<string>", base_dir: Optional[Path] = None) -> RunConfig:
    values = {k: default for k, (_, default) in SCHEMA.items()}
    seen: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} (first on line {seen[key]})")
        seen[key] = lineno
        try:
            values[key] = SCHEMA[key][0](val)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
        if key in _PATH_KEYS:
            p = Path(values[key])
            if not p.is_absolute() and base_dir is not None:
                p = base_dir / p
            if not p.exists():
                raise ConfigError(f"{source}:{lineno}: {key} file {str(p)!r} does not exist")
            values[key] = str(p)
    _cross_check(values, source)
    return RunConfig(values, source, set(seen))


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {str(path)!r}: {exc.strerror}") from None
    return parse_config_text(text, str(path), path.parent)


def default_config() -> RunConfig:
    return parse_config_text("", "<defaults>")


def _cross_check(values: dict, source: str) -> None:
    if values["operator.kind"] == "custom" and not values["operator.values"]:
        raise ConfigError(f"{source}: operator.kind = custom needs operator.values")
    if values["nonlinearity.kind"] == "table" and not values["nonlinearity.table"]:
        raise ConfigError(f"{source}: nonlinearity.kind = table needs nonlinearity.table")
    if isinstance(values["N"], int) and values["N"] >= values["operator.modes"]:
        raise ConfigError(f"{source}: N = {values['N']} must be below operator.modes")


# ---------------------------------------------------------------------------
# builders

def build_sequence(cfg: RunConfig) -> EigenvalueSequence:
    kind = cfg["operator.kind"]
    M = cfg["operator.modes"]
    if kind == "dirichlet":
        model = Dirichlet1D(cfg["operator.length"])
    elif kind == "torus":
        model = Torus(cfg.get("operator.dimension", 2), cfg["operator.scale"])
    elif kind == "sphere":
        model = Sphere(cfg.get("operator.dimension", 3))
    else:
        vals = cfg["operator.values"]
        if len(vals) < M:
            raise ConfigError(f"operator.values has {len(vals)} entries, operator.modes = {M}")
        model = Custom(tuple(vals[:M]))
    return eigenvalues(model, M)


def build_scalar(cfg: RunConfig) -> ScalarFunction:
    kind = cfg["nonlinearity.kind"]
    if kind == "sine":
        return sine_function(cfg["nonlinearity.amplitude"], cfg["nonlinearity.frequency"])
    if kind == "table":
        return read_table(cfg["nonlinearity.table"])
    if kind == "cubic":
        return cubic_function(cfg["nonlinearity.a"], cfg["nonlinearity.b"])
    if kind == "constant":
        return constant_function(cfg["nonlinearity.value"])
    if kind == "linear":
        return linear_function(cfg["nonlinearity.slope"])
    if kind == "zero":
        return zero_function()
    raise ConfigError(f"nonlinearity.kind = {kind} is not a scalar function")


def build_model(cfg: RunConfig, seq: EigenvalueSequence, N: Optional[int] = None) -> NonlinearityModel:
    kind = cfg["nonlinearity.kind"]
    M = seq.count
    if kind == "zero":
        return Zero(M)
    if kind == "diagonal_linear":
        return DiagonalLinear(cfg["nonlinearity.c"], M)
    if kind == "gap_blocker":
        return build_gap_blocker(seq, N or 1, cfg["nonlinearity.delta_rot"])
    if kind == "counterexample":
        return build_counterexample(seq, cfg["eps"], cfg["nonlinearity.L"],
                                    cfg["nonlinearity.delta"], cfg.get("nonlinearity.R"),
                                    cfg["nonlinearity.widths"], seed=cfg["seed"])
    f = build_scalar(cfg)
    if f.sup_df == 0.0 and float(np.asarray(f.f(0.0))) == 0.0:
        return Zero(M)
    length = seq.generator.length if isinstance(seq.generator, Dirichlet1D) else cfg["operator.length"]
    return NemytskiiSine1D(f, M, length)


def wave_forcing(cfg: RunConfig, modes: int, length: float) -> np.ndarray:
    """Forcing coefficients: from ``wave.g_table`` (x, g(x) samples) or ``wave.g``."""
    path = cfg.get("wave.g_table")
    if path:
        table = read_table(path)
        T = NemytskiiSine1D(sine_function(), modes, length)
        return T.from_grid(table.f(T.x))
    g = np.zeros(modes)
    vals = cfg["wave.g"]
    g[:min(modes, len(vals))] = vals[:modes]
    return g
