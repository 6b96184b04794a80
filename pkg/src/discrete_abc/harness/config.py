"""Experiment configuration: a small INI dialect with one section per module.

    [experiment]
    name = qmr-abc
    seed = 1
    repeats = 20
    iterations = 10000
    stride = 100

    [problem]
    kind = qmr
    L = 10
    M = 20

    [sampler]
    mode = abc
    kernels = dde-mc, mut+xor, ind-samp
    population = 24
    epsilon = exp:2

List-valued keys (``kernels``, ``population``, ``p_flip``, ``epsilon``,
``metrics``) are comma separated; ``population``, ``p_flip`` and ``epsilon``
are grids whose Cartesian product is run for every kernel.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import io
from dataclasses import dataclass, field, fields
from typing import Any, Optional

from ..kernels import Kind, KernelSpec
from ..sampler import EpsilonSchedule

__all__ = [
    "BinnnConfig",
    "ConfigError",
    "ExperimentConfig",
    "NasConfig",
    "QmrConfig",
    "SamplerConfig",
    "load_config",
    "parse_config",
    "serialize_config",
]

METRICS = ("error", "acceptance", "posterior", "ensemble", "test_error")


class ConfigError(ValueError):
    """A configuration field is missing or malformed; ``path`` names the field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class QmrConfig:
    L: int = 10
    M: int = 20
    beta_a: float = 0.15
    beta_b: float = 0.15
    n_obs: int = 10
    prior_p: float = 0.5
    instance: str = ""  # path to a saved instance; empty means sample per repeat

    kind = "qmr"

    def check(self) -> None:
        _positive("problem.L", self.L)
        _positive("problem.M", self.M)
        _positive("problem.beta_a", self.beta_a)
        _positive("problem.beta_b", self.beta_b)
        _positive("problem.n_obs", self.n_obs)
        if not 0.0 < self.prior_p < 1.0:
            raise ConfigError("problem.prior_p", f"must lie in (0, 1), got {self.prior_p}")


@dataclass(frozen=True)
class BinnnConfig:
    input_dim: int = 16
    hidden: int = 4
    n_train: int = 400
    n_test: int = 400
    dataset: str = "synthetic"  # or "mnist"
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    digits: tuple = (0, 1)
    image_size: int = 14
    threshold: float = 127.5

    kind = "binnn"

    def check(self) -> None:
        _positive("problem.input_dim", self.input_dim)
        _positive("problem.hidden", self.hidden)
        if self.dataset not in ("synthetic", "mnist"):
            raise ConfigError("problem.dataset", f"expected synthetic or mnist, got {self.dataset!r}")
        if self.dataset == "synthetic":
            _positive("problem.n_train", self.n_train)
            if self.n_test < 0:
                raise ConfigError("problem.n_test", "must be non-negative")
        else:
            for name in ("train_images", "train_labels"):
                if not getattr(self, name):
                    raise ConfigError(f"problem.{name}", "required for the mnist dataset")
            if self.input_dim != self.image_size ** 2:
                raise ConfigError("problem.input_dim", f"must equal image_size**2 = {self.image_size ** 2}")
        if len(self.digits) != 2 or self.digits[0] == self.digits[1]:
            raise ConfigError("problem.digits", "need two distinct digits")


@dataclass(frozen=True)
class NasConfig:
    table: str = ""  # path to a table file; empty means synthesize one
    table_seed: int = 0
    floor: float = 0.05
    spread: float = 0.6
    length_scale: float = 4.0
    path_weight: float = 0.1
    noise: float = 0.004
    test_noise: float = 0.003

    kind = "nas"

    def check(self) -> None:
        if self.table_seed < 0:
            raise ConfigError("problem.table_seed", "must be non-negative")
        _positive("problem.length_scale", self.length_scale)


PROBLEMS = {"qmr": QmrConfig, "binnn": BinnnConfig, "nas": NasConfig}


@dataclass(frozen=True)
class SamplerConfig:
    mode: str = "abc"
    kernels: tuple = ("dde-mc",)
    population: tuple = (24,)
    p_flip: tuple = (0.01,)
    pi: float = 0.5
    theta: float = 0.5
    epsilon: tuple = ("exp:2",)

    def check(self) -> None:
        if self.mode not in ("abc", "likelihood"):
            raise ConfigError("sampler.mode", f"expected abc or likelihood, got {self.mode!r}")
        if not self.kernels:
            raise ConfigError("sampler.kernels", "at least one kernel is required")
        for n, k in enumerate(self.kernels):
            try:
                Kind(k)
            except ValueError:
                raise ConfigError(f"sampler.kernels[{n}]", f"unknown kernel {k!r}") from None
        if not self.population:
            raise ConfigError("sampler.population", "empty grid")
        for n, c in enumerate(self.population):
            _positive(f"sampler.population[{n}]", c)
        if not self.p_flip:
            raise ConfigError("sampler.p_flip", "empty grid")
        for n, p in enumerate(self.p_flip):
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"sampler.p_flip[{n}]", f"must lie in [0, 1], got {p}")
        for name in ("pi", "theta"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"sampler.{name}", "must lie in [0, 1]")
        if self.mode == "abc":
            if not self.epsilon:
                raise ConfigError("sampler.epsilon", "abc mode needs at least one schedule")
            for n, e in enumerate(self.epsilon):
                try:
                    EpsilonSchedule.parse(e)
                except ValueError as exc:
                    raise ConfigError(f"sampler.epsilon[{n}]", str(exc)) from None
        for n, k in enumerate(self.kernels):
            for c in self.population:
                try:
                    spec = KernelSpec(k, p_flip=self.p_flip[0], pi=self.pi, theta=self.theta)
                except ValueError as exc:
                    raise ConfigError(f"sampler.kernels[{n}]", str(exc)) from None
                if c < spec.min_population:
                    raise ConfigError("sampler.population", f"{k} needs at least {spec.min_population} chains, got {c}")

    def schedules(self) -> tuple:
        if self.mode == "likelihood":
            return (None,)
        return tuple(EpsilonSchedule.parse(e) for e in self.epsilon)

    def cells(self) -> list:
        """Grid cells ``(population, p_flip, schedule)`` in a fixed order."""
        return [(c, p, s) for c in self.population for p in self.p_flip for s in self.schedules()]


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    seed: int = 0
    repeats: int = 1
    iterations: int = 1000
    stride: int = 100
    burn_in: float = 0.5
    metrics: tuple = ("error", "acceptance")
    out_dir: str = ""
    workers: int = 1
    ensemble_last: int = 5
    problem: Any = field(default_factory=QmrConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)

    def check(self) -> "ExperimentConfig":
        if not self.name or any(ch in self.name for ch in "/\\ "):
            raise ConfigError("experiment.name", "must be a non-empty name without spaces or slashes")
        if self.seed < 0:
            raise ConfigError("experiment.seed", "must be non-negative")
        if self.repeats < 0:
            raise ConfigError("experiment.repeats", "must be non-negative")
        if self.iterations < 0:
            raise ConfigError("experiment.iterations", "must be non-negative")
        _positive("experiment.stride", self.stride)
        _positive("experiment.workers", self.workers)
        _positive("experiment.ensemble_last", self.ensemble_last)
        if not 0.0 <= self.burn_in < 1.0:
            raise ConfigError("experiment.burn_in", "must lie in [0, 1)")
        for n, m in enumerate(self.metrics):
            if m not in METRICS:
                raise ConfigError(f"experiment.metrics[{n}]", f"unknown metric {m!r}; choose from {METRICS}")
        self.problem.check()
        self.sampler.check()
        if self.problem.kind != "qmr" and self.sampler.mode == "likelihood":
            raise ConfigError("sampler.mode", f"{self.problem.kind} has no likelihood; use abc")
        if "ensemble" in self.metrics and self.problem.kind != "binnn":
            raise ConfigError("experiment.metrics", "ensemble needs the binnn problem")
        if "posterior" in self.metrics and self.problem.kind != "qmr":
            raise ConfigError("experiment.metrics", "posterior needs the qmr problem")
        return self

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes).check()

    def identity(self) -> "ExperimentConfig":
        """Copy without the fields that cannot change results (output location, workers)."""
        return dataclasses.replace(self, out_dir="", workers=1)

    @property
    def config_hash(self) -> str:
        return hashlib.sha256(serialize_config(self.identity()).encode()).hexdigest()[:16]


# --- text form --------------------------------------------------------------


def _positive(path: str, value) -> None:
    if not value > 0:
        raise ConfigError(path, f"must be positive, got {value}")


def _is_tuple(f) -> bool:
    return f.type in ("tuple", tuple)


def _elem_type(cls, f):
    # element type of list-valued fields, read off the default
    default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
    return type(default[0]) if isinstance(default, tuple) and default else str


def _scalar_type(f):
    default = f.default
    if default is dataclasses.MISSING:
        return str
    return type(default)


def _convert(path: str, text: str, typ):
    text = text.strip()
    try:
        if typ is bool:
            if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return text.lower() in ("true", "1", "yes")
        if typ is int:
            return int(text)
        if typ is float:
            return float(text)
        return text
    except ValueError:
        raise ConfigError(path, f"cannot read {text!r} as {typ.__name__}") from None


def _read_section(section: str, cls, items: dict, skip=()) -> Any:
    known = {f.name: f for f in fields(cls)}
    values = {}
    for key, raw in items.items():
        if key in skip:
            continue
        name = key if key in known else {k.lower(): k for k in known}.get(key.lower())
        if name is None or name in ("problem", "sampler"):
            raise ConfigError(f"{section}.{key}", "unknown key")
        f = known[name]
        path = f"{section}.{name}"
        if _is_tuple(f):
            parts = [p for p in (s.strip() for s in raw.split(",")) if p]
            typ = _elem_type(cls, f)
            values[name] = tuple(_convert(f"{path}[{n}]", p, typ) for n, p in enumerate(parts))
        else:
            values[name] = _convert(path, raw, _scalar_type(f))
    return cls(**values)


def parse_config(text: str) -> ExperimentConfig:
    """Parse configuration text; raises :class:`ConfigError` naming the bad field."""
    cp = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc).splitlines()[0]) from None
    for s in cp.sections():
        if s not in ("experiment", "problem", "sampler"):
            raise ConfigError(s, "unknown section")
    prob_items = dict(cp["problem"]) if cp.has_section("problem") else {}
    kind = prob_items.get("kind", "qmr").strip()
    if kind not in PROBLEMS:
        raise ConfigError("problem.kind", f"expected one of {sorted(PROBLEMS)}, got {kind!r}")
    problem = _read_section("problem", PROBLEMS[kind], prob_items, skip=("kind",))
    sampler = _read_section("sampler", SamplerConfig, dict(cp["sampler"]) if cp.has_section("sampler") else {})
    exp_items = dict(cp["experiment"]) if cp.has_section("experiment") else {}
    base = _read_section("experiment", ExperimentConfig, exp_items)
    return dataclasses.replace(base, problem=problem, sampler=sampler).check()


def load_config(path) -> ExperimentConfig:
    try:
        with open(path) as f:
            text = f.read()
    except OSError as exc:
        raise ConfigError(str(path), exc.strerror or str(exc)) from None
    return parse_config(text)


def _format(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(_format(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; ``parse_config(serialize_config(c)) == c``."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp["experiment"] = {
        f.name: _format(getattr(cfg, f.name)) for f in fields(cfg) if f.name not in ("problem", "sampler")
    }
    prob = {"kind": cfg.problem.kind}
    prob.update({f.name: _format(getattr(cfg.problem, f.name)) for f in fields(cfg.problem)})
    cp["problem"] = prob
    cp["sampler"] = {f.name: _format(getattr(cfg.sampler, f.name)) for f in fields(cfg.sampler)}
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()
