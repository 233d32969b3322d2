"""Experiment configuration: one YAML file per experiment.

Every section is a dataclass; unknown keys and inconsistent values raise
:class:`ConfigError` naming the offending field path (``run.steps`` etc.).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from . import __version__

__all__ = [
    "ConfigError",
    "ProblemConfig",
    "ScheduleConfig",
    "RunConfig",
    "TuneConfig",
    "SweepConfig",
    "LowerBoundConfig",
    "EstimateConfig",
    "OutputConfig",
    "ExperimentConfig",
    "load_config",
    "apply_override",
    "VARIANTS",
]

VARIANTS = ("fixed", "local_sgd", "loopless_local", "pairwise", "repeated_pairwise", "mixture", "periodic")
GRAPH_KINDS = ("ring", "torus2d", "complete")


class ConfigError(ValueError):
    def __init__(self, path: str, message: str) -> None:
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


def _check(cond: bool, path: str, message: str) -> None:
    if not cond:
        raise ConfigError(path, message)


@dataclass
class ProblemConfig:
    n: int = 25
    d: int = 10
    zeta_bar2: float = 10.0
    sigma_bar2: float = 0.0
    seed: int = 0
    exact_zeta: bool = False

    def validate(self, path: str) -> None:
        _check(self.n >= 1, f"{path}.n", "must be >= 1")
        _check(self.d >= 1, f"{path}.d", "must be >= 1")
        _check(self.zeta_bar2 >= 0, f"{path}.zeta_bar2", "must be >= 0")
        _check(self.sigma_bar2 >= 0, f"{path}.sigma_bar2", "must be >= 0")
        _check(self.seed >= 0, f"{path}.seed", "must be >= 0")


@dataclass
class ScheduleConfig:
    """Which mixing schedule to use.

    ``graph`` is a topology kind or the path of an edge-list file; ``matrices``
    lists CSV files for the ``mixture`` and ``periodic`` variants.
    """

    variant: str = "fixed"
    graph: str = "ring"
    tau: float = 1.0
    k: int = 1
    matrices: list[str] = field(default_factory=list)
    probs: list[float] = field(default_factory=list)

    def validate(self, path: str) -> None:
        _check(self.variant in VARIANTS, f"{path}.variant", f"must be one of {', '.join(VARIANTS)}")
        _check(self.tau >= 1, f"{path}.tau", "must be >= 1")
        if self.variant == "local_sgd":
            _check(float(self.tau).is_integer(), f"{path}.tau", "must be an integer for local_sgd")
        _check(self.k >= 1, f"{path}.k", "must be >= 1")
        if self.variant in ("mixture", "periodic"):
            _check(len(self.matrices) > 0, f"{path}.matrices", f"{self.variant} needs matrix CSV paths")
        if self.variant == "mixture":
            _check(
                len(self.probs) == len(self.matrices),
                f"{path}.probs",
                "needs one probability per matrix",
            )


@dataclass
class RunConfig:
    """Exactly one of ``steps`` (fixed-length run) or ``target`` (accuracy) is set."""

    steps: int | None = 1000
    target: float | None = None
    stepsize: float = 0.01
    stepsize_schedule: str = "constant"
    b: float = 1.0
    cadence: int = 1
    seeds: list[int] = field(default_factory=lambda: [0])
    init: str = "zeros"
    T_max: int = 1_000_000

    def validate(self, path: str) -> None:
        _check(
            (self.steps is None) != (self.target is None),
            f"{path}",
            "set exactly one of steps and target",
        )
        if self.steps is not None:
            _check(self.steps >= 0, f"{path}.steps", "must be >= 0")
        if self.target is not None:
            _check(self.target > 0, f"{path}.target", "must be > 0")
        _check(self.stepsize > 0, f"{path}.stepsize", "must be > 0")
        _check(
            self.stepsize_schedule in ("constant", "inverse_time"),
            f"{path}.stepsize_schedule",
            "must be constant or inverse_time",
        )
        _check(self.b >= 1, f"{path}.b", "must be >= 1")
        _check(self.cadence >= 1, f"{path}.cadence", "must be >= 1")
        _check(len(self.seeds) >= 1, f"{path}.seeds", "needs at least one seed")
        _check(all(s >= 0 for s in self.seeds), f"{path}.seeds", "seeds must be >= 0")
        _check(self.init in ("zeros", "ones"), f"{path}.init", "must be zeros or ones")
        _check(self.T_max >= 1, f"{path}.T_max", "must be >= 1")


@dataclass
class TuneConfig:
    lo: float = 1e-4
    hi: float = 10.0
    points: int = 25
    refine: int = 8
    prune: bool = True

    def validate(self, path: str) -> None:
        _check(0 < self.lo <= self.hi, f"{path}.lo", "need 0 < lo <= hi")
        _check(self.points >= 1, f"{path}.points", "must be >= 1")
        _check(self.refine >= 0, f"{path}.refine", "must be >= 0")


@dataclass
class SweepConfig:
    topologies: list[str] = field(default_factory=lambda: ["ring", "torus2d", "complete"])
    sigma_bar2: list[float] = field(default_factory=lambda: [0.0, 10.0, 100.0])
    zeta_bar2: list[float] = field(default_factory=lambda: [0.0, 10.0, 100.0])

    def validate(self, path: str) -> None:
        for k, kind in enumerate(self.topologies):
            _check(kind in GRAPH_KINDS, f"{path}.topologies[{k}]", f"must be one of {', '.join(GRAPH_KINDS)}")
        _check(len(self.topologies) > 0, f"{path}.topologies", "must not be empty")
        _check(len(self.sigma_bar2) > 0 and min(self.sigma_bar2) >= 0, f"{path}.sigma_bar2", "needs values >= 0")
        _check(len(self.zeta_bar2) > 0 and min(self.zeta_bar2) >= 0, f"{path}.zeta_bar2", "needs values >= 0")


@dataclass
class LowerBoundConfig:
    """``instance: eigenvector`` runs the hard instance; ``quadratic`` the slope replica."""

    instance: str = "eigenvector"
    topologies: list[str] = field(default_factory=lambda: ["ring"])
    zeta_bar: float = 1.0
    eps: list[float] = field(default_factory=lambda: [1e-2, 1e-3, 1e-4, 1e-5])
    problem_seeds: list[int] = field(default_factory=lambda: list(range(10)))

    def validate(self, path: str) -> None:
        _check(self.instance in ("eigenvector", "quadratic"), f"{path}.instance", "must be eigenvector or quadratic")
        for k, kind in enumerate(self.topologies):
            _check(kind in GRAPH_KINDS, f"{path}.topologies[{k}]", f"must be one of {', '.join(GRAPH_KINDS)}")
        _check(self.zeta_bar > 0, f"{path}.zeta_bar", "must be > 0")
        _check(len(self.eps) >= 2 and min(self.eps) > 0, f"{path}.eps", "needs at least two positive targets")
        _check(len(self.problem_seeds) >= 1, f"{path}.problem_seeds", "needs at least one seed")


@dataclass
class EstimateConfig:
    tau: int = 1
    method: str = "exact"
    trials: int = 1000
    seed: int = 0

    def validate(self, path: str) -> None:
        _check(self.tau >= 1, f"{path}.tau", "must be >= 1")
        _check(self.method in ("exact", "montecarlo"), f"{path}.method", "must be exact or montecarlo")
        _check(self.trials >= 2, f"{path}.trials", "must be >= 2")


@dataclass
class OutputConfig:
    directory: str = "out"
    formats: list[str] = field(default_factory=lambda: ["csv", "png"])

    def validate(self, path: str) -> None:
        for k, fmt in enumerate(self.formats):
            _check(fmt in ("csv", "png", "pdf"), f"{path}.formats[{k}]", "must be csv, png or pdf")

    @property
    def figure_formats(self) -> list[str]:
        return [f for f in self.formats if f != "csv"]


_SECTIONS = {
    "problem": ProblemConfig,
    "schedule": ScheduleConfig,
    "run": RunConfig,
    "tune": TuneConfig,
    "sweep": SweepConfig,
    "lower_bound": LowerBoundConfig,
    "estimate": EstimateConfig,
    "output": OutputConfig,
}


@dataclass
class ExperimentConfig:
    problem: ProblemConfig = field(default_factory=ProblemConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    run: RunConfig = field(default_factory=RunConfig)
    tune: TuneConfig = field(default_factory=TuneConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    lower_bound: LowerBoundConfig = field(default_factory=LowerBoundConfig)
    estimate: EstimateConfig = field(default_factory=EstimateConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def validate(self) -> "ExperimentConfig":
        for name in _SECTIONS:
            getattr(self, name).validate(name)
        return self

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def lock(self) -> str:
        """Resolved config plus the producing code version."""
        return yaml.safe_dump({"dsgdlab_version": __version__, **self.to_dict()}, sort_keys=False)

    @classmethod
    def from_dict(cls, data: dict[str, Any] | None) -> "ExperimentConfig":
        data = {} if data is None else data
        if not isinstance(data, dict):
            raise ConfigError("", "top level must be a mapping of sections")
        data = {k: v for k, v in data.items() if k != "dsgdlab_version"}
        unknown = set(data) - set(_SECTIONS)
        if unknown:
            raise ConfigError(sorted(unknown)[0], f"unknown section (expected one of {', '.join(_SECTIONS)})")
        kwargs = {name: _build(sec_cls, data.get(name), name) for name, sec_cls in _SECTIONS.items()}
        return cls(**kwargs).validate()

    @classmethod
    def parse(cls, text: str) -> "ExperimentConfig":
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError("", f"invalid YAML: {exc}") from exc
        return cls.from_dict(data)


def _coerce(value: Any, tp: Any, path: str) -> Any:
    """Check/convert one scalar or list value against its annotated type string."""
    tp = str(tp)
    if value is None:
        _check("None" in tp, path, "must not be null")
        return None
    if tp.startswith("list["):
        _check(isinstance(value, list), path, "must be a list")
        inner = tp[5:-1]
        return [_coerce(v, inner, f"{path}[{k}]") for k, v in enumerate(value)]
    if "bool" in tp:
        _check(isinstance(value, bool), path, "must be true or false")
        return value
    if "int" in tp and "float" not in tp:
        _check(isinstance(value, int) and not isinstance(value, bool), path, "must be an integer")
        return value
    if "float" in tp:
        if isinstance(value, str):
            try:
                value = float(value)
            except ValueError:
                raise ConfigError(path, "must be a number") from None
        _check(isinstance(value, (int, float)) and not isinstance(value, bool), path, "must be a number")
        return float(value)
    if "str" in tp:
        _check(isinstance(value, str), path, "must be a string")
        return value
    return value


def _build(sec_cls: type, data: Any, path: str) -> Any:
    if data is None:
        return sec_cls()
    if not isinstance(data, dict):
        raise ConfigError(path, "must be a mapping")
    known = {f.name: f for f in fields(sec_cls)}
    unknown = set(data) - set(known)
    if unknown:
        raise ConfigError(f"{path}.{sorted(unknown)[0]}", "unknown field")
    kwargs = {k: _coerce(v, known[k].type, f"{path}.{k}") for k, v in data.items()}
    return sec_cls(**kwargs)


def apply_override(data: dict[str, Any], assignment: str) -> None:
    """Apply ``section.key=value`` (value parsed as YAML) to a raw config mapping."""
    if "=" not in assignment:
        raise ConfigError(assignment, "override must look like section.key=value")
    key, raw = assignment.split("=", 1)
    parts = key.strip().split(".")
    if len(parts) != 2:
        raise ConfigError(key, "override key must be section.field")
    section, name = parts
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(key, f"cannot parse value {raw!r}: {exc}") from exc
    data.setdefault(section, {})
    if not isinstance(data[section], dict):
        raise ConfigError(section, "must be a mapping")
    data[section][name] = value


def load_config(path: str | Path | None, overrides: list[str] = ()) -> ExperimentConfig:
    """Read a config file (or start from defaults) and apply ``section.key=value`` overrides."""
    data: dict[str, Any] = {}
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(str(path), f"cannot read config: {exc.strerror}") from exc
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(str(path), f"invalid YAML: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(str(path), "top level must be a mapping of sections")
    for item in overrides:
        apply_override(data, item)
    return ExperimentConfig.from_dict(data)
