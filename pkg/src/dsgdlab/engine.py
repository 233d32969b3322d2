"""Decentralized SGD in matrix form.

Each step takes a (stochastic) gradient step on every worker and then gossips::

    X_half = X - eta_t * G(X, xi_t)
    X      = X_half @ W_t

``X`` is ``d x n`` with one column per worker. :func:`run` records a
:class:`Trace` of a single trajectory; :func:`first_crossing` advances a whole
batch of stepsizes and seeds together and is what the tuner uses.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import yaml

from . import _rng
from .problem import QuadraticProblem
from .schedule import MixingSchedule, identity

__all__ = [
    "Constant",
    "InverseTime",
    "StepsizeSchedule",
    "Trace",
    "DivergenceError",
    "run",
    "consensus_distance",
    "avg_sq_distance",
    "first_crossing",
    "initial_iterates",
    "TRACE_SCHEMA",
    "DIVERGENCE_LIMIT",
]

DIVERGENCE_LIMIT = 1e100
TRACE_SCHEMA = "# dsgdlab trace v1"


class DivergenceError(RuntimeError):
    def __init__(self, t: int, detail: str = "") -> None:
        self.t = t
        super().__init__(f"iterates diverged at step t={t}{': ' + detail if detail else ''}")


@dataclass(frozen=True)
class Constant:
    eta: float

    def __post_init__(self) -> None:
        if not self.eta > 0:
            raise ValueError(f"stepsize must be > 0, got {self.eta}")

    def at(self, t: int) -> float:
        return self.eta

    def describe(self) -> dict[str, Any]:
        return {"kind": "constant", "eta": self.eta}


@dataclass(frozen=True)
class InverseTime:
    """``eta_t = a / (b + t)``."""

    a: float
    b: float = 1.0

    def __post_init__(self) -> None:
        if not self.a > 0 or self.b < 1:
            raise ValueError(f"InverseTime needs a > 0 and b >= 1, got a={self.a}, b={self.b}")

    def at(self, t: int) -> float:
        return self.a / (self.b + t)

    def describe(self) -> dict[str, Any]:
        return {"kind": "inverse_time", "a": self.a, "b": self.b}


StepsizeSchedule = Constant | InverseTime


def consensus_distance(X: np.ndarray) -> float:
    """``(1/n) sum_j ||x_j - xbar||^2``."""
    X = np.asarray(X, dtype=float)
    xbar = X.mean(axis=1, keepdims=True)
    return float(np.sum((X - xbar) ** 2)) / X.shape[1]


def avg_sq_distance(X: np.ndarray, x_star: np.ndarray) -> float:
    """``(1/n) sum_j ||x_j - x*||^2``."""
    X = np.asarray(X, dtype=float)
    return float(np.sum((X - np.reshape(x_star, (-1, 1))) ** 2)) / X.shape[1]


def initial_iterates(problem: QuadraticProblem, init: Any = None) -> np.ndarray:
    """``d x n`` starting iterates.

    ``init`` may be ``None``/``"zeros"`` (all workers at 0), ``"ones"``, a length-``d``
    vector shared by all workers, or a full ``d x n`` matrix.
    """
    d, n = problem.d, problem.n
    if init is None or (isinstance(init, str) and init == "zeros"):
        return np.zeros((d, n))
    if isinstance(init, str):
        if init == "ones":
            return np.ones((d, n))
        raise ValueError(f"unknown init {init!r}; expected zeros, ones or an array")
    X0 = np.array(init, dtype=float)
    if X0.ndim == 1 and X0.shape == (d,):
        return np.repeat(X0[:, None], n, axis=1)
    if X0.shape != (d, n):
        raise ValueError(f"init has shape {X0.shape}, expected ({d},) or ({d}, {n})")
    return X0


@dataclass
class Trace:
    """Metrics recorded along one run.

    Columns: ``t``, consensus distance ``xi``, mean squared distance to the
    optimum ``dist2`` and suboptimality of the average iterate ``fgap``.
    """

    t: np.ndarray
    xi: np.ndarray
    dist2: np.ndarray
    fgap: np.ndarray
    meta: dict[str, Any] = field(default_factory=dict)
    final: np.ndarray | None = field(default=None, repr=False)
    max_average_drift: float = 0.0

    def __len__(self) -> int:
        return len(self.t)

    def rows(self) -> list[tuple[int, float, float, float]]:
        return [
            (int(t), float(x), float(d), float(g))
            for t, x, d, g in zip(self.t, self.xi, self.dist2, self.fgap)
        ]

    def to_csv(self, path: str | Path, meta_path: str | Path | None = None) -> None:
        path = Path(path)
        with path.open("w") as fh:
            fh.write(TRACE_SCHEMA + "\n")
            fh.write("t,xi,dist2,fgap\n")
            for t, x, d, g in self.rows():
                fh.write(f"{t},{x!r},{d!r},{g!r}\n")
        if meta_path is None:
            meta_path = path.with_suffix(".meta.yaml")
        Path(meta_path).write_text(yaml.safe_dump(_plain(self.meta), sort_keys=True))

    @classmethod
    def from_csv(cls, path: str | Path) -> "Trace":
        lines = Path(path).read_text().splitlines()
        if not lines or lines[0] != TRACE_SCHEMA:
            raise ValueError(f"{path}: missing trace schema line {TRACE_SCHEMA!r}")
        if lines[1] != "t,xi,dist2,fgap":
            raise ValueError(f"{path}: unexpected header {lines[1]!r}")
        rows = [ln.split(",") for ln in lines[2:] if ln]
        meta_path = Path(path).with_suffix(".meta.yaml")
        meta = yaml.safe_load(meta_path.read_text()) if meta_path.exists() else {}
        return cls(
            t=np.array([int(r[0]) for r in rows], dtype=int),
            xi=np.array([float(r[1]) for r in rows]),
            dist2=np.array([float(r[2]) for r in rows]),
            fgap=np.array([float(r[3]) for r in rows]),
            meta=meta or {},
        )


def _plain(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    return obj


def _diverged(X: np.ndarray) -> bool:
    m = np.max(np.abs(X))
    return not (m <= DIVERGENCE_LIMIT)  # NaN compares False


def run(
    problem: QuadraticProblem,
    schedule: MixingSchedule,
    steps: int,
    stepsize: StepsizeSchedule | float,
    init: Any = None,
    cadence: int = 1,
    seed: int = 0,
    skip_identity: bool = False,
) -> Trace:
    """Run ``steps`` iterations and record metrics every ``cadence`` steps.

    The trace holds the rows at ``t = 0, cadence, 2*cadence, ...`` plus the last
    step, i.e. ``ceil(steps / cadence) + 1`` rows.

    Raises:
        DivergenceError: If an iterate becomes non-finite or exceeds ``1e100``.
    """
    if steps < 0:
        raise ValueError(f"steps must be >= 0, got {steps}")
    if cadence < 1:
        raise ValueError(f"cadence must be >= 1, got {cadence}")
    if schedule.n != problem.n:
        raise ValueError(f"schedule has n={schedule.n} but problem has n={problem.n}")
    if not isinstance(stepsize, (Constant, InverseTime)):
        stepsize = Constant(float(stepsize))
    n = problem.n
    eye = identity(n)
    noisy = problem.sigma_bar2 > 0
    x_star = problem.x_star

    X = initial_iterates(problem, init)
    ts, xis, d2s, gaps = [], [], [], []

    def record(t: int) -> None:
        xbar = X.mean(axis=1)
        ts.append(t)
        xis.append(consensus_distance(X))
        d2s.append(avg_sq_distance(X, x_star))
        gaps.append(problem.f_gap(xbar))

    record(0)
    drift = 0.0
    for t in range(steps):
        G = problem.grads(X)
        if noisy:
            G = G + problem.noise(_rng.stream(seed, t, _rng.NOISE), X.shape)
        Xh = X - stepsize.at(t) * G
        W = schedule.sample(t, seed)
        X = Xh if (skip_identity and W is eye) else Xh @ W
        drift = max(drift, float(np.max(np.abs(X.mean(axis=1) - Xh.mean(axis=1)))))
        if _diverged(X):
            raise DivergenceError(t)
        if (t + 1) % cadence == 0 or t + 1 == steps:
            record(t + 1)

    meta = {
        "seed": seed,
        "steps": steps,
        "cadence": cadence,
        "schedule": schedule.describe(),
        "stepsize": stepsize.describe(),
        "n": n,
        "d": problem.d,
        "sigma_bar2": problem.sigma_bar2,
        "zeta_bar2_measured": problem.zeta_bar2_measured,
    }
    return Trace(
        t=np.array(ts, dtype=int),
        xi=np.array(xis),
        dist2=np.array(d2s),
        fgap=np.array(gaps),
        meta=meta,
        final=X,
        max_average_drift=drift,
    )


@dataclass
class CrossingResult:
    """Outcome of :func:`first_crossing` for each stepsize of the batch.

    ``T[g]`` is the first step at which the seed-averaged ``dist2`` is ``<= eps``,
    or ``-1``. ``status[g]`` is one of ``reached``, ``diverged``, ``not_reached``
    (budget exhausted) or ``pruned`` (stopped once a faster stepsize had crossed).
    """

    etas: np.ndarray
    T: np.ndarray
    status: list[str]
    steps_run: int


def first_crossing(
    problem: QuadraticProblem,
    schedule: MixingSchedule,
    etas: Sequence[float],
    eps: float,
    T_max: int,
    seeds: Sequence[int] = (0,),
    init: Any = None,
    prune: bool = False,
    bound: int | None = None,
) -> CrossingResult:
    """Advance every ``(eta, seed)`` pair in lockstep until ``dist2`` first drops to ``eps``.

    Args:
        prune: Stop as soon as any stepsize has crossed; every stepsize that has not
            crossed by then is marked ``pruned``.
        bound: Do not look past this step (stepsizes still running are ``pruned``).
    """
    etas = np.asarray(etas, dtype=float)
    if np.any(etas <= 0):
        raise ValueError("stepsizes must be > 0")
    if eps <= 0 or T_max < 0:
        raise ValueError("need eps > 0 and T_max >= 0")
    if schedule.n != problem.n:
        raise ValueError(f"schedule has n={schedule.n} but problem has n={problem.n}")
    seeds = [int(s) for s in seeds]
    G_all, S = len(etas), len(seeds)
    n = problem.n
    eye = identity(n)
    noisy = problem.sigma_bar2 > 0
    shared_W = not schedule.is_random
    x_star = problem.x_star[:, None]
    a2, ab = problem.a**2, problem.a * problem.b
    limit = T_max if bound is None else min(T_max, bound)

    T = np.full(G_all, -1, dtype=int)
    status = ["not_reached"] * G_all
    active = np.arange(G_all)
    X = np.broadcast_to(initial_iterates(problem, init), (G_all, S, problem.d, n)).copy()
    eta_col = etas[:, None, None, None]

    t = 0
    while True:
        D = np.sum((X - x_star) ** 2, axis=(2, 3)).mean(axis=1) / n
        hit = D <= eps
        if hit.any():
            for g in active[hit]:
                T[g] = t
                status[g] = "reached"
            keep = ~hit
            if prune:
                break
            active, X, eta_col = active[keep], X[keep], eta_col[keep]
        if active.size == 0 or t >= limit:
            break
        G = X * a2 - ab
        if noisy:
            nu = np.stack(
                [problem.noise(_rng.stream(sd, t, _rng.NOISE), (problem.d, n)) for sd in seeds]
            )
            G = G + nu
        Xh = X - eta_col * G
        if shared_W:
            W = schedule.sample(t, seeds[0])
            X = Xh if W is eye else Xh @ W
        else:
            Ws = np.stack([schedule.sample(t, sd) for sd in seeds])
            X = Xh @ Ws
        t += 1
        bad = ~(np.max(np.abs(X), axis=(1, 2, 3)) <= DIVERGENCE_LIMIT)
        if bad.any():
            for g in active[bad]:
                status[g] = "diverged"
            keep = ~bad
            active, X, eta_col = active[keep], X[keep], eta_col[keep]
            if active.size == 0:
                break

    if t < T_max:
        for g in active:
            if status[g] == "not_reached":
                status[g] = "pruned"
    return CrossingResult(etas=etas, T=T, status=status, steps_run=t)
