"""Stepsize tuning: the constant stepsize that reaches a target accuracy first."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .engine import first_crossing
from .problem import QuadraticProblem
from .schedule import MixingSchedule

__all__ = [
    "GridSpec",
    "GridPoint",
    "TuneResult",
    "AllFailedError",
    "iterations_to_accuracy",
    "tune_stepsize",
    "TUNE_SCHEMA",
]

TUNE_SCHEMA = "# dsgdlab tune v1"


class AllFailedError(RuntimeError):
    """No stepsize of the grid reached the target accuracy."""


@dataclass(frozen=True)
class GridSpec:
    """Log-spaced stepsize grid ``[lo, hi] / L`` plus a local refinement.

    ``L`` is the problem's largest smoothness constant. The refinement inserts
    ``refine`` points geometrically spaced strictly inside the two grid cells
    adjacent to the incumbent.
    """

    lo: float = 1e-4
    hi: float = 10.0
    points: int = 25
    refine: int = 8

    def __post_init__(self) -> None:
        if not (0 < self.lo <= self.hi) or self.points < 1 or self.refine < 0:
            raise ValueError(f"invalid grid spec {self}")

    def coarse(self, L: float) -> np.ndarray:
        if self.points == 1:
            return np.array([self.lo / L])
        return np.geomspace(self.lo / L, self.hi / L, self.points)

    def ratio(self) -> float:
        return (self.hi / self.lo) ** (1.0 / (self.points - 1)) if self.points > 1 else 2.0

    def refined(self, eta: float) -> np.ndarray:
        half = self.refine // 2
        if half == 0:
            return np.array([])
        r = self.ratio()
        ks = np.arange(1, half + 1) / (half + 1)
        return np.sort(np.concatenate([eta * r**-ks, eta * r**ks]))


@dataclass(frozen=True)
class GridPoint:
    eta: float
    T: int | None
    status: str


@dataclass
class TuneResult:
    eta_star: float | None
    T_epsilon: int | None
    grid: list[GridPoint]
    seeds: int
    eps: float
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def reached(self) -> bool:
        return self.T_epsilon is not None

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(TUNE_SCHEMA + "\n")
            fh.write("eta,T,status\n")
            for gp in sorted(self.grid, key=lambda g: g.eta):
                T = "" if gp.T is None else str(gp.T)
                fh.write(f"{gp.eta!r},{T},{gp.status}\n")


def _seed_list(seeds: int | Sequence[int]) -> list[int]:
    if isinstance(seeds, int):
        if seeds < 1:
            raise ValueError(f"need at least one seed, got {seeds}")
        return list(range(seeds))
    out = [int(s) for s in seeds]
    if not out:
        raise ValueError("need at least one seed")
    return out


def iterations_to_accuracy(
    problem: QuadraticProblem,
    schedule: MixingSchedule,
    eta: float,
    eps: float,
    T_max: int,
    seeds: int | Sequence[int] = 5,
    init: Any = None,
) -> int | None:
    """First ``t`` at which the seed-averaged ``dist2`` is ``<= eps``; ``None`` if never.

    A diverging run also returns ``None``.
    """
    if T_max < 1:
        raise ValueError("T_max must be >= 1")
    res = first_crossing(problem, schedule, [eta], eps, T_max, _seed_list(seeds), init)
    return int(res.T[0]) if res.status[0] == "reached" else None


def _best(points: list[GridPoint]) -> GridPoint | None:
    ok = [g for g in points if g.T is not None]
    if not ok:
        return None
    # fewest iterations, ties to the smaller stepsize
    return min(ok, key=lambda g: (g.T, g.eta))


def tune_stepsize(
    problem: QuadraticProblem,
    schedule: MixingSchedule,
    eps: float,
    T_max: int,
    grid: GridSpec | Sequence[float] = GridSpec(),
    seeds: int | Sequence[int] = 5,
    init: Any = None,
    prune: bool = True,
    raise_on_fail: bool = True,
) -> TuneResult:
    """Find the constant stepsize that reaches ``eps`` in the fewest iterations.

    The coarse grid is evaluated first, then the refinement points around the
    incumbent. With ``prune`` the batch stops once the fastest stepsize has crossed,
    so slower stepsizes are reported as ``pruned`` rather than with their own count.

    Raises:
        AllFailedError: If no stepsize reaches ``eps`` (unless ``raise_on_fail`` is off).
    """
    seed_list = _seed_list(seeds)
    if isinstance(grid, GridSpec):
        spec = grid
        coarse = spec.coarse(problem.L)
    else:
        spec = None
        coarse = np.sort(np.asarray(grid, dtype=float))
        if coarse.size == 0:
            raise ValueError("empty stepsize grid")

    res = first_crossing(problem, schedule, coarse, eps, T_max, seed_list, init, prune=prune)
    points = [
        GridPoint(float(e), int(T) if s == "reached" else None, s)
        for e, T, s in zip(res.etas, res.T, res.status)
    ]
    best = _best(points)
    if best is not None and spec is not None and spec.refine > 0 and best.T > 0:
        extra = spec.refined(best.eta)
        res2 = first_crossing(
            problem, schedule, extra, eps, T_max, seed_list, init, prune=prune, bound=best.T
        )
        points += [
            GridPoint(float(e), int(T) if s == "reached" else None, s)
            for e, T, s in zip(res2.etas, res2.T, res2.status)
        ]
        best = _best(points)
    if best is None and raise_on_fail:
        raise AllFailedError(f"no stepsize reached eps={eps:g} within T_max={T_max}")
    return TuneResult(
        eta_star=None if best is None else best.eta,
        T_epsilon=None if best is None else best.T,
        grid=points,
        seeds=len(seed_list),
        eps=eps,
        meta={"seeds": seed_list, "T_max": T_max},
    )
