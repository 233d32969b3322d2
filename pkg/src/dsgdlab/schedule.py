"""Mixing-matrix schedules: the distributions W^(t) is drawn from at each step.

A schedule is immutable and ``sample(t, seed)`` is a pure function of its
arguments; the random variants draw from a counter-based stream keyed by
``(seed, t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Sequence

import numpy as np

from . import _rng
from .topology import DEFAULT_TOL, Graph, pair_edge_matrix, validate_mixing

__all__ = [
    "MixingSchedule",
    "Fixed",
    "LocalSGD",
    "LooplessLocal",
    "PairwiseRandom",
    "RepeatedPairwise",
    "FiniteMixture",
    "Periodic",
    "identity",
    "sample",
    "period_of",
]


@lru_cache(maxsize=None)
def identity(n: int) -> np.ndarray:
    """Shared read-only ``I_n``; schedules return this exact object for no-op steps."""
    eye = np.eye(n)
    eye.setflags(write=False)
    return eye


def _frozen(W: Any, what: str) -> np.ndarray:
    arr = np.array(W, dtype=float)
    report = validate_mixing(arr, DEFAULT_TOL)
    if not report.passed:
        raise ValueError(
            f"{what} is not a valid mixing matrix: symmetry={report.symmetry:.3g}, "
            f"row_sum={report.row_sum:.3g}, col_sum={report.col_sum:.3g}, "
            f"min_entry={report.min_entry:.3g}"
        )
    arr.setflags(write=False)
    return arr


class MixingSchedule:
    """Base class. Subclasses are frozen dataclasses."""

    name: str = ""

    @property
    def n(self) -> int:
        raise NotImplementedError

    @property
    def period(self) -> int:
        return 1

    @property
    def is_random(self) -> bool:
        return False

    def sample(self, t: int, seed: int = 0) -> np.ndarray:
        raise NotImplementedError

    def expect(self, t: int, S: np.ndarray) -> np.ndarray:
        """Exact ``E[W S W^T]`` for ``W ~ W^(t)``."""
        raise NotImplementedError

    def matrices(self) -> list[np.ndarray]:
        return []

    def describe(self) -> dict[str, Any]:
        return {"variant": self.name}


@dataclass(frozen=True, eq=False)
class Fixed(MixingSchedule):
    W: np.ndarray
    name = "fixed"

    def __post_init__(self) -> None:
        object.__setattr__(self, "W", _frozen(self.W, "Fixed.W"))

    @property
    def n(self) -> int:
        return self.W.shape[0]

    def sample(self, t: int, seed: int = 0) -> np.ndarray:
        return self.W

    def expect(self, t: int, S: np.ndarray) -> np.ndarray:
        return self.W @ S @ self.W.T

    def matrices(self) -> list[np.ndarray]:
        return [self.W]


@dataclass(frozen=True, eq=False)
class LocalSGD(MixingSchedule):
    """``tau - 1`` local steps, then one gossip step with ``W``.

    Communication happens at the steps with ``(t + 1) % tau == 0``.
    """

    W: np.ndarray
    tau: int
    name = "local_sgd"

    def __post_init__(self) -> None:
        if int(self.tau) != self.tau or self.tau < 1:
            raise ValueError(f"LocalSGD needs integer tau >= 1, got {self.tau}")
        object.__setattr__(self, "tau", int(self.tau))
        object.__setattr__(self, "W", _frozen(self.W, "LocalSGD.W"))

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def period(self) -> int:
        return self.tau

    def communicates(self, t: int) -> bool:
        return (t + 1) % self.tau == 0

    def sample(self, t: int, seed: int = 0) -> np.ndarray:
        return self.W if self.communicates(t) else identity(self.n)

    def expect(self, t: int, S: np.ndarray) -> np.ndarray:
        return self.W @ S @ self.W.T if self.communicates(t) else S

    def matrices(self) -> list[np.ndarray]:
        return [self.W]

    def describe(self) -> dict[str, Any]:
        return {"variant": self.name, "tau": self.tau}


@dataclass(frozen=True, eq=False)
class LooplessLocal(MixingSchedule):
    """Gossip with ``W`` with probability ``1/tau``, otherwise a local step."""

    W: np.ndarray
    tau: float
    name = "loopless_local"

    def __post_init__(self) -> None:
        if self.tau < 1:
            raise ValueError(f"LooplessLocal needs tau >= 1, got {self.tau}")
        object.__setattr__(self, "W", _frozen(self.W, "LooplessLocal.W"))

    @property
    def n(self) -> int:
        return self.W.shape[0]

    @property
    def is_random(self) -> bool:
        return self.tau > 1

    def sample(self, t: int, seed: int = 0) -> np.ndarray:
        if self.tau == 1:
            return self.W
        u = _rng.stream(seed, t, _rng.SCHEDULE).random()
        return self.W if u < 1.0 / self.tau else identity(self.n)

    def expect(self, t: int, S: np.ndarray) -> np.ndarray:
        q = 1.0 / self.tau
        return q * (self.W @ S @ self.W.T) + (1.0 - q) * S

    def matrices(self) -> list[np.ndarray]:
        return [self.W]

    def describe(self) -> dict[str, Any]:
        return {"variant": self.name, "tau": self.tau}


def _pair_expect(edges: np.ndarray, S: np.ndarray) -> np.ndarray:
    """Mean of ``Z_e S Z_e`` over the given edges, without forming each ``Z_e``."""
    out = np.zeros_like(S)
    for i, j in edges:
        ZS = S.copy()
        avg = 0.5 * (S[i] + S[j])
        ZS[i] = avg
        ZS[j] = avg
        col = 0.5 * (ZS[:, i] + ZS[:, j])
        ZS[:, i] = col
        ZS[:, j] = col
        out += ZS
    return out / len(edges)


@dataclass(frozen=True, eq=False)
class PairwiseRandom(MixingSchedule):
    """One uniformly sampled edge of ``graph`` averages its two endpoints per step."""

    graph: Graph
    name = "pairwise"
    _edges: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.graph.num_edges == 0:
            raise ValueError("PairwiseRandom needs a graph with at least one edge")
        edges = np.array(self.graph.edges, dtype=int)
        edges.setflags(write=False)
        object.__setattr__(self, "_edges", edges)

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def is_random(self) -> bool:
        return self.graph.num_edges > 1

    def _draw_edges(self, t: int, seed: int, k: int) -> np.ndarray:
        idx = _rng.stream(seed, t, _rng.SCHEDULE).integers(0, len(self._edges), size=k)
        return self._edges[idx]

    def sample(self, t: int, seed: int = 0) -> np.ndarray:
        (i, j), = self._draw_edges(t, seed, 1)
        return pair_edge_matrix(int(i), int(j), self.n)

    def expect(self, t: int, S: np.ndarray) -> np.ndarray:
        return _pair_expect(self._edges, S)

    def describe(self) -> dict[str, Any]:
        return {"variant": self.name, "graph": self.graph.kind}


@dataclass(frozen=True, eq=False)
class RepeatedPairwise(PairwiseRandom):
    """``k`` independent edge draws (with replacement) applied in draw order per step.

    The product of pair matrices is doubly stochastic but in general not
    symmetric.
    """

    k: int = 1
    name = "repeated_pairwise"

    def __post_init__(self) -> None:
        super().__post_init__()
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"RepeatedPairwise needs integer k >= 1, got {self.k}")

    def sample(self, t: int, seed: int = 0) -> np.ndarray:
        W = identity(self.n).copy()
        for i, j in self._draw_edges(t, seed, self.k):
            # right-multiplying by Z averages columns i and j
            col = 0.5 * (W[:, i] + W[:, j])
            W[:, i] = col
            W[:, j] = col
        return W

    def expect(self, t: int, S: np.ndarray) -> np.ndarray:
        for _ in range(self.k):
            S = _pair_expect(self._edges, S)
        return S

    def describe(self) -> dict[str, Any]:
        return {"variant": self.name, "graph": self.graph.kind, "k": self.k}


@dataclass(frozen=True, eq=False)
class FiniteMixture(MixingSchedule):
    """Draw one matrix from a fixed finite set with the given probabilities."""

    Ws: Sequence[np.ndarray]
    probs: Sequence[float]
    name = "mixture"
    _cum: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if len(self.Ws) == 0 or len(self.Ws) != len(self.probs):
            raise ValueError("FiniteMixture needs matching non-empty matrix and probability lists")
        Ws = tuple(_frozen(W, f"FiniteMixture.Ws[{k}]") for k, W in enumerate(self.Ws))
        if len({W.shape for W in Ws}) != 1:
            raise ValueError("FiniteMixture matrices must share one shape")
        probs = np.array(self.probs, dtype=float)
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > DEFAULT_TOL:
            raise ValueError(f"FiniteMixture probabilities must be >= 0 and sum to 1, got {probs}")
        probs.setflags(write=False)
        cum = np.cumsum(probs)
        cum[-1] = 1.0
        object.__setattr__(self, "Ws", Ws)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "_cum", cum)

    @property
    def n(self) -> int:
        return self.Ws[0].shape[0]

    @property
    def is_random(self) -> bool:
        return int(np.count_nonzero(self.probs)) > 1

    def sample(self, t: int, seed: int = 0) -> np.ndarray:
        u = _rng.stream(seed, t, _rng.SCHEDULE).random()
        k = int(np.searchsorted(self._cum, u, side="right"))
        return self.Ws[min(k, len(self.Ws) - 1)]

    def expect(self, t: int, S: np.ndarray) -> np.ndarray:
        out = np.zeros_like(S)
        for W, q in zip(self.Ws, self.probs):
            if q > 0:
                out += q * (W @ S @ W.T)
        return out

    def matrices(self) -> list[np.ndarray]:
        return list(self.Ws)

    def describe(self) -> dict[str, Any]:
        return {"variant": self.name, "probs": [float(q) for q in self.probs]}


@dataclass(frozen=True, eq=False)
class Periodic(MixingSchedule):
    """Cycle deterministically through a list of matrices."""

    Ws: Sequence[np.ndarray]
    name = "periodic"

    def __post_init__(self) -> None:
        if len(self.Ws) == 0:
            raise ValueError("Periodic needs at least one matrix")
        Ws = tuple(_frozen(W, f"Periodic.Ws[{k}]") for k, W in enumerate(self.Ws))
        if len({W.shape for W in Ws}) != 1:
            raise ValueError("Periodic matrices must share one shape")
        object.__setattr__(self, "Ws", Ws)

    @property
    def n(self) -> int:
        return self.Ws[0].shape[0]

    @property
    def period(self) -> int:
        # smallest cyclic shift under which the list repeats
        P = len(self.Ws)
        for q in range(1, P + 1):
            if P % q == 0 and all(
                np.array_equal(self.Ws[i], self.Ws[i % q]) for i in range(P)
            ):
                return q
        return P

    def sample(self, t: int, seed: int = 0) -> np.ndarray:
        return self.Ws[t % len(self.Ws)]

    def expect(self, t: int, S: np.ndarray) -> np.ndarray:
        W = self.sample(t)
        return W @ S @ W.T

    def matrices(self) -> list[np.ndarray]:
        return list(self.Ws)

    def describe(self) -> dict[str, Any]:
        return {"variant": self.name, "length": len(self.Ws)}


def sample(s: MixingSchedule, t: int, seed: int = 0) -> np.ndarray:
    return s.sample(t, seed)


def period_of(s: MixingSchedule) -> int:
    return s.period


def window_offsets(s: MixingSchedule, tau: int) -> int:
    """Number of distinct window alignments for windows of length ``tau``."""
    P = s.period
    return (P * tau // math.gcd(P, tau)) // tau
