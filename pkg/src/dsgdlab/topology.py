"""Communication graphs and the mixing matrices built on them.

Nodes are 0-indexed. Matrices are dense ``numpy`` arrays; every experiment
in scope has at most a few hundred nodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

__all__ = [
    "Graph",
    "MixingReport",
    "build_topology",
    "metropolis_weights",
    "pair_edge_matrix",
    "validate_mixing",
    "is_mixing",
    "read_edge_list",
    "write_edge_list",
    "save_matrix_csv",
    "load_matrix_csv",
    "DimensionError",
    "DEFAULT_TOL",
    "KINDS",
]

DEFAULT_TOL = 1e-12
KINDS = ("ring", "torus2d", "complete", "custom")


class DimensionError(ValueError):
    """Node count incompatible with the requested topology."""


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on nodes ``0..n-1``.

    Edges are stored as sorted ``(i, j)`` tuples with ``i < j``.
    """

    n: int
    edges: tuple[tuple[int, int], ...]
    kind: str = "custom"
    _degrees: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.n < 1:
            raise DimensionError(f"graph needs n >= 1, got {self.n}")
        if self.kind not in KINDS:
            raise ValueError(f"unknown graph kind {self.kind!r}")
        canon = []
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise IndexError(f"edge ({i}, {j}) out of range for n={self.n}")
            canon.append((min(i, j), max(i, j)))
        if len(set(canon)) != len(canon):
            raise ValueError("duplicate edges")
        canon.sort()
        object.__setattr__(self, "edges", tuple(canon))
        deg = np.zeros(self.n, dtype=int)
        for i, j in canon:
            deg[i] += 1
            deg[j] += 1
        deg.setflags(write=False)
        object.__setattr__(self, "_degrees", deg)

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "Graph":
        return cls(n=n, edges=tuple(edges), kind="custom")

    @property
    def degrees(self) -> np.ndarray:
        return self._degrees

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n, self.n))
        for i, j in self.edges:
            A[i, j] = A[j, i] = 1.0
        return A

    def is_connected(self) -> bool:
        seen = {0}
        frontier = [0]
        nbrs: list[list[int]] = [[] for _ in range(self.n)]
        for i, j in self.edges:
            nbrs[i].append(j)
            nbrs[j].append(i)
        while frontier:
            u = frontier.pop()
            for v in nbrs[u]:
                if v not in seen:
                    seen.add(v)
                    frontier.append(v)
        return len(seen) == self.n


def build_topology(kind: str, n: int) -> Graph:
    """Build one of the standard topologies.

    Args:
        kind: ``"ring"``, ``"torus2d"`` or ``"complete"``.
        n: Number of nodes. Rings need ``n >= 3``; a 2-d torus needs
            ``n = s**2`` with ``s >= 3`` so that the wrap-around grid is simple.

    Raises:
        DimensionError: If ``n`` does not fit the topology.
    """
    if n < 1:
        raise DimensionError(f"n must be >= 1, got {n}")
    if kind == "complete":
        edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    elif kind == "ring":
        if n < 3:
            raise DimensionError(f"ring needs n >= 3, got {n}")
        edges = [(i, (i + 1) % n) for i in range(n)]
    elif kind == "torus2d":
        s = math.isqrt(n)
        if s * s != n:
            raise DimensionError(f"torus2d needs a perfect square n, got {n}")
        if s < 3:
            # wrap-around duplicates every edge of a 2x2 grid
            raise DimensionError(f"torus2d needs side >= 3 (n >= 9), got n={n}")
        edge_set = set()
        for r in range(s):
            for c in range(s):
                u = r * s + c
                for v in (r * s + (c + 1) % s, ((r + 1) % s) * s + c):
                    edge_set.add((min(u, v), max(u, v)))
        edges = sorted(edge_set)
    else:
        raise ValueError(f"unknown topology kind {kind!r}; expected ring, torus2d or complete")
    return Graph(n=n, edges=tuple(edges), kind=kind)


def metropolis_weights(g: Graph) -> np.ndarray:
    """Metropolis-Hastings mixing matrix of ``g``.

    Off-diagonal weight on an edge is ``min(1/(deg(i)+1), 1/(deg(j)+1))``;
    the diagonal takes whatever is left in the row.
    """
    deg = g.degrees
    W = np.zeros((g.n, g.n))
    for i, j in g.edges:
        w = min(1.0 / (deg[i] + 1), 1.0 / (deg[j] + 1))
        W[i, j] = W[j, i] = w
    W[np.diag_indices(g.n)] = 1.0 - W.sum(axis=1)
    W.setflags(write=False)
    return W


def pair_edge_matrix(i: int, j: int, n: int) -> np.ndarray:
    """Pairwise gossip matrix ``I - (e_i - e_j)(e_i - e_j)^T / 2``."""
    if i == j:
        raise IndexError(f"pair matrix needs distinct nodes, got i = j = {i}")
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"nodes ({i}, {j}) out of range for n={n}")
    Z = np.eye(n)
    Z[i, i] = Z[j, j] = Z[i, j] = Z[j, i] = 0.5
    return Z


@dataclass(frozen=True)
class MixingReport:
    """Outcome of :func:`validate_mixing`."""

    symmetry: float
    row_sum: float
    col_sum: float
    min_entry: float
    max_entry: float
    tol: float

    @property
    def symmetric(self) -> bool:
        return self.symmetry <= self.tol

    @property
    def doubly_stochastic(self) -> bool:
        return (
            self.row_sum <= self.tol
            and self.col_sum <= self.tol
            and self.min_entry >= -self.tol
            and self.max_entry <= 1.0 + self.tol
        )

    @property
    def passed(self) -> bool:
        return self.symmetric and self.doubly_stochastic

    def __bool__(self) -> bool:
        return self.passed


def validate_mixing(W: np.ndarray, tol: float = DEFAULT_TOL) -> MixingReport:
    """Check that ``W`` is symmetric, doubly stochastic and entrywise in [0, 1].

    Never raises on an invalid matrix; the report carries the violations.
    """
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValueError(f"mixing matrix must be square, got shape {W.shape}")
    return MixingReport(
        symmetry=float(np.max(np.abs(W - W.T))),
        row_sum=float(np.max(np.abs(W.sum(axis=1) - 1.0))),
        col_sum=float(np.max(np.abs(W.sum(axis=0) - 1.0))),
        min_entry=float(W.min()),
        max_entry=float(W.max()),
        tol=tol,
    )


def is_mixing(W: np.ndarray, tol: float = DEFAULT_TOL) -> bool:
    return validate_mixing(W, tol).passed


def read_edge_list(path: str | Path) -> Graph:
    """Read the ``n <count>`` header followed by one ``i j`` pair per line."""
    lines = [
        ln.strip()
        for ln in Path(path).read_text().splitlines()
        if ln.strip() and not ln.lstrip().startswith("#")
    ]
    if not lines:
        raise ValueError(f"{path}: empty edge list")
    head = lines[0].split()
    if len(head) != 2 or head[0] != "n":
        raise ValueError(f"{path}: first line must be 'n <count>', got {lines[0]!r}")
    n = int(head[1])
    edges = []
    for lineno, ln in enumerate(lines[1:], start=2):
        parts = ln.split()
        if len(parts) != 2:
            raise ValueError(f"{path}:{lineno}: expected 'i j', got {ln!r}")
        edges.append((int(parts[0]), int(parts[1])))
    return Graph.from_edges(n, edges)


def write_edge_list(g: Graph, path: str | Path) -> None:
    body = "\n".join(f"{i} {j}" for i, j in g.edges)
    Path(path).write_text(f"n {g.n}\n{body}\n" if body else f"n {g.n}\n")


def save_matrix_csv(W: np.ndarray, path: str | Path) -> None:
    # repr precision round-trips float64 exactly
    np.savetxt(path, np.asarray(W), delimiter=",", fmt="%.17g")


def load_matrix_csv(path: str | Path) -> np.ndarray:
    W = np.loadtxt(path, delimiter=",", ndmin=2)
    return W
