"""Mixing quality of single matrices and of whole schedules.

Two quantities are kept apart on purpose:

* ``spectral_gap(W) = 1 - max_{i>=2} |lambda_i(W)|``, the usual per-step gap of a
  fixed matrix;
* the expected consensus rate ``p`` of a schedule over windows of ``tau`` steps,
  ``1 - p = max_l lambda_max(E[M_l M_l^T])`` restricted to the complement of the
  all-ones vector, where ``M_l`` is the product of the mixing matrices of window
  ``l``. For a single symmetric ``W`` and ``tau = 1`` this is ``1 - lambda_2^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from . import _rng
from .schedule import MixingSchedule, window_offsets
from .topology import DEFAULT_TOL, validate_mixing

__all__ = [
    "ConsensusRate",
    "ContractionReport",
    "InvalidMixingError",
    "UnsupportedScheduleError",
    "spectral_gap",
    "second_eigenvalue",
    "consensus_rate",
    "window_product",
    "verify_contraction",
    "deflate",
    "pairwise_gossip_rate",
]

DEFAULT_TRIALS = 1000
DEFAULT_PROBE_DIM = 8


class InvalidMixingError(ValueError):
    pass


class UnsupportedScheduleError(ValueError):
    pass


def deflate(S: np.ndarray) -> np.ndarray:
    """Project ``S`` onto the complement of the all-ones vector (both sides)."""
    n = S.shape[0]
    P = np.eye(n) - np.full((n, n), 1.0 / n)
    out = P @ S @ P
    return 0.5 * (out + out.T)


def _top_eig(S: np.ndarray) -> tuple[float, np.ndarray]:
    vals, vecs = np.linalg.eigh(deflate(S))
    return float(vals[-1]), vecs[:, -1]


def second_eigenvalue(W: np.ndarray) -> float:
    """Largest-magnitude eigenvalue of ``W`` on the complement of the ones vector."""
    W = np.asarray(W, dtype=float)
    if W.shape[0] == 1:
        return 0.0
    vals = np.linalg.eigvalsh(deflate(W))
    # deflation puts a spurious 0 on the ones direction, which never wins a max |.|
    return float(np.max(np.abs(vals)))


def spectral_gap(W: np.ndarray, tol: float = DEFAULT_TOL) -> float:
    """``1 - |lambda_2|(W)`` for a valid (symmetric doubly stochastic) ``W``."""
    report = validate_mixing(W, tol)
    if not report.passed:
        raise InvalidMixingError(
            f"spectral_gap needs a symmetric doubly stochastic matrix "
            f"(symmetry={report.symmetry:.3g}, row_sum={report.row_sum:.3g}, "
            f"min_entry={report.min_entry:.3g})"
        )
    return 1.0 - second_eigenvalue(W)


@dataclass(frozen=True)
class ConsensusRate:
    p: float
    tau: int
    method: Literal["exact", "montecarlo"]
    trials: int = 0
    stderr: float = 0.0
    offset: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"p must lie in [0, 1], got {self.p}")
        if self.method == "exact" and self.stderr != 0.0:
            raise ValueError("exact rates carry no standard error")


def window_product(s: MixingSchedule, start: int, tau: int, seed: int) -> np.ndarray:
    """``W^(start) W^(start+1) ... W^(start+tau-1)``, the order the iterates see them."""
    M = s.sample(start, seed)
    for t in range(start + 1, start + tau):
        M = M @ s.sample(t, seed)
    return np.array(M)


def _exact_second_moment(s: MixingSchedule, start: int, tau: int) -> np.ndarray:
    S = np.eye(s.n)
    for t in range(start + tau - 1, start - 1, -1):
        S = s.expect(t, S)
    return S


def _clip01(x: float) -> float:
    return min(1.0, max(0.0, x))


def consensus_rate(
    s: MixingSchedule,
    tau: int = 1,
    method: Literal["exact", "montecarlo"] = "exact",
    trials: int = DEFAULT_TRIALS,
    seed: int = 0,
) -> ConsensusRate:
    """Expected consensus rate of ``s`` over windows of ``tau`` steps.

    The worst window alignment within one full cycle of the schedule is reported.
    ``montecarlo`` averages ``trials`` sampled window products per alignment and
    gives a delta-method standard error for the top eigenvalue.
    """
    if int(tau) != tau or tau < 1:
        raise ValueError(f"tau must be an integer >= 1, got {tau}")
    tau = int(tau)
    if s.n == 1:
        return ConsensusRate(p=1.0, tau=tau, method=method, trials=trials if method == "montecarlo" else 0)
    offsets = window_offsets(s, tau)

    if method == "exact":
        try:
            worst, worst_l = -math.inf, 0
            for ell in range(offsets):
                lam, _ = _top_eig(_exact_second_moment(s, ell * tau, tau))
                if lam > worst:
                    worst, worst_l = lam, ell
        except NotImplementedError as exc:
            raise UnsupportedScheduleError(
                f"no exact expectation for schedule {type(s).__name__}"
            ) from exc
        return ConsensusRate(p=_clip01(1.0 - worst), tau=tau, method="exact", offset=worst_l)

    if method != "montecarlo":
        raise ValueError(f"unknown method {method!r}")
    if trials < 2:
        raise ValueError("montecarlo needs trials >= 2")
    seeds = _rng.child_seeds(seed, trials)
    worst, worst_se, worst_l = -math.inf, 0.0, 0
    for ell in range(offsets):
        prods = [window_product(s, ell * tau, tau, sd) for sd in seeds]
        S = np.zeros((s.n, s.n))
        for M in prods:
            S += M @ M.T
        S /= trials
        lam, v = _top_eig(S)
        if s.is_random:
            q = np.array([float(np.sum((M.T @ v) ** 2)) for M in prods])
            se = float(np.std(q, ddof=1) / math.sqrt(trials))
        else:
            se = 0.0
        if lam > worst:
            worst, worst_se, worst_l = lam, se, ell
    return ConsensusRate(
        p=_clip01(1.0 - worst),
        tau=tau,
        method="montecarlo",
        trials=trials,
        stderr=worst_se,
        offset=worst_l,
    )


@dataclass(frozen=True)
class ContractionReport:
    """Empirical check of ``E||X M - Xbar||^2 <= (1 - p) ||X - Xbar||^2``."""

    claimed_p: float
    max_ratio: float
    stderr: float
    ratios: tuple[float, ...] = field(repr=False)
    atol: float = 1e-12

    @property
    def bound(self) -> float:
        return 1.0 - self.claimed_p

    @property
    def passed(self) -> bool:
        return self.max_ratio <= self.bound + 3.0 * self.stderr + self.atol

    def __bool__(self) -> bool:
        return self.passed


def _contraction_ratio(X: np.ndarray, M: np.ndarray) -> float:
    xbar = X.mean(axis=1, keepdims=True)
    denom = float(np.sum((X - xbar) ** 2))
    if denom == 0.0:
        return 0.0
    return float(np.sum((X @ M - xbar) ** 2)) / denom


def verify_contraction(
    s: MixingSchedule,
    tau: int,
    p: float,
    trials: int = 20,
    inner: int = 200,
    seed: int = 0,
    d: int = DEFAULT_PROBE_DIM,
    probes: Sequence[np.ndarray] = (),
    atol: float = 1e-12,
) -> ContractionReport:
    """Estimate the worst contraction ratio over random and supplied probe matrices.

    Each probe ``X`` (``trials`` Gaussian ``d x n`` draws plus any in ``probes``)
    gets a random window alignment and ``inner`` sampled windows; the check passes
    iff the largest mean ratio stays below ``1 - p`` plus three standard errors.
    Deterministic schedules need a single window sample.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"claimed p must lie in [0, 1], got {p}")
    n = s.n
    offsets = window_offsets(s, tau)
    reps = inner if s.is_random else 1
    Xs = [
        _rng.stream(seed, k, _rng.PROBE).standard_normal((d, n)) for k in range(trials)
    ]
    Xs += [np.atleast_2d(np.asarray(X, dtype=float)) for X in probes]
    best, best_se, all_means = -math.inf, 0.0, []
    for k, X in enumerate(Xs):
        ell = int(_rng.stream(seed, k, _rng.OFFSET).integers(0, offsets))
        sub = _rng.child_seeds(seed + k + 1, reps) if reps > 1 else [seed]
        r = np.array(
            [_contraction_ratio(X, window_product(s, ell * tau, tau, sd)) for sd in sub]
        )
        mean = float(r.mean())
        se = float(r.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0
        all_means.append(mean)
        if mean > best:
            best, best_se = mean, se
    return ContractionReport(
        claimed_p=p, max_ratio=best, stderr=best_se, ratios=tuple(all_means), atol=atol
    )


def pairwise_gossip_rate(g) -> float:
    """Closed-form rate of one uniformly random edge per step on graph ``g``.

    ``E[Z] = I - L / (2|E|)`` with ``L`` the graph Laplacian and ``Z`` idempotent,
    so ``p = lambda_2(L) / (2|E|)`` (the algebraic connectivity over twice the
    edge count).
    """
    if g.num_edges == 0:
        return 0.0
    lap = np.diag(g.degrees.astype(float)) - g.adjacency()
    lam = np.linalg.eigvalsh(lap)
    return float(lam[1]) / (2 * g.num_edges) if g.n > 1 else 1.0
