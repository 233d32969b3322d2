"""Quadratic test objectives with a closed-form optimum.

Worker ``i`` (0-indexed) holds ``f_i(x) = 1/2 ||a_i x - b_i||^2`` with a scalar
curvature ``a_i``. Stacking the ``b_i`` as the columns of a ``d x n`` matrix
matches the iterate layout used by the engine.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .consensus import deflate

__all__ = [
    "QuadraticProblem",
    "LowerBoundInstance",
    "DegenerateInstanceError",
    "make_quadratic",
    "make_lower_bound_instance",
    "benchmark_curvatures",
    "load_b_csv",
]


class DegenerateInstanceError(ValueError):
    pass


def benchmark_curvatures(n: int) -> np.ndarray:
    """``a_i = i / sqrt(n)`` for 1-based ``i``, so ``a_i^2 = i^2 / n``."""
    return np.arange(1, n + 1) / math.sqrt(n)


@dataclass(frozen=True, eq=False)
class QuadraticProblem:
    """Distributed least squares with isotropic Gaussian gradient noise.

    Attributes:
        a: Per-worker curvature scalars, shape ``(n,)``.
        b: Targets, shape ``(d, n)``; column ``i`` belongs to worker ``i``.
        sigma_bar2: Expected squared norm of the additive gradient noise.
        zeta_bar2_target: Heterogeneity the targets were sampled for (informational).
    """

    a: np.ndarray
    b: np.ndarray
    sigma_bar2: float = 0.0
    zeta_bar2_target: float = float("nan")
    x_star: np.ndarray = field(init=False)
    zeta_bar2_measured: float = field(init=False)

    def __post_init__(self) -> None:
        a = np.array(self.a, dtype=float).reshape(-1)
        b = np.array(self.b, dtype=float)
        if b.ndim == 1:
            b = b.reshape(1, -1)
        if b.shape[1] != a.shape[0]:
            raise ValueError(f"b has {b.shape[1]} columns but there are {a.shape[0]} workers")
        if np.any(a == 0):
            raise ValueError("curvatures must be non-zero")
        if self.sigma_bar2 < 0:
            raise ValueError("sigma_bar2 must be >= 0")
        for arr in (a, b):
            arr.setflags(write=False)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        x_star = (b @ a) / float(a @ a)
        x_star.setflags(write=False)
        object.__setattr__(self, "x_star", x_star)
        object.__setattr__(self, "zeta_bar2_measured", self.measure_hetero()[0])

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def d(self) -> int:
        return self.b.shape[0]

    @property
    def L(self) -> float:
        """Largest per-worker smoothness constant."""
        return float(np.max(self.a**2))

    @property
    def mu(self) -> float:
        """Curvature of the average objective (its Hessian is ``mu * I``)."""
        return float(np.mean(self.a**2))

    def _check_worker(self, i: int) -> None:
        if not 0 <= i < self.n:
            raise IndexError(f"worker {i} out of range for n={self.n}")

    def grad(self, i: int, x: np.ndarray) -> np.ndarray:
        self._check_worker(i)
        return self.a[i] ** 2 * np.asarray(x, dtype=float) - self.a[i] * self.b[:, i]

    def grads(self, X: np.ndarray) -> np.ndarray:
        """All workers' exact gradients at once; ``X`` is ``d x n`` (or batched ``... x d x n``)."""
        return X * (self.a**2) - self.a * self.b

    def noise(self, rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
        """Gaussian noise with per-coordinate variance ``sigma_bar2 / d``."""
        return rng.standard_normal(shape) * math.sqrt(self.sigma_bar2 / self.d)

    def stoch_grad(self, i: int, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        g = self.grad(i, x)
        if self.sigma_bar2 == 0.0:
            return g
        return g + self.noise(rng, (self.d,))

    def f(self, x: np.ndarray) -> float:
        r = np.asarray(x, dtype=float)[:, None] * self.a - self.b
        return 0.5 * float(np.sum(r**2)) / self.n

    def f_gap(self, x: np.ndarray) -> float:
        """``f(x) - f*``, evaluated through the exact quadratic form to avoid cancellation."""
        diff = np.asarray(x, dtype=float) - self.x_star
        return 0.5 * self.mu * float(diff @ diff)

    def measure_hetero(self) -> tuple[float, np.ndarray]:
        """``(zeta_bar2, zeta_i^2)`` with ``zeta_i^2 = ||grad f_i(x*)||^2``."""
        x_star = (self.b @ self.a) / float(self.a @ self.a)
        G = self.grads(x_star[:, None])
        per_node = np.sum(G**2, axis=0)
        return float(per_node.mean()), per_node

    def with_sigma(self, sigma_bar2: float) -> "QuadraticProblem":
        return QuadraticProblem(self.a, self.b, sigma_bar2, self.zeta_bar2_target)

    def save_b_csv(self, path: str | Path) -> None:
        np.savetxt(path, self.b, delimiter=",", fmt="%.17g")


def load_b_csv(path: str | Path, a: np.ndarray | None = None, sigma_bar2: float = 0.0) -> QuadraticProblem:
    """Rebuild a problem from an exported ``b`` matrix (default curvatures ``i / sqrt(n)``)."""
    b = np.loadtxt(path, delimiter=",", ndmin=2)
    a = benchmark_curvatures(b.shape[1]) if a is None else a
    return QuadraticProblem(a, b, sigma_bar2)


def make_quadratic(
    n: int,
    d: int,
    zeta_bar2: float,
    sigma_bar2: float = 0.0,
    seed: int = 0,
    exact: bool = False,
) -> QuadraticProblem:
    """Distributed least squares with curvatures ``a_i^2 = i^2 / n``.

    Targets are drawn as ``b_i ~ N(0, s_i^2 I_d)`` with
    ``s_i^2 = zeta_bar2 * n / (i^2 d)``, which makes ``E||a_i b_i||^2 = zeta_bar2``
    for every worker, so the realized heterogeneity scatters around
    ``zeta_bar2``. With ``exact=True`` the targets are rescaled so that the
    realized value equals ``zeta_bar2``.
    """
    if n < 1 or d < 1:
        raise ValueError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    if zeta_bar2 < 0 or sigma_bar2 < 0:
        raise ValueError("zeta_bar2 and sigma_bar2 must be >= 0")
    a = benchmark_curvatures(n)
    idx = np.arange(1, n + 1)
    scale = np.sqrt(zeta_bar2 * n / (idx**2 * d))
    z = np.random.default_rng(seed).standard_normal((d, n))
    b = z * scale
    prob = QuadraticProblem(a, b, sigma_bar2, zeta_bar2)
    if exact and zeta_bar2 > 0:
        if prob.zeta_bar2_measured == 0.0:
            raise DegenerateInstanceError("cannot rescale: realized heterogeneity is zero")
        b = b * math.sqrt(zeta_bar2 / prob.zeta_bar2_measured)
        prob = QuadraticProblem(a, b, sigma_bar2, zeta_bar2)
    return prob


@dataclass(frozen=True, eq=False)
class LowerBoundInstance:
    """Scalar instance ``f_i(x) = (x - y_i)^2 / 2`` started on an eigenvector of ``W``.

    ``x0`` is the eigenvector of the second largest eigenvalue, scaled so that the
    realized heterogeneity ``mean_i (x* - y_i)^2`` equals ``zeta_bar2``, and
    ``y = 1 + x0``; hence ``x* = 1``.
    """

    W: np.ndarray
    x0: np.ndarray
    y: np.ndarray
    lambda2: float
    zeta_bar2: float

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> float:
        """Consensus rate implied by the instance, ``1 - lambda_2^2``."""
        return 1.0 - self.lambda2**2

    def problem(self) -> QuadraticProblem:
        return QuadraticProblem(np.ones(self.n), self.y.reshape(1, -1), 0.0, self.zeta_bar2)

    def init(self) -> np.ndarray:
        return self.x0.reshape(1, -1).copy()


def make_lower_bound_instance(W: np.ndarray, zeta_bar: float, tol: float = 1e-12) -> LowerBoundInstance:
    """Build the hard instance for a fixed mixing matrix.

    Raises:
        DegenerateInstanceError: If ``n == 1`` or the second largest eigenvalue is
            not positive (e.g. the complete-graph matrix, where ``p = 1``).
    """
    W = np.array(W, dtype=float)
    n = W.shape[0]
    if n < 2:
        raise DegenerateInstanceError("lower-bound instance needs n > 1")
    vals, vecs = np.linalg.eigh(deflate(W))
    lam2 = float(vals[-1])
    if lam2 <= tol:
        raise DegenerateInstanceError(
            f"second largest eigenvalue is {lam2:.3g}; the bound needs p < 1"
        )
    v = vecs[:, -1]
    v = v - v.mean()
    v /= np.linalg.norm(v)
    first = np.flatnonzero(np.abs(v) > 1e-12)[0]
    if v[first] < 0:
        v = -v
    x0 = v * math.sqrt(n) * zeta_bar
    y = 1.0 + x0
    for arr in (W, x0, y):
        arr.setflags(write=False)
    return LowerBoundInstance(W=W, x0=x0, y=y, lambda2=lam2, zeta_bar2=float(zeta_bar) ** 2)
