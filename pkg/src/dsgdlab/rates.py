"""Closed-form complexity expressions, evaluated with every hidden constant set to 1.

These are indicative curves for overlays and shape checks, not predictions of
absolute iteration counts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal

__all__ = [
    "RateParams",
    "NonConvexExtras",
    "Bound",
    "RegimeError",
    "BoundValidityError",
    "iteration_bound",
    "suboptimality_curve",
    "lower_bound_T",
    "lower_bound_valid_eps",
]

Regime = Literal["strongly-convex", "convex", "non-convex"]


class RegimeError(ValueError):
    pass


class BoundValidityError(ValueError):
    pass


@dataclass(frozen=True)
class RateParams:
    L: float
    mu: float = 0.0
    n: int = 1
    p: float = 1.0
    tau: float = 1
    sigma_bar2: float = 0.0
    zeta_bar2: float = 0.0
    R0: float = 1.0
    F0: float = 1.0

    def __post_init__(self) -> None:
        if not (self.L >= self.mu >= 0):
            raise ValueError(f"need L >= mu >= 0, got L={self.L}, mu={self.mu}")
        if not (0 < self.p <= 1):
            raise ValueError(f"need 0 < p <= 1, got {self.p}")
        if self.tau < 1 or self.n < 1:
            raise ValueError(f"need tau >= 1 and n >= 1, got tau={self.tau}, n={self.n}")
        if self.sigma_bar2 < 0 or self.zeta_bar2 < 0:
            raise ValueError("noise and heterogeneity levels must be >= 0")


@dataclass(frozen=True)
class NonConvexExtras:
    """Noise constants of the non-convex setting, supplied directly."""

    P: float = 0.0
    M: float = 0.0
    sigma_hat2: float = 0.0
    zeta_hat2: float = 0.0


@dataclass(frozen=True)
class Bound:
    total: float
    terms: tuple[float, float, float]
    names: tuple[str, str, str]

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.terms)) | {"total": self.total}


def _log_factor(eps: float) -> float:
    return max(1.0, math.log(1.0 / eps))


def iteration_bound(
    regime: Regime,
    params: RateParams,
    eps: float,
    extras: NonConvexExtras | None = None,
) -> Bound:
    """Iterations sufficient for accuracy ``eps`` in the given regime.

    Log factors are evaluated as ``max(1, ln(1/eps))``.
    """
    if eps <= 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    q = params
    sigma, zeta = math.sqrt(q.sigma_bar2), math.sqrt(q.zeta_bar2)
    if regime == "strongly-convex":
        if q.mu <= 0:
            raise RegimeError("strongly-convex regime needs mu > 0")
        terms = (
            q.sigma_bar2 / (q.mu * q.n * eps),
            math.sqrt(q.L) * (zeta * q.tau + sigma * math.sqrt(q.p * q.tau)) / (q.mu * q.p * math.sqrt(eps)),
            q.L * q.tau / (q.mu * q.p) * _log_factor(eps),
        )
        names = ("noise", "consensus", "optimization")
    elif regime == "convex":
        terms = (
            q.sigma_bar2 / (q.n * eps**2) * q.R0**2,
            math.sqrt(q.L) * (zeta * q.tau + sigma * math.sqrt(q.p * q.tau)) / (q.p * eps**1.5) * q.R0**2,
            q.L * q.tau / (q.p * eps) * q.R0**2,
        )
        names = ("noise", "consensus", "optimization")
    elif regime == "non-convex":
        x = extras or NonConvexExtras()
        s_hat, z_hat = math.sqrt(x.sigma_hat2), math.sqrt(x.zeta_hat2)
        scale = q.L * q.F0
        terms = (
            x.sigma_hat2 / (q.n * eps**2) * scale,
            (z_hat * q.tau * math.sqrt(x.M + 1) + s_hat * math.sqrt(q.p * q.tau)) / (q.p * eps**1.5) * scale,
            q.tau * math.sqrt((x.P + 1) * (x.M + 1)) / (q.p * eps) * scale,
        )
        names = ("noise", "consensus", "optimization")
    else:
        raise RegimeError(f"unknown regime {regime!r}")
    return Bound(total=sum(terms), terms=terms, names=names)


def suboptimality_curve(params: RateParams, T: float) -> Bound:
    """Strongly convex suboptimality after ``T`` iterations.

    ``p`` and ``tau`` enter only through ``p / tau``, which is formed once so the
    value is invariant under scaling both by the same factor.
    """
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    q = params
    if q.mu <= 0:
        raise RegimeError("suboptimality curve needs mu > 0")
    r = q.p / q.tau
    terms = (
        q.sigma_bar2 / (q.n * q.mu * T),
        q.L * (q.zeta_bar2 / r**2 + q.sigma_bar2 / r) / (q.mu**2 * T**2),
        q.L * q.R0**2 / r * math.exp(-q.mu * T * r / q.L),
    )
    return Bound(total=sum(terms), terms=terms, names=("noise", "consensus", "optimization"))


def lower_bound_valid_eps(zeta_bar: float, p: float) -> float:
    """Largest ``eps`` for which :func:`lower_bound_T` is claimed."""
    return zeta_bar**2 * (1.0 - p) / 16.0


def lower_bound_T(zeta_bar: float, p: float, eps: float) -> float:
    """``zeta_bar sqrt(1 - p) ln(1/eps) / (4 sqrt(eps) p)``.

    Raises:
        BoundValidityError: Outside ``0 < p < 1`` or for ``eps`` above the validity
            threshold ``zeta_bar^2 (1 - p) / 16``.
    """
    if not 0 < p < 1:
        raise BoundValidityError(f"lower bound needs 0 < p < 1, got {p}")
    if eps <= 0:
        raise BoundValidityError(f"eps must be > 0, got {eps}")
    limit = lower_bound_valid_eps(zeta_bar, p)
    if eps > limit:
        raise BoundValidityError(f"eps={eps:g} exceeds the validity threshold {limit:g}")
    return zeta_bar * math.sqrt(1.0 - p) * math.log(1.0 / eps) / (4.0 * math.sqrt(eps) * p)
