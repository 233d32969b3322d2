from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsgdlab.rates import (
    BoundValidityError,
    NonConvexExtras,
    RateParams,
    RegimeError,
    iteration_bound,
    lower_bound_T,
    lower_bound_valid_eps,
    suboptimality_curve,
)

BASE = RateParams(L=4.0, mu=0.5, n=25, p=0.04, tau=1, sigma_bar2=2.0, zeta_bar2=10.0, R0=3.0, F0=5.0)


def with_(**kw) -> RateParams:
    return RateParams(**{**BASE.__dict__, **kw})


def test_linear_term_only_without_noise():
    q = RateParams(L=4.0, mu=0.5)
    b = iteration_bound("strongly-convex", q, 1e-4)
    assert b.total == pytest.approx(8.0 * math.log(1e4))
    assert b.terms[:2] == (0.0, 0.0)


def test_log_factor_floor():
    q = RateParams(L=4.0, mu=0.5)
    assert iteration_bound("strongly-convex", q, 0.9).total == pytest.approx(8.0)


def test_noise_term_dominates_as_eps_shrinks():
    ratios = [iteration_bound("strongly-convex", BASE, eps) for eps in (1e-4, 1e-8, 1e-12)]
    shares = [b.terms[0] / b.total for b in ratios]
    assert shares[0] < shares[1] < shares[2] and shares[2] > 0.99


@settings(max_examples=50)
@given(n=st.integers(1, 10_000))
def test_doubling_n_halves_first_term(n):
    a = iteration_bound("strongly-convex", with_(n=n), 1e-5).terms[0]
    b = iteration_bound("strongly-convex", with_(n=2 * n), 1e-5).terms[0]
    assert b == a / 2


def test_strongly_convex_requires_mu():
    with pytest.raises(RegimeError):
        iteration_bound("strongly-convex", with_(mu=0.0), 1e-3)


def test_monotonicity():
    eps = 1e-5

    def total(**kw):
        return iteration_bound("strongly-convex", with_(**kw), eps).total

    assert total(p=0.1) < total(p=0.05)
    assert total(tau=2) > total(tau=1)
    assert total(zeta_bar2=20.0) > total(zeta_bar2=10.0)
    assert total(sigma_bar2=4.0) > total(sigma_bar2=2.0)


def test_convex_scales_with_R0_squared():
    a = iteration_bound("convex", with_(R0=1.0), 1e-3).total
    b = iteration_bound("convex", with_(R0=3.0), 1e-3).total
    assert b == pytest.approx(9 * a)


def test_non_convex_extras():
    x = NonConvexExtras(P=1.0, M=3.0, sigma_hat2=4.0, zeta_hat2=9.0)
    b = iteration_bound("non-convex", BASE, 1e-2, x)
    scale = BASE.L * BASE.F0
    assert b.terms[0] == pytest.approx(4.0 / (25 * 1e-4) * scale)
    assert b.terms[2] == pytest.approx(math.sqrt(2 * 4) / (0.04 * 1e-2) * scale)


def test_invalid_params():
    with pytest.raises(ValueError):
        RateParams(L=1.0, mu=2.0)
    with pytest.raises(ValueError):
        RateParams(L=1.0, p=0.0)
    with pytest.raises(ValueError):
        iteration_bound("strongly-convex", BASE, 0.0)
    with pytest.raises(RegimeError):
        iteration_bound("weird", BASE, 0.1)


@settings(max_examples=100)
@given(c=st.sampled_from([0.5, 2.0, 4.0, 0.25]), T=st.floats(1, 1e6))
def test_suboptimality_depends_on_p_over_tau_only(c, T):
    a = suboptimality_curve(with_(p=0.2, tau=4), T)
    b = suboptimality_curve(with_(p=0.2 * c, tau=4 * c), T)
    assert a.total == b.total


def test_suboptimality_pure_exponential():
    q = RateParams(L=2.0, mu=1.0, p=0.5, tau=1, R0=1.0)
    b = suboptimality_curve(q, 10)
    assert b.total == pytest.approx(2.0 / 0.5 * math.exp(-1.0 * 10 * 0.5 / 2.0))


def test_suboptimality_tail():
    T = 1e9
    assert suboptimality_curve(BASE, T).total * T == pytest.approx(BASE.sigma_bar2 / (BASE.n * BASE.mu), rel=1e-3)


def test_lower_bound_worked_value():
    assert lower_bound_T(1.0, 0.5, 0.01) == pytest.approx(math.sqrt(0.5) * math.log(100) / (4 * 0.1 * 0.5))
    assert lower_bound_T(1.0, 0.5, 0.01) == pytest.approx(16.28, abs=0.01)


def test_lower_bound_validity():
    assert lower_bound_valid_eps(2.0, 0.5) == pytest.approx(4 * 0.5 / 16)
    with pytest.raises(BoundValidityError):
        lower_bound_T(1.0, 0.5, 0.1)
    with pytest.raises(BoundValidityError):
        lower_bound_T(1.0, 1.0, 1e-3)
    with pytest.raises(BoundValidityError):
        lower_bound_T(1.0, 0.0, 1e-3)


def test_lower_bound_halving_eps():
    ratio = lower_bound_T(1.0, 0.5, 1e-12) / lower_bound_T(1.0, 0.5, 2e-12)
    assert ratio == pytest.approx(math.sqrt(2) * math.log(1e12) / math.log(5e11))


def test_lower_bound_vanishes_as_p_to_one():
    assert lower_bound_T(1.0, 1 - 1e-12, 1e-14) < 1e-3 * lower_bound_T(1.0, 0.5, 1e-14)


def test_bound_breakdown_dict():
    d = iteration_bound("strongly-convex", BASE, 1e-3).as_dict()
    assert set(d) == {"noise", "consensus", "optimization", "total"}
