from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dsgdlab.engine import (
    Constant,
    DivergenceError,
    InverseTime,
    Trace,
    avg_sq_distance,
    consensus_distance,
    first_crossing,
    initial_iterates,
    run,
)
from dsgdlab.problem import make_lower_bound_instance, make_quadratic
from dsgdlab.schedule import (
    FiniteMixture,
    Fixed,
    LocalSGD,
    LooplessLocal,
    PairwiseRandom,
    Periodic,
    RepeatedPairwise,
)
from dsgdlab.topology import build_topology, metropolis_weights

N = 9
RING = build_topology("ring", N)
W_RING = metropolis_weights(RING)
W_TORUS = metropolis_weights(build_topology("torus2d", N))


def schedules():
    return [
        Fixed(W_RING),
        LocalSGD(W_RING, 3),
        LooplessLocal(W_TORUS, 2),
        PairwiseRandom(RING),
        RepeatedPairwise(RING, 2),
        FiniteMixture([W_RING, W_TORUS], [0.4, 0.6]),
        Periodic([W_RING, W_TORUS]),
    ]


@settings(max_examples=40, deadline=None)
@given(X=st.lists(st.floats(-1e3, 1e3), min_size=12, max_size=12), c=st.floats(-10, 10))
def test_pythagorean_identity(X, c):
    X = np.array(X).reshape(3, 4)
    x_star = np.full(3, c)
    xbar = X.mean(axis=1)
    lhs = avg_sq_distance(X, x_star)
    rhs = consensus_distance(X) + float(np.sum((xbar - x_star) ** 2))
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_consensus_distance_zero_at_consensus():
    X = np.tile(np.arange(3.0)[:, None], (1, 5))
    assert consensus_distance(X) == 0.0


@pytest.mark.parametrize("k", range(7))
def test_average_preserved_every_step(k):
    prob = make_quadratic(N, 4, 10.0, sigma_bar2=5.0, seed=1)
    tr = run(prob, schedules()[k], 300, 0.01, init="ones", seed=3)
    # drift is measured relative to the post-gradient average, scaled by its size
    assert tr.max_average_drift <= 1e-12 * max(1.0, np.abs(tr.final).max())


def test_pythagorean_identity_along_trace():
    prob = make_quadratic(N, 4, 10.0, sigma_bar2=1.0, seed=1)
    tr = run(prob, Fixed(W_RING), 50, 0.02, init="ones")
    X = tr.final
    xbar = X.mean(axis=1)
    assert tr.dist2[-1] == pytest.approx(tr.xi[-1] + np.sum((xbar - prob.x_star) ** 2), rel=1e-12)


def test_trace_rows_and_cadence():
    prob = make_quadratic(N, 2, 1.0)
    tr = run(prob, Fixed(W_RING), 10, 0.1, cadence=3)
    assert list(tr.t) == [0, 3, 6, 9, 10]
    assert len(run(prob, Fixed(W_RING), 9, 0.1, cadence=3)) == 4


def test_zero_steps_has_only_initial_row():
    prob = make_quadratic(N, 2, 1.0)
    tr = run(prob, Fixed(W_RING), 0, 0.1, init="ones")
    assert list(tr.t) == [0]


def test_runs_are_reproducible():
    prob = make_quadratic(N, 3, 5.0, sigma_bar2=2.0)
    a = run(prob, PairwiseRandom(RING), 100, 0.05, seed=8)
    b = run(prob, PairwiseRandom(RING), 100, 0.05, seed=8)
    c = run(prob, PairwiseRandom(RING), 100, 0.05, seed=9)
    np.testing.assert_array_equal(a.dist2, b.dist2)
    assert not np.array_equal(a.dist2, c.dist2)


def test_skip_identity_is_bit_identical():
    prob = make_quadratic(N, 3, 5.0, sigma_bar2=2.0)
    for s in (LocalSGD(W_RING, 4), LooplessLocal(W_RING, 3)):
        a = run(prob, s, 200, 0.05, seed=2)
        b = run(prob, s, 200, 0.05, seed=2, skip_identity=True)
        np.testing.assert_array_equal(a.final, b.final)
        np.testing.assert_array_equal(a.dist2, b.dist2)


def test_complete_graph_equals_centralized_gd():
    prob = make_quadratic(N, 3, 5.0)
    W = np.full((N, N), 1 / N)
    tr = run(prob, Fixed(W), 30, 0.05, init="ones")
    x = np.ones(3)
    for _ in range(30):
        x = x - 0.05 * np.mean([prob.grad(i, x) for i in range(N)], axis=0)
    np.testing.assert_allclose(tr.final, np.tile(x[:, None], (1, N)), atol=1e-12)


def test_noiseless_homogeneous_converges_linearly():
    prob = make_quadratic(N, 3, 0.0)
    tr = run(prob, Fixed(W_RING), 400, 0.5 / prob.L, init="ones")
    logs = np.log(tr.dist2[1:])
    assert np.all(np.diff(logs) < 0)


def test_noise_plateau_grows_with_stepsize():
    prob = make_quadratic(N, 5, 0.0, sigma_bar2=10.0)
    lo = run(prob, Fixed(W_RING), 3000, 0.005, init="ones", cadence=100).dist2[-10:].mean()
    hi = run(prob, Fixed(W_RING), 3000, 0.05, init="ones", cadence=100).dist2[-10:].mean()
    assert hi > 2 * lo


def test_eigenvector_instance_pure_gossip():
    inst = make_lower_bound_instance(W_RING, 1.0)
    # gossip alone on the eigenvector start shrinks the consensus distance by lambda2^2 per step
    prob = inst.problem()
    tr = run(prob, Fixed(W_RING), 20, InverseTime(1e-300, 1.0), init=inst.init())
    ratio = tr.xi[1:] / tr.xi[:-1]
    np.testing.assert_allclose(ratio, inst.lambda2**2, rtol=1e-9)


def test_divergence_detected():
    prob = make_quadratic(N, 2, 1.0)
    with pytest.raises(DivergenceError):
        run(prob, Fixed(W_RING), 10_000, 10.0, init="ones")


def test_inverse_time_stepsize():
    s = InverseTime(2.0, 4.0)
    assert s.at(0) == 0.5 and s.at(4) == 0.25
    with pytest.raises(ValueError):
        InverseTime(1.0, 0.5)
    with pytest.raises(ValueError):
        Constant(0.0)


def test_initial_iterates_forms():
    prob = make_quadratic(4, 3, 1.0)
    assert np.all(initial_iterates(prob) == 0)
    assert np.all(initial_iterates(prob, "ones") == 1)
    np.testing.assert_array_equal(initial_iterates(prob, [1, 2, 3])[:, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        initial_iterates(prob, np.zeros((2, 2)))
    with pytest.raises(ValueError):
        initial_iterates(prob, "twos")


def test_dimension_mismatch():
    prob = make_quadratic(5, 2, 1.0)
    with pytest.raises(ValueError):
        run(prob, Fixed(W_RING), 1, 0.1)


def test_trace_csv_round_trip(tmp_path):
    prob = make_quadratic(N, 2, 3.0, sigma_bar2=1.0)
    tr = run(prob, Fixed(W_RING), 20, 0.05, init="ones", cadence=4, seed=5)
    path = tmp_path / "trace.csv"
    tr.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# dsgdlab trace v")
    assert lines[1] == "t,xi,dist2,fgap"
    back = Trace.from_csv(path)
    np.testing.assert_array_equal(back.t, tr.t)
    np.testing.assert_array_equal(back.dist2, tr.dist2)
    np.testing.assert_array_equal(back.fgap, tr.fgap)
    assert back.meta["seed"] == 5
    assert (tmp_path / "trace.meta.yaml").exists()


@pytest.mark.parametrize("sched", [Fixed(W_RING), PairwiseRandom(RING)], ids=["fixed", "pairwise"])
def test_first_crossing_agrees_with_run(sched):
    prob = make_quadratic(N, 3, 2.0, sigma_bar2=0.5, seed=2)
    eps, eta = 0.05, 0.02
    res = first_crossing(prob, sched, [eta], eps, 5000, seeds=[4], init="ones")
    tr = run(prob, sched, int(res.T[0]) + 1, eta, init="ones", seed=4)
    assert res.status == ["reached"]
    assert tr.dist2[res.T[0]] <= eps
    assert np.all(tr.dist2[: res.T[0]] > eps)


def test_first_crossing_averages_over_seeds():
    prob = make_quadratic(N, 3, 2.0, sigma_bar2=0.5, seed=2)
    eps, eta, seeds = 0.05, 0.02, [0, 1, 2]
    res = first_crossing(prob, Fixed(W_RING), [eta], eps, 5000, seeds=seeds, init="ones")
    T = int(res.T[0])
    traces = [run(prob, Fixed(W_RING), T, eta, init="ones", seed=s).dist2 for s in seeds]
    mean = np.mean(traces, axis=0)
    assert mean[T] <= eps and np.all(mean[:T] > eps)


def test_first_crossing_statuses():
    prob = make_quadratic(N, 2, 0.0)
    res = first_crossing(prob, Fixed(W_RING), [1e-6, 0.1, 50.0], 1e-3, 2000, init="ones")
    assert res.status == ["not_reached", "reached", "diverged"]
    pruned = first_crossing(prob, Fixed(W_RING), [1e-6, 0.1], 1e-3, 2000, init="ones", prune=True)
    assert pruned.status == ["pruned", "reached"]


def test_first_crossing_at_start():
    prob = make_quadratic(N, 2, 0.0)
    res = first_crossing(prob, Fixed(W_RING), [0.1], 1e-3, 100)
    assert res.T[0] == 0 and res.status == ["reached"]
