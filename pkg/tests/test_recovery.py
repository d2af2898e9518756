import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvxpref import admm, patterns, program, recovery
from cvxpref.errors import InputError
from conftest import small_enumerated


def one_group_patterns(d=2, P=1, n=3):
    return patterns.PatternSet(np.ones((P, n), dtype=bool), np.ones((P, d)), "enumerated")


def test_zero_solution_gives_empty_net():
    net = recovery.recover_network(np.zeros(4), one_group_patterns())
    assert net.m == 0
    assert recovery.forward(net, np.array([1.0, 2.0])) == 0.0


def test_single_group_split():
    net = recovery.recover_network(np.array([3.0, 4.0, 0.0, 0.0]), one_group_patterns())
    assert net.m == 1
    np.testing.assert_allclose(net.theta1[0], np.array([3.0, 4.0]) / np.sqrt(5.0))
    assert net.theta2[0] == pytest.approx(np.sqrt(5.0))
    np.testing.assert_allclose(net.theta1[0] * net.theta2[0], [3.0, 4.0])
    assert net.origin == ((0, 1),)


def test_w_group_gets_negative_output():
    net = recovery.recover_network(np.array([0.0, 0.0, 0.0, 2.0]), one_group_patterns())
    assert net.origin == ((0, -1),)
    assert net.theta2[0] == pytest.approx(-np.sqrt(2.0))


def test_prune_tolerance():
    u = np.array([1e-9, 0.0, 1.0, 0.0])
    assert recovery.recover_network(u, one_group_patterns()).m == 1
    assert recovery.recover_network(u, one_group_patterns(), prune_tol=1e-12).m == 2


def test_bad_solution_rejected():
    with pytest.raises(InputError):
        recovery.recover_network(np.zeros(3), one_group_patterns())
    with pytest.raises(InputError):
        recovery.recover_network(np.array([np.nan, 0, 0, 0]), one_group_patterns())


def test_forward_examples():
    net = recovery.TwoLayerNet(np.array([[1.0, 0.0]]), np.array([2.0]))
    assert recovery.forward(net, np.array([3.0, -5.0])) == 6.0
    net = recovery.TwoLayerNet(np.array([[-1.0, 0.0]]), np.array([2.0]))
    assert recovery.forward(net, np.array([3.0, -5.0])) == 0.0
    empty = recovery.TwoLayerNet(np.zeros((0, 2)), np.zeros(0))
    assert recovery.forward(empty, np.ones(2)) == 0.0
    with pytest.raises(InputError):
        recovery.forward(net, np.ones(3))


def test_policy_prob_examples():
    empty = recovery.TwoLayerNet(np.zeros((0, 1)), np.zeros(0))
    assert recovery.policy_prob(empty, np.ones(1), 1) == 0.5
    assert recovery.policy_prob(empty, np.ones(1), -1) == 0.5
    net = recovery.TwoLayerNet(np.array([[1.0]]), np.array([np.log(3.0)]))
    assert recovery.policy_prob(net, np.array([1.0]), 1) == pytest.approx(0.75, abs=1e-15)
    x = np.array([0.7])
    assert recovery.policy_prob(net, x, 1) + recovery.policy_prob(net, x, -1) == pytest.approx(1.0, abs=1e-15)
    with pytest.raises(InputError):
        recovery.policy_prob(net, x, 0)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 10**6), P=st.integers(1, 5), d=st.integers(1, 4))
def test_reconstruction_and_weight_decay(seed, P, d):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(2 * d * P)
    u[rng.random(2 * d * P) < 0.3] = 0.0
    ps = one_group_patterns(d=d, P=P)
    net = recovery.recover_network(u, ps, prune_tol=0.0)
    groups = u.reshape(2 * P, d)
    for row, out, (i, sign) in zip(net.theta1, net.theta2, net.origin):
        g = groups[i] if sign > 0 else -groups[P + i]
        np.testing.assert_allclose(row * out, g, atol=1e-12)
    kept = np.linalg.norm(groups, axis=1)
    assert net.weight_decay() == pytest.approx(kept.sum(), rel=1e-12, abs=1e-15)


@pytest.mark.parametrize("seed", [0, 1])
def test_forward_matches_F_on_solved_instance(seed):
    prog = small_enumerated(seed)
    sol = admm.solve(prog, admm.AdmmConfig(rho=0.1, max_iters=100000, stop_tol=1e-9))
    net = recovery.recover_network(sol.v, prog.patterns)
    assert recovery.cone_violations(net, prog.X, prog.patterns) == 0
    np.testing.assert_allclose(net.forward_batch(prog.X), program.apply_F(prog, sol.v), atol=1e-8)


def test_forward_matches_F_when_groups_are_in_their_cones():
    prog = small_enumerated(2)
    rng = np.random.default_rng(0)
    W = np.concatenate([prog.patterns.witnesses, prog.patterns.witnesses])
    u = (W * rng.uniform(0.0, 2.0, size=(W.shape[0], 1))).ravel()
    net = recovery.recover_network(u, prog.patterns)
    assert recovery.cone_violations(net, prog.X, prog.patterns) == 0
    np.testing.assert_allclose(net.forward_batch(prog.X), program.apply_F(prog, u), atol=1e-12)
    for x in prog.X:
        assert recovery.forward(net, x) == pytest.approx(net.forward_batch(x[None])[0], abs=1e-14)


def test_cone_violation_is_reported():
    prog = small_enumerated(2)
    W = np.concatenate([prog.patterns.witnesses, prog.patterns.witnesses])
    W[0] = -W[0]
    net = recovery.recover_network(W.ravel(), prog.patterns)
    assert recovery.cone_violations(net, prog.X, prog.patterns) == 1


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    t1 = rng.standard_normal((3, 4)).astype(np.float32).astype(np.float64)
    net = recovery.TwoLayerNet(t1, rng.standard_normal(3), ((0, 1), (2, -1), (1, 1)))
    path = recovery.save_network(net, tmp_path / "net.json")
    back = recovery.load_network(path)
    assert np.array_equal(back.theta1, net.theta1)
    assert np.array_equal(back.theta2, net.theta2)
    assert back.origin == net.origin
    empty = recovery.TwoLayerNet(np.zeros((0, 4)), np.zeros(0))
    back = recovery.load_network(recovery.save_network(empty, tmp_path / "empty.json"))
    assert back.m == 0 and back.d == 4
