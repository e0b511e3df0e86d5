import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from subspace_memory.errors import DimensionMismatch, ValidationError, ZeroColumn
from subspace_memory.learner import ConstraintGraph
from subspace_memory.recall import (
    GLOBAL,
    LOCAL,
    MultiLevelNetwork,
    RecallParams,
    backward_pass,
    constraints_satisfied,
    correct,
    forward_pass,
    multilevel_correct,
)

from oracles import naive_backward, naive_forward, naive_matvec

# columns have pairwise distinct signed neighbourhoods; the all-ones pattern is a fixed point
W_HAND = np.array([[-1.0, -1, 0, 2], [-1, -1, 1, 1], [-1, 1, 0, 0]])


def _graph(W):
    W = np.asarray(W, dtype=float)
    return ConstraintGraph(W=W, residuals=np.zeros(W.shape[0]), norm_x=1.0)


def test_forward_on_codeword_is_zero():
    assert not forward_pass(W_HAND, np.ones(4)).any()


def test_forward_sign_map():
    assert forward_pass(np.array([[1.0, 0.0]]), np.array([2, 5])).tolist() == [-1]
    assert forward_pass(np.array([[-1.0, 0.0]]), np.array([2, 5])).tolist() == [1]
    assert forward_pass(np.array([[0.005, 0.0]]), np.array([1, 0])).tolist() == [0]
    # the band edge counts as satisfied
    assert forward_pass(np.array([[0.01, 0.0]]), np.array([1, 0])).tolist() == [0]


def test_forward_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        forward_pass(W_HAND, np.ones(3))


@pytest.mark.parametrize("seed", range(20))
def test_forward_backward_match_naive_loops(seed):
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((6, 9)) * (rng.random((6, 9)) < 0.6)
    W[0] += 0.1  # no empty column
    x = rng.integers(0, 4, 9)
    h = W @ x
    assert np.allclose(h, naive_matvec(W.tolist(), x.tolist()), rtol=0, atol=1e-12)
    y = forward_pass(W, x, 0.01)
    assert y.tolist() == naive_forward(W.tolist(), x.tolist(), 0.01)
    g = backward_pass(W, y)
    assert np.allclose(g, naive_backward(W.tolist(), y.tolist()), rtol=0, atol=1e-12)


def test_backward_cases():
    assert not backward_pass(W_HAND, np.zeros(3)).any()
    g = backward_pass(np.array([[1.0], [-1.0]]), np.array([1, -1]))
    assert g.tolist() == [1.0]
    with pytest.raises(ZeroColumn):
        backward_pass(np.array([[1.0, 0.0]]), np.array([1]))
    with pytest.raises(DimensionMismatch):
        backward_pass(W_HAND, np.zeros(2))


@settings(max_examples=1000, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_feedback_is_normalised(seed):
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((5, 7))
    y = rng.integers(-1, 2, 5)
    assert np.abs(backward_pass(W, y)).max() <= 1 + 1e-12


def test_satisfied_matches_max_norm():
    rng = np.random.default_rng(3)
    for _ in range(50):
        W = rng.standard_normal((4, 6)) * 0.01
        x = rng.integers(0, 3, 6)
        assert constraints_satisfied(W, x, 0.01) == (np.abs(W @ x).max() <= 0.01)


def test_zero_noise_exits_at_first_round():
    out = correct(W_HAND, np.ones(4, dtype=int), RecallParams(S=3))
    assert out.satisfied and out.iterations[LOCAL] == 1
    assert np.array_equal(out.pattern, np.ones(4))


def test_hand_built_graph_corrects_every_single_error():
    x = np.ones(4, dtype=np.int64)
    params = RecallParams(S=3)
    for j in range(4):
        for s in (-1, 1):
            noisy = x.copy()
            noisy[j] += s
            out = correct(W_HAND, noisy, params, t_max=20)
            assert out.satisfied
            assert np.array_equal(out.pattern, x), (j, s)


def test_first_update_opposes_noise():
    x = np.ones(4, dtype=np.int64)
    for j in range(4):
        for s in (-1, 1):
            noisy = x.copy()
            noisy[j] += s
            g = backward_pass(W_HAND, forward_pass(W_HAND, noisy))
            assert abs(g[j]) > 0.8 and np.sign(g[j]) == -s


def test_state_range_is_kept():
    rng = np.random.default_rng(0)
    W = rng.standard_normal((5, 8))
    params = RecallParams(S=3, phi=0.1)
    for _ in range(30):
        out = correct(W, rng.integers(0, 3, 8), params, t_max=15)
        assert out.pattern.min() >= 0 and out.pattern.max() <= 2
        assert out.iterations[LOCAL] <= 15


def test_tie_at_phi_does_not_move():
    # |g| equals phi exactly: no update
    W = np.array([[1.0, 0.25], [1.0, -0.25]])
    params = RecallParams(S=4, phi=1.0)
    out = correct(W, np.array([1, 1]), params, t_max=5)
    assert np.array_equal(out.pattern, [1, 1]) and not out.satisfied


def test_library_budget_default():
    params = RecallParams()
    assert params.budget(25) == 500
    assert params.budget(25, noise_weight=3) == 60
    assert RecallParams(t_max=7).budget(25, noise_weight=3) == 7
    with pytest.raises(ValidationError):
        RecallParams(phi=0)


def _two_block_net():
    local = _graph(W_HAND)
    glob = _graph(np.block([[W_HAND, np.zeros((3, 4))], [np.zeros((3, 4)), W_HAND]]))
    return MultiLevelNetwork([local, _graph(W_HAND)], glob, [(0, 4), (4, 8)])


def test_network_layout_validation():
    with pytest.raises(ValidationError):
        MultiLevelNetwork([_graph(W_HAND)], _graph(np.ones((1, 8))), [(0, 4), (4, 8)])
    with pytest.raises(ValidationError):
        MultiLevelNetwork([_graph(W_HAND), _graph(W_HAND)], _graph(np.ones((1, 8))),
                          [(0, 4), (5, 9)])


def test_separated_errors_resolved_locally():
    net = _two_block_net()
    x = np.ones(8, dtype=np.int64)
    noisy = x.copy()
    noisy[1] += 1
    noisy[6] -= 1
    out = multilevel_correct(net, noisy, RecallParams(S=3), t_max=40)
    assert out.level == LOCAL and out.satisfied
    assert np.array_equal(out.pattern, x)
    assert out.iterations[GLOBAL] == 0


def test_unresolved_block_invokes_global_level():
    net = _two_block_net()
    params = RecallParams(S=3)
    x = np.ones(8, dtype=np.int64)
    stuck = []
    for a, b in itertools.combinations(range(4), 2):
        for sa, sb in itertools.product((-1, 1), repeat=2):
            noisy = x.copy()
            noisy[a] += sa
            noisy[b] += sb
            if not correct(W_HAND, noisy[:4], params, t_max=40).satisfied:
                stuck.append(noisy)
    assert stuck
    for noisy in stuck:
        out = multilevel_correct(net, noisy, params, t_max=40)
        assert out.level == GLOBAL
        assert out.iterations[GLOBAL] >= 1


def test_clean_pattern_is_not_degraded():
    net = _two_block_net()
    x = np.ones(8, dtype=np.int64)
    out = multilevel_correct(net, x, RecallParams(S=3))
    assert out.level == LOCAL and np.array_equal(out.pattern, x)


def test_multilevel_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        multilevel_correct(_two_block_net(), np.ones(7), RecallParams(S=3))
