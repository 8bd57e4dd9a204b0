import numpy as np
import pytest

from oracles import enumerate_optimal, grid_rewards_making_demo_optimal, policy_value
from smal.errors import InvalidModelError
from smal.mdp import (
    Action,
    AtomMovement,
    MdpModel,
    RewardConfig,
    build_mdp,
    learn_actions,
    learn_reward,
    learn_transitions,
    select_action,
    value_iteration,
)

F = AtomMovement.FORWARD
B = AtomMovement.BACKWARD
L = AtomMovement.TURN_LEFT
R_ = AtomMovement.TURN_RIGHT


def _chain_model(n, gamma=0.9):
    """n-state corridor: action 0 advances, action 1 stays; end absorbing."""
    actions = [Action((F,), 0), Action((L,), 1)]
    s_stream = list(range(n))
    a_stream = [0] * (n - 1)
    counts, _ = learn_transitions(s_stream, a_stream)
    model = build_mdp(n, actions, counts, gamma=gamma)
    return model, s_stream, a_stream


def _random_model(rng, S, A, gamma=0.9):
    T = rng.random((S, A, S)) + 0.05
    T /= T.sum(axis=2, keepdims=True)
    R = rng.normal(size=(S, A))
    return MdpModel(
        states=tuple(range(S)), actions=tuple(Action((F,) * (a + 1), a) for a in range(A)),
        T=T, R=R, gamma=gamma, seen=np.ones((S, A), dtype=bool),
    )


# ---------------------------------------------------------------------------
# action learning


def test_learn_actions_dedups_windows():
    actions, a_stream = learn_actions([F, F, L, L, F, F], l=2)
    assert [a.atoms for a in actions] == [(F, F), (L, L)]
    assert [a.id for a in actions] == [0, 1]
    assert a_stream == [0, 1, 0]


def test_learn_actions_empty_stream():
    actions, a_stream = learn_actions([], l=3)
    assert actions == [] and a_stream == []


def test_learn_actions_identical_atoms():
    actions, a_stream = learn_actions([B] * 9, l=3)
    assert len(actions) == 1
    assert a_stream == [0, 0, 0]


def test_learn_actions_drops_partial_window():
    actions, a_stream = learn_actions([F, B, L], l=2)
    assert len(a_stream) == 1
    assert actions[0].atoms == (F, B)


def test_learn_actions_replay_reconstructs_stream():
    stream = [F, B, L, R_, F, F, L, L, R_]
    l = 3
    actions, a_stream = learn_actions(stream, l)
    replay = [atom for a in a_stream for atom in actions[a].atoms]
    kept = len(stream) - len(stream) % l
    assert replay == stream[:kept]


def test_learn_actions_continuation_keeps_ids():
    first, _ = learn_actions([F, F, L, L], l=2)
    grown, a_stream = learn_actions([L, L, B, B], l=2, actions=first)
    assert [a.atoms for a in grown] == [(F, F), (L, L), (B, B)]
    assert a_stream == [1, 2]


def test_learn_actions_accepts_wire_names():
    actions, _ = learn_actions(["forward", "turn_left"], l=1)
    assert actions[0].atoms == (F,)
    assert actions[1].atoms == (L,)


# ---------------------------------------------------------------------------
# transitions


def test_transitions_deterministic_alternation():
    _, T = learn_transitions([0, 1, 0, 1], [0, 0, 0])
    assert T[(0, 0)] == {1: 1.0}
    assert T[(1, 0)] == {0: 1.0}


def test_transitions_split_evenly():
    _, T = learn_transitions([0, 1, 0, 2], [0, 0, 0])
    assert T[(0, 0)] == pytest.approx({1: 0.5, 2: 0.5})


def test_transitions_self_loop():
    _, T = learn_transitions([0, 0], [3])
    assert T[(0, 3)] == {0: 1.0}


def test_transitions_length_mismatch():
    with pytest.raises(ValueError):
        learn_transitions([0, 1], [0, 0])


def test_transition_rows_are_distributions():
    rng = np.random.default_rng(0)
    s = rng.integers(0, 5, size=60).tolist()
    a = rng.integers(0, 3, size=59).tolist()
    _, T = learn_transitions(s, a)
    for dist in T.values():
        assert sum(dist.values()) == pytest.approx(1.0, abs=1e-12)


def test_transitions_accumulate_across_demos():
    counts, _ = learn_transitions([0, 1], [0])
    counts2, T = learn_transitions([0, 2], [0], counts=counts)
    assert T[(0, 0)] == pytest.approx({1: 0.5, 2: 0.5})
    # the first counts object is untouched
    assert counts.triple_count(0, 0, 2) == 0
    assert counts2.triple_count(0, 0, 2) == 1


def test_build_mdp_completes_unseen_as_self_loops():
    model, _, _ = _chain_model(3)
    assert model.T[2, 0, 2] == 1.0  # advance never seen at the end
    assert model.T[1, 1, 1] == 1.0  # stay never demonstrated
    assert not model.seen[2, 0] and model.seen[0, 0]
    assert np.allclose(model.T.sum(axis=2), 1.0, atol=1e-12)


# ---------------------------------------------------------------------------
# value iteration


def test_value_iteration_myopic_at_gamma_zero():
    rng = np.random.default_rng(1)
    model = _random_model(rng, 4, 3, gamma=0.0)
    pol = value_iteration(model)
    assert list(pol.actions) == list(model.R.argmax(axis=1))
    assert np.allclose(pol.values, model.R.max(axis=1))


def test_value_iteration_two_state_chain():
    T = np.zeros((2, 1, 2))
    T[0, 0, 1] = 1.0
    T[1, 0, 1] = 1.0
    R = np.array([[0.0], [1.0]])
    model = MdpModel(
        states=(0, 1), actions=(Action((F,), 0),), T=T, R=R,
        gamma=0.5, seen=np.ones((2, 1), dtype=bool),
    )
    pol = value_iteration(model, tol=1e-12)
    assert pol.state_value(1) == pytest.approx(2.0, abs=1e-9)
    assert pol.state_value(0) == pytest.approx(1.0, abs=1e-9)


def test_value_iteration_matches_policy_enumeration():
    rng = np.random.default_rng(2)
    for trial in range(50):
        S = int(rng.integers(2, 5))
        A = int(rng.integers(2, 4))
        model = _random_model(rng, S, A, gamma=0.85)
        pol = value_iteration(model, tol=1e-12)
        v_star, _ = enumerate_optimal(model.T, model.R, model.gamma)
        assert np.allclose(pol.values, v_star, atol=1e-7), f"trial {trial}"
        v_greedy = policy_value(model.T, model.R, model.gamma, list(pol.actions))
        assert np.allclose(v_greedy, v_star, atol=1e-7), f"trial {trial}"


def test_value_iteration_contracts():
    rng = np.random.default_rng(3)
    model = _random_model(rng, 10, 3, gamma=0.9)
    v_star = np.asarray(value_iteration(model, tol=1e-13).values)
    V = np.zeros(10)
    err = np.abs(V - v_star).max()
    for _ in range(30):
        V = (model.R + model.gamma * (model.T @ V)).max(axis=1)
        err_next = np.abs(V - v_star).max()
        assert err_next <= model.gamma * err + 1e-9
        err = err_next


def test_value_iteration_rejects_bad_rows():
    model, _, _ = _chain_model(3)
    T = model.T.copy()
    T[0, 0] *= 0.7
    bad = MdpModel(states=model.states, actions=model.actions, T=T,
                   R=model.R, gamma=model.gamma, seen=model.seen)
    with pytest.raises(InvalidModelError):
        value_iteration(bad)


def test_value_iteration_flags_divergence():
    T = np.ones((1, 1, 1))
    model = MdpModel(states=(0,), actions=(Action((F,), 0),), T=T,
                     R=np.ones((1, 1)), gamma=1.0, seen=np.ones((1, 1), dtype=bool))
    with pytest.raises(InvalidModelError):
        value_iteration(model, max_sweeps=500)


# ---------------------------------------------------------------------------
# reward learning


def test_reward_chain_peaks_at_end_state():
    model, s_stream, a_stream = _chain_model(3)
    result = learn_reward(model, s_stream, a_stream, demo_end_states={2})
    assert not result.degenerate
    assert int(np.argmax(result.R)) == 2
    # every grid reward that keeps the demo optimal also peaks at the end
    grid = [0.0, 0.25, 0.5, 0.75, 1.0]
    demo_policy = {0: 0, 1: 0}
    valid = grid_rewards_making_demo_optimal(model.T, model.gamma, demo_policy,
                                             [0, 1], grid)
    assert valid
    for r in valid:
        assert int(np.argmax(r)) == 2


def test_reward_single_state_is_degenerate():
    counts, _ = learn_transitions([0, 0], [0])
    model = build_mdp(1, [Action((F,), 0), Action((L,), 1)], counts)
    result = learn_reward(model, [0, 0], [0], demo_end_states={0})
    assert result.degenerate
    assert np.all(result.R == 0.0)


def test_reward_single_action_is_degenerate():
    counts, _ = learn_transitions([0, 1, 2], [0, 0])
    model = build_mdp(3, [Action((F,), 0)], counts)
    result = learn_reward(model, [0, 1, 2], [0, 0], demo_end_states={2})
    assert result.degenerate


def test_reward_scaling_preserves_policy():
    model, s_stream, a_stream = _chain_model(4)
    r1 = learn_reward(model, s_stream, a_stream, demo_end_states={3},
                      cfg=RewardConfig(r_max=1.0))
    r2 = learn_reward(model, s_stream, a_stream, demo_end_states={3},
                      cfg=RewardConfig(r_max=2.0))
    assert np.allclose(r2.R, 2.0 * r1.R, atol=1e-6)
    m1 = MdpModel(states=model.states, actions=model.actions, T=model.T,
                  R=r1.R_sa, gamma=model.gamma, seen=model.seen)
    m2 = MdpModel(states=model.states, actions=model.actions, T=model.T,
                  R=r2.R_sa, gamma=model.gamma, seen=model.seen)
    assert value_iteration(m1).actions == value_iteration(m2).actions


def test_reward_makes_demo_optimal_on_chain_family():
    for n in range(3, 7):
        model, s_stream, a_stream = _chain_model(n)
        result = learn_reward(model, s_stream, a_stream, demo_end_states={n - 1})
        refit = MdpModel(states=model.states, actions=model.actions, T=model.T,
                         R=result.R_sa, gamma=model.gamma, seen=model.seen)
        pol = value_iteration(refit, tol=1e-12)
        for s in result.pi_E:
            assert pol.action(s) == result.pi_E[s], f"chain {n}, state {s}"
        assert int(np.argmax(result.R)) == n - 1


def test_reward_lift_copies_state_reward():
    model, s_stream, a_stream = _chain_model(3)
    result = learn_reward(model, s_stream, a_stream, demo_end_states={2})
    assert result.R_sa.shape == (3, 2)
    assert np.array_equal(result.R_sa[:, 0], result.R)
    assert np.array_equal(result.R_sa[:, 1], result.R)


def test_reward_majority_vote_breaks_ties_low():
    # state 0 leaves by action 0 once and action 1 once: tie -> action 0
    actions = [Action((F,), 0), Action((B,), 1)]
    counts, _ = learn_transitions([0, 1, 0, 1], [0, 1, 0])
    model = build_mdp(2, actions, counts)
    result = learn_reward(model, [0, 1, 0, 1], [0, 1, 0], demo_end_states={1})
    assert result.pi_E[0] == 0


def test_reward_deterministic():
    model, s_stream, a_stream = _chain_model(5)
    r1 = learn_reward(model, s_stream, a_stream, demo_end_states={4})
    r2 = learn_reward(model, s_stream, a_stream, demo_end_states={4})
    assert np.array_equal(r1.R, r2.R)


# ---------------------------------------------------------------------------
# action selection


def _policy_fixture():
    model, s_stream, a_stream = _chain_model(3)
    reward = learn_reward(model, s_stream, a_stream, demo_end_states={2})
    model = MdpModel(states=model.states, actions=model.actions, T=model.T,
                     R=reward.R_sa, gamma=model.gamma, seen=model.seen)
    return model, value_iteration(model)


def test_select_action_looks_up_policy():
    model, pol = _policy_fixture()
    act = select_action(model, pol, 0)
    assert act is model.actions[pol.action(0)]
    assert select_action(model, pol, 0) is act


def test_select_action_unknown_state_without_fallback():
    model, pol = _policy_fixture()
    with pytest.raises(KeyError):
        select_action(model, pol, 2)  # end state: nothing demonstrated
    with pytest.raises(KeyError):
        select_action(model, pol, 7)


def test_select_action_falls_back_by_mass(caplog):
    model, pol = _policy_fixture()
    masses = np.array([0.2, 0.9, 0.4])
    with caplog.at_level("WARNING"):
        act = select_action(model, pol, 2, fallback_masses=masses)
    assert act is model.actions[pol.action(1)]
    assert any("borrowing" in r.message for r in caplog.records)
