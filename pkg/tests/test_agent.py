import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from actiongram.agent import (
    AbandonShipTracker,
    ActionSet,
    Agent,
    LinearQ,
    TabularQ,
    abandon_check,
    argmax,
    divergence,
    double_q_target,
    execute_action,
    pick_action,
    q_update,
)
from actiongram.env import Hanoi
from actiongram.grammar import MacroAction
from actiongram.replay import Experience
from conftest import letters

GAMMA = 0.9


class Chain:
    """States 0..n-1; action 0 left, 1 right; reaching n-1 pays 1 and ends."""

    def __init__(self, n):
        self.n = n

    def step(self, s, a):
        t = max(0, s - 1) if a == 0 else s + 1
        done = t == self.n - 1
        return t, (1.0 if done else 0.0), done


def chain_oracle(n, macro=None):
    """Value iteration; a macro is a primitive sequence scored with n-step returns."""
    env = Chain(n)
    actions = [(0,), (1,)] + ([tuple(macro)] if macro else [])
    V = np.zeros(n)
    for _ in range(2000):
        Q = np.zeros((n, len(actions)))
        for s in range(n - 1):
            for i, seq in enumerate(actions):
                ret, disc, t, done = 0.0, 1.0, s, False
                for a in seq:
                    t, r, done = env.step(t, a)
                    ret += disc * r
                    disc *= GAMMA
                    if done:
                        break
                Q[s, i] = ret + (0.0 if done else disc * V[t])
        V_new = np.append(Q[:-1].max(axis=1), 0.0)
        if np.max(abs(V_new - V)) < 1e-12:
            break
        V = V_new
    return Q


def chain_experiences(n, macro=None):
    env = Chain(n)
    out = []
    for s in range(n - 1):
        for a in (0, 1):
            t, r, done = env.step(s, a)
            out.append(Experience(s, a, r, t, done, 1))
        if macro:
            ret, disc, t, done, k = 0.0, 1.0, s, False, 0
            for a in macro:
                t, r, done = env.step(t, a)
                ret += disc * r
                disc *= GAMMA
                k += 1
                if done:
                    break
            # the n-step reward the learner sees is the discounted sum
            out.append(Experience(s, 2, ret, t, done, k))
    return out


@pytest.mark.parametrize("n,macro", [(2, None), (5, None), (5, (1, 1))])
def test_converges_to_value_iteration(n, macro):
    oracle = chain_oracle(n, macro)
    n_actions = oracle.shape[1]
    q = TabularQ(n_actions)
    target = q.copy()
    batch = chain_experiences(n, macro)
    for _ in range(3000):
        q_update(q, target, batch, GAMMA, 0.5)
        target = q.copy()
    learned = np.array([q.values(s) for s in range(n - 1)])
    np.testing.assert_allclose(learned, oracle[:-1], atol=1e-6)


def test_linear_matches_tabular_with_one_hot_features():
    n = 5
    q = LinearQ(2, lambda s: np.eye(n)[s], n)
    target = q.copy()
    batch = chain_experiences(n)
    for _ in range(3000):
        q_update(q, target, batch, GAMMA, 0.5)
        target = q.copy()
    oracle = chain_oracle(n)
    learned = np.array([q.values(s) for s in range(n - 1)])
    np.testing.assert_allclose(learned, oracle[:-1], atol=1e-6)


def test_double_q_target_uses_online_argmax_and_target_value():
    online, target = TabularQ(2), TabularQ(2)
    online.set_value("t", 1, 5.0)
    target.set_value("t", 0, 9.0)
    target.set_value("t", 1, 2.0)
    e = Experience("s", 0, 1.0, "t", False, 3)
    assert double_q_target(e, online, target, 0.5) == 1.0 + 0.125 * 2.0
    assert double_q_target(Experience("s", 0, 7.0, "t", True, 3), online, target, 0.5) == 7.0


def test_q_update_empty_batch():
    with pytest.raises(ValueError):
        q_update(TabularQ(2), TabularQ(2), [], 0.9, 0.5)


def test_argmax_ties_lowest():
    assert argmax([1.0, 3.0, 3.0, 0.0]) == 1
    assert argmax([0.0, 0.0]) == 0


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=20))
def test_argmax_matches_numpy(values):
    assert argmax(values) == int(np.argmax(values))


# --- exploration ------------------------------------------------------------------


def action_set_with(n_macros, n_prim=6):
    acts = ActionSet(n_prim)
    acts.add(MacroAction((0, i + 1)) for i in range(n_macros))
    return acts


def test_pick_action_bonus_frequencies():
    acts = action_set_with(4)
    rng = np.random.default_rng(0)
    draws = 100_000
    counts = np.zeros(len(acts))
    for _ in range(draws):
        a, explored = pick_action(TabularQ(len(acts)), "s", acts, 1.0, 4.0, rng)
        assert explored
        counts[a] += 1
    freq = counts / draws
    assert abs(freq[6:].sum() - 16 / 22) < 0.01
    np.testing.assert_allclose(freq[:6], 1 / 22, atol=0.01)
    np.testing.assert_allclose(freq[6:], 4 / 22, atol=0.01)


def test_pick_action_greedy():
    q = TabularQ(3)
    q.set_value("s", 2, 1.0)
    a, explored = pick_action(q, "s", ActionSet(3), 0.0, 4.0, np.random.default_rng(0))
    assert (a, explored) == (2, False)


# --- abandon ship ---------------------------------------------------------------------


def test_divergence():
    assert divergence(3.0, 3.0) == 0.0
    assert divergence(0.0, math.log(4)) == pytest.approx(0.75)
    assert divergence(-1e6, 1e6) == 1.0  # no overflow


def test_tracker_statistics():
    t = AbandonShipTracker(decay=0.5)
    for d in (1.0, 3.0):
        t.observe(d)
    assert t.mean == pytest.approx(2.0)
    assert t.var == pytest.approx(0.5 * (0.0 + 2.0 * 1.0))


def test_no_abandon_during_warmup():
    t = AbandonShipTracker(z=0.0, warmup=10)
    fired = [abandon_check(0.0, 5.0 * (i % 2), t) for i in range(10)]
    assert fired == [False] * 10
    assert t.count == 10


def test_abandon_after_warmup_and_constant_stream_never_fires():
    t = AbandonShipTracker(z=1.0, warmup=10)
    for _ in range(50):
        assert not abandon_check(1.0, 1.0, t)
    assert abandon_check(-5.0, 1.0, t)


# --- action set / transfer --------------------------------------------------------------


def test_action_set_dedup_and_ids():
    acts = ActionSet(6)
    assert acts.add([MacroAction((0, 1)), MacroAction((0, 1)), MacroAction((2, 3, 4))]) == [6, 7]
    assert acts.add([MacroAction((2, 3, 4)), MacroAction((5, 5))]) == [8]
    assert acts.sequence(7) == (2, 3, 4) and acts.sequence(2) == (2,)
    with pytest.raises(ValueError):
        acts.add([MacroAction((0, 9))])


def test_transfer_copies_first_primitive_bitwise():
    q = TabularQ(3)
    rng = np.random.default_rng(0)
    for s in range(4):
        for a in range(3):
            q.set_value(s, a, float(rng.normal()))
    before = {s: list(row) for s, row in q.table.items()}
    agent = Agent(q, ActionSet(3))
    ids = agent.add_macros([MacroAction((2, 0)), MacroAction((1, 1, 0))])
    assert ids == [3, 4]
    for s, row in agent.estimator.table.items():
        assert row[:3] == before[s]
        assert row[3] == before[s][2] and row[4] == before[s][1]
    assert agent.target.table == agent.estimator.table


def test_fresh_head_without_transfer():
    q = TabularQ(3)
    q.set_value(0, 1, 4.0)
    agent = Agent(q, ActionSet(3))
    agent.add_macros([MacroAction((1, 2))], transfer=False)
    assert agent.estimator.values(0) == [0.0] * 4


def test_linear_transfer():
    q = LinearQ(2, lambda s: np.ones(3), 3)
    q.weights[:] = [[1, 2, 3], [4, 5, 6]]
    agent = Agent(q, ActionSet(2))
    agent.add_macros([MacroAction((1, 0))])
    np.testing.assert_array_equal(agent.estimator.weights[2], [4, 5, 6])


def test_target_refresh_cadence():
    agent = Agent(TabularQ(2), ActionSet(2), gamma=0.9, alpha=1.0, target_refresh=3)
    e = Experience("s", 0, 1.0, "t", True, 1)
    agent.learn([e])
    agent.learn([e])
    assert agent.target.values("s") == [0.0, 0.0]
    agent.learn([e])
    assert agent.target.values("s") == [1.0, 0.0]


# --- executing macros -----------------------------------------------------------------------


def test_macro_rollout_equals_manual_play():
    env = Hanoi(3)
    agent = Agent(TabularQ(6), ActionSet(6))
    (mid,) = agent.add_macros([MacroAction(tuple(letters("bafbcdb")))])
    d, end = execute_action(env, env.reset(), mid, agent, abandon_enabled=False)
    s, states = env.reset(), [env.reset()]
    for a in letters("bafbcdb"):
        s, _, _ = env.step(s, a)
        states.append(s)
    assert d.states == states and end == s
    assert d.rewards == [-1.0] * 6 + [100.0]
    assert d.dones[-1] and d.completed and not d.abandoned


def test_macro_stops_at_terminal():
    env = Hanoi(3)
    agent = Agent(TabularQ(6), ActionSet(6))
    (mid,) = agent.add_macros([MacroAction(tuple(letters("bafbcdbaa")))])
    d, _ = execute_action(env, env.reset(), mid, agent, abandon_enabled=False)
    assert len(d.primitives) == 7 and d.completed and d.attempted_length == 7


def test_budget_truncates():
    env = Hanoi(3)
    agent = Agent(TabularQ(6), ActionSet(6))
    (mid,) = agent.add_macros([MacroAction(tuple(letters("bafb")))])
    d, _ = execute_action(env, env.reset(), mid, agent, abandon_enabled=False, budget=2)
    assert d.primitives == letters("ba") and not d.completed and not d.abandoned


class Scripted:
    """Estimator whose values ignore the state: next primitive looks terrible."""

    def __init__(self, values):
        self._values = values

    def values(self, state):
        return self._values

    def copy(self):
        return self


def test_abandon_truncates_scripted_macro():
    env = Hanoi(3)
    acts = ActionSet(6)
    (mid,) = acts.add([MacroAction(tuple(letters("bafb")))])
    tracker = AbandonShipTracker(z=1.0, warmup=10)
    for _ in range(20):
        tracker.observe(0.0)
    # the macro's second primitive (a) is far below the best primitive
    agent = Agent(Scripted([-10.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]), acts, tracker=tracker)
    d, _ = execute_action(env, env.reset(), mid, agent, abandon_enabled=True)
    assert d.primitives == letters("b") and d.abandoned
    assert d.attempted_length == 4


def test_explored_macro_never_abandons():
    env = Hanoi(3)
    acts = ActionSet(6)
    (mid,) = acts.add([MacroAction(tuple(letters("bafb")))])
    tracker = AbandonShipTracker(z=0.0, warmup=1)
    tracker.observe(0.0)
    agent = Agent(Scripted([-10.0] + [0.0] * 6), acts, tracker=tracker)
    d, _ = execute_action(env, env.reset(), mid, agent, abandon_enabled=True, explored=True)
    assert len(d.primitives) == 4 and not d.abandoned
