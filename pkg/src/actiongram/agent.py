"""Double-Q learner over a discrete action set that can grow with macros."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .grammar import MacroAction
from .replay import Decision, Experience

State = Any


def argmax(values: Sequence[float]) -> int:
    """Index of the largest value; ties go to the lowest index."""
    best, best_i = values[0], 0
    for i in range(1, len(values)):
        if values[i] > best:
            best, best_i = values[i], i
    return best_i


class TabularQ:
    """Table of action values; unseen states read the per-action defaults."""

    def __init__(self, n_actions: int, init: float = 0.0) -> None:
        self.table: dict[State, list[float]] = {}
        self.default: list[float] = [float(init)] * n_actions
        self.init = float(init)

    @property
    def n_actions(self) -> int:
        return len(self.default)

    def values(self, state: State) -> list[float]:
        return self.table.get(state, self.default)

    def value(self, state: State, action: int) -> float:
        return self.values(state)[action]

    def set_value(self, state: State, action: int, v: float) -> None:
        row = self.table.get(state)
        if row is None:
            row = self.table[state] = list(self.default)
        row[action] = v

    def _step(self, e: Experience, target: float, alpha: float) -> None:
        row = self.table.get(e.state)
        if row is None:
            row = self.table[e.state] = list(self.default)
        row[e.action] += alpha * (target - row[e.action])

    def expand(self, sources: Sequence[int]) -> None:
        """Append one action per source, copying that action's values."""
        for src in sources:
            if not 0 <= src < self.n_actions:
                raise ValueError(f"unknown source action {src}")
        for row in self.table.values():
            row.extend(row[src] for src in sources)
        self.default = self.default + [self.default[src] for src in sources]

    def add_fresh(self, n: int) -> None:
        for row in self.table.values():
            row.extend([self.init] * n)
        self.default = self.default + [self.init] * n

    def fresh(self, n_actions: int) -> TabularQ:
        return TabularQ(n_actions, self.init)

    def copy(self) -> TabularQ:
        out = TabularQ(0, self.init)
        out.table = {s: list(row) for s, row in self.table.items()}
        out.default = list(self.default)
        return out

    def snapshot(self) -> str:
        lines = [
            f"{a},{s!r},{v!r}"
            for s, row in sorted(self.table.items(), key=lambda kv: repr(kv[0]))
            for a, v in enumerate(row)
        ]
        return "\n".join(lines) + ("\n" if lines else "")


class LinearQ:
    """Per-action weight vectors over a fixed state feature map."""

    def __init__(self, n_actions: int, featurize: Callable[[State], np.ndarray], n_features: int,
                 init: float = 0.0) -> None:
        self.featurize = featurize
        self.n_features = n_features
        self.weights = np.full((n_actions, n_features), float(init))
        self.init = float(init)
        self._phi: dict[State, np.ndarray] = {}

    @property
    def n_actions(self) -> int:
        return self.weights.shape[0]

    def phi(self, state: State) -> np.ndarray:
        f = self._phi.get(state)
        if f is None:
            f = self._phi[state] = np.asarray(self.featurize(state), dtype=float)
        return f

    def values(self, state: State) -> list[float]:
        return (self.weights @ self.phi(state)).tolist()

    def value(self, state: State, action: int) -> float:
        return float(self.weights[action] @ self.phi(state))

    def _step(self, e: Experience, target: float, alpha: float) -> None:
        f = self.phi(e.state)
        w = self.weights[e.action]
        w += alpha * (target - float(w @ f)) * f

    def expand(self, sources: Sequence[int]) -> None:
        for src in sources:
            if not 0 <= src < self.n_actions:
                raise ValueError(f"unknown source action {src}")
        if sources:
            self.weights = np.vstack([self.weights, self.weights[list(sources)]])

    def add_fresh(self, n: int) -> None:
        self.weights = np.vstack([self.weights, np.full((n, self.n_features), self.init)])

    def fresh(self, n_actions: int) -> LinearQ:
        return LinearQ(n_actions, self.featurize, self.n_features, self.init)

    def copy(self) -> LinearQ:
        out = LinearQ(0, self.featurize, self.n_features, self.init)
        out.weights = self.weights.copy()
        out._phi = self._phi
        return out

    def snapshot(self) -> str:
        lines = [f"{a},{j},{v!r}" for a in range(self.n_actions) for j, v in enumerate(self.weights[a].tolist())]
        return "\n".join(lines) + ("\n" if lines else "")


Estimator = TabularQ | LinearQ


def double_q_target(e: Experience, online: Estimator, target: Estimator, gamma: float) -> float:
    if e.done:
        return e.reward
    a_star = argmax(online.values(e.next_state))
    return e.reward + gamma ** e.n_steps * target.values(e.next_state)[a_star]


def q_update(estimator: Estimator, target_estimator: Estimator, batch: Iterable[Experience],
             gamma: float, alpha: float) -> None:
    """One Double-Q pass over the batch, n-step discounted for macros."""
    batch = list(batch)
    if not batch:
        raise ValueError("empty batch")
    for e in batch:
        estimator._step(e, double_q_target(e, estimator, target_estimator, gamma), alpha)


class ActionSet:
    """Primitive ids 0..n-1 followed by macro ids in the order they were added."""

    def __init__(self, n_primitives: int) -> None:
        if n_primitives <= 0:
            raise ValueError("need at least one primitive action")
        self.n_primitives = n_primitives
        self.macros: list[MacroAction] = []
        self._known: set[tuple[int, ...]] = set()

    def __len__(self) -> int:
        return self.n_primitives + len(self.macros)

    def is_macro(self, aid: int) -> bool:
        return aid >= self.n_primitives

    def sequence(self, aid: int) -> tuple[int, ...]:
        if not 0 <= aid < len(self):
            raise ValueError(f"unknown action id {aid}")
        if aid < self.n_primitives:
            return (aid,)
        return self.macros[aid - self.n_primitives].primitives

    def macro_table(self) -> dict[int, tuple[int, ...]]:
        return {self.n_primitives + i: m.primitives for i, m in enumerate(self.macros)}

    def contains(self, primitives: Sequence[int]) -> bool:
        return tuple(primitives) in self._known

    def add(self, macros: Iterable[MacroAction]) -> list[int]:
        """Append macros not already present; returns their new ids."""
        new_ids = []
        for m in macros:
            prims = tuple(m.primitives)
            if len(prims) < 2 or prims in self._known:
                continue
            if any(not 0 <= p < self.n_primitives for p in prims):
                raise ValueError(f"macro {prims} uses an unknown primitive")
            self._known.add(prims)
            self.macros.append(MacroAction(prims, m.source))
            new_ids.append(len(self) - 1)
        return new_ids


def expand_action_head(estimator: Estimator, new_macros: Sequence[MacroAction]) -> None:
    """Add one value column per macro, initialised from its first primitive."""
    sources = [m.primitives[0] for m in new_macros]
    estimator.expand(sources)


@dataclass
class AbandonShipTracker:
    """Exponential moving mean and deviation of the divergence statistic.

    The first observation seeds the mean; comparisons are disabled until
    ``warmup`` observations have been seen.
    """

    z: float = 1.0
    decay: float = 0.99
    warmup: int = 10
    mean: float = 0.0
    var: float = 0.0
    count: int = 0

    @property
    def std(self) -> float:
        return math.sqrt(self.var)

    def threshold(self) -> float:
        return self.mean + self.std * self.z

    def observe(self, d: float) -> None:
        if self.count == 0:
            self.mean, self.var = d, 0.0
        else:
            diff = d - self.mean
            incr = (1.0 - self.decay) * diff
            self.mean += incr
            self.var = self.decay * (self.var + diff * incr)
        self.count += 1


def divergence(q_m: float, q_highest: float) -> float:
    # 1 - exp(q_m)/exp(q_highest), written to avoid overflow for large values
    return 1.0 - math.exp(q_m - q_highest)


def abandon_check(q_m: float, q_highest: float, tracker: AbandonShipTracker) -> bool:
    """True when continuing the macro looks unusually bad; always records d."""
    d = divergence(q_m, q_highest)
    abandon = tracker.count >= tracker.warmup and d > tracker.threshold()
    tracker.observe(d)
    return abandon


def pick_action(estimator: Estimator, state: State, action_set: ActionSet, epsilon: float,
                bonus: float, rng: np.random.Generator) -> tuple[int, bool]:
    """Epsilon-greedy choice. Returns (action id, chosen at random).

    Random choices weight each macro by ``bonus`` and each primitive by 1.
    """
    n = len(action_set)
    if n == 0:
        raise ValueError("empty action set")
    if rng.random() < epsilon:
        n_prim = action_set.n_primitives
        total = n_prim + bonus * (n - n_prim)
        u = rng.random() * total
        if u < n_prim:
            return int(u), True
        return min(n - 1, n_prim + int((u - n_prim) / bonus)), True
    return argmax(estimator.values(state)), False


@dataclass
class Agent:
    estimator: Estimator
    action_set: ActionSet
    gamma: float = 0.99
    alpha: float = 0.5
    target_refresh: int = 200
    tracker: AbandonShipTracker | None = None
    target: Estimator = field(init=False)
    updates: int = 0

    def __post_init__(self) -> None:
        self.target = self.estimator.copy()

    def learn(self, batch: Sequence[Experience]) -> None:
        q_update(self.estimator, self.target, batch, self.gamma, self.alpha)
        self.updates += 1
        if self.updates % self.target_refresh == 0:
            self.target = self.estimator.copy()

    def add_macros(self, macros: Sequence[MacroAction], transfer: bool = True) -> list[int]:
        new_ids = self.action_set.add(macros)
        added = [self.action_set.macros[i - self.action_set.n_primitives] for i in new_ids]
        if added:
            if transfer:
                expand_action_head(self.estimator, added)
            else:
                self.estimator = self.estimator.fresh(len(self.action_set))
            self.target = self.estimator.copy()
        return new_ids


def execute_action(env, state: State, aid: int, agent: Agent, abandon_enabled: bool,
                   explored: bool = False, budget: int | None = None,
                   on_step: Callable[[], None] | None = None) -> tuple[Decision, State]:
    """Play a primitive or a macro from ``state``.

    Macros stop early on a terminal state, when ``budget`` primitives have
    been used, or when Abandon Ship fires. Randomly chosen macros always
    roll out in full.
    """
    seq = agent.action_set.sequence(aid)
    n_prim = agent.action_set.n_primitives
    d = Decision(aid, planned=len(seq), explored=explored, states=[state])
    check = abandon_enabled and not explored and len(seq) > 1 and agent.tracker is not None
    for j, a in enumerate(seq):
        if budget is not None and j >= budget:
            break
        if j > 0 and check:
            q = agent.estimator.values(state)
            if abandon_check(q[a], max(q[:n_prim]), agent.tracker):
                d.abandoned = True
                break
        state, r, done = env.step(state, a)
        d.primitives.append(a)
        d.states.append(state)
        d.rewards.append(r)
        d.dones.append(done)
        if on_step is not None:
            on_step()
        if done:
            break
    return d, state
