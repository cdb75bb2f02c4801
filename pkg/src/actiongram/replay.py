"""Experience storage: Hindsight Action Replay and action-balanced sampling."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

State = Any


@dataclass(frozen=True)
class Experience:
    state: State
    action: int
    reward: float
    next_state: State
    done: bool
    n_steps: int = 1


@dataclass
class Decision:
    """One choice by the policy and the primitives it actually executed.

    ``states`` holds the state before each primitive plus the final one,
    so ``len(states) == len(primitives) + 1``.
    """

    action: int
    primitives: list[int] = field(default_factory=list)
    states: list[State] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    dones: list[bool] = field(default_factory=list)
    planned: int = 1
    abandoned: bool = False
    explored: bool = False

    @property
    def completed(self) -> bool:
        """Ran to the end of its sequence or to the end of the episode."""
        return len(self.primitives) == self.planned or (bool(self.dones) and self.dones[-1])

    @property
    def attempted_length(self) -> int:
        # only Abandon Ship makes a move shorter than what was attempted
        return self.planned if self.abandoned else len(self.primitives)


@dataclass
class EpisodeTrace:
    decisions: list[Decision] = field(default_factory=list)
    explore: bool = True

    @property
    def total_return(self) -> float:
        return float(sum(r for d in self.decisions for r in d.rewards))

    @property
    def length(self) -> int:
        return sum(len(d.primitives) for d in self.decisions)

    @property
    def solved(self) -> bool:
        return bool(self.decisions) and bool(self.decisions[-1].dones) and self.decisions[-1].dones[-1]

    def primitive_stream(self) -> list[int]:
        return [a for d in self.decisions for a in d.primitives]


def _macro_table(macros: Mapping[int, Sequence[int]]) -> dict[int, tuple[int, ...]]:
    # accepts id -> primitive sequence or id -> MacroAction
    return {int(k): tuple(getattr(v, "primitives", v)) for k, v in macros.items()}


def match_macros(stream: Sequence[int], macros: Mapping[int, Sequence[int]]) -> list[tuple[int, int]]:
    """Every contiguous occurrence of every macro in ``stream``.

    Overlapping matches are all reported. Ordered by offset, then longest
    macro first, then by macro id.
    """
    table = _macro_table(macros)
    by_first: dict[int, list[tuple[int, tuple[int, ...]]]] = {}
    for mid, prims in sorted(table.items(), key=lambda kv: (-len(kv[1]), kv[0])):
        if prims:
            by_first.setdefault(prims[0], []).append((mid, prims))
    stream = list(stream)
    out = []
    for i, a in enumerate(stream):
        for mid, prims in by_first.get(a, ()):
            if stream[i:i + len(prims)] == list(prims):
                out.append((i, mid))
    return out


def _primitive_experiences(d: Decision) -> list[Experience]:
    return [
        Experience(d.states[j], d.primitives[j], d.rewards[j], d.states[j + 1], d.dones[j], 1)
        for j in range(len(d.primitives))
    ]


def as_played(trace: EpisodeTrace, macros: Mapping[int, Sequence[int]]) -> list[Experience]:
    """Experiences exactly as chosen by the policy.

    A macro cut short by Abandon Ship or the step cap is not the macro, so
    it is stored only as its primitives.
    """
    out: list[Experience] = []
    for d in trace.decisions:
        if d.action not in macros:
            out.extend(_primitive_experiences(d))
        elif d.completed:
            out.append(Experience(d.states[0], d.action, float(sum(d.rewards)), d.states[-1],
                                  d.dones[-1], len(d.primitives)))
        else:
            out.extend(_primitive_experiences(d))
    return out


def har_expand(trace: EpisodeTrace, macros: Mapping[int, Sequence[int]]) -> list[Experience]:
    """Store the episode as played and re-imagined both ways.

    1. every macro that was played is also stored primitive by primitive;
    2. every run of primitives matching a known macro is also stored as
       that macro, unless the policy actually played it there.
    """
    table = _macro_table(macros)
    for d in trace.decisions:
        if d.action >= 0 and d.planned > 1 and d.action not in table:
            raise KeyError(f"unknown macro id {d.action}")

    out = as_played(trace, table)
    played_spans = set()
    states: list[State] = []
    rewards: list[float] = []
    dones: list[bool] = []
    offset = 0
    for d in trace.decisions:
        if d.action in table:
            if d.completed:
                out.extend(_primitive_experiences(d))
                played_spans.add((offset, d.action))
            # interrupted macros were already stored as primitives
        states.extend(d.states[:-1])
        rewards.extend(d.rewards)
        dones.extend(d.dones)
        offset += len(d.primitives)
    if trace.decisions:
        states.append(trace.decisions[-1].states[-1])

    for start, mid in match_macros(trace.primitive_stream(), table):
        if (start, mid) in played_spans:
            continue
        end = start + len(table[mid])
        out.append(Experience(states[start], mid, float(sum(rewards[start:end])), states[end],
                              dones[end - 1], end - start))
    return out


def state_hash(state: State) -> int:
    return zlib.crc32(repr(state).encode())


def dump_experiences(experiences: Iterable[Experience]) -> str:
    lines = [
        f"{state_hash(e.state)},{e.action},{e.reward:g},{state_hash(e.next_state)},{int(e.done)},{e.n_steps}"
        for e in experiences
    ]
    return "\n".join(lines) + ("\n" if lines else "")


class Ring:
    """Fixed-capacity FIFO with O(1) random access; evicts the oldest."""

    def __init__(self, capacity: int, items: Iterable = ()) -> None:
        if capacity <= 0:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.items: list = []
        self.pos = 0
        for x in items:
            self.append(x)

    def __len__(self) -> int:
        return len(self.items)

    def append(self, x) -> None:
        if len(self.items) < self.capacity:
            self.items.append(x)
        else:
            self.items[self.pos] = x
            self.pos = (self.pos + 1) % self.capacity

    def __getitem__(self, i: int):
        return self.items[(self.pos + i) % len(self.items)]

    def __iter__(self):
        yield from self.items[self.pos:]
        yield from self.items[:self.pos]


class UniformBuffer:
    """Plain FIFO replay buffer sampled uniformly with replacement."""

    def __init__(self, capacity: int) -> None:
        self.capacity = capacity
        self.data = Ring(capacity)

    def __len__(self) -> int:
        return len(self.data)

    def add(self, experiences: Iterable[Experience]) -> None:
        for e in experiences:
            self.data.append(e)

    def set_action_count(self, n_actions: int) -> None:
        pass

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Experience]:
        if not len(self.data):
            raise ValueError("cannot sample from an empty buffer")
        items = self.data.items
        return [items[i] for i in rng.integers(len(items), size=batch_size)]

    def __iter__(self):
        return iter(self.data)


class BalancedBuffer:
    """One FIFO sub-buffer per action id; batches hold near-equal counts per action.

    Total capacity is split evenly across the current action set and
    re-split whenever the action set grows.
    """

    def __init__(self, capacity: int, n_actions: int) -> None:
        self.capacity = capacity
        self.subs: dict[int, Ring] = {}
        self.inserted: dict[int, int] = {}
        self.n_actions = 0
        self.set_action_count(n_actions)

    @property
    def per_action(self) -> int:
        return max(1, self.capacity // max(1, self.n_actions))

    def set_action_count(self, n_actions: int) -> None:
        self.n_actions = n_actions
        cap = self.per_action
        for a, sub in list(self.subs.items()):
            kept = list(sub)[-cap:]
            self.subs[a] = Ring(cap, kept)
        for a in range(n_actions):
            if a not in self.subs:
                self.subs[a] = Ring(cap)
                self.inserted[a] = 0

    def __len__(self) -> int:
        return sum(len(s) for s in self.subs.values())

    def add(self, experiences: Iterable[Experience]) -> None:
        for e in experiences:
            if e.action not in self.subs:
                self.subs[e.action] = Ring(self.per_action)
                self.inserted[e.action] = 0
            self.subs[e.action].append(e)
            self.inserted[e.action] += 1

    def counts_for(self, batch_size: int, rng: np.random.Generator) -> dict[int, int]:
        """Per-action batch counts: an even split, remainder to random actions."""
        actions = sorted(a for a, s in self.subs.items() if len(s))
        if not actions:
            raise ValueError("cannot sample from an empty buffer")
        base, extra = divmod(batch_size, len(actions))
        counts = {a: base for a in actions}
        if extra:
            for i in rng.choice(len(actions), size=extra, replace=False):
                counts[actions[i]] += 1
        return counts

    def sample(self, batch_size: int, rng: np.random.Generator) -> list[Experience]:
        out: list[Experience] = []
        for a, n in self.counts_for(batch_size, rng).items():
            if n:
                items = self.subs[a].items
                out.extend(items[i] for i in rng.integers(len(items), size=n))
        return out

    def __iter__(self):
        for a in sorted(self.subs):
            yield from self.subs[a]


def add(buffer, experiences: Iterable[Experience]) -> None:
    buffer.add(experiences)


def sample_balanced(buffer: BalancedBuffer, batch_size: int, rng: np.random.Generator) -> list[Experience]:
    return buffer.sample(batch_size, rng)
