"""Deterministic sparse-reward environments.

States are plain hashable tuples so tabular learners can key on them.
Stepping never mutates anything: ``step(state, action)`` returns a new
state, which keeps environments safe to share between runs.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Union

import numpy as np

GOAL_REWARD = 100.0

HanoiState = tuple[tuple[int, ...], tuple[int, ...], tuple[int, ...]]
GridState = tuple[int, int]
State = Union[HanoiState, GridState]


class StepResult(NamedTuple):
    next_state: State
    reward: float
    done: bool


class TerminalStateError(RuntimeError):
    pass


# ordered rod pairs (from, to); action ids 0..5 play the role of moves a..f
HANOI_MOVES: tuple[tuple[int, int], ...] = ((0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1))


@dataclass(frozen=True)
class Hanoi:
    n_disks: int = 3
    step_penalty: float = -1.0
    goal_rod: int = 2
    max_steps: int = 500

    def __post_init__(self) -> None:
        if not 2 <= self.n_disks <= 8:
            raise ValueError(f"n_disks must be in [2, 8], got {self.n_disks}")
        if self.goal_rod not in (1, 2):
            raise ValueError("goal rod must differ from the start rod")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")

    @property
    def action_count(self) -> int:
        return len(HANOI_MOVES)

    @property
    def max_episode_steps(self) -> int:
        return self.max_steps

    def reset(self) -> HanoiState:
        return (tuple(range(self.n_disks, 0, -1)), (), ())

    def is_terminal(self, state: HanoiState) -> bool:
        return len(state[self.goal_rod]) == self.n_disks

    def step(self, state: HanoiState, action: int) -> StepResult:
        if self.is_terminal(state):
            raise TerminalStateError("cannot step a terminal state")
        src, dst = HANOI_MOVES[action]
        rods = list(state)
        if not rods[src] or (rods[dst] and rods[dst][-1] < rods[src][-1]):
            # illegal moves leave the puzzle untouched
            return StepResult(state, self.step_penalty, False)
        disk = rods[src][-1]
        rods[src] = rods[src][:-1]
        rods[dst] = rods[dst] + (disk,)
        nxt = (rods[0], rods[1], rods[2])
        if self.is_terminal(nxt):
            return StepResult(nxt, GOAL_REWARD, True)
        return StepResult(nxt, self.step_penalty, False)

    @property
    def feature_count(self) -> int:
        return 3 * self.n_disks + 1

    def features(self, state: HanoiState) -> np.ndarray:
        """One-hot rod position per disk, plus a bias term."""
        phi = np.zeros(self.feature_count)
        for rod, disks in enumerate(state):
            for d in disks:
                phi[3 * (d - 1) + rod] = 1.0
        phi[-1] = 1.0
        return phi

    def optimal_length(self) -> int:
        return 2**self.n_disks - 1


# up, right, down, left
GRID_MOVES: tuple[tuple[int, int], ...] = ((-1, 0), (0, 1), (1, 0), (0, -1))


@dataclass(frozen=True)
class GridSpec:
    height: int
    width: int
    start: GridState
    goal: GridState
    walls: frozenset = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if self.height <= 0 or self.width <= 0:
            raise ValueError("grid must be non-empty")
        for name, cell in (("start", self.start), ("goal", self.goal)):
            if not (0 <= cell[0] < self.height and 0 <= cell[1] < self.width):
                raise ValueError(f"{name} {cell} lies outside the grid")
            if cell in self.walls:
                raise ValueError(f"{name} {cell} is a wall")
        if self.start == self.goal:
            raise ValueError("start and goal coincide")

    @classmethod
    def parse(cls, text: str) -> GridSpec:
        """Read a map: '#' wall, 'S' start, 'G' goal, '.' empty."""
        rows = [line.strip() for line in text.strip().splitlines() if line.strip()]
        if not rows:
            raise ValueError("empty grid map")
        width = len(rows[0])
        if any(len(r) != width for r in rows):
            raise ValueError("grid rows have unequal length")
        start = goal = None
        walls = set()
        for i, row in enumerate(rows):
            for j, ch in enumerate(row):
                if ch == "#":
                    walls.add((i, j))
                elif ch == "S":
                    if start is not None:
                        raise ValueError("more than one start cell")
                    start = (i, j)
                elif ch == "G":
                    if goal is not None:
                        raise ValueError("more than one goal cell")
                    goal = (i, j)
                elif ch != ".":
                    raise ValueError(f"unknown map character {ch!r}")
        if start is None or goal is None:
            raise ValueError("map needs exactly one 'S' and one 'G'")
        return cls(len(rows), width, start, goal, frozenset(walls))

    @classmethod
    def load(cls, path: str | Path) -> GridSpec:
        return cls.parse(Path(path).read_text())


@dataclass(frozen=True)
class Grid:
    spec: GridSpec
    step_penalty: float = -1.0
    max_steps: int | None = None

    @property
    def action_count(self) -> int:
        return len(GRID_MOVES)

    @property
    def max_episode_steps(self) -> int:
        return self.max_steps or 4 * self.spec.height * self.spec.width

    def reset(self) -> GridState:
        return self.spec.start

    def is_terminal(self, state: GridState) -> bool:
        return state == self.spec.goal

    def step(self, state: GridState, action: int) -> StepResult:
        if self.is_terminal(state):
            raise TerminalStateError("cannot step a terminal state")
        di, dj = GRID_MOVES[action]
        nxt = (state[0] + di, state[1] + dj)
        if not (0 <= nxt[0] < self.spec.height and 0 <= nxt[1] < self.spec.width) or nxt in self.spec.walls:
            nxt = state
        if nxt == self.spec.goal:
            return StepResult(nxt, GOAL_REWARD, True)
        return StepResult(nxt, self.step_penalty, False)

    @property
    def feature_count(self) -> int:
        return self.spec.height * self.spec.width

    def features(self, state: GridState) -> np.ndarray:
        phi = np.zeros(self.feature_count)
        phi[state[0] * self.spec.width + state[1]] = 1.0
        return phi

    def optimal_length(self) -> int:
        length = shortest_path_length(self)
        if length is None:
            raise ValueError("goal unreachable")
        return length


Env = Union[Hanoi, Grid]


def action_count(env: Env) -> int:
    return env.action_count


def max_episode_steps(env: Env) -> int:
    return env.max_episode_steps


def shortest_path_length(env: Env) -> int | None:
    """Breadth-first search over the deterministic dynamics."""
    start = env.reset()
    if env.is_terminal(start):
        return 0
    seen = {start}
    frontier = deque([(start, 0)])
    while frontier:
        s, depth = frontier.popleft()
        for a in range(env.action_count):
            nxt, _, done = env.step(s, a)
            if done:
                return depth + 1
            if nxt not in seen:
                seen.add(nxt)
                frontier.append((nxt, depth + 1))
    return None


def make_env(name: str, *, n_disks: int = 3, grid_map: str | None = None,
             step_penalty: float = -1.0, max_steps: int | None = None) -> Env:
    if name == "hanoi":
        return Hanoi(n_disks, step_penalty, max_steps=max_steps or 500)
    if name == "grid":
        if not grid_map:
            raise ValueError("grid environment needs a map")
        # a map file path, or an inline map with '/' between rows
        path = Path(grid_map)
        text = path.read_text() if path.is_file() else grid_map.replace("/", "\n")
        return Grid(GridSpec.parse(text), step_penalty, max_steps)
    raise ValueError(f"unknown environment {name!r}")
