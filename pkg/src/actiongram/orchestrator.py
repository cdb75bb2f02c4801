"""The action-grammar training loop.

A run alternates two phases. Gathering plays episodes with the base
learner, running a no-exploration episode every ``eval_period`` episodes
and keeping those traces. Identification takes the best of those traces,
infers a grammar from their primitive actions and appends the resulting
macros to the action set. The first identification also switches on the
macro machinery: HAR storage, the configured replay type, Abandon Ship.
Before it, every variant behaves exactly like the bare base agent.
"""

from __future__ import annotations

import csv
import io
import logging
import math
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import grammar as gr
from .agent import AbandonShipTracker, Agent, ActionSet, LinearQ, TabularQ, execute_action, pick_action
from .config import RunConfig
from .env import Env, make_env
from .replay import BalancedBuffer, EpisodeTrace, UniformBuffer, as_played, har_expand

log = logging.getLogger(__name__)

CSV_VERSION = "# actiongram-metrics v1"
CSV_COLUMNS = ("episode", "kind", "start_step", "end_step", "return", "length", "decisions",
               "solved", "epsilon", "n_actions", "macro_decisions", "attempted", "executed")


@dataclass
class EpisodeRecord:
    episode: int
    kind: str
    start_step: int
    end_step: int
    ret: float
    length: int
    decisions: int
    solved: bool
    epsilon: float
    n_actions: int
    macro_decisions: int
    attempted: int
    executed: int

    def row(self) -> list[str]:
        return [str(self.episode), self.kind, str(self.start_step), str(self.end_step), repr(self.ret),
                str(self.length), str(self.decisions), str(int(self.solved)), repr(round(self.epsilon, 6)),
                str(self.n_actions), str(self.macro_decisions), str(self.attempted), str(self.executed)]


@dataclass
class GrammarSnapshot:
    step: int
    grammar: gr.Grammar
    macros: list[tuple[int, ...]]
    added: list[int]


@dataclass
class RunMetrics:
    episodes: list[EpisodeRecord] = field(default_factory=list)
    grammars: list[GrammarSnapshot] = field(default_factory=list)
    optimal_length: int = 0
    total_steps: int = 0
    wall_clock: float = 0.0

    @property
    def evaluations(self) -> list[EpisodeRecord]:
        return [e for e in self.episodes if e.kind == "eval"]

    @property
    def first_solve_step(self) -> int | None:
        """Primitive steps used when a no-exploration episode first solves the task."""
        return next((e.end_step for e in self.evaluations if e.solved), None)

    @property
    def first_optimal_step(self) -> int | None:
        return next((e.end_step for e in self.evaluations
                     if e.solved and e.length <= self.optimal_length), None)

    def final_score(self, last: int = 3) -> float:
        evals = self.evaluations[-last:]
        return float(np.mean([e.ret for e in evals])) if evals else float("nan")

    @property
    def attempted(self) -> int:
        return sum(e.attempted for e in self.episodes)

    @property
    def executed(self) -> int:
        return sum(e.executed for e in self.episodes)

    def move_length_ratio(self) -> float:
        """Executed over attempted move length; below 1 only through Abandon Ship."""
        return self.executed / self.attempted if self.attempted else 1.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(CSV_VERSION + "\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for e in self.episodes:
            w.writerow(e.row())
        return buf.getvalue()

    def grammar_text(self) -> str:
        out = []
        for g in self.grammars:
            out.append(f"# step {g.step}: {len(g.grammar.rules)} rules, {len(g.added)} new actions")
            out.extend(str(g.grammar).splitlines())
            for m in g.macros:
                out.append("macro " + gr.format_symbols(m))
        return "\n".join(out) + ("\n" if out else "")


def read_csv(text: str) -> list[dict[str, str]]:
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def make_estimator(config: RunConfig, env: Env):
    if config.estimator == "tabular":
        return TabularQ(env.action_count)
    return LinearQ(env.action_count, env.features, env.feature_count)


def extract_best_episodes(F: Sequence[EpisodeTrace], fraction: float = 0.2) -> list[EpisodeTrace]:
    """Top ``fraction`` of traces by return (at least one), in original order.

    Equal returns prefer the more recent trace.
    """
    if not F:
        return []
    n_keep = max(1, math.floor(len(F) * fraction + 1e-9))
    ranked = sorted(range(len(F)), key=lambda i: (-F[i].total_return, -i))
    keep = sorted(ranked[:n_keep])
    return [F[i] for i in keep]


def grammar_input(traces: Sequence[EpisodeTrace]) -> list[int]:
    """Concatenated primitive streams, separated by distinct negative ids.

    Each separator occurs once, so no rule can ever contain one.
    """
    seq: list[int] = []
    for i, t in enumerate(traces):
        if i:
            seq.append(-i)
        seq.extend(t.primitive_stream())
    return seq


@dataclass
class IdentifyResult:
    grammar: gr.Grammar | None
    macros: list[gr.MacroAction]
    added: list[int]


def identify_action_grammar(F: Sequence[EpisodeTrace], agent: Agent, calculator: str = "sequitur",
                            k: int = 2, transfer: bool = True, best_fraction: float = 0.2) -> IdentifyResult:
    """Infer macros from the best no-exploration traces and add the novel ones."""
    best = extract_best_episodes(F, best_fraction)
    seq = grammar_input(best)
    if not seq:
        log.warning("no no-exploration episodes to infer a grammar from; skipping")
        return IdentifyResult(None, [], [])
    g = gr.infer(seq, calculator, k)
    macros = [m for m in gr.extract_macros(g) if min(m.primitives) >= 0]
    added = agent.add_macros(macros, transfer=transfer)
    return IdentifyResult(g, macros, added)


class Runner:
    """State of one run; ``run()`` drives it from start to finish."""

    def __init__(self, config: RunConfig) -> None:
        self.config = config.validate()
        c = config
        self.env = make_env(c.env, n_disks=c.n_disks, grid_map=c.grid_map, step_penalty=c.step_penalty,
                            max_steps=c.max_episode_steps or None)
        act_seed, sample_seed = np.random.SeedSequence(c.seed).spawn(2)
        self.act_rng = np.random.default_rng(act_seed)
        self.sample_rng = np.random.default_rng(sample_seed)
        tracker = None
        if c.abandon_z is not None:
            tracker = AbandonShipTracker(c.abandon_z, c.abandon_decay, c.abandon_warmup)
        self.agent = Agent(make_estimator(c, self.env), ActionSet(self.env.action_count), c.gamma, c.alpha,
                           c.target_refresh, tracker)
        self.buffer: UniformBuffer | BalancedBuffer = UniformBuffer(c.buffer_capacity)
        self.step = 0
        self.episode = 0
        self.forced_random_until = c.initial_random_steps
        self.grammar_rounds = 0
        self.macros_active = False
        self.metrics = RunMetrics(optimal_length=self.env.optimal_length(), total_steps=c.total_steps)
        self.stopped = False

    # -- schedule ----------------------------------------------------------

    def epsilon(self) -> float:
        c = self.config
        if self.step < c.initial_random_steps or self.step < self.forced_random_until:
            return 1.0
        if c.epsilon_decay_steps == 0:
            return c.epsilon_end
        frac = min(1.0, (self.step - c.initial_random_steps) / c.epsilon_decay_steps)
        return c.epsilon_start + frac * (c.epsilon_end - c.epsilon_start)

    def _after_step(self) -> None:
        self.step += 1
        c = self.config
        if self.step > c.initial_random_steps and len(self.buffer):
            self.agent.learn(self.buffer.sample(c.batch_size, self.sample_rng))

    # -- episodes ------------------------------------------------------------

    def play_episode(self, explore: bool) -> EpisodeTrace:
        c, env, agent = self.config, self.env, self.agent
        trace = EpisodeTrace(explore=explore)
        state = env.reset()
        cap = min(env.max_episode_steps, c.total_steps - self.step)
        used = 0
        while used < cap:
            eps = self.epsilon() if explore else 0.0
            aid, explored = pick_action(agent.estimator, state, agent.action_set, eps,
                                        c.exploration_bonus, self.act_rng)
            d, state = execute_action(env, state, aid, agent, abandon_enabled=self.macros_active,
                                      explored=explored, budget=cap - used, on_step=self._after_step)
            trace.decisions.append(d)
            used += len(d.primitives)
            if d.dones and d.dones[-1]:
                break
        return trace

    def store(self, trace: EpisodeTrace) -> int:
        table = self.agent.action_set.macro_table()
        if self.macros_active and self.config.har:
            experiences = har_expand(trace, table)
        else:
            experiences = as_played(trace, table)
        self.buffer.add(experiences)
        return len(experiences)

    def record(self, trace: EpisodeTrace, kind: str, start_step: int, eps: float) -> EpisodeRecord:
        macro = [d for d in trace.decisions if d.planned > 1]
        rec = EpisodeRecord(
            episode=self.episode, kind=kind, start_step=start_step, end_step=self.step,
            ret=trace.total_return, length=trace.length, decisions=len(trace.decisions),
            solved=trace.solved, epsilon=eps, n_actions=len(self.agent.action_set),
            macro_decisions=len(macro), attempted=sum(d.attempted_length for d in trace.decisions),
            executed=trace.length,
        )
        self.metrics.episodes.append(rec)
        return rec

    def gather_experience(self, until_step: int) -> list[EpisodeTrace]:
        """Play episodes until ``until_step``; returns the no-exploration traces."""
        c = self.config
        F: deque[EpisodeTrace] = deque(maxlen=c.evaluation_episodes)
        while self.step < min(until_step, c.total_steps) and not self.stopped:
            self.episode += 1
            evaluate = self.episode % c.eval_period == 0
            start, eps = self.step, (0.0 if evaluate else self.epsilon())
            trace = self.play_episode(explore=not evaluate)
            self.store(trace)
            rec = self.record(trace, "eval" if evaluate else "train", start, eps)
            if evaluate:
                F.append(trace)
                if c.early_stop and rec.solved and rec.length <= self.metrics.optimal_length:
                    self.stopped = True
        return list(F)

    def identify(self, F: Sequence[EpisodeTrace]) -> IdentifyResult:
        c = self.config
        result = identify_action_grammar(F, self.agent, c.calculator, c.k, c.transfer, c.best_fraction)
        if result.grammar is None:
            return result
        self.metrics.grammars.append(GrammarSnapshot(self.step, result.grammar,
                                                     [m.primitives for m in result.macros], result.added))
        if not self.macros_active:
            self.macros_active = True
            if c.replay == "balanced":
                old = self.buffer
                self.buffer = BalancedBuffer(c.buffer_capacity, len(self.agent.action_set))
                self.buffer.add(old)
        self.buffer.set_action_count(len(self.agent.action_set))
        self.forced_random_until = self.step + c.post_inference_random_steps
        return result

    def run(self) -> RunMetrics:
        t0 = time.perf_counter()
        c = self.config
        while self.step < c.total_steps and not self.stopped:
            if self.grammar_rounds < c.grammar_iterations:
                F = self.gather_experience(self.step + c.steps_before_grammar)
                if self.step >= c.total_steps or self.stopped:
                    break
                self.grammar_rounds += 1
                self.identify(F)
            else:
                self.gather_experience(c.total_steps)
        self.metrics.wall_clock = time.perf_counter() - t0
        return self.metrics


def run(config: RunConfig, on_runner: Callable[[Runner], None] | None = None) -> RunMetrics:
    runner = Runner(config)
    if on_runner is not None:
        on_runner(runner)
    return runner.run()
