"""Action-grammar reinforcement learning at desk scale."""

from .agent import AbandonShipTracker, ActionSet, Agent, LinearQ, TabularQ
from .config import ExperimentSpec, RunConfig
from .env import Grid, GridSpec, Hanoi
from .grammar import Grammar, MacroAction, extract_macros, k_sequitur_infer, mdl_filter, sequitur_infer
from .orchestrator import RunMetrics, run

__all__ = [
    "AbandonShipTracker", "ActionSet", "Agent", "ExperimentSpec", "Grammar", "Grid", "GridSpec", "Hanoi",
    "LinearQ", "MacroAction", "RunConfig", "RunMetrics", "TabularQ", "extract_macros", "k_sequitur_infer",
    "mdl_filter", "run", "sequitur_infer",
]
