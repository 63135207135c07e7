"""Receding-horizon control: plan, execute the chosen root action, re-plan."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .array_mcts import search
from .config import SearchConfig
from .mdp import EnvSpec
from .tree_mcts import search_ref
from .unsorted_mcts import search_unsorted

IMPLEMENTATIONS = {
    "tree": search_ref,
    "array": search,
    "array_unsorted": search_unsorted,
}


def step_seed(seed: int, trial: int, step: int) -> int:
    """Independent 63-bit search seed for one (trial, step) cell."""
    ss = np.random.SeedSequence([seed % 2**63, trial, step])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> 1)


@dataclass
class Episode:
    states: list
    actions: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    overflow_events: int = 0
    reached_goal_at: int | None = None

    @property
    def reached_goal(self) -> bool:
        return self.reached_goal_at is not None


def run_episode(env: EnvSpec, config: SearchConfig, steps: int, *, impl: str = "array",
                trial: int = 0, start=None, stop_at_goal: bool = True) -> Episode:
    """Drive the environment for up to ``steps`` planning cycles.

    Execution noise comes from a generator seeded by ``(config.seed, trial)``;
    each search gets its own seed derived from ``(config.seed, trial, step)``.
    Only the search call is timed.
    """
    search_fn = IMPLEMENTATIONS[impl]
    state = tuple(env.start if start is None else start)
    episode = Episode(states=[state])
    exec_rng = np.random.default_rng([config.seed % 2**63, trial, 2**31])
    for t in range(steps):
        cfg = config.replace(seed=step_seed(config.seed, trial, t))
        t0 = time.perf_counter()
        result = search_fn(state, env, cfg)
        episode.seconds.append(time.perf_counter() - t0)
        episode.overflow_events += result.overflow_events
        action = result.best_action
        state = tuple(env._step(state, action, float(exec_rng.random())))
        episode.actions.append(action)
        episode.states.append(state)
        if env.at_goal(state) and episode.reached_goal_at is None:
            episode.reached_goal_at = t + 1
            if stop_at_goal:
                break
    return episode
