"""Conventional linked-node UCT with the same decision rules as the array search.

This is both the correctness oracle for the array implementations and the
baseline they are benchmarked against. It makes the same choices in the same
order (same UCT arithmetic, lowest-index tie-break, untried-action sampling
from one draw, one action draw and one noise draw per layer even when no
untried action exists), so equal seeds give equal trees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .array_mcts import Trajectories
from .config import OverflowPolicy, SearchConfig, make_draws
from .errors import BranchingOverflowError, ContractViolation
from .mdp import EnvSpec
from .snapshot import NodeEntry, TreeSnapshot


class StateNode:
    __slots__ = ("state", "visits", "parent", "slot", "index", "children")

    def __init__(self, state, parent, slot, index, num_actions):
        self.state = state
        self.visits = 0
        self.parent = parent
        self.slot = slot
        self.index = index
        self.children = [None] * num_actions


class ActionNode:
    __slots__ = ("row", "visits", "value", "parent", "index", "children")

    def __init__(self, row, parent, index):
        self.row = row
        self.visits = 0
        self.value = 0.0
        self.parent = parent
        self.index = index
        self.children = []  # StateNode, creation order


def first_max(items, key):
    """Element with the largest key; the earliest one on ties."""
    return max(items, key=key)


@dataclass
class TreeSearch:
    env: EnvSpec
    config: SearchConfig
    argmax: object = first_max
    root: StateNode | None = None
    overflow_events: int = 0
    draws_used: int = 0
    node_counts: list = field(default_factory=list)

    def run(self, root_state, log: bool = False):
        cfg = self.config
        depth = cfg.max_depth
        n_actions = self.env.num_actions
        self.root = StateNode(tuple(root_state), None, -1, 0, n_actions)
        # per-depth creation counters: [actions, states]
        self.node_counts = [[0, 1]] + [[0, 0] for _ in range(depth)]
        draws = make_draws(cfg).tolist()
        log_a = np.full((cfg.num_simulations, depth), -1, dtype=np.int64) if log else None
        log_r = np.zeros((cfg.num_simulations, depth)) if log else None
        pos = 0
        for sim in range(cfg.num_simulations):
            self._simulate(draws, pos, sim, log_a, log_r)
            pos += 2 * depth
        self.draws_used = pos
        return log_a, log_r

    def _simulate(self, draws, pos, sim, log_a, log_r):
        env = self.env
        c = self.config.exploration_c
        caps = self.config.state_branch_caps
        clamp = self.config.overflow is OverflowPolicy.CLAMP
        argmax = self.argmax
        node = self.root
        cur = node.state
        path = []
        for l in range(self.config.max_depth):
            draw = draws[pos]
            children = node.children
            untried = [a for a, ch in enumerate(children) if ch is None]
            if untried:
                row = untried[int(draw * len(untried))]
                counts = self.node_counts[l + 1]
                action = ActionNode(row, node, counts[0])
                counts[0] += 1
                children[row] = action
            else:
                log_n = math.log(node.visits)
                row = argmax(range(len(children)),
                             key=lambda a: children[a].value + c * math.sqrt(log_n / children[a].visits))
                action = children[row]

            cur = env._step(cur, row, draws[pos + 1])
            pos += 2
            for child in action.children:
                if child.state == cur:
                    break
            else:
                if len(action.children) < caps[l]:
                    counts = self.node_counts[l + 1]
                    child = StateNode(cur, action, len(action.children), counts[1], len(children))
                    counts[1] += 1
                    action.children.append(child)
                elif clamp:
                    self.overflow_events += 1
                    child = argmax(action.children,
                                   key=lambda ch: sum(u == v for u, v in zip(ch.state, cur)))
                else:
                    raise BranchingOverflowError(l + 1, action.index)
            path.append((action, child))
            node = child

        node.visits += 1
        summed = 0.0
        for l in range(len(path) - 1, -1, -1):
            action, child = path[l]
            summed += env._reward(child.state)
            action.visits += 1
            action.value += (summed - action.value) / action.visits
            if log_a is not None:
                log_a[sim, l] = action.index
                log_r[sim, l] = summed
            action.parent.visits += 1
        return summed

    def best_action(self) -> int:
        tried = [a for a in self.root.children if a is not None]
        return first_max(tried, key=lambda a: a.value).row

    def snapshot(self) -> TreeSnapshot:
        return snapshot_ref(self.root)


def snapshot_ref(root: StateNode) -> TreeSnapshot:
    """Canonical dump of a linked tree (same format as the array snapshot)."""
    entries = [NodeEntry(0, "S", 0, -1, -1, root.visits, None, tuple(root.state))]
    frontier = [root]
    depth = 0
    while frontier:
        depth += 1
        nxt = []
        for s in frontier:
            for a in s.children:
                if a is None:
                    continue
                entries.append(NodeEntry(depth, "A", a.index, s.index, a.row, a.visits, a.value, None))
                for child in a.children:
                    entries.append(NodeEntry(depth, "S", child.index, a.index, child.slot,
                                             child.visits, None, tuple(child.state)))
                    nxt.append(child)
        frontier = nxt
    return TreeSnapshot.from_entries(entries)


@dataclass
class RefResult:
    best_action: int
    tree: TreeSearch
    trajectories: object = None

    def snapshot(self) -> TreeSnapshot:
        return self.tree.snapshot()

    @property
    def overflow_events(self) -> int:
        return self.tree.overflow_events

    @property
    def draws_used(self) -> int:
        return self.tree.draws_used


def search_ref(root_state, env: EnvSpec, config: SearchConfig, *, log: bool = False,
               argmax=first_max) -> RefResult:
    if len(root_state) != env.dim:
        raise ContractViolation("root state has the wrong dimension")
    tree = TreeSearch(env, config, argmax=argmax)
    log_a, log_r = tree.run(root_state, log=log)
    return RefResult(tree.best_action(), tree, Trajectories(log_a, log_r) if log else None)
