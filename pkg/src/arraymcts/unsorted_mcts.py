"""Ablation baseline: the array search without sorting nodes into layers.

All state nodes of every depth share one set of arrays, as do all action
nodes, indexed globally in creation order; each node records its depth. The
selection rules are exactly those of :mod:`arraymcts.array_mcts`. The arena
is sized to the same total capacity, with one sentinel state slot and one
zero-visit action slot at the very end.
"""

from __future__ import annotations

from collections import namedtuple
from dataclasses import dataclass

import numpy as np
from numba import njit

from .array_mcts import (
    INDEX_DTYPE,
    INDEX_MAX,
    SearchResult,
    Trajectories,
    layer_capacities,
)
from .config import OverflowPolicy, SearchConfig, make_draws
from .errors import BranchingOverflowError, ConstructionError, ContractViolation
from .kernels import SATURATED_VALUE, any_unvisited_jit, max_index, max_index_jit, random_untried_jit, uct_value_jit
from .mdp import SENTINEL_COORD, EnvSpec, env_kernel, kernel_reward, kernel_step
from .snapshot import NodeEntry, TreeSnapshot

GlobalArrays = namedtuple(
    "GlobalArrays",
    [
        "state_nodes", "state_visits", "state_parent", "state_depth", "child_action_nodes",
        "action_values", "action_visits", "action_parent", "action_depth", "child_state_nodes",
        "caps", "counts", "counters",
    ],
)
# counts[0]: states created, counts[1]: actions created


@dataclass
class GlobalStore:
    arrays: GlobalArrays
    num_actions_per_state: int
    max_depth: int
    row_stride: int

    @property
    def overflow_events(self) -> int:
        return int(self.arrays.counters[0])

    @property
    def draws_used(self) -> int:
        return int(self.arrays.counters[1])

    def snapshot(self) -> TreeSnapshot:
        g = self.arrays
        n_s, n_a = int(g.counts[0]), int(g.counts[1])
        s_depth = g.state_depth[:n_s].tolist()
        a_depth = g.action_depth[:n_a].tolist()
        # global index -> creation rank within its depth
        s_rank, a_rank = [0] * n_s, [0] * n_a
        seen = [0] * (self.max_depth + 1)
        for i, d in enumerate(s_depth):
            s_rank[i] = seen[d]
            seen[d] += 1
        seen = [0] * (self.max_depth + 1)
        for i, d in enumerate(a_depth):
            a_rank[i] = seen[d]
            seen[d] += 1
        n_act = self.num_actions_per_state
        cat = g.child_action_nodes
        entries = []
        coords = g.state_nodes[:n_s].tolist()
        for i in range(n_s):
            d = s_depth[i]
            if d == 0:
                entries.append(NodeEntry(0, "S", 0, -1, -1, int(g.state_visits[i]), None, tuple(coords[i])))
                continue
            p = int(g.state_parent[i])
            col = g.child_state_nodes[p * self.row_stride:p * self.row_stride + int(g.caps[d])]
            slot = int(np.flatnonzero(col == i)[0])
            entries.append(NodeEntry(d, "S", s_rank[i], a_rank[p], slot, int(g.state_visits[i]),
                                     None, tuple(coords[i])))
        for i in range(n_a):
            p = int(g.action_parent[i])
            row = int(np.flatnonzero(cat[p * n_act:(p + 1) * n_act] == i)[0])
            entries.append(NodeEntry(a_depth[i], "A", a_rank[i], s_rank[p], row,
                                     int(g.action_visits[i]), float(g.action_values[i]), None))
        return TreeSnapshot.from_entries(entries)


def init_global(root_state, config: SearchConfig, num_actions: int) -> GlobalStore:
    caps = config.state_branch_caps
    states, actions = layer_capacities(config.num_simulations, num_actions, caps)
    s_tot, a_tot = sum(states), sum(actions)
    stride = max(caps) + 1
    if max((s_tot + 1) * num_actions, a_tot * stride) > INDEX_MAX:
        raise ConstructionError("tree capacity exceeds the index range")
    dim = len(root_state)
    state_nodes = np.zeros((s_tot + 1, dim), dtype=np.int64)
    state_nodes[0] = root_state
    state_nodes[s_tot] = SENTINEL_COORD
    csn = np.full((a_tot, stride), s_tot, dtype=INDEX_DTYPE)
    csn[:, -1] = 0
    arrays = GlobalArrays(
        state_nodes=state_nodes,
        state_visits=np.zeros(s_tot + 1, dtype=np.int64),
        state_parent=np.full(s_tot + 1, -1, dtype=INDEX_DTYPE),
        state_depth=np.zeros(s_tot + 1, dtype=INDEX_DTYPE),
        child_action_nodes=np.full((s_tot + 1) * num_actions, a_tot, dtype=INDEX_DTYPE),
        action_values=np.zeros(a_tot + 1),
        action_visits=np.zeros(a_tot + 1, dtype=np.int64),
        action_parent=np.full(a_tot + 1, -1, dtype=INDEX_DTYPE),
        action_depth=np.zeros(a_tot + 1, dtype=INDEX_DTYPE),
        child_state_nodes=csn.reshape(-1),
        caps=np.asarray([0, *caps], dtype=np.int64),
        counts=np.array([1, 0], dtype=np.int64),
        counters=np.zeros(5, dtype=np.int64),
    )
    return GlobalStore(arrays, num_actions, config.max_depth, stride)


@njit(cache=True)
def _g_select_child_action(G, s, draw, n_actions, c, vis_buf, uct_buf):
    ca = s * n_actions
    parent_visits = G.state_visits[s]
    parent_visits += parent_visits == 0
    for a in range(n_actions):
        idx = G.child_action_nodes[ca + a]
        vis_buf[a] = G.action_visits[idx]
        uct_buf[a] = uct_value_jit(G.action_values[idx], vis_buf[a], parent_visits, c)
    untried = any_unvisited_jit(vis_buf)
    best = max_index_jit(uct_buf)
    new = random_untried_jit(vis_buf, draw)
    nxt = new * untried + best * (1 - untried)
    nxt_idx = G.counts[1] * untried + G.child_action_nodes[ca + best] * (1 - untried)
    G.child_action_nodes[ca + nxt] = nxt_idx
    G.counts[1] += untried
    return nxt


@njit(cache=True)
def _g_select_child_state(G, a_idx, gen, clamp, stride, match_buf):
    depth = G.action_depth[a_idx]
    ns = G.caps[depth]
    dim = gen.shape[0]
    cs = a_idx * stride
    for i in range(ns):
        child = G.child_state_nodes[cs + i]
        m = 0
        for d in range(dim):
            m += G.state_nodes[child, d] == gen[d]
        match_buf[i] = m
    match_idx = max_index_jit(match_buf[:ns])
    match_flag = match_buf[match_idx] == dim
    count = G.child_state_nodes[cs + stride - 1]
    overflow = (1 - match_flag) * (count == ns)
    if overflow and not clamp:
        G.counters[2] = 1
        G.counters[3] = depth
        G.counters[4] = a_idx
        return -1
    reuse = match_flag | overflow
    idx_in_child = match_idx * reuse + count * (1 - reuse)
    nxt = G.child_state_nodes[cs + match_idx] * reuse + G.counts[0] * (1 - reuse)
    G.child_state_nodes[cs + idx_in_child] = nxt
    for d in range(dim):
        G.state_nodes[nxt, d] = G.state_nodes[nxt, d] * overflow + gen[d] * (1 - overflow)
    G.state_depth[nxt] = depth
    G.child_state_nodes[cs + stride - 1] += 1 - reuse
    G.counts[0] += 1 - reuse
    G.counters[0] += overflow
    return nxt


@njit(cache=True)
def _g_simulate_once(G, ek, draws, pos, depth, c, clamp, stride, sim, log_actions, log_returns,
                     cur, gen, vis_buf, uct_buf, match_buf):
    n_actions = ek.n_actions
    dim = cur.shape[0]
    for d in range(dim):
        cur[d] = G.state_nodes[0, d]
    s = 0
    for l in range(depth):
        row = _g_select_child_action(G, s, draws[pos], n_actions, c, vis_buf, uct_buf)
        a_idx = G.child_action_nodes[s * n_actions + row]
        G.action_parent[a_idx] = s
        G.action_depth[a_idx] = l + 1
        kernel_step(ek, cur, row, draws[pos + 1], gen)
        pos += 2
        G.counters[1] += 2
        s = _g_select_child_state(G, a_idx, gen, clamp, stride, match_buf)
        if s < 0:
            return 0.0
        G.state_parent[s] = a_idx
        for d in range(dim):
            cur[d] = gen[d]

    G.state_visits[s] += 1
    logging = log_actions.shape[0] > 0
    summed = 0.0
    for l in range(depth - 1, -1, -1):
        summed += kernel_reward(ek, G.state_nodes[s])
        a_idx = G.state_parent[s]
        G.action_visits[a_idx] += 1
        G.action_values[a_idx] += (summed - G.action_values[a_idx]) / G.action_visits[a_idx]
        if logging:
            log_actions[sim, l] = a_idx
            log_returns[sim, l] = summed
        s = G.action_parent[a_idx]
        G.state_visits[s] += 1
    return summed


@njit(cache=True)
def _g_run(G, ek, draws, n_sims, depth, c, clamp, stride, log_actions, log_returns):
    dim = G.state_nodes.shape[1]
    n_actions = ek.n_actions
    cur = np.empty(dim, dtype=np.int64)
    gen = np.empty(dim, dtype=np.int64)
    vis_buf = np.empty(n_actions, dtype=np.int64)
    uct_buf = np.empty(n_actions, dtype=np.float64)
    match_buf = np.empty(stride, dtype=np.int64)
    for i in range(n_sims):
        _g_simulate_once(G, ek, draws, i * 2 * depth, depth, c, clamp, stride, i, log_actions,
                         log_returns, cur, gen, vis_buf, uct_buf, match_buf)
        if G.counters[2]:
            break


def search_unsorted(root_state, env: EnvSpec, config: SearchConfig, *, log: bool = False) -> SearchResult:
    """Same search as :func:`arraymcts.array_mcts.search` over one global arena."""
    if len(root_state) != env.dim:
        raise ContractViolation("root state has the wrong dimension")
    store = init_global(root_state, config, env.num_actions)
    draws = make_draws(config)
    n, depth = config.num_simulations, config.max_depth
    if log:
        log_a = np.full((n, depth), -1, dtype=np.int64)
        log_r = np.zeros((n, depth))
    else:
        log_a = np.zeros((0, 0), dtype=np.int64)
        log_r = np.zeros((0, 0))
    g = store.arrays
    _g_run(g, env_kernel(env), draws, n, depth, config.exploration_c,
           config.overflow is OverflowPolicy.CLAMP, store.row_stride, log_a, log_r)
    if g.counters[2]:
        depth_fail, a_global = int(g.counters[3]), int(g.counters[4])
        rank = int(np.count_nonzero(g.action_depth[:a_global] == depth_fail))
        raise BranchingOverflowError(depth_fail, rank)
    rows = g.child_action_nodes[:env.num_actions]
    unset = len(g.action_values) - 1
    values = np.where(rows != unset, g.action_values[rows], -SATURATED_VALUE)
    best = max_index(values)
    return SearchResult(best, store, Trajectories(log_a, log_r) if log else None)
