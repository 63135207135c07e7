"""Layer-sorted, array-based UCT with branch-free child selection.

Every depth ``l`` of the tree owns eight parallel arrays: four for its state
nodes (coordinates, visits, parent action, child-action table) and four for
its action nodes (values, visits, parent state, child-state table). The
arrays of all layers live in eight flat buffers, each layer occupying its own
contiguous segment, so the per-layer layout is kept without a list of numpy
arrays (which numba handles poorly).

Index conventions inside layer ``l``:

* ``child_action_nodes`` is column-major ``|A| x S_l``: the ``|A|`` entries of
  one state are contiguous. Untried entries hold ``A_{l+1}``, one past the
  last action slot of layer ``l+1``; the action arrays carry a permanently
  zero slot there, so gathering an untried child reads zero visits.
* ``child_state_nodes`` is column-major ``(caps_l + 1) x A_l``. Rows
  ``0..caps_l-1`` list child states in creation order; row ``caps_l`` counts
  them. Unwritten rows point at slot ``S_l - 1``, which starts out holding
  the sentinel state.
* ``action_parent[l][a]`` is the state in layer ``l-1`` that spawned action
  ``a``; ``state_parent[l][s]`` is the action in layer ``l`` that produced
  state ``s``.
"""

from __future__ import annotations

from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .config import OverflowPolicy, SearchConfig, make_draws
from .errors import BranchingOverflowError, ConstructionError, ContractViolation
from .kernels import (
    SATURATED_VALUE,
    any_unvisited_jit,
    max_index,
    max_index_jit,
    random_untried_jit,
    uct_value_jit,
)
from .mdp import SENTINEL_COORD, EnvSpec, env_kernel, kernel_reward, kernel_step
from .snapshot import NodeEntry, TreeSnapshot

INDEX_DTYPE = np.int32
INDEX_MAX = int(np.iinfo(INDEX_DTYPE).max)

# counters[] slots
OVERFLOW_EVENTS, DRAWS_USED, FAILED, FAIL_DEPTH, FAIL_ACTION = range(5)

LayerArrays = namedtuple(
    "LayerArrays",
    [
        "state_nodes", "state_visits", "state_parent", "child_action_nodes",
        "action_values", "action_visits", "action_parent", "child_state_nodes",
        "num_states", "num_actions",
        "state_off", "action_off", "ca_off", "cs_off",
        "state_cap", "action_cap", "caps", "counters",
    ],
)


def layer_capacities(num_simulations: int, num_actions: int, caps) -> tuple[list[int], list[int]]:
    """Per-layer (state, action) capacities from the geometric bound, capped at N.

    Layer 0 holds only the root. Layer 1 gets one action slot per action;
    below that each layer is bounded both by branching from the layer above
    and by the one-new-node-per-simulation rule.
    """
    depth = len(caps)
    states = [1] + [0] * depth
    actions = [0] * (depth + 1)
    cur_child = num_actions
    for l in range(1, depth + 1):
        actions[l] = cur_child
        states[l] = min(num_simulations, cur_child * caps[l - 1])
        cur_child = min(num_simulations, states[l] * num_actions)
    return states, actions


@dataclass
class LayerStore:
    arrays: LayerArrays
    num_actions_per_state: int
    dim: int
    max_depth: int

    # -- per-layer views ----------------------------------------------------

    def _seg(self, offsets, l):
        return slice(int(offsets[l]), int(offsets[l + 1]))

    def state_capacity(self, l: int) -> int:
        return int(self.arrays.state_cap[l])

    def action_capacity(self, l: int) -> int:
        return int(self.arrays.action_cap[l])

    def num_states(self, l: int) -> int:
        return int(self.arrays.num_states[l])

    def num_actions(self, l: int) -> int:
        return int(self.arrays.num_actions[l])

    def state_nodes(self, l: int) -> np.ndarray:
        return self.arrays.state_nodes[self._seg(self.arrays.state_off, l)]

    def state_visits(self, l: int) -> np.ndarray:
        return self.arrays.state_visits[self._seg(self.arrays.state_off, l)]

    def state_parent(self, l: int) -> np.ndarray:
        return self.arrays.state_parent[self._seg(self.arrays.state_off, l)]

    def action_values(self, l: int) -> np.ndarray:
        """Action values of layer ``l`` including the trailing zero slot."""
        return self.arrays.action_values[self._seg(self.arrays.action_off, l)]

    def action_visits(self, l: int) -> np.ndarray:
        return self.arrays.action_visits[self._seg(self.arrays.action_off, l)]

    def action_parent(self, l: int) -> np.ndarray:
        return self.arrays.action_parent[self._seg(self.arrays.action_off, l)]

    def child_action_nodes(self, l: int) -> np.ndarray:
        """``|A| x S_l`` table (rows: action, columns: state); empty for the last layer."""
        flat = self.arrays.child_action_nodes[self._seg(self.arrays.ca_off, l)]
        return flat.reshape(-1, self.num_actions_per_state).T

    def child_state_nodes(self, l: int) -> np.ndarray:
        """``(caps_l + 1) x A_l`` table; the last row holds per-column child counts."""
        flat = self.arrays.child_state_nodes[self._seg(self.arrays.cs_off, l)]
        return flat.reshape(-1, int(self.arrays.caps[l]) + 1).T

    @property
    def overflow_events(self) -> int:
        return int(self.arrays.counters[OVERFLOW_EVENTS])

    @property
    def draws_used(self) -> int:
        return int(self.arrays.counters[DRAWS_USED])

    # -- canonical dump -----------------------------------------------------

    def snapshot(self) -> TreeSnapshot:
        root = self.state_nodes(0)[0]
        entries = [NodeEntry(0, "S", 0, -1, -1, int(self.state_visits(0)[0]), None,
                             tuple(int(c) for c in root))]
        for l in range(1, self.max_depth + 1):
            parent_table = self.child_action_nodes(l - 1)
            values = self.action_values(l).tolist()
            visits = self.action_visits(l).tolist()
            parents = self.action_parent(l).tolist()
            for a in range(self.num_actions(l)):
                p = parents[a]
                row = int(np.flatnonzero(parent_table[:, p] == a)[0])
                entries.append(NodeEntry(l, "A", a, p, row, visits[a], values[a], None))
            child_table = self.child_state_nodes(l)
            ns = child_table.shape[0] - 1
            coords = self.state_nodes(l).tolist()
            svisits = self.state_visits(l).tolist()
            sparents = self.state_parent(l).tolist()
            for s in range(self.num_states(l)):
                p = sparents[s]
                col = child_table[:ns, p]
                slot = int(np.flatnonzero(col[: child_table[ns, p]] == s)[0])
                entries.append(NodeEntry(l, "S", s, p, slot, svisits[s], None, tuple(coords[s])))
        return TreeSnapshot.from_entries(entries)


def init_layers(root_state, config: SearchConfig, num_actions: int) -> LayerStore:
    """Allocate and initialise the per-layer arrays for one search."""
    if num_actions < 1:
        raise ContractViolation("need at least one action")
    depth = config.max_depth
    caps = config.state_branch_caps
    states, actions = layer_capacities(config.num_simulations, num_actions, caps)
    dim = len(root_state)

    state_off = np.zeros(depth + 2, dtype=np.int64)
    state_off[1:] = np.cumsum(states)
    # one trailing zero slot per layer
    action_off = np.zeros(depth + 2, dtype=np.int64)
    action_off[1:] = np.cumsum([a + 1 for a in actions])
    ca_sizes = [states[l] * num_actions if l < depth else 0 for l in range(depth + 1)]
    ca_off = np.zeros(depth + 2, dtype=np.int64)
    ca_off[1:] = np.cumsum(ca_sizes)
    cs_sizes = [0] + [actions[l] * (caps[l - 1] + 1) for l in range(1, depth + 1)]
    cs_off = np.zeros(depth + 2, dtype=np.int64)
    cs_off[1:] = np.cumsum(cs_sizes)

    if max(state_off[-1], action_off[-1], ca_off[-1], cs_off[-1]) > INDEX_MAX:
        raise ConstructionError(
            f"tree capacity exceeds the {INDEX_DTYPE.__name__} index range; "
            "lower num_simulations or max_depth")

    state_nodes = np.zeros((int(state_off[-1]), dim), dtype=np.int64)
    state_nodes[0] = root_state
    child_action_nodes = np.empty(int(ca_off[-1]), dtype=INDEX_DTYPE)
    child_state_nodes = np.empty(int(cs_off[-1]), dtype=INDEX_DTYPE)
    for l in range(depth + 1):
        if l < depth:
            child_action_nodes[ca_off[l]:ca_off[l + 1]] = actions[l + 1]
        if l >= 1:
            state_nodes[state_off[l + 1] - 1] = SENTINEL_COORD
            block = child_state_nodes[cs_off[l]:cs_off[l + 1]].reshape(actions[l], caps[l - 1] + 1)
            block[:, :-1] = states[l] - 1
            block[:, -1] = 0

    arrays = LayerArrays(
        state_nodes=state_nodes,
        state_visits=np.zeros(int(state_off[-1]), dtype=np.int64),
        state_parent=np.full(int(state_off[-1]), -1, dtype=INDEX_DTYPE),
        child_action_nodes=child_action_nodes,
        action_values=np.zeros(int(action_off[-1]), dtype=np.float64),
        action_visits=np.zeros(int(action_off[-1]), dtype=np.int64),
        action_parent=np.full(int(action_off[-1]), -1, dtype=INDEX_DTYPE),
        child_state_nodes=child_state_nodes,
        num_states=np.array([1] + [0] * depth, dtype=np.int64),
        num_actions=np.zeros(depth + 1, dtype=np.int64),
        state_off=state_off,
        action_off=action_off,
        ca_off=ca_off,
        cs_off=cs_off,
        state_cap=np.asarray(states, dtype=np.int64),
        action_cap=np.asarray(actions, dtype=np.int64),
        caps=np.asarray([0, *caps], dtype=np.int64),
        counters=np.zeros(5, dtype=np.int64),
    )
    return LayerStore(arrays, num_actions, dim, depth)


# --- compiled kernels ---------------------------------------------------------


@njit(cache=True)
def _select_child_action(L, depth, s, draw, n_actions, c, vis_buf, uct_buf):
    ca = L.ca_off[depth] + s * n_actions
    a_off = L.action_off[depth + 1]
    parent_visits = L.state_visits[L.state_off[depth] + s]
    # Zero only before the root's first backup, when every child is untried
    # and the UCT values are discarded; keep log() finite.
    parent_visits += parent_visits == 0
    for a in range(n_actions):
        idx = L.child_action_nodes[ca + a]
        vis_buf[a] = L.action_visits[a_off + idx]
        uct_buf[a] = uct_value_jit(L.action_values[a_off + idx], vis_buf[a], parent_visits, c)
    untried = any_unvisited_jit(vis_buf)
    best = max_index_jit(uct_buf)
    new = random_untried_jit(vis_buf, draw)
    nxt = new * untried + best * (1 - untried)
    nxt_idx = L.num_actions[depth + 1] * untried + L.child_action_nodes[ca + best] * (1 - untried)
    L.child_action_nodes[ca + nxt] = nxt_idx
    L.num_actions[depth + 1] += untried
    return nxt


@njit(cache=True)
def _select_child_state(L, depth, a_idx, gen, clamp, match_buf):
    ns = L.caps[depth]
    dim = gen.shape[0]
    cs = L.cs_off[depth] + a_idx * (ns + 1)
    s_off = L.state_off[depth]
    for i in range(ns):
        row = s_off + L.child_state_nodes[cs + i]
        m = 0
        for d in range(dim):
            m += L.state_nodes[row, d] == gen[d]
        match_buf[i] = m
    match_idx = max_index_jit(match_buf[:ns])
    match_flag = match_buf[match_idx] == dim
    count = L.child_state_nodes[cs + ns]
    overflow = (1 - match_flag) * (count == ns)
    if overflow and not clamp:
        L.counters[2] = 1
        L.counters[3] = depth
        L.counters[4] = a_idx
        return -1
    reuse = match_flag | overflow
    idx_in_child = match_idx * reuse + count * (1 - reuse)
    nxt = L.child_state_nodes[cs + match_idx] * reuse + L.num_states[depth] * (1 - reuse)
    L.child_state_nodes[cs + idx_in_child] = nxt
    row = s_off + nxt
    # Unconditional store; on a clamped overflow the node keeps its own state.
    for d in range(dim):
        L.state_nodes[row, d] = L.state_nodes[row, d] * overflow + gen[d] * (1 - overflow)
    L.child_state_nodes[cs + ns] += 1 - reuse
    L.num_states[depth] += 1 - reuse
    L.counters[0] += overflow
    return nxt


@njit(cache=True)
def _simulate_once(L, ek, draws, pos, c, clamp, sim, log_actions, log_returns,
                   cur, gen, vis_buf, uct_buf, match_buf):
    depth = L.num_states.shape[0] - 1
    n_actions = ek.n_actions
    dim = cur.shape[0]
    for d in range(dim):
        cur[d] = L.state_nodes[0, d]
    s = 0
    for l in range(depth):
        row = _select_child_action(L, l, s, draws[pos], n_actions, c, vis_buf, uct_buf)
        a_idx = L.child_action_nodes[L.ca_off[l] + s * n_actions + row]
        L.action_parent[L.action_off[l + 1] + a_idx] = s
        kernel_step(ek, cur, row, draws[pos + 1], gen)
        pos += 2
        L.counters[1] += 2
        s = _select_child_state(L, l + 1, a_idx, gen, clamp, match_buf)
        if s < 0:
            return 0.0
        L.state_parent[L.state_off[l + 1] + s] = a_idx
        for d in range(dim):
            cur[d] = gen[d]

    L.state_visits[L.state_off[depth] + s] += 1
    logging = log_actions.shape[0] > 0
    summed = 0.0
    for l in range(depth - 1, -1, -1):
        summed += kernel_reward(ek, L.state_nodes[L.state_off[l + 1] + s])
        a_idx = L.state_parent[L.state_off[l + 1] + s]
        ai = L.action_off[l + 1] + a_idx
        L.action_visits[ai] += 1
        L.action_values[ai] += (summed - L.action_values[ai]) / L.action_visits[ai]
        if logging:
            log_actions[sim, l] = a_idx
            log_returns[sim, l] = summed
        s = L.action_parent[ai]
        L.state_visits[L.state_off[l] + s] += 1
    return summed


@njit(cache=True)
def _run(L, ek, draws, start_sim, n_sims, c, clamp, log_actions, log_returns):
    dim = L.state_nodes.shape[1]
    n_actions = ek.n_actions
    cur = np.empty(dim, dtype=np.int64)
    gen = np.empty(dim, dtype=np.int64)
    vis_buf = np.empty(n_actions, dtype=np.int64)
    uct_buf = np.empty(n_actions, dtype=np.float64)
    match_buf = np.empty(L.caps.max(), dtype=np.int64)
    per_sim = 2 * (L.num_states.shape[0] - 1)
    summed = 0.0
    for i in range(start_sim, start_sim + n_sims):
        summed = _simulate_once(L, ek, draws, i * per_sim, c, clamp, i, log_actions, log_returns,
                                cur, gen, vis_buf, uct_buf, match_buf)
        if L.counters[2]:
            break
    return summed


# --- Python surface -------------------------------------------------------------


class DrawStream:
    """Pre-generated uniform draws consumed in a fixed order."""

    def __init__(self, draws: np.ndarray):
        self.draws = np.ascontiguousarray(draws, dtype=np.float64)
        self.pos = 0

    @classmethod
    def from_config(cls, config: SearchConfig) -> "DrawStream":
        return cls(make_draws(config))

    def take(self, k: int) -> float:
        v = self.draws[self.pos]
        self.pos += k
        return v


def _raise_if_failed(store: LayerStore) -> None:
    cnt = store.arrays.counters
    if cnt[FAILED]:
        raise BranchingOverflowError(int(cnt[FAIL_DEPTH]), int(cnt[FAIL_ACTION]))


def select_child_action(layers: LayerStore, depth: int, cur_state_idx: int, draw: float,
                        exploration_c: float = 1.0) -> int:
    """Pick the next action row at ``(depth, cur_state_idx)`` and record the child link."""
    if not 0 <= depth < layers.max_depth:
        raise ContractViolation(f"depth {depth} has no child actions")
    if not 0 <= cur_state_idx < layers.num_states(depth):
        raise ContractViolation(f"state {cur_state_idx} not realised at depth {depth}")
    n = layers.num_actions_per_state
    return int(_select_child_action(layers.arrays, depth, cur_state_idx, draw, n, exploration_c,
                                    np.empty(n, np.int64), np.empty(n)))


def select_child_state(layers: LayerStore, depth: int, cur_action_idx: int, generated_state,
                       overflow: OverflowPolicy = OverflowPolicy.FAIL) -> int:
    """Find or create the child of action ``cur_action_idx`` equal to ``generated_state``."""
    if not 1 <= depth <= layers.max_depth:
        raise ContractViolation(f"depth {depth} has no action nodes")
    if not 0 <= cur_action_idx < layers.num_actions(depth):
        raise ContractViolation(f"action {cur_action_idx} not realised at depth {depth}")
    gen = np.asarray(generated_state, dtype=np.int64)
    if gen.shape != (layers.dim,):
        raise ContractViolation("generated state has the wrong dimension")
    clamp = OverflowPolicy(overflow) is OverflowPolicy.CLAMP
    idx = _select_child_state(layers.arrays, depth, cur_action_idx, gen, clamp,
                              np.empty(int(layers.arrays.caps[depth]), np.int64))
    _raise_if_failed(layers)
    return int(idx)


def simulate_once(layers: LayerStore, env: EnvSpec, config: SearchConfig, stream: DrawStream,
                  sim_index: int = 0) -> float:
    """Run one descent/backup pass; returns the root-level accumulated reward."""
    ek = env_kernel(env)
    sub = stream.draws[stream.pos:stream.pos + config.draws_per_simulation]
    if len(sub) < config.draws_per_simulation:
        raise ContractViolation("draw stream exhausted")
    empty_i = np.zeros((0, 0), dtype=np.int64)
    total = _run(layers.arrays, ek, sub, 0, 1, config.exploration_c,
                 config.overflow is OverflowPolicy.CLAMP, empty_i, np.zeros((0, 0)))
    _raise_if_failed(layers)
    stream.pos += config.draws_per_simulation
    return float(total)


def best_root_action(layers: LayerStore) -> int:
    """Root action row with the highest value among tried actions (ties: lowest row)."""
    unset = layers.action_capacity(1)
    rows = layers.child_action_nodes(0)[:, 0]
    values = layers.action_values(1)[rows]
    tried = rows != unset
    return max_index(np.where(tried, values, -SATURATED_VALUE))


@dataclass
class Trajectories:
    """Per-simulation record of the action node crossed at each layer and the
    accumulated reward backed up into it (``returns[i, l]`` for layer ``l+1``)."""

    actions: np.ndarray
    returns: np.ndarray


@dataclass
class SearchResult:
    best_action: int
    store: object
    trajectories: Trajectories | None = None
    extra: dict = field(default_factory=dict)

    def snapshot(self) -> TreeSnapshot:
        return self.store.snapshot()

    @property
    def overflow_events(self) -> int:
        return self.store.overflow_events

    @property
    def draws_used(self) -> int:
        return self.store.draws_used


def search(root_state, env: EnvSpec, config: SearchConfig, *, log: bool = False) -> SearchResult:
    """Run ``config.num_simulations`` simulations from ``root_state``."""
    if len(root_state) != env.dim:
        raise ContractViolation("root state has the wrong dimension")
    layers = init_layers(root_state, config, env.num_actions)
    draws = make_draws(config)
    n, depth = config.num_simulations, config.max_depth
    if log:
        log_a = np.full((n, depth), -1, dtype=np.int64)
        log_r = np.zeros((n, depth))
    else:
        log_a = np.zeros((0, 0), dtype=np.int64)
        log_r = np.zeros((0, 0))
    _run(layers.arrays, env_kernel(env), draws, 0, n, config.exploration_c,
         config.overflow is OverflowPolicy.CLAMP, log_a, log_r)
    _raise_if_failed(layers)
    return SearchResult(best_root_action(layers), layers,
                        Trajectories(log_a, log_r) if log else None)


def snapshot(layers: LayerStore) -> TreeSnapshot:
    return layers.snapshot()
