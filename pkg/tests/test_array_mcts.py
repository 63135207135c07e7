import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from arraymcts.array_mcts import (
    DrawStream,
    best_root_action,
    init_layers,
    layer_capacities,
    search,
    select_child_action,
    select_child_state,
    simulate_once,
)
from arraymcts.config import OverflowPolicy, SearchConfig
from arraymcts.errors import BranchingOverflowError, ConstructionError, ContractViolation
from arraymcts.mdp import SENTINEL_COORD, make_bandit_env, make_bug_trap_env, make_chain_env
from arraymcts.tree_mcts import search_ref
from arraymcts.unsorted_mcts import search_unsorted
from invariants import check_growth, check_store, counts

BANDIT = make_bandit_env((0.2, 0.5, 0.9))
CHAIN = make_chain_env(5)
TRAP = make_bug_trap_env()


def chain_dp(env, state, depth):
    """Optimal root actions by exhaustive backward induction."""
    def value(s, d):
        if d == 0:
            return 0.0
        return max(q(s, a, d) for a in range(env.num_actions))

    def q(s, a, d):
        nxt = env._step(s, a, 0.0)
        return env._reward(nxt) + value(nxt, d - 1)

    qs = [q(state, a, depth) for a in range(env.num_actions)]
    best = max(qs)
    return {a for a, v in enumerate(qs) if v == best}, best


def test_capacities_geometric():
    states, actions = layer_capacities(10**6, 3, (3, 3, 3))
    assert actions[1:] == [3, 27, 243]
    assert states == [1, 9, 81, 729]


def test_capacities_capped_by_simulations():
    states, actions = layer_capacities(5, 3, (3, 3))
    assert actions[1:] == [3, 5]
    assert states[1:] == [5, 5]


def test_init_layout():
    store = init_layers((0,), SearchConfig(100, 2, 3), 3)
    assert store.num_states(0) == 1 and store.state_visits(0)[0] == 0
    assert store.child_action_nodes(0).shape == (3, 1)
    assert (store.child_action_nodes(0) == store.action_capacity(1)).all()
    cs = store.child_state_nodes(1)
    assert cs.shape == (4, 3)
    assert (cs[:3] == store.state_capacity(1) - 1).all() and (cs[3] == 0).all()
    assert (store.state_nodes(1)[-1] == SENTINEL_COORD).all()
    assert store.action_visits(1)[-1] == 0


def test_max_depth_one_has_no_final_child_actions():
    store = init_layers((0,), SearchConfig(10, 1), 2)
    assert store.child_action_nodes(1).size == 0


def test_capacity_overflowing_index_range():
    with pytest.raises(ConstructionError):
        init_layers((0, 0, 0), SearchConfig(2**31 - 1, 20, 5), 4)


def visit(store, depth, idx, value=0.0):
    """Stand-in for the backup a full simulation would perform."""
    a = store.arrays
    i = int(a.action_off[depth]) + idx
    a.action_visits[i] += 1
    a.action_values[i] = value


def test_select_child_action_untried_then_fills():
    store = init_layers((0,), SearchConfig(10, 2), 3)
    assert select_child_action(store, 0, 0, 0.34) == 1
    assert store.num_actions(1) == 1
    assert store.child_action_nodes(0)[1, 0] == 0
    visit(store, 1, 0)
    # untried rows are now {0, 2}; floor(0.6 * 2) picks the second of them
    assert select_child_action(store, 0, 0, 0.6) == 2
    assert store.child_action_nodes(0)[2, 0] == 1
    visit(store, 1, 1)
    assert select_child_action(store, 0, 0, 0.6) == 0
    assert store.num_actions(1) == 3
    with pytest.raises(ContractViolation):
        select_child_action(store, 2, 0, 0.5)


def test_select_child_action_uses_uct_once_full():
    store = init_layers((0,), SearchConfig(10, 1), 2)
    assert select_child_action(store, 0, 0, 0.0) == 0
    visit(store, 1, 0, 0.1)
    assert select_child_action(store, 0, 0, 0.0) == 1
    visit(store, 1, 1, 0.7)
    store.arrays.state_visits[0] = 2
    before = store.child_action_nodes(0).copy()
    assert select_child_action(store, 0, 0, 0.99) == 1
    assert store.num_actions(1) == 2
    assert (store.child_action_nodes(0) == before).all()


def test_select_child_state_examples():
    store = init_layers((0, 0, 0), SearchConfig(10, 1, 2), 4)
    select_child_action(store, 0, 0, 0.0)
    visit(store, 1, 0)
    assert select_child_state(store, 1, 0, (4, 0, 0)) == 0
    assert store.child_state_nodes(1)[2, 0] == 1
    assert tuple(store.state_nodes(1)[0]) == (4, 0, 0)
    # exact rematch: same node, nothing grows
    assert select_child_state(store, 1, 0, (4, 0, 0)) == 0
    assert store.num_states(1) == 1 and store.child_state_nodes(1)[2, 0] == 1
    # two of three coordinates equal is still a different state
    assert select_child_state(store, 1, 0, (4, 1, 0)) == 1
    assert store.num_states(1) == 2
    # column full: FAIL raises, CLAMP reuses the closest child
    with pytest.raises(BranchingOverflowError) as err:
        select_child_state(store, 1, 0, (9, 9, 0))
    assert (err.value.depth, err.value.action_idx) == (1, 0)
    store.arrays.counters[2:] = 0
    assert select_child_state(store, 1, 0, (4, 1, 5), OverflowPolicy.CLAMP) == 1
    assert store.overflow_events == 1
    assert tuple(store.state_nodes(1)[1]) == (4, 1, 0)


def test_simulate_once_bookkeeping():
    cfg = SearchConfig(10, 2)
    store = init_layers(CHAIN.start, cfg, 2)
    stream = DrawStream.from_config(cfg)
    total = simulate_once(store, CHAIN, cfg, stream)
    assert counts(store, 2) == ([1, 1, 1], [0, 1, 1])
    assert store.state_visits(0)[0] == 1
    assert store.draws_used == 4 and stream.pos == 4
    assert total == 0.0  # no path of length 2 reaches +5


@pytest.mark.parametrize("env", [BANDIT, CHAIN, TRAP], ids=["bandit", "chain", "trap"])
@pytest.mark.parametrize("depth", [1, 3, 6])
def test_stepwise_simulation_matches_search_and_grows_slowly(env, depth):
    cfg = SearchConfig(60, depth, env.max_branching, env.exploration_hint, seed=11)
    store = init_layers(env.start, cfg, env.num_actions)
    stream = DrawStream.from_config(cfg)
    for _ in range(cfg.num_simulations):
        before = counts(store, depth)
        simulate_once(store, env, cfg, stream)
        check_growth(before, counts(store, depth), depth)
    check_store(store, cfg, env)
    assert store.snapshot() == search(env.start, env, cfg).snapshot()


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**63), depth=st.integers(1, 8), n=st.integers(1, 300),
       which=st.sampled_from(["bandit", "chain", "trap"]))
def test_invariants_hold(seed, depth, n, which):
    env = {"bandit": BANDIT, "chain": CHAIN, "trap": TRAP}[which]
    cfg = SearchConfig(n, depth, env.max_branching, env.exploration_hint, seed=seed)
    check_store(search(env.start, env, cfg).store, cfg, env)


def test_bandit_picks_best_arm():
    assert search(BANDIT.start, BANDIT, SearchConfig(1000, 1, seed=3)).best_action == 2


@pytest.mark.parametrize("depth", [5, 6])
def test_chain_matches_dp_oracle(depth):
    best, _ = chain_dp(CHAIN, CHAIN.start, depth)
    assert best == {1}
    for seed in range(5):
        assert search(CHAIN.start, CHAIN, SearchConfig(500, depth, seed=seed)).best_action in best


def test_single_simulation_returns_the_tried_action():
    r = search(BANDIT.start, BANDIT, SearchConfig(1, 1, seed=0))
    rows = r.store.child_action_nodes(0)[:, 0]
    tried = [i for i, a in enumerate(rows) if a != r.store.action_capacity(1)]
    assert tried == [r.best_action]
    assert best_root_action(r.store) == r.best_action


def test_snapshot_is_deterministic():
    cfg = SearchConfig(300, 5, 5, 100.0, seed=42)
    a = search(TRAP.start, TRAP, cfg).snapshot()
    assert a == search(TRAP.start, TRAP, cfg).snapshot()
    assert a != search(TRAP.start, TRAP, cfg.replace(seed=43)).snapshot()


def test_root_dimension_checked():
    with pytest.raises(ContractViolation):
        search((0, 0), TRAP, SearchConfig(10, 2, 5))


def test_overflow_fail_names_depth():
    cfg = SearchConfig(400, 4, 2, 100.0, seed=1)
    with pytest.raises(BranchingOverflowError) as err:
        search(TRAP.start, TRAP, cfg)
    assert 1 <= err.value.depth <= 4
    with pytest.raises(BranchingOverflowError) as ref_err:
        search_ref(TRAP.start, TRAP, cfg)
    with pytest.raises(BranchingOverflowError) as uns_err:
        search_unsorted(TRAP.start, TRAP, cfg)
    where = (err.value.depth, err.value.action_idx)
    assert where == (ref_err.value.depth, ref_err.value.action_idx)
    assert where == (uns_err.value.depth, uns_err.value.action_idx)


@pytest.mark.parametrize("seed", range(4))
def test_overflow_clamp_keeps_invariants_and_equivalence(seed):
    cfg = SearchConfig(400, 4, 2, 100.0, seed=seed, overflow="clamp")
    r = search(TRAP.start, TRAP, cfg)
    assert r.overflow_events > 0
    check_store(r.store, cfg, TRAP)
    ref = search_ref(TRAP.start, TRAP, cfg)
    assert ref.overflow_events == r.overflow_events
    assert r.snapshot().compare(ref.snapshot()) is None
    assert r.snapshot().compare(search_unsorted(TRAP.start, TRAP, cfg).snapshot()) is None
