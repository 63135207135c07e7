import pytest

from arraymcts.array_mcts import search
from arraymcts.config import SearchConfig
from arraymcts.errors import ContractViolation
from arraymcts.mdp import make_bandit_env, make_bug_trap_env, make_chain_env
from arraymcts.unsorted_mcts import init_global, search_unsorted

TRAP = make_bug_trap_env()


def test_arena_sized_like_layered_store():
    store = init_global((0,), SearchConfig(100, 2, 3), 3)
    g = store.arrays
    # 1 + 9 + 81 capped at 100 states, 3 + 27 actions, plus one spare slot each
    assert len(g.state_visits) == 1 + 9 + 81 + 1
    assert len(g.action_visits) == 3 + 27 + 1
    assert store.row_stride == 4


@pytest.mark.parametrize("env", [make_bandit_env((0.2, 0.5, 0.9)), make_chain_env(5), TRAP],
                         ids=["bandit", "chain", "trap"])
def test_same_tree_as_layered_search(env):
    for seed in range(3):
        for depth in (1, 4, 8):
            cfg = SearchConfig(250, depth, env.max_branching, env.exploration_hint, seed=seed)
            a = search(env.start, env, cfg)
            u = search_unsorted(env.start, env, cfg)
            assert a.snapshot().compare(u.snapshot()) is None
            assert a.best_action == u.best_action
            assert u.draws_used == cfg.num_simulations * 2 * depth


def test_root_dimension_checked():
    with pytest.raises(ContractViolation):
        search_unsorted((0,), TRAP, SearchConfig(5, 1, 5))
