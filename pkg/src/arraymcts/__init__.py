"""Layer-sorted, branch-light array MCTS with a linked-node reference."""

from .array_mcts import LayerStore, SearchResult, init_layers, search
from .config import OverflowPolicy, SearchConfig
from .errors import BranchingOverflowError, ConstructionError, ContractViolation
from .mdp import (
    BugTrapParams,
    EnvSpec,
    env_from_dict,
    load_env,
    make_bandit_env,
    make_bug_trap_env,
    make_chain_env,
    reward,
    step,
)
from .planning import run_episode
from .snapshot import TreeSnapshot
from .tree_mcts import search_ref
from .unsorted_mcts import search_unsorted

__all__ = [
    "BranchingOverflowError", "BugTrapParams", "ConstructionError", "ContractViolation",
    "EnvSpec", "LayerStore", "OverflowPolicy", "SearchConfig", "SearchResult", "TreeSnapshot",
    "env_from_dict", "init_layers", "load_env", "make_bandit_env", "make_bug_trap_env",
    "make_chain_env", "reward", "run_episode", "search", "search_ref", "search_unsorted", "step",
]
