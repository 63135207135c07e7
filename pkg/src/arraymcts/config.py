from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractViolation


class OverflowPolicy(str, enum.Enum):
    FAIL = "fail"
    CLAMP = "clamp"  # reuse the best partial match, count an overflow event


@dataclass(frozen=True)
class SearchConfig:
    """Parameters of one search call.

    ``state_branch_caps[l - 1]`` is the assumed maximum number of distinct
    child states per action node in layer ``l`` (``l = 1 .. max_depth``).
    An int is broadcast to every layer.
    """

    num_simulations: int
    max_depth: int
    state_branch_caps: Sequence[int] | int = 1
    exploration_c: float = 1.0
    seed: int = 0
    overflow: OverflowPolicy = OverflowPolicy.FAIL

    def __post_init__(self):
        if self.num_simulations < 1:
            raise ContractViolation("num_simulations must be positive")
        if self.max_depth < 1:
            raise ContractViolation("max_depth must be positive")
        caps = self.state_branch_caps
        if isinstance(caps, (int, np.integer)):
            caps = (int(caps),) * self.max_depth
        caps = tuple(int(c) for c in caps)
        if len(caps) != self.max_depth:
            raise ContractViolation(
                f"need {self.max_depth} state branching caps, got {len(caps)}")
        if min(caps) < 1:
            raise ContractViolation("state branching caps must be >= 1")
        if not self.exploration_c >= 0:
            raise ContractViolation("exploration constant must be >= 0")
        object.__setattr__(self, "state_branch_caps", caps)
        object.__setattr__(self, "overflow", OverflowPolicy(self.overflow))

    @property
    def draws_per_simulation(self) -> int:
        return 2 * self.max_depth

    def replace(self, **changes) -> "SearchConfig":
        fields = {f: getattr(self, f) for f in self.__dataclass_fields__}
        fields.update(changes)
        if "max_depth" in changes and "state_branch_caps" not in changes:
            fields["state_branch_caps"] = max(self.state_branch_caps)
        return SearchConfig(**fields)


def make_draws(config: SearchConfig) -> np.ndarray:
    """The full uniform stream one search consumes.

    Simulation ``i`` at layer ``l`` reads its action draw at ``i*2D + 2l`` and
    its noise draw right after it, ``D`` being ``max_depth``.
    """
    rng = np.random.default_rng(config.seed % 2**64)
    return rng.random(config.num_simulations * config.draws_per_simulation)
