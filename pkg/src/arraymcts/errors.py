class ContractViolation(ValueError):
    """An operation was called outside its documented preconditions."""


class ConstructionError(ValueError):
    """An environment or tree store could not be built from the given parameters."""


class BranchingOverflowError(RuntimeError):
    """A child-state column was full and the generated state matched no child."""

    def __init__(self, depth: int, action_idx: int):
        self.depth = depth
        self.action_idx = action_idx
        super().__init__(
            f"state branching cap exceeded at depth {depth}, action node {action_idx}; "
            "raise the cap for this layer or use the clamp overflow policy"
        )
