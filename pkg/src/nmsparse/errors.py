"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Shapes or block widths do not line up (e.g. block width not dividing c_in)."""


class DegenerateAxisError(ValueError):
    """An axis vector is too short, or the kept count is 0 or the full length."""


class PatternViolationError(ValueError):
    """A tensor offered for compression has a block with more than n nonzeros."""

    def __init__(self, block: int, message: str):
        super().__init__(message)
        self.block = block


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch: int, iteration: int):
        super().__init__(f"non-finite loss at epoch {epoch}, iteration {iteration}")
        self.epoch = epoch
        self.iteration = iteration
