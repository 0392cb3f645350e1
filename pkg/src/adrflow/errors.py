"""Exception types shared across the package."""


class AdrflowError(Exception):
    """Base class for all adrflow errors."""


class ShapeMismatchError(AdrflowError):
    """Raised when operand shapes are incompatible. Names both shapes."""

    def __init__(self, context: str, left, right):
        self.left = tuple(left)
        self.right = tuple(right)
        super().__init__(f"{context}: shape {self.left} vs {self.right}")


class ConfigError(AdrflowError):
    """Invalid run configuration (unknown key, bad value, missing file)."""


class ContainerFormatError(AdrflowError):
    """Malformed tensor container file. Carries the byte offset of the fault."""

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (at byte offset {offset})")


class NonFiniteError(AdrflowError):
    """An operator input violated the all-entries-finite contract."""


class DivergenceError(AdrflowError):
    """Training loss became non-finite."""

    def __init__(self, epoch: int, loss):
        self.epoch = epoch
        self.loss = loss
        super().__init__(f"non-finite loss {loss} at epoch {epoch}")
