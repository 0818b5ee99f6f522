"""Exception taxonomy shared by all pipeline stages.

The CLI maps these onto exit codes: InvalidConfig -> 2, DataError (and its
subclasses) -> 3, NumericFault -> 4.
"""


class HairganError(Exception):
    """Base class for all errors raised by this package."""


class InvalidConfig(HairganError):
    """Bad configuration file, flag value, or argument."""


class InvalidInput(HairganError):
    """A value violates an operation's precondition (non-finite, out of range)."""


class ShapeError(InvalidInput):
    """Tensor extents or channel counts do not match."""


class NumericFault(HairganError):
    """A NaN or Inf appeared in a tensor."""


class DataError(HairganError):
    """Problem with input data or files."""


class InvalidBust(DataError):
    """Bust mesh is unusable (no faces, empty scalp, ...)."""


class AmbiguityUnresolved(DataError):
    """No direction hints available to fix orientation signs."""


class DiffusionUnderconstrained(DataError):
    """No pixel reaches the confidence threshold; nothing to diffuse from."""


class EmptyShape(DataError):
    """Iso-surface extraction produced no geometry."""


class NoSeeds(DataError):
    """No valid strand seeds found on the scalp inside the rough shape."""
