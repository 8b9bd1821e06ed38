"""Exception types shared across the package."""


class SMREError(Exception):
    """Base class for all package errors."""


class ShapeError(SMREError, ValueError):
    """Operand dimensions do not agree."""


class ContractError(SMREError, ValueError):
    """A precondition of an operation was violated."""


class DegenerateInputError(SMREError, ValueError):
    """Input is well-formed but mathematically degenerate (zero norm, all padding)."""


class NonFiniteError(SMREError, FloatingPointError):
    """A NaN or Inf appeared in a tensor."""


class ModeError(SMREError, RuntimeError):
    """Operation called in the wrong mode (e.g. the support branch at inference)."""


class CheckpointError(SMREError, ValueError):
    """Checkpoint file is malformed, truncated or incompatible."""


class DatasetError(SMREError, ValueError):
    """Corpus file failed to parse or validate."""
