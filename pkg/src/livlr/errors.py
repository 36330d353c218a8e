"""Exception types shared across the package.

The split matters for the CLI, which maps error families to exit codes:
config problems exit 2, data problems exit 3 (malformed datasets and
checkpoint files both count as bad input data), numeric failures exit 4.
"""


class LivlrError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(LivlrError):
    """Operands or buffers have incompatible shapes. Message names both."""


class ContractError(LivlrError):
    """A caller violated a documented precondition (bad label index,
    non-scalar loss, empty pooling subset, stale tape reference, ...)."""


class DegenerateRowError(ContractError):
    """A softmax row had every entry masked out."""


class GraphIntegrityError(LivlrError):
    """A graph structure is inconsistent: an edge without a type label,
    a parse argument pointing at a missing predicate, a self loop."""


class ConfigError(LivlrError):
    """A model or task configuration is malformed or inconsistent."""


class DataError(LivlrError):
    """Input data violates the documented feature layout or bounds."""


class NumericError(LivlrError):
    """Training produced a non-finite value; message names the first
    offending parameter when one can be identified."""


class CheckpointError(LivlrError):
    """A checkpoint file is malformed, truncated or mismatched."""
