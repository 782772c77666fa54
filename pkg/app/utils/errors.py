"""
Exception types raised by the tensor-radon services.

Each error also derives from the builtin exception a caller would expect,
so ``except ValueError`` keeps working around library calls.
"""


class TensorRadonError(Exception):
    """Base class for all library errors."""


class DimensionMismatchError(TensorRadonError, ValueError):
    """Orders, dimensions or array shapes do not fit together."""


class PhantomSupportError(TensorRadonError, ValueError):
    """A phantom term carries Gaussian mass outside the grid cube."""


class NyquistError(TensorRadonError, ValueError):
    """A requested frequency lies outside the Nyquist box of the grid."""


class DecompositionError(TensorRadonError, RuntimeError):
    """A per-frequency constrained system turned out singular."""


class NotInRangeError(TensorRadonError, ValueError):
    """Data is not in the range of the operator being inverted."""


class IncompleteDatasetError(TensorRadonError, KeyError):
    """A transform dataset lacks signatures needed for a reconstruction."""

    def __str__(self) -> str:
        # KeyError quotes its argument; keep the message readable
        return str(self.args[0]) if self.args else ""


class InconsistentDataError(TensorRadonError, ValueError):
    """Reconstruction residues show that the data cannot come from a field."""


class ArtifactFormatError(TensorRadonError, OSError):
    """A TFLD or SINO file is malformed or does not match its header."""


class UcpConfigurationError(TensorRadonError, ValueError):
    """A unique-continuation experiment was configured inconsistently."""
