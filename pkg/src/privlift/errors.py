"""Exception hierarchy. Grouped by CLI exit code: config (2), data (3), numerical (4)."""


class PrivliftError(Exception):
    """Base class for all library errors."""


class ConfigError(PrivliftError):
    """Invalid or unknown configuration."""


class InvalidDimension(ConfigError):
    """Subspace dimension m outside [1, n)."""


class InvalidK(ConfigError):
    """Neighbor count K outside [1, database size]."""


class DataError(PrivliftError):
    """Malformed or inconsistent input data."""


class DimensionMismatch(DataError):
    """Operands live in different ambient dimensions."""


class HeterogeneousDimensions(DataError):
    """Items of one batch disagree on n or m."""


class IncompatibleKinds(DataError):
    """Mixed record kinds that no distance mode accepts."""


class FileFormatError(DataError):
    """Corrupt or truncated vector-set file."""


class EmptyDatabase(DataError):
    """Attack or codebook database has no entries."""


class MetadataMissing(DataError):
    """Operation needs test-mode lift metadata that was not recorded."""


class NonDivisible(DataError):
    """Sub-database count does not divide the codebook size."""


class CodebookTooSmall(DataError):
    """Codebook has fewer entries than the lift requires."""


class InvalidSubdatabaseIndex(DataError):
    """Sub-database index outside [0, S) or codebook has no partition."""


class InsufficientOppositeLabelEntries(DataError):
    """Not enough codebook entries with a label differing from the input."""


class NumericalError(PrivliftError):
    """Numerical failure in a linear-algebra kernel."""


class AllVectorsDegenerate(NumericalError):
    """Every input vector is numerically zero at the given tolerance."""


class NearSingular(NumericalError):
    """Fast solver refused an ill-conditioned system; use the general path."""


class CodebookDegenerate(NumericalError):
    """Resampling could not produce a full-rank basis from the codebook."""
