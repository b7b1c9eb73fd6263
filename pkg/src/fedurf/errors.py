"""Exception types raised across the package."""


class FedurfError(Exception):
    """Base class for all package-specific errors."""


class MatrixParseError(FedurfError):
    """Input file could not be parsed into a valid matrix."""


class DuplicateId(MatrixParseError):
    """A sample or feature identifier occurs more than once."""


class PreprocessError(FedurfError):
    """Preprocessing left no usable data or was misconfigured."""


class FeatureAllMissing(PreprocessError):
    """A feature has no observed values, so it cannot be imputed."""


class ZeroBetweenDispersion(FedurfError):
    """Candidate split has zero between-group dispersion (rejected)."""


class FeatureMismatch(FedurfError):
    """Data feature count does not match the model's feature space."""


class SampleMismatch(FedurfError):
    """Two sample-indexed structures disagree on samples or ordering."""


class EmptyCluster(FedurfError):
    """A referenced cluster contains no samples."""


class MissingLeafLabel(FedurfError):
    """A routed leaf has no entry in the supplied leaf-label map."""


class ZeroVariance(FedurfError):
    """A constant vector was passed where variance is required."""


class EmptyBundle(FedurfError):
    """A model bundle must contain at least one tree."""


class FormatVersionError(FedurfError):
    """Serialized model has an unsupported format version."""
