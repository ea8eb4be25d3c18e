"""Exception types shared across the package."""


class ParadockError(Exception):
    """Base class for all package-specific errors."""


class DegenerateMatrix(ParadockError):
    """A matrix required to be invertible (or orientation-preserving) is not."""


class NearSingular(ParadockError):
    """A matrix is too close to singular for a stable decomposition."""


class NotPSD(ParadockError):
    """A matrix expected to be positive semi-definite has a negative eigenvalue."""


class TooFewPoints(ParadockError):
    """A point-set operation received fewer points than it can support."""


class DegenerateConfiguration(ParadockError):
    """A point set is collinear/coincident where a full-rank configuration is needed."""


class ParseError(ParadockError):
    """A structure file could not be parsed.

    Carries the 1-based line number of the offending record.
    """

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class EmptyStructure(ParadockError):
    """A parsed structure contains no usable residues."""


class NoContacts(ParadockError):
    """No residue pair of the bound complex falls under the contact threshold."""


class CorrespondenceError(ParadockError):
    """Two structures that must share residues node-for-node do not."""


class ConfigError(ParadockError):
    """A configuration value is missing, malformed, or out of range."""


class DegenerateHead(ParadockError):
    """The pose head produced a numerically degenerate frame at inference time."""


class NonFiniteLoss(ParadockError):
    """A loss or gradient evaluated to NaN/Inf.

    Carries the identifier of the sample that produced it.
    """

    def __init__(self, message, sample=None):
        if sample is not None:
            message = f"sample {sample!r}: {message}"
        super().__init__(message)
        self.sample = sample
