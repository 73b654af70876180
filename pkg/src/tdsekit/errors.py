"""Exception types raised across the package."""


class TdseKitError(Exception):
    """Base class for every error raised by tdsekit."""


class NumericalFailure(TdseKitError):
    """An algorithm did not reach its stopping criterion."""


class NonHermitianInput(TdseKitError, ValueError):
    pass


class NonAntiHermitianInput(TdseKitError, ValueError):
    pass


class NoConvergence(NumericalFailure):
    pass


class DimensionMismatch(TdseKitError, ValueError):
    pass


class InvalidParameter(TdseKitError, ValueError):
    pass


class EmptyEnsemble(InvalidParameter):
    pass


class OutOfDomain(TdseKitError, ValueError):
    pass


class IndexOutOfRange(TdseKitError, IndexError):
    pass


class FieldOutOfToolkitRange(TdseKitError, ValueError):
    pass


class StepMismatch(TdseKitError, ValueError):
    pass


class FormatError(TdseKitError):
    """A toolkit cache file is truncated, corrupted or has an unknown version."""


class FingerprintMismatch(TdseKitError):
    """A toolkit was built for a different (H0, mu) pair than the one in use."""


class DegenerateInput(TdseKitError, ValueError):
    pass


class SearchExhausted(NumericalFailure):
    pass
