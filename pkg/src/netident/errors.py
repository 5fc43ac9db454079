"""Exception hierarchy for netident."""


class NetIdentError(Exception):
    """Base class for every error raised by this package."""


class SpecError(NetIdentError):
    """A network specification violates a structural invariant."""


class CycleDetected(SpecError):
    pass


class Disconnected(SpecError):
    pass


class DuplicateEdge(SpecError):
    pass


class EmptyDictionary(SpecError):
    pass


class BasisNonzeroAtOrigin(SpecError):
    pass


class LinearOnlyEdge(SpecError):
    """An edge of an F_ZNL network carries only the identity monomial."""


class SpecParseError(SpecError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnmeasuredSink(NetIdentError):
    pass


class UnsupportedTopology(NetIdentError):
    pass


class NonFiniteState(NetIdentError):
    pass


class InsufficientSamples(NetIdentError):
    pass


class OrderTooHigh(NetIdentError):
    pass


class GatingExhausted(NetIdentError):
    pass


class RankDeficient(NetIdentError):
    def __init__(self, message, condition=None, hazard=None):
        self.condition = condition
        self.hazard = hazard
        super().__init__(message)


class DictionaryMismatch(NetIdentError):
    pass


class StageFailed(NetIdentError):
    """Wraps an error raised while identifying one stage."""

    def __init__(self, stage_index, cause):
        self.stage_index = stage_index
        self.cause = cause
        super().__init__(f"stage {stage_index}: {type(cause).__name__}: {cause}")
