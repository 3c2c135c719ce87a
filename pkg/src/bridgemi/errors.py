"""Exception hierarchy shared by all modules."""


class BridgeMIError(Exception):
    """Base class for every error raised by bridgemi."""


class NumericalError(BridgeMIError):
    pass


class DataError(BridgeMIError):
    pass


class ConfigError(BridgeMIError):
    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(f"{field}: {message}" if field else message)


class NotPositiveDefinite(NumericalError):
    def __init__(self, pivot: int):
        self.pivot = pivot
        super().__init__(f"matrix is not positive definite (pivot {pivot} <= 0)")


class SingularCovariance(NumericalError):
    pass


class InsufficientSamples(DataError):
    pass


class TooFewSamples(DataError):
    pass


class ZeroVariance(DataError):
    pass


class TargetTooSmall(DataError):
    pass


class ParseError(DataError):
    def __init__(self, path: str, row: int, column: int, value: str):
        self.path, self.row, self.column, self.value = path, row, column, value
        super().__init__(f"{path}: row {row}, column {column}: cannot parse {value!r} as a number")


class LengthMismatch(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class SampleOutsideSupport(DataError):
    pass


class InfeasibleTarget(ConfigError):
    pass


class NoClosedDensity(ConfigError):
    pass


class SingularTime(NumericalError):
    pass


class NonFiniteState(NumericalError):
    pass


class NonFiniteLoss(NumericalError):
    def __init__(self, step: int, checkpoint=None):
        self.step = step
        self.checkpoint = checkpoint
        super().__init__(f"training loss became non-finite at step {step}")


class ShapeMismatch(DataError):
    pass


class StaleCache(BridgeMIError):
    pass
