"""Exception types raised across the toolkit."""


class NssfError(Exception):
    """Base class for all toolkit errors."""


class NoUtterances(NssfError):
    pass


class UnsupportedFormat(NssfError):
    pass


class GeometryError(NssfError):
    pass


class SignalTooShort(NssfError):
    pass


class ShapeError(NssfError, ValueError):
    pass


class DomainError(NssfError, ValueError):
    pass


class DatasetError(NssfError):
    pass


class DegenerateTarget(NssfError, ValueError):
    pass


class TrainingDiverged(NssfError, RuntimeError):
    pass


class StageError(NssfError, ValueError):
    pass


class DegenerateSequence(NssfError, ValueError):
    pass
