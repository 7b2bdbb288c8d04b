"""Exception hierarchy. Every error raised by the package derives from TripletRegError."""


class TripletRegError(Exception):
    pass


class NonFiniteValue(TripletRegError, ValueError):
    pass


class ShapeError(TripletRegError, ValueError):
    pass


class BatchTooSmall(TripletRegError, ValueError):
    pass


class InvalidLabel(TripletRegError, ValueError):
    pass


class UnknownClass(TripletRegError, KeyError):
    pass


class NeedTwoClasses(TripletRegError, ValueError):
    pass


class ClassTooSmall(TripletRegError, ValueError):
    pass


class DegenerateVariance(TripletRegError, ValueError):
    pass


class EmptyTripletSet(TripletRegError, ValueError):
    pass


class IndivisibleBatch(TripletRegError, ValueError):
    pass


class NotEnoughClasses(TripletRegError, ValueError):
    pass


class InvalidConfig(TripletRegError, ValueError):
    pass


class TraceMismatch(TripletRegError, RuntimeError):
    pass


class OutOfRange(TripletRegError, ValueError):
    pass


class KTooLarge(TripletRegError, ValueError):
    pass


class EmptyInput(TripletRegError, ValueError):
    pass


class PlacementFailure(TripletRegError, RuntimeError):
    pass


class EventTooShort(TripletRegError, ValueError):
    pass


class ParseError(TripletRegError, ValueError):
    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line
