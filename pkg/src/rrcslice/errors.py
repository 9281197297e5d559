"""Exception hierarchy shared by every module of the package."""


class RrcSliceError(Exception):
    """Base class for all errors raised by :mod:`rrcslice`."""


class InvalidDrxParams(RrcSliceError, ValueError):
    pass


class CapacityExceeded(RrcSliceError):
    pass


class UnknownSlice(RrcSliceError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class UnknownUe(RrcSliceError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class MalformedCommand(RrcSliceError, ValueError):
    pass


class PayloadTooLarge(RrcSliceError, ValueError):
    pass


class DecodeError(RrcSliceError, ValueError):
    pass


class IllegalProcedure(RrcSliceError):
    pass


class UnsupportedByRat(RrcSliceError):
    pass


class EmptyWindow(RrcSliceError, ValueError):
    pass


class InvalidWeight(RrcSliceError, ValueError):
    pass


class WrongMode(RrcSliceError):
    pass


class WindowIncomplete(RrcSliceError, ValueError):
    pass


class InvalidScenario(RrcSliceError, ValueError):
    """Scenario rejected by validation. ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
