from __future__ import annotations


class EbdoError(ValueError):
    pass


class InvalidSchedule(EbdoError):
    pass


class EmptySchedule(InvalidSchedule):
    pass


class ScheduleShapeMismatch(InvalidSchedule):
    pass


class NonIncreasingMaturities(InvalidSchedule):
    pass


class NegativeEquity(InvalidSchedule):
    pass


class NegativeVolatility(InvalidSchedule):
    pass


class PayoffNonzeroAtZero(InvalidSchedule):
    pass


class DecreasingPayoff(InvalidSchedule):
    pass


class MalformedPayoff(InvalidSchedule):
    pass


class NegativeDuration(EbdoError):
    pass


class NegativeArgument(EbdoError):
    pass


class NotStrictlyIncreasing(EbdoError):
    pass


class GridTooCoarse(EbdoError):
    pass


class TimeOutOfRange(EbdoError):
    pass


class BadInterval(EbdoError):
    pass


class UnknownContract(EbdoError):
    pass


class ConfigError(EbdoError):
    def __init__(self, field: str, message: str) -> None:
        super().__init__(f"{field}: {message}")
        self.field = field
