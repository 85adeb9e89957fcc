"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class LVBuddyError(Exception):
    exit_code = 1


class ConfigError(LVBuddyError, ValueError):
    exit_code = 2


class DataError(LVBuddyError, ValueError):
    exit_code = 3


class NumericalError(LVBuddyError, ArithmeticError):
    exit_code = 4


class WindowMismatchError(DataError):
    pass


class UnusableSeriesError(DataError):
    pass


class EmptyCandidateGroupError(DataError):
    pass


class UnsupportedFeederError(DataError):
    pass


class DegenerateNormalizerError(NumericalError):
    pass


class RankDeficientError(NumericalError):
    pass
