"""Exception hierarchy and the CLI exit codes attached to each failure class."""


class ThermfrontError(Exception):
    exit_code = 1


class InvalidArgument(ThermfrontError, ValueError):
    exit_code = 2


class ConfigError(InvalidArgument):
    exit_code = 2


class InvalidState(ThermfrontError):
    exit_code = 2


class ResourceLimit(ThermfrontError):
    exit_code = 3


class NumericalFailure(ThermfrontError):
    exit_code = 4


class FitFailure(ThermfrontError):
    exit_code = 5


class UnsupportedOperation(ThermfrontError):
    exit_code = 5
