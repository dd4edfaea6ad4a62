"""Exception hierarchy. Each category carries the CLI exit code it maps to."""


class LtcsError(Exception):
    exit_code = 1


class ConfigError(LtcsError, ValueError):
    exit_code = 2


class DataError(LtcsError, ValueError):
    exit_code = 3


class NumericalError(LtcsError, ArithmeticError):
    exit_code = 4


class ProtocolError(LtcsError):
    exit_code = 5


class InvalidArgumentError(LtcsError, ValueError):
    exit_code = 2


class StateError(LtcsError, RuntimeError):
    exit_code = 1


class ResourceError(LtcsError, MemoryError):
    exit_code = 1


class CheckpointError(DataError):
    pass
