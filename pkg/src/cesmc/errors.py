"""Exception hierarchy."""


class CesmcError(Exception):
    """Base class for all errors raised by the package."""


class ParseError(CesmcError):
    """Syntax or semantic error in a model or property text."""

    def __init__(self, message, line=None, column=None):
        self.message = message
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)


class ModelError(CesmcError):
    """Runtime error while evaluating a model (bad rate, bound violation...)."""


class Deadlock(CesmcError):
    """No command has positive tilted rate in the current state."""


class UnsupportedProperty(CesmcError):
    pass


class NoHitsError(CesmcError):
    """A batch of traces contained no trace satisfying the property."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history


class InitialSearchFailed(CesmcError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class StateSpaceTooLarge(CesmcError):
    def __init__(self, cap):
        super().__init__(f"reachable state space exceeds cap of {cap} states")
        self.cap = cap


class ConvergenceError(CesmcError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class InternalConsistencyError(CesmcError):
    pass
