"""Exception hierarchy shared by all sysc modules."""


class SyscError(Exception):
    """Base class for every error raised by this package."""


# --- design files -----------------------------------------------------------

class DesignSyntaxError(SyscError):
    def __init__(self, message, pos, line, col, expected=()):
        self.pos = pos
        self.line = line
        self.col = col
        self.expected = tuple(expected)
        detail = f"{line}:{col}: {message}"
        if self.expected:
            detail += f" (expected {', '.join(self.expected)})"
        super().__init__(detail)


class SemanticError(SyscError):
    def __init__(self, message, line=None, col=None):
        self.line = line
        self.col = col
        if line is not None:
            message = f"{line}:{col}: {message}"
        super().__init__(message)


# --- URE core ---------------------------------------------------------------

class NonUniformDependence(SyscError):
    pass


class MultipleDependences(SyscError):
    pass


class UndefinedRead(SyscError):
    """A variable or input element was read that does not exist (yet)."""


class UndefinedSelect(SyscError):
    """The poison value of a one-armed select was consumed."""


class DoubleWrite(SyscError):
    pass


class MissingOutput(SyscError):
    def __init__(self, missing):
        self.missing = list(missing)
        head = ", ".join(map(str, self.missing[:5]))
        super().__init__(f"{len(self.missing)} output element(s) never written: {head}")


class EvaluationOrderError(SyscError):
    pass


# --- transform math ---------------------------------------------------------

class DimensionMismatch(SyscError):
    pass


class OuterDependence(SyscError):
    pass


class NotUnimodular(SyscError):
    def __init__(self, det):
        self.det = det
        super().__init__(f"transform matrix is not unimodular (det = {det})")


class InvalidProjection(SyscError):
    pass


class PatternInapplicable(SyscError):
    pass


class InvalidTransform(SyscError):
    def __init__(self, report):
        self.report = report
        super().__init__(f"space-time transform is invalid:\n{report.describe()}")


# --- IR passes --------------------------------------------------------------

class NonDivisibleFactor(SyscError):
    pass


class BadPermutation(SyscError):
    pass


class ThreadsInsideSerial(SyscError):
    pass


class MissingReverse(SyscError):
    pass


class BadReverse(SyscError):
    pass


class UnknownLoop(SyscError):
    pass


# --- simulation / emission / gallery ----------------------------------------

class PoisonRead(SyscError):
    pass


class OutputCollision(SyscError):
    pass


class UnloweredNest(SyscError):
    pass


class UnknownKey(SyscError):
    pass


class BadOverride(SyscError):
    pass
