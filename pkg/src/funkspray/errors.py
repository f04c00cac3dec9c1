"""Exception hierarchy shared by all modules."""


class FunkSprayError(Exception):
    """Base class for library errors."""


class DomainError(FunkSprayError, ValueError):
    """A point lies outside a field's domain or a jet operation is undefined there."""


class SingularMetric(FunkSprayError, ArithmeticError):
    """The fundamental tensor is (numerically) degenerate."""


class HomogeneityError(FunkSprayError, ValueError):
    """A field violates its declared homogeneity degree."""


class PreconditionError(FunkSprayError, ValueError):
    pass


class DegenerateInput(FunkSprayError, ValueError):
    pass


class AnsatzDomainError(DomainError):
    """The rational ansatz denominator comes too close to zero."""


class ParseError(FunkSprayError, ValueError):
    """Syntax error in an expression, located by byte offset."""

    def __init__(self, message: str, offset: int, source: str = ""):
        self.message = message
        self.offset = offset
        self.source = source
        super().__init__(f"{message} at offset {offset}")


class CompileError(FunkSprayError, ValueError):
    pass
