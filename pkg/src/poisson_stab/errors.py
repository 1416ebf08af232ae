"""Exception hierarchy shared by every module."""


class PoissonStabError(Exception):
    """Base class; ``kind`` is the machine-readable tag used by the CLI."""

    kind = "error"


class ExprError(PoissonStabError):
    kind = "parse"


class ExprSyntaxError(ExprError):
    def __init__(self, message, position, expected=()):
        self.position = position
        self.expected = tuple(sorted(set(expected)))
        detail = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at position {position}{detail}")


class UnknownIdentifier(ExprError):
    def __init__(self, name, position):
        self.name = name
        self.position = position
        super().__init__(f"unknown identifier {name!r} at position {position}")


class ArityError(ExprError):
    pass


class DomainError(PoissonStabError):
    """Raised when a sub-expression is evaluated outside its domain."""

    kind = "numerical"

    def __init__(self, message, subexpression=None):
        self.subexpression = subexpression
        suffix = f" in {subexpression}" if subexpression is not None else ""
        super().__init__(message + suffix)


class DimensionMismatch(PoissonStabError, ValueError):
    kind = "validation"


class NotPoisson(PoissonStabError):
    """Antisymmetry or the sampled Jacobi identity failed."""

    kind = "validation"


class InconsistentRank(PoissonStabError):
    kind = "numerical"


class NearSingular(PoissonStabError):
    kind = "numerical"


class NotCatalogued(PoissonStabError):
    kind = "not_catalogued"


class NotAGenerator(PoissonStabError):
    kind = "validation"


class WrongDimension(PoissonStabError):
    kind = "validation"


class NotEquilibrium(PoissonStabError):
    kind = "validation"


class StepSizeUnderflow(PoissonStabError):
    kind = "numerical"


class UnsupportedCase(PoissonStabError):
    kind = "validation"


class NotFound(PoissonStabError, KeyError):
    kind = "not_found"

    def __init__(self, name, suggestion=None):
        self.name = name
        self.suggestion = suggestion
        msg = f"no catalogue entry named {name!r}"
        if suggestion:
            msg += f"; did you mean {suggestion!r}?"
        super().__init__(msg)

    def __str__(self):
        return self.args[0]


class InvalidT2(PoissonStabError):
    """T2 data violating its containment invariants."""

    kind = "validation"
