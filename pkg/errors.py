"""Exceptions shared by every apep module."""


class ApepError(Exception):
    """Base class for all toolkit errors."""


class DomainError(ApepError, ValueError):
    """Unknown user/resource, bad scope, invalid instance or config."""


class DocumentError(DomainError):
    """Malformed JSON or LP document."""


class WeightOverflowError(DomainError):
    """A weight or cost reached the 64-bit limit."""


class GuardError(ApepError):
    """A desk-scale search bound was exceeded."""

    def __init__(self, what, value, bound, hint=""):
        self.what = what
        self.value = value
        self.bound = bound
        msg = f"{what} = {value} exceeds the bound {bound}"
        if hint:
            msg += f"; {hint}"
        super().__init__(msg)


class InfeasibleError(ApepError):
    """No feasible assignment or fixing exists."""
