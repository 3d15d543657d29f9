"""Exception types shared across the toolkit."""

from __future__ import annotations


class LcbError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(LcbError):
    """Invalid configuration, parameter value, or violated precondition."""


class EvaluationError(LcbError):
    """A field evaluated to a non-finite value."""

    def __init__(self, field_name: str, point, value) -> None:
        self.field_name = field_name
        self.point = tuple(float(q) for q in point)
        self.value = value
        super().__init__(f"field {field_name!r} is non-finite at {self.point}: {value}")


class NotStabilizable(LcbError):
    """The necessary-and-sufficient stabilizability condition failed."""


class SingularQuotient(LcbError):
    """A quotient used by the synthesis rules has a near-zero denominator."""


class GbcViolation(LcbError):
    """gamma coincides with b(0)/c(0): the boundary curve is characteristic."""


class TraceEscape(LcbError):
    """A characteristic trace left the inflated domain or ran out of steps."""

    def __init__(self, message: str, point=None) -> None:
        self.point = None if point is None else tuple(float(q) for q in point)
        super().__init__(message if self.point is None else f"{message} at {self.point}")


class CharacteristicDegeneracy(LcbError):
    """|b - c*gamma| fell below tolerance along a trace."""


class PositivityLoss(LcbError):
    """A field that must stay positive failed to do so at a grid node."""

    def __init__(self, message: str, node=None, value=None) -> None:
        self.node = None if node is None else tuple(int(k) for k in node)
        self.value = value
        detail = message
        if self.node is not None:
            detail += f" (node {self.node}, value {value})"
        super().__init__(detail)


class OutOfDomain(LcbError):
    """A state or query point lies outside the working rectangle."""


class IntegrationBlowup(LcbError):
    """Closed-loop integration produced a non-finite or runaway state."""

    def __init__(self, message: str, last_state=None, t=None) -> None:
        self.last_state = last_state
        self.t = t
        super().__init__(message)


class InconclusiveScan(LcbError):
    """The invariant-set scan found no candidate samples at the given tolerance."""
