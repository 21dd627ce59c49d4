"""Shared exception types."""


class XpressError(Exception):
    """Base class for all errors raised by this package."""


class InvariantError(XpressError):
    """A face state violates one of its structural invariants.

    Carries the list of human-readable violations.
    """

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
