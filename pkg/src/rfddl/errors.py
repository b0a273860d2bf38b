"""Exception hierarchy shared by every rfddl module."""

from __future__ import annotations


class RfddlError(Exception):
    """Base class for all errors raised by rfddl."""


class InputError(RfddlError, ValueError):
    """Arguments violate a documented precondition."""


class DegenerateInputError(InputError):
    """Input is well-formed but degenerate (e.g. all atoms coincide)."""


class FormatError(InputError):
    """A file could not be parsed; the message names the line or byte offset."""


class NumericalError(RfddlError, ArithmeticError):
    """A solve produced non-finite values.

    ``state`` carries the last finite training state when raised from the
    trainer, ``None`` otherwise.
    """

    def __init__(self, message: str, state=None):
        super().__init__(message)
        self.state = state
