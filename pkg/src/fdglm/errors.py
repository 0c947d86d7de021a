"""Exception types shared across the package.

Everything raised on purpose derives from :class:`FdglmError`, so callers can
catch package failures with a single except clause.  Parameter and domain
problems are also ``ValueError`` subclasses to stay friendly to generic code.
"""

from __future__ import annotations


class FdglmError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(FdglmError, ValueError):
    """A configuration value is malformed or out of range."""


class DomainError(FdglmError, ValueError):
    """A numeric input is outside the operation's domain (NaN, inf, wrong sign)."""


class GenerationError(FdglmError, RuntimeError):
    """Random generation failed, e.g. no connected graph within the retry budget."""


class CapabilityError(FdglmError, RuntimeError):
    """The request exceeds a documented size or feature limit."""


class ProtocolError(FdglmError, RuntimeError):
    """The simulated message-passing protocol was driven out of order."""


class NumericalError(FdglmError, RuntimeError):
    """An iterative numeric routine failed to converge.

    Carries the last search bracket when one exists, to make failures
    diagnosable without rerunning.
    """

    def __init__(self, message: str, bracket: tuple[float, float] | None = None):
        super().__init__(message)
        self.bracket = bracket


class DivergenceError(FdglmError, RuntimeError):
    """An iterate became non-finite during a run.

    Attributes identify the first offending round, agent and variable so the
    condition can be reported precisely.
    """

    def __init__(self, iteration: int, agent: int, variable: str):
        super().__init__(
            f"non-finite iterate at round {iteration}, agent {agent}, variable {variable!r}"
        )
        self.iteration = iteration
        self.agent = agent
        self.variable = variable
