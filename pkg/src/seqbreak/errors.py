"""Exception taxonomy shared across the package."""

from __future__ import annotations


class SeqbreakError(Exception):
    """Base class for every error raised by this package."""


class DomainError(SeqbreakError):
    """An argument lies outside the domain an operation is defined on."""


class SingularMoments(SeqbreakError):
    """A moment/design matrix is singular or numerically unusable (cond > 1e12)."""


class NoConvergence(SeqbreakError):
    """The nonlinear least-squares solver failed to converge from every start."""


class DegenerateWindow(SeqbreakError):
    """A fitting window has too few observations for the parameter count."""


class HorizonExceeded(SeqbreakError):
    """A closed-end monitor was stepped past its horizon."""


class DegenerateBootstrap(SeqbreakError):
    """A bootstrap draw produced a degenerate (zero-variance) scale estimate."""


class EmptySample(SeqbreakError):
    """A summary statistic was requested for an empty sample."""
