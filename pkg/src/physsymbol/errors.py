"""Exception types shared across the toolkit.

Grouped by the surface that raises them; all inherit from PhysSymbolError
except FormulaSyntaxError, which additionally subclasses the builtin
SyntaxError so generic `except SyntaxError` handlers see parse failures.
"""

from __future__ import annotations


class PhysSymbolError(Exception):
    """Base class for every error raised by this package."""


# --- formula / expression errors -------------------------------------------

class FormulaError(PhysSymbolError):
    """Base for expression-layer failures."""


class FormulaSyntaxError(FormulaError, SyntaxError):
    """Malformed formula text.

    Carries the 0-based character `position` and a human-readable
    `expected` description of what the parser wanted there.
    """

    def __init__(self, message: str, position: int, expected: str | None = None):
        super().__init__(f"{message} (at position {position})")
        self.position = position
        self.expected = expected


class UnknownSymbol(FormulaError):
    """Identifier used in a way the grammar does not allow (e.g. unknown function)."""

    def __init__(self, name: str, position: int | None = None):
        loc = "" if position is None else f" (at position {position})"
        super().__init__(f"unknown symbol {name!r}{loc}")
        self.name = name
        self.position = position


class UnboundParameter(FormulaError):
    """Evaluation hit a Parameter with no binding."""

    def __init__(self, name: str):
        super().__init__(f"parameter {name!r} has no bound value")
        self.name = name


class NonFinite(FormulaError):
    """Arithmetic produced NaN or infinity."""


# --- sampler / config -------------------------------------------------------

class ConfigError(PhysSymbolError):
    """Invalid configuration value."""


# --- simulator ---------------------------------------------------------------

class Diverged(PhysSymbolError):
    """State left the stability region during integration."""

    def __init__(self, t: float, message: str = ""):
        super().__init__(message or f"trajectory diverged at t={t:.6g}")
        self.t = t


class StepSizeUnderflow(PhysSymbolError):
    """Adaptive step controller stalled below the representable step size."""

    def __init__(self, t: float):
        super().__init__(f"step size underflow at t={t:.6g}")
        self.t = t


class BadCount(PhysSymbolError):
    """Subsample count outside the valid range."""


class FormatError(PhysSymbolError):
    """Malformed trajectory CSV."""


# --- viz ----------------------------------------------------------------------

class EmptyTrajectory(PhysSymbolError):
    """Trajectory too short to plot."""


# --- rewards -------------------------------------------------------------------

class NoAnswerTag(PhysSymbolError):
    """Response contains no well-formed <answer> block."""


class GroupTooSmall(PhysSymbolError):
    """Advantage group needs at least two rewards."""


# --- sr2 -------------------------------------------------------------------------

class TooManyParameters(PhysSymbolError):
    """Nonlinear coefficient fit supports at most 4 free parameters."""


class SingularFit(PhysSymbolError):
    """Design matrix is rank-deficient.

    `solution` carries the minimum-norm-fitted expression so callers that
    accept the tie-break can recover it without refitting.
    """

    def __init__(self, message: str, solution=None):
        super().__init__(message)
        self.solution = solution


# --- dataset ----------------------------------------------------------------------

class Unstable(PhysSymbolError):
    """Instance kept diverging after all retry seeds."""

    def __init__(self, instance_id: int, attempts: int):
        super().__init__(
            f"instance {instance_id} diverged in all {attempts} attempts"
        )
        self.instance_id = instance_id
        self.attempts = attempts


class IntegrityError(PhysSymbolError):
    """Dataset record failed a completeness or consistency check."""


class UnknownInstance(PhysSymbolError):
    """Submission references an instance id missing from the corpus."""

    def __init__(self, instance_id: str):
        super().__init__(f"unknown instance id {instance_id!r}")
        self.instance_id = instance_id


# --- external annotator -------------------------------------------------------------

class AnnotatorError(PhysSymbolError):
    """Base for external annotation client failures."""


class NetworkError(AnnotatorError):
    """Transport-level failure or unexpected HTTP status."""


class AuthError(AnnotatorError):
    """Missing or rejected credential."""


class RateLimited(AnnotatorError):
    """Endpoint kept returning 429 after the retry budget."""


class MalformedResponse(AnnotatorError):
    """Endpoint replied 200 but the payload is not a chat completion."""
