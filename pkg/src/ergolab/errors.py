"""Error taxonomy shared by all ergolab modules.

Every failure mode that callers are expected to handle gets its own class so
that experiment drivers can distinguish "input outside a branch domain" from
"iteration diverged" without string matching.  `Overflow` is deliberately NOT
an exception: a first-return time that exceeds its cap is a legitimate value
and is reported as ``None`` (scalar API) or ``-1`` (array API).
"""


class ErgolabError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(ErgolabError, ValueError):
    """Invalid configuration file or CLI argument; message carries context
    (file and line number when the value came from a config file)."""


class OutOfRange(ErgolabError, ValueError):
    """Argument lies outside the domain of a map branch or chart."""


class DomainError(ErgolabError, ValueError):
    """Interval or parameter outside the measure's domain of validity."""


class NotFound(ErgolabError, RuntimeError):
    """Root search failed (e.g. no two-periodic point in the scan window)."""


class NoClosedFormDensity(ErgolabError, NotImplementedError):
    """Requested a closed-form invariant density the family does not have."""


class QuadratureFailure(ErgolabError, RuntimeError):
    """Numerical integration did not reach the requested tolerance."""


class PrecisionLoss(ErgolabError, ArithmeticError):
    """Series evaluation cannot certify the requested accuracy."""


class FormMismatch(ErgolabError, ArithmeticError):
    """Two supposedly equivalent closed forms disagree beyond tolerance."""


class NumericEscape(ErgolabError, ArithmeticError):
    """An orbit left the representable domain (NaN/inf or exact fixed point)."""


class RejectionStall(ErgolabError, RuntimeError):
    """Rejection sampler acceptance rate collapsed below its floor."""


class EmptyLevel(ErgolabError, ValueError):
    """A discretized level carries zero mass where positive mass is required."""


class InsufficientEvents(ErgolabError, ValueError):
    """Expected event count too small for the requested tail estimate."""


class BudgetExceeded(ErgolabError, RuntimeError):
    """Truncation/quadrature budget exhausted before certifying the target."""
