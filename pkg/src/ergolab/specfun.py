"""Closed-form limit-law distribution functions and rate constants.

Four laws appear as weak limits of normalized occupation/waiting statistics:

* the normalized Mittag-Leffler law of order ``alpha`` (occupation sums
  rescaled by the return sequence),
* the Beta(alpha, 1-alpha) law for the last-visit time fraction,
* the two-parameter generalized arcsine law for the fraction of time spent
  on one side (parameters ``alpha`` and a side-weight ratio ``b``),
* the half-Gaussian specialization that the symmetric rational map produces.

All are pure functions of their parameters.  The Mittag-Leffler CDF is the
only one without a stable float64 expression: its power series has terms that
grow to ``exp(O(t^{1/(1-alpha)}))`` before decaying, so it is summed in
mpmath at a working precision sized from the largest term, with an explicit
tail certificate (log-convexity of Gamma bounds every term ratio by
``t*(1+alpha*j)^alpha/(j+1)``, which is decreasing, so a geometric bound
closes the tail as soon as that ratio drops below 1).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import mpmath as mp
import numpy as np
from scipy import special
from scipy.integrate import quad

from ._csvio import write_csv
from .errors import DomainError, FormMismatch, PrecisionLoss

__all__ = [
    "LimitLawParams",
    "mittag_leffler_cdf",
    "mittag_leffler_laplace",
    "dynkin_lamperti_cdf",
    "lamperti_cdf",
    "lamperti_cdf_integral",
    "dk_limit_cdf_boole",
    "ld_rate_constant",
    "write_cdf_table",
]

_SERIES_CAP = 200
_TAIL_TARGET = 1e-12


@dataclass(frozen=True)
class LimitLawParams:
    """Parameters of the limit laws: order ``alpha``, side ratio ``b``.

    ``alpha`` is the common order in (0,1); ``b`` (the ratio of the two
    side weights) is only needed by the two-parameter arcsine law and may
    be left ``None`` otherwise.
    """

    alpha: float
    b: Optional[float] = None

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha < 1.0):
            raise DomainError(f"alpha must lie in (0,1), got {self.alpha}")
        if self.b is not None and not (self.b > 0.0):
            raise DomainError(f"b must be positive, got {self.b}")


def _check_alpha(alpha: float) -> None:
    if not (0.0 < alpha < 1.0):
        raise DomainError(f"alpha must lie in (0,1), got {alpha}")


# ---------------------------------------------------------------------------
# Mittag-Leffler law
# ---------------------------------------------------------------------------

def _ml_term_logmag(alpha: float, t: float, k: np.ndarray) -> np.ndarray:
    """log of Gamma(1+alpha k) t^k / (k! k), the series' term envelope."""
    return (special.gammaln(1.0 + alpha * k) + k * math.log(t)
            - special.gammaln(k + 1.0) - np.log(k))


def _ml_cdf_scalar(alpha: float, t: float) -> float:
    if t < 0.0:
        raise DomainError(f"t must be nonnegative, got {t}")
    if t == 0.0:
        return 0.0
    # working precision sized from the largest term the series will visit
    ks = np.arange(1, _SERIES_CAP + 1, dtype=float)
    peak = float(np.max(_ml_term_logmag(alpha, t, ks)))
    dps = 25 + max(0, math.ceil(peak / math.log(10.0)))
    with mp.workdps(dps):
        ta = mp.mpf(t)
        aa = mp.mpf(alpha)
        total = mp.mpf(0)
        tk = mp.mpf(1)
        certified = False
        for k in range(1, _SERIES_CAP + 1):
            tk *= ta
            mag = mp.gamma(1 + aa * k) * tk / (mp.factorial(k) * k)
            total += mp.sinpi(aa * k) * mag * (-1) ** (k - 1)
            # term-ratio envelope rho(j) = t (1+alpha j)^alpha / (j+1):
            # Gamma(x+alpha) <= Gamma(x) x^alpha (log-convexity), and rho
            # decreases in j, so once rho(k) < 1 the tail is geometric.
            rho = t * (1.0 + alpha * k) ** alpha / (k + 1.0)
            if rho < 1.0:
                nxt = mag * ta * mp.gamma(1 + aa * (k + 1)) \
                    / (mp.gamma(1 + aa * k) * (k + 1) ** 2 / k)
                tail = float(nxt) / (1.0 - rho) / (math.pi * alpha)
                if tail < _TAIL_TARGET:
                    certified = True
                    break
        if not certified:
            raise PrecisionLoss(
                f"Mittag-Leffler series not certified to {_TAIL_TARGET} "
                f"within {_SERIES_CAP} terms at alpha={alpha}, t={t}")
        value = float(total / (mp.pi * aa))
    return min(1.0, max(0.0, value))


def mittag_leffler_cdf(alpha: float, t):
    """CDF of the normalized Mittag-Leffler law of order ``alpha``.

    F(t) = (1/(pi alpha)) sum_{k>=1} ((-1)^{k-1}/k!) sin(pi alpha k)
    Gamma(1+alpha k) t^k / k.  Scalar or array ``t``; raises
    ``PrecisionLoss`` when the tail certificate cannot be reached within
    the series cap (large ``t`` at large ``alpha``).
    """
    _check_alpha(alpha)
    if np.ndim(t) == 0:
        return _ml_cdf_scalar(alpha, float(t))
    return np.array([_ml_cdf_scalar(alpha, float(x)) for x in np.asarray(t)])


def mittag_leffler_laplace(alpha: float, lam: float) -> float:
    """Laplace transform int e^{-lam t} dF(t) = sum (-lam)^k / Gamma(1+alpha k).

    The series is entire in ``lam``; terms decay once
    lam / (1+alpha k)^alpha < 1, certified the same way as the CDF series.
    """
    _check_alpha(alpha)
    if lam < 0.0:
        raise DomainError(f"lam must be nonnegative, got {lam}")
    if lam == 0.0:
        return 1.0
    ks = np.arange(1, _SERIES_CAP + 1, dtype=float)
    peak = float(np.max(ks * math.log(lam) - special.gammaln(1.0 + alpha * ks)))
    dps = 25 + max(0, math.ceil(peak / math.log(10.0)))
    with mp.workdps(dps):
        la = mp.mpf(lam)
        aa = mp.mpf(alpha)
        total = mp.mpf(1)
        lk = mp.mpf(1)
        certified = False
        for k in range(1, _SERIES_CAP + 1):
            lk *= -la
            mag = lk / mp.gamma(1 + aa * k)
            total += mag
            # Gamma(x+alpha) >= Gamma(x) (x+alpha-1)^alpha (log-convexity),
            # so the next-term ratio is at most lam/(alpha (k+1))^alpha
            rho = lam / (alpha * (k + 1)) ** alpha
            if rho < 1.0:
                tail = abs(float(mag)) * rho / (1.0 - rho)
                if tail < _TAIL_TARGET:
                    certified = True
                    break
        if not certified:
            raise PrecisionLoss(
                f"Laplace series not certified within {_SERIES_CAP} terms "
                f"at alpha={alpha}, lam={lam}")
        return float(total)


# ---------------------------------------------------------------------------
# last-visit (Beta) law and the two-parameter arcsine law
# ---------------------------------------------------------------------------

def dynkin_lamperti_cdf(alpha: float, t):
    """CDF of the Beta(alpha, 1-alpha) law on [0,1].

    (sin(pi alpha)/pi) int_0^t s^{alpha-1} (1-s)^{-alpha} ds, which is the
    regularized incomplete beta function I_t(alpha, 1-alpha); equals
    (2/pi) arcsin(sqrt(t)) at alpha = 1/2.
    """
    _check_alpha(alpha)
    tt = np.asarray(t, dtype=float)
    if np.any(tt < 0.0) or np.any(tt > 1.0):
        raise DomainError("t must lie in [0,1]")
    out = special.betainc(alpha, 1.0 - alpha, tt)
    return float(out) if np.ndim(t) == 0 else out


def _lamperti_arccot(alpha: float, b: float, t):
    tt = np.asarray(t, dtype=float)
    pa = math.pi * alpha
    with np.errstate(divide="ignore"):
        arg = np.where(
            (tt > 0.0) & (tt < 1.0),
            (1.0 - tt) ** alpha / (b * math.sin(pa) * np.maximum(tt, 1e-300) ** alpha)
            + 1.0 / math.tan(pa),
            0.0)
    # arccot with range (0, pi) keeps the CDF continuous across the
    # sign change of cot(pi alpha) at alpha = 1/2
    core = (0.5 * math.pi - np.arctan(arg)) / pa
    return np.where(tt <= 0.0, 0.0, np.where(tt >= 1.0, 1.0, core))


def lamperti_cdf(alpha: float, b: float, t, validate: bool = True):
    """CDF of the two-parameter generalized arcsine law on [0,1].

    Closed form (1/(pi alpha)) arccot((1-t)^alpha/(b sin(pi alpha) t^alpha)
    + cot(pi alpha)), arccot taken in (0, pi).  With ``validate=True``
    (default) the equivalent integral form is evaluated as a cross-check
    and ``FormMismatch`` is raised if the two disagree beyond 1e-8.
    Reduces to the classical arcsine law at alpha=1/2, b=1.
    """
    _check_alpha(alpha)
    if not (b > 0.0):
        raise DomainError(f"b must be positive, got {b}")
    tt = np.asarray(t, dtype=float)
    if np.any(tt < 0.0) or np.any(tt > 1.0):
        raise DomainError("t must lie in [0,1]")
    out = _lamperti_arccot(alpha, b, tt)
    if validate:
        other = np.asarray([_lamperti_integral_scalar(alpha, b, float(x))
                            for x in np.atleast_1d(tt)])
        gap = float(np.max(np.abs(np.atleast_1d(out) - other)))
        if gap > 1e-8:
            raise FormMismatch(
                f"arccot and integral forms disagree by {gap:.3e} "
                f"at alpha={alpha}, b={b}")
    return float(out) if np.ndim(t) == 0 else out


def _lamperti_integral_scalar(alpha: float, b: float, t: float) -> float:
    if t <= 0.0:
        return 0.0
    if t >= 1.0:
        return 1.0
    pa = math.pi * alpha
    cpa = math.cos(pa)

    # substitute s = v^(1/alpha): the s^{alpha-1} endpoint singularity
    # integrates away exactly and the integrand becomes smooth at 0
    def integrand(v: float) -> float:
        s = v ** (1.0 / alpha)
        sa = v                      # s^alpha
        ca = (1.0 - s) ** alpha
        den = b * b * sa * sa + 2.0 * b * sa * ca * cpa + ca * ca
        return (1.0 - s) ** (alpha - 1.0) / den / alpha

    val, err = quad(integrand, 0.0, t ** alpha, epsabs=1e-13, epsrel=1e-12,
                    limit=200)
    return b * math.sin(pa) / math.pi * val


def lamperti_cdf_integral(alpha: float, b: float, t):
    """Integral form of the generalized arcsine CDF (quadrature evaluation).

    b sin(pi alpha)/pi int_0^t s^{alpha-1}(1-s)^{alpha-1} /
    (b^2 s^{2 alpha} + 2 b s^alpha (1-s)^alpha cos(pi alpha)
    + (1-s)^{2 alpha}) ds — the independent route used to cross-validate
    the arccot closed form.
    """
    _check_alpha(alpha)
    if not (b > 0.0):
        raise DomainError(f"b must be positive, got {b}")
    tt = np.asarray(t, dtype=float)
    if np.any(tt < 0.0) or np.any(tt > 1.0):
        raise DomainError("t must lie in [0,1]")
    if np.ndim(t) == 0:
        return _lamperti_integral_scalar(alpha, b, float(t))
    return np.array([_lamperti_integral_scalar(alpha, b, float(x))
                     for x in tt])


# ---------------------------------------------------------------------------
# half-Gaussian specialization and the rate constant
# ---------------------------------------------------------------------------

def dk_limit_cdf_boole(t):
    """Occupation-sum limit CDF for the symmetric rational map.

    (2/pi) int_0^t e^{-y^2/pi} dy = erf(t / sqrt(pi)); the order-1/2
    Mittag-Leffler law after the map's own normalization.
    """
    tt = np.asarray(t, dtype=float)
    if np.any(tt < 0.0):
        raise DomainError("t must be nonnegative")
    out = special.erf(tt / math.sqrt(math.pi))
    return float(out) if np.ndim(t) == 0 else out


def ld_rate_constant(alpha: float) -> float:
    """The universal small-ball rate constant sin(pi alpha)/(pi alpha).

    Multiplies c(n)^alpha (with the slowly-varying correction) in every
    sharp large-deviation asymptotic; equals 2/pi at alpha = 1/2 and tends
    to 1 as alpha -> 0.
    """
    _check_alpha(alpha)
    return float(np.sinc(alpha))


def write_cdf_table(path: str, name: str, t: Sequence[float],
                    cdf: Sequence[float], **meta) -> None:
    """Dump a (t, cdf) table as CSV with the law's name and parameters."""
    t = np.asarray(t, dtype=float)
    cdf = np.asarray(cdf, dtype=float)
    if t.shape != cdf.shape:
        raise DomainError("t and cdf must have equal length")
    write_csv(path, {"t": t, "cdf": cdf}, meta={"law": name, **meta})
