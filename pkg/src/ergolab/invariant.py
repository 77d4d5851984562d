"""Invariant measure, level sets, wandering rates, and Laplace transforms.

For the rational (boole) family the invariant density is closed-form,

    h(x) = 1/x^2 + 1/(1-x)^2,      antiderivative A(x) = 1/(1-x) - 1/x,

and A coincides with the real-line chart, so measures of intervals are chart
differences and every renewal quantity reduces to an exact telescoping walk
along inverse-branch chart orbits:

    mu(Y_n cap A_0) = A(f_0^{n-1}(c0)) - A(f_0^n(c0)) = -1/z_n,

where z_n is the n-fold left-branch pullback of z_0 = A(c0).  The polynomial
family has no closed-form density; operations that need one raise
NoClosedFormDensity, while the branch asymptotics u_0/u_1 (which only use the
branch maps) support both families.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq

from . import _csvio
from ._kernels import q_side_sum, wandering_side_sums
from .errors import DomainError, NoClosedFormDensity, OutOfRange, QuadratureFailure
from .maps import (
    MapModel,
    ReferencePartition,
    boole_chart,
    boole_chart_inverse,
    derivative,
    iterate_inverse_branch,
)

__all__ = [
    "InvariantDensity",
    "WanderingTable",
    "RegularVariationFit",
    "invariant_density",
    "measure_interval",
    "y_level_set",
    "return_tail",
    "return_tail_side",
    "wandering_table",
    "q_laplace",
    "q_laplace_side",
    "dk_normalizer",
    "fit_regular_variation",
    "thaler_u",
    "thaler_u_inverse",
    "thaler_beta",
]


@dataclass(frozen=True)
class InvariantDensity:
    """Closed-form invariant density when the family has one.

    ``density`` and ``antiderivative`` evaluate h and A above for the
    rational family; for the polynomial family construction succeeds but any
    evaluation raises NoClosedFormDensity (the density exists only up to an
    unknown continuous factor).
    """

    family: str
    has_closed_form: bool

    def density(self, x):
        self._require_closed_form()
        arr = np.asarray(x, dtype=np.float64)
        if np.any(arr <= 0.0) or np.any(arr >= 1.0):
            raise DomainError("density defined on the open interval (0,1)")
        out = 1.0 / arr**2 + 1.0 / (1.0 - arr) ** 2
        return float(out) if arr.ndim == 0 else out

    def antiderivative(self, x):
        self._require_closed_form()
        return boole_chart(x)

    def _require_closed_form(self) -> None:
        if not self.has_closed_form:
            raise NoClosedFormDensity(
                "polynomial family density is not available in closed form")


def invariant_density(m: MapModel) -> InvariantDensity:
    return InvariantDensity(family=m.family,
                            has_closed_form=(m.family == "boole"))


def _require_boole(m: MapModel, what: str) -> None:
    if m.family != "boole":
        raise NoClosedFormDensity(f"{what} needs the closed-form density; "
                                  "only the boole family has one")


def measure_interval(m: MapModel, a: float, b: float) -> float:
    """mu([a,b]) = A(b) - A(a) for the rational family; 0 < a <= b < 1."""
    _require_boole(m, "measure_interval")
    if not (0.0 < a < 1.0 and 0.0 < b < 1.0):
        raise DomainError("need 0 < a, b < 1 (infinite mass at the endpoints)")
    if a > b:
        raise DomainError("need a <= b")
    return float(boole_chart(b) - boole_chart(a))


def _side_starts(part: ReferencePartition) -> tuple[float, float]:
    """Pullback start points in side-local coordinates (distance from the
    fixed point): c0 for the A_0 side, 1-c1 for the mirrored A_1 side."""
    return part.c0, 1.0 - part.c1


def y_level_set(m: MapModel, part: ReferencePartition, n: int):
    """Level-set intervals (Y_n cap A_0, Y_n cap A_1) for n >= 1.

    Y_n cap A_0 = [f_0^n(c0), f_0^{n-1}(c0)) and mirrored on the right:
    (f_1^{n-1}(c1), f_1^n(c1)].  Returned as ((lo0, hi0), (lo1, hi1)) with
    the stated open/closed convention implied.
    """
    if n < 1:
        raise DomainError("level sets are defined for n >= 1")
    lo0 = iterate_inverse_branch(m, 0, part.c0, n)
    hi0 = iterate_inverse_branch(m, 0, part.c0, n - 1)
    lo1 = iterate_inverse_branch(m, 1, part.c1, n - 1)
    hi1 = iterate_inverse_branch(m, 1, part.c1, n)
    return (lo0, hi0), (lo1, hi1)


def return_tail(m: MapModel, part: ReferencePartition, n: int) -> float:
    """mu(Y_n) = mu(Y cap {phi > n}); n = 0 gives mu(Y)."""
    if n < 0:
        raise DomainError("need n >= 0")
    _require_boole(m, "return_tail")
    if n == 0:
        return measure_interval(m, part.c0, part.c1)
    return return_tail_side(m, part, n, 0) + return_tail_side(m, part, n, 1)


def return_tail_side(m: MapModel, part: ReferencePartition, n: int,
                     i: int) -> float:
    """mu(Y_n cap A_i) = mu(Y cap T^{-1}A_i cap {phi > n}) for n >= 1."""
    if n < 1:
        raise DomainError("side tails are defined for n >= 1")
    if i not in (0, 1):
        raise DomainError("side must be 0 or 1")
    _require_boole(m, "return_tail_side")
    start = _side_starts(part)[i]
    z = boole_chart(start)
    for _ in range(n):
        z = 0.5 * (z - math.sqrt(z * z + 4.0))
    return -1.0 / z


@dataclass(frozen=True)
class WanderingTable:
    """Exact level measures and wandering rates, indexed n = 0..N.

    w[n] = sum_{k<n} mu(Y_k) and w_side[n] = sum_{1<=k<n} mu(Y_k cap A_i);
    the decomposition w[n] = mu(Y) + w_A0[n] + w_A1[n] holds exactly by
    construction for n >= 1.
    """

    N: int
    mu_Y: float
    mu_Yn: np.ndarray
    mu_Yn_A0: np.ndarray
    mu_Yn_A1: np.ndarray
    w: np.ndarray
    w_A0: np.ndarray
    w_A1: np.ndarray

    def write_csv(self, path: str, meta: dict | None = None) -> None:
        base = {"table": "wandering", "N": self.N}
        if meta:
            base.update(meta)
        _csvio.write_csv(path, {
            "n": np.arange(self.N + 1),
            "mu_Yn": self.mu_Yn,
            "mu_Yn_A0": self.mu_Yn_A0,
            "mu_Yn_A1": self.mu_Yn_A1,
            "w_n": self.w,
            "w_n_A0": self.w_A0,
            "w_n_A1": self.w_A1,
        }, meta=base)


def wandering_table(m: MapModel, part: ReferencePartition,
                    N: int) -> WanderingTable:
    """Level measures mu(Y_n cap A_i) and wandering rates up to index N."""
    if N < 1:
        raise DomainError("need N >= 1")
    _require_boole(m, "wandering_table")
    s0, s1 = _side_starts(part)
    mu0, w0 = wandering_side_sums(boole_chart(s0), N)
    mu1, w1 = wandering_side_sums(boole_chart(s1), N)
    mu_y = measure_interval(m, part.c0, part.c1)
    mu_tot = mu0 + mu1
    mu_tot[0] = mu_y
    w = mu_y + w0 + w1
    w[0] = 0.0
    return WanderingTable(N=N, mu_Y=mu_y, mu_Yn=mu_tot, mu_Yn_A0=mu0,
                          mu_Yn_A1=mu1, w=w, w_A0=w0, w_A1=w1)


_Q_REL_TOL = 1e-12


def q_laplace_side(m: MapModel, part: ReferencePartition, s: float,
                   i: int) -> float:
    """Q^{Y,A_i}(s) = sum_{n>=1} e^{-ns} mu(Y_n cap A_i), certified to 1e-12."""
    if s <= 0.0:
        raise DomainError("need s > 0")
    if i not in (0, 1):
        raise DomainError("side must be 0 or 1")
    _require_boole(m, "q_laplace_side")
    start = _side_starts(part)[i]
    n_cap = int(60.0 / s) + 1000
    total, tail, _ = q_side_sum(boole_chart(start), s, _Q_REL_TOL, n_cap)
    return total


def q_laplace(m: MapModel, part: ReferencePartition, s: float) -> float:
    """Q^Y(s) = sum_{n>=0} e^{-ns} mu(Y_n) = mu(Y) + both side transforms."""
    mu_y = measure_interval(m, part.c0, part.c1)
    return (mu_y + q_laplace_side(m, part, s, 0)
            + q_laplace_side(m, part, s, 1))


def dk_normalizer(m: MapModel, part: ReferencePartition, t: float) -> float:
    """Return-sequence normalizer a(t) = t / (Gamma(1+alpha) * Q^Y(1/t))."""
    if t <= 0.0:
        raise DomainError("need t > 0")
    return t / (math.gamma(1.0 + m.alpha) * q_laplace(m, part, 1.0 / t))


@dataclass(frozen=True)
class RegularVariationFit:
    """OLS fit of log w_n against log n over a window.

    ``exponent`` is the fitted slope (theory: 1 - alpha) and ``alpha_hat``
    its complement; ``ell_at`` evaluates the slowly varying residual
    ell(n) = w_n / n^exponent, log-log interpolating inside the table and
    extrapolating with the fitted slope beyond it.
    """

    exponent: float
    alpha_hat: float
    window: tuple[int, int]
    log_n: np.ndarray
    log_w: np.ndarray

    def ell_at(self, n):
        arr = np.asarray(n, dtype=np.float64)
        logn = np.atleast_1d(np.log(np.maximum(arr, 1.0)))
        logw = np.interp(logn, self.log_n, self.log_w)
        beyond = logn > self.log_n[-1]
        logw[beyond] = (self.log_w[-1]
                        + self.exponent * (logn[beyond] - self.log_n[-1]))
        out = np.exp(logw - self.exponent * logn)
        return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def fit_regular_variation(table: WanderingTable, n_lo: int,
                          n_hi: int) -> RegularVariationFit:
    """Least-squares slope of (log n, log w_n) over [n_lo, n_hi]."""
    n_hi = min(n_hi, table.N)
    if not 1 <= n_lo < n_hi:
        raise DomainError("need 1 <= n_lo < n_hi <= N")
    idx = np.unique(np.round(np.exp(
        np.linspace(math.log(n_lo), math.log(n_hi), 200))).astype(np.int64))
    logn = np.log(idx.astype(np.float64))
    logw = np.log(table.w[idx])
    slope, _ = np.polyfit(logn, logw, 1)
    full_n = np.arange(1, table.N + 1, dtype=np.float64)
    return RegularVariationFit(
        exponent=float(slope),
        alpha_hat=float(1.0 - slope),
        window=(int(n_lo), int(n_hi)),
        log_n=np.log(full_n),
        log_w=np.log(table.w[1:]),
    )


# ---------------------------------------------------------------------------
# Branch asymptotics u_i (both families): u_0(x) = int_x^1 dy/(y - f_0(y)).
# The integrand blows up like y^{-(p+1)} at 0; substituting y = e^{-w} turns
# the integral into a smooth one on [0, log(1/x)].  The gap y - f_0(y) is
# evaluated cancellation-free through the forward branch: with z = f_0(y),
# y - z = K0 * z^(p+1) for the polynomial family and z^3/(1-z-z^2) for the
# rational one.
# ---------------------------------------------------------------------------


def _gap(m: MapModel, branch: int):
    """Cancellation-free y - f(y) in side-local coordinates (side 1 mirrored)."""
    if m.family == "boole":
        def gap(y: float) -> float:
            z = 2.0 * y / (1.0 + y + math.sqrt(5.0 * y * y - 2.0 * y + 1.0))
            return z**3 / (1.0 - z - z * z)
        return gap
    K = m.K0 if branch == 0 else m.K1
    zmax = m.cut if branch == 0 else 1.0 - m.cut
    q = m.p + 1.0

    def gap(y: float) -> float:
        z = y if y < zmax else zmax
        for _ in range(200):
            step = (z + K * z ** q - y) / (1.0 + q * K * z ** (q - 1.0))
            z -= step
            if abs(step) <= 1e-17 + 1e-16 * z:
                break
        return K * z ** q
    return gap


def _u_integral(m: MapModel, branch: int, x: float) -> float:
    if x == 1.0:
        return 0.0
    gap = _gap(m, branch)
    big_w = math.log(1.0 / x)

    def integrand(w: float) -> float:
        y = math.exp(-w)
        return y / gap(y)

    val, err = quad(integrand, 0.0, big_w, epsabs=0.0, epsrel=1e-10,
                    limit=400)
    if err > max(1e-9, 1e-9 * abs(val)):
        raise QuadratureFailure(
            f"u integral error estimate {err:.3e} exceeds tolerance")
    return val


def thaler_u(m: MapModel, i: int, x: float) -> float:
    """Branch potential u_i: u_0 on (0,1] vanishing at 1 and diverging at 0;
    u_1 mirrored (vanishing at 0, diverging at 1)."""
    if i not in (0, 1):
        raise DomainError("side must be 0 or 1")
    if i == 0:
        if not 0.0 < x <= 1.0:
            raise OutOfRange("u_0 is defined on (0,1]")
        return _u_integral(m, 0, x)
    if not 0.0 <= x < 1.0:
        raise OutOfRange("u_1 is defined on [0,1)")
    return _u_integral(m, 1, 1.0 - x)


def thaler_u_inverse(m: MapModel, i: int, v: float) -> float:
    """Monotone inverse of u_i (root-finding on the quadrature)."""
    if v < 0.0:
        raise DomainError("u values are nonnegative")
    if v == 0.0:
        return 1.0 if i == 0 else 0.0
    K = m.K0 if (i == 0 or m.family == "boole") else m.K1
    # leading-order guess from u ~ 1/(p K x^p), then widen to a sign bracket
    lo = min(0.5, (1.0 / (m.p * K * v)) ** (1.0 / m.p))
    for _ in range(200):
        if _u_integral(m, 0 if i == 0 else 1, lo) >= v:
            break
        lo *= 0.5
    else:  # pragma: no cover
        raise QuadratureFailure("failed to bracket u inverse")
    root = brentq(lambda t: _u_integral(m, 0 if i == 0 else 1, t) - v,
                  lo, 1.0, xtol=1e-15, rtol=8.9e-16)
    return float(root) if i == 0 else 1.0 - float(root)


def thaler_beta(m: MapModel):
    """(alpha, beta_0, beta_1, a): splitting parameters of the two sides.

    a = (K1/K0)^(1/p) compares the branch strengths at the two fixed points;
    beta_0 = T'(c-) / (T'(c-) + T'(c+)/a) is the A_0 share, beta_1 its
    complement.
    """
    a = (m.K1 / m.K0) ** (1.0 / m.p)
    d_left = derivative(m, m.cut, side="left")
    d_right = derivative(m, m.cut, side="right")
    beta0 = d_left / (d_left + d_right / a)
    return m.alpha, float(beta0), float(1.0 - beta0), float(a)
