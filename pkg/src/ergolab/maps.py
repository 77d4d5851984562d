"""Two-branch interval maps with indifferent fixed points at 0 and 1.

Two concrete families are provided:

* ``boole_map()`` — the rational map

      T(x) = x(1-x)/(1-x-x^2)   on [0, 1/2],
      T(x) = 1 - T(1-x)         on (1/2, 1],

  which the real-line chart ``z = 1/(1-x) - 1/x`` conjugates to
  ``z -> z - 1/z``.  Both branches are invertible in closed form.

* ``thaler_map(p, K0)`` — a polynomial family

      T(x) = x + K0*x^(p+1)          on [0, c],
      T(x) = x - K1*(1-x)^(p+1)      on (c, 1],

  with the cut ``c`` solving ``c + K0*c^(p+1) = 1`` and ``K1`` solving
  ``(1-c) + K1*(1-c)^(p+1) = 1`` so that each branch is onto.  The wandering
  exponent of such a map is ``alpha = 1/p``.

Every operation is a pure function of an immutable :class:`MapModel`; scalars
come back as floats, ndarrays element-wise.  The value at the cut ``c``
belongs to the left branch by convention.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import NotFound, OutOfRange

__all__ = [
    "MapModel",
    "ReferencePartition",
    "boole_map",
    "thaler_map",
    "apply",
    "derivative",
    "inverse_branch",
    "iterate_inverse_branch",
    "find_two_periodic_point",
    "boole_chart",
    "boole_chart_inverse",
    "canonical_partition",
    "make_partition",
]

# Below this distance from a fixed point the left/right branch is evaluated
# as x + K0*x^(p+1) directly; the polynomial correction underflows gracefully
# where rational formulas would lose every significant digit.
_NEAR_FIXED = 1e-12


@dataclass(frozen=True)
class MapModel:
    """Immutable description of a two-branch interval map.

    Attributes
    ----------
    family : str
        ``"boole"`` or ``"thaler"``.
    p : float
        Tangency exponent at the fixed points: T(x) = x + K0*x^(p+1) + ...
        near 0.  For the rational family p = 2.
    K0, K1 : float
        Leading coefficients of the left/right branch expansions at 0 and 1.
    cut : float
        Branch cut c; T maps [0, c] onto [0, 1] and (c, 1] onto (0, 1].
    chart : str
        Preferred long-orbit coordinates, ``"unit"`` or ``"real-line"``
        (the latter only for the rational family).
    """

    family: str
    p: float
    K0: float
    K1: float
    cut: float
    chart: str = "unit"

    def __post_init__(self) -> None:
        if self.family not in ("boole", "thaler"):
            raise ValueError(f"unknown family {self.family!r}")
        if self.chart not in ("unit", "real-line"):
            raise ValueError(f"unknown chart {self.chart!r}")
        if self.chart == "real-line" and self.family != "boole":
            raise ValueError("real-line chart is only valid for the boole family")
        if self.family == "thaler":
            if not self.p > 1.0:
                raise ValueError("need p > 1 for an infinite invariant measure")
            if not (self.K0 > 0.0 and self.K1 > 0.0):
                raise ValueError("branch coefficients must be positive")
        if not 0.0 < self.cut < 1.0:
            raise ValueError("cut must lie in (0,1)")

    @property
    def alpha(self) -> float:
        """Wandering exponent 1/p (1/2 for the rational family)."""
        return 1.0 / self.p


@dataclass(frozen=True)
class ReferencePartition:
    """Cut points of the partition A_0 = [0,c0), Y = [c0,c1], A_1 = (c1,1].

    ``gamma`` is the two-periodic point of the map; the constraints
    c0 <= gamma and c1 >= T(gamma) make Y dynamically separating: no orbit
    jumps between A_0 and A_1 without passing through Y.
    """

    c0: float
    c1: float
    gamma: float


def boole_map(chart: str = "real-line") -> MapModel:
    """The rational map conjugate to z -> z - 1/z.  T(x)-x ~ x^3 at 0."""
    return MapModel(family="boole", p=2.0, K0=1.0, K1=1.0, cut=0.5, chart=chart)


def thaler_map(p: float, K0: float, chart: str = "unit") -> MapModel:
    """Polynomial family member with exponent ``p`` and left coefficient ``K0``.

    The cut is the unique root of c + K0*c^(p+1) = 1 in (0,1); the right
    coefficient follows from (1-c) + K1*(1-c)^(p+1) = 1.
    """
    if not p > 1.0:
        raise ValueError("need p > 1")
    if not K0 > 0.0:
        raise ValueError("need K0 > 0")
    c = brentq(lambda t: t + K0 * t ** (p + 1.0) - 1.0, 1e-12, 1.0 - 1e-12,
               xtol=1e-16, rtol=8.9e-16)
    K1 = c / (1.0 - c) ** (p + 1.0)
    return MapModel(family="thaler", p=float(p), K0=float(K0), K1=float(K1),
                    cut=float(c), chart=chart)


def _as_array(x):
    arr = np.asarray(x, dtype=np.float64)
    return arr, (arr.ndim == 0)


def _check_unit(arr: np.ndarray, what: str) -> None:
    if np.any(arr < 0.0) or np.any(arr > 1.0) or not np.all(np.isfinite(arr)):
        raise OutOfRange(f"{what} must lie in [0,1]")


def _boole_left(x: np.ndarray) -> np.ndarray:
    # x(1-x)/(1-x-x^2); below the near-fixed threshold use x + x^3 directly.
    with np.errstate(invalid="ignore"):
        rational = x * (1.0 - x) / (1.0 - x - x * x)
    return np.where(x < _NEAR_FIXED, x * (1.0 + x * x), rational)


def _apply_arr(m: MapModel, x: np.ndarray) -> np.ndarray:
    left = x <= m.cut
    out = np.empty_like(x)
    if m.family == "boole":
        out[left] = _boole_left(x[left])
        out[~left] = 1.0 - _boole_left(1.0 - x[~left])
    else:
        xl = x[left]
        out[left] = xl + m.K0 * xl ** (m.p + 1.0)
        u = 1.0 - x[~left]
        out[~left] = 1.0 - (u + m.K1 * u ** (m.p + 1.0))
    return out


def apply(m: MapModel, x):
    """Evaluate T(x) for scalar or array x in [0,1]."""
    arr, scalar = _as_array(x)
    _check_unit(arr, "x")
    out = _apply_arr(m, np.atleast_1d(arr))
    return float(out[0]) if scalar else out.reshape(arr.shape)


def _boole_left_deriv(x: np.ndarray) -> np.ndarray:
    den = 1.0 - x - x * x
    return (1.0 - 2.0 * x + 2.0 * x * x) / (den * den)


def derivative(m: MapModel, x, side: str = "auto"):
    """One-sided derivative T'(x); ``side`` breaks the tie at the cut.

    ``side="auto"`` follows the branch convention (cut belongs to the left
    branch); ``"left"``/``"right"`` force the respective one-sided limit at
    the cut and are ignored elsewhere.
    """
    arr, scalar = _as_array(x)
    _check_unit(arr, "x")
    a = np.atleast_1d(arr)
    left = a <= m.cut if side in ("auto", "left") else a < m.cut
    out = np.empty_like(a)
    if m.family == "boole":
        out[left] = _boole_left_deriv(a[left])
        out[~left] = _boole_left_deriv(1.0 - a[~left])
    else:
        q = m.p + 1.0
        out[left] = 1.0 + q * m.K0 * a[left] ** m.p
        out[~left] = 1.0 + q * m.K1 * (1.0 - a[~left]) ** m.p
    return float(out[0]) if scalar else out.reshape(arr.shape)


def _boole_f0(y: np.ndarray) -> np.ndarray:
    # Stable root of (1-y)x^2 - (1+y)x + y = 0 (no cancellation at small y).
    return 2.0 * y / (1.0 + y + np.sqrt(5.0 * y * y - 2.0 * y + 1.0))


def _poly_inverse(y: np.ndarray, K: float, q: float, zmax: float) -> np.ndarray:
    """Solve z + K*z^q = y for z in [0, zmax] by Newton from above.

    The left-hand side is convex and increasing, so starting at
    min(y, zmax) — where it is >= y — Newton descends monotonically onto the
    root; a bisection fallback guards the (never observed) non-finite case.
    """
    z = np.minimum(y, zmax)
    for _ in range(200):
        g = z + K * z ** q - y
        step = g / (1.0 + q * K * z ** (q - 1.0))
        z = z - step
        if np.all(np.abs(step) <= 1e-17 + 1e-16 * z):
            break
    if not np.all(np.isfinite(z)):  # pragma: no cover - defensive fallback
        flat = np.atleast_1d(y).astype(np.float64)
        out = np.atleast_1d(z)
        for i, yi in enumerate(flat):
            if not np.isfinite(out[i]):
                out[i] = brentq(lambda t: t + K * t ** q - yi, 0.0, zmax,
                                xtol=1e-16, rtol=8.9e-16)
        z = out.reshape(np.shape(z))
    return z


def inverse_branch(m: MapModel, branch: int, y):
    """Inverse branch f_branch(y): f_0 lands in [0,c], f_1 in (c,1].

    Raises OutOfRange when y is outside the branch's range ([0,1] for
    branch 0; (0,1] for branch 1, whose range does not attain 0).
    """
    if branch not in (0, 1):
        raise OutOfRange("branch must be 0 or 1")
    arr, scalar = _as_array(y)
    _check_unit(arr, "y")
    if branch == 1 and np.any(arr == 0.0):
        raise OutOfRange("branch 1 range is (0,1]; y=0 has no preimage")
    a = np.atleast_1d(arr)
    if m.family == "boole":
        out = _boole_f0(a) if branch == 0 else 1.0 - _boole_f0(1.0 - a)
    else:
        q = m.p + 1.0
        if branch == 0:
            out = _poly_inverse(a, m.K0, q, m.cut)
        else:
            out = 1.0 - _poly_inverse(1.0 - a, m.K1, q, 1.0 - m.cut)
    return float(out[0]) if scalar else out.reshape(arr.shape)


def iterate_inverse_branch(m: MapModel, branch: int, y: float, n: int) -> float:
    """n-fold inverse branch f_branch^n(y); monotone toward the fixed point."""
    if n < 0:
        raise OutOfRange("n must be >= 0")
    if branch not in (0, 1):
        raise OutOfRange("branch must be 0 or 1")
    x = float(y)
    if not 0.0 <= x <= 1.0:
        raise OutOfRange("y must lie in [0,1]")
    if branch == 1 and x == 0.0:
        raise OutOfRange("branch 1 range is (0,1]")
    if m.family == "boole":
        if branch == 0:
            for _ in range(n):
                x = 2.0 * x / (1.0 + x + math.sqrt(5.0 * x * x - 2.0 * x + 1.0))
        else:
            u = 1.0 - x
            for _ in range(n):
                u = 2.0 * u / (1.0 + u + math.sqrt(5.0 * u * u - 2.0 * u + 1.0))
            x = 1.0 - u
        return x
    q = m.p + 1.0
    if branch == 0:
        K, zmax = m.K0, m.cut
        for _ in range(n):
            x = _poly_inverse_scalar(x, K, q, zmax)
        return x
    K, zmax = m.K1, 1.0 - m.cut
    u = 1.0 - x
    for _ in range(n):
        u = _poly_inverse_scalar(u, K, q, zmax)
    return 1.0 - u


def _poly_inverse_scalar(y: float, K: float, q: float, zmax: float) -> float:
    z = y if y < zmax else zmax
    for _ in range(200):
        step = (z + K * z ** q - y) / (1.0 + q * K * z ** (q - 1.0))
        z -= step
        if abs(step) <= 1e-17 + 1e-16 * z:
            break
    return z


def find_two_periodic_point(m: MapModel, scan_points: int = 4001) -> float:
    """Locate gamma in (0,c) with T(T(gamma)) = gamma and T(gamma) > c.

    Scans a uniform grid of the region where the first image crosses the cut,
    refines each sign change of T^2(x)-x by Brent's method, and returns the
    smallest root.  Warns if several distinct roots show up; raises NotFound
    when the scan sees no sign change or the refined root fails the
    1e-12 residual check.
    """
    grid = np.linspace(1e-9, m.cut, scan_points)
    t1 = _apply_arr(m, grid)
    valid = t1 > m.cut
    if not np.any(valid):
        raise NotFound("no grid point maps across the cut")
    g = np.where(valid, _apply_arr(m, np.clip(t1, 0.0, 1.0)) - grid, np.nan)
    roots = []
    idx = np.nonzero(valid[:-1] & valid[1:] & (g[:-1] * g[1:] <= 0.0))[0]
    for i in idx:
        if g[i] == 0.0:
            roots.append(grid[i])
            continue
        r = brentq(lambda x: apply(m, apply(m, x)) - x, grid[i], grid[i + 1],
                   xtol=1e-16, rtol=8.9e-16)
        roots.append(r)
    # Deduplicate near-identical refinements from adjacent cells.
    uniq: list[float] = []
    for r in sorted(roots):
        if not uniq or r - uniq[-1] > 1e-9:
            uniq.append(r)
    if not uniq:
        raise NotFound("scan found no sign change of T^2(x)-x with Tx > cut")
    if len(uniq) > 1:
        warnings.warn(f"{len(uniq)} two-periodic points found; returning the "
                      "smallest", RuntimeWarning, stacklevel=2)
    gamma = uniq[0]
    if abs(apply(m, apply(m, gamma)) - gamma) > 1e-12:
        raise NotFound("refined candidate fails the two-periodicity residual")
    return float(gamma)


def boole_chart(x):
    """Real-line chart z = 1/(1-x) - 1/x; endpoints map to -inf/+inf.

    The chart transports the rational map to z -> z - 1/z and its invariant
    density 1/x^2 + 1/(1-x)^2 to Lebesgue measure on the line, so chart
    differences of interval endpoints ARE invariant measures of intervals.
    """
    arr, scalar = _as_array(x)
    _check_unit(arr, "x")
    a = np.atleast_1d(arr)
    with np.errstate(divide="ignore"):
        out = 1.0 / (1.0 - a) - 1.0 / a
    out[a == 0.0] = -np.inf
    out[a == 1.0] = np.inf
    return float(out[0]) if scalar else out.reshape(arr.shape)


def boole_chart_inverse(z):
    """Inverse of the real-line chart; the root of (1-x)^{-1} - x^{-1} = z.

    Solved from the quadratic z*x^2 + (2-z)*x - 1 = 0 in its cancellation-free
    arrangement, with a cubic series below |z| = 1e-3 where the quadratic
    loses digits.
    """
    arr, scalar = _as_array_real(z)
    a = np.atleast_1d(arr)
    out = np.empty_like(a)
    neg = a < 0.0
    w = np.abs(a)
    small = w < 1e-3
    ws = w[small]
    out[small] = 0.5 + ws / 8.0 - ws ** 3 / 128.0
    wb = w[~small]
    out[~small] = ((wb - 2.0) + np.sqrt(wb * wb + 4.0)) / (2.0 * wb)
    out[np.isposinf(w)] = 1.0
    out[neg] = 1.0 - out[neg]
    return float(out[0]) if scalar else out.reshape(arr.shape)


def _as_array_real(z):
    arr = np.asarray(z, dtype=np.float64)
    if np.any(np.isnan(arr)):
        raise OutOfRange("chart coordinate must not be NaN")
    return arr, arr.ndim == 0


def canonical_partition(m: MapModel) -> ReferencePartition:
    """Partition at the two-periodic point: c0 = gamma, c1 = T(gamma)."""
    gamma = find_two_periodic_point(m)
    return ReferencePartition(c0=gamma, c1=apply(m, gamma), gamma=gamma)


def make_partition(m: MapModel, c0: float, c1: float) -> ReferencePartition:
    """Partition with explicit cuts, validated against the separation bounds
    c0 in (0, gamma] and c1 in [T(gamma), 1)."""
    gamma = find_two_periodic_point(m)
    tgamma = apply(m, gamma)
    eps = 1e-12
    if not 0.0 < c0 <= gamma + eps:
        raise OutOfRange(f"c0 must lie in (0, gamma]; gamma = {gamma}")
    if not tgamma - eps <= c1 < 1.0:
        raise OutOfRange(f"c1 must lie in [T(gamma), 1); T(gamma) = {tgamma}")
    return ReferencePartition(c0=float(c0), c1=float(c1), gamma=gamma)
