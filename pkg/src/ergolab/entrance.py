"""Pointwise transfer-operator evaluation and entrance densities.

Everything runs in the real-line chart z = 1/(1-x) - 1/x, where the
reference measure is Lebesgue, the map acts as z -> z - 1/z, and the two
inverse branches are

    g0(z) = (z - sqrt(z^2+4))/2,    g1(z) = (z + sqrt(z^2+4))/2,

with derivative weights g0'(z) + g1'(z) = 1 exactly.  The dual operator on
densities u (with respect to the reference measure) is

    (L u)(z) = u(g0 z) g0'(z) + u(g1 z) g1'(z).

Two structural facts make pointwise evaluation cheap:

* an excursion cannot switch sides of the window Y without entering Y, so
  the k-step operator image of a first-entry level indicator reduces to the
  two extreme branch words (all-left and all-right), each O(k);
* the mixed words "one opposite step after j same-side steps" have weights
  that telescope, sum_{j<J} (g1 o g0^j)'(z) = 1 - (g0^J)'(z), which yields
  exact truncation certificates for the identity checks.

Only the rational family has a closed-form density, so every operation here
requires it and raises NoClosedFormDensity otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, NoClosedFormDensity, OutOfRange
from .maps import (
    MapModel,
    ReferencePartition,
    boole_chart,
    boole_chart_inverse,
)
from .invariant import invariant_density, wandering_table, y_level_set
from ._csvio import write_csv
from ._kernels import (
    chart_pullback_points,
    transfer_mass_step,
    yn_identity_scan,
    yn_piece_sum,
)

__all__ = [
    "EntranceDensityApprox",
    "chebyshev_grid",
    "transfer_indicator",
    "entrance_density",
    "entrance_density_side",
    "check_identity_Yn",
    "check_identity_Yn_integrated",
    "renewal_sides",
    "check_identity_renewal",
    "sweeping_diagnostic",
    "transfer_mass_sequence",
    "integrate_mu",
    "write_entrance_csv",
]


def _require_chart(m: MapModel) -> None:
    if m.family != "boole":
        raise NoClosedFormDensity(
            "transfer-operator evaluation needs the closed-form density of "
            "the rational family")


def _g0(z):
    return 0.5 * (z - np.sqrt(z * z + 4.0))


def _g1(z):
    return 0.5 * (z + np.sqrt(z * z + 4.0))


def _dg0(z):
    r = np.sqrt(z * z + 4.0)
    # (1 - z/r)/2 loses digits for z >> 1; use the rationalized form there
    plain = 0.5 * (1.0 - z / r)
    safe = 2.0 / (r * (r + np.abs(z)))
    return np.where(z > 0.0, safe, plain)


def _dg1(z):
    r = np.sqrt(z * z + 4.0)
    plain = 0.5 * (1.0 + z / r)
    safe = 2.0 / (r * (r + np.abs(z)))
    return np.where(z < 0.0, safe, plain)


def chebyshev_grid(part: ReferencePartition, n: int = 256) -> np.ndarray:
    """Ascending first-kind Chebyshev nodes on the open window (c0, c1).

    Endpoint clustering resolves the region where entrance densities vary
    fastest; the open nodes avoid membership ties at the window boundary.
    """
    if n < 2:
        raise OutOfRange("need at least 2 grid points")
    theta = (2.0 * np.arange(n) + 1.0) * math.pi / (2.0 * n)
    mid = 0.5 * (part.c0 + part.c1)
    half = 0.5 * (part.c1 - part.c0)
    return mid + half * np.cos(theta)[::-1]


@dataclass(frozen=True)
class EntranceDensityApprox:
    """Finite-n entrance density on a grid over the window Y.

    values[j] approximates the n-term operator average at grid[j]: the sum
    of the k-step operator images of the k-th first-entry level indicators,
    k < n, divided by ``normalizer`` (the n-th wandering sum, or its one-
    sided part when ``side`` is 0 or 1).  Nonnegative by construction and
    normalized so that the integral against the invariant density is one.
    """

    n: int
    side: int | None
    grid: np.ndarray
    values: np.ndarray
    normalizer: float

    def integral(self, m: MapModel) -> float:
        """Trapezoidal integral of the density against the invariant measure."""
        h = invariant_density(m).density(self.grid)
        return float(np.trapezoid(self.values * h, self.grid))


def _entrance_sums(m: MapModel, part: ReferencePartition, n: int,
                   grid: np.ndarray):
    """Shared-walk accumulation of the operator sums over k = 0..n-1.

    Returns (S_full, S_side0, S_side1) where S_full = 1 + S_side0 + S_side1
    holds exactly by construction (the k = 0 term is the constant 1 on Y).
    """
    z = boole_chart(grid)
    zc0 = boole_chart(part.c0)
    zc1 = boole_chart(part.c1)
    zb0 = chart_pullback_points(zc0, n)
    zb1 = -chart_pullback_points(-zc1, n)
    w0 = z.copy()
    d0 = np.ones_like(z)
    w1 = z.copy()
    d1 = np.ones_like(z)
    s0 = np.zeros_like(z)
    s1 = np.zeros_like(z)
    for k in range(1, n):
        d0 = d0 * _dg0(w0)
        w0 = _g0(w0)
        d1 = d1 * _dg1(w1)
        w1 = _g1(w1)
        s0 += d0 * ((w0 >= zb0[k]) & (w0 < zb0[k - 1]))
        s1 += d1 * ((w1 > zb1[k - 1]) & (w1 <= zb1[k]))
    return 1.0 + s0 + s1, s0, s1


def transfer_indicator(m: MapModel, part: ReferencePartition, k: int, y):
    """k-step operator image of the k-th first-entry level indicator at y.

    Reduces to the two extreme branch words: the weight (g_i^k)'(z) of each
    side survives exactly when the k-fold pullback of y lands in the k-th
    level interval of that side.  For k = 0 the level set is Y itself and
    the value is identically 1 on Y.
    """
    _require_chart(m)
    if k < 0:
        raise OutOfRange("k must be >= 0")
    arr = np.asarray(y, dtype=float)
    scalar = arr.ndim == 0
    a = np.atleast_1d(arr)
    if np.any(a < part.c0) or np.any(a > part.c1):
        raise OutOfRange("y must lie in the window [c0, c1]")
    if k == 0:
        out = np.ones_like(a)
        return float(out[0]) if scalar else out
    z = boole_chart(a)
    zc0 = boole_chart(part.c0)
    zc1 = boole_chart(part.c1)
    zb0 = chart_pullback_points(zc0, k)
    zb1 = -chart_pullback_points(-zc1, k)
    w0 = z.copy()
    d0 = np.ones_like(z)
    w1 = z.copy()
    d1 = np.ones_like(z)
    for _ in range(k):
        d0 = d0 * _dg0(w0)
        w0 = _g0(w0)
        d1 = d1 * _dg1(w1)
        w1 = _g1(w1)
    out = d0 * ((w0 >= zb0[k]) & (w0 < zb0[k - 1])) \
        + d1 * ((w1 > zb1[k - 1]) & (w1 <= zb1[k]))
    return float(out[0]) if scalar else out


def entrance_density(m: MapModel, part: ReferencePartition, n: int,
                     grid: np.ndarray | None = None) -> EntranceDensityApprox:
    """n-term entrance density H_n on a grid over Y (default Chebyshev-256)."""
    _require_chart(m)
    if n < 1:
        raise DomainError("entrance density needs n >= 1")
    if grid is None:
        grid = chebyshev_grid(part)
    grid = np.asarray(grid, dtype=float)
    full, _, _ = _entrance_sums(m, part, n, grid)
    w_n = wandering_table(m, part, n).w[n]
    return EntranceDensityApprox(n=n, side=None, grid=grid,
                                 values=full / w_n, normalizer=float(w_n))


def entrance_density_side(m: MapModel, part: ReferencePartition, n: int,
                          side: int,
                          grid: np.ndarray | None = None
                          ) -> EntranceDensityApprox:
    """One-sided entrance density H_n^(side), normalized by the one-sided
    wandering sum (defined for n >= 2; the n = 1 sum is empty)."""
    _require_chart(m)
    if side not in (0, 1):
        raise OutOfRange("side must be 0 or 1")
    if n < 2:
        raise DomainError("one-sided entrance density needs n >= 2")
    if grid is None:
        grid = chebyshev_grid(part)
    grid = np.asarray(grid, dtype=float)
    _, s0, s1 = _entrance_sums(m, part, n, grid)
    tab = wandering_table(m, part, n)
    w_side = (tab.w_A0 if side == 0 else tab.w_A1)[n]
    values = (s0 if side == 0 else s1) / w_side
    return EntranceDensityApprox(n=n, side=side, grid=grid, values=values,
                                 normalizer=float(w_side))


def _default_yn_grid(m: MapModel, part: ReferencePartition, n: int,
                     pts_per_interval: int = 8) -> np.ndarray:
    """Interior Chebyshev points of the level sets n-1, n, n+1 on both sides."""
    pieces = []
    for lev in (n - 1, n, n + 1):
        if lev < 1:
            continue
        (lo0, hi0), (lo1, hi1) = y_level_set(m, part, lev)
        for lo, hi in ((lo0, hi0), (lo1, hi1)):
            theta = (2.0 * np.arange(pts_per_interval) + 1.0) * math.pi \
                / (2.0 * pts_per_interval)
            pieces.append(0.5 * (lo + hi) + 0.5 * (hi - lo) * np.cos(theta))
    return np.concatenate(pieces)


def check_identity_Yn(m: MapModel, part: ReferencePartition, n: int,
                      grid: np.ndarray | None = None,
                      horizon: int | None = None) -> float:
    """Max grid residual of the first-entry identity at level n >= 1.

    The identity writes the level-n indicator as the sum over k > n of the
    (k-n)-step operator images of the return-time-k subsets of Y.  At each
    grid point the truncated word sum is compared with the indicator; the
    omitted tail is the exact telescope remainder (g_side^{horizon-n})'(z),
    which decays like horizon^{-1/2} pointwise, and the default horizon
    keeps it below ~3e-3 for points within the first few hundred levels.
    Points inside Y contribute zero to both sides and are ignored.
    """
    _require_chart(m)
    if n < 1:
        raise OutOfRange("the identity check targets level sets n >= 1")
    if horizon is None:
        horizon = 400_000 + 50 * n
    if horizon <= n:
        raise OutOfRange("horizon must exceed n")
    if grid is None:
        grid = _default_yn_grid(m, part, n)
    grid = np.asarray(grid, dtype=float)
    zc0 = boole_chart(part.c0)
    zc1 = boole_chart(part.c1)
    z = boole_chart(grid)
    best = 0.0
    left = z < zc0
    right = z > zc1
    if np.any(left):
        sums, ind, _ = yn_identity_scan(np.ascontiguousarray(z[left]),
                                        zc0, zc1, n, horizon)
        best = max(best, float(np.max(np.abs(ind - sums))))
    if np.any(right):
        sums, ind, _ = yn_identity_scan(np.ascontiguousarray(-z[right]),
                                        -zc1, -zc0, n, horizon)
        best = max(best, float(np.max(np.abs(ind - sums))))
    return best


def check_identity_Yn_integrated(m: MapModel, part: ReferencePartition,
                                 n: int, horizon: int) -> float:
    """|mu(Y_n) - sum_{k=n+1}^{horizon} mu(Y inter {return = k})|.

    Integrated form of the first-entry identity: both sides are measures,
    the left one from the wandering-rate tail, the right one summed piece
    by piece over return times.  In exact arithmetic the difference is the
    omitted tail mu(Y_horizon) ~ sqrt(2/horizon), so the horizon controls
    the attainable residual directly.
    """
    _require_chart(m)
    if n < 1:
        raise OutOfRange("the identity check targets level sets n >= 1")
    if horizon <= n:
        raise OutOfRange("horizon must exceed n")
    from .invariant import return_tail

    pieces = yn_piece_sum(part.c0, part.c1, n, horizon)
    return abs(return_tail(m, part, n) - pieces)


def renewal_sides(m: MapModel, part: ReferencePartition, s: float,
                  grid: np.ndarray | None = None,
                  horizon: int | None = None):
    """Both sides of the exponentially weighted renewal identity on Y.

    Returns (lhs, rhs, grid) where, writing L for the dual operator,

        lhs = 1 - sum_{k>=1} e^{-ks} L^k 1_{Y inter {return = k}},
        rhs = (1 - e^{-s}) sum_{j>=0} e^{-js} L^j 1_{Y_j},

    each truncated at ``horizon`` terms with certified geometric tails
    (e^{-(K+1)s} per side; the default horizon makes the total < 7.5e-7).
    Both sides lie in [0, 1] pointwise.
    """
    _require_chart(m)
    if not s > 0.0:
        raise DomainError("s must be positive")
    if horizon is None:
        horizon = int(math.ceil(math.log(4.0e6) / s))
    if grid is None:
        grid = chebyshev_grid(part, 200)
    grid = np.asarray(grid, dtype=float)
    zc0 = boole_chart(part.c0)
    zc1 = boole_chart(part.c1)
    z = boole_chart(grid)
    lhs0, rhs0 = _renewal_half(z, zc0, zc1,
                               chart_pullback_points(zc0, horizon), s)
    lhs1, rhs1 = _renewal_half(-z, -zc1, -zc0,
                               chart_pullback_points(-zc1, horizon), s)
    lhs = 1.0 - (lhs0 + lhs1)
    rhs = (1.0 - math.exp(-s)) * (1.0 + rhs0 + rhs1)
    return lhs, rhs, grid


def _renewal_half(z: np.ndarray, zlo: float, zhi: float, zb: np.ndarray,
                  s: float):
    """One-sided word sums for the renewal identity (deep side of zb)."""
    w = z.copy()
    d = np.ones_like(z)
    lhs = np.zeros_like(z)
    rhs = np.zeros_like(z)
    K = zb.shape[0] - 1
    for k in range(1, K + 1):
        r = np.sqrt(w * w + 4.0)
        zeta = 0.5 * (w + r)
        mem = (zeta >= zlo) & (zeta <= zhi)
        if k >= 2:
            mem &= (w >= zb[k - 1]) & (w < zb[k - 2])
        ek = math.exp(-k * s)
        lhs += ek * d * 0.5 * (1.0 + w / r) * mem
        d = d * 0.5 * (1.0 - w / r)
        w = 0.5 * (w - r)
        rhs += ek * d * ((w >= zb[k]) & (w < zb[k - 1]))
    return lhs, rhs


def check_identity_renewal(m: MapModel, part: ReferencePartition, s: float,
                           grid: np.ndarray | None = None,
                           horizon: int | None = None) -> float:
    """Max grid residual between the two sides of the renewal identity."""
    lhs, rhs, _ = renewal_sides(m, part, s, grid, horizon)
    return float(np.max(np.abs(lhs - rhs)))


def sweeping_diagnostic(m: MapModel, part: ReferencePartition,
                        grid: np.ndarray, values: np.ndarray, K: int,
                        target: np.ndarray | None = None):
    """Smallest C with C * sum_{k<=K} L^k H >= 1 on the grid.

    H is given by ``values`` on ``grid`` (a density with respect to the
    invariant measure, supported on Y; linear interpolation, zero outside
    the grid range).  The full 2^K preimage tree is enumerated, which caps
    K at 10.  Returns (C_min, feasible); C_min is inf when the operator sum
    vanishes somewhere on the target, and feasible reports whether the sum
    stays bounded away from zero (> 1e-12).
    """
    _require_chart(m)
    if not 0 <= K <= 10:
        raise OutOfRange("K must lie in 0..10 (preimage tree grows as 2^K)")
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    if grid.shape != values.shape:
        raise OutOfRange("grid and values must have matching shapes")
    if np.any(np.diff(grid) <= 0.0):
        raise OutOfRange("grid must be strictly increasing")
    zg = boole_chart(grid)
    total = np.interp(zg, zg, values)  # k = 0 term: H itself
    Z = zg[:, None]
    W = np.ones_like(Z)
    for _ in range(K):
        D0 = _dg0(Z)
        D1 = _dg1(Z)
        Z = np.concatenate([_g0(Z), _g1(Z)], axis=1)
        W = np.concatenate([W * D0, W * D1], axis=1)
        leaf = np.interp(Z.ravel(), zg, values, left=0.0, right=0.0)
        total += (leaf.reshape(Z.shape) * W).sum(axis=1)
    if target is not None:
        total = total[np.asarray(target, dtype=bool)]
    min_sum = float(np.min(total)) if total.size else 0.0
    feasible = min_sum > 1e-12
    c_min = math.inf if min_sum <= 0.0 else 1.0 / min_sum
    return c_min, feasible


def transfer_mass_sequence(m: MapModel, dens: EntranceDensityApprox,
                           steps: int, n_grid: int = 1 << 22) -> np.ndarray:
    """Total mass of L^k(density), k = 0..steps, on a uniform unit grid.

    The density is interpolated onto the grid as a mass density in x (values
    times the invariant density, zero off its grid), pushed through the dual
    operator step by step, and integrated by the trapezoidal rule after each
    step.  Exact propagation conserves mass; the discretization drifts by
    O(jump variation / n_grid) per step, so n_grid controls the resolution
    of the conservation check.
    """
    _require_chart(m)
    if steps < 0:
        raise OutOfRange("steps must be >= 0")
    x = np.linspace(0.0, 1.0, n_grid)
    h = np.zeros_like(x)
    inside = (x >= dens.grid[0]) & (x <= dens.grid[-1])
    xin = x[inside]
    h[inside] = np.interp(xin, dens.grid, dens.values) \
        * (1.0 / xin**2 + 1.0 / (1.0 - xin) ** 2)
    masses = np.empty(steps + 1)
    masses[0] = np.trapezoid(h, dx=1.0 / (n_grid - 1))
    for k in range(1, steps + 1):
        h = transfer_mass_step(h)
        masses[k] = np.trapezoid(h, dx=1.0 / (n_grid - 1))
    return masses


def integrate_mu(m: MapModel, func, a: float, b: float, n_nodes: int = 64,
                 breakpoints: tuple = ()) -> float:
    """Gauss-Legendre integral of func against the invariant measure.

    Works in the chart, where the measure is Lebesgue, splitting at the
    chart images of any breakpoints inside (a, b); func receives x-points.
    """
    _require_chart(m)
    if not 0.0 < a <= b < 1.0:
        raise DomainError("need 0 < a <= b < 1")
    cuts = sorted({boole_chart(a), boole_chart(b)}
                  | {boole_chart(t) for t in breakpoints if a < t < b})
    nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
    total = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        zp = mid + half * nodes
        total += half * float(np.sum(weights * func(boole_chart_inverse(zp))))
    return total


def write_entrance_csv(path: str, full: EntranceDensityApprox,
                       side0: EntranceDensityApprox,
                       side1: EntranceDensityApprox) -> None:
    """Export an entrance-density triple as CSV (y, H_n, H_n_0, H_n_1)."""
    if not (full.grid.shape == side0.grid.shape == side1.grid.shape
            and np.all(full.grid == side0.grid)
            and np.all(full.grid == side1.grid)):
        raise OutOfRange("density triple must share one grid")
    if not (full.n == side0.n == side1.n):
        raise OutOfRange("density triple must share the index n")
    write_csv(path,
              {"y": full.grid, "H_n": full.values, "H_n_0": side0.values,
               "H_n_1": side1.values},
              meta={"n": full.n, "w_n": full.normalizer,
                    "w_n_A0": side0.normalizer, "w_n_A1": side1.normalizer,
                    "table": "entrance"})
