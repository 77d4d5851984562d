"""Streaming occupation statistics along single map trajectories.

Counting conventions (steps 1..n, matching the partition identity):

* ``S_n^Y``   — number of k in 1..n with T^k x in the closed window [c0,c1];
* ``Z_n^Y``   — the last such k (0 when the window was never visited);
* ``S_n^{A_i}`` — time spent left of c0 / right of c1;
* ``phi``     — first k >= 1 with T^k x in the window.

All statistics are exact integers; no floating accumulation.  Long orbits
hug the indifferent endpoints, so iteration never runs in raw unit
coordinates on the production path: the rational family steps in the
real-line chart z -> z - 1/z (the endpoints are pushed to infinity), and
the polynomial family steps in mirrored coordinates u = 1-x on the right
half so both tails keep relative precision.  An orbit that reaches a
non-finite value or the chart pole is *escaped*: batch APIs report it in a
mask, the single-orbit API raises ``NumericEscape``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from .errors import DomainError, NumericEscape
from .maps import MapModel, ReferencePartition, boole_chart

__all__ = [
    "OrbitSummary",
    "simulate_orbit",
    "simulate_orbits",
    "first_return_time",
    "first_return_times",
]


@dataclass(frozen=True)
class OrbitSummary:
    """Occupation statistics of one orbit at each checkpoint.

    ``phi`` is the first entry time into the window within the horizon
    (first *return* time when ``x0`` starts inside), or ``None`` if the
    orbit did not enter by the last checkpoint.
    """

    x0: float
    checkpoints: Tuple[int, ...]
    s_y: Tuple[int, ...]
    z_y: Tuple[int, ...]
    s_a0: Tuple[int, ...]
    s_a1: Tuple[int, ...]
    phi: Optional[int]


def _validated_checkpoints(checkpoints) -> np.ndarray:
    cps = np.asarray(checkpoints, dtype=np.int64)
    if cps.ndim != 1 or cps.size == 0:
        raise DomainError("checkpoints must be a nonempty 1-d sequence")
    if cps[0] < 1 or np.any(np.diff(cps) <= 0):
        raise DomainError("checkpoints must be strictly increasing and >= 1")
    return cps


def _boole_unit_step(x: float) -> float:
    """One unit-coordinate step, bitwise identical to ``maps.apply``."""
    if x <= 0.5:
        if x < 1e-12:
            return x * (1.0 + x * x)
        return x * (1.0 - x) / (1.0 - x - x * x)
    u = 1.0 - x
    if u < 1e-12:
        return 1.0 - u * (1.0 + u * u)
    return 1.0 - u * (1.0 - u) / (1.0 - u - u * u)


def _boole_unit_orbit(x: float, cps: np.ndarray, c0: float, c1: float):
    """Unit-coordinate reference path (cross-checks only; chart is default).

    Detects the two float pathologies near the indifferent endpoints:
    reaching an exact interior fixed point of the *float* step (stall) and
    leaving [0,1]/finiteness.
    """
    m = cps.shape[0]
    sy = np.zeros(m, dtype=np.int64)
    zy = np.zeros(m, dtype=np.int64)
    sa0 = np.zeros(m, dtype=np.int64)
    sa1 = np.zeros(m, dtype=np.int64)
    cy = ca0 = ca1 = last = 0
    first = -1
    bad = False
    cp = 0
    for n in range(1, int(cps[-1]) + 1):
        if not bad:
            nxt = _boole_unit_step(x)
            stalled = nxt == x and 0.0 < x < 1.0
            if not math.isfinite(nxt) or not 0.0 <= nxt <= 1.0 or stalled:
                bad = True
            else:
                x = nxt
                if x < c0:
                    ca0 += 1
                elif x <= c1:
                    cy += 1
                    last = n
                    if first < 0:
                        first = n
                else:
                    ca1 += 1
        if n == cps[cp]:
            sy[cp], zy[cp], sa0[cp], sa1[cp] = cy, last, ca0, ca1
            cp += 1
    return sy, zy, sa0, sa1, first, bad


def simulate_orbits(m: MapModel, part: ReferencePartition, x0,
                    checkpoints, chart: Optional[str] = None):
    """Checkpointed statistics for a batch of orbits.

    Returns ``(s_y, z_y, s_a0, s_a1, phi, escaped)`` with shape (M, m) for
    the four statistics and (M,) for ``phi`` (-1 = no entry by the horizon)
    and the escape mask.  ``chart`` overrides the map's preferred long-orbit
    coordinates ("real-line" is only valid for the rational family).
    """
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    if np.any(~np.isfinite(x)) or np.any((x < 0.0) | (x > 1.0)):
        raise DomainError("initial points must lie in [0,1]")
    cps = _validated_checkpoints(checkpoints)
    mode = m.chart if chart is None else chart
    if mode not in ("unit", "real-line"):
        raise DomainError(f"unknown chart {mode!r}")
    if mode == "real-line" and m.family != "boole":
        raise DomainError("real-line chart is only valid for the rational map")

    if m.family == "boole" and mode == "real-line":
        zlo = float(boole_chart(part.c0))
        zhi = float(boole_chart(part.c1))
        z0 = np.where((x == 0.0) | (x == 1.0), np.nan, x)
        interior = np.isfinite(z0)
        z0[interior] = boole_chart(z0[interior])
        out = _kernels.boole_orbit_stats(np.where(interior, z0, 0.1),
                                         cps, zlo, zhi)
        sy, zy, sa0, sa1, phi, escaped = out
        # the endpoints are exact fixed points outside the chart: their
        # orbits sit in the matching ray at every step
        fixed = ~interior
        if np.any(fixed):
            for arr in (sy, zy):
                arr[fixed] = 0
            sa0[fixed] = np.where(x[fixed][:, None] == 0.0, cps[None, :], 0)
            sa1[fixed] = np.where(x[fixed][:, None] == 1.0, cps[None, :], 0)
            phi[fixed] = -1
            escaped[fixed] = False
        return sy, zy, sa0, sa1, phi, escaped

    if m.family == "boole":
        M, nm = x.shape[0], cps.shape[0]
        sy = np.zeros((M, nm), dtype=np.int64)
        zy = np.zeros((M, nm), dtype=np.int64)
        sa0 = np.zeros((M, nm), dtype=np.int64)
        sa1 = np.zeros((M, nm), dtype=np.int64)
        phi = np.full(M, -1, dtype=np.int64)
        escaped = np.zeros(M, dtype=bool)
        for i in range(M):
            res = _boole_unit_orbit(float(x[i]), cps, part.c0, part.c1)
            sy[i], zy[i], sa0[i], sa1[i], phi[i], escaped[i] = res
        return sy, zy, sa0, sa1, phi, escaped

    return _kernels.thaler_orbit_stats(x, cps, part.c0, part.c1,
                                       m.cut, m.p, m.K0, m.K1)


def simulate_orbit(m: MapModel, part: ReferencePartition, x0: float,
                   checkpoints, chart: Optional[str] = None) -> OrbitSummary:
    """Single-orbit wrapper: raises ``NumericEscape`` instead of masking."""
    sy, zy, sa0, sa1, phi, escaped = simulate_orbits(
        m, part, [x0], checkpoints, chart=chart)
    if escaped[0]:
        raise NumericEscape(
            f"orbit from x0={x0} left the representable domain "
            f"(chart pole or non-finite iterate)")
    cps = _validated_checkpoints(checkpoints)
    return OrbitSummary(
        x0=float(x0),
        checkpoints=tuple(int(n) for n in cps),
        s_y=tuple(int(v) for v in sy[0]),
        z_y=tuple(int(v) for v in zy[0]),
        s_a0=tuple(int(v) for v in sa0[0]),
        s_a1=tuple(int(v) for v in sa1[0]),
        phi=None if phi[0] < 0 else int(phi[0]),
    )


def first_return_times(m: MapModel, part: ReferencePartition, x0,
                       cap: int, chart: Optional[str] = None) -> np.ndarray:
    """First k in 1..cap with T^k x back in [c0,c1]; -1 when k exceeds cap.

    Requires every start point inside the window (these are *return*
    times); use ``simulate_orbits``' ``phi`` for entry times from outside.
    The rational family defaults to the chart engine; pass ``chart="unit"``
    for the unit-coordinate engine, where the canonical window corners are
    an exact float 2-cycle (the chart image of that cycle is repelling, so
    corner orbits shed ulp-level rounding *outward* there).
    """
    if cap < 1:
        raise DomainError(f"cap must be >= 1, got {cap}")
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    if np.any((x < part.c0) | (x > part.c1)):
        raise DomainError("start points must lie in the return window")
    mode = m.chart if chart is None else chart
    if m.family == "boole" and mode == "real-line":
        z0 = boole_chart(x)
        zlo = float(boole_chart(part.c0))
        zhi = float(boole_chart(part.c1))
        return _kernels.boole_first_return(np.atleast_1d(z0), zlo, zhi,
                                           int(cap))
    if m.family == "boole":
        out = np.full(x.shape[0], -1, dtype=np.int64)
        for i in range(x.shape[0]):
            v = float(x[i])
            for n in range(1, int(cap) + 1):
                v = _boole_unit_step(v)
                if part.c0 <= v <= part.c1:
                    out[i] = n
                    break
        return out
    return _kernels.thaler_first_return(x, part.c0, part.c1, m.cut,
                                        m.p, m.K0, m.K1, int(cap))


def first_return_time(m: MapModel, part: ReferencePartition, x0: float,
                      cap: int, chart: Optional[str] = None) -> Optional[int]:
    """Scalar first-return time, ``None`` when it exceeds ``cap``."""
    val = int(first_return_times(m, part, [x0], cap, chart=chart)[0])
    return None if val < 0 else val
