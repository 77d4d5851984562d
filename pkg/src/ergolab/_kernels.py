"""Numba kernels for hot loops: chart pullback walks, Laplace sums, orbits.

Everything here works in raw float64/int64 arrays; wrapping, validation and
unit conversions live in the public modules.  All kernels are deterministic
functions of their inputs; the ``parallel=True`` ones only split independent
per-sample work across threads, so results are identical for any thread
count.
"""

import numpy as np
import numba
from numba import njit, prange

# The default OpenMP threading layer is not fork-safe, and the experiment
# drivers split sample ranges across forked worker processes; workqueue is
# the documented fork-safe layer and costs nothing for these kernels.
numba.config.THREADING_LAYER = "workqueue"

# ---------------------------------------------------------------------------
# Real-line chart walks for the rational (boole) family.
#
# In the chart z = 1/(1-x) - 1/x the map acts as F(z) = z - 1/z, the
# invariant measure is Lebesgue, and the two inverse branches are
#
#     g0(z) = (z - sqrt(z^2+4))/2   (left branch, z -> -inf),
#     g1(z) = (z + sqrt(z^2+4))/2   (right branch, z -> +inf),
#
# both cancellation-free in the direction they are iterated.  Because
# F(g(z)) = z exactly, consecutive pullbacks satisfy z_{n-1} - z_n = -1/z_n,
# i.e. the chart length of the n-th level interval is 1/|z_n|.
# ---------------------------------------------------------------------------


@njit(cache=True)
def chart_pullback_points(z0: float, n: int) -> np.ndarray:
    """Left-branch pullback chart points z_k = g0^k(z0), k = 0..n."""
    zs = np.empty(n + 1)
    zs[0] = z0
    z = z0
    for k in range(1, n + 1):
        z = 0.5 * (z - np.sqrt(z * z + 4.0))
        zs[k] = z
    return zs


@njit(cache=True)
def chart_level_measures(z0: float, n_max: int) -> np.ndarray:
    """mu[k] = measure of the k-th level interval on one side, k = 1..n_max.

    mu[k] = z_{k-1} - z_k = -1/z_k along the left-branch pullback of z0.
    Entry mu[0] is 0 by convention.
    """
    mu = np.zeros(n_max + 1)
    z = z0
    for k in range(1, n_max + 1):
        z = 0.5 * (z - np.sqrt(z * z + 4.0))
        mu[k] = -1.0 / z
    return mu


@njit(cache=True)
def q_side_sum(z0: float, s: float, rel_tol: float, n_cap: int):
    """sum_{n>=1} e^{-ns} * mu_n with mu_n = -1/z_n, certified truncation.

    The mu_n are strictly decreasing, so the tail after n terms is bounded by
    mu_n * q^{n+1}/(1-q) with q = e^{-s}.  Returns (partial_sum, tail_bound,
    n_used); the caller checks tail_bound against its budget.
    """
    z = z0
    q = np.exp(-s)
    w = q
    total = 0.0
    comp = 0.0
    n = 0
    tail = np.inf
    while n < n_cap:
        n += 1
        z = 0.5 * (z - np.sqrt(z * z + 4.0))
        mu = -1.0 / z
        term = w * mu
        y = term - comp
        t = total + y
        comp = (t - total) - y
        total = t
        tail = mu * w * q / (1.0 - q)
        if tail <= rel_tol * total:
            break
        w *= q
    return total, tail, n


@njit(cache=True)
def wandering_side_sums(z0: float, n_max: int):
    """Per-level measures and their prefix sums for one side.

    Returns (mu, w) with mu[k] as in chart_level_measures and
    w[n] = sum_{k=1}^{n-1} mu[k]  (so w[0] = w[1] = 0).
    """
    mu = np.zeros(n_max + 1)
    w = np.zeros(n_max + 1)
    z = z0
    acc = 0.0
    comp = 0.0
    for k in range(1, n_max + 1):
        w[k] = acc
        z = 0.5 * (z - np.sqrt(z * z + 4.0))
        m = -1.0 / z
        mu[k] = m
        y = m - comp
        t = acc + y
        comp = (t - acc) - y
        acc = t
    return mu, w


# ---------------------------------------------------------------------------
# Orbit statistics.
#
# Boole orbits run in the chart (one division per step, no cancellation near
# the fixed points).  Classification thresholds are chart images of the
# partition cuts: z < zlo -> A_0, z <= zhi -> Y, else A_1.
# ---------------------------------------------------------------------------


@njit(parallel=True, cache=True)
def boole_orbit_stats(z0: np.ndarray, checkpoints: np.ndarray,
                      zlo: float, zhi: float):
    """Checkpointed occupation statistics of chart orbits z -> z - 1/z.

    Parameters
    ----------
    z0 : (M,) start points in chart coordinates.
    checkpoints : (m,) strictly increasing positive step counts.
    zlo, zhi : chart images of the partition cuts c0, c1.

    Returns
    -------
    sy, zy, sa0, sa1 : (M, m) int64 — S_n^Y, Z_n^Y, S_n^{A_0}, S_n^{A_1}
        at each checkpoint (counting steps 1..n).
    phi : (M,) int64 — first k >= 1 with orbit point in Y, capped at the
        last checkpoint; -1 if no entry happened by the cap.
    escaped : (M,) bool — orbit hit a non-finite value or exact 0 (the
        chart pole); statistics beyond that point are frozen.
    """
    M = z0.shape[0]
    m = checkpoints.shape[0]
    n_max = checkpoints[m - 1]
    sy = np.zeros((M, m), dtype=np.int64)
    zy = np.zeros((M, m), dtype=np.int64)
    sa0 = np.zeros((M, m), dtype=np.int64)
    sa1 = np.zeros((M, m), dtype=np.int64)
    phi = np.full(M, -1, dtype=np.int64)
    escaped = np.zeros(M, dtype=np.bool_)
    for i in prange(M):
        z = z0[i]
        cy = 0
        c0 = 0
        c1 = 0
        last = 0
        first = -1
        cp = 0
        bad = False
        for n in range(1, n_max + 1):
            if not bad:
                if z == 0.0 or not np.isfinite(z):
                    bad = True
                else:
                    z = z - 1.0 / z
                    if z < zlo:
                        c0 += 1
                    elif z <= zhi:
                        cy += 1
                        last = n
                        if first < 0:
                            first = n
                    else:
                        c1 += 1
            if n == checkpoints[cp]:
                sy[i, cp] = cy
                zy[i, cp] = last
                sa0[i, cp] = c0
                sa1[i, cp] = c1
                cp += 1
        phi[i] = first
        escaped[i] = bad
    return sy, zy, sa0, sa1, phi, escaped


@njit(parallel=True, cache=True)
def thaler_orbit_stats(x0: np.ndarray, checkpoints: np.ndarray,
                       c0: float, c1: float, cut: float,
                       p: float, K0: float, K1: float):
    """Checkpointed occupation statistics for the polynomial family.

    Orbits near the fixed point at 1 are tracked in mirrored coordinates
    u = 1-x (the right branch is u -> u + K1*u^(p+1) there), switching
    representation whenever the orbit crosses the cut, so both tails keep
    full relative precision.
    """
    M = x0.shape[0]
    m = checkpoints.shape[0]
    n_max = checkpoints[m - 1]
    q = p + 1.0
    sy = np.zeros((M, m), dtype=np.int64)
    zy = np.zeros((M, m), dtype=np.int64)
    sa0 = np.zeros((M, m), dtype=np.int64)
    sa1 = np.zeros((M, m), dtype=np.int64)
    phi = np.full(M, -1, dtype=np.int64)
    escaped = np.zeros(M, dtype=np.bool_)
    u_y = 1.0 - c1     # Y in mirrored coordinates: u in [1-c1, 1-c0]
    u_cut = 1.0 - cut
    for i in prange(M):
        v = x0[i]
        mirrored = False
        cy = 0
        ct0 = 0
        ct1 = 0
        last = 0
        first = -1
        cp = 0
        bad = False
        for n in range(1, n_max + 1):
            if not bad:
                if not np.isfinite(v):
                    bad = True
                else:
                    if not mirrored:
                        if v <= cut:
                            v = v + K0 * v ** q
                        else:
                            v = 1.0 - v
                            mirrored = True
                            v = v + K1 * v ** q
                    else:
                        if v >= u_cut:
                            v = 1.0 - v
                            mirrored = False
                            v = v + K0 * v ** q
                        else:
                            v = v + K1 * v ** q
                    # classify (x < c0 -> A_0, x <= c1 -> Y, else A_1)
                    if not mirrored:
                        in_a0 = v < c0
                        in_y = (not in_a0) and (v <= c1)
                    else:
                        in_a0 = v > 1.0 - c0
                        in_y = (not in_a0) and (v >= u_y)
                    if in_a0:
                        ct0 += 1
                    elif in_y:
                        cy += 1
                        last = n
                        if first < 0:
                            first = n
                    else:
                        ct1 += 1
            if n == checkpoints[cp]:
                sy[i, cp] = cy
                zy[i, cp] = last
                sa0[i, cp] = ct0
                sa1[i, cp] = ct1
                cp += 1
        phi[i] = first
        escaped[i] = bad
    return sy, zy, sa0, sa1, phi, escaped


@njit(parallel=True, cache=True)
def boole_first_return(z0: np.ndarray, zlo: float, zhi: float, cap: int):
    """First k >= 1 with F^k(z) in [zlo, zhi]; -1 when k exceeds cap."""
    M = z0.shape[0]
    out = np.full(M, -1, dtype=np.int64)
    for i in prange(M):
        z = z0[i]
        for n in range(1, cap + 1):
            if z == 0.0 or not np.isfinite(z):
                break
            z = z - 1.0 / z
            if zlo <= z <= zhi:
                out[i] = n
                break
    return out


@njit(parallel=True, cache=True)
def thaler_first_return(x0: np.ndarray, c0: float, c1: float, cut: float,
                        p: float, K0: float, K1: float, cap: int):
    """First k >= 1 with T^k(x) in [c0, c1]; -1 when k exceeds cap."""
    M = x0.shape[0]
    q = p + 1.0
    u_y = 1.0 - c1
    u_cut = 1.0 - cut
    out = np.full(M, -1, dtype=np.int64)
    for i in prange(M):
        v = x0[i]
        mirrored = False
        for n in range(1, cap + 1):
            if not np.isfinite(v):
                break
            if not mirrored:
                if v <= cut:
                    v = v + K0 * v ** q
                else:
                    v = 1.0 - v
                    mirrored = True
                    v = v + K1 * v ** q
            else:
                if v >= u_cut:
                    v = 1.0 - v
                    mirrored = False
                    v = v + K0 * v ** q
                else:
                    v = v + K1 * v ** q
            if not mirrored:
                if c0 <= v <= c1:
                    out[i] = n
                    break
            else:
                if u_y <= v <= 1.0 - c0:
                    out[i] = n
                    break
    return out


@njit(cache=True)
def thaler_pullback_left(x0: float, n: int, K0: float, q: float, cut: float):
    """Left-branch pullback f_0^n(x0) for the polynomial family (Newton)."""
    x = x0
    for _ in range(n):
        z = x if x < cut else cut
        for _ in range(200):
            step = (z + K0 * z ** q - x) / (1.0 + q * K0 * z ** (q - 1.0))
            z -= step
            if abs(step) <= 1e-17 + 1e-16 * z:
                break
        x = z
    return x


# ---------------------------------------------------------------------------
# Level-identity scans (rational family only).
#
# For a chart point z on the A_0 side, the depth-(j+1) preimage word
# "one right step after j left steps" has derivative weight
#
#     tau_j = (g1 o g0^j)'(z) = g1'(g0^j z) * (g0^j)'(z),
#
# and since g0' + g1' = 1 these weights telescope:
#
#     sum_{j<J} tau_j = 1 - (g0^J)'(z),
#
# so the exact truncation remainder of a J-term sum is (g0^J)'(z), which the
# scans return as a certificate.  The A_1 side is the mirror image
# z -> -z (g0(-z) = -g1(z)), so one kernel serves both sides.
# ---------------------------------------------------------------------------


@njit(cache=True)
def _f0_scalar(y: float) -> float:
    """Left inverse branch of the rational map, cancellation-free form."""
    return 2.0 * y / (1.0 + y + np.sqrt(5.0 * y * y - 2.0 * y + 1.0))


@njit(cache=True)
def yn_identity_scan(zp: np.ndarray, zc0: float, zc1: float, n: int,
                     horizon: int):
    """Truncated operator sums for the level-n first-entry identity.

    For each A_0-side chart point zp[i], accumulates the weights of the
    return words g1 o g0^j (j = 0..horizon-n-1) whose preimage lies in the
    window [zc0, zc1] and whose excursion level matches k = n+1+j, i.e. the
    truncation of sum_{k>n} (k-n)-step operator images of the return-time
    sets.  Returns (sums, indicator of the level-n interval, exact telescope
    tails (g0^{horizon-n})'(zp)).  A_1-side points are served by negating
    the point and swapping/negating the window.
    """
    npts = zp.shape[0]
    sums = np.zeros(npts)
    ind = np.zeros(npts)
    tails = np.empty(npts)
    # level-n interval in the chart: [g0^n(zc0), g0^{n-1}(zc0))
    b_prev = zc0
    for _ in range(n - 1):
        b_prev = 0.5 * (b_prev - np.sqrt(b_prev * b_prev + 4.0))
    b_cur = 0.5 * (b_prev - np.sqrt(b_prev * b_prev + 4.0))
    for i in range(npts):
        if b_cur <= zp[i] < b_prev:
            ind[i] = 1.0
    for i in range(npts):
        w = zp[i]
        d = 1.0
        bp = b_prev
        bc = b_cur
        total = 0.0
        comp = 0.0
        for _ in range(horizon - n):
            r = np.sqrt(w * w + 4.0)
            zeta = 0.5 * (w + r)
            if bc <= w < bp and zc0 <= zeta <= zc1:
                t = d * 0.5 * (1.0 + w / r)
                y = t - comp
                tt = total + y
                comp = (tt - total) - y
                total = tt
            d *= 0.5 * (1.0 - w / r)
            w = 0.5 * (w - r)
            bp = bc
            bc = 0.5 * (bc - np.sqrt(bc * bc + 4.0))
        sums[i] = total
        tails[i] = d
    return sums, ind, tails


@njit(cache=True)
def yn_piece_sum(c0: float, c1: float, n: int, horizon: int) -> float:
    """sum of mu(Y inter {return time = k}) for k = n+1..horizon.

    Each k contributes two pieces of the window Y = [c0, c1]: the image of
    the (k-1)-th A_1 level interval under the left inverse branch and of the
    (k-1)-th A_0 level under the right inverse branch.  Pieces are measured
    as chart differences and Kahan-summed.  A_1 boundaries are tracked in
    mirrored coordinates m = 1-x (the rational map commutes with x -> 1-x),
    so the deep walks stay away from the lossy end of the unit interval.
    """
    b0 = c0
    m1 = 1.0 - c1
    for _ in range(n - 1):
        b0 = _f0_scalar(b0)
        m1 = _f0_scalar(m1)
    # chart values of the two piece boundaries at walk index n-1
    xl = _f0_scalar(1.0 - m1)
    cl_prev = 1.0 / (1.0 - xl) - 1.0 / xl
    xr = _f0_scalar(1.0 - b0)
    cr_prev = -(1.0 / (1.0 - xr) - 1.0 / xr)
    total = 0.0
    comp = 0.0
    for _ in range(n, horizon):
        b0 = _f0_scalar(b0)
        m1 = _f0_scalar(m1)
        xl = _f0_scalar(1.0 - m1)
        cl = 1.0 / (1.0 - xl) - 1.0 / xl
        xr = _f0_scalar(1.0 - b0)
        cr = -(1.0 / (1.0 - xr) - 1.0 / xr)
        piece = (cl - cl_prev) + (cr_prev - cr)
        y = piece - comp
        tt = total + y
        comp = (tt - total) - y
        total = tt
        cl_prev = cl
        cr_prev = cr
    return total


@njit(cache=True)
def transfer_mass_step(phi: np.ndarray) -> np.ndarray:
    """One dual-operator step for a mass density on the uniform unit grid.

    phi holds d(mass)/dx at x_j = j/(n-1); the step evaluates
    phi'(x) = phi(f0(x))/T'(f0(x)) + phi(f1(x))/T'(f1(x)) with linear
    interpolation of phi at the preimages (zero outside the grid).  Used to
    track the total mass of operator iterates; the quadrature/interpolation
    error per step is O(total jump variation * grid spacing).
    """
    n = phi.shape[0]
    dx = 1.0 / (n - 1.0)
    out = np.empty(n)
    for j in range(n):
        x = j * dx
        # left-branch preimage and T' there
        x0 = _f0_scalar(x)
        den = 1.0 - x0 - x0 * x0
        tp0 = (1.0 - 2.0 * x0 + 2.0 * x0 * x0) / (den * den)
        pos = x0 / dx
        i0 = int(pos)
        if i0 >= n - 1:
            i0 = n - 2
        fr = pos - i0
        val = (phi[i0] * (1.0 - fr) + phi[i0 + 1] * fr) / tp0
        # right-branch preimage via the mirrored left branch
        if j > 0:
            f0u = _f0_scalar(1.0 - x)
            x1 = 1.0 - f0u
            den1 = 1.0 - f0u - f0u * f0u
            tp1 = (1.0 - 2.0 * f0u + 2.0 * f0u * f0u) / (den1 * den1)
            pos = x1 / dx
            i0 = int(pos)
            if i0 >= n - 1:
                i0 = n - 2
            fr = pos - i0
            val += (phi[i0] * (1.0 - fr) + phi[i0 + 1] * fr) / tp1
        out[j] = val
    return out
