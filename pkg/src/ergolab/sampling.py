"""Initial laws for experiments and reproducible counter-based sampling.

Every law here is atom-free and supported strictly inside (0,1).  A draw is a
pure function of (master seed, sample index): each index gets its own
counter-based generator keyed by the pair, so results are bit-identical under
any batching, ordering, or worker layout.

Laws:

- ``UniformInterval(a, b)``: uniform density on [a, b].
- ``LebesgueDensity(density, support, bound)``: bounded density with respect
  to Lebesgue measure, sampled by rejection from the constant envelope
  ``bound``.
- ``EntranceLaw(approx, m)``: the grid entrance density against the invariant
  measure, i.e. Lebesgue density interp(H)(y) * h(y) on the window, sampled by
  rejection from a piecewise-constant envelope (per-cell grid hull x 1.05; the
  5% headroom covers the sub-cell variation of the smooth factor h, which is
  under 0.4% at the default grid resolution).
- ``Shifted(base, k)``: pushforward of a base law by k map steps.
- ``ReturnLevelLaw``: measure-density constant on each first-return-time level
  of the window, built by ``counterexample_density``.  The level masses
  telescope, so the law's return-time tail is exactly the prescribed
  sequence -- the construction that defeats any large-deviation plateau.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .errors import (DomainError, EmptyLevel, NoClosedFormDensity, NotFound,
                     OutOfRange, RejectionStall)
from .entrance import EntranceDensityApprox
from .invariant import invariant_density, measure_interval, return_tail
from .maps import (MapModel, ReferencePartition, apply, boole_chart,
                   boole_chart_inverse, inverse_branch)

__all__ = [
    "UniformInterval",
    "LebesgueDensity",
    "EntranceLaw",
    "Shifted",
    "ReturnLevelLaw",
    "InitialLaw",
    "sample",
    "sample_batch",
    "validate_law",
    "counterexample_density",
    "halving_c",
]

_MASK64 = (1 << 64) - 1
# A draw that rejects this many consecutive proposals implies an acceptance
# rate well under 1e-4 (the probability of seeing it at rate 1e-4 is e^-10),
# which signals a broken dominating bound rather than bad luck.
_STALL_TRIES = 100_000


# ---------------------------------------------------------------------------
# law types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class UniformInterval:
    """Uniform law on [a, b] with 0 < a < b < 1."""

    a: float
    b: float
    atom_free = True

    def __post_init__(self) -> None:
        if not (0.0 < self.a < self.b < 1.0):
            raise DomainError("UniformInterval needs 0 < a < b < 1")


@dataclass(frozen=True)
class LebesgueDensity:
    """Law with a bounded Lebesgue density on [support[0], support[1]].

    ``bound`` must dominate the density on the support; rejection sampling
    uses it as a constant envelope.  The density must integrate to 1 over the
    support (checked to 1e-9 by ``validate_law``, not at construction).
    """

    density: Callable[[float], float]
    support: tuple
    bound: float
    atom_free = True

    def __post_init__(self) -> None:
        a, b = self.support
        if not (0.0 < a < b < 1.0):
            raise DomainError("support must satisfy 0 < a < b < 1")
        if not self.bound > 0.0:
            raise DomainError("envelope bound must be positive")


@dataclass(frozen=True)
class EntranceLaw:
    """Law on the window with density interp(H)(y) * h(y) / Z wrt Lebesgue.

    H is a grid entrance-density approximation and h the closed-form
    invariant density, so this law is available for the rational family only.
    Z normalizes exactly (per-cell analytic integrals of linear * h), hence
    the law has mass 1 regardless of the approximation's own 1e-6-level
    normalization error.
    """

    approx: EntranceDensityApprox
    m: MapModel
    atom_free = True

    def __post_init__(self) -> None:
        dens = invariant_density(self.m)
        if not dens.has_closed_form:
            raise NoClosedFormDensity(
                "entrance-law sampling needs the closed-form invariant "
                "density; only the rational family has one")
        grid = np.asarray(self.approx.grid, dtype=float)
        vals = np.asarray(self.approx.values, dtype=float)
        if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0.0):
            raise DomainError("approximation grid must be strictly increasing")
        if np.any(vals < 0.0):
            raise DomainError("entrance density values must be nonnegative")
        f = vals * dens.density(grid)
        heights = 1.05 * np.maximum(f[:-1], f[1:])
        cell_mass = heights * np.diff(grid)
        total = float(cell_mass.sum())
        if not total > 0.0:
            raise DomainError("entrance density is identically zero")
        object.__setattr__(self, "_grid", grid)
        object.__setattr__(self, "_hvals", vals)
        object.__setattr__(self, "_heights", heights)
        object.__setattr__(self, "_cum", np.cumsum(cell_mass) / total)
        object.__setattr__(self, "_mass", _linear_h_mass(grid, vals))

    def lebesgue_density(self, x):
        """Normalized density interp(H)(x) * h(x) / Z; zero off the grid hull."""
        arr = np.asarray(x, dtype=float)
        core = np.interp(arr, self._grid, self._hvals, left=0.0, right=0.0)
        inside = (arr >= self._grid[0]) & (arr <= self._grid[-1])
        out = np.where(inside,
                       core * invariant_density(self.m).density(arr), 0.0)
        out = out / self._mass
        return float(out) if arr.ndim == 0 else out


@dataclass(frozen=True)
class Shifted:
    """Pushforward of ``base`` by k steps of the map: x ~ base, return T^k x."""

    base: "InitialLaw"
    k: int
    atom_free = True

    def __post_init__(self) -> None:
        if not (isinstance(self.k, (int, np.integer)) and self.k >= 0):
            raise DomainError("shift count k must be a nonnegative integer")


@dataclass(frozen=True)
class ReturnLevelLaw:
    """Probability law on the window, measure-uniform on return-time levels.

    ``levels[j]`` is a first-return time N_j with positive measure,
    ``masses[j]`` the law's probability of the level set {phi = N_j}, and
    ``tails[j]`` the exact tail P(phi > N_j).  ``pieces[j]`` holds the two
    intervals of the level set (left of the branch point / right of it); on
    each level the law is a constant multiple of the invariant measure.  The
    top level absorbs the tail of the infinite construction, so the tail
    identity holds below it and ``tails[-1] == 0``.  Rational family only
    (sampling inverts the measure chart).  Shared piece endpoints belong to
    either neighbor -- a measure-zero convention.
    """

    alpha: float
    levels: tuple
    masses: tuple
    tails: tuple
    pieces: tuple
    atom_free = True

    def __post_init__(self) -> None:
        z = np.array([[boole_chart(lo), boole_chart(hi)]
                      for lvl in self.pieces for (lo, hi) in lvl],
                     dtype=float).reshape(len(self.pieces), 2, 2)
        widths = z[:, :, 1] - z[:, :, 0]          # mu-measure per side
        level_mu = widths.sum(axis=1)
        masses = np.asarray(self.masses, dtype=float)
        with np.errstate(invalid="ignore", divide="ignore"):
            side_p = np.where(level_mu[:, None] > 0.0,
                              widths / level_mu[:, None], 0.0)
            dens = np.where(level_mu > 0.0, masses / level_mu, 0.0)
        object.__setattr__(self, "_chart", z)
        object.__setattr__(self, "_side_left_p", side_p[:, 0])
        object.__setattr__(self, "_cum", np.cumsum(masses))
        object.__setattr__(self, "_mu_dens", dens)

    def mu_density(self, x):
        """Density wrt the invariant measure: constant on each level piece."""
        arr = np.asarray(x, dtype=float)
        out = np.zeros_like(arr, dtype=float)
        for j, lvl in enumerate(self.pieces):
            for lo, hi in lvl:
                out = np.where((arr >= lo) & (arr <= hi),
                               self._mu_dens[j], out)
        return float(out) if arr.ndim == 0 else out

    def tail_after(self, n: int) -> float:
        """P(phi > n), exact from the telescoped construction."""
        if n < self.levels[0]:
            return 1.0
        j = int(np.searchsorted(np.asarray(self.levels), n, side="right")) - 1
        return float(self.tails[j])


InitialLaw = Union[UniformInterval, LebesgueDensity, EntranceLaw, Shifted,
                   ReturnLevelLaw]


def _linear_h_mass(grid: np.ndarray, vals: np.ndarray) -> float:
    """Exact integral of interp(vals)(y) * h(y) over the grid hull.

    Per cell the integrand is (a*y + b) * h(y); both moments of h have
    antiderivatives: int h = A (the chart), int y*h = ln y + 1/(1-y) + ln(1-y).
    """
    y0, y1 = grid[:-1], grid[1:]
    a = (vals[1:] - vals[:-1]) / (y1 - y0)
    b = vals[:-1] - a * y0

    def moment0(y):
        return boole_chart(y)

    def moment1(y):
        return np.log(y) + 1.0 / (1.0 - y) + np.log(1.0 - y)

    cells = a * (moment1(y1) - moment1(y0)) + b * (moment0(y1) - moment0(y0))
    return float(cells.sum())


# ---------------------------------------------------------------------------
# counter-based streams
# ---------------------------------------------------------------------------

def _check_key_part(value, name: str) -> int:
    if not isinstance(value, (int, np.integer)):
        raise DomainError(f"{name} must be an integer")
    v = int(value)
    if not 0 <= v <= _MASK64:
        raise DomainError(f"{name} must fit in an unsigned 64-bit word")
    return v


class _IndexedStream:
    """One reusable generator, re-keyed per (seed, index).

    Re-keying by state assignment is bit-identical to constructing a fresh
    ``Generator(Philox(key=[seed, index]))`` and several times faster, which
    matters when every sample gets its own stream.
    """

    __slots__ = ("_bitgen", "gen")

    def __init__(self) -> None:
        self._bitgen = np.random.Philox(key=[0, 0])
        self.gen = np.random.Generator(self._bitgen)

    def reset(self, seed: int, index: int) -> np.random.Generator:
        self._bitgen.state = {
            "bit_generator": "Philox",
            "state": {"counter": np.zeros(4, dtype=np.uint64),
                      "key": np.array([seed, index], dtype=np.uint64)},
            "buffer": np.zeros(4, dtype=np.uint64),
            "buffer_pos": 4,
            "has_uint32": 0,
            "uinteger": 0,
        }
        return self.gen


# ---------------------------------------------------------------------------
# drawing
# ---------------------------------------------------------------------------

def _draw(law: InitialLaw, m: MapModel, gen: np.random.Generator) -> float:
    if isinstance(law, UniformInterval):
        return law.a + (law.b - law.a) * gen.random()

    if isinstance(law, LebesgueDensity):
        a, b = law.support
        for _ in range(_STALL_TRIES):
            y = a + (b - a) * gen.random()
            if law.bound * gen.random() <= law.density(y):
                return y
        raise RejectionStall(
            "rejection acceptance rate below 1e-4; the envelope bound "
            "does not usefully dominate the density")

    if isinstance(law, EntranceLaw):
        grid, heights, cum = law._grid, law._heights, law._cum
        hdens = invariant_density(law.m).density
        for _ in range(_STALL_TRIES):
            cell = int(np.searchsorted(cum, gen.random(), side="right"))
            cell = min(cell, len(heights) - 1)
            y = grid[cell] + (grid[cell + 1] - grid[cell]) * gen.random()
            target = np.interp(y, grid, law._hvals) * hdens(y)
            if heights[cell] * gen.random() <= target:
                return float(y)
        raise RejectionStall(
            "rejection acceptance rate below 1e-4; the piecewise envelope "
            "does not usefully dominate the entrance density")

    if isinstance(law, Shifted):
        x = _draw(law.base, m, gen)
        for _ in range(law.k):
            x = apply(m, x)
        return x

    if isinstance(law, ReturnLevelLaw):
        j = int(np.searchsorted(law._cum, gen.random(), side="right"))
        j = min(j, len(law.levels) - 1)
        side = 0 if gen.random() < law._side_left_p[j] else 1
        zlo, zhi = law._chart[j, side]
        return float(boole_chart_inverse(zlo + (zhi - zlo) * gen.random()))

    raise DomainError(f"unknown law type {type(law).__name__}")


def sample(law: InitialLaw, m: MapModel, seed: int, index: int) -> float:
    """One draw from ``law``: a pure function of (seed, index)."""
    seed = _check_key_part(seed, "seed")
    index = _check_key_part(index, "index")
    return _draw(law, m, _IndexedStream().reset(seed, index))


def sample_batch(law: InitialLaw, m: MapModel, seed: int,
                 indices: Sequence[int]) -> np.ndarray:
    """Vector of draws, element i equal to sample(law, m, seed, indices[i]).

    The Shifted law is special-cased: base draws are made per index and the
    k map steps are applied to the whole vector, which is bitwise identical
    to stepping each scalar (the array and scalar map evaluations share one
    code path).
    """
    seed = _check_key_part(seed, "seed")
    idx = [_check_key_part(i, "index") for i in indices]
    stream = _IndexedStream()
    if isinstance(law, Shifted):
        base = np.array([_draw(law.base, m, stream.reset(seed, i))
                         for i in idx], dtype=float)
        for _ in range(law.k):
            base = apply(m, base)
        return base
    return np.array([_draw(law, m, stream.reset(seed, i)) for i in idx],
                    dtype=float)


def validate_law(law: InitialLaw, m: MapModel) -> None:
    """Check the law's mass-1 contract (to 1e-9 by quadrature where needed)."""
    if isinstance(law, (UniformInterval, EntranceLaw)):
        return  # normalized by construction
    if isinstance(law, LebesgueDensity):
        from scipy.integrate import quad
        a, b = law.support
        mass, _ = quad(law.density, a, b, epsabs=1e-12, limit=200)
        if abs(mass - 1.0) > 1e-9:
            raise DomainError(
                f"density mass {mass!r} differs from 1 by more than 1e-9")
        return
    if isinstance(law, Shifted):
        validate_law(law.base, m)  # pushforward preserves mass
        return
    if isinstance(law, ReturnLevelLaw):
        total = math.fsum(law.masses)
        if abs(total - 1.0) > 1e-9:
            raise DomainError(
                f"level masses sum to {total!r}, not 1 within 1e-9")
        return
    raise DomainError(f"unknown law type {type(law).__name__}")


# ---------------------------------------------------------------------------
# counterexample construction (measure-uniform on return-time levels)
# ---------------------------------------------------------------------------

def _return_level_piece(m: MapModel, part: ReferencePartition, n: int,
                        b0: list, b1: list):
    """The two intervals of {phi = n} in the window.

    ``b0[j]``/``b1[j]`` are the j-fold inverse-branch images of the window
    edges (the level-set corners); the left piece runs through the upper ray,
    the right piece through the lower ray.
    """
    c0, c1 = part.c0, part.c1
    if n == 1:
        left = (c0, inverse_branch(m, 0, c1))
        right = (inverse_branch(m, 1, c0), c1)
    else:
        left = (inverse_branch(m, 0, b1[n - 2]),
                inverse_branch(m, 0, b1[n - 1]))
        right = (inverse_branch(m, 1, b0[n - 1]),
                 inverse_branch(m, 1, b0[n - 2]))
    left = (left[0], max(left))
    right = (min(right), right[1])
    return left, right


def _piece_mu(m: MapModel, piece) -> float:
    (llo, lhi), (rlo, rhi) = piece
    out = 0.0
    if lhi > llo:
        out += measure_interval(m, llo, lhi)
    if rhi > rlo:
        out += measure_interval(m, rlo, rhi)
    return out


def counterexample_density(m: MapModel, part: ReferencePartition,
                           c: Callable[[int], float], alpha: float,
                           n_levels: int = 25,
                           levels: Sequence[int] | None = None
                           ) -> ReturnLevelLaw:
    """Law whose return-time tail is exactly c(N_k)^(alpha/2).

    Places mass c(N_{k-1})^(alpha/2) - c(N_k)^(alpha/2) measure-uniformly on
    the k-th positive-measure return-time level {phi = N_k} (N_0 = 0, so the
    masses telescope to exactly 1); the last level absorbs the remaining
    tail.  Requires c nonincreasing along the levels with c(0) = 1.  Against
    such a law the small-value probability P(Z_n <= c(n) n) at n = N_k is at
    least the tail c(N_k)^(alpha/2), which outruns the c(N_k)^alpha rate that
    any plateau would need -- the construction that shows the sharp
    large-deviation asymptotics cannot hold for arbitrary initial laws.
    """
    if not invariant_density(m).has_closed_form:
        raise NoClosedFormDensity(
            "level construction needs exact interval measures; only the "
            "rational family has the closed-form density")
    if not 0.0 < alpha < 1.0:
        raise DomainError("alpha must lie in (0,1)")
    c0_val = float(c(0))
    if c0_val != 1.0:
        raise DomainError(f"c(0) must be exactly 1, got {c0_val!r}")

    # inverse-branch corner ladders, extended on demand
    b0 = [part.c0]
    b1 = [part.c1]

    def extend(j: int) -> None:
        while len(b0) <= j:
            b0.append(inverse_branch(m, 0, b0[-1]))
            b1.append(inverse_branch(m, 1, b1[-1]))

    chosen: list[int] = []
    pieces: list = []
    if levels is not None:
        lvl_list = [int(v) for v in levels]
        if any(v < 1 for v in lvl_list) or any(
                b <= a for a, b in zip(lvl_list, lvl_list[1:])):
            raise DomainError("levels must be strictly increasing and >= 1")
        for n in lvl_list:
            extend(n)
            piece = _return_level_piece(m, part, n, b0, b1)
            if _piece_mu(m, piece) <= 1e-12:
                raise EmptyLevel(f"return-time level {n} has zero measure")
            chosen.append(n)
            pieces.append(piece)
    else:
        if n_levels < 1:
            raise DomainError("n_levels must be >= 1")
        n = 0
        while len(chosen) < n_levels:
            n += 1
            if n > 10_000:
                raise NotFound("could not find enough positive-measure "
                               "return-time levels")
            extend(n)
            piece = _return_level_piece(m, part, n, b0, b1)
            if _piece_mu(m, piece) > 1e-12:
                chosen.append(n)
                pieces.append(piece)

    # cross-check the interval structure against the wandering-tail identity
    # mu(Y & {phi = n}) = mu(Y_{n-1}) - mu(Y_n)
    for n, piece in zip(chosen, pieces):
        got = _piece_mu(m, piece)
        want = return_tail(m, part, n - 1) - return_tail(m, part, n)
        if abs(got - want) > 1e-10 * max(1.0, want):
            raise EmptyLevel(
                f"level {n} interval measure {got!r} disagrees with the "
                f"tail difference {want!r}")

    powers = [1.0] + [float(c(n)) ** (0.5 * alpha) for n in chosen]
    if any(b > a for a, b in zip(powers, powers[1:])) or powers[-1] <= 0.0:
        raise DomainError("c must be nonincreasing and positive on the levels")
    masses = [a - b for a, b in zip(powers[:-2], powers[1:-1])]
    masses.append(powers[-2])          # top level absorbs the tail
    tails = powers[1:-1] + [0.0]       # after level N_k: c(N_k)^(alpha/2)

    return ReturnLevelLaw(alpha=alpha, levels=tuple(chosen),
                          masses=tuple(masses), tails=tuple(tails),
                          pieces=tuple(pieces))


def halving_c(n: int) -> float:
    """Threshold sequence c(n) = 2^(1-n) for n >= 1 (and c(0) = 1).

    Halving at every step decays faster than any power of n while keeping
    c(n)*n just inside (0,1) from n = 2 on, which makes the rescaled
    small-value ratio under the level-set law grow like c(N_k)^(-alpha/2):
    the standard choice for exhibiting the unbounded-ratio construction.
    """
    if n < 0:
        raise DomainError("the threshold sequence is defined for n >= 0")
    return 1.0 if n == 0 else 2.0 ** (1 - n)
