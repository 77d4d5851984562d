"""Monte Carlo experiments and exact generating-function identity checks.

Two kinds of evidence live here.  The Monte Carlo drivers start batches of
orbits from a configurable initial law and confront the occupation
statistics with the limit laws: full empirical CDFs against the
Mittag-Leffler / waiting-time / occupation-time distributions, and
small-threshold ("large deviation") event probabilities against the
predicted decay rates, rescaled so that a correct rate produces a flat
plateau at sin(pi*alpha)/(pi*alpha).

Independently of any sampling, the double-Laplace verifiers evaluate exact
integral identities tying the joint transform of each statistic to the
return-time transform Q^Y.  The left side is computed by quadrature in
chart coordinates (where the invariant measure is Lebesgue) over the
explicit first-entry intervals, with the inner series evaluated by direct
orbit iteration; every truncation carries a certified geometric tail
bound, and the quadrature error is estimated by mesh refinement.  The
right side comes from the independently computed level-measure transforms
in :mod:`ergolab.invariant`, so the two sides share no code path.
"""

from __future__ import annotations

import json
import math
import multiprocessing
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import _csvio
from .errors import (
    BudgetExceeded,
    DomainError,
    InsufficientEvents,
    NumericEscape,
    OutOfRange,
)
from .invariant import (
    RegularVariationFit,
    dk_normalizer,
    fit_regular_variation,
    invariant_density,
    measure_interval,
    q_laplace,
    q_laplace_side,
    thaler_u_inverse,
    wandering_table,
    y_level_set,
)
from .maps import MapModel, ReferencePartition, boole_chart, iterate_inverse_branch
from .orbitstats import first_return_times, simulate_orbits
from .sampling import InitialLaw, LebesgueDensity, sample_batch
from .specfun import (
    dk_limit_cdf_boole,
    dynkin_lamperti_cdf,
    lamperti_cdf,
    ld_rate_constant,
    mittag_leffler_cdf,
)

__all__ = [
    "STATISTICS",
    "ExperimentSpec",
    "EstimateCI",
    "LdReport",
    "DoubleLaplaceSpec",
    "DoubleLaplaceResult",
    "CdfResult",
    "ThalerAsymptoticsReport",
    "wilson_interval",
    "y_restricted_law",
    "ld_experiment",
    "cdf_experiment",
    "cdf_experiment_batch",
    "double_laplace_check_Z",
    "double_laplace_check_SY",
    "double_laplace_check_SA",
    "double_laplace_rhs_Z",
    "thaler_asymptotics_check",
]

#: Statistics an experiment can target: last visit time to the window (Z),
#: window occupation time (SY), per-ray occupation times (SA0/SA1), and a
#: weighted combination of the two ray occupations.
STATISTICS = ("Z", "SY", "SA0", "SA1", "weighted")

_WILSON_Z95 = 1.959963984540054  # two-sided 95% normal quantile


# ---------------------------------------------------------------------------
# Specs and result containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentSpec:
    """A reproducible Monte Carlo experiment.

    The event thresholds follow the statistic: ``Z``, ``SA0``, ``SA1`` and
    ``weighted`` use {stat <= c(n) * n} with c(n) = n**(-theta) or an
    explicit ``c_table``; ``SY`` uses {S_n <= ctilde(n) * a(n)} with
    ctilde(n) = a(n)**(-theta_tilde) and a(n) the return-sequence
    normalizer.  ``weights`` applies to ("SA0", "SA1") for the weighted
    statistic; exactly one entry may be positive for a sharp theory rate
    (the other ray must stay free to absorb the time).
    """

    m: MapModel
    part: ReferencePartition
    law: InitialLaw
    statistic: str
    n_grid: Tuple[int, ...]
    n_samples: int
    seed: int
    theta: Optional[float] = None
    c_table: Optional[Tuple[float, ...]] = None
    theta_tilde: Optional[float] = None
    weights: Tuple[float, float] = (1.0, 0.0)

    def __post_init__(self) -> None:
        if self.statistic not in STATISTICS:
            raise DomainError(
                f"unknown statistic {self.statistic!r}; choose from {STATISTICS}")
        grid = tuple(int(n) for n in self.n_grid)
        if len(grid) == 0 or any(n < 1 for n in grid):
            raise DomainError("n_grid must be non-empty positive integers")
        if any(b <= a for a, b in zip(grid, grid[1:])):
            raise DomainError("n_grid must be strictly increasing")
        object.__setattr__(self, "n_grid", grid)
        if self.n_samples < 1:
            raise DomainError("n_samples must be >= 1")
        if not (isinstance(self.seed, int) and 0 <= self.seed < 2 ** 64):
            raise DomainError("seed must be an integer in [0, 2**64)")
        if self.statistic == "SY":
            if self.theta_tilde is None:
                raise DomainError("statistic 'SY' needs theta_tilde")
            if not 0.0 < self.theta_tilde < 1.0:
                raise OutOfRange(
                    f"theta_tilde must lie in (0,1), got {self.theta_tilde}")
            # threshold ctilde(n)*a(n) = a(n)**(1-theta_tilde) must grow
            a_vals = [dk_normalizer(self.m, self.part, float(n)) for n in grid]
            thr = [a ** (1.0 - self.theta_tilde) for a in a_vals]
            if any(t2 <= t1 for t1, t2 in zip(thr, thr[1:])):
                raise DomainError(
                    "ctilde(n) * a(n) must increase along the n-grid")
        else:
            if (self.theta is None) == (self.c_table is None):
                raise DomainError(
                    "give exactly one of theta or c_table for the threshold")
            if self.theta is not None and not 0.0 < self.theta < 1.0:
                raise OutOfRange(f"theta must lie in (0,1), got {self.theta}")
            if self.c_table is not None:
                table = tuple(float(c) for c in self.c_table)
                if len(table) != len(grid):
                    raise DomainError("c_table must match the n-grid length")
                if any(not 0.0 < c <= 1.0 for c in table):
                    raise DomainError("c_table values must lie in (0, 1]")
                object.__setattr__(self, "c_table", table)
        if self.statistic == "weighted":
            w = tuple(float(v) for v in self.weights)
            if len(w) != 2 or any(v < 0.0 for v in w) or max(w) == 0.0:
                raise DomainError(
                    "weights must be two nonnegative floats, not both zero")
            object.__setattr__(self, "weights", w)

    def c_at(self, j: int) -> float:
        """Threshold sequence value c(n) at grid position j."""
        if self.c_table is not None:
            return self.c_table[j]
        return float(self.n_grid[j]) ** (-self.theta)

    def config_dict(self) -> dict:
        """Flat echo of this experiment spec for metadata lines and hashing."""
        law = type(self.law).__name__
        return {
            "family": self.m.family, "p": self.m.p, "K0": self.m.K0,
            "c0": self.part.c0, "c1": self.part.c1, "law": law,
            "statistic": self.statistic, "n_grid": list(self.n_grid),
            "n_samples": self.n_samples, "seed": self.seed,
            "theta": self.theta, "c_table": self.c_table,
            "theta_tilde": self.theta_tilde, "weights": list(self.weights),
        }


@dataclass(frozen=True)
class EstimateCI:
    """One event-probability estimate with its Wilson 95% interval.

    ``ratio`` is the estimate divided by the theory rate *without* the
    universal constant sin(pi a)/(pi a), so a matching simulation plateaus
    at that constant; ``theory`` is the full predicted probability.  Both
    are NaN when no sharp prediction applies to the configured law.
    """

    n: int
    count: int
    n_samples: int
    estimate: float
    ci_lo: float
    ci_hi: float
    theory: float
    ratio: float
    threshold: float

    def __post_init__(self) -> None:
        if not 0 <= self.count <= self.n_samples:
            raise DomainError("count must lie in [0, n_samples]")
        if not self.ci_lo <= self.estimate <= self.ci_hi:
            raise DomainError("confidence interval must contain the estimate")


@dataclass(frozen=True)
class LdReport:
    """Per-n estimates plus the plateau statistics over the top half grid."""

    spec: ExperimentSpec
    rows: Tuple[EstimateCI, ...]
    alpha: float
    rate_constant: float
    plateau_min: float
    plateau_max: float
    plateau_spread: float

    def write_csv(self, path: str, meta: Optional[Mapping] = None) -> None:
        cfg = self.spec.config_dict()
        base = {"config_hash": _csvio.config_hash(cfg), "seed": self.spec.seed,
                "statistic": self.spec.statistic}
        if meta:
            base.update(meta)
        _csvio.write_csv(path, {
            "n": [r.n for r in self.rows],
            "count": [r.count for r in self.rows],
            "M": [r.n_samples for r in self.rows],
            "estimate": [r.estimate for r in self.rows],
            "ci_lo": [r.ci_lo for r in self.rows],
            "ci_hi": [r.ci_hi for r in self.rows],
            "theory": [r.theory for r in self.rows],
            "ratio": [r.ratio for r in self.rows],
        }, meta=base)

    def summary_dict(self, passes: Optional[Mapping[str, bool]] = None) -> dict:
        cfg = self.spec.config_dict()
        out = {
            "spec": cfg,
            "config_hash": _csvio.config_hash(cfg),
            "seed": self.spec.seed,
            "alpha": self.alpha,
            "rate_constant": self.rate_constant,
            "plateau": {"min": self.plateau_min, "max": self.plateau_max,
                        "spread": self.plateau_spread},
            "rows": [{"n": r.n, "count": r.count, "estimate": r.estimate,
                      "ci": [r.ci_lo, r.ci_hi], "theory": r.theory,
                      "ratio": r.ratio, "threshold": r.threshold}
                     for r in self.rows],
        }
        if passes is not None:
            out["checks"] = dict(passes)
            out["pass"] = all(passes.values())
        return out

    def write_json(self, path: str,
                   passes: Optional[Mapping[str, bool]] = None) -> None:
        import os
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, "w") as fh:
            json.dump(self.summary_dict(passes), fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass(frozen=True)
class CdfResult:
    """Empirical vs theory CDF of a normalized statistic at one horizon."""

    statistic: str
    normalization: str
    n: int
    n_samples: int
    t: np.ndarray
    empirical: np.ndarray
    theory: np.ndarray
    ks: float

    def write_csv(self, path: str, meta: Optional[Mapping] = None) -> None:
        base = {"statistic": self.statistic, "normalization": self.normalization,
                "n": self.n, "M": self.n_samples, "ks": self.ks}
        if meta:
            base.update(meta)
        _csvio.write_csv(path, {
            "t": self.t, "empirical": self.empirical, "theory": self.theory,
        }, meta=base)


# ---------------------------------------------------------------------------
# Initial-law helpers and Wilson interval
# ---------------------------------------------------------------------------


class _WindowDensity:
    """Normalized invariant density on the window; picklable for workers."""

    def __init__(self, m: MapModel, mass: float):
        self.dens = invariant_density(m)
        self.mass = mass

    def __call__(self, x: float) -> float:
        return self.dens.density(x) / self.mass


def y_restricted_law(m: MapModel, part: ReferencePartition) -> LebesgueDensity:
    """The invariant measure restricted to the window and normalized.

    This is the initial law under which the occupation-time rate statement
    is exact; its Lebesgue density is h(x)/mu(Y) on (c0, c1).  The density
    is convex on the window, so its maximum sits at an endpoint.
    """
    dens = invariant_density(m)
    mass = measure_interval(m, part.c0, part.c1)
    h = dens.density
    bound = max(h(part.c0), h(part.c1)) / mass
    return LebesgueDensity(density=_WindowDensity(m, mass),
                           support=(part.c0, part.c1), bound=bound)


def wilson_interval(count: int, n_samples: int,
                    z: float = _WILSON_Z95) -> Tuple[float, float]:
    """Wilson score interval; always contains count/n_samples."""
    if not 0 <= count <= n_samples:
        raise DomainError("count must lie in [0, n_samples]")
    p = count / n_samples
    denom = 1.0 + z * z / n_samples
    center = (p + z * z / (2.0 * n_samples)) / denom
    half = (z / denom) * math.sqrt(
        p * (1.0 - p) / n_samples + z * z / (4.0 * n_samples * n_samples))
    # the exact interval always contains p; the min/max absorb roundoff
    return min(max(0.0, center - half), p), max(min(1.0, center + half), p)


# ---------------------------------------------------------------------------
# Monte Carlo core
# ---------------------------------------------------------------------------


def _orbit_chunk(args):
    """One contiguous index range of the orbit batch (worker task body)."""
    m, part, law, x0, n_grid, seed, lo, hi, chart = args
    if x0 is None:
        starts = sample_batch(law, m, seed, range(lo, hi))
    else:
        starts = x0[lo:hi]
    sy, zy, sa0, sa1, _, escaped = simulate_orbits(
        m, part, starts, n_grid, chart=chart)
    return sy, zy, sa0, sa1, escaped


def orbit_statistics(m: MapModel, part: ReferencePartition,
                     law: Optional[InitialLaw], n_grid: Sequence[int],
                     n_samples: int, seed: int, *,
                     chart: Optional[str] = None, workers: int = 1,
                     x0: Optional[np.ndarray] = None,
                     ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(S^Y, Z, S^A0, S^A1) arrays of shape (n_samples, len(n_grid)).

    Draws are keyed by (seed, sample index) and orbits are simulated one
    start at a time, so splitting the index range across worker processes
    cannot change any output value: results are bitwise identical for every
    ``workers`` count.  ``x0`` overrides the law with explicit start points.
    """
    if workers < 1:
        raise DomainError("workers must be >= 1")
    if x0 is not None:
        x0 = np.atleast_1d(np.asarray(x0, dtype=float))
        n_samples = x0.size
    grid = [int(n) for n in n_grid]
    bounds = np.linspace(0, n_samples, min(workers, n_samples) + 1).astype(int)
    tasks = [(m, part, law, x0, grid, seed, int(lo), int(hi), chart)
             for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
    if len(tasks) == 1:
        parts = [_orbit_chunk(tasks[0])]
    else:
        method = ("fork" if "fork" in multiprocessing.get_all_start_methods()
                  else "spawn")
        with multiprocessing.get_context(method).Pool(len(tasks)) as pool:
            parts = pool.map(_orbit_chunk, tasks)
    sy, zy, sa0, sa1, escaped = (np.concatenate([p[k] for p in parts])
                                 for k in range(5))
    if np.any(escaped):
        raise NumericEscape(
            f"{int(np.sum(escaped))} of {n_samples} orbits left the domain "
            "or stalled; the statistics would be biased")
    return sy, zy, sa0, sa1


def _select_statistic(statistic: str, weights: Tuple[float, float],
                      sy: np.ndarray, zy: np.ndarray,
                      sa0: np.ndarray, sa1: np.ndarray) -> np.ndarray:
    if statistic == "Z":
        return zy
    if statistic == "SY":
        return sy
    if statistic == "SA0":
        return sa0
    if statistic == "SA1":
        return sa1
    w0, w1 = weights
    return w0 * sa0.astype(np.float64) + w1 * sa1.astype(np.float64)


class _RateModel:
    """Theory rates and thresholds for one spec, shared across grid points.

    The slowly-varying correction ell(n)/ell(c(n)n) is evaluated from the
    exact wandering-rate table; the ray weights beta_i come from the
    per-ray wandering sums at the top of the table.  For the window
    occupation time the threshold uses the return-sequence normalizer and
    no slowly-varying correction is needed (the prediction is stated
    through a(n) directly).
    """

    def __init__(self, spec: ExperimentSpec):
        self.spec = spec
        self.alpha = spec.m.alpha
        self.sinc = ld_rate_constant(self.alpha)
        self._a_vals: Optional[list] = None
        self._fit: Optional[RegularVariationFit] = None
        self._beta: Optional[Tuple[float, float]] = None
        self._mu_y = measure_interval(spec.m, spec.part.c0, spec.part.c1)
        if spec.statistic == "SY":
            self._a_vals = [dk_normalizer(spec.m, spec.part, float(n))
                            for n in spec.n_grid]
        else:
            n_max = max(spec.n_grid)
            table = wandering_table(spec.m, spec.part, max(n_max, 64))
            self._fit = fit_regular_variation(
                table, max(10, table.N // 1000), table.N)
            tot = table.w_A0[table.N] + table.w_A1[table.N]
            self._beta = (table.w_A0[table.N] / tot,
                          table.w_A1[table.N] / tot)

    @property
    def beta(self) -> Optional[Tuple[float, float]]:
        return self._beta

    def threshold(self, j: int) -> float:
        spec = self.spec
        if spec.statistic == "SY":
            return self._a_vals[j] ** (1.0 - spec.theta_tilde)
        return spec.c_at(j) * spec.n_grid[j]

    def ell_correction(self, j: int) -> float:
        n = self.spec.n_grid[j]
        cn = self.spec.c_at(j) * n
        ell = self._fit.ell_at([float(n), max(cn, 1.0)])
        return float(ell[0] / ell[1])

    def rate_base(self, j: int) -> float:
        """Theory rate divided by the universal constant sin(pi a)/(pi a)."""
        spec = self.spec
        if spec.statistic == "SY":
            ctilde = self._a_vals[j] ** (-spec.theta_tilde)
            return ctilde / self._mu_y
        base = spec.c_at(j) ** self.alpha * self.ell_correction(j)
        if spec.statistic == "Z":
            return base
        if spec.statistic in ("SA0", "SA1"):
            i = 0 if spec.statistic == "SA0" else 1
            return base * self._beta[1 - i] / self._beta[i]
        w0, w1 = spec.weights
        if min(w0, w1) > 0.0:
            return math.nan  # no free ray: no sharp prediction
        i = 0 if w0 > 0.0 else 1
        lam = spec.weights[i]
        return base * self._beta[1 - i] / (self._beta[i] * lam ** self.alpha)

    def theory(self, j: int) -> float:
        return self.sinc * self.rate_base(j)


def ld_experiment(spec: ExperimentSpec, *, chart: Optional[str] = None,
                  x0: Optional[np.ndarray] = None, workers: int = 1) -> LdReport:
    """Small-threshold event probabilities across the n-grid.

    Events are {Z_n <= c(n) n}, {S_n^Y <= ctilde(n) a(n)} or
    {sum_i w_i S_n^{A_i} <= c(n) n}, counted exactly on the integer
    statistics against the real thresholds.  Raises InsufficientEvents
    when the expected event count at some grid point falls below 25
    (below that a binomial interval is noise, not evidence).
    """
    sy, zy, sa0, sa1 = orbit_statistics(
        spec.m, spec.part, spec.law, spec.n_grid, spec.n_samples, spec.seed,
        chart=chart, workers=workers, x0=x0)
    stats = _select_statistic(spec.statistic, spec.weights, sy, zy, sa0, sa1)
    model = _RateModel(spec)
    rows = []
    for j, n in enumerate(spec.n_grid):
        thr = model.threshold(j)
        count = int(np.sum(stats[:, j] <= thr))
        theory = model.theory(j)
        expected = theory * spec.n_samples if math.isfinite(theory) else count
        if expected < 25.0:
            raise InsufficientEvents(
                f"expected about {expected:.1f} events at n={n} "
                f"(threshold {thr:.6g}); increase n_samples or lower the "
                "threshold exponent")
        lo, hi = wilson_interval(count, spec.n_samples)
        est = count / spec.n_samples
        base = model.rate_base(j)
        ratio = est / base if math.isfinite(base) and base > 0.0 else math.nan
        rows.append(EstimateCI(n=n, count=count, n_samples=spec.n_samples,
                               estimate=est, ci_lo=lo, ci_hi=hi,
                               theory=theory, ratio=ratio, threshold=thr))
    top = [r.ratio for r in rows[(len(rows) - 1) // 2:]]
    finite = [r for r in top if math.isfinite(r)]
    if finite and min(finite) > 0.0:
        p_min, p_max = min(finite), max(finite)
        spread = p_max / p_min - 1.0
    else:
        p_min = p_max = spread = math.nan
    return LdReport(spec=spec, rows=tuple(rows), alpha=model.alpha,
                    rate_constant=model.sinc, plateau_min=p_min,
                    plateau_max=p_max, plateau_spread=spread)


# ---------------------------------------------------------------------------
# Empirical CDFs against the limit laws
# ---------------------------------------------------------------------------


def _exact_ks(sample_sorted: np.ndarray, theory_cdf) -> float:
    """Exact sup-distance between the empirical CDF and a continuous CDF."""
    M = sample_sorted.size
    th = np.asarray(theory_cdf(sample_sorted), dtype=float)
    i = np.arange(1, M + 1, dtype=float)
    return float(max(np.max(i / M - th), np.max(th - (i - 1.0) / M)))


def cdf_experiment(spec: ExperimentSpec, *, t_grid: Optional[np.ndarray] = None,
                   normalization: str = "auto", chart: Optional[str] = None,
                   x0: Optional[np.ndarray] = None) -> CdfResult:
    """Empirical CDF of the normalized statistic at the largest horizon.

    Normalizations: ``Z`` and the ray occupations divide by n and compare
    with the waiting-time / occupation-time arcsine laws; ``SY`` either
    uses the closed-form rational-map pair (pi S / (2 sqrt n) against its
    Gaussian-tail limit, ``normalization="boole-dk"``) or the general
    Mittag-Leffler pair S/a(n) (``normalization="ml"``).  ``x0`` overrides
    the initial law with explicit start points (degenerate experiments).
    """
    res = cdf_experiment_batch(
        spec.m, spec.part, spec.law, (spec.statistic,), spec.n_grid[-1],
        spec.n_samples, spec.seed, t_grid=t_grid, normalization=normalization,
        chart=chart, x0=x0, weights=spec.weights)
    return res[spec.statistic]


def cdf_experiment_batch(m: MapModel, part: ReferencePartition,
                         law: Optional[InitialLaw], statistics: Sequence[str],
                         n: int, n_samples: int, seed: int, *,
                         t_grid: Optional[np.ndarray] = None,
                         normalization: str = "auto",
                         chart: Optional[str] = None,
                         x0: Optional[np.ndarray] = None,
                         weights: Tuple[float, float] = (1.0, 0.0),
                         workers: int = 1) -> dict:
    """Several statistics' CDFs from one shared orbit batch.

    The orbit sweep is by far the dominant cost, so the acceptance-level
    comparisons (occupation, waiting and ray statistics at the same n)
    share a single batch.  Results are keyed by statistic name.
    """
    for s in statistics:
        if s not in STATISTICS:
            raise DomainError(f"unknown statistic {s!r}")
    sy, zy, sa0, sa1 = orbit_statistics(
        m, part, law, [int(n)], n_samples, seed, chart=chart,
        workers=workers, x0=x0)
    if x0 is not None:
        n_samples = sy.shape[0]
    alpha = m.alpha
    mu_y = None
    out = {}
    for stat in statistics:
        if stat == "Z":
            values = zy[:, 0] / float(n)
            comp = lambda t: dynkin_lamperti_cdf(alpha, t)
            grid = np.linspace(0.0, 1.0, 201) if t_grid is None else t_grid
            norm = "Z/n"
        elif stat == "SY":
            mode = normalization
            if mode == "auto":
                mode = "boole-dk" if m.family == "boole" else "ml"
            if mode == "boole-dk":
                if m.family != "boole":
                    raise DomainError(
                        "the closed-form occupation limit is rational-map "
                        "only; use normalization='ml'")
                values = math.pi * sy[:, 0] / (2.0 * math.sqrt(n))
                comp = dk_limit_cdf_boole
                grid = np.linspace(0.0, 6.0, 241) if t_grid is None else t_grid
                norm = "pi*S/(2*sqrt(n))"
            else:
                a_n = dk_normalizer(m, part, float(n))
                if mu_y is None:
                    mu_y = measure_interval(m, part.c0, part.c1)
                scale = math.gamma(1.0 + alpha) * mu_y
                values = sy[:, 0] / a_n
                comp = lambda t: mittag_leffler_cdf(alpha, np.asarray(t) / scale)
                grid = (np.linspace(0.0, 5.0 * scale, 241)
                        if t_grid is None else t_grid)
                norm = "S/a(n)"
        elif stat in ("SA0", "SA1"):
            arr = sa0 if stat == "SA0" else sa1
            values = arr[:, 0] / float(n)
            b = _occupation_b(m, part, 0 if stat == "SA0" else 1)
            comp = lambda t, _b=b: lamperti_cdf(alpha, _b, t)
            grid = np.linspace(0.0, 1.0, 201) if t_grid is None else t_grid
            norm = f"{stat}/n"
        else:
            raise DomainError(
                "weighted statistics have no single limiting CDF here")
        values = np.asarray(values, dtype=float)
        sample = np.sort(values)
        ks = _exact_ks(sample, comp)
        emp = np.searchsorted(sample, np.asarray(grid, dtype=float),
                              side="right") / values.size
        out[stat] = CdfResult(
            statistic=stat, normalization=norm, n=int(n),
            n_samples=int(values.size), t=np.asarray(grid, dtype=float),
            empirical=emp, theory=np.asarray(comp(grid), dtype=float),
            ks=ks)
    return out


def _occupation_b(m: MapModel, part: ReferencePartition, side: int) -> float:
    """Occupation-law skew parameter b = beta_other/beta_side for one ray."""
    table = wandering_table(m, part, 4096)
    tot = table.w_A0[table.N] + table.w_A1[table.N]
    beta = (table.w_A0[table.N] / tot, table.w_A1[table.N] / tot)
    return beta[1 - side] / beta[side]


# ---------------------------------------------------------------------------
# Double-Laplace identity verifiers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DoubleLaplaceSpec:
    """Evaluation points and truncation controls for the identity checks.

    ``s1``/``s2`` parametrize the waiting-time and window-occupation
    checks; the ray-occupation check uses ``s1`` as the time variable and
    ``s_sides`` as the per-ray tilts.  ``horizon`` truncates the inner
    orbit series (certified tail e^{-(N+1)s1}/(1-e^{-s1}), credited at its
    midpoint), ``level_cap`` truncates the first-entry level sum (certified
    geometric tail), and ``nodes`` sets the chart midpoint-rule resolution,
    with the quadrature error estimated from a half-resolution pass.
    """

    m: MapModel
    part: ReferencePartition
    s1: float
    s2: float = 0.0
    s_sides: Tuple[float, float] = (0.0, 0.0)
    nodes: int = 2048
    horizon: int = 96
    level_cap: int = 96
    tol: float = 1e-3

    def __post_init__(self) -> None:
        if self.m.family != "boole":
            raise DomainError("identity checks need the closed-form density")
        if not self.s1 > 0.0:
            raise DomainError("need s1 > 0")
        if self.s2 < 0.0:
            raise DomainError("need s2 >= 0")
        if len(self.s_sides) != 2 or any(s < 0.0 for s in self.s_sides):
            raise DomainError("s_sides must be two nonnegative reals")
        if self.nodes < 32:
            raise DomainError("need at least 32 quadrature nodes")
        if self.horizon < 8 or self.level_cap < 8:
            raise DomainError("horizons below 8 cannot certify anything")
        if not 0.0 < self.tol < 1.0:
            raise DomainError("tol must lie in (0,1)")


@dataclass(frozen=True)
class DoubleLaplaceResult:
    """Both sides of an identity plus the certified error budget."""

    name: str
    lhs: float
    rhs: float
    rel_error: float
    budget: float          # certified tails + quadrature estimate, relative
    tail_series: float     # orbit-series tail contribution (absolute)
    tail_levels: float     # level-sum tail bound (absolute)
    quad_estimate: float   # |full - half resolution| (absolute)
    parts: dict = field(default_factory=dict)


class _LevelQuadrature:
    """Chart midpoint nodes on every first-entry interval, pushed into Y.

    Level m >= 1 contributes the two intervals (per ray) returned by the
    exact level-set construction; level 0 is the window itself.  Nodes are
    stored concatenated in increasing level order so that advancing the
    whole suffix by one chart step per sweep pushes every node forward by
    exactly its level count.  After the push, every node sits in the window
    (up to roundoff) and a single vectorized series evaluation serves all
    levels at once.
    """

    def __init__(self, m: MapModel, part: ReferencePartition,
                 level_cap: int, nodes: int):
        zlo = float(boole_chart(part.c0))
        zhi = float(boole_chart(part.c1))
        self.zlo, self.zhi = zlo, zhi
        self.mu_y = zhi - zlo
        self.level_cap = level_cap
        self.nodes = nodes
        pieces = [(0, -1, zlo, zhi)]
        mu0 = np.zeros(level_cap + 1)
        mu1 = np.zeros(level_cap + 1)
        for lev in range(1, level_cap + 1):
            (lo0, hi0), (lo1, hi1) = y_level_set(m, part, lev)
            a0, b0 = float(boole_chart(lo0)), float(boole_chart(hi0))
            a1, b1 = float(boole_chart(lo1)), float(boole_chart(hi1))
            mu0[lev], mu1[lev] = b0 - a0, b1 - a1
            pieces.append((lev, 0, a0, b0))
            pieces.append((lev, 1, a1, b1))
        self.mu_side = (mu0, mu1)
        self.pieces = pieces
        starts, z_parts, w_parts = [], [], []
        offset = 0
        for lev, _side, a, b in pieces:
            width = (b - a) / nodes
            z_parts.append(a + width * (np.arange(nodes) + 0.5))
            w_parts.append(width)
            starts.append(offset)
            offset += nodes
        self.starts = starts
        self.weights = w_parts
        z = np.concatenate(z_parts)
        # pieces are level-ascending: nodes needing >= t more steps are a
        # suffix, so each sweep advances one suffix by one chart step
        for t in range(1, level_cap + 1):
            cut = starts[1 + 2 * (t - 1)]
            seg = z[cut:]
            np.subtract(seg, 1.0 / seg, out=seg)
        if not np.all(np.isfinite(z)):
            raise NumericEscape("a quadrature node hit the branch point")
        self.z = z

    def piece_integrals(self, values: np.ndarray):
        """(level, side, integral) for each piece; midpoint rule in chart."""
        out = []
        K = self.nodes
        for idx, (lev, side, _a, _b) in enumerate(self.pieces):
            block = values[self.starts[idx]:self.starts[idx] + K]
            out.append((lev, side, self.weights[idx] * float(np.sum(block))))
        return out


def _series_Z(z: np.ndarray, zlo: float, zhi: float, s1: float, s2: float,
              N: int) -> Tuple[np.ndarray, float]:
    """v(y) = sum_n e^{-n s1} e^{-s2 Z_n(y)} with midpoint-credited tail."""
    v = np.ones_like(z)
    w = np.ones_like(z)  # e^{-s2 * (last visit time)}
    cur = z.copy()
    for n in range(1, N + 1):
        np.subtract(cur, 1.0 / cur, out=cur)
        in_y = (cur >= zlo) & (cur <= zhi)
        w = np.where(in_y, math.exp(-s2 * n), w)
        v += math.exp(-n * s1) * w
    tail = math.exp(-(N + 1) * s1) / -math.expm1(-s1)
    return v + 0.5 * tail, 0.5 * tail


def _series_SY(z: np.ndarray, zlo: float, zhi: float, s1: float, s2: float,
               N: int) -> Tuple[np.ndarray, float]:
    """v(y) = sum_n e^{-n s1} e^{-s2 S_n^Y(y)}, occupation of the window."""
    v = np.ones_like(z)
    w = np.ones_like(z)
    decay = math.exp(-s2)
    cur = z.copy()
    for n in range(1, N + 1):
        np.subtract(cur, 1.0 / cur, out=cur)
        in_y = (cur >= zlo) & (cur <= zhi)
        w = np.where(in_y, w * decay, w)
        v += math.exp(-n * s1) * w
    tail = math.exp(-(N + 1) * s1) / -math.expm1(-s1)
    return v + 0.5 * tail, 0.5 * tail


def _series_SA(z: np.ndarray, zlo: float, zhi: float, s: float,
               s_sides: Tuple[float, float], N: int) -> Tuple[np.ndarray, float]:
    """v(y) = sum_n e^{-n s} exp(-s_0 S_n^{A_0} - s_1 S_n^{A_1})."""
    v = np.ones_like(z)
    w = np.ones_like(z)
    d0, d1 = math.exp(-s_sides[0]), math.exp(-s_sides[1])
    cur = z.copy()
    for n in range(1, N + 1):
        np.subtract(cur, 1.0 / cur, out=cur)
        w = w * np.where(cur < zlo, d0, np.where(cur > zhi, d1, 1.0))
        v += math.exp(-n * s) * w
    tail = math.exp(-(N + 1) * s) / -math.expm1(-s)
    return v + 0.5 * tail, 0.5 * tail


def _lhs_weighted_sum(quad: _LevelQuadrature, series_fn, weight_of) -> Tuple[
        float, float, dict]:
    """Assemble sum_m weight(m, side) * integral_{Y_m cap A_side} v(T^m x) dmu.

    Returns (weighted sum, series-tail contribution bound, per-kind sums).
    ``weight_of(level, side)`` returning 0 drops a piece.
    """
    values, half = series_fn(quad.z)
    tail_contrib = 0.0
    total = 0.0
    kinds: dict = {}
    for lev, side, integral in quad.piece_integrals(values):
        wgt = weight_of(lev, side)
        if wgt == 0.0:
            continue
        total += wgt * integral
        mu_piece = quad.mu_y if lev == 0 else quad.mu_side[side][lev]
        tail_contrib += abs(wgt) * mu_piece * half
        key = "Y" if lev == 0 else f"A{side}"
        kinds[key] = kinds.get(key, 0.0) + wgt * integral
    return total, tail_contrib, kinds


def _check_result(name: str, spec: DoubleLaplaceSpec, lhs: float, rhs: float,
                  tail_series: float, tail_levels: float, quad_est: float,
                  parts: dict) -> DoubleLaplaceResult:
    # the midpoint-rule error on these integrands shrinks roughly linearly
    # in the mesh (the series has dense small jumps), so the half-mesh
    # difference estimates the error at its own order: triple it for safety
    quad_est = 3.0 * quad_est
    budget = (tail_series + tail_levels + quad_est) / abs(rhs)
    if budget > spec.tol:
        raise BudgetExceeded(
            f"{name}: certified truncation budget {budget:.3e} exceeds the "
            f"target {spec.tol:.1e}; raise horizon/level_cap/nodes")
    rel = lhs / rhs - 1.0
    return DoubleLaplaceResult(
        name=name, lhs=lhs, rhs=rhs, rel_error=rel, budget=budget,
        tail_series=tail_series, tail_levels=tail_levels,
        quad_estimate=quad_est, parts=parts)


def double_laplace_rhs_Z(m: MapModel, part: ReferencePartition, s1: float,
                         s2: float) -> float:
    """Q^Y(s1) / (1 - e^{-(s1+s2)}), the closed right side of the Z check."""
    if s1 <= 0.0 or s2 < 0.0:
        raise DomainError("need s1 > 0 and s2 >= 0")
    return q_laplace(m, part, s1) / -math.expm1(-(s1 + s2))


def double_laplace_check_Z(spec: DoubleLaplaceSpec) -> DoubleLaplaceResult:
    """Joint transform of the last-visit time against the return transform.

    Identity: integral over the window of
    (sum_n e^{-n s1} e^{-s2 Z_n}) (sum_m e^{-m(s1+s2)} Lhat^m 1_{Y_m})
    equals Q^Y(s1)/(1 - e^{-(s1+s2)}).  The operator sum is rewritten by
    duality as level integrals of v(T^m x) over the first-entry sets, which
    is what the quadrature evaluates.
    """
    s1, s2 = spec.s1, spec.s2
    rhs = double_laplace_rhs_Z(spec.m, spec.part, s1, s2)
    r = s1 + s2

    def weight_of(lev: int, _side: int) -> float:
        return math.exp(-lev * r)

    def run(nodes: int):
        quad = _LevelQuadrature(spec.m, spec.part, spec.level_cap, nodes)
        series = lambda z: _series_Z(z, quad.zlo, quad.zhi, s1, s2,
                                     spec.horizon)
        return quad, _lhs_weighted_sum(quad, series, weight_of)

    quad, (lhs, tail_series, parts) = run(spec.nodes)
    _, (lhs_half, _, _) = run(spec.nodes // 2)
    vmax = 1.0 / -math.expm1(-s1)
    tail_levels = (vmax * quad.mu_y
                   * math.exp(-(spec.level_cap + 1) * r) / -math.expm1(-r))
    return _check_result("double-laplace-Z", spec, lhs, rhs, tail_series,
                         tail_levels, abs(lhs - lhs_half), parts)


def double_laplace_check_SY(spec: DoubleLaplaceSpec) -> DoubleLaplaceResult:
    """Joint transform of the window occupation time against Q^Y.

    Identity: (1-e^{-s2}) I1 + (1-e^{-s1}) e^{-s2} I2 = Q^Y(s1), where
    I1 integrates v over the window and I2 pairs v with the level sums
    (duality-rewritten as in the last-visit check).  Both integrals are
    nonnegative; they are reported in ``parts``.
    """
    s1, s2 = spec.s1, spec.s2
    rhs = q_laplace(spec.m, spec.part, s1)

    def weight_of(lev: int, _side: int) -> float:
        return math.exp(-lev * s1)

    def run(nodes: int):
        quad = _LevelQuadrature(spec.m, spec.part, spec.level_cap, nodes)
        series = lambda z: _series_SY(z, quad.zlo, quad.zhi, s1, s2,
                                      spec.horizon)
        values, half = series(quad.z)
        piece = quad.piece_integrals(values)
        i1 = next(p[2] for p in piece if p[0] == 0)
        i2, tail2 = 0.0, 0.0
        for lev, side, integral in piece:
            wgt = weight_of(lev, side)
            i2 += wgt * integral
            mu_piece = quad.mu_y if lev == 0 else quad.mu_side[side][lev]
            tail2 += wgt * mu_piece * half
        c1 = -math.expm1(-s2)
        c2 = -math.expm1(-s1) * math.exp(-s2)
        lhs = c1 * i1 + c2 * i2
        tail = c1 * quad.mu_y * half + c2 * tail2
        return quad, lhs, tail, {"I1": i1, "I2": i2}

    quad, lhs, tail_series, parts = run(spec.nodes)
    _, lhs_half, _, _ = run(spec.nodes // 2)
    vmax = 1.0 / -math.expm1(-s1)
    tail_levels = (-math.expm1(-s1) * math.exp(-s2) * vmax * quad.mu_y
                   * math.exp(-(spec.level_cap + 1) * s1) / -math.expm1(-s1))
    return _check_result("double-laplace-SY", spec, lhs, rhs, tail_series,
                         tail_levels, abs(lhs - lhs_half), parts)


def double_laplace_check_SA(spec: DoubleLaplaceSpec) -> DoubleLaplaceResult:
    """Joint transform of the two ray occupation times against Q^{Y,A_i}.

    Identity: (1-e^{-s}) I0 + sum_i (e^{s_i} - e^{-s}) J_i
    = mu(Y) + sum_i Q^{Y,A_i}(s + s_i), with I0 the window integral of v
    and J_i the duality-rewritten side sums over levels >= 1 restricted to
    ray i, weighted by e^{-m(s+s_i)}.
    """
    s = spec.s1
    s_sides = spec.s_sides
    rhs = (measure_interval(spec.m, spec.part.c0, spec.part.c1)
           + q_laplace_side(spec.m, spec.part, s + s_sides[0], 0)
           + q_laplace_side(spec.m, spec.part, s + s_sides[1], 1))

    def run(nodes: int):
        quad = _LevelQuadrature(spec.m, spec.part, spec.level_cap, nodes)
        series = lambda z: _series_SA(z, quad.zlo, quad.zhi, s, s_sides,
                                      spec.horizon)
        values, half = series(quad.z)
        piece = quad.piece_integrals(values)
        i0 = next(p[2] for p in piece if p[0] == 0)
        j = [0.0, 0.0]
        tails = [0.0, 0.0]
        for lev, side, integral in piece:
            if lev == 0:
                continue
            wgt = math.exp(-lev * (s + s_sides[side]))
            j[side] += wgt * integral
            tails[side] += wgt * quad.mu_side[side][lev] * half
        c0 = -math.expm1(-s)
        coef = [math.exp(s_sides[0]) - math.exp(-s),
                math.exp(s_sides[1]) - math.exp(-s)]
        lhs = c0 * i0 + coef[0] * j[0] + coef[1] * j[1]
        tail = c0 * quad.mu_y * half + coef[0] * tails[0] + coef[1] * tails[1]
        return quad, lhs, tail, {"I0": i0, "J0": j[0], "J1": j[1]}

    quad, lhs, tail_series, parts = run(spec.nodes)
    _, lhs_half, _, _ = run(spec.nodes // 2)
    vmax = 1.0 / -math.expm1(-s)
    tail_levels = 0.0
    for i in (0, 1):
        r = s + s_sides[i]
        coef = math.exp(s_sides[i]) - math.exp(-s)
        tail_levels += (coef * vmax * quad.mu_y
                        * math.exp(-(spec.level_cap + 1) * r)
                        / -math.expm1(-r))
    return _check_result("double-laplace-SA", spec, lhs, rhs, tail_series,
                         tail_levels, abs(lhs - lhs_half), parts)


# ---------------------------------------------------------------------------
# Polynomial-family branch asymptotics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ThalerAsymptoticsReport:
    """Left-branch pullback against the inverse of its asymptotic integral.

    ``ratio`` should approach 1; ``mc_ratio`` (Monte-Carlo return tail over
    the pullback position) is a shape check only — its limit involves an
    unknown density constant, so the report carries its spread, not a
    target value.
    """

    p: float
    n: Tuple[int, ...]
    f0n: Tuple[float, ...]
    u0inv: Tuple[float, ...]
    ratio: Tuple[float, ...]
    mc_tail: Optional[Tuple[float, ...]] = None
    mc_ratio: Optional[Tuple[float, ...]] = None
    mc_exponent: Optional[float] = None

    def write_csv(self, path: str, meta: Optional[Mapping] = None) -> None:
        cols = {"n": self.n, "f0n": self.f0n, "u0inv": self.u0inv,
                "ratio": self.ratio}
        if self.mc_tail is not None:
            cols["mc_tail"] = self.mc_tail
            cols["mc_ratio"] = self.mc_ratio
        base = {"p": self.p}
        if self.mc_exponent is not None:
            base["mc_exponent"] = self.mc_exponent
        if meta:
            base.update(meta)
        _csvio.write_csv(path, cols, meta=base)


def thaler_asymptotics_check(m: MapModel, n_grid: Sequence[int], *,
                             part: Optional[ReferencePartition] = None,
                             mc_samples: int = 0, seed: int = 0,
                             ) -> ThalerAsymptoticsReport:
    """Check f_0^n(1) against u_0^{-1}(n) on a grid of iteration counts.

    With ``mc_samples`` > 0 also estimates the return-time tail from
    uniform starts in the window and reports (a) the tail/pullback ratio
    sequence (stabilization is the check; the limit constant is unknown)
    and (b) the fitted tail exponent, which should be near -1/p.
    """
    if m.family != "thaler":
        raise DomainError("branch asymptotics target the polynomial family")
    grid = tuple(int(n) for n in n_grid)
    if len(grid) == 0 or any(n < 1 for n in grid):
        raise DomainError("n_grid must be positive integers")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise DomainError("n_grid must be strictly increasing")
    f0n = tuple(iterate_inverse_branch(m, 0, m.cut, n - 1) for n in grid)
    u0inv = tuple(thaler_u_inverse(m, 0, float(n)) for n in grid)
    ratio = tuple(f / u for f, u in zip(f0n, u0inv))
    mc_tail = mc_ratio = mc_exp = None
    if mc_samples > 0:
        from .maps import canonical_partition
        if part is None:
            part = canonical_partition(m)
        from .sampling import UniformInterval
        starts = sample_batch(UniformInterval(part.c0, part.c1), m, seed,
                              range(mc_samples))
        phi = first_return_times(m, part, starts, cap=int(grid[-1]))
        phi = np.where(phi < 0, np.iinfo(np.int64).max, phi)
        mc_tail = tuple(float(np.mean(phi > n)) for n in grid)
        mc_ratio = tuple(t / f for t, f in zip(mc_tail, f0n))
        pos = [(n, t) for n, t in zip(grid, mc_tail) if t > 0.0]
        if len(pos) >= 2:
            ln = np.log([n for n, _ in pos])
            lt = np.log([t for _, t in pos])
            mc_exp = float(np.polyfit(ln, lt, 1)[0])
    return ThalerAsymptoticsReport(p=m.p, n=grid, f0n=f0n, u0inv=u0inv,
                                   ratio=ratio, mc_tail=mc_tail,
                                   mc_ratio=mc_ratio, mc_exponent=mc_exp)
