"""Acceptance suite: the package's top-level numerical guarantees.

One test per acceptance criterion, in order; each prints a single
``[PASS]/[FAIL] criterion N`` summary line (run ``pytest -s`` to stream
them; a failing criterion carries its line in the captured output).  The
tolerances are the contract: exact identities are held to certified
quadrature precision, Monte Carlo reproductions run at desk scale with
frozen seeds, and the reproducibility criterion is bitwise.  The whole
file is a few minutes of single-core work; the large-deviation plateau
(criterion 5) dominates the runtime.
"""

import filecmp
import math
import time

import numpy as np
import pytest
from scipy import special
from scipy.integrate import quad

from ergolab import boole_map, canonical_partition, thaler_map
from ergolab.cli import main as cli_main
from ergolab.entrance import (
    check_identity_renewal,
    entrance_density,
    entrance_density_side,
)
from ergolab.experiments import (
    DoubleLaplaceSpec,
    ExperimentSpec,
    cdf_experiment_batch,
    double_laplace_check_SA,
    double_laplace_check_SY,
    double_laplace_check_Z,
    ld_experiment,
    thaler_asymptotics_check,
    y_restricted_law,
)
from ergolab.invariant import (
    fit_regular_variation,
    invariant_density,
    measure_interval,
    q_laplace,
    wandering_table,
)
from ergolab.maps import inverse_branch
from ergolab.sampling import (
    EntranceLaw,
    UniformInterval,
    counterexample_density,
    halving_c,
)
from ergolab.specfun import (
    lamperti_cdf,
    lamperti_cdf_integral,
    mittag_leffler_cdf,
    mittag_leffler_laplace,
)

SINC_HALF = 2.0 / math.pi          # sin(pi a)/(pi a) at a = 1/2
LD_GRID = (1_000, 10_000, 100_000)
LD_SAMPLES = 100_000
LD_SEED = 11
ENTRANCE_DEPTH = 512


def _report(criterion: str, ok: bool, detail: str) -> None:
    print(f"[{'PASS' if ok else 'FAIL'}] criterion {criterion}: {detail}")


@pytest.fixture(scope="module")
def m():
    return boole_map()


@pytest.fixture(scope="module")
def part(m):
    return canonical_partition(m)


# ---------------------------------------------------------------------------
# 1. exact identities (no Monte Carlo noise anywhere)
# ---------------------------------------------------------------------------

def test_criterion_1_exact_identity_suite(m, part):
    checks = []

    # measure preservation: mu(T^{-1} I) = mu(I) over interval probes
    probes = ((0.05, 0.15), (0.2, 0.4), (0.45, 0.72), (0.9, 0.97),
              (part.c0, part.c1))
    worst = 0.0
    for a, b in probes:
        pre = sum(measure_interval(m, inverse_branch(m, br, a),
                                   inverse_branch(m, br, b))
                  for br in (0, 1))
        worst = max(worst, abs(pre - measure_interval(m, a, b)))
    checks.append(("measure-preservation", worst, 1e-10))

    # renewal identity tying the entrance densities to Q^Y at s = 0.5
    checks.append(("renewal(s=0.5)",
                   check_identity_renewal(m, part, 0.5), 1e-6))

    # the three double-Laplace identities behind the limit laws
    res_z = double_laplace_check_Z(DoubleLaplaceSpec(
        m, part, s1=0.5, s2=0.3, nodes=2048, horizon=96))
    res_sy = double_laplace_check_SY(DoubleLaplaceSpec(
        m, part, s1=0.4, s2=0.6, nodes=2048, horizon=96))
    res_sa = double_laplace_check_SA(DoubleLaplaceSpec(
        m, part, s1=0.5, s_sides=(0.2, 0.7), nodes=2048, horizon=96))
    checks.append(("double-laplace Z(0.5,0.3)", abs(res_z.rel_error), 1e-3))
    checks.append(("double-laplace SY(0.4,0.6)", abs(res_sy.rel_error), 1e-3))
    checks.append(("double-laplace SA(0.5;0.2,0.7)",
                   abs(res_sa.rel_error), 1e-3))

    ok = all(v < tol for _, v, tol in checks)
    _report("1", ok, "; ".join(f"{n} {v:.2e} (tol {tol:g})"
                               for n, v, tol in checks))
    for name, value, tol in checks:
        assert value < tol, f"{name}: residual {value:.3e} >= {tol:g}"


# ---------------------------------------------------------------------------
# 2. special functions against independent second computations
# ---------------------------------------------------------------------------

def _laplace_by_quadrature(alpha: float, lam: float) -> float:
    """Integration by parts on [0, T] with a certified discarded tail."""
    T, F_T = 2.0, mittag_leffler_cdf(alpha, 2.0)
    while math.exp(-lam * T) * (1.0 - F_T) > 1e-11:
        T, F_T = T + 1.0, mittag_leffler_cdf(alpha, T + 1.0)
    integral, _ = quad(lambda x: math.exp(-lam * x)
                       * mittag_leffler_cdf(alpha, x), 0.0, T, limit=200)
    return math.exp(-lam * T) * F_T + lam * integral


def test_criterion_2_special_function_suite():
    t0 = time.perf_counter()

    # order-1/2 Mittag-Leffler CDF against its error-function closed form
    ts = np.linspace(0.0, 6.0, 121)
    gap_ml = float(np.max(np.abs(mittag_leffler_cdf(0.5, ts)
                                 - special.erf(ts / 2.0))))

    # two-parameter arcsine law: arccotangent form vs direct integral
    tg = np.linspace(0.1, 0.9, 9)
    gap_lam = 0.0
    for alpha in (0.1, 0.3, 0.5, 0.7, 0.9):
        for b in (0.25, 0.5, 1.0, 2.0, 4.0):
            gap_lam = max(gap_lam, float(np.max(np.abs(
                lamperti_cdf(alpha, b, tg) - lamperti_cdf_integral(
                    alpha, b, tg)))))

    # b = 1, order 1/2 reduction to the classical arcsine law
    tr = np.linspace(0.0, 1.0, 201)
    gap_arc = float(np.max(np.abs(
        lamperti_cdf(0.5, 1.0, tr)
        - 2.0 / math.pi * np.arcsin(np.sqrt(tr)))))

    # Laplace-transform series against quadrature of the CDF
    gap_lap = max(abs(_laplace_by_quadrature(a, lam)
                      - mittag_leffler_laplace(a, lam))
                  for a, lam in ((0.4, 0.7), (0.5, 1.0), (0.3, 0.5),
                                 (0.6, 1.3), (0.55, 0.25)))

    elapsed = time.perf_counter() - t0
    ok = (gap_ml < 1e-8 and gap_lam < 1e-8 and gap_arc < 1e-10
          and gap_lap < 1e-8 and elapsed < 10.0)
    _report("2", ok,
            f"ML-vs-erf {gap_ml:.1e}; arccot-vs-integral {gap_lam:.1e}; "
            f"arcsine reduction {gap_arc:.1e}; Laplace {gap_lap:.1e}; "
            f"{elapsed:.1f}s")
    assert gap_ml < 1e-8
    assert gap_lam < 1e-8
    assert gap_arc < 1e-10
    assert gap_lap < 1e-8
    assert elapsed < 10.0


# ---------------------------------------------------------------------------
# 3. renewal constants of the rational map
# ---------------------------------------------------------------------------

def test_criterion_3_renewal_constants(m, part):
    mu_y = measure_interval(m, part.c0, part.c1)
    gap_mu = abs(mu_y - math.sqrt(2.0))

    table = wandering_table(m, part, 10**6)
    fit = fit_regular_variation(table, 1_000, 10**6)

    qs = [q_laplace(m, part, s) * math.sqrt(s) for s in (1e-3, 1e-4, 1e-5)]
    spread_q = (max(qs) - min(qs)) / (sum(qs) / len(qs))

    tot = table.w_A0[table.N] + table.w_A1[table.N]
    beta0 = table.w_A0[table.N] / tot

    ok = (gap_mu < 1e-12 and 0.48 <= fit.exponent <= 0.52
          and spread_q < 0.03 and abs(beta0 - 0.5) < 0.01)
    _report("3", ok,
            f"|mu(Y)-sqrt2| {gap_mu:.1e}; exponent {fit.exponent:.4f}; "
            f"Q sqrt(s) spread {spread_q:.2%}; beta0 {beta0:.4f}")
    assert gap_mu < 1e-12
    assert 0.48 <= fit.exponent <= 0.52
    assert spread_q < 0.03
    assert abs(beta0 - 0.5) < 0.01


# ---------------------------------------------------------------------------
# 4. the three limit laws at desk scale, one shared orbit batch
# ---------------------------------------------------------------------------

def test_criterion_4_limit_law_reproduction(m, part):
    batch = cdf_experiment_batch(
        m, part, UniformInterval(0.2, 0.8), ("SY", "Z", "SA0"),
        n=10**5, n_samples=10**4, seed=0)
    ks = {s: batch[s].ks for s in ("SY", "Z", "SA0")}
    ok = all(v <= 0.05 for v in ks.values())
    _report("4", ok, "; ".join(
        f"KS[{s}] {v:.4f}" for s, v in ks.items()) + " (max 0.05)")
    for s, v in ks.items():
        assert v <= 0.05, f"KS for {s} is {v:.4f} > 0.05"


# ---------------------------------------------------------------------------
# 5. large-deviation plateau, sharp and bounded tiers
# ---------------------------------------------------------------------------

def _ld_run(m, part, law, statistic, **kw):
    spec = ExperimentSpec(m, part, law, statistic, LD_GRID, LD_SAMPLES,
                          LD_SEED, **kw)
    return ld_experiment(spec)


def test_criterion_5a_plateau_sharp_tier(m, part):
    lo, hi = 0.8 * SINC_HALF, 1.2 * SINC_HALF
    runs = {
        "Z": _ld_run(m, part,
                     EntranceLaw(entrance_density(m, part, ENTRANCE_DEPTH),
                                 m),
                     "Z", theta=0.3),
        "SY": _ld_run(m, part, y_restricted_law(m, part), "SY",
                      theta_tilde=0.3),
        "SA0": _ld_run(m, part,
                       EntranceLaw(entrance_density_side(
                           m, part, ENTRANCE_DEPTH, side=0), m),
                       "SA0", theta=0.3),
    }
    finals = {s: rep.rows[-1].ratio for s, rep in runs.items()}
    spreads = {s: rep.plateau_spread for s, rep in runs.items()}
    ok = (all(lo <= v <= hi for v in finals.values())
          and all(v < 0.25 for v in spreads.values()))
    _report("5a", ok, "; ".join(
        f"{s}: ratio {finals[s]:.4f}, spread {spreads[s]:.2%}"
        for s in runs) + f" (band [{lo:.3f},{hi:.3f}], spread<25%)")
    for s in runs:
        assert lo <= finals[s] <= hi, \
            f"{s}: final ratio {finals[s]:.4f} outside [{lo:.4f},{hi:.4f}]"
        assert spreads[s] < 0.25, f"{s}: spread {spreads[s]:.4f} >= 0.25"


def test_criterion_5b_plateau_bounded_tier(m, part):
    rep = _ld_run(m, part, UniformInterval(0.2, 0.8), "Z", theta=0.3)
    ratios = [r.ratio for r in rep.rows]
    ok = (all(math.isfinite(r) and r > 0.0 for r in ratios)
          and rep.plateau_spread < 0.40)
    _report("5b", ok,
            f"ratios {', '.join(f'{r:.4f}' for r in ratios)}; "
            f"spread {rep.plateau_spread:.2%} (<40%)")
    for r in ratios:
        assert math.isfinite(r) and r > 0.0
    assert rep.plateau_spread < 0.40


# ---------------------------------------------------------------------------
# 6. the two-sided-level construction that defeats the sharp asymptotics
# ---------------------------------------------------------------------------

def test_criterion_6_counterexample_law(m, part):
    alpha = m.alpha
    law = counterexample_density(m, part, halving_c, alpha, n_levels=25)

    # masses telescope to exactly 1
    gap_mass = abs(math.fsum(law.masses) - 1.0)

    # tails P(phi > N_k) = c(N_k)^(alpha/2) by piecewise quadrature, k <= 20
    h = invariant_density(m).density
    piece_mass = [
        math.fsum(quad(lambda y: dens * h(y), lo, hi, epsabs=1e-13)[0]
                  for lo, hi in lvl)
        for lvl, dens in zip(law.pieces, law._mu_dens)]
    gap_tail = max(
        abs(math.fsum(piece_mass[k + 1:])
            - halving_c(law.levels[k]) ** (alpha / 2.0))
        for k in range(21))

    # the rescaled ratio must blow up: monotone, final above 10
    grid = law.levels[:21]
    spec = ExperimentSpec(m, part, law, "Z", grid, LD_SAMPLES, LD_SEED,
                          c_table=tuple(halving_c(n) for n in grid))
    rep = ld_experiment(spec)
    ratios = [r.ratio for r in rep.rows]
    monotone = all(b > a for a, b in zip(ratios, ratios[1:]))

    ok = (gap_mass < 1e-15 and gap_tail < 1e-9 and monotone
          and ratios[-1] > 10.0)
    _report("6", ok,
            f"mass gap {gap_mass:.1e}; tail gap {gap_tail:.1e}; "
            f"monotone {monotone}; final ratio {ratios[-1]:.1f} (>10)")
    assert gap_mass < 1e-15
    assert gap_tail < 1e-9
    assert monotone, f"ratio sequence not strictly increasing: {ratios}"
    assert ratios[-1] > 10.0


# ---------------------------------------------------------------------------
# 7. polynomial-family branch asymptotics and return-time tails
# ---------------------------------------------------------------------------

def test_criterion_7_polynomial_family_asymptotics():
    mc_grid = sorted(set(int(v) for v in np.geomspace(100, 10_000, 7)))
    details = []
    ok = True
    for p, mc_samples in ((1.5, 200_000), (2.0, 200_000), (3.0, 150_000)):
        m = thaler_map(p, 1.0)
        rep = thaler_asymptotics_check(m, (100, 1_000, 10_000, 100_000))
        gap_ratio = abs(rep.ratio[-1] - 1.0)
        mc = thaler_asymptotics_check(m, mc_grid, mc_samples=mc_samples,
                                      seed=5)
        gap_exp = abs(mc.mc_exponent + 1.0 / p)
        ok = ok and gap_ratio < 0.05 and gap_exp < 0.05
        details.append(f"p={p}: |ratio-1| {gap_ratio:.4f}, "
                       f"|exp+1/p| {gap_exp:.4f}")
        assert gap_ratio < 0.05, f"p={p}: pullback ratio off by {gap_ratio}"
        assert gap_exp < 0.05, \
            f"p={p}: tail exponent {mc.mc_exponent} vs {-1.0 / p}"
    _report("7", ok, "; ".join(details) + " (tol 0.05)")


# ---------------------------------------------------------------------------
# 8. bitwise reproducibility across worker counts
# ---------------------------------------------------------------------------

def test_criterion_8_worker_count_reproducibility(tmp_path):
    base = ["ld", "--theta", "0.3", "--n", "300,1000", "--law", "entrance",
            "--seed", "42", "--samples", "4000"]
    d1, d3 = tmp_path / "w1", tmp_path / "w3"
    code1 = cli_main(base + ["--workers", "1", "--out", str(d1)])
    code3 = cli_main(base + ["--workers", "3", "--out", str(d3)])
    same_csv = filecmp.cmp(d1 / "ld.csv", d3 / "ld.csv", shallow=False)
    same_json = filecmp.cmp(d1 / "ld.json", d3 / "ld.json", shallow=False)
    ok = code1 == 0 and code3 == 0 and same_csv and same_json
    _report("8", ok,
            f"exit codes {code1}/{code3}; csv identical {same_csv}; "
            f"json identical {same_json}")
    assert code1 == 0 and code3 == 0
    assert same_csv and same_json
