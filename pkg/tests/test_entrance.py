"""Transfer-operator, entrance-density and operator-identity tests.

Oracles:

* mass of level indicators: return_tail (chart telescope, independent of
  the Gauss-Legendre quadrature route used on the operator side);
* duality: both sides of int (v o T^k) 1_{Y_k} dmu = int v L^k 1_{Y_k} dmu
  via interval pullbacks (left) and quadrature of the word sums (right);
* identity residuals carry exact truncation certificates, so the asserted
  tolerances are truncation budgets, not fitted numbers.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ergolab import boole_map, canonical_partition, make_partition
from ergolab.entrance import (
    chebyshev_grid,
    check_identity_Yn,
    check_identity_Yn_integrated,
    check_identity_renewal,
    entrance_density,
    entrance_density_side,
    integrate_mu,
    renewal_sides,
    sweeping_diagnostic,
    transfer_indicator,
    transfer_mass_sequence,
    write_entrance_csv,
)
from ergolab.errors import DomainError, NoClosedFormDensity, OutOfRange
from ergolab.invariant import measure_interval, return_tail, y_level_set
from ergolab.maps import apply, inverse_branch, iterate_inverse_branch
from ergolab._csvio import read_csv

SQRT2 = math.sqrt(2.0)


def test_transfer_indicator_identity_term(boole, boole_part):
    g = chebyshev_grid(boole_part, 32)
    assert np.all(transfer_indicator(boole, boole_part, 0, g) == 1.0)
    assert transfer_indicator(boole, boole_part, 0, 0.5) == 1.0


def test_transfer_indicator_errors(boole, boole_part, thaler_sym):
    with pytest.raises(NoClosedFormDensity):
        transfer_indicator(thaler_sym, boole_part, 1, 0.5)
    with pytest.raises(OutOfRange):
        transfer_indicator(boole, boole_part, -1, 0.5)
    with pytest.raises(OutOfRange):
        transfer_indicator(boole, boole_part, 1, 0.2)


def test_transfer_indicator_mass_conservation(boole, boole_part):
    for k in (1, 2, 5, 10, 25, 50):
        val = integrate_mu(
            boole, lambda x: transfer_indicator(boole, boole_part, k, x),
            boole_part.c0, boole_part.c1)
        assert abs(val - return_tail(boole, boole_part, k)) < 1e-6


def test_transfer_indicator_mass_noncanonical(boole):
    # support of the pushed-forward indicator is (c0, T(c0)] u [T(c1), c1)
    # for every k, so those two points are the only quadrature breakpoints
    part = make_partition(boole, 0.3, 0.7)
    cuts = (apply(boole, part.c0), apply(boole, part.c1))
    for k in (1, 3, 7):
        val = integrate_mu(
            boole, lambda x: transfer_indicator(boole, part, k, x),
            part.c0, part.c1, breakpoints=cuts)
        assert abs(val - return_tail(boole, part, k)) < 1e-6


def test_transfer_indicator_duality(boole, boole_part):
    k, lo, hi = 3, 0.45, 0.55
    lhs = 0.0
    for br in (0, 1):
        a = iterate_inverse_branch(boole, br, lo, k)
        b = iterate_inverse_branch(boole, br, hi, k)
        lhs += abs(measure_interval(boole, min(a, b), max(a, b)))
    rhs = integrate_mu(
        boole, lambda x: transfer_indicator(boole, boole_part, k, x), lo, hi)
    assert abs(lhs - rhs) < 1e-6


def test_entrance_density_normalization(boole, boole_part):
    fine = chebyshev_grid(boole_part, 2048)
    for n in (1, 8, 64, 512):
        H = entrance_density(boole, boole_part, n, fine)
        assert np.all(H.values >= 0.0)
        assert abs(H.integral(boole) - 1.0) < 1e-6
    with pytest.raises(DomainError):
        entrance_density(boole, boole_part, 0)


def test_entrance_density_defaults(boole, boole_part):
    H = entrance_density(boole, boole_part, 16)
    assert H.grid.shape == (256,)
    assert H.n == 16 and H.side is None
    assert boole_part.c0 < H.grid[0] < H.grid[-1] < boole_part.c1


def test_entrance_density_side_decomposition(boole, boole_part):
    n = 512
    H = entrance_density(boole, boole_part, n)
    H0 = entrance_density_side(boole, boole_part, n, 0)
    H1 = entrance_density_side(boole, boole_part, n, 1)
    recon = (H0.normalizer * H0.values + H1.normalizer * H1.values + 1.0) \
        / H.normalizer
    assert np.max(np.abs(recon - H.values)) < 1e-9
    with pytest.raises(DomainError):
        entrance_density_side(boole, boole_part, 1, 0)
    with pytest.raises(OutOfRange):
        entrance_density_side(boole, boole_part, 4, 2)


def test_entrance_density_cauchy(boole, boole_part):
    grid = chebyshev_grid(boole_part)
    dists = []
    for n in (128, 256, 512):
        a = entrance_density(boole, boole_part, n, grid).values
        b = entrance_density(boole, boole_part, 2 * n, grid).values
        dists.append(np.max(np.abs(b - a)) / np.max(np.abs(a)))
    assert dists[-1] < 0.05
    assert dists[0] > dists[1] > dists[2]


def test_identity_yn_pointwise(boole, boole_part):
    for n in (1, 2, 3):
        assert check_identity_Yn(boole, boole_part, n) < 5e-3
    part = make_partition(boole, 0.3, 0.7)
    assert check_identity_Yn(boole, part, 2) < 5e-3


def test_identity_yn_off_level_sum_vanishes(boole, boole_part):
    # at points of the (n+1)-th level the indicator is 0 and so is the sum
    n = 4
    (lo0, hi0), (lo1, hi1) = y_level_set(boole, boole_part, n + 1)
    grid = np.array([0.5 * (lo0 + hi0), 0.5 * (lo1 + hi1)])
    assert check_identity_Yn(boole, boole_part, n, grid=grid,
                             horizon=20_000) < 5e-3


def test_identity_yn_integrated(boole, boole_part):
    horizon = 160_000_000
    resid = check_identity_Yn_integrated(boole, boole_part, 1, horizon)
    assert resid < 1e-4 * return_tail(boole, boole_part, 1)
    # residual is truncation-dominated: comparable to the omitted tail
    assert resid > 0.5 * math.sqrt(2.0 / horizon)


def test_renewal_identity_residuals(boole, boole_part):
    assert check_identity_renewal(boole, boole_part, 0.5) < 1e-6
    assert check_identity_renewal(boole, boole_part, 0.05) < 1e-6
    part = make_partition(boole, 0.3, 0.7)
    assert check_identity_renewal(boole, part, 0.5) < 1e-6
    with pytest.raises(DomainError):
        check_identity_renewal(boole, boole_part, 0.0)


def test_renewal_identity_large_s(boole, boole_part):
    s = 5.0
    lhs, rhs, _ = renewal_sides(boole, boole_part, s)
    assert np.max(np.abs(lhs - rhs)) < 1e-6
    assert np.all(lhs > 0.99)
    assert np.max(np.abs(rhs - (1.0 - math.exp(-s)))) < 0.01


def test_renewal_sides_bounded(boole, boole_part):
    for s in (0.1, 0.5, 2.0):
        lhs, rhs, grid = renewal_sides(boole, boole_part, s)
        assert grid.shape == (200,)
        for side in (lhs, rhs):
            assert np.all(side >= 0.0) and np.all(side <= 1.0)


def test_sweeping_flat_density(boole, boole_part):
    grid = chebyshev_grid(boole_part)
    flat = np.full(grid.shape, 1.0 / SQRT2)
    c, ok = sweeping_diagnostic(boole, boole_part, grid, flat, 0)
    assert ok and abs(c - SQRT2) < 1e-12


def test_sweeping_entrance_density(boole, boole_part):
    grid = chebyshev_grid(boole_part)
    H = entrance_density(boole, boole_part, 512, grid)
    c0, ok0 = sweeping_diagnostic(boole, boole_part, grid, H.values, 0)
    c1, ok1 = sweeping_diagnostic(boole, boole_part, grid, H.values, 1)
    c2, ok2 = sweeping_diagnostic(boole, boole_part, grid, H.values, 2)
    assert ok0 and ok2 and math.isfinite(c2)
    assert c2 <= c1 <= c0 < 10.0
    # exits from the window cannot return in one step at this partition,
    # so the K = 1 sum adds nothing
    assert c1 == c0
    with pytest.raises(OutOfRange):
        sweeping_diagnostic(boole, boole_part, grid, H.values, 11)


def test_sweeping_deep_return_density(boole, boole_part):
    grid = chebyshev_grid(boole_part)
    b0 = iterate_inverse_branch(boole, 0, boole_part.c0, 1000)
    b1 = iterate_inverse_branch(boole, 1, boole_part.c1, 1000)
    lo = inverse_branch(boole, 0, b1)
    hi = inverse_branch(boole, 1, b0)
    mass = measure_interval(boole, lo, hi)
    deep = np.where((grid > lo) & (grid < hi), 1.0 / mass, 0.0)
    assert np.sum(deep > 0.0) > 0
    for K in (0, 1, 2):
        c, ok = sweeping_diagnostic(boole, boole_part, grid, deep, K)
        assert c > 1e3 and not ok


def test_operator_mass_conservation(boole, boole_part):
    H = entrance_density(boole, boole_part, 64, chebyshev_grid(boole_part, 1024))
    masses = transfer_mass_sequence(boole, H, 20)
    assert np.max(np.abs(masses / masses[0] - 1.0)) < 1e-6


def test_entrance_csv_roundtrip(boole, boole_part, tmp_path):
    n = 32
    H = entrance_density(boole, boole_part, n)
    H0 = entrance_density_side(boole, boole_part, n, 0)
    H1 = entrance_density_side(boole, boole_part, n, 1)
    path = tmp_path / "entrance.csv"
    write_entrance_csv(str(path), H, H0, H1)
    meta, cols = read_csv(str(path))
    assert list(cols) == ["y", "H_n", "H_n_0", "H_n_1"]
    assert meta["n"] == "32"
    assert np.allclose(cols["H_n"], H.values)
    bad = entrance_density(boole, boole_part, n, chebyshev_grid(boole_part, 64))
    with pytest.raises(OutOfRange):
        write_entrance_csv(str(path), bad, H0, H1)


def test_thaler_family_rejected(thaler_sym, boole, boole_part):
    part = boole_part
    with pytest.raises(NoClosedFormDensity):
        entrance_density(thaler_sym, part, 4)
    with pytest.raises(NoClosedFormDensity):
        check_identity_Yn(thaler_sym, part, 1)
    with pytest.raises(NoClosedFormDensity):
        check_identity_renewal(thaler_sym, part, 0.5)
    with pytest.raises(NoClosedFormDensity):
        sweeping_diagnostic(thaler_sym, part, np.array([0.45, 0.5]),
                            np.array([1.0, 1.0]), 0)


@settings(max_examples=30, deadline=None)
@given(
    k=st.integers(min_value=1, max_value=30),
    t=st.floats(min_value=0.01, max_value=0.99),
)
def test_transfer_indicator_weight_bounds(k, t):
    m = boole_map()
    part = canonical_partition(m)
    y = part.c0 + t * (part.c1 - part.c0)
    val = transfer_indicator(m, part, k, y)
    assert 0.0 <= val <= 2.0


@settings(max_examples=20, deadline=None)
@given(
    s=st.floats(min_value=0.2, max_value=2.0),
    a=st.floats(min_value=0.05, max_value=1.0),
    b=st.floats(min_value=0.0, max_value=0.95),
)
def test_renewal_identity_property(s, a, b):
    m = boole_map()
    g = canonical_partition(m)
    part = make_partition(m, a * g.c0, g.c1 + b * (0.99 - g.c1))
    assert check_identity_renewal(m, part, s,
                                  grid=chebyshev_grid(part, 50)) < 1e-6
