import numpy as np
import pytest

from ergolab import boole_map, thaler_map, canonical_partition


def golden_points(n: int, lo: float, hi: float, offset: float = 0.137) -> np.ndarray:
    """Deterministic low-discrepancy points in (lo, hi) (golden-ratio walk)."""
    phi_inv = (np.sqrt(5.0) - 1.0) / 2.0
    u = (offset + np.arange(1, n + 1) * phi_inv) % 1.0
    return lo + (hi - lo) * u


@pytest.fixture(scope="session")
def boole():
    return boole_map()


@pytest.fixture(scope="session")
def boole_part(boole):
    return canonical_partition(boole)


@pytest.fixture(scope="session")
def thaler_sym():
    """Symmetric polynomial map: p=2, K0=4 gives cut exactly 1/2."""
    return thaler_map(2.0, 4.0)


@pytest.fixture(scope="session")
def thaler_asym():
    """Asymmetric polynomial map used across the suite: p=2, K0=1."""
    return thaler_map(2.0, 1.0)
