import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from magdimer import reference_params, find_all_fixed_points


@pytest.fixture(scope="session")
def params30():
    return reference_params(30e-3)


@pytest.fixture(scope="session")
def fixed_points_30mw(params30):
    """Full census at the multistable working point (shared; read-only)."""
    return find_all_fixed_points(params30)


@pytest.fixture(scope="session")
def stable_30mw(fixed_points_30mw):
    return [fp for fp in fixed_points_30mw if fp.is_stable]


def finite_difference_jacobian(f, x, h=None):
    """Central-difference Jacobian; independent oracle for drift matrices."""
    x = np.asarray(x, dtype=float)
    if h is None:
        h = 1e-4 * max(np.max(np.abs(x)), 1.0)
    n = x.size
    fx = np.asarray(f(x))
    J = np.empty((fx.size, n))
    for j in range(n):
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        J[:, j] = (np.asarray(f(xp)) - np.asarray(f(xm))) / (2.0 * h)
    return J
