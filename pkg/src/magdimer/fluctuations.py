"""Gaussian fluctuations around stable fixed points.

The linearized quantum Langevin dynamics du = A u dt + noise with vacuum
inputs has the steady-state covariance V (vacuum variance 1/2 convention,
``V_vac = I/2``) solving the Lyapunov equation ``A V + V A^T = -D``.  From
the reduced two-magnon covariance blocks (alpha, beta, gamma) we compute the
single-mode Gaussian fidelity between the left and right magnon modes, their
mutual information, and (as a sanity check) the logarithmic negativity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import SolverError
from .model import FieldState, SystemParams, diffusion_matrix, drift_matrix

#: Acceptable relative Frobenius residual of the Lyapunov solve.
LYAPUNOV_RTOL = 1e-8

#: Physicality slack on symplectic eigenvalues (>= 1/2 - PHYSICAL_TOL).
PHYSICAL_TOL = 1e-10


def symplectic_form(n_modes: int) -> np.ndarray:
    """Block-diagonal symplectic form with 2x2 blocks ((0, 1), (-1, 0))."""
    block = np.array([[0.0, 1.0], [-1.0, 0.0]])
    return np.kron(np.eye(n_modes), block)


def lyapunov_residual(A: np.ndarray, V: np.ndarray, D: np.ndarray) -> float:
    """Relative Frobenius residual ||A V + V A^T + D|| / ||D||."""
    num = np.linalg.norm(A @ V + V @ A.T + D)
    return float(num / np.linalg.norm(D))


def solve_lyapunov(A: np.ndarray, D: np.ndarray) -> np.ndarray:
    """Unique symmetric solution V of A V + V A^T = -D for Hurwitz A.

    Raises :class:`SolverError` for a non-Hurwitz A (covariance undefined at
    an unstable fixed point) or when the residual check fails.
    """
    A = np.asarray(A, dtype=float)
    D = np.asarray(D, dtype=float)
    if np.max(np.linalg.eigvals(A).real) >= 0.0:
        raise SolverError("unstable fixed point: covariance undefined")
    V = scipy.linalg.solve_continuous_lyapunov(A, -D)
    V = 0.5 * (V + V.T)
    res = lyapunov_residual(A, V, D)
    if res > LYAPUNOV_RTOL:
        raise SolverError(f"Lyapunov residual {res:.3e} exceeds {LYAPUNOV_RTOL:.1e}")
    return V


def steady_covariance(fp_state: FieldState, params: SystemParams) -> np.ndarray:
    """Steady-state 8x8 covariance at a stable fixed point."""
    return solve_lyapunov(drift_matrix(fp_state, params), diffusion_matrix(params))


def symplectic_spectrum(V: np.ndarray) -> np.ndarray:
    """All symplectic eigenvalues of an even-dimensional covariance matrix."""
    V = np.asarray(V, dtype=float)
    n = V.shape[0] // 2
    ev = np.linalg.eigvals(symplectic_form(n) @ V)
    nus = np.sort(np.abs(ev.imag))
    return nus[::2]  # eigenvalues come in +/- i nu pairs: keep one per pair


def min_symplectic_eigenvalue(V: np.ndarray) -> float:
    return float(symplectic_spectrum(V).min())


def is_physical(V: np.ndarray, tol: float = PHYSICAL_TOL) -> bool:
    """Uncertainty-principle check: every symplectic eigenvalue >= 1/2 - tol."""
    return min_symplectic_eigenvalue(V) >= 0.5 - tol


@dataclass(frozen=True)
class TwoModeCM:
    """Reduced covariance of the (left, right) magnon pair in block form."""

    alpha: np.ndarray   # 2x2 left-magnon block
    gamma: np.ndarray   # 2x2 right-magnon block
    beta: np.ndarray    # 2x2 cross block

    @property
    def full(self) -> np.ndarray:
        return np.block([[self.alpha, self.beta], [self.beta.T, self.gamma]])


def reduce_to_magnons(V: np.ndarray) -> TwoModeCM:
    """Select the magnon rows/columns (X_mL, Y_mL, X_mR, Y_mR) of an 8x8 V."""
    V = np.asarray(V, dtype=float)
    if V.shape != (8, 8):
        raise ValueError(f"expected an 8x8 covariance matrix, got {V.shape}")
    idx = np.array([2, 3, 6, 7])
    sub = V[np.ix_(idx, idx)]
    return TwoModeCM(alpha=sub[:2, :2].copy(), gamma=sub[2:, 2:].copy(),
                     beta=sub[:2, 2:].copy())


def _require_single_mode_physical(cm: np.ndarray, name: str) -> float:
    """Validate a 2x2 CM and return its determinant."""
    cm = np.asarray(cm, dtype=float)
    if cm.shape != (2, 2):
        raise ValueError(f"{name} must be 2x2")
    det = float(np.linalg.det(cm))
    # nu = sqrt(det) >= 1/2  <=>  det >= 1/4
    if det < 0.25 - PHYSICAL_TOL:
        raise ValueError(f"{name} is not a physical covariance matrix (det={det})")
    return det


def symplectic_eigenvalues(cm) -> list[float]:
    """Symplectic eigenvalues of a 2x2 (single-mode) or 4x4 block CM.

    Single mode: nu = sqrt(det).  Two modes: nu_+- from the invariant
    Delta = det(alpha) + det(gamma) + 2 det(beta).
    """
    if isinstance(cm, TwoModeCM):
        a, g, b = cm.alpha, cm.gamma, cm.beta
    else:
        cm = np.asarray(cm, dtype=float)
        if cm.shape == (2, 2):
            det = float(np.linalg.det(cm))
            if det < 0.0:
                raise ValueError("negative determinant: unphysical covariance")
            return [float(np.sqrt(det))]
        if cm.shape != (4, 4):
            raise ValueError("expected a 2x2 or 4x4 covariance matrix")
        a, g, b = cm[:2, :2], cm[2:, 2:], cm[:2, 2:]
    seralian = (np.linalg.det(a) + np.linalg.det(g) + 2.0 * np.linalg.det(b))
    detV = np.linalg.det(np.block([[a, b], [b.T, g]]))
    return _nu_pm(seralian, detV)


def _nu_pm(seralian: float, detV: float) -> list[float]:
    disc = seralian**2 - 4.0 * detV
    if disc < 0.0:
        if disc < -1e-12 * max(seralian**2, 1.0):
            raise ValueError("unphysical covariance: negative symplectic discriminant")
        disc = 0.0
    root = np.sqrt(disc)
    nus = []
    for sign in (-1.0, 1.0):
        val = 0.5 * (seralian + sign * root)
        if val < 0.0:
            if val < -1e-12 * max(abs(seralian), 1.0):
                raise ValueError("unphysical covariance: negative squared eigenvalue")
            val = 0.0
        nus.append(float(np.sqrt(val)))
    return nus


def gaussian_fidelity(alpha: np.ndarray, gamma: np.ndarray) -> float:
    """Fidelity of two zero-mean single-mode Gaussian states.

    F = 1 / (sqrt(delta + Lambda) - sqrt(Lambda)) with delta = det(alpha +
    gamma) and Lambda = 4 det(alpha + iT/2) det(gamma + iT/2).  For a
    symmetric 2x2 block, det(M + iT/2) = det(M) - 1/4, so everything is real
    arithmetic.  Result clamped to [0, 1] within 1e-12 numerical slack.
    """
    det_a = _require_single_mode_physical(alpha, "alpha")
    det_g = _require_single_mode_physical(gamma, "gamma")
    delta = float(np.linalg.det(np.asarray(alpha, float) + np.asarray(gamma, float)))
    lam = 4.0 * max(det_a - 0.25, 0.0) * max(det_g - 0.25, 0.0)
    fid = 1.0 / (np.sqrt(delta + lam) - np.sqrt(lam))
    if fid > 1.0 + 1e-12 or fid < -1e-12:
        raise ValueError(f"fidelity {fid} outside [0, 1]: unphysical inputs")
    return float(min(max(fid, 0.0), 1.0))


def _entropy_f(x: float) -> float:
    """f(x) = (x + 1/2) ln(x + 1/2) - (x - 1/2) ln(x - 1/2), with f(1/2) = 0."""
    up = x + 0.5
    dn = x - 0.5
    term = dn * np.log(dn) if dn > 0.0 else 0.0
    return float(up * np.log(up) - term)


def mutual_information(tm: TwoModeCM) -> float:
    """Quantum mutual information between the two magnon modes (>= 0)."""
    nu_a = symplectic_eigenvalues(tm.alpha)[0]
    nu_g = symplectic_eigenvalues(tm.gamma)[0]
    if min(nu_a, nu_g) < 0.5 - PHYSICAL_TOL or not is_physical(tm.full):
        raise ValueError("unphysical two-mode covariance matrix")
    nu_m, nu_p = symplectic_eigenvalues(tm)
    info = (_entropy_f(nu_a) + _entropy_f(nu_g)
            - _entropy_f(max(nu_p, 0.5)) - _entropy_f(max(nu_m, 0.5)))
    if info < -1e-12:
        raise ValueError(f"negative mutual information {info}: unphysical input")
    return max(info, 0.0)


def logarithmic_negativity(tm: TwoModeCM) -> float:
    """E_N = max(0, -ln 2 nu~_-) with nu~_- after partial transposition."""
    if not is_physical(tm.full):
        raise ValueError("unphysical two-mode covariance matrix")
    seralian_pt = (np.linalg.det(tm.alpha) + np.linalg.det(tm.gamma)
                   - 2.0 * np.linalg.det(tm.beta))
    detV = np.linalg.det(tm.full)
    nu_minus = _nu_pm(seralian_pt, detV)[0]
    return max(0.0, float(-np.log(2.0 * nu_minus)))
