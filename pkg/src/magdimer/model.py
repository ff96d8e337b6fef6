"""Driven cavity-magnon dimer: parameters, equations of motion, linearization.

Two microwave cavities (bosonic amplitudes ``a_L``, ``a_R``) are coupled by
photon tunneling ``J``; each hosts a magnon mode (``m_L``, ``m_R``) coupled to
its cavity with strength ``g`` and carrying a Kerr self-interaction ``K``.
Both magnons are driven by identical coherent tones of power ``P_d``.

Conventions used everywhere in this package:

* Configuration frequencies are plain (divided-by-2pi) values in Hz; all
  internal rates are angular (rad/s).  The conversion happens exactly once,
  in :meth:`SystemParams.rates`.
* Quadratures are ``X = sqrt(2) Re(amp)``, ``Y = sqrt(2) Im(amp)``, so the
  vacuum variance is 1/2.  The 8-component quadrature vector is ordered
  ``(X_aL, Y_aL, X_mL, Y_mL, X_aR, Y_aR, X_mR, Y_mR)`` and this ordering is
  shared by the drift matrix, the diffusion matrix and covariance matrices.
* The drive amplitude is taken real and positive, which fixes the global
  phase of every steady state.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import cached_property

import numpy as np

HBAR = 1.054571817e-34  # J s (CODATA)
TWO_PI = 2.0 * np.pi

#: Quadrature ordering shared by every 8x8 matrix in the package.
QUADRATURE_ORDER = ("X_aL", "Y_aL", "X_mL", "Y_mL", "X_aR", "Y_aR", "X_mR", "Y_mR")

#: Index permutation implementing the left<->right swap on quadrature vectors.
PARITY_PERMUTATION = np.array([4, 5, 6, 7, 0, 1, 2, 3])


@dataclass(frozen=True)
class AngularRates:
    """All model rates in angular units (rad/s), plus the drive amplitude.

    This is the derived-parameter record every numerical routine consumes;
    it is computed once per :class:`SystemParams` and cached.
    """

    delta_a: float
    delta_m: float
    kappa_a: float
    kappa_m: float
    g: float
    K: float
    J: float
    omega: float  # drive amplitude, s^-1


@dataclass(frozen=True)
class SystemParams:
    """Physical constants and drive settings of the dimer.

    Frequencies ``nu_*`` and rates ``kappa_*``, ``g``, ``K`` are given as
    omega/2pi values in Hz (the units lab settings are quoted in).  ``J`` is
    dimensionless, a multiple of ``kappa_a``; set ``J_Hz`` to override it
    with an absolute value in Hz.  ``P_d`` is the drive power in W.
    """

    nu_a: float
    nu_m: float
    nu_d: float
    kappa_a: float
    kappa_m: float
    g: float
    J: float
    K: float
    P_d: float
    J_Hz: float | None = None

    def __post_init__(self):
        if not (self.kappa_a > 0 and self.kappa_m > 0):
            raise ValueError("loss rates kappa_a, kappa_m must be positive")
        if self.g < 0:
            raise ValueError("coupling g must be nonnegative")
        if self.J < 0 or (self.J_Hz is not None and self.J_Hz < 0):
            raise ValueError("tunneling J must be nonnegative")
        if self.P_d < 0:
            raise ValueError("drive power P_d must be nonnegative")

    @cached_property
    def rates(self) -> AngularRates:
        """Angular-unit rates (rad/s) with the drive amplitude attached."""
        j_hz = self.J * self.kappa_a if self.J_Hz is None else self.J_Hz
        return AngularRates(
            delta_a=TWO_PI * (self.nu_a - self.nu_d),
            delta_m=TWO_PI * (self.nu_m - self.nu_d),
            kappa_a=TWO_PI * self.kappa_a,
            kappa_m=TWO_PI * self.kappa_m,
            g=TWO_PI * self.g,
            K=TWO_PI * self.K,
            J=TWO_PI * j_hz,
            omega=drive_amplitude(self),
        )

    def replace(self, **changes) -> "SystemParams":
        return dataclasses.replace(self, **changes)

    def with_power(self, p_d: float) -> "SystemParams":
        return self.replace(P_d=p_d)


def reference_params(p_d: float = 30e-3) -> SystemParams:
    """Canonical working point used throughout the tests and default config.

    nu_a = 10 GHz, kappa_a = kappa_m = 1 MHz, Delta_a = Delta_m = -2pi*11 MHz,
    g = 7 MHz, K = 9 nHz, J = 0.8 kappa_a; drive power ``p_d`` in W.  The
    dimer is multistable here (two symmetric plus two symmetry-broken
    attractors at 30 mW).
    """
    return SystemParams(
        nu_a=10e9,
        nu_m=10e9,
        nu_d=10.011e9,
        kappa_a=1e6,
        kappa_m=1e6,
        g=7e6,
        J=0.8,
        K=9e-9,
        P_d=p_d,
    )


def drive_amplitude(params: SystemParams) -> float:
    """Drive amplitude Omega = sqrt(2 kappa_m P_d / (hbar omega_d)) in s^-1."""
    if params.nu_d <= 0:
        raise ValueError("drive frequency nu_d must be positive")
    kappa_m = TWO_PI * params.kappa_m
    omega_d = TWO_PI * params.nu_d
    return float(np.sqrt(2.0 * kappa_m * params.P_d / (HBAR * omega_d)))


def _wrap_phase(phi):
    """Map angles to (-pi, pi]."""
    out = np.arctan2(np.sin(phi), np.cos(phi))
    return np.where(np.isclose(out, -np.pi), np.pi, out)


@dataclass(frozen=True)
class FieldState:
    """The four complex mode amplitudes (square roots of excitation number)."""

    a_L: complex
    a_R: complex
    m_L: complex
    m_R: complex

    # --- occupations and phases -------------------------------------------
    @property
    def n_a_L(self) -> float:
        return abs(self.a_L) ** 2

    @property
    def n_a_R(self) -> float:
        return abs(self.a_R) ** 2

    @property
    def n_m_L(self) -> float:
        return abs(self.m_L) ** 2

    @property
    def n_m_R(self) -> float:
        return abs(self.m_R) ** 2

    @property
    def psi_L(self) -> float:
        return float(_wrap_phase(np.angle(self.a_L)))

    @property
    def psi_R(self) -> float:
        return float(_wrap_phase(np.angle(self.a_R)))

    @property
    def phi_L(self) -> float:
        return float(_wrap_phase(np.angle(self.m_L)))

    @property
    def phi_R(self) -> float:
        return float(_wrap_phase(np.angle(self.m_R)))

    # --- constructors / converters ----------------------------------------
    @classmethod
    def from_polar(cls, n_a_L, n_m_L, psi_L, phi_L, n_a_R, n_m_R, psi_R, phi_R) -> "FieldState":
        if min(n_a_L, n_m_L, n_a_R, n_m_R) < 0:
            raise ValueError("occupations must be nonnegative")
        return cls(
            a_L=np.sqrt(n_a_L) * np.exp(1j * psi_L),
            a_R=np.sqrt(n_a_R) * np.exp(1j * psi_R),
            m_L=np.sqrt(n_m_L) * np.exp(1j * phi_L),
            m_R=np.sqrt(n_m_R) * np.exp(1j * phi_R),
        )

    @classmethod
    def from_quadratures(cls, x) -> "FieldState":
        x = np.asarray(x, dtype=float)
        if x.shape != (8,):
            raise ValueError(f"expected 8 quadratures, got shape {x.shape}")
        amps = (x[0::2] + 1j * x[1::2]) / np.sqrt(2.0)
        return cls(a_L=amps[0], m_L=amps[1], a_R=amps[2], m_R=amps[3])

    def to_quadratures(self) -> np.ndarray:
        amps = np.array([self.a_L, self.m_L, self.a_R, self.m_R])
        x = np.empty(8)
        x[0::2] = np.sqrt(2.0) * amps.real
        x[1::2] = np.sqrt(2.0) * amps.imag
        return x

    def to_polar(self) -> np.ndarray:
        """(n_aL, n_mL, psi_L, phi_L, n_aR, n_mR, psi_R, phi_R)."""
        return np.array(
            [self.n_a_L, self.n_m_L, self.psi_L, self.phi_L,
             self.n_a_R, self.n_m_R, self.psi_R, self.phi_R]
        )

    def parity(self) -> "FieldState":
        """Image under the left<->right exchange."""
        return FieldState(a_L=self.a_R, a_R=self.a_L, m_L=self.m_R, m_R=self.m_L)

    def isfinite(self) -> bool:
        return bool(np.all(np.isfinite([self.a_L, self.a_R, self.m_L, self.m_R])))


def parity_vector(x: np.ndarray) -> np.ndarray:
    """Left<->right swap acting on (batched) quadrature vectors."""
    return np.asarray(x)[..., PARITY_PERMUTATION]


# ---------------------------------------------------------------------------
# Equations of motion
# ---------------------------------------------------------------------------

def rhs_quadratures(x, rates: AngularRates) -> np.ndarray:
    """Time derivative of (batched) quadrature vectors x with shape (..., 8)."""
    x = np.asarray(x, dtype=float)
    X_aL, Y_aL, X_mL, Y_mL, X_aR, Y_aR, X_mR, Y_mR = np.moveaxis(x, -1, 0)
    r = rates
    n_mL = 0.5 * (X_mL**2 + Y_mL**2)
    n_mR = 0.5 * (X_mR**2 + Y_mR**2)
    dL = r.delta_m + 2.0 * r.K * n_mL
    dR = r.delta_m + 2.0 * r.K * n_mR
    drive = np.sqrt(2.0) * r.omega
    out = np.stack(
        [
            -r.kappa_a * X_aL + r.delta_a * Y_aL + r.g * Y_mL - r.J * Y_aR,
            -r.delta_a * X_aL - r.kappa_a * Y_aL - r.g * X_mL + r.J * X_aR,
            -r.kappa_m * X_mL + dL * Y_mL + r.g * Y_aL + drive,
            -dL * X_mL - r.kappa_m * Y_mL - r.g * X_aL,
            -r.kappa_a * X_aR + r.delta_a * Y_aR + r.g * Y_mR - r.J * Y_aL,
            -r.delta_a * X_aR - r.kappa_a * Y_aR - r.g * X_mR + r.J * X_aL,
            -r.kappa_m * X_mR + dR * Y_mR + r.g * Y_aR + drive,
            -dR * X_mR - r.kappa_m * Y_mR - r.g * X_aR,
        ],
        axis=-1,
    )
    return out


def eom_rhs(state: FieldState, params: SystemParams) -> FieldState:
    """Complex time derivatives (da_L/dt, ...) of the semiclassical equations."""
    if not state.isfinite():
        raise ValueError("non-finite field state")
    r = params.rates
    a_L, a_R, m_L, m_R = state.a_L, state.a_R, state.m_L, state.m_R
    da_L = -(1j * r.delta_a + r.kappa_a) * a_L - 1j * r.g * m_L + 1j * r.J * a_R
    da_R = -(1j * r.delta_a + r.kappa_a) * a_R - 1j * r.g * m_R + 1j * r.J * a_L
    dm_L = (-(1j * r.delta_m + r.kappa_m) * m_L - 1j * r.g * a_L
            - 2j * r.K * abs(m_L) ** 2 * m_L + r.omega)
    dm_R = (-(1j * r.delta_m + r.kappa_m) * m_R - 1j * r.g * a_R
            - 2j * r.K * abs(m_R) ** 2 * m_R + r.omega)
    return FieldState(a_L=da_L, a_R=da_R, m_L=dm_L, m_R=dm_R)


def amplitude_phase_rhs(state: FieldState, params: SystemParams) -> np.ndarray:
    """Occupation/phase form of the equations of motion.

    Returns ``(dn_aL, dn_mL, dpsi_L, dphi_L, dn_aR, dn_mR, dpsi_R, dphi_R)``
    where ``n`` are occupations and ``psi``/``phi`` the photon/magnon phases.
    Singular at zero amplitude; callers must use the Cartesian form there.

    The occupation rates are the exact chain-rule derivatives of ``|amp|^2``,
    e.g. ``dn_a = -2 kappa_a n_a - 2 g sqrt(n_a n_m) sin(psi - phi) - ...``;
    the phase rates include the Kerr-shifted detuning
    ``delta_m' = delta_m + 2 K n_m``.
    """
    pol = state.to_polar()
    n_aL, n_mL, psi_L, phi_L, n_aR, n_mR, psi_R, phi_R = pol
    if min(n_aL, n_mL, n_aR, n_mR) <= 0.0:
        raise ValueError("polar form is singular at zero amplitude")
    r = params.rates

    def one_side(n_a, n_m, psi, phi, n_a_other, psi_other):
        dpm = psi - phi
        dpp = psi_other - psi
        dn_a = (-2.0 * r.kappa_a * n_a
                - 2.0 * r.g * np.sqrt(n_a * n_m) * np.sin(dpm)
                - 2.0 * r.J * np.sqrt(n_a * n_a_other) * np.sin(dpp))
        dn_m = (-2.0 * r.kappa_m * n_m
                + 2.0 * r.g * np.sqrt(n_a * n_m) * np.sin(dpm)
                + 2.0 * r.omega * np.sqrt(n_m) * np.cos(phi))
        dpsi = (-r.delta_a
                - r.g * np.sqrt(n_m / n_a) * np.cos(dpm)
                + r.J * np.sqrt(n_a_other / n_a) * np.cos(dpp))
        dphi = (-(r.delta_m + 2.0 * r.K * n_m)
                - r.g * np.sqrt(n_a / n_m) * np.cos(dpm)
                - r.omega * np.sin(phi) / np.sqrt(n_m))
        return dn_a, dn_m, dpsi, dphi

    L = one_side(n_aL, n_mL, psi_L, phi_L, n_aR, psi_R)
    R = one_side(n_aR, n_mR, psi_R, phi_R, n_aL, psi_L)
    return np.array([*L, *R])


# ---------------------------------------------------------------------------
# Linearization: drift and diffusion
# ---------------------------------------------------------------------------

def drift_quadratures(x, rates: AngularRates) -> np.ndarray:
    """Jacobian of :func:`rhs_quadratures` for (batched) x, shape (..., 8, 8)."""
    x = np.asarray(x, dtype=float)
    batch = x.shape[:-1]
    A = np.zeros(batch + (8, 8))
    r = rates

    for side, off in ((0, 0), (1, 4)):
        X_m = x[..., off + 2]
        Y_m = x[..., off + 3]
        n_m = 0.5 * (X_m**2 + Y_m**2)
        # Kerr-dressed detunings: dpp = delta_m'' = delta_m + 4 K n_m,
        # dk = 2 K <m>^2 split into real/imag parts.
        dpp = r.delta_m + 4.0 * r.K * n_m
        m2_re = 0.5 * (X_m**2 - Y_m**2)
        m2_im = X_m * Y_m
        dk_x = 2.0 * r.K * m2_re
        dk_y = 2.0 * r.K * m2_im

        A[..., off + 0, off + 0] = -r.kappa_a
        A[..., off + 0, off + 1] = r.delta_a
        A[..., off + 0, off + 3] = r.g
        A[..., off + 1, off + 0] = -r.delta_a
        A[..., off + 1, off + 1] = -r.kappa_a
        A[..., off + 1, off + 2] = -r.g
        A[..., off + 2, off + 1] = r.g
        A[..., off + 2, off + 2] = -r.kappa_m + dk_y
        A[..., off + 2, off + 3] = dpp - dk_x
        A[..., off + 3, off + 0] = -r.g
        A[..., off + 3, off + 2] = -(dpp + dk_x)
        A[..., off + 3, off + 3] = -r.kappa_m - dk_y

    # photon tunneling couples only the photonic quadratures of opposite sides
    A[..., 0, 5] = -r.J
    A[..., 1, 4] = r.J
    A[..., 4, 1] = -r.J
    A[..., 5, 0] = r.J
    return A


def drift_matrix(fixed_point: FieldState, params: SystemParams) -> np.ndarray:
    """8x8 drift matrix (linearized dynamics) at the given state."""
    x = fixed_point.to_quadratures()
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite field state")
    return drift_quadratures(x, params.rates)


def diffusion_matrix(params: SystemParams) -> np.ndarray:
    """Diagonal diffusion matrix diag(kappa_a, kappa_a, kappa_m, kappa_m, ...)."""
    r = params.rates
    return np.diag([r.kappa_a, r.kappa_a, r.kappa_m, r.kappa_m] * 2).astype(float)
