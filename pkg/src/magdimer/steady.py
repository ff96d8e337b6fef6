"""Steady states of the dimer: analytic symmetric subspace + multistart Newton.

On the symmetric subspace (equal amplitudes and phases on both sides) the
steady-state condition collapses to a cubic in the magnon occupation,

    4 K^2 n^3 + 4 Delta0 K n^2 + (Delta0^2 + kappa0^2) n - Omega^2 = 0,

with effective single-cavity parameters

    eta    = g^2 / (kappa_a^2 + (delta_a - J)^2)
    Delta0 = delta_m - eta (delta_a - J)
    kappa0 = kappa_m + eta kappa_a

(the cavity acts as an additional, Purcell-like loss channel for the magnon,
so eta kappa_a *adds* to kappa_m).  Three positive roots exist in a finite
drive window iff Delta0^2 - 3 kappa0^2 > 0 (and Delta0 K < 0).

General (symmetry-broken) fixed points are found by damped Newton iteration
on the full 8-dimensional quadrature system from a multistart seed lattice;
the per-side cubics with self-consistent effective parameters are kept only
as a residual verifier, never as a solver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SolverError
from .model import (
    FieldState,
    SystemParams,
    drift_quadratures,
    parity_vector,
    rhs_quadratures,
)

#: Branch labels used throughout (CSV class column, phase-diagram logic).
BRANCH_CLASSES = (
    "SymLow",
    "SymHigh",
    "SymMid-unstable",
    "AsymLowHigh",
    "AsymHighLow",
    "Other",
)

#: Relative stability band: |max Re eig| <= EPS_STAB_FACTOR * kappa_a -> marginal.
EPS_STAB_FACTOR = 1e-6

#: Relative state-space distance below which two roots are the same point.
DEDUP_RTOL = 1e-6

_SYM_TOL = 1e-6  # |Z| and photon mismatch threshold for "symmetric"


# ---------------------------------------------------------------------------
# Effective parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SymmetricEffectiveParams:
    """Effective single cavity-magnon parameters on the symmetric subspace."""

    eta: float
    Delta0: float     # rad/s
    kappa0: float     # rad/s


def symmetric_effective_params(params: SystemParams) -> SymmetricEffectiveParams:
    r = params.rates
    d = r.delta_a - r.J
    eta = r.g**2 / (r.kappa_a**2 + d**2)
    return SymmetricEffectiveParams(
        eta=eta,
        Delta0=r.delta_m - eta * d,
        kappa0=r.kappa_m + eta * r.kappa_a,
    )


@dataclass(frozen=True)
class AsymmetricEffectiveParams:
    """Per-side effective parameters of a (generally symmetry-broken) state.

    ``f`` is the photon amplitude ratio |a_R|/|a_L| and ``dpsi`` the photon
    phase difference psi_R - psi_L; everything else follows from eliminating
    the cavities side by side.
    """

    dpsi: float
    f: float
    Delta_tilde_L: float
    Delta_tilde_R: float
    kappa_L: float
    kappa_R: float
    eta_L: float
    eta_R: float
    Delta_tilde_m_L: float
    Delta_tilde_m_R: float
    kappa_tilde_m_L: float
    kappa_tilde_m_R: float


def asymmetric_effective_params(state: FieldState, params: SystemParams) -> AsymmetricEffectiveParams:
    if state.n_a_L <= 0 or state.n_a_R <= 0:
        raise ValueError("effective parameters need nonzero photon amplitudes")
    r = params.rates
    f = abs(state.a_R) / abs(state.a_L)
    dpsi = float(np.angle(state.a_R / state.a_L))
    dt_L = r.delta_a - r.J * f * np.cos(dpsi)
    dt_R = r.delta_a - (r.J / f) * np.cos(dpsi)
    k_L = r.kappa_a + r.J * f * np.sin(dpsi)
    k_R = r.kappa_a - (r.J / f) * np.sin(dpsi)
    eta_L = r.g**2 / (k_L**2 + dt_L**2)
    eta_R = r.g**2 / (k_R**2 + dt_R**2)
    return AsymmetricEffectiveParams(
        dpsi=dpsi,
        f=f,
        Delta_tilde_L=dt_L,
        Delta_tilde_R=dt_R,
        kappa_L=k_L,
        kappa_R=k_R,
        eta_L=eta_L,
        eta_R=eta_R,
        Delta_tilde_m_L=r.delta_m - eta_L * dt_L,
        Delta_tilde_m_R=r.delta_m - eta_R * dt_R,
        kappa_tilde_m_L=r.kappa_m + eta_L * k_L,
        kappa_tilde_m_R=r.kappa_m + eta_R * k_R,
    )


def asymmetric_cubic_coefficients(eff: AsymmetricEffectiveParams, params: SystemParams):
    """Per-side cubic coefficients (c3, c2, c1, c0) in the magnon occupation."""
    r = params.rates
    out = []
    for dm, km in ((eff.Delta_tilde_m_L, eff.kappa_tilde_m_L),
                   (eff.Delta_tilde_m_R, eff.kappa_tilde_m_R)):
        out.append((4.0 * r.K**2, 4.0 * r.K * dm, dm**2 + km**2, -r.omega**2))
    return tuple(out)


def asymmetric_cubic_residuals(state: FieldState, params: SystemParams) -> tuple[float, float]:
    """Relative residuals of the per-side cubics at the given state.

    Near zero for any true fixed point with its own self-consistent
    (dpsi, f); used as an independent verifier of the Newton solver.
    """
    eff = asymmetric_effective_params(state, params)
    coeffs = asymmetric_cubic_coefficients(eff, params)
    omega2 = params.rates.omega**2
    res = []
    for (c3, c2, c1, c0), n in zip(coeffs, (state.n_m_L, state.n_m_R)):
        res.append(abs(((c3 * n + c2) * n + c1) * n + c0) / max(omega2, 1e-300))
    return tuple(res)


# ---------------------------------------------------------------------------
# Cubic roots
# ---------------------------------------------------------------------------

def solve_cubic_positive_roots(c3: float, c2: float, c1: float, c0: float) -> list[float]:
    """All real nonnegative roots of c3 x^3 + c2 x^2 + c1 x + c0, ascending.

    Handles degenerate (quadratic/linear) leading coefficients; roots are
    polished by one Newton step and deduplicated at 1e-9 relative tolerance.
    """
    coeffs = np.array([c3, c2, c1, c0], dtype=float)
    if np.all(coeffs == 0.0):
        raise ValueError("all cubic coefficients are zero")
    lead = np.flatnonzero(coeffs)[0]
    poly = coeffs[lead:]
    if poly.size == 1:
        return []  # nonzero constant: no roots
    roots = np.roots(poly)

    scale = np.maximum(np.abs(roots), 1.0)
    real = roots[np.abs(roots.imag) <= 1e-8 * scale].real

    dp = np.polyder(poly)
    out = []
    for x in np.sort(real):
        slope = np.polyval(dp, x)
        if slope != 0.0:
            x = x - np.polyval(poly, x) / slope
        if x < 0.0:
            if x > -1e-12 * max(abs(x), 1.0):
                x = 0.0
            else:
                continue
        if out and abs(x - out[-1]) <= 1e-9 * max(abs(x), abs(out[-1]), 1e-300):
            continue
        out.append(float(x))
    return out


# ---------------------------------------------------------------------------
# Fixed points
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FixedPoint:
    """A steady state with its stability spectrum and branch classification."""

    state: FieldState
    eigenvalues: np.ndarray           # 8 complex eigenvalues of the drift matrix
    stability: str                    # "stable" | "unstable" | "marginal"
    branch_class: str                 # one of BRANCH_CLASSES
    imbalance_Z: float                # signed (n_mL - n_mR)/(n_mL + n_mR)
    diagnostic: str | None = None

    @property
    def is_stable(self) -> bool:
        return self.stability == "stable"

    @property
    def max_re_eigenvalue(self) -> float:
        return float(self.eigenvalues.real.max())


def population_imbalance(state: FieldState) -> float:
    """Signed magnon population imbalance Z = (n_mL - n_mR)/(n_mL + n_mR)."""
    total = state.n_m_L + state.n_m_R
    if total <= 0.0:
        raise ValueError("population imbalance undefined for empty magnon modes")
    return (state.n_m_L - state.n_m_R) / total


def _stability_label(eigenvalues: np.ndarray, kappa_a: float) -> str:
    eps = EPS_STAB_FACTOR * kappa_a
    top = float(np.max(eigenvalues.real))
    if abs(top) <= eps:
        return "marginal"
    return "stable" if top < 0.0 else "unstable"


def _symmetric_fold_occupations(params: SystemParams):
    """Occupations where the symmetric response folds (None if monotone)."""
    eff = symmetric_effective_params(params)
    K = params.rates.K
    if K == 0.0:
        return None
    quad = [12.0 * K**2, 8.0 * eff.Delta0 * K, eff.Delta0**2 + eff.kappa0**2]
    disc = quad[1] ** 2 - 4.0 * quad[0] * quad[2]
    if disc <= 0.0:
        return None
    roots = np.sort(np.roots(quad).real)
    if roots[0] <= 0.0:
        return None
    return float(roots[0]), float(roots[1])


def classify(fp: FixedPoint, siblings: list[FixedPoint],
             params: SystemParams | None = None) -> str:
    """Branch label of ``fp`` among the coexisting fixed points ``siblings``.

    Symmetric states are split low/mid/high against the other coexisting
    symmetric occupations (or, for a lone root, against the fold occupations
    of the symmetric cubic when ``params`` is given).  Asymmetric states are
    labelled by the sign of Z: left-heavy (Z > 0) is "AsymHighLow".
    """
    s = fp.state
    total_m = s.n_m_L + s.n_m_R
    if total_m == 0.0:
        return "SymLow"  # vacuum
    z = fp.imbalance_Z
    if abs(z) >= _SYM_TOL:
        return "AsymHighLow" if z > 0 else "AsymLowHigh"

    # photon fields must match too, else flag as ambiguous
    scale = max(abs(s.a_L), abs(s.a_R), 1e-300)
    if abs(s.a_L - s.a_R) > _SYM_TOL * scale:
        return "Other"

    n = s.n_m_L
    sym_ns = sorted(
        p.state.n_m_L for p in siblings
        if abs(p.imbalance_Z) < _SYM_TOL or (p.state.n_m_L + p.state.n_m_R) == 0.0
    )
    if len(sym_ns) >= 2:
        lo, hi = sym_ns[0], sym_ns[-1]
        if abs(n - lo) <= abs(n - hi) and n < hi * (1 - 1e-12):
            if len(sym_ns) >= 3 and n > lo * (1 + 1e-12):
                mids = sym_ns[1:-1]
                if any(abs(n - m) <= 1e-9 * max(n, m) for m in mids):
                    return "SymMid-unstable"
            return "SymLow" if abs(n - lo) <= 1e-9 * max(n, lo, 1e-300) else "SymMid-unstable"
        if abs(n - hi) <= 1e-9 * max(n, hi, 1e-300):
            return "SymHigh"
        return "SymMid-unstable"

    # lone symmetric root: place it against the fold occupations
    folds = _symmetric_fold_occupations(params) if params is not None else None
    if folds is not None:
        n_lo, n_hi = folds
        if n <= n_lo:
            return "SymLow"
        if n >= n_hi:
            return "SymHigh"
        return "SymMid-unstable"
    eff = symmetric_effective_params(params) if params is not None else None
    if eff is not None and params.rates.K != 0.0 and eff.Delta0 * params.rates.K < 0.0:
        n_inflect = -eff.Delta0 / (3.0 * params.rates.K)
        return "SymLow" if n < n_inflect else "SymHigh"
    return "SymLow"


def _make_fixed_point(x: np.ndarray, params: SystemParams) -> FixedPoint:
    state = FieldState.from_quadratures(x)
    eigs = np.linalg.eigvals(drift_quadratures(x, params.rates))
    eigs = eigs[np.lexsort((eigs.imag, eigs.real))]
    total = state.n_m_L + state.n_m_R
    z = 0.0 if total == 0.0 else (state.n_m_L - state.n_m_R) / total
    return FixedPoint(
        state=state,
        eigenvalues=eigs,
        stability=_stability_label(eigs, params.rates.kappa_a),
        branch_class="Other",  # refined against siblings below
        imbalance_Z=z,
    )


def _attach_classes(points: list[FixedPoint], params: SystemParams) -> list[FixedPoint]:
    from dataclasses import replace
    return [replace(fp, branch_class=classify(fp, points, params)) for fp in points]


def bistability_criterion(params: SystemParams) -> tuple[bool, float]:
    """Sign and margin of Delta0^2 - 3 kappa0^2 on the symmetric subspace."""
    eff = symmetric_effective_params(params)
    margin = eff.Delta0**2 - 3.0 * eff.kappa0**2
    return margin > 0.0, float(margin)


def symmetric_state_from_occupation(n_m: float, params: SystemParams) -> FieldState:
    """Full symmetric field state reconstructed from a magnon occupation root.

    The drive phase convention (Omega real positive) makes the magnon phase
    unique, and the photon amplitude follows from the linear steady-state
    relation of the cavity equation.
    """
    r = params.rates
    eff = symmetric_effective_params(params)
    m = r.omega / (eff.kappa0 + 1j * (eff.Delta0 + 2.0 * r.K * n_m))
    a = -1j * r.g * m / (r.kappa_a + 1j * (r.delta_a - r.J))
    return FieldState(a_L=a, a_R=a, m_L=m, m_R=m)


def symmetric_steady_states(params: SystemParams) -> list[FixedPoint]:
    """All steady states on the symmetric subspace, with full 8x8 stability."""
    r = params.rates
    eff = symmetric_effective_params(params)
    if r.omega == 0.0:
        roots = [0.0]
    elif r.K == 0.0:
        roots = [r.omega**2 / (eff.Delta0**2 + eff.kappa0**2)]
    else:
        roots = solve_cubic_positive_roots(
            4.0 * r.K**2,
            4.0 * eff.Delta0 * r.K,
            eff.Delta0**2 + eff.kappa0**2,
            -r.omega**2,
        )
    points = []
    for n in roots:
        state = symmetric_state_from_occupation(n, params)
        points.append(_make_fixed_point(state.to_quadratures(), params))
    return _attach_classes(points, params)


# ---------------------------------------------------------------------------
# Damped Newton, batched over seeds
# ---------------------------------------------------------------------------

NEWTON_MAX_ITER = 200
NEWTON_MAX_HALVINGS = 30


def _newton_tolerance(params: SystemParams) -> float:
    return max(1e-10 * params.rates.omega, 1e-30)


def _solve_steps(J: np.ndarray, F: np.ndarray) -> np.ndarray:
    """Newton steps -J^{-1} F for a batch, falling back to lstsq when singular."""
    try:
        return np.linalg.solve(J, -F[..., None])[..., 0]
    except np.linalg.LinAlgError:
        steps = np.empty_like(F)
        for i in range(F.shape[0]):
            try:
                steps[i] = np.linalg.solve(J[i], -F[i])
            except np.linalg.LinAlgError:
                steps[i] = np.linalg.lstsq(J[i], -F[i], rcond=None)[0]
        return steps


def newton_polish(x0: np.ndarray, params: SystemParams,
                  tol: float | None = None) -> np.ndarray | None:
    """Damped Newton from a single quadrature seed; None on non-convergence."""
    sol = _newton_batch(np.asarray(x0, float)[None, :], params, tol=tol)
    return None if sol.shape[0] == 0 else sol[0]


def _newton_batch(x0: np.ndarray, params: SystemParams,
                  tol: float | None = None) -> np.ndarray:
    """Converged endpoints of damped Newton from each seed (shape (N, 8)).

    Line search: backtracking halving (up to NEWTON_MAX_HALVINGS) on the
    residual norm.  Seeds that fail to converge are dropped silently.
    """
    rates = params.rates
    tol = _newton_tolerance(params) if tol is None else tol
    x = np.array(x0, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        res = np.linalg.norm(rhs_quadratures(x, rates), axis=-1)
    alive = np.isfinite(res)
    done = alive & (res <= tol)
    active = alive & ~done

    for _ in range(NEWTON_MAX_ITER):
        if not active.any():
            break
        xa = x[active]
        Fa = rhs_quadratures(xa, rates)
        Ja = drift_quadratures(xa, rates)
        step = _solve_steps(Ja, Fa)
        base = res[active]

        lam = np.ones(len(xa))
        accepted = np.zeros(len(xa), dtype=bool)
        best_x = xa.copy()
        best_res = base.copy()
        for _ in range(NEWTON_MAX_HALVINGS + 1):
            pending = ~accepted
            if not pending.any():
                break
            trial = xa[pending] + lam[pending, None] * step[pending]
            with np.errstate(over="ignore", invalid="ignore"):
                rtrial = np.linalg.norm(rhs_quadratures(trial, rates), axis=-1)
            ok = np.isfinite(rtrial) & (rtrial < base[pending])
            idx = np.flatnonzero(pending)
            good = idx[ok]
            best_x[good] = trial[ok]
            best_res[good] = rtrial[ok]
            accepted[good] = True
            lam[idx[~ok]] *= 0.5

        ai = np.flatnonzero(active)
        x[ai] = best_x
        res[ai] = best_res
        stalled = ai[~accepted]
        alive[stalled] = False
        just_done = ai[best_res <= tol]
        done[just_done] = True
        active = alive & ~done

    return x[done]


def _cavity_steady_given_magnons(m_L: complex, m_R: complex, params: SystemParams):
    """Exact photon amplitudes solving the (linear) cavity equations."""
    r = params.rates
    M = np.array([[1j * r.delta_a + r.kappa_a, -1j * r.J],
                  [-1j * r.J, 1j * r.delta_a + r.kappa_a]])
    b = np.array([-1j * r.g * m_L, -1j * r.g * m_R])
    a_L, a_R = np.linalg.solve(M, b)
    return a_L, a_R


def default_seeds(params: SystemParams, *, lattice: int = 9, n_phase: int = 4,
                  n_max: float | None = None, rng_seed: int = 0) -> np.ndarray:
    """Multistart seed states (N, 8) for the fixed-point search.

    Lattice of per-side magnon occupations on [0, n_max] x a shared phase
    grid, with the cavity amplitudes solved exactly for each magnon guess;
    plus the symmetric-subspace roots and asymmetric perturbations of them.
    ``n_max`` defaults to 4x the largest symmetric root.
    """
    rng = np.random.default_rng(rng_seed)
    eff = symmetric_effective_params(params)
    r = params.rates
    sym_roots = [fp.state.n_m_L for fp in symmetric_steady_states(params)]
    if n_max is None:
        n_max = 4.0 * max(max(sym_roots), 1.0)

    def seed_state(n_L, n_R, offset):
        ph_L = -np.arctan2(eff.Delta0 + 2.0 * r.K * n_L, eff.kappa0) + offset
        ph_R = -np.arctan2(eff.Delta0 + 2.0 * r.K * n_R, eff.kappa0) + offset
        m_L = np.sqrt(n_L) * np.exp(1j * ph_L)
        m_R = np.sqrt(n_R) * np.exp(1j * ph_R)
        a_L, a_R = _cavity_steady_given_magnons(m_L, m_R, params)
        return FieldState(a_L=a_L, a_R=a_R, m_L=m_L, m_R=m_R).to_quadratures()

    offsets = 2.0 * np.pi * np.arange(n_phase) / max(n_phase, 1)
    grid = np.linspace(0.0, n_max, lattice)
    jitter = 1.0 + 1e-3 * rng.standard_normal((lattice, lattice, 2))
    seeds = []
    for i, n_L in enumerate(grid):
        for k, n_R in enumerate(grid):
            for off in offsets:
                seeds.append(seed_state(n_L * jitter[i, k, 0] ** 2,
                                        n_R * jitter[i, k, 1] ** 2, off))
    for n in sym_roots:
        seeds.append(symmetric_state_from_occupation(n, params).to_quadratures())
        for eps in (0.05, 0.3):
            seeds.append(seed_state(n * (1 + eps), n * (1 - eps), 0.0))
            seeds.append(seed_state(n * (1 - eps), n * (1 + eps), 0.0))
    return np.array(seeds)


def _dedup(xs: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(xs, axis=-1)
    dist = np.linalg.norm(xs[:, None, :] - xs[None, :, :], axis=-1)
    tol = DEDUP_RTOL * np.maximum(np.maximum(norms[:, None], norms[None, :]), 1.0)
    same = dist <= tol
    kept: list[int] = []
    for i in np.argsort(norms, kind="stable"):
        if not any(same[i, j] for j in kept):
            kept.append(i)
    return xs[sorted(kept)]


def find_all_fixed_points(params: SystemParams,
                          seeds: np.ndarray | None = None,
                          *, lattice: int = 9, n_phase: int = 4,
                          rng_seed: int = 0) -> list[FixedPoint]:
    """Every distinct fixed point of the full system, classified.

    Damped Newton from a multistart seed set (see :func:`default_seeds`),
    deduplicated and closed under the left<->right parity.  The result is
    sorted by total magnon occupation, then by imbalance.
    """
    r = params.rates
    if r.omega == 0.0:
        fps = _attach_classes([_make_fixed_point(np.zeros(8), params)], params)
        return fps

    if seeds is None:
        seeds = default_seeds(params, lattice=lattice, n_phase=n_phase,
                              rng_seed=rng_seed)
    roots = _newton_batch(np.asarray(seeds, dtype=float), params)
    if roots.shape[0] == 0:
        raise SolverError("fixed-point search found no roots (expected at least one)")
    roots = _dedup(roots)

    # close the set under parity: the mirror of a root is a root
    mirrored = []
    norms = np.linalg.norm(roots, axis=-1)
    for x in roots:
        px = parity_vector(x)
        dist = np.linalg.norm(roots - px, axis=-1)
        if not np.any(dist <= DEDUP_RTOL * np.maximum(norms, 1.0)):
            polished = newton_polish(px, params)
            mirrored.append(px if polished is None else polished)
    if mirrored:
        roots = _dedup(np.vstack([roots, np.array(mirrored)]))

    points = [_make_fixed_point(x, params) for x in roots]
    points.sort(key=lambda fp: (fp.state.n_m_L + fp.state.n_m_R, fp.imbalance_Z))
    return _attach_classes(points, params)
