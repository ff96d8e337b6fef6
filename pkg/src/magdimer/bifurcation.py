"""Branch continuation, saddle-node/Hopf detection, and the phase diagram.

Branches of fixed points are traced versus drive power with pseudo-arclength
continuation (secant predictor, Newton corrector on the extended system), so
folds are rounded rather than fatal.  Saddle nodes are located from sign
changes of the parameter component of the arclength tangent, refined by
bisection and corroborated by a near-zero real drift eigenvalue.  Hopf
crossings (a complex pair crossing the imaginary axis) are flagged but not
analyzed further.

The continuation parameter is internally the drive amplitude Omega (the
equations are linear in it); powers are reported since P is proportional to
Omega^2.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .errors import SolverError
from .model import HBAR, TWO_PI, SystemParams, rhs_quadratures, drift_quadratures
from .steady import (
    FixedPoint,
    _make_fixed_point,
    classify,
    find_all_fixed_points,
)

_OMEGA_ROWS = (2, 6)  # quadrature rows carrying the sqrt(2)*Omega drive term


def power_of_omega(params: SystemParams, omega: float) -> float:
    """Drive power (W) giving drive amplitude ``omega`` at fixed nu_d, kappa_m."""
    return omega**2 * HBAR * TWO_PI * params.nu_d / (2.0 * TWO_PI * params.kappa_m)


def omega_of_power(params: SystemParams, p_d: float) -> float:
    return float(np.sqrt(2.0 * TWO_PI * params.kappa_m * p_d
                         / (HBAR * TWO_PI * params.nu_d)))


@dataclass(frozen=True)
class StepControl:
    """Adaptive pseudo-arclength step bounds (in scaled units)."""

    ds_init: float = 0.02
    ds_min: float = 1e-8
    ds_max: float = 0.05
    max_steps: int = 5000
    newton_max_iter: int = 20
    grow: float = 1.4
    shrink: float = 0.5


@dataclass(frozen=True)
class FoldPoint:
    P_d: float
    point: FixedPoint


#: |Z| below which an asymmetric branch is considered to have merged with the
#: symmetric subspace (symmetry-breaking junction); continuation stops there.
Z_JUNCTION_FLOOR = 1e-4


@dataclass(frozen=True)
class BranchCurve:
    """A continued branch: per-sample fixed points plus fold metadata."""

    P_d: np.ndarray                  # (n,) powers, W
    states: np.ndarray               # (n, 8) quadratures
    tangent_p: np.ndarray            # (n,) parameter component of the tangent
    points: tuple[FixedPoint, ...]
    family: str                      # "symmetric" | "asymmetric" | ...
    fold_points: tuple[FoldPoint, ...]
    truncated: bool
    params: SystemParams             # parameter set (P_d field is per-sample)
    scale_x: float
    scale_omega: float

    def __len__(self) -> int:
        return len(self.P_d)


def _params_at_power(params: SystemParams, p_d: float) -> SystemParams:
    return params.with_power(p_d)


class _Continuation:
    """Corrector/tangent machinery for the extended (state, Omega) system."""

    def __init__(self, params: SystemParams, scale_x: float, scale_omega: float):
        self.params = params
        self.sx = scale_x
        self.so = scale_omega

    def rates_at(self, omega: float):
        r = self.params.rates
        return replace(r, omega=omega)

    def residual(self, u: np.ndarray) -> np.ndarray:
        x = u[:8] * self.sx
        omega = u[8] * self.so
        return rhs_quadratures(x, self.rates_at(omega))

    def extended_jacobian(self, u: np.ndarray, constraint_row: np.ndarray) -> np.ndarray:
        x = u[:8] * self.sx
        omega = u[8] * self.so
        J = np.zeros((9, 9))
        J[:8, :8] = drift_quadratures(x, self.rates_at(omega)) * self.sx
        for row in _OMEGA_ROWS:
            J[row, 8] = np.sqrt(2.0) * self.so
        J[8] = constraint_row
        return J

    def _tol(self, u: np.ndarray) -> float:
        return max(1e-10 * abs(u[8]) * self.so, 1e-30)

    def correct(self, u_pred: np.ndarray, ref: np.ndarray, direction: np.ndarray,
                ds: float, max_iter: int) -> np.ndarray | None:
        """Newton on [rhs = 0, (u - ref).direction - ds = 0]."""
        u = u_pred.copy()
        for _ in range(max_iter):
            F = self.residual(u)
            c = float(np.dot(u - ref, direction) - ds)
            if np.linalg.norm(F) <= self._tol(u) and abs(c) <= 1e-10:
                return u
            J = self.extended_jacobian(u, direction)
            try:
                du = np.linalg.solve(J, -np.concatenate([F, [c]]))
            except np.linalg.LinAlgError:
                return None
            if not np.all(np.isfinite(du)):
                return None
            u = u + du
        F = self.residual(u)
        c = float(np.dot(u - ref, direction) - ds)
        if np.linalg.norm(F) <= self._tol(u) and abs(c) <= 1e-8:
            return u
        return None

    def tangent(self, u: np.ndarray, orient: np.ndarray) -> np.ndarray:
        """Unit tangent of the solution curve at u, oriented along ``orient``."""
        J = self.extended_jacobian(u, orient)
        rhs = np.zeros(9)
        rhs[8] = 1.0
        try:
            t = np.linalg.solve(J, rhs)
        except np.linalg.LinAlgError:
            t = np.linalg.lstsq(J[:8], np.zeros(8), rcond=None)[0]  # pragma: no cover
        norm = np.linalg.norm(t)
        if norm == 0.0 or not np.isfinite(norm):
            return orient
        t = t / norm
        if np.dot(t, orient) < 0.0:
            t = -t
        return t


def _branch_family(start: FixedPoint) -> str:
    return "asymmetric" if start.branch_class.startswith("Asym") else "symmetric"


def _imbalance_of(x: np.ndarray) -> float:
    n_l = 0.5 * (x[2] ** 2 + x[3] ** 2)
    n_r = 0.5 * (x[6] ** 2 + x[7] ** 2)
    total = n_l + n_r
    return 0.0 if total == 0.0 else (n_l - n_r) / total


def _fixed_point_on_branch(x: np.ndarray, params: SystemParams) -> FixedPoint:
    fp = _make_fixed_point(x, params)
    return replace(fp, branch_class=classify(fp, [], params))


def continue_branch(start: FixedPoint, params: SystemParams,
                    p_range: tuple[float, float],
                    step: StepControl | None = None,
                    direction: int | None = None) -> BranchCurve:
    """Trace the branch through ``start`` across ``p_range`` in drive power.

    ``params.P_d`` must be the power at which ``start`` is a fixed point.
    ``direction`` (+1 toward increasing power) defaults to heading for the
    far end of the range.  The curve passes through folds; if the corrector
    fails even at the minimum step the curve is truncated and flagged.
    """
    step = step or StepControl()
    p_lo, p_hi = sorted(p_range)
    p0 = params.P_d
    if not (p_lo * (1 - 1e-9) <= p0 <= p_hi * (1 + 1e-9)):
        raise ValueError("start power lies outside p_range")
    if direction is None:
        direction = +1 if (p_hi - p0) >= (p0 - p_lo) else -1

    omega0 = omega_of_power(params, p0)
    omega_hi = omega_of_power(params, p_hi)
    x0 = start.state.to_quadratures()
    scale_x = max(np.linalg.norm(x0), 1.0)
    # condition the extended space against the largest state on the branch
    from .steady import symmetric_steady_states
    try:
        tops = symmetric_steady_states(_params_at_power(params, p_hi))
        scale_x = max(scale_x, max(np.linalg.norm(fp.state.to_quadratures())
                                   for fp in tops))
    except Exception:  # pragma: no cover - scale heuristics must never abort
        pass
    scale_omega = max(omega_hi, omega0, 1.0)

    cont = _Continuation(params, scale_x, scale_omega)
    u = np.concatenate([x0 / scale_x, [omega0 / scale_omega]])

    seed_dir = np.zeros(9)
    seed_dir[8] = float(direction)
    t_hat = cont.tangent(u, seed_dir)

    P_s, X_s, T_s = [p0], [x0], [float(t_hat[8])]
    truncated = False
    ds = step.ds_init

    asymmetric = _branch_family(start) == "asymmetric"
    z_start = _imbalance_of(x0)

    for _ in range(step.max_steps):
        if asymmetric:
            # approach symmetry-breaking junctions (|Z| -> 0) with shrinking
            # steps: never let the predictor overshoot the symmetric
            # subspace, so the stop below fires before the stepper can hop
            # across the singular point onto another branch
            z_cur = _imbalance_of(u[:8] * cont.sx)
            for _ in range(60):
                z_pred = _imbalance_of((u + ds * t_hat)[:8] * cont.sx)
                if ds <= 2.0 * step.ds_min or (
                        z_pred * z_cur > 0.0 and abs(z_pred) > 0.25 * abs(z_cur)):
                    break
                ds *= 0.5
        accepted = None
        while True:
            u_pred = u + ds * t_hat
            u_new = cont.correct(u_pred, u, t_hat, ds, step.newton_max_iter)
            # distance guard: refuse corrections that jumped off the local arc
            if u_new is not None and np.linalg.norm(u_new - u) <= 3.0 * ds + 1e-12:
                accepted = u_new
                break
            ds *= step.shrink
            if ds < step.ds_min:
                break
        if accepted is None:
            truncated = True
            break
        t_new = cont.tangent(accepted, t_hat)
        u, t_hat = accepted, t_new
        ds = min(ds * step.grow, step.ds_max)

        omega = u[8] * cont.so
        p = power_of_omega(params, omega)
        P_s.append(float(p))
        X_s.append(u[:8] * cont.sx)
        T_s.append(float(t_hat[8]))
        if p > p_hi * (1 + 1e-9) or p < p_lo * (1 - 1e-9) or omega < 0.0:
            break
        if asymmetric:
            z = _imbalance_of(X_s[-1])
            # merged into the symmetric subspace at a branch point (or jumped
            # across it onto the mirror branch): the asymmetric curve ends here
            if abs(z) < Z_JUNCTION_FLOOR or z * z_start < 0.0:
                break
    else:
        truncated = True

    points = tuple(
        _fixed_point_on_branch(x, _params_at_power(params, p))
        for p, x in zip(P_s, X_s)
    )
    curve = BranchCurve(
        P_d=np.array(P_s), states=np.array(X_s), tangent_p=np.array(T_s),
        points=points, family=_branch_family(start), fold_points=(),
        truncated=truncated, params=params,
        scale_x=scale_x, scale_omega=scale_omega,
    )
    return replace(curve, fold_points=tuple(detect_saddle_node(curve)))


def merge_curves(down: BranchCurve, up: BranchCurve) -> BranchCurve:
    """Join two half-branches continued in opposite directions from one point."""
    P = np.concatenate([down.P_d[::-1], up.P_d[1:]])
    X = np.vstack([down.states[::-1], up.states[1:]])
    T = np.concatenate([-down.tangent_p[::-1], up.tangent_p[1:]])
    pts = tuple(list(down.points[::-1]) + list(up.points[1:]))
    curve = BranchCurve(
        P_d=P, states=X, tangent_p=T, points=pts, family=up.family,
        fold_points=(), truncated=down.truncated or up.truncated,
        params=up.params, scale_x=up.scale_x, scale_omega=up.scale_omega,
    )
    return replace(curve, fold_points=tuple(detect_saddle_node(curve)))


def detect_saddle_node(curve: BranchCurve, *,
                       p_rtol: float = 1e-6) -> list[FoldPoint]:
    """Folds of the curve: tangent sign changes refined by bisection.

    Each candidate must be corroborated by a drift eigenvalue with
    |Re| < 1e-3 kappa_a and negligible imaginary part, otherwise it is
    reported as an anomaly and skipped.
    """
    if len(curve) < 3:
        return []
    cont = _Continuation(curve.params, curve.scale_x, curve.scale_omega)
    kappa_a = curve.params.rates.kappa_a

    folds: list[FoldPoint] = []
    sign = np.sign(curve.tangent_p)
    # refine well below the guaranteed |dP| < p_rtol * P so the zero
    # eigenvalue at the refined point (it scales like the square root of the
    # power distance to the fold) is unambiguously resolved
    p_rtol_refined = 1e-3 * p_rtol
    for i in np.flatnonzero(sign[:-1] * sign[1:] < 0):
        u_a = np.concatenate([curve.states[i] / cont.sx,
                              [omega_of_power(curve.params, curve.P_d[i]) / cont.so]])
        u_b = np.concatenate([curve.states[i + 1] / cont.sx,
                              [omega_of_power(curve.params, curve.P_d[i + 1]) / cont.so]])
        s_a = sign[i]
        p_a, p_b = curve.P_d[i], curve.P_d[i + 1]
        # bisection in arclength from the a-side, stepping along the curve
        # with the pseudo-arclength corrector (robust through the fold)
        for _ in range(120):
            if abs(p_a - p_b) <= p_rtol_refined * max(abs(p_a), abs(p_b)):
                break
            chord = np.linalg.norm(u_b - u_a)
            if chord == 0.0:
                break
            t_a = cont.tangent(u_a, u_b - u_a)
            ds = 0.5 * chord
            u_new = None
            while ds > 1e-6 * chord:
                cand = cont.correct(u_a + ds * t_a, u_a, t_a, ds, 30)
                if cand is not None and np.linalg.norm(cand - u_a) <= 3.0 * ds:
                    u_new = cand
                    break
                ds *= 0.5
            if u_new is None:
                break
            t_new = cont.tangent(u_new, u_b - u_a)
            p_new = power_of_omega(curve.params, u_new[8] * cont.so)
            if np.sign(t_new[8]) == s_a:
                u_a, p_a = u_new, p_new
            else:
                u_b, p_b = u_new, p_new
        u_fold = 0.5 * (u_a + u_b)
        x_fold = u_fold[:8] * cont.sx
        p_fold = power_of_omega(curve.params, u_fold[8] * cont.so)
        fp = _fixed_point_on_branch(x_fold, _params_at_power(curve.params, p_fold))
        eigs = fp.eigenvalues
        near_zero = eigs[np.argmin(np.abs(eigs.real))]
        if not (abs(near_zero.real) < 1e-3 * kappa_a
                and abs(near_zero.imag) < 1e-3 * kappa_a):
            warnings.warn(
                f"tangent sign change at P={p_fold:.6e} W without a real "
                "eigenvalue crossing; flagged as anomaly, not a fold"
            )
            continue
        if (curve.family == "asymmetric"
                and abs(fp.imbalance_Z) < 10.0 * Z_JUNCTION_FLOOR):
            warnings.warn(
                f"turning point at P={p_fold:.6e} W sits on the symmetric "
                "subspace: symmetry-breaking branch point, not a saddle-node"
            )
            continue
        # collapse repeated detections of the same fold (stepper wobble)
        if folds and abs(folds[-1].P_d - p_fold) <= 1e3 * p_rtol * max(p_fold, 1e-30):
            continue
        folds.append(FoldPoint(P_d=float(p_fold), point=fp))
    return folds


def hopf_crossings(p_values: np.ndarray, eigenvalue_sets: list[np.ndarray],
                   *, im_floor: float) -> list[tuple[float, int]]:
    """Parameter values where a complex pair's real part crosses zero.

    Returns (interpolated parameter, index of the left sample) tuples; shared
    by the branch-level detector and synthetic tests.
    """
    def leading_complex_re(eigs: np.ndarray) -> float:
        cplx = eigs[np.abs(eigs.imag) > im_floor]
        return float(cplx.real.max()) if cplx.size else -np.inf

    res = [leading_complex_re(e) for e in eigenvalue_sets]
    out = []
    for i in range(len(res) - 1):
        r0, r1 = res[i], res[i + 1]
        if not (np.isfinite(r0) and np.isfinite(r1)):
            continue
        if r0 == 0.0 or r0 * r1 < 0.0:
            frac = r0 / (r0 - r1) if r1 != r0 else 0.0
            out.append((float(p_values[i] + frac * (p_values[i + 1] - p_values[i])), i))
    return out


def detect_hopf(curve: BranchCurve) -> list[tuple[float, FixedPoint]]:
    """Flag Hopf crossings along the curve (detection only, no analysis)."""
    if len(curve) < 3:
        return []
    im_floor = 1e-3 * curve.params.rates.kappa_a
    eigsets = [fp.eigenvalues for fp in curve.points]
    return [
        (p, curve.points[i])
        for p, i in hopf_crossings(curve.P_d, eigsets, im_floor=im_floor)
    ]


# ---------------------------------------------------------------------------
# Phase diagram
# ---------------------------------------------------------------------------

REGIONS = ("1S", "2S", "2S-2AS")


@dataclass(frozen=True)
class PhasePoint:
    P_d: float
    J: float                  # multiple of kappa_a
    n_stable: int
    region: str               # "1S" | "2S" | "2S-2AS" | "other" | "invalid"
    hopf_flag: bool
    max_abs_Z: float
    n_sym_roots: int = 0      # coexisting symmetric-subspace solutions
    diagnostic: str | None = None


@dataclass(frozen=True)
class PhaseDiagram:
    P_grid: np.ndarray
    J_grid: np.ndarray
    points: tuple[PhasePoint, ...]   # J-major, P-minor ordering

    def point(self, i_j: int, i_p: int) -> PhasePoint:
        return self.points[i_j * len(self.P_grid) + i_p]


def _classify_cell(params: SystemParams, rng_seed: int) -> PhasePoint:
    eps = 1e-6 * params.rates.kappa_a
    try:
        fps = find_all_fixed_points(params, rng_seed=rng_seed)
    except SolverError as exc:
        return PhasePoint(P_d=params.P_d, J=params.J, n_stable=0,
                          region="invalid", hopf_flag=False, max_abs_Z=0.0,
                          diagnostic=str(exc))
    stable = [fp for fp in fps if fp.is_stable]
    asym = [fp for fp in stable if fp.branch_class.startswith("Asym")]
    n_stable = len(stable)
    n_sym_roots = sum(1 for fp in fps if abs(fp.imbalance_Z) < 1e-6)
    if n_stable == 1 and not asym:
        region = "1S"
    elif n_stable == 2 and not asym:
        region = "2S"
    elif n_stable == 4 and len(asym) == 2:
        region = "2S-2AS"
    else:
        region = "other"

    hopf = False
    for fp in fps:
        lead = fp.eigenvalues[np.argmax(fp.eigenvalues.real)]
        if lead.real > eps and abs(lead.imag) > eps:
            hopf = True
            break
    max_z = max((abs(fp.imbalance_Z) for fp in asym), default=0.0)
    diag = None if region in REGIONS else f"{n_stable} stable, {len(asym)} asymmetric"
    return PhasePoint(P_d=params.P_d, J=params.J, n_stable=n_stable,
                      region=region, hopf_flag=hopf, max_abs_Z=max_z,
                      n_sym_roots=n_sym_roots, diagnostic=diag)


def _phase_row(args) -> list[PhasePoint]:
    params_base, j, p_grid, rng_seed = args
    row_params = params_base.replace(J=float(j), J_Hz=None)
    return [_classify_cell(row_params.with_power(float(p)), rng_seed)
            for p in p_grid]


def bistable_boundaries(diagram: PhaseDiagram, params_base: SystemParams,
                        ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-row powers of the symmetric bistability window edges.

    The grid brackets each edge (transitions of the symmetric-root count);
    bisection on the symmetric-subspace root count then refines the fold
    power well below the cell size. Rows without a tristable stretch carry
    NaN. Returns (J_grid, lower_edge_W, upper_edge_W).
    """
    from .steady import symmetric_steady_states

    def n_roots(params, p_d: float) -> int:
        return len(symmetric_steady_states(params.with_power(p_d)))

    def refine(params, p_outside: float, p_inside: float) -> float:
        for _ in range(50):
            mid = 0.5 * (p_outside + p_inside)
            if n_roots(params, mid) >= 3:
                p_inside = mid
            else:
                p_outside = mid
            if abs(p_inside - p_outside) <= 1e-9 * p_inside:
                break
        return 0.5 * (p_outside + p_inside)

    n_p = len(diagram.P_grid)
    lower, upper = [], []
    for i_j, j in enumerate(diagram.J_grid):
        row = diagram.points[i_j * n_p:(i_j + 1) * n_p]
        params = params_base.replace(J=float(j), J_Hz=None)
        inside = [pt.P_d for pt in row if pt.n_sym_roots >= 3]
        if not inside:
            lower.append(np.nan)
            upper.append(np.nan)
            continue
        step = diagram.P_grid[1] - diagram.P_grid[0] if n_p > 1 else 0.0
        lo, hi = min(inside), max(inside)
        lower.append(refine(params, lo - step, lo) if lo > diagram.P_grid[0]
                     else lo)
        upper.append(refine(params, hi + step, hi) if hi < diagram.P_grid[-1]
                     else hi)
    return np.asarray(diagram.J_grid), np.array(lower), np.array(upper)


def resolve_workers(workers: int | None) -> int:
    """Worker count, honoring the MAGDIMER_THREADS environment cap."""
    cap = os.environ.get("MAGDIMER_THREADS")
    cap = int(cap) if cap else (os.cpu_count() or 1)
    if workers is None or workers <= 0:
        workers = cap
    return max(1, min(workers, cap))


def sweep_phase_diagram(params_base: SystemParams, P_grid, J_grid,
                        *, workers: int | None = None,
                        rng_seed: int = 0) -> PhaseDiagram:
    """Region labels, stability counts and |Z| over a (P_d, J) grid.

    Cells are independent; rows (fixed J) are distributed over a process
    pool.  Failed cells are marked "invalid" and the sweep continues.
    """
    P_grid = np.asarray(P_grid, dtype=float)
    J_grid = np.asarray(J_grid, dtype=float)
    if P_grid.size == 0 or J_grid.size == 0:
        raise ValueError("grids must be nonempty")
    if np.any(np.diff(P_grid) <= 0) or np.any(np.diff(J_grid) < 0):
        raise ValueError("grids must be sorted ascending")

    tasks = [(params_base, j, P_grid, rng_seed) for j in J_grid]
    n_workers = resolve_workers(workers)
    if n_workers > 1 and len(tasks) > 1:
        import multiprocessing

        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(processes=min(n_workers, len(tasks))) as pool:
            rows = pool.map(_phase_row, tasks)
    else:
        rows = [_phase_row(t) for t in tasks]
    points = tuple(pt for row in rows for pt in row)
    return PhaseDiagram(P_grid=P_grid, J_grid=J_grid, points=points)
