"""Time-domain integration, quench protocols and critical slowing down.

Integration uses an adaptive embedded Runge-Kutta pair (Dormand-Prince 5(4))
on the 8 real quadratures.  Quenches settle the system at an initial drive
power, switch the drive instantaneously, and measure the relaxation time to
the independently computed post-quench fixed point; near a saddle-node the
relaxation time grows as a power law in the distance to the critical power.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp

from .errors import SolverError
from .model import FieldState, SystemParams, rhs_quadratures
from .steady import FixedPoint, find_all_fixed_points

DEFAULT_RTOL = 1e-9

#: Defaults for quench protocols, in units of 1/kappa_a.
DEFAULT_T_SETTLE = 200.0
DEFAULT_T_MAX = 1e5
DEFAULT_DWELL = 10.0
DEFAULT_EPS_REL = 1e-4


@dataclass(frozen=True)
class Trajectory:
    """Sampled solution of the semiclassical equations.

    ``segments`` records (start_time, params) for each constant-parameter
    stretch; a plain integration has one segment, a quench has two.
    """

    t: np.ndarray               # (N,) strictly increasing times, s
    x: np.ndarray               # (N, 8) quadrature samples
    segments: tuple[tuple[float, SystemParams], ...]

    def state(self, i: int) -> FieldState:
        return FieldState.from_quadratures(self.x[i])

    @property
    def final_state(self) -> FieldState:
        return self.state(len(self.t) - 1)

    @property
    def n_m_L(self) -> np.ndarray:
        return 0.5 * (self.x[:, 2] ** 2 + self.x[:, 3] ** 2)

    @property
    def n_m_R(self) -> np.ndarray:
        return 0.5 * (self.x[:, 6] ** 2 + self.x[:, 7] ** 2)

    @property
    def amplitudes(self) -> np.ndarray:
        """(N, 4) complex array of (a_L, m_L, a_R, m_R)."""
        return (self.x[:, 0::2] + 1j * self.x[:, 1::2]) / np.sqrt(2.0)


@dataclass(frozen=True)
class QuenchProtocol:
    """Instantaneous drive-power switch P_init -> P_final."""

    P_init: float                       # W
    P_final: float                      # W
    t_settle: float | None = None       # s; default 200/kappa_a
    t_max: float | None = None          # s; default 1e5/kappa_a
    eps_rel: float = DEFAULT_EPS_REL    # convergence ball, relative


@dataclass(frozen=True)
class RelaxationResult:
    tau: float                  # s, measured from the quench instant
    final_fp: FixedPoint | None
    converged: bool


def _as_quadratures(initial) -> np.ndarray:
    if isinstance(initial, FieldState):
        return initial.to_quadratures()
    x = np.asarray(initial, dtype=float)
    if x.shape != (8,):
        raise ValueError("initial state must be a FieldState or an 8-vector")
    return x


def integrate(initial, params: SystemParams, t_span: tuple[float, float],
              *, rtol: float = DEFAULT_RTOL, atol: float | None = None,
              t_eval: np.ndarray | None = None) -> Trajectory:
    """Adaptive RK45 integration of the equations of motion.

    ``atol`` defaults to ``rtol`` times the initial amplitude scale.  With
    ``t_eval=None`` the solver's own accepted steps are returned.
    """
    x0 = _as_quadratures(initial)
    if not np.all(np.isfinite(x0)):
        raise ValueError("non-finite initial state")
    if rtol <= 0:
        raise ValueError("tolerance must be positive")
    if atol is None:
        atol = rtol * max(float(np.max(np.abs(x0))), 1.0)
    rates = params.rates

    def rhs(_t, y):
        # rejected trial steps may transiently overflow; the error control
        # discards them, so silence the spurious warnings
        with np.errstate(over="ignore", invalid="ignore"):
            return rhs_quadratures(y, rates)

    sol = solve_ivp(
        rhs, t_span, x0, method="RK45", rtol=rtol, atol=atol, t_eval=t_eval,
    )
    if not sol.success:
        raise SolverError(f"integration failed: {sol.message} (t={sol.t[-1]:.3e})")
    return Trajectory(t=sol.t, x=sol.y.T, segments=((t_span[0], params),))


def relaxation_time(traj: Trajectory, target: FixedPoint, eps_rel: float) -> float:
    """First time after the quench from which the trajectory stays inside the
    eps_rel-ball around ``target`` over the whole recorded horizon.

    The entry instant is refined by linear interpolation of the distance
    between the two straddling samples.  Raises if the ball is never entered
    or is left again before the end of the record.
    """
    t_quench = traj.segments[-1][0]
    xt = target.state.to_quadratures()
    radius = eps_rel * max(float(np.linalg.norm(xt)), 1.0)

    after = traj.t >= t_quench
    t = traj.t[after]
    dist = np.linalg.norm(traj.x[after] - xt, axis=1)
    inside = dist <= radius
    if not inside[-1]:
        raise ValueError("trajectory does not end inside the target ball")
    # last sample outside the ball marks the start of the final inside-run
    outside_idx = np.flatnonzero(~inside)
    if outside_idx.size == 0:
        return 0.0
    i = outside_idx[-1]
    d0, d1 = dist[i], dist[i + 1]
    frac = (d0 - radius) / (d0 - d1) if d1 != d0 else 1.0
    t_enter = t[i] + frac * (t[i + 1] - t[i])
    return float(max(t_enter - t_quench, 0.0))


def _settle(initial, params: SystemParams, t_settle: float, rtol: float) -> Trajectory:
    traj = integrate(initial, params, (0.0, t_settle), rtol=rtol)
    x_end = traj.x[-1]
    res = np.linalg.norm(rhs_quadratures(x_end, params.rates))
    bound = 1e-6 * max(np.linalg.norm(x_end), 1.0) * params.rates.kappa_a
    if res > bound:
        raise SolverError(
            f"pre-quench state not settled: residual {res:.3e} > {bound:.3e}; "
            "increase t_settle"
        )
    return traj


def simulate_quench(protocol: QuenchProtocol, params_base: SystemParams,
                    *, initial=None, rtol: float = DEFAULT_RTOL,
                    samples_per_dwell: int = 40,
                    ) -> tuple[Trajectory, RelaxationResult]:
    """Settle at P_init, switch instantaneously to P_final, relax.

    Integration proceeds in dwell-window chunks and stops as soon as the
    state has remained inside the eps_rel-ball of one of the post-quench
    stable fixed points (computed independently by the steady-state module)
    for a full dwell window.
    """
    if protocol.P_init <= 0 or protocol.P_final <= 0:
        raise ValueError("quench powers must be positive")
    params_pre = params_base.with_power(protocol.P_init)
    params_post = params_base.with_power(protocol.P_final)
    kappa = params_base.rates.kappa_a
    t_settle = protocol.t_settle if protocol.t_settle is not None else DEFAULT_T_SETTLE / kappa
    t_max = protocol.t_max if protocol.t_max is not None else DEFAULT_T_MAX / kappa
    dwell = DEFAULT_DWELL / kappa

    x0 = np.zeros(8) if initial is None else _as_quadratures(initial)
    pre = _settle(x0, params_pre, t_settle, rtol)

    stable = [fp for fp in find_all_fixed_points(params_post) if fp.is_stable]
    targets = [(fp, fp.state.to_quadratures()) for fp in stable]
    radii = [protocol.eps_rel * max(np.linalg.norm(xt), 1.0) for _, xt in targets]

    ts = [pre.t]
    xs = [pre.x]
    t = t_settle
    x = pre.x[-1]
    rates = params_post.rates
    final_fp = None
    inside_since: dict[int, float] = {}

    while t < t_settle + t_max and final_fp is None:
        t_next = min(t + dwell, t_settle + t_max)
        grid = np.linspace(t, t_next, samples_per_dwell + 1)
        chunk = integrate(x, params_post, (t, t_next), rtol=rtol, t_eval=grid)
        ts.append(chunk.t[1:])
        xs.append(chunk.x[1:])
        for k, (fp, xt) in enumerate(targets):
            dist = np.linalg.norm(chunk.x - xt, axis=1)
            if np.all(dist <= radii[k]):
                start = inside_since.setdefault(k, t)
                if t_next - start >= dwell - 1e-12:
                    final_fp = fp
            else:
                inside_since.pop(k, None)
        t = t_next
        x = chunk.x[-1]

    traj = Trajectory(
        t=np.concatenate(ts), x=np.concatenate(xs),
        segments=((0.0, params_pre), (t_settle, params_post)),
    )
    if final_fp is None:
        return traj, RelaxationResult(tau=t_max, final_fp=None, converged=False)
    tau = relaxation_time(traj, final_fp, protocol.eps_rel)
    return traj, RelaxationResult(tau=tau, final_fp=final_fp, converged=True)


@dataclass(frozen=True)
class PowerLawFit:
    exponent: float
    uncertainty: float      # standard error of the exponent
    r_squared: float
    log_prefactor: float


def csd_exponent_fit(quench_results: list[tuple[float, float]]) -> PowerLawFit:
    """Least-squares fit of log tau against log |P - P_c|.

    ``quench_results`` holds (delta, tau) pairs with delta = |P_final - P_c|.
    Requires at least 5 points spanning at least one decade in delta.
    """
    data = np.asarray(quench_results, dtype=float)
    if data.ndim != 2 or data.shape[1] != 2 or data.shape[0] < 5:
        raise ValueError("need at least 5 (delta, tau) pairs")
    delta, tau = data[:, 0], data[:, 1]
    if np.any(delta <= 0) or np.any(tau <= 0):
        raise ValueError("deltas and relaxation times must be positive")
    if delta.max() / delta.min() < 10.0:
        raise ValueError("deltas must span at least one decade; widen the scan")
    lx, ly = np.log(delta), np.log(tau)
    (slope, intercept), cov = np.polyfit(lx, ly, 1, cov=True)
    pred = slope * lx + intercept
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return PowerLawFit(
        exponent=float(slope),
        uncertainty=float(np.sqrt(max(cov[0, 0], 0.0))),
        r_squared=r2,
        log_prefactor=float(intercept),
    )


def settle_state_for_quench(params_base: SystemParams, p_init: float,
                            branch_class_prefix: str) -> FieldState:
    """The pre-quench steady state: the stable fixed point on the branch that
    terminates at the targeted fold (prepared by the steady-state module)."""
    from .model import FieldState  # local import keeps module load cheap

    fps = find_all_fixed_points(params_base.with_power(p_init))
    cand = [fp for fp in fps if fp.is_stable
            and fp.branch_class.startswith(branch_class_prefix)]
    if not cand:
        raise SolverError(
            f"no stable {branch_class_prefix}* state at settle power {p_init:.4e} W"
        )
    return cand[0].state


def quench_scan(params_base: SystemParams, p_critical: float,
                offsets_rel, *, side: int = +1, p_init: float | None = None,
                initial=None, rtol: float = DEFAULT_RTOL,
                ) -> list[tuple[float, float, RelaxationResult]]:
    """Relaxation times for quenches ending at P_c (1 + side*offset).

    ``side=+1`` quenches to just above the critical power (protocol for the
    fold terminating the lower branch), ``side=-1`` to just below (fold of
    the upper branch).  ``p_init`` defaults to 0.9 P_c (side=+1) or 1.1 P_c;
    ``initial`` defaults to the stable low/high symmetric state there, so
    the post-quench trajectory enters the slow channel left by the fold.
    Returns (P_final, delta, result) tuples.
    """
    if p_init is None:
        p_init = 0.9 * p_critical if side > 0 else 1.1 * p_critical
    if initial is None:
        initial = settle_state_for_quench(
            params_base, p_init, "SymLow" if side > 0 else "SymHigh")
    out = []
    for off in offsets_rel:
        p_final = p_critical * (1.0 + side * off)
        proto = QuenchProtocol(P_init=p_init, P_final=p_final)
        try:
            _, result = simulate_quench(proto, params_base, initial=initial,
                                        rtol=rtol)
        except SolverError as exc:
            warnings.warn(f"quench to {p_final:.6e} W failed: {exc}")
            continue
        out.append((p_final, abs(p_final - p_critical), result))
    return out
