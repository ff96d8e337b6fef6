"""Command-line interface: the experiment workflows as subcommands.

    magdimer <subcommand> --config <path> [--out <dir>] [--p-d <mW>]
             [--j <mult>] [--grid <NxM>] [--seed <u64>] [--plot-data]

Subcommands: ``steady`` (fixed-point table), ``branch`` (continuation
curves with fold markers), ``phase-diagram`` (region/|Z| grid), ``quench``
(trajectory + relaxation-time scan), ``fluct`` (fidelity / mutual
information scan).  Exit codes: 0 success, 2 config error, 3 solver error,
4 I/O error.  The environment variable MAGDIMER_THREADS caps worker
parallelism.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .artifacts import emit_plot_data, write_csv
from .bifurcation import (
    BranchCurve,
    continue_branch,
    merge_curves,
    resolve_workers,
    sweep_phase_diagram,
)
from .config import (
    ExperimentConfig,
    config_hash,
    default_config,
    override,
    parse_config,
)
from .dynamics import QuenchProtocol, simulate_quench
from .errors import ConfigError, SolverError
from .fluctuations import (
    gaussian_fidelity,
    logarithmic_negativity,
    lyapunov_residual,
    mutual_information,
    reduce_to_magnons,
    steady_covariance,
    symplectic_eigenvalues,
)
from .model import diffusion_matrix, drift_matrix
from .steady import FixedPoint, find_all_fixed_points

SUBCOMMANDS = ("steady", "branch", "phase-diagram", "quench", "fluct")


# ---------------------------------------------------------------------------
# Shared helpers
# ---------------------------------------------------------------------------

def _p_grid(cfg: ExperimentConfig) -> np.ndarray:
    return np.linspace(cfg.sweep.p_min_mW, cfg.sweep.p_max_mW, cfg.sweep.p_count) * 1e-3


def _j_grid(cfg: ExperimentConfig) -> np.ndarray:
    return np.linspace(cfg.sweep.j_min, cfg.sweep.j_max, cfg.sweep.j_count)


def _find_all(cfg: ExperimentConfig, params) -> list[FixedPoint]:
    return find_all_fixed_points(
        params, lattice=cfg.solver.lattice, n_phase=cfg.solver.phase_offsets,
        rng_seed=cfg.seed,
    )


def _fp_row(index: int, p_mw: float, j: float, fp: FixedPoint) -> tuple:
    s = fp.state
    return (
        index, p_mw, j, fp.branch_class, fp.stability,
        s.n_a_L, s.n_a_R, s.n_m_L, s.n_m_R, fp.imbalance_Z,
        fp.max_re_eigenvalue,
        s.a_L.real, s.a_L.imag, s.m_L.real, s.m_L.imag,
        s.a_R.real, s.a_R.imag, s.m_R.real, s.m_R.imag,
    )


def _symmetric_curve(cfg: ExperimentConfig) -> BranchCurve:
    p_lo, p_hi = cfg.sweep.p_min_mW * 1e-3, cfg.sweep.p_max_mW * 1e-3
    params = cfg.params.with_power(p_lo)
    fps = _find_all(cfg, params)
    start = min((fp for fp in fps if fp.is_stable),
                key=lambda fp: fp.state.n_m_L, default=fps[0])
    return continue_branch(start, params, (p_lo, p_hi))


def _asymmetric_curves(cfg: ExperimentConfig) -> dict[str, BranchCurve]:
    """Trace the two symmetry-broken branches, searching for a stable
    asymmetric state near the configured power if needed."""
    p_lo, p_hi = cfg.sweep.p_min_mW * 1e-3, cfg.sweep.p_max_mW * 1e-3
    probes = [cfg.params.P_d] + list(
        np.linspace(p_lo, p_hi, 13)[1:-1]
    )
    out: dict[str, BranchCurve] = {}
    for p_probe in probes:
        params = cfg.params.with_power(float(p_probe))
        fps = _find_all(cfg, params)
        for label, cls in (("asym-HL", "AsymHighLow"), ("asym-LH", "AsymLowHigh")):
            cand = [fp for fp in fps if fp.is_stable and fp.branch_class == cls]
            if cand and label not in out:
                up = continue_branch(cand[0], params, (p_lo, p_hi), direction=+1)
                dn = continue_branch(cand[0], params, (p_lo, p_hi), direction=-1)
                out[label] = merge_curves(dn, up)
        if len(out) == 2:
            break
    return out


def _curve_rows(label: str, curve: BranchCurve) -> list[tuple]:
    fold_idx = {
        int(np.argmin(np.abs(curve.P_d - f.P_d))) for f in curve.fold_points
    }
    rows = []
    for i, (p, fp) in enumerate(zip(curve.P_d, curve.points)):
        s = fp.state
        rows.append((
            label, p * 1e3, s.n_m_L, s.n_m_R, s.n_a_L, s.n_a_R,
            fp.imbalance_Z, fp.max_re_eigenvalue, fp.branch_class,
            i in fold_idx,
        ))
    return rows


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _run_steady(cfg: ExperimentConfig, out: Path, digest: str) -> list[Path]:
    params = cfg.params
    fps = _find_all(cfg, params)
    rows = [
        _fp_row(i, params.P_d * 1e3, params.J, fp) for i, fp in enumerate(fps)
    ]
    n_stable = sum(fp.is_stable for fp in fps)
    path = write_csv(
        out / "steady_fixed_points.csv", "steady-v1", rows,
        config_digest=digest,
        extra_comments=(f"units: P_d mW; rates rad/s",
                        f"stable: {n_stable} of {len(fps)}"),
    )
    return [path]


def _run_branch(cfg: ExperimentConfig, out: Path, digest: str) -> list[Path]:
    curves = {"symmetric": _symmetric_curve(cfg)}
    curves.update(_asymmetric_curves(cfg))
    rows: list[tuple] = []
    comments = ["units: P_d mW; rates rad/s"]
    for label, curve in curves.items():
        rows.extend(_curve_rows(label, curve))
        for f in curve.fold_points:
            comments.append(
                f"fold: branch={label} P_d_mW={f.P_d * 1e3!r} "
                f"class={f.point.branch_class}"
            )
    path = write_csv(out / "branch.csv", "branch-v1", rows,
                     config_digest=digest, extra_comments=tuple(comments))
    return [path]


def _run_phase_diagram(cfg: ExperimentConfig, out: Path, digest: str) -> list[Path]:
    diagram = sweep_phase_diagram(
        cfg.params, _p_grid(cfg), _j_grid(cfg),
        workers=resolve_workers(cfg.workers or None), rng_seed=cfg.seed,
    )
    rows = [
        (pt.P_d * 1e3, pt.J, pt.region, pt.n_stable, pt.max_abs_Z, pt.hopf_flag)
        for pt in diagram.points
    ]
    path = write_csv(out / "phase_diagram.csv", "phase-v1", rows,
                     config_digest=digest,
                     extra_comments=("units: P_d mW; J multiples of kappa_a",))
    return [path]


def _quench_critical_power(cfg: ExperimentConfig) -> tuple[float, str, float, object]:
    """(P_c, side, p_init, initial_state) for the configured quench target."""
    target = cfg.quench.target
    sym = _symmetric_curve(cfg)
    if len(sym.fold_points) < 2 and target in ("S_up", "S_down"):
        raise SolverError(
            f"symmetric branch has {len(sym.fold_points)} folds; cannot place "
            f"quench target {target} (not bistable over the sweep range?)"
        )
    sym_folds = sorted(sym.fold_points, key=lambda f: f.P_d)
    if target in ("S_up", "S_down"):
        from .dynamics import settle_state_for_quench

        if target == "S_down":
            p_c = sym_folds[-1].P_d            # lower-branch fold, high power
            p_init = 0.9 * p_c
            return p_c, "+", p_init, settle_state_for_quench(
                cfg.params, p_init, "SymLow")
        p_c = sym_folds[0].P_d                 # upper-branch fold, low power
        p_init = 1.1 * p_c
        return p_c, "-", p_init, settle_state_for_quench(
            cfg.params, p_init, "SymHigh")

    asym = _asymmetric_curves(cfg)
    if not asym:
        raise SolverError("no stable asymmetric branch found for quench target")
    curve = next(iter(asym.values()))
    if len(curve.fold_points) < 2:
        raise SolverError("asymmetric branch folds not resolved")
    folds = sorted(curve.fold_points, key=lambda f: f.P_d)
    p_lo, p_hi = folds[0].P_d, folds[-1].P_d
    p_init = 0.5 * (p_lo + p_hi)
    params_init = cfg.params.with_power(p_init)
    stable_asym = [fp for fp in _find_all(cfg, params_init)
                   if fp.is_stable and fp.branch_class.startswith("Asym")]
    if not stable_asym:
        raise SolverError("no stable asymmetric state at the quench settle power")
    initial = stable_asym[0].state
    if target == "AS_up":
        return p_lo, "-", p_init, initial
    return p_hi, "+", p_init, initial


def _run_quench(cfg: ExperimentConfig, out: Path, digest: str) -> list[Path]:
    kappa = cfg.params.rates.kappa_a
    p_c, side, p_init, initial = _quench_critical_power(cfg)
    sign = 1.0 if side == "+" else -1.0
    offsets = np.geomspace(cfg.quench.offset_min_rel, cfg.quench.offset_max_rel,
                           cfg.quench.offset_count)

    scan_rows = []
    trajectories = {}
    for off in offsets:
        p_final = p_c * (1.0 + sign * off)
        proto = QuenchProtocol(
            P_init=p_init, P_final=p_final,
            t_settle=cfg.quench.t_settle_kappa / kappa,
            t_max=cfg.quench.t_max_kappa / kappa,
            eps_rel=cfg.quench.eps_rel,
        )
        traj, result = simulate_quench(
            proto, cfg.params, initial=initial, rtol=cfg.solver.integrate_rtol,
        )
        trajectories[off] = traj
        final_class = result.final_fp.branch_class if result.final_fp else "none"
        scan_rows.append((
            p_final * 1e3, abs(p_final - p_c) * 1e3, result.tau,
            result.converged, final_class,
        ))

    scan_path = write_csv(
        out / "quench_scan.csv", "quench-scan-v1", scan_rows,
        config_digest=digest,
        extra_comments=(
            f"target: {cfg.quench.target} P_c_mW={p_c * 1e3!r} side={side}",
            "units: P_final mW; delta mW; tau s",
        ),
    )

    mid = offsets[len(offsets) // 2]
    traj = trajectories[mid]
    stride = max(1, len(traj.t) // 2000)
    amps = traj.amplitudes[::stride]
    t = traj.t[::stride]
    traj_rows = [
        (
            float(t[i]),
            amps[i, 0].real, amps[i, 0].imag, amps[i, 1].real, amps[i, 1].imag,
            amps[i, 2].real, amps[i, 2].imag, amps[i, 3].real, amps[i, 3].imag,
            float(abs(amps[i, 1]) ** 2), float(abs(amps[i, 3]) ** 2),
        )
        for i in range(len(t))
    ]
    traj_path = write_csv(
        out / "quench_trajectory.csv", "trajectory-v1", traj_rows,
        config_digest=digest,
        extra_comments=(f"offset_rel: {mid!r}", "units: t s"),
    )
    return [scan_path, traj_path]


def _run_fluct(cfg: ExperimentConfig, out: Path, digest: str) -> list[Path]:
    D = diffusion_matrix(cfg.params)
    rows = []
    for p in _p_grid(cfg):
        params = cfg.params.with_power(float(p))
        stable = [fp for fp in _find_all(cfg, params) if fp.is_stable]
        reduced = []
        for fp in stable:
            V = steady_covariance(fp.state, params)
            res = lyapunov_residual(drift_matrix(fp.state, params), V, D)
            reduced.append((fp, reduce_to_magnons(V), res))
        for fp_i, tm_i, res_i in reduced:
            for fp_j, tm_j, _ in reduced:
                fid = gaussian_fidelity(tm_i.alpha, tm_j.gamma)
                if fp_i is fp_j:
                    nu_m, nu_p = symplectic_eigenvalues(tm_i)
                    mi = mutual_information(tm_i)
                    en = logarithmic_negativity(tm_i)
                else:
                    nu_m = nu_p = mi = en = float("nan")
                rows.append((
                    float(p) * 1e3, f"{fp_i.branch_class}:{fp_j.branch_class}",
                    fid, 1.0 - fid, mi, en, nu_p, nu_m, res_i,
                ))
    path = write_csv(
        out / "fluct.csv", "fluct-v1", rows, config_digest=digest,
        extra_comments=(
            "units: P_d mW",
            "within-state rows have class_pair X:X; cross-state rows compare "
            "the left magnon of one attractor with the right magnon of another",
        ),
    )
    return [path]


_RUNNERS = {
    "steady": _run_steady,
    "branch": _run_branch,
    "phase-diagram": _run_phase_diagram,
    "quench": _run_quench,
    "fluct": _run_fluct,
}


def run_subcommand(name: str, cfg: ExperimentConfig,
                   *, out_dir: str | None = None,
                   plot_data: bool = False) -> list[Path]:
    """Run one workflow; returns the written artifact paths."""
    if name not in _RUNNERS:
        raise ConfigError(f"unknown subcommand {name!r}; choose from {SUBCOMMANDS}")
    cfg = cfg.validate()
    out = Path(out_dir if out_dir is not None else cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = _RUNNERS[name](cfg, out, config_hash(cfg))
    if plot_data:
        paths.extend([emit_plot_data(p) for p in list(paths)])
    return paths


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _parse_grid(text: str) -> tuple[int, int]:
    try:
        a, b = text.lower().split("x")
        return int(a), int(b)
    except ValueError:
        raise ConfigError(f"--grid expects NxM (e.g. 101x41), got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="magdimer",
        description="Driven cavity-magnon dimer: steady states, bifurcations, "
                    "quench dynamics and Gaussian fluctuations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None,
                       help="config file (defaults to the built-in working point)")
        p.add_argument("--out", type=str, default=None, help="output directory")
        p.add_argument("--p-d", type=float, default=None, metavar="MW",
                       help="override drive power, mW")
        p.add_argument("--j", type=float, default=None, metavar="MULT",
                       help="override tunneling, multiples of kappa_a")
        p.add_argument("--grid", type=str, default=None, metavar="NxM",
                       help="override sweep grid size (P x J)")
        p.add_argument("--seed", type=int, default=None, help="RNG seed")
        p.add_argument("--plot-data", action="store_true",
                       help="also emit gnuplot-ready .dat files")
        p.add_argument("--print-config", action="store_true",
                       help="print the effective config and exit")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config is not None:
            cfg = parse_config(Path(args.config).read_text())
        else:
            cfg = default_config()
        cfg = override(
            cfg, p_d_mW=args.p_d, j=args.j, seed=args.seed, out_dir=args.out,
            grid=_parse_grid(args.grid) if args.grid else None,
        )
        if args.print_config:
            from .config import serialize_config

            sys.stdout.write(serialize_config(cfg))
            return 0
        paths = run_subcommand(args.command, cfg, plot_data=args.plot_data)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 4
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
