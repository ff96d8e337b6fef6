#!/usr/bin/env python3
"""Fixed-point census at the multistable working point and the four
basin-resolved trajectories (symmetric low/high, symmetry-broken both ways).

Writes the steady-state table plus one trajectory CSV per initial-condition
class; optionally renders a quick overview PNG when matplotlib is present.
"""

import argparse
from pathlib import Path

import numpy as np

from magdimer import FieldState, reference_params, find_all_fixed_points
from magdimer.artifacts import write_csv
from magdimer.dynamics import integrate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--p-d", type=float, default=30.0, help="drive power, mW")
    ap.add_argument("--out", type=Path, default=Path("out"))
    ap.add_argument("--plot", action="store_true", help="also write a PNG")
    args = ap.parse_args()

    params = reference_params(args.p_d * 1e-3)
    kappa = params.rates.kappa_a
    fps = find_all_fixed_points(params)
    print(f"P_d = {args.p_d} mW: {len(fps)} fixed points, "
          f"{sum(fp.is_stable for fp in fps)} stable")
    for fp in fps:
        print(f"  {fp.branch_class:16s} {fp.stability:8s} "
              f"n_mL={fp.state.n_m_L:.4e} n_mR={fp.state.n_m_R:.4e} "
              f"Z={fp.imbalance_Z:+.4f}")

    ics = {
        "sym_low": FieldState.from_polar(1e10, 1e10, 0, 0, 1e10, 1e10, 0, 0),
        "sym_high": FieldState.from_polar(1e14, 5e14, 0, 0, 1e14, 5e14, 0, 0),
        "asym_hl": FieldState.from_polar(1e14, 5e14, 0, 0, 1e10, 1e10, 0, 0),
        "asym_lh": FieldState.from_polar(1e10, 1e10, 0, 0, 1e14, 5e14, 0, 0),
    }
    args.out.mkdir(parents=True, exist_ok=True)
    curves = {}
    for name, ic in ics.items():
        t_eval = np.linspace(0.0, 200.0 / kappa, 800)
        traj = integrate(ic, params, (0.0, t_eval[-1]), t_eval=t_eval)
        curves[name] = traj
        amps = traj.amplitudes
        rows = [
            (traj.t[i], *np.ravel([(a.real, a.imag) for a in amps[i]]),
             traj.n_m_L[i], traj.n_m_R[i])
            for i in range(len(traj.t))
        ]
        path = write_csv(args.out / f"trajectory_{name}.csv", "trajectory-v1",
                         rows, config_digest="script",
                         extra_comments=(f"initial-condition class: {name}",))
        print(f"  -> {path}  (final n_mL={traj.n_m_L[-1]:.3e}, "
              f"n_mR={traj.n_m_R[-1]:.3e})")

    if args.plot:
        try:
            import matplotlib

            matplotlib.use("Agg")
            import matplotlib.pyplot as plt
        except ImportError:
            print("matplotlib not available; skipping plot")
            return
        fig, axes = plt.subplots(2, 2, figsize=(9, 6), sharex=True)
        for ax, (name, traj) in zip(axes.ravel(), curves.items()):
            ax.plot(traj.t * kappa, traj.n_m_L, "r-", label="n_mL")
            ax.plot(traj.t * kappa, traj.n_m_R, "b--", label="n_mR")
            ax.set_title(name)
            ax.set_xlabel("t kappa")
            ax.legend()
        fig.tight_layout()
        png = args.out / "multistability.png"
        fig.savefig(png, dpi=130)
        print(f"  -> {png}")


if __name__ == "__main__":
    main()
