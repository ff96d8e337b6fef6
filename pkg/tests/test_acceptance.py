"""Acceptance gate: every criterion at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS/FAIL line
per criterion.  The two long sweeps (criteria 9 and 11) are marked ``slow``
but run by default.
"""

import time

import numpy as np
import pytest

from magdimer import FieldState, reference_params, find_all_fixed_points
from magdimer.bifurcation import continue_branch, merge_curves, sweep_phase_diagram
from magdimer.config import default_config, override, parse_config
from magdimer.dynamics import csd_exponent_fit, integrate, quench_scan
from magdimer.fluctuations import (
    TwoModeCM,
    gaussian_fidelity,
    logarithmic_negativity,
    lyapunov_residual,
    min_symplectic_eigenvalue,
    mutual_information,
    reduce_to_magnons,
    steady_covariance,
)
from magdimer.model import diffusion_matrix, drift_matrix, rhs_quadratures
from magdimer.steady import bistability_criterion, symmetric_effective_params
from magdimer.cli import run_subcommand

from conftest import finite_difference_jacobian
from test_config_cli import mini_config_text

P_RANGE = (1e-3, 100e-3)


def report(criterion: int, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {criterion:2d} {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {criterion}: {detail}"


@pytest.fixture(scope="module")
def census30(params30):
    return find_all_fixed_points(params30)


@pytest.fixture(scope="module")
def curves():
    p_lo = reference_params(P_RANGE[0])
    start = [fp for fp in find_all_fixed_points(p_lo) if fp.is_stable][0]
    symmetric = continue_branch(start, p_lo, P_RANGE)
    p_mid = reference_params(30e-3)
    asym_start = next(
        fp for fp in find_all_fixed_points(p_mid)
        if fp.is_stable and fp.branch_class == "AsymHighLow"
    )
    up = continue_branch(asym_start, p_mid, P_RANGE, direction=+1)
    dn = continue_branch(asym_start, p_mid, P_RANGE, direction=-1)
    return {"symmetric": symmetric, "asym": merge_curves(dn, up)}


@pytest.fixture(scope="module")
def fold_powers(curves):
    sym = sorted(f.P_d for f in curves["symmetric"].fold_points)
    asym = sorted(f.P_d for f in curves["asym"].fold_points)
    assert len(sym) == 2 and len(asym) == 2
    return {"S_up": sym[0], "S_down": sym[1], "AS_up": asym[0], "AS_down": asym[1]}


@pytest.fixture(scope="module")
def window_scan(params30, fold_powers):
    """Fluctuation metrics over a P grid through the multistable window."""
    lo = fold_powers["AS_up"] - 3e-3
    hi = fold_powers["AS_down"] + 3e-3
    grid = np.linspace(lo, hi, 41)
    D = diffusion_matrix(params30)
    rows = []
    for p_d in grid:
        params = params30.with_power(float(p_d))
        for fp in find_all_fixed_points(params):
            if not fp.is_stable:
                continue
            V = steady_covariance(fp.state, params)
            tm = reduce_to_magnons(V)
            rows.append({
                "P": float(p_d),
                "class": fp.branch_class,
                "infidelity": 1.0 - gaussian_fidelity(tm.alpha, tm.gamma),
                "mi": mutual_information(tm),
                "en": logarithmic_negativity(tm),
                "residual": lyapunov_residual(drift_matrix(fp.state, params), V, D),
                "min_nu": min_symplectic_eigenvalue(V),
            })
    return {"grid": grid, "rows": rows, "step": float(grid[1] - grid[0])}


# ---------------------------------------------------------------------------


def test_criterion_01_multistability(params30, census30):
    t0 = time.time()
    stable = [fp for fp in census30 if fp.is_stable]
    classes = sorted(fp.branch_class for fp in stable)
    ok = classes == ["AsymHighLow", "AsymLowHigh", "SymHigh", "SymLow"]
    asym = [fp for fp in stable if fp.branch_class.startswith("Asym")]
    if ok:
        mirrored = asym[0].state.parity()
        d = np.linalg.norm(mirrored.to_quadratures()
                           - asym[1].state.to_quadratures())
        ok = d <= 1e-6 * np.linalg.norm(mirrored.to_quadratures())

    # the four initial-condition classes flow to the four attractors
    kappa = params30.rates.kappa_a
    ics = {
        "SymLow": FieldState.from_polar(1e10, 1e10, 0, 0, 1e10, 1e10, 0, 0),
        "SymHigh": FieldState.from_polar(1e14, 5e14, 0, 0, 1e14, 5e14, 0, 0),
        "AsymHighLow": FieldState.from_polar(1e14, 5e14, 0, 0, 1e10, 1e10, 0, 0),
        "AsymLowHigh": FieldState.from_polar(1e10, 1e10, 0, 0, 1e14, 5e14, 0, 0),
    }
    reached = {}
    for name, ic in ics.items():
        traj = integrate(ic, params30, (0.0, 250.0 / kappa))
        xf = traj.x[-1]
        dists = [np.linalg.norm(xf - fp.state.to_quadratures()) for fp in stable]
        hit = stable[int(np.argmin(dists))]
        scale = np.linalg.norm(hit.state.to_quadratures())
        if min(dists) > 1e-4 * scale:
            ok = False
        reached[name] = hit.branch_class
    ok = ok and all(reached[k] == k for k in ics)
    elapsed = time.time() - t0
    ok = ok and elapsed < 60.0
    report(1, ok, f"4 stable attractors {classes}, basins {reached}, "
                  f"{elapsed:.1f} s")


def test_criterion_02_bistability_criterion_equivalence():
    rng = np.random.default_rng(2024)
    checked = 0
    mismatches = []
    while checked < 50:
        p = reference_params(30e-3).replace(
            nu_a=10e9,
            nu_m=10e9 + float(rng.uniform(-5e6, 5e6)),
            nu_d=10e9 + float(rng.uniform(2e6, 30e6)),
            kappa_a=float(rng.uniform(0.5e6, 2e6)),
            kappa_m=float(rng.uniform(0.5e6, 2e6)),
            g=float(rng.uniform(2e6, 12e6)),
            J=float(rng.uniform(0.0, 2.0)),
        )
        eff = symmetric_effective_params(p)
        K = p.rates.K
        # the criterion addresses the red-detuned (Delta0 K < 0) regime; skip
        # near-marginal draws the finite scan cannot resolve
        if eff.Delta0 >= -1e3:
            continue
        margin = eff.Delta0**2 - 3 * eff.kappa0**2
        if abs(margin) < 0.05 * max(eff.Delta0**2, 3 * eff.kappa0**2):
            continue
        checked += 1

        predicted, _ = bistability_criterion(p)

        # dense-scan oracle: non-monotonicity of the drive response
        n_char = abs(eff.Delta0) / (2 * K)
        ns = np.geomspace(n_char / 300.0, 20.0 * n_char, 4000)
        om2 = 4 * K**2 * ns**3 + 4 * eff.Delta0 * K * ns**2 \
            + (eff.Delta0**2 + eff.kappa0**2) * ns
        rising = np.sign(np.diff(om2))
        turns = np.flatnonzero(rising[:-1] != rising[1:])
        window_exists = turns.size >= 2

        # probe root counts with an independent general-purpose solver
        def count_positive_roots(omega2):
            r = np.roots([4 * K**2, 4 * eff.Delta0 * K,
                          eff.Delta0**2 + eff.kappa0**2, -omega2])
            real = r[np.abs(r.imag) < 1e-9 * np.maximum(np.abs(r), 1.0)].real
            return int(np.sum(real > 0))

        if window_exists:
            hi = om2[turns[0] + 1]   # local max of the drive response
            lo = om2[turns[1] + 1]   # local min
            window_exists = count_positive_roots(0.5 * (hi + lo)) == 3
        else:
            window_exists = any(
                count_positive_roots(f * float(np.max(om2))) != 1
                for f in (1e-3, 0.03, 0.5)
            )

        if predicted != window_exists:
            mismatches.append((p, predicted, window_exists))
    report(2, not mismatches,
           f"{checked} randomized parameter sets, {len(mismatches)} mismatches")


def test_criterion_03_window_nesting(fold_powers):
    s_up, s_down = fold_powers["S_up"], fold_powers["S_down"]
    as_up, as_down = fold_powers["AS_up"], fold_powers["AS_down"]
    step = 0.5e-3  # scan resolution, W

    # dense-scan cross-check of each fold power at one-step tolerance
    p = reference_params()
    from magdimer.steady import symmetric_steady_states

    def sym_count(p_d):
        return len(symmetric_steady_states(p.with_power(p_d)))

    def asym_count(p_d):
        return sum(1 for fp in find_all_fixed_points(p.with_power(p_d))
                   if fp.is_stable and fp.branch_class.startswith("Asym"))

    # each continuation fold power agrees with the dense scan: the count of
    # coexisting roots changes within one scan step of the fold
    checks = [
        sym_count(s_up - step) == 1, sym_count(s_up + step) == 3,
        sym_count(s_down - step) == 3, sym_count(s_down + step) == 1,
        asym_count(as_up - step) == 0, asym_count(as_up + step) == 2,
        asym_count(as_down - step) == 2, asym_count(as_down + step) == 0,
    ]
    ok = all(checks)

    nested = (s_up + step < as_up) and (as_down + step < s_down)
    ok = ok and nested
    report(3, ok,
           f"[AS_up, AS_down] = [{as_up * 1e3:.3f}, {as_down * 1e3:.3f}] mW "
           f"strictly inside [S_up, S_down] = [{s_up * 1e3:.3f}, "
           f"{s_down * 1e3:.3f}] mW (scan step {step * 1e3} mW)")


def test_criterion_04_effective_detuning_invariance(params30):
    from magdimer.steady import symmetric_steady_states

    rng = np.random.default_rng(44)
    base = sorted(fp.state.n_m_L for fp in symmetric_steady_states(params30))
    worst = 0.0
    for _ in range(10):
        # keep J = 0.8 kappa_a + shift nonnegative
        shift_hz = float(rng.uniform(-0.7e6, 25e6))
        p2 = params30.replace(nu_a=params30.nu_a + shift_hz,
                              J=params30.J + shift_hz / params30.kappa_a)
        roots = sorted(fp.state.n_m_L for fp in symmetric_steady_states(p2))
        if len(roots) != len(base):
            worst = np.inf
            break
        worst = max(worst, max(abs(a - b) / b for a, b in zip(roots, base)))
    report(4, worst <= 1e-9, f"max relative root drift {worst:.2e} over 10 shifts")


def test_criterion_05_jacobian_consistency(params30, census30):
    rates = params30.rates
    worst = 0.0
    for fp in census30:
        x = fp.state.to_quadratures()
        A = drift_matrix(fp.state, params30)
        J = finite_difference_jacobian(lambda v: rhs_quadratures(v, rates), x)
        tol = 1e-6 * np.maximum(np.abs(A), rates.kappa_a)
        worst = max(worst, float(np.max(np.abs(A - J) / tol)))
    report(5, worst <= 1.0,
           f"entrywise |drift - FD Jacobian| at {len(census30)} fixed points, "
           f"worst {worst:.3f} of tolerance")


def test_criterion_06_lyapunov_correctness(params30, census30):
    D = diffusion_matrix(params30)
    ok = True
    details = []
    for fp in census30:
        if not fp.is_stable:
            continue
        V = steady_covariance(fp.state, params30)
        res = lyapunov_residual(drift_matrix(fp.state, params30), V, D)
        nu = min_symplectic_eigenvalue(V)
        details.append(f"{fp.branch_class}: res={res:.1e}, nu_min={nu:.6f}")
        ok = ok and res <= 1e-8 and nu >= 0.5 - 1e-10

    decoupled = params30.replace(g=0.0, K=0.0, J=0.0)
    V0 = steady_covariance(FieldState(0j, 0j, 0j, 0j), decoupled)
    dev = float(np.max(np.abs(V0 - 0.5 * np.eye(8))))
    ok = ok and dev <= 1e-12
    report(6, ok, "; ".join(details) + f"; decoupled |V - I/2| = {dev:.1e}")


def test_criterion_07_fidelity_mi_structure(params30, window_scan, fold_powers):
    rows = window_scan["rows"]
    step = window_scan["step"]
    sym_rows = [r for r in rows if r["class"].startswith("Sym")]
    asym_rows = [r for r in rows if r["class"].startswith("Asym")]
    ok = bool(sym_rows and asym_rows)
    ok = ok and all(r["infidelity"] < 1e-9 for r in sym_rows)
    ok = ok and all(r["infidelity"] > 1e-6 for r in asym_rows)
    ok = ok and all(r["mi"] >= 0.0 for r in rows)

    # fully decoupled dimer carries no correlations
    p_j0 = params30.replace(J=0.0, P_d=20e-3)
    mi_j0 = []
    for fp in find_all_fixed_points(p_j0):
        if fp.is_stable:
            tm = reduce_to_magnons(steady_covariance(fp.state, p_j0))
            mi_j0.append(mutual_information(tm))
    ok = ok and all(mi <= 1e-12 for mi in mi_j0)

    # peaks sit within one grid step of the asymmetric fold powers
    def peak_power(metric):
        per_p = {}
        for r in rows:
            per_p[r["P"]] = max(per_p.get(r["P"], 0.0), r[metric])
        ps = sorted(per_p)
        return ps[int(np.argmax([per_p[q] for q in ps]))]

    folds = (fold_powers["AS_up"], fold_powers["AS_down"])
    peaks_ok = True
    peaks = {}
    for metric in ("infidelity", "mi"):
        p_peak = peak_power(metric)
        dist = min(abs(p_peak - f) for f in folds)
        peaks[metric] = (p_peak, dist)
        peaks_ok = peaks_ok and dist <= step * (1 + 1e-9)
    ok = ok and peaks_ok
    report(7, ok,
           f"sym infidelity < 1e-9 ({len(sym_rows)} rows), asym > 0 "
           f"({len(asym_rows)} rows), MI >= 0, MI(J=0) <= 1e-12; peaks at "
           + ", ".join(f"{m}: {pp * 1e3:.2f} mW (dist {d * 1e3:.2f} mW)"
                       for m, (pp, d) in peaks.items()))


def test_criterion_08_no_intercavity_entanglement(window_scan):
    # Known honest failure: the linearized model carries E_N ~ 3e-4 on the
    # low symmetric branch below ~21 mW (two independent Lyapunov solutions
    # agree; E_N is exactly zero at K = 0, so the negativity is
    # Kerr-generated).  The high-occupation attractors do satisfy E_N = 0.
    rows = window_scan["rows"]
    worst = max(r["en"] for r in rows)
    report(8, worst <= 1e-12,
           f"max log-negativity {worst:.2e} over {len(rows)} stable states")


@pytest.mark.slow
def test_criterion_09_critical_slowing_down(params30, fold_powers):
    # Known honest failure of the exponent window: the ball-entry relaxation
    # time is bottleneck + a ~10/kappa travel-and-contraction baseline
    # (slowest stable eigenvalue is exactly -kappa_a), which flattens the
    # global log-log fit to ~-0.24 over the pinned offset range.  The
    # divergence itself (local slope -> -1/2, tau ordering) is covered by
    # passing dynamics tests.
    t0 = time.time()
    kappa = params30.rates.kappa_a
    p_c = fold_powers["S_down"]
    offsets = np.geomspace(1e-4, 1e-1, 8)
    scan = quench_scan(params30, p_c, offsets, side=+1)
    pairs = [(delta, r.tau) for _, delta, r in scan if r.converged]
    fit = csd_exponent_fit(pairs)
    max_tau_kappa = max(t for _, t in pairs) * kappa
    elapsed = time.time() - t0
    ok = (-0.6 <= fit.exponent <= -0.4 and fit.r_squared > 0.95
          and max_tau_kappa > 10.0 and elapsed < 600.0)
    report(9, ok,
           f"exponent {fit.exponent:.3f} (want [-0.6, -0.4]), "
           f"R^2 {fit.r_squared:.3f}, max tau {max_tau_kappa:.1f}/kappa, "
           f"{elapsed:.0f} s")


def test_criterion_10_gaussian_closed_forms():
    vac = 0.5 * np.eye(2)
    sq = 0.5 * np.diag([np.exp(2.0), np.exp(-2.0)])
    ok = abs(gaussian_fidelity(vac, sq) - 1 / np.cosh(1.0)) <= 1e-10
    th = 1.5 * np.eye(2)
    ok = ok and abs(gaussian_fidelity(vac, th) - 0.5) <= 1e-10
    prod = TwoModeCM(alpha=1.5 * np.eye(2), gamma=vac, beta=np.zeros((2, 2)))
    ok = ok and mutual_information(prod) <= 1e-12
    en_err = 0.0
    for r in (0.1, 0.5, 1.0):
        c2, s2 = 0.5 * np.cosh(2 * r), 0.5 * np.sinh(2 * r)
        tmsv = TwoModeCM(alpha=c2 * np.eye(2), gamma=c2 * np.eye(2),
                         beta=np.diag([s2, -s2]))
        en_err = max(en_err, abs(logarithmic_negativity(tmsv) - 2 * r))
    ok = ok and en_err <= 1e-9
    report(10, ok, f"fidelity/MI closed forms exact, max E_N error {en_err:.1e}")


@pytest.mark.slow
def test_criterion_11_phase_diagram_shape(params30):
    from magdimer.bifurcation import bistable_boundaries

    t0 = time.time()
    P_grid = np.linspace(1e-3, 100e-3, 101)
    J_grid = np.linspace(0.2, 3.0, 41)
    diagram = sweep_phase_diagram(params30, P_grid, J_grid)
    elapsed = time.time() - t0

    # bistable-boundary powers: grid brackets refined on the symmetric-root
    # count (cell labels alone quantize the lower edge, whose full variation
    # spans about one cell, and the Hopf-unstable corner reclassifies cells)
    _, lower, upper = bistable_boundaries(diagram, params30)

    n_p = len(P_grid)
    widths = []
    hopf_cells = []
    for i_j, j in enumerate(J_grid):
        row = diagram.points[i_j * n_p:(i_j + 1) * n_p]
        widths.append(sum(pt.region == "2S-2AS" for pt in row))
        hopf_cells.extend((pt.P_d, j) for pt in row if pt.hopf_flag)

    def linear_fit_r2(x, y):
        x, y = np.asarray(x), np.asarray(y)
        keep = np.isfinite(y)
        coef = np.polyfit(x[keep], y[keep], 1)
        pred = np.polyval(coef, x[keep])
        ss_res = np.sum((y[keep] - pred) ** 2)
        ss_tot = np.sum((y[keep] - np.mean(y[keep])) ** 2)
        return 1.0 - ss_res / ss_tot

    r2_low = linear_fit_r2(J_grid, lower)
    r2_high = linear_fit_r2(J_grid, upper)

    upper_half = widths[len(widths) // 2:]
    monotone = all(b <= a + 1 for a, b in zip(upper_half, upper_half[1:]))
    monotone = monotone and upper_half[-1] <= upper_half[0]

    # Hopf flags confined to the strong-tunneling / strong-driving corner
    # (the front runs from roughly (J ~ 1, P ~ 100 mW) down to (J ~ 3, P ~ 20 mW))
    corner = all(j >= 0.9 and p >= 18e-3 for p, j in hopf_cells)

    ok = (r2_low > 0.98 and r2_high > 0.98 and monotone and corner
          and elapsed < 1800.0)
    report(11, ok,
           f"boundary fits R^2 = ({r2_low:.4f}, {r2_high:.4f}), tongue cells "
           f"{widths[len(widths) // 2]}->{widths[-1]} over upper half "
           f"(monotone={monotone}), {len(hopf_cells)} Hopf cells "
           f"(corner={corner}), {elapsed:.0f} s")


def test_criterion_12_determinism(tmp_path):
    cfg_steady = default_config()
    window_cfg = parse_config(mini_config_text())
    window_cfg = override(window_cfg, seed=3)
    outputs = {}
    for label, cfg, cmd in (("steady", cfg_steady, "steady"),
                            ("fluct", window_cfg, "fluct")):
        blobs = []
        for run in range(2):
            out = tmp_path / f"{label}{run}"
            paths = run_subcommand(cmd, cfg, out_dir=str(out))
            blobs.append(b"".join(p.read_bytes() for p in sorted(paths)))
        outputs[label] = blobs[0] == blobs[1]
    ok = all(outputs.values())
    report(12, ok, f"byte-identical reruns: {outputs}")
