from pathlib import Path

import numpy as np
import pytest

from magdimer.artifacts import SCHEMAS, emit_plot_data, read_csv, write_csv
from magdimer.cli import main, run_subcommand
from magdimer.config import (
    DEFAULT_CONFIG_TEXT,
    config_hash,
    default_config,
    override,
    parse_config,
    serialize_config,
)
from magdimer.errors import ConfigError

MINI_SWEEP = """
[sweep]
p_min_mW = 20.0
p_max_mW = 40.0
p_count = 3
j_min = 0.5
j_max = 1.1
j_count = 3
"""


def mini_config_text(extra: str = "") -> str:
    system = DEFAULT_CONFIG_TEXT.split("[sweep]")[0]
    return system + MINI_SWEEP + extra


class TestParseConfig:
    def test_default_matches_reference_parameters(self):
        cfg = default_config()
        p = cfg.params
        # as-configured fields are stored exactly; SI conversions are one
        # multiply away from the literals (compare at machine precision)
        assert (cfg.system.nu_a_GHz, cfg.system.kappa_a_MHz, cfg.system.g_MHz,
                cfg.system.K_nHz, cfg.system.J_over_kappa_a,
                cfg.system.P_d_mW) == (10.0, 1.0, 7.0, 9.0, 0.8, 30.0)
        for got, want in [(p.nu_a, 10e9), (p.kappa_a, 1e6), (p.kappa_m, 1e6),
                          (p.g, 7e6), (p.K, 9e-9), (p.P_d, 30e-3)]:
            assert got == pytest.approx(want, rel=1e-15)
        assert p.J == 0.8
        assert p.rates.delta_a == pytest.approx(2 * np.pi * -11e6, rel=1e-12)
        assert p.rates.delta_m == pytest.approx(2 * np.pi * -11e6, rel=1e-12)

    def test_conflicting_detuning_specification(self):
        text = DEFAULT_CONFIG_TEXT.replace(
            "delta_a_MHz = -11.0", "delta_a_MHz = -11.0\nnu_d_GHz = 10.011"
        )
        with pytest.raises(ConfigError, match="conflicting detuning"):
            parse_config(text)

    def test_nu_d_route(self):
        text = DEFAULT_CONFIG_TEXT.replace(
            "delta_a_MHz = -11.0\ndelta_m_MHz = -11.0",
            "nu_d_GHz = 10.011\nnu_m_GHz = 10.0",
        )
        p = parse_config(text).params
        assert p.rates.delta_a == pytest.approx(2 * np.pi * -11e6, rel=1e-9)

    def test_unknown_key_is_hard_error_with_line(self):
        text = DEFAULT_CONFIG_TEXT.replace("[sweep]", "[sweep]\nbogus_key = 1")
        with pytest.raises(ConfigError, match=r"unknown key 'bogus_key'.*line"):
            parse_config(text)

    def test_unknown_section(self):
        with pytest.raises(ConfigError, match=r"unknown section"):
            parse_config(DEFAULT_CONFIG_TEXT + "\n[mystery]\nx = 1\n")

    def test_missing_required_key(self):
        text = DEFAULT_CONFIG_TEXT.replace("g_MHz = 7.0\n", "")
        with pytest.raises(ConfigError, match="missing required key 'g_MHz'"):
            parse_config(text)

    def test_unparseable_number_names_key_and_line(self):
        text = DEFAULT_CONFIG_TEXT.replace("g_MHz = 7.0", "g_MHz = seven")
        with pytest.raises(ConfigError, match=r"unparseable float 'seven'.*'g_MHz'"):
            parse_config(text)

    def test_duplicate_key(self):
        text = DEFAULT_CONFIG_TEXT.replace("g_MHz = 7.0", "g_MHz = 7.0\ng_MHz = 8.0")
        with pytest.raises(ConfigError, match="duplicate key"):
            parse_config(text)

    def test_bad_quench_target(self):
        text = DEFAULT_CONFIG_TEXT.replace("target = S_down", "target = sideways")
        with pytest.raises(ConfigError, match="quench target"):
            parse_config(text)

    def test_round_trip_identity(self):
        for text in (DEFAULT_CONFIG_TEXT, mini_config_text()):
            cfg = parse_config(text)
            again = parse_config(serialize_config(cfg))
            assert again == cfg
            assert config_hash(again) == config_hash(cfg)

    def test_override(self):
        cfg = default_config()
        cfg2 = override(cfg, p_d_mW=17.5, j=1.3, seed=42, grid=(7, 5))
        assert cfg2.params.P_d == pytest.approx(17.5e-3)
        assert cfg2.params.J == 1.3
        assert cfg2.seed == 42
        assert (cfg2.sweep.p_count, cfg2.sweep.j_count) == (7, 5)


class TestArtifacts:
    def test_write_read_round_trip(self, tmp_path):
        rows = [(1.0, 0.5, "1S", 1, 0.0, False)]
        path = write_csv(tmp_path / "x.csv", "phase-v1", rows, config_digest="abc")
        schema, cols, body = read_csv(path)
        assert schema == "phase-v1"
        assert cols == list(SCHEMAS["phase-v1"])
        assert body == [["1.0", "0.5", "1S", "1", "0.0", "0"]]

    def test_row_width_checked(self, tmp_path):
        with pytest.raises(ValueError, match="row width"):
            write_csv(tmp_path / "x.csv", "phase-v1", [(1.0,)], config_digest="a")

    def test_schema_header_required(self, tmp_path):
        f = tmp_path / "no_schema.csv"
        f.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError, match="schema"):
            read_csv(f)


class TestCli:
    def test_steady_runs_and_pins_schema(self, tmp_path):
        out = tmp_path / "o"
        assert main(["steady", "--out", str(out)]) == 0
        schema, cols, rows = read_csv(out / "steady_fixed_points.csv")
        assert schema == "steady-v1"
        assert cols == list(SCHEMAS["steady-v1"])
        stable = [r for r in rows if r[cols.index("stability")] == "stable"]
        assert len(stable) == 4

    def test_phase_diagram_mini_grid(self, tmp_path):
        cfgf = tmp_path / "c.cfg"
        cfgf.write_text(mini_config_text())
        out = tmp_path / "o"
        assert main(["phase-diagram", "--config", str(cfgf), "--out", str(out)]) == 0
        schema, cols, rows = read_csv(out / "phase_diagram.csv")
        assert schema == "phase-v1"
        assert len(rows) == 9
        regions = {r[cols.index("region")] for r in rows}
        assert regions <= {"1S", "2S", "2S-2AS"}
        for r in rows:
            has_asym = float(r[cols.index("max_abs_Z")]) > 0
            assert has_asym == (r[cols.index("region")] == "2S-2AS")

    def test_reruns_are_byte_identical(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        for out in (out1, out2):
            assert main(["steady", "--out", str(out), "--seed", "7"]) == 0
        b1 = (out1 / "steady_fixed_points.csv").read_bytes()
        b2 = (out2 / "steady_fixed_points.csv").read_bytes()
        assert b1 == b2

    def test_config_error_exit_code(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text("[system]\nnu_a_GHz = 10.0\n")
        assert main(["steady", "--config", str(bad), "--out", str(tmp_path)]) == 2

    def test_unknown_key_exit_code(self, tmp_path):
        bad = tmp_path / "bad.cfg"
        bad.write_text(DEFAULT_CONFIG_TEXT + "\n[system]\nwat_GHz = 1\n")
        assert main(["steady", "--config", str(bad), "--out", str(tmp_path)]) == 2

    def test_print_config(self, capsys):
        assert main(["steady", "--print-config"]) == 0
        out = capsys.readouterr().out
        assert "[system]" in out and "P_d_mW = 30.0" in out

    def test_grid_flag_validation(self, tmp_path):
        assert main(["steady", "--out", str(tmp_path), "--grid", "oops"]) == 2

    def test_run_subcommand_rejects_unknown(self):
        with pytest.raises(ConfigError):
            run_subcommand("explode", default_config())

    def test_threads_env_cap(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MAGDIMER_THREADS", "1")
        from magdimer.bifurcation import resolve_workers

        assert resolve_workers(None) == 1
        assert resolve_workers(8) == 1


class TestEmitPlotData:
    def test_branch_blocks(self, tmp_path):
        rows = []
        for branch in ("symmetric", "asym-HL", "asym-LH"):
            for p in (10.0, 20.0):
                rows.append((branch, p, 1.0, 1.0, 1.0, 1.0, 0.0, -1.0, "SymLow", False))
        path = write_csv(tmp_path / "branch.csv", "branch-v1", rows, config_digest="x")
        dat = emit_plot_data(path).read_text()
        blocks = [b for b in dat.split("\n\n") if b.strip()]
        assert len(blocks) == 3
        assert "# branch symmetric" in dat

    def test_phase_matrix_block(self, tmp_path):
        rows = [
            (p, j, "1S", 1, 0.25 * p, False)
            for j in (0.5, 1.0) for p in (10.0, 20.0, 30.0)
        ]
        path = write_csv(tmp_path / "phase.csv", "phase-v1", rows, config_digest="x")
        dat = emit_plot_data(path).read_text()
        assert "max_abs_Z matrix" in dat and "region code matrix" in dat
        first_matrix = dat.split("\n\n")[0].splitlines()
        assert first_matrix[1].startswith("3 ")  # grid header: n cols + P values

    def test_quench_scan_pairs(self, tmp_path):
        rows = [(61.0, 0.1, 2e-6, True, "SymHigh"), (62.0, 1.0, 1e-6, True, "SymHigh")]
        path = write_csv(tmp_path / "q.csv", "quench-scan-v1", rows, config_digest="x")
        dat = emit_plot_data(path).read_text()
        lines = [l for l in dat.splitlines() if l and not l.startswith("#")]
        assert lines == ["0.1 2e-06", "1.0 1e-06"]

    def test_schema_mismatch_names_column(self, tmp_path):
        f = tmp_path / "doctored.csv"
        f.write_text("# schema: branch-v1\nwrong,cols\n1,2\n")
        with pytest.raises(ValueError, match="branch"):
            emit_plot_data(f)


def test_shipped_default_config_matches_builtin():
    shipped = Path(__file__).resolve().parents[1] / "configs" / "default.cfg"
    assert parse_config(shipped.read_text()) == default_config()


def test_all_schemas_are_pinned():
    # column names and order are versioned; changing them is a breaking change
    assert SCHEMAS == {
        "steady-v1": (
            "index", "P_d", "J", "class", "stability", "n_aL", "n_aR", "n_mL",
            "n_mR", "Z", "max_Re_eig", "re_aL", "im_aL", "re_mL", "im_mL",
            "re_aR", "im_aR", "re_mR", "im_mR",
        ),
        "branch-v1": (
            "branch", "P_d", "n_mL", "n_mR", "n_aL", "n_aR", "Z", "max_Re_eig",
            "class", "fold_flag",
        ),
        "phase-v1": ("P_d", "J", "region", "n_stable", "max_abs_Z", "hopf_flag"),
        "trajectory-v1": (
            "t", "re_aL", "im_aL", "re_mL", "im_mL", "re_aR", "im_aR",
            "re_mR", "im_mR", "n_mL", "n_mR",
        ),
        "quench-scan-v1": ("P_final", "delta", "tau", "converged", "final_class"),
        "fluct-v1": (
            "P_d", "class_pair", "fidelity", "infidelity",
            "mutual_information", "E_N", "nu_plus", "nu_minus",
            "lyapunov_residual",
        ),
    }


def test_emit_plot_data_fluct_blocks(tmp_path):
    rows = [
        (20.0, "SymLow:SymLow", 1.0, 0.0, 0.1, 0.0, 0.6, 0.5, 1e-14),
        (25.0, "SymLow:SymLow", 1.0, 0.0, 0.2, 0.0, 0.7, 0.5, 1e-14),
        (20.0, "AsymHighLow:AsymHighLow", 0.7, 0.3, 0.4, 0.0, 0.9, 0.6, 1e-14),
    ]
    path = write_csv(tmp_path / "fluct.csv", "fluct-v1", rows, config_digest="x")
    dat = emit_plot_data(path).read_text()
    blocks = [b for b in dat.split("\n\n") if b.strip()]
    assert len(blocks) == 2
    assert "# pair SymLow:SymLow" in dat
