"""Bit-stable CSV artifacts and gnuplot-ready reshaping.

Every artifact starts with '#'-prefixed comment lines recording the tool
version, the config hash and the column schema, followed by an RFC-4180
body.  Floats are written with shortest round-trip repr, booleans as 0/1;
re-running a subcommand with an identical config reproduces the files byte
for byte (no timestamps).
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from . import __version__

#: Column schemas, versioned; tests pin these.
SCHEMAS = {
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
        "t", "re_aL", "im_aL", "re_mL", "im_mL", "re_aR", "im_aR", "re_mR",
        "im_mR", "n_mL", "n_mR",
    ),
    "quench-scan-v1": ("P_final", "delta", "tau", "converged", "final_class"),
    "fluct-v1": (
        "P_d", "class_pair", "fidelity", "infidelity", "mutual_information",
        "E_N", "nu_plus", "nu_minus", "lyapunov_residual",
    ),
}

#: Numeric codes for phase regions in plot-data matrices.
REGION_CODES = {"1S": 1, "2S": 2, "2S-2AS": 3, "other": 0, "invalid": -1}


def format_cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if bool(v) else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, schema: str, rows, *, config_digest: str,
              extra_comments: tuple[str, ...] = ()) -> Path:
    """Write rows (iterable of tuples matching the schema) with header."""
    columns = SCHEMAS[schema]
    buf = io.StringIO()
    buf.write(f"# magdimer {__version__}\n")
    buf.write(f"# config: sha256:{config_digest}\n")
    buf.write(f"# schema: {schema}\n")
    for line in extra_comments:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(
                f"row width {len(row)} does not match schema {schema} "
                f"({len(columns)} columns)"
            )
        writer.writerow([format_cell(v) for v in row])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())
    return path


def read_csv(path: Path) -> tuple[str, list[str], list[list[str]]]:
    """Read an artifact back: (schema, columns, string rows)."""
    schema = None
    lines = []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("schema:"):
                schema = body.split(":", 1)[1].strip()
            continue
        lines.append(line)
    if schema is None:
        raise ValueError(f"{path}: missing '# schema:' header")
    rows = list(csv.reader(lines))
    if not rows:
        raise ValueError(f"{path}: empty artifact")
    return schema, rows[0], rows[1:]


def _column(columns: list[str], rows: list[list[str]], name: str) -> list[str]:
    try:
        k = columns.index(name)
    except ValueError:
        raise ValueError(f"schema mismatch: missing column {name!r}") from None
    return [r[k] for r in rows]


def emit_plot_data(csv_path: Path, out_path: Path | None = None) -> Path:
    """Reshape an artifact into gnuplot-ready column blocks.

    Branch and fluctuation tables become one block per curve (blank-line
    separated); the phase diagram becomes nonuniform-matrix blocks (|Z| and
    region code); quench scans become log-log-ready (delta, tau) pairs.
    """
    csv_path = Path(csv_path)
    schema, columns, rows = read_csv(csv_path)
    out_path = Path(out_path) if out_path else csv_path.with_suffix(".dat")
    blocks: list[str] = []

    def numeric_block(sub_rows, names, title):
        body = "\n".join(
            " ".join(r[columns.index(n)] for n in names) for r in sub_rows
        )
        return f"# {title}\n# columns: {' '.join(names)}\n{body}"

    if schema == "branch-v1":
        names = ["P_d", "n_mL", "n_mR", "n_aL", "n_aR", "Z", "max_Re_eig", "fold_flag"]
        _column(columns, rows, "branch")
        seen = {}
        for r in rows:
            seen.setdefault(r[columns.index("branch")], []).append(r)
        for branch, sub in seen.items():
            blocks.append(numeric_block(sub, names, f"branch {branch}"))
    elif schema == "fluct-v1":
        names = ["P_d", "fidelity", "infidelity", "mutual_information", "E_N",
                 "nu_plus", "nu_minus"]
        seen = {}
        for r in rows:
            seen.setdefault(r[columns.index("class_pair")], []).append(r)
        for pair, sub in seen.items():
            blocks.append(numeric_block(sub, names, f"pair {pair}"))
    elif schema == "phase-v1":
        p_vals = sorted({float(v) for v in _column(columns, rows, "P_d")})
        j_vals = sorted({float(v) for v in _column(columns, rows, "J")})
        grid: dict[tuple[float, float], list[str]] = {}
        for r in rows:
            key = (float(r[columns.index("J")]), float(r[columns.index("P_d")]))
            grid[key] = r
        for title, getter in (
            ("max_abs_Z matrix (rows J, cols P_d)",
             lambda r: r[columns.index("max_abs_Z")]),
            ("region code matrix (1S=1 2S=2 2S-2AS=3 other=0 invalid=-1)",
             lambda r: str(REGION_CODES[r[columns.index("region")]])),
        ):
            head = f"{len(p_vals)} " + " ".join(repr(p) for p in p_vals)
            mat = [head]
            for j in j_vals:
                mat.append(f"{j!r} " + " ".join(
                    getter(grid[(j, p)]) for p in p_vals
                ))
            blocks.append(f"# {title}\n" + "\n".join(mat))
    elif schema == "quench-scan-v1":
        pairs = sorted(
            (float(r[columns.index("delta")]), float(r[columns.index("tau")]))
            for r in rows if r[columns.index("converged")] == "1"
        )
        body = "\n".join(f"{d!r} {t!r}" for d, t in pairs)
        blocks.append(f"# quench scan (delta, tau), log-log ready\n{body}")
    elif schema in ("trajectory-v1", "steady-v1"):
        names = [c for c in columns if c not in ("class", "stability")]
        blocks.append(numeric_block(rows, names, schema))
    else:
        raise ValueError(f"no plot-data reshaping for schema {schema!r}")

    out_path.write_text("\n\n".join(blocks) + "\n")
    return out_path
