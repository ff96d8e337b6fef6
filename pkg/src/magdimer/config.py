"""Experiment configuration: parsing, validation, canonical serialization.

The config grammar is flat INI-style text: ``[section]`` headers, ``key =
value`` pairs, ``#`` comments (full-line or trailing).  Frequencies are
given as omega/2pi values in bench units (GHz, MHz, nHz, mW).  Exactly one way of fixing the drive detunings must be used:
either ``nu_d_GHz`` (with ``nu_m_GHz``) or the pair ``delta_a_MHz`` /
``delta_m_MHz``.  Unknown keys are hard errors.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace

from .errors import ConfigError
from .model import SystemParams

#: Shipped default: the canonical multistable working point.
DEFAULT_CONFIG_TEXT = """\
[system]
nu_a_GHz = 10.0
delta_a_MHz = -11.0
delta_m_MHz = -11.0
kappa_a_MHz = 1.0
kappa_m_MHz = 1.0
g_MHz = 7.0
K_nHz = 9.0
J_over_kappa_a = 0.8
P_d_mW = 30.0

[sweep]
p_min_mW = 1.0
p_max_mW = 100.0
p_count = 101
j_min = 0.2
j_max = 3.0
j_count = 41

[quench]
target = S_down
offset_min_rel = 1e-4
offset_max_rel = 1e-1
offset_count = 8
t_settle_kappa = 200.0
t_max_kappa = 100000.0
eps_rel = 1e-4

[solver]
lattice = 9
phase_offsets = 4
integrate_rtol = 1e-9

[run]
out_dir = out
seed = 0
workers = 0
"""

QUENCH_TARGETS = ("S_up", "S_down", "AS_up", "AS_down")


@dataclass(frozen=True)
class RawSystem:
    """System-section values exactly as configured (bench units)."""

    nu_a_GHz: float
    kappa_a_MHz: float
    kappa_m_MHz: float
    g_MHz: float
    K_nHz: float
    P_d_mW: float
    J_over_kappa_a: float | None = None
    J_abs_MHz: float | None = None
    nu_m_GHz: float | None = None
    nu_d_GHz: float | None = None
    delta_a_MHz: float | None = None
    delta_m_MHz: float | None = None

    def validate(self) -> None:
        by_nu = self.nu_d_GHz is not None
        by_delta = self.delta_a_MHz is not None or self.delta_m_MHz is not None
        if by_nu and by_delta:
            raise ConfigError(
                "conflicting detuning specification: give either nu_d_GHz or "
                "delta_a_MHz/delta_m_MHz, not both"
            )
        if by_nu and self.nu_m_GHz is None:
            raise ConfigError("nu_m_GHz is required when nu_d_GHz is given")
        if by_delta and (self.delta_a_MHz is None or self.delta_m_MHz is None):
            raise ConfigError("delta_a_MHz and delta_m_MHz must be given together")
        if not by_nu and not by_delta:
            raise ConfigError(
                "missing detuning specification: give nu_d_GHz or "
                "delta_a_MHz/delta_m_MHz"
            )
        if self.J_over_kappa_a is None and self.J_abs_MHz is None:
            raise ConfigError("missing required key J_over_kappa_a (or J_abs_MHz)")

    def to_params(self) -> SystemParams:
        self.validate()
        nu_a = self.nu_a_GHz * 1e9
        if self.nu_d_GHz is not None:
            nu_d = self.nu_d_GHz * 1e9
            nu_m = self.nu_m_GHz * 1e9
        else:
            nu_d = nu_a - self.delta_a_MHz * 1e6
            nu_m = nu_d + self.delta_m_MHz * 1e6
        return SystemParams(
            nu_a=nu_a,
            nu_m=nu_m,
            nu_d=nu_d,
            kappa_a=self.kappa_a_MHz * 1e6,
            kappa_m=self.kappa_m_MHz * 1e6,
            g=self.g_MHz * 1e6,
            J=self.J_over_kappa_a if self.J_over_kappa_a is not None else 0.0,
            K=self.K_nHz * 1e-9,
            P_d=self.P_d_mW * 1e-3,
            J_Hz=None if self.J_abs_MHz is None else self.J_abs_MHz * 1e6,
        )


@dataclass(frozen=True)
class SweepSettings:
    p_min_mW: float = 1.0
    p_max_mW: float = 100.0
    p_count: int = 101
    j_min: float = 0.2
    j_max: float = 3.0
    j_count: int = 41

    def validate(self) -> None:
        if not (self.p_min_mW > 0 and self.p_max_mW > self.p_min_mW):
            raise ConfigError("sweep power grid must satisfy 0 < p_min_mW < p_max_mW")
        if not (0 <= self.j_min <= self.j_max):
            raise ConfigError("sweep J grid must satisfy 0 <= j_min <= j_max")
        if self.p_count < 1 or self.j_count < 1:
            raise ConfigError("sweep grid counts must be >= 1")


@dataclass(frozen=True)
class QuenchSettings:
    target: str = "S_down"
    offset_min_rel: float = 1e-4
    offset_max_rel: float = 1e-1
    offset_count: int = 8
    t_settle_kappa: float = 200.0
    t_max_kappa: float = 1e5
    eps_rel: float = 1e-4

    def validate(self) -> None:
        if self.target not in QUENCH_TARGETS:
            raise ConfigError(
                f"quench target must be one of {QUENCH_TARGETS}, got {self.target!r}"
            )
        if not (0 < self.offset_min_rel < self.offset_max_rel < 1):
            raise ConfigError("quench offsets must satisfy 0 < min < max < 1")
        if self.offset_count < 1:
            raise ConfigError("quench offset_count must be >= 1")
        if min(self.t_settle_kappa, self.t_max_kappa, self.eps_rel) <= 0:
            raise ConfigError("quench times and eps_rel must be positive")


@dataclass(frozen=True)
class SolverSettings:
    lattice: int = 9
    phase_offsets: int = 4
    integrate_rtol: float = 1e-9

    def validate(self) -> None:
        if self.lattice < 2 or self.phase_offsets < 1:
            raise ConfigError("solver lattice must be >= 2 and phase_offsets >= 1")
        if self.integrate_rtol <= 0:
            raise ConfigError("integrate_rtol must be positive")


@dataclass(frozen=True)
class ExperimentConfig:
    system: RawSystem
    sweep: SweepSettings = field(default_factory=SweepSettings)
    quench: QuenchSettings = field(default_factory=QuenchSettings)
    solver: SolverSettings = field(default_factory=SolverSettings)
    out_dir: str = "out"
    seed: int = 0
    workers: int = 0

    def validate(self) -> "ExperimentConfig":
        self.system.validate()
        self.sweep.validate()
        self.quench.validate()
        self.solver.validate()
        if self.seed < 0 or self.workers < 0:
            raise ConfigError("seed and workers must be nonnegative")
        return self

    @property
    def params(self) -> SystemParams:
        return self.system.to_params()


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_FLOAT_KEYS = {
    ("system", k): k for k in (
        "nu_a_GHz", "nu_m_GHz", "nu_d_GHz", "delta_a_MHz", "delta_m_MHz",
        "kappa_a_MHz", "kappa_m_MHz", "g_MHz", "K_nHz", "J_over_kappa_a",
        "J_abs_MHz", "P_d_mW",
    )
}

_SCHEMA: dict[str, dict[str, type]] = {
    "system": {k: float for (_, k) in _FLOAT_KEYS},
    "sweep": {"p_min_mW": float, "p_max_mW": float, "p_count": int,
              "j_min": float, "j_max": float, "j_count": int},
    "quench": {"target": str, "offset_min_rel": float, "offset_max_rel": float,
               "offset_count": int, "t_settle_kappa": float,
               "t_max_kappa": float, "eps_rel": float},
    "solver": {"lattice": int, "phase_offsets": int, "integrate_rtol": float},
    "run": {"out_dir": str, "seed": int, "workers": int},
}

_REQUIRED_SYSTEM = ("nu_a_GHz", "kappa_a_MHz", "kappa_m_MHz", "g_MHz",
                    "K_nHz", "P_d_mW")


def _parse_value(raw: str, typ: type, where: str):
    if typ is str:
        return raw
    try:
        if typ is int:
            return int(raw)
        return float(raw)
    except ValueError:
        raise ConfigError(f"unparseable {typ.__name__} {raw!r} at {where}") from None


def parse_config(text: str) -> ExperimentConfig:
    """Parse and fully validate config text; unknown keys are hard errors."""
    section = None
    values: dict[str, dict[str, object]] = {s: {} for s in _SCHEMA}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"line {lineno}"
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in _SCHEMA:
                raise ConfigError(f"unknown section [{section}] at {where}")
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value' at {where}: {raw_line!r}")
        if section is None:
            raise ConfigError(f"key outside any [section] at {where}")
        key, _, raw_value = line.partition("=")
        key = key.strip()
        raw_value = raw_value.strip()
        if key not in _SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}] at {where}")
        if key in values[section]:
            raise ConfigError(f"duplicate key {key!r} in [{section}] at {where}")
        values[section][key] = _parse_value(raw_value, _SCHEMA[section][key],
                                            f"{where} (key {key!r})")

    sys_vals = values["system"]
    for key in _REQUIRED_SYSTEM:
        if key not in sys_vals:
            raise ConfigError(f"missing required key {key!r} in [system]")
    cfg = ExperimentConfig(
        system=RawSystem(**sys_vals),
        sweep=SweepSettings(**values["sweep"]),
        quench=QuenchSettings(**values["quench"]),
        solver=SolverSettings(**values["solver"]),
        **values["run"],
    )
    return cfg.validate()


def default_config() -> ExperimentConfig:
    return parse_config(DEFAULT_CONFIG_TEXT)


def _format_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; ``parse_config(serialize_config(c)) == c``."""
    lines = ["[system]"]
    for f in fields(RawSystem):
        v = getattr(cfg.system, f.name)
        if v is not None:
            lines.append(f"{f.name} = {_format_value(v)}")
    for name, obj in (("sweep", cfg.sweep), ("quench", cfg.quench),
                      ("solver", cfg.solver)):
        lines.append("")
        lines.append(f"[{name}]")
        for f in fields(obj):
            lines.append(f"{f.name} = {_format_value(getattr(obj, f.name))}")
    lines.extend([
        "",
        "[run]",
        f"out_dir = {cfg.out_dir}",
        f"seed = {cfg.seed}",
        f"workers = {cfg.workers}",
        "",
    ])
    return "\n".join(lines)


def config_hash(cfg: ExperimentConfig) -> str:
    """Short sha256 digest of the result-affecting configuration.

    Output location and worker count are execution details and are
    normalized away, so artifacts produced by identical physics configs
    carry identical digests.
    """
    normalized = replace(cfg, out_dir="out", workers=0)
    return hashlib.sha256(serialize_config(normalized).encode()).hexdigest()[:12]


def override(cfg: ExperimentConfig, *, p_d_mW: float | None = None,
             j: float | None = None, seed: int | None = None,
             out_dir: str | None = None,
             grid: tuple[int, int] | None = None) -> ExperimentConfig:
    """Apply command-line overrides, revalidating the result."""
    system = cfg.system
    if p_d_mW is not None:
        system = replace(system, P_d_mW=p_d_mW)
    if j is not None:
        system = replace(system, J_over_kappa_a=j, J_abs_MHz=None)
    sweep = cfg.sweep
    if grid is not None:
        sweep = replace(sweep, p_count=grid[0], j_count=grid[1])
    out = replace(
        cfg, system=system, sweep=sweep,
        seed=cfg.seed if seed is None else seed,
        out_dir=cfg.out_dir if out_dir is None else out_dir,
    )
    return out.validate()
