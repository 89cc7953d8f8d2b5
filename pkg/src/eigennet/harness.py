"""Experiment configuration, orchestration and result emission.

Configs are flat ``key = value`` text ('#' starts a comment). Unknown keys
are rejected; missing required keys are reported together. Every experiment
is driven by a master seed; trial t uses the documented per-trial seed

    trial_seed(master, t) = splitmix64(splitmix64(master) XOR (t + 1))

so alternate implementations can match the trial partitioning even if their
raw random streams differ. Emitted CSV files are byte-identical across
reruns of the same config and seed; wall-clock duration is kept out of the
files and reported on the console.
"""

from __future__ import annotations

import dataclasses
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

__all__ = [
    "ExperimentConfig",
    "ExperimentReport",
    "EXPERIMENTS",
    "trial_seed",
    "parse_config_text",
    "validate_config",
    "run",
    "emit_csv",
    "emit_report",
]

EXPERIMENTS = (
    "ac-compare",
    "eig-converge",
    "multi-eig",
    "roc",
    "audit-messages",
    "prop-check",
)

_SCHEMAS = {
    "convergence": (
        "experiment",
        "engine",
        "algorithm",
        "K",
        "N",
        "M",
        "I",
        "trials",
        "eig_index",
        "mse",
    ),
    "roc": ("detector", "pipeline", "threshold", "pfa", "pd"),
    "audit": (
        "algorithm",
        "node",
        "degree",
        "ac_n_calls",
        "ac_1_calls",
        "units",
        "time_periods",
    ),
}

_ENGINE_TOKENS = ("standard", "chebyshev", "standard+failures", "chebyshev+failures")

_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def trial_seed(master_seed: int, trial_index: int) -> int:
    """Documented per-trial seed derivation (see module docstring)."""
    return _splitmix64(_splitmix64(master_seed & _MASK64) ^ ((trial_index + 1) & _MASK64))


@dataclass
class ExperimentConfig:
    experiment: str
    k: int = 40
    n: int = 10
    m: tuple[int, ...] = (20,)
    ac_iters: tuple[int, ...] = (30,)
    sigma2: float = 1.0
    p: int = 1
    snr_db: tuple[float, ...] = (5.0,)
    engine: str = "chebyshev"
    engines: tuple[str, ...] = ("standard", "chebyshev")
    link_failure_prob: float = 0.0
    trials: int = 500
    seed: int = 1
    topology: str = "generate"
    radius: float = 0.3
    topology_seed: int = 1
    graph_file: str | None = None
    detectors: tuple[str, ...] = ("RT", "GT")
    alphas: tuple[float, ...] = tuple(round(0.05 * i, 2) for i in range(1, 20))
    eig_indices: tuple[int, ...] = (1, 3, 5, 9)
    report_node: int = 0
    spurious_tol: float = 1e-3
    out: str = "out"

    @property
    def m_max(self) -> int:
        return max(self.m)


@dataclass
class ExperimentReport:
    """In-memory result of one experiment run."""

    config: ExperimentConfig
    rows: list[dict]
    schema: str | None
    trial_seeds: list[int]
    duration_s: float
    extra: dict = field(default_factory=dict)
    topology_text: str | None = None


_INT_KEYS = {"K", "N", "P", "trials", "seed", "topology_seed", "report_node"}
_FLOAT_KEYS = {"sigma2", "link_failure_prob", "radius", "spurious_tol"}
_INT_LIST_KEYS = {"M", "I", "eig_indices"}
_FLOAT_LIST_KEYS = {"snr_db", "alphas"}
_STR_KEYS = {"experiment", "engine", "topology", "graph_file", "out"}
_STR_LIST_KEYS = {"engines", "detectors"}
_ALL_KEYS = (
    _INT_KEYS | _FLOAT_KEYS | _INT_LIST_KEYS | _FLOAT_LIST_KEYS | _STR_KEYS | _STR_LIST_KEYS
)

_KEY_TO_FIELD = {
    "K": "k",
    "N": "n",
    "P": "p",
    "M": "m",
    "I": "ac_iters",
}


def parse_config_text(text: str) -> dict[str, str]:
    """Parse 'key = value' lines into a string map, rejecting malformed lines."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value in {raw!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def _convert(key: str, value: str):
    def fail(kind: str):
        raise ConfigError(f"key {key!r}: cannot parse {value!r} as {kind}")

    parts = value.replace(",", " ").split()
    if key in _INT_KEYS:
        try:
            return int(value)
        except ValueError:
            fail("integer")
    if key in _FLOAT_KEYS:
        try:
            return float(value)
        except ValueError:
            fail("number")
    if key in _INT_LIST_KEYS:
        try:
            return tuple(int(p) for p in parts)
        except ValueError:
            fail("integer list")
    if key in _FLOAT_LIST_KEYS:
        try:
            return tuple(float(p) for p in parts)
        except ValueError:
            fail("number list")
    if key in _STR_LIST_KEYS:
        return tuple(parts)
    return value


def validate_config(source: str | dict, experiment: str | None = None) -> ExperimentConfig:
    """Build a fully-defaulted, validated config from config text or a dict.

    ``experiment`` (normally the CLI subcommand) overrides a missing
    ``experiment`` key and must agree with one that is present.
    """
    raw = parse_config_text(source) if isinstance(source, str) else dict(source)
    unknown = sorted(set(raw) - _ALL_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    values: dict[str, object] = {}
    for key, text_value in raw.items():
        converted = (
            _convert(key, text_value) if isinstance(text_value, str) else text_value
        )
        values[_KEY_TO_FIELD.get(key, key)] = converted
    file_experiment = values.pop("experiment", None)
    if experiment is None:
        experiment = file_experiment
    elif file_experiment is not None and file_experiment != experiment:
        raise ConfigError(
            f"config names experiment {file_experiment!r} but {experiment!r} was requested"
        )
    missing = []
    if experiment is None:
        missing.append("experiment")
    if values.get("topology", "generate") == "file" and not values.get("graph_file"):
        missing.append("graph_file")
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")
    cfg = ExperimentConfig(experiment=experiment, **values)  # type: ignore[arg-type]
    _check_config(cfg)
    return cfg


def _check_config(cfg: ExperimentConfig) -> None:
    problems = []
    if cfg.experiment not in EXPERIMENTS:
        problems.append(f"experiment must be one of {', '.join(EXPERIMENTS)}")
    if cfg.k < 2:
        problems.append("K must be at least 2")
    if cfg.n < 1:
        problems.append("N must be at least 1")
    if not cfg.m or any(mi < 1 for mi in cfg.m):
        problems.append("M entries must be positive")
    if any(mi > cfg.k for mi in cfg.m) and cfg.experiment in (
        "multi-eig",
        "eig-converge",
        "roc",
    ):
        problems.append("M cannot exceed K for Lanczos-based experiments")
    if not cfg.ac_iters or any(i < 0 for i in cfg.ac_iters):
        problems.append("I entries must be nonnegative")
    if cfg.sigma2 <= 0:
        problems.append("sigma2 must be positive")
    if cfg.p < 0:
        problems.append("P must be nonnegative")
    if cfg.p > 0 and len(cfg.snr_db) not in (1, cfg.p):
        problems.append("snr_db must have one entry or one per source")
    if cfg.engine not in ("ideal",) + _ENGINE_TOKENS:
        problems.append(f"engine must be one of ideal, {', '.join(_ENGINE_TOKENS)}")
    if any(e not in _ENGINE_TOKENS for e in cfg.engines):
        problems.append(f"engines entries must be among {', '.join(_ENGINE_TOKENS)}")
    if not (0.0 <= cfg.link_failure_prob < 1.0):
        problems.append("link_failure_prob must lie in [0, 1)")
    if cfg.trials < 1:
        problems.append("trials must be at least 1")
    if cfg.topology not in ("generate", "file"):
        problems.append("topology must be 'generate' or 'file'")
    if cfg.radius <= 0:
        problems.append("radius must be positive")
    if any(d not in ("RT", "GT", "ST", "JT") for d in cfg.detectors):
        problems.append("detectors entries must be among RT, GT, ST, JT")
    if not cfg.alphas or any(not (0.0 < a < 1.0) for a in cfg.alphas):
        problems.append("alphas must lie in (0, 1)")
    if any(i < 1 for i in cfg.eig_indices):
        problems.append("eig_indices must be positive")
    if not (0 <= cfg.report_node < cfg.k):
        problems.append("report_node must be a valid node index")
    if cfg.spurious_tol <= 0:
        problems.append("spurious_tol must be positive")
    if problems:
        raise ConfigError("; ".join(problems))


def run(cfg: ExperimentConfig) -> ExperimentReport:
    """Execute one experiment and return its report."""
    from . import experiments

    runners = {
        "ac-compare": experiments.run_ac_compare,
        "eig-converge": experiments.run_eig_converge,
        "multi-eig": experiments.run_multi_eig,
        "roc": experiments.run_roc,
        "audit-messages": experiments.run_audit_messages,
        "prop-check": experiments.run_prop_check,
    }
    start = time.perf_counter()
    report = runners[cfg.experiment](cfg)
    report.duration_s = time.perf_counter() - start
    return report


def _format_value(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_csv(report: ExperimentReport, out_dir: str | Path) -> Path | None:
    """Write the report rows as CSV with the schema's exact column order."""
    if report.schema is None:
        return None
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    columns = _SCHEMAS[report.schema]
    path = out_dir / f"{report.config.experiment}.csv"
    lines = [",".join(columns)]
    for row in report.rows:
        lines.append(",".join(_format_value(row[c]) for c in columns))
    path.write_text("\n".join(lines) + "\n")
    return path


def emit_report(report: ExperimentReport, out_dir: str | Path) -> list[Path]:
    """Write all result files: CSV rows, a JSON report, and the topology echo.

    The JSON report echoes the validated config, the per-trial seeds and any
    experiment-specific summary values; it deliberately omits wall-clock
    duration so reruns produce byte-identical files.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    csv_path = emit_csv(report, out_dir)
    if csv_path is not None:
        paths.append(csv_path)
    payload = {
        "experiment": report.config.experiment,
        "config": dataclasses.asdict(report.config),
        "trial_seeds": report.trial_seeds,
        "rows": len(report.rows),
        "extra": report.extra,
    }
    json_path = out_dir / f"{report.config.experiment}_report.json"
    json_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    paths.append(json_path)
    if report.topology_text is not None:
        topo_path = out_dir / "topology.txt"
        topo_path.write_text(report.topology_text)
        paths.append(topo_path)
    return paths
