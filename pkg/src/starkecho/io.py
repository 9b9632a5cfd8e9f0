"""File formats: trace and sweep CSVs, decay-rate CSVs, run manifests."""
from __future__ import annotations

import csv
import json
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import PropagationConfig, TraceSet
from .ensemble import Ensemble
from .sequence import PulseSequence, parse_sequence, serialize_sequence

TRACE_COLUMNS = ("time_us", "re12", "im12", "re13", "im13", "re23", "im23", "p11", "p22", "p33")
SWEEP_COLUMNS = ("phi_rad", "amplitude", "intensity", "amplitude_homogeneous")
SWEEP2D_COLUMNS = ("offset_mhz", "phi_rad", "amplitude")


class SchemaError(ValueError):
    pass


def fmt(x) -> str:
    return format(float(x), ".12g")


def atomic_write(path, data) -> Path:
    """Write ``data`` (str or bytes) to a temp file beside ``path``, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def table_text(header, columns) -> str:
    cols = [np.asarray(c) for c in columns]
    lines = [",".join(header)]
    for row in zip(*cols):
        lines.append(",".join(fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def trace_csv(traces: TraceSet) -> str:
    cols = traces.columns()
    return table_text(TRACE_COLUMNS, [cols[c] for c in TRACE_COLUMNS])


def groups_csv(traces: TraceSet) -> str:
    """Wide per-group rho_12: one re/im column pair per group, labelled by delta in kHz."""
    if traces.per_group is None:
        raise ValueError("trace set was computed without per-group data")
    header = ["time_us"]
    cols = [traces.times]
    for d, g in zip(traces.deltas, traces.per_group):
        tag = fmt(d)
        header += [f"re12[{tag}]", f"im12[{tag}]"]
        cols += [g.real, g.imag]
    return table_text(header, cols)


def sweep_csv(table) -> str:
    return table_text(SWEEP_COLUMNS, [table.phi, table.amplitude, table.intensity, table.amplitude_homogeneous])


def sweep2d_csv(offsets, phis, grid) -> str:
    """Long format, row-major over (offset, phi)."""
    off, ph = np.meshgrid(np.asarray(offsets, float), np.asarray(phis, float), indexing="ij")
    return table_text(SWEEP2D_COLUMNS, [off.ravel(), ph.ravel(), np.asarray(grid).ravel()])


def read_table(path) -> tuple[list[str], dict[str, np.ndarray]]:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if not rows:
        raise SchemaError(f"{path}: empty CSV")
    header = [h.strip() for h in rows[0]]
    if len(set(header)) != len(header):
        raise SchemaError(f"{path}: duplicate column names")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(header))
    except ValueError as exc:
        raise SchemaError(f"{path}: malformed numeric row ({exc})") from None
    return header, {h: data[:, i] for i, h in enumerate(header)}


def read_gamma(path) -> np.ndarray:
    """3x3 decay-rate matrix (1/us) from a comma-separated file; ``#`` comments allowed."""
    path = Path(path)
    try:
        g = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None
    if g.shape != (3, 3):
        raise ValueError(f"{path}: decay matrix must be 3x3, got {g.shape[0]}x{g.shape[1]}")
    if np.any(g < 0) or not np.all(np.isfinite(g)):
        raise ValueError(f"{path}: decay rates must be finite and non-negative")
    return g


# ---------------------------------------------------------------------------
# manifests

@dataclass
class RunManifest:
    sequence: str
    ensemble: dict
    config: dict
    gamma: list | None
    echoes: list
    version: str = __version__
    wall_seconds: float = 0.0
    per_group: bool = False
    preset: str | None = None

    def to_json(self) -> str:
        d = {
            "tool": "starkecho",
            "version": self.version,
            "preset": self.preset,
            "sequence": self.sequence,
            "ensemble": self.ensemble,
            "config": self.config,
            "gamma": self.gamma,
            "per_group": self.per_group,
            "echoes": self.echoes,
            "wall_seconds": self.wall_seconds,
        }
        return json.dumps(d, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        d = json.loads(text)
        missing = {"sequence", "ensemble", "config"} - d.keys()
        if missing:
            raise SchemaError(f"manifest lacks {sorted(missing)}")
        return cls(
            sequence=d["sequence"], ensemble=d["ensemble"], config=d["config"],
            gamma=d.get("gamma"), echoes=d.get("echoes", []),
            version=d.get("version", ""), wall_seconds=d.get("wall_seconds", 0.0),
            per_group=bool(d.get("per_group", False)), preset=d.get("preset"),
        )

    @classmethod
    def load(cls, path) -> "RunManifest":
        return cls.from_json(Path(path).read_text())

    def inputs(self):
        """(sequence, ensemble rule, config, gamma) needed to redo the run."""
        seq = parse_sequence(self.sequence)
        c = self.config
        config = PropagationConfig(
            dt=c["dt"], t_end=c["t_end"], method=c["method"],
            control_detuning=c.get("control_detuning", "none"),
            rk4_max_phase=c.get("rk4_max_phase", PropagationConfig.rk4_max_phase),
            workers=c.get("workers", 1),
        )
        gamma = None if self.gamma is None else np.array(self.gamma, dtype=float)
        return seq, self.ensemble.get("rule", "midpoint"), config, gamma


def ensemble_summary(ensemble: Ensemble, rule: str) -> dict:
    s = ensemble.spec
    return {
        "fwhm_khz": s.fwhm, "spacing_khz": s.spacing, "groups": s.group_count,
        "rule": rule, "raw_coverage": ensemble.raw_coverage,
        "delta_min_khz": float(ensemble.deltas[0]), "delta_max_khz": float(ensemble.deltas[-1]),
    }


def config_summary(config: PropagationConfig) -> dict:
    return {
        "dt": config.dt, "t_end": config.t_end, "method": config.method,
        "control_detuning": config.control_detuning, "rk4_max_phase": config.rk4_max_phase,
        "workers": config.workers,
    }


def manifest_for(sequence: PulseSequence, ensemble, rule, config, gamma, echoes, wall, per_group=False, preset=None):
    return RunManifest(
        sequence=serialize_sequence(sequence),
        ensemble=ensemble_summary(ensemble, rule),
        config=config_summary(config),
        gamma=None if gamma is None else np.asarray(gamma, dtype=float).tolist(),
        echoes=echoes, wall_seconds=round(wall, 6), per_group=per_group, preset=preset,
    )


def dumps(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"
