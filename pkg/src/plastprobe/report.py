"""Report emission: report.json, energy.csv, per-table CSVs, sweep summaries.

report.json is deterministic for a given resolved config (sorted keys,
fixed float formatting); wall-clock metadata lives in a separate
meta.json so byte-identical reruns are possible in reproducible mode.
"""

from __future__ import annotations

import json
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .evolution import EnergyReport
from .probes import ProbeReport, UniformityReport


class ReportIOError(RuntimeError):
    pass


def _float_fmt(reproducible: bool) -> str:
    return "%.17e" if reproducible else "%.12g"


def _jsonify(obj):
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonify(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return None
    return obj


def _write_json(path: Path, payload: dict):
    try:
        with open(path, "w") as fh:
            json.dump(_jsonify(payload), fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise ReportIOError(f"cannot write {path}: {exc}")


def _write_csv(path: Path, header: list[str], rows, fmt: str):
    def cell(v):
        if v is None:
            return ""
        if isinstance(v, str):
            return v
        return fmt % v

    try:
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(cell(v) for v in row) + "\n")
    except OSError as exc:
        raise ReportIOError(f"cannot write {path}: {exc}")


def write_energy_csv(path: Path, energy: EnergyReport, reproducible: bool):
    fmt = _float_fmt(reproducible)
    header = ["time", "e_pen", "overshoot_linf", "overshoot_l2", "sigdot_l2",
              "xidot_l2", "udot_h1", "dissipation_cum"]
    rows = []
    for k, t in enumerate(energy.times):
        if k == 0:
            rows.append([t, energy.e_pen[0], energy.overshoot_linf[0],
                         energy.overshoot_l2[0], None, None, None, None])
        else:
            rows.append([t, energy.e_pen[k], energy.overshoot_linf[k],
                         energy.overshoot_l2[k], energy.sigdot_l2[k - 1],
                         energy.xidot_l2[k - 1], energy.udot_h1[k - 1],
                         energy.dissipation_cum[k - 1]])
    _write_csv(path, header, rows, fmt)


def write_table_csvs(out_dir: Path, probe_report: ProbeReport,
                     reproducible: bool) -> list[str]:
    fmt = _float_fmt(reproducible)
    names = []
    for row in probe_report.rows:
        name = f"seminorm_{row.axis}_{row.field}_{row.mode}.csv"
        rows = [[row.axis, row.field, row.mode, h, v]
                for h, v in row.table.rows()]
        _write_csv(out_dir / name, ["axis", "field", "mode", "h", "value"],
                   rows, fmt)
        names.append(name)
    return names


def run_report_payload(scenario, energy: EnergyReport,
                       probe_report: ProbeReport | None) -> dict:
    from .probes import energy_summary
    payload = {
        "config": scenario.config,
        "energy_summary": energy_summary(energy),
        "newton": None,
        "exponents": None,
        "targets": None,
        "interpolation": None,
    }
    if probe_report is not None:
        payload["exponents"] = probe_report.summary()
        payload["targets"] = asdict(probe_report.targets)
        if probe_report.interpolation is not None:
            rep = probe_report.interpolation
            payload["interpolation"] = {
                "delta": rep.delta, "window": list(rep.window),
                "spread": rep.spread, "degenerate": rep.degenerate,
                "flagged_h": rep.flagged, "rows": rep.as_rows(),
            }
    return payload


def emit_run_report(out_dir: str | Path, scenario, energy: EnergyReport,
                    probe_report: ProbeReport | None = None,
                    history=None, reproducible: bool = False,
                    runtime_seconds: float | None = None) -> Path:
    """Write report.json, energy.csv and any seminorm tables; returns the dir."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportIOError(f"cannot create {out}: {exc}")
    payload = run_report_payload(scenario, energy, probe_report)
    if history is not None:
        payload["newton"] = {
            "iterations": list(map(int, history.newton_iters)),
            "max_relative_residual": (max(history.residual_rel)
                                      if history.residual_rel else None),
        }
    _write_json(out / "report.json", payload)
    write_energy_csv(out / "energy.csv", energy, reproducible)
    if probe_report is not None:
        write_table_csvs(out, probe_report, reproducible)
    _write_json(out / "meta.json", {
        "written_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "runtime_seconds": runtime_seconds,
        "reproducible": reproducible,
    })
    return out


def emit_sweep_report(out_dir: str | Path, scenario,
                      uniformity: UniformityReport,
                      reproducible: bool = False,
                      runtime_seconds: float | None = None) -> Path:
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ReportIOError(f"cannot create {out}: {exc}")
    entries = []
    for entry in uniformity.entries:
        sub = out / f"mu_{entry.mu:.3e}"
        sub.mkdir(exist_ok=True)
        _write_json(sub / "report.json", {
            "mu": entry.mu,
            "energy_summary": entry.energy_summary,
            "exponents": entry.probe_summary,
            "failure": entry.failure,
        })
        entries.append({"mu": entry.mu, "dir": sub.name,
                        "failure": entry.failure})
    _write_json(out / "sweep_summary.json", {
        "config": scenario.config,
        "entries": entries,
        "spreads": uniformity.spreads,
        "overshoot_l2_slope": uniformity.overshoot_l2_slope,
        "overshoot_linf_slope": uniformity.overshoot_linf_slope,
        "failures": uniformity.failures,
    })
    _write_json(out / "meta.json", {
        "written_at": time.strftime("%Y-%m-%dT%H:%M:%S"),
        "runtime_seconds": runtime_seconds,
        "reproducible": reproducible,
    })
    return out
