"""
Result persistence and report tables.

Layout of an output directory:

    <out>/summary.csv                     one row per (scenario, algorithm, replication)
    <out>/metadata.json                   resolved config, seed, notes, wall-clock timings
    <out>/<scenario>/<algorithm>.csv      per-period series of every replication
    <out>/<scenario>/<algorithm>_z.csv    learner parameters per period
"""
from __future__ import annotations

import json
import logging
import math
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from .core import ResultsIOError
from .harness import MetricSeries, ScenarioResult

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.15g"
SERIES_COLUMNS = ["replication", "period", "mean_utility", "avg_cum_utility", "approval_rate", "default_rate"]
SUMMARY_COLUMNS = [
    "scenario", "pool", "sweep_param", "sweep_value", "algorithm", "replication",
    "converged_utility", "normalized_utility", "rise_time", "post_shift_rise_time",
    "converged_approval_rate", "converged_default_rate",
    "regret_D", "regret_G", "regret_bound", "regret_gap", "regret_gap_stderr",
]


def _series_frame(series: Sequence[MetricSeries]) -> pd.DataFrame:
    frames = []
    for s in series:
        frames.append(pd.DataFrame({
            "replication": np.full(s.periods, s.replication, dtype=np.int64),
            "period": np.arange(1, s.periods + 1, dtype=np.int64),
            "mean_utility": s.mean_utility,
            "avg_cum_utility": s.avg_cum_utility,
            "approval_rate": s.approval_rate,
            "default_rate": s.default_rate,
        }))
    if not frames:
        return pd.DataFrame(columns=SERIES_COLUMNS)
    return pd.concat(frames, ignore_index=True)[SERIES_COLUMNS]


def _z_frame(series: Sequence[MetricSeries]) -> Optional[pd.DataFrame]:
    frames = []
    for s in series:
        if s.z is None or s.z.size == 0:
            continue
        dim = s.z.shape[1]
        frame = pd.DataFrame(s.z, columns=[f"z{k}" for k in range(1, dim + 1)])
        frame.insert(0, "period", np.arange(1, s.z.shape[0] + 1, dtype=np.int64))
        frame.insert(0, "replication", s.replication)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True) if frames else None


def _blank(value) -> Any:
    if value is None:
        return None
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


def summary_rows(result: ScenarioResult, sweep: Optional[Dict[str, Any]] = None) -> List[Dict[str, Any]]:
    sweep = sweep or {}
    rows = []
    for s in result.all_series():
        row = {
            "scenario": result.config.name,
            "pool": result.config.pool,
            "sweep_param": sweep.get("param"),
            "sweep_value": sweep.get("value"),
            "algorithm": s.algorithm,
            "replication": s.replication,
            "converged_utility": _blank(s.converged_utility),
            "normalized_utility": _blank(s.normalized_utility),
            "rise_time": s.rise_time,
            "post_shift_rise_time": s.post_shift_rise_time,
            "converged_approval_rate": _blank(s.converged_approval_rate),
            "converged_default_rate": _blank(s.converged_default_rate),
        }
        if s.regret is not None:
            row.update(regret_D=s.regret.D, regret_G=s.regret.G, regret_bound=s.regret.bound,
                       regret_gap=s.regret.gap, regret_gap_stderr=s.regret.gap_stderr)
        rows.append(row)
    return rows


def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n")
    except OSError as e:
        raise ResultsIOError(f"failed to write {path}: {e}")


def persist_results(results: Sequence[ScenarioResult], path, resolved_config: Dict[str, Any],
                    seed: int, sweeps: Optional[Sequence[Optional[Dict[str, Any]]]] = None) -> List[Path]:
    """Write per-period CSVs, summary.csv and metadata.json under `path`; return the files written."""
    out = Path(path)
    sweeps = list(sweeps) if sweeps is not None else [None] * len(results)
    written: List[Path] = []
    rows: List[Dict[str, Any]] = []
    timings: Dict[str, Dict[str, List[float]]] = {}
    notes: Dict[str, List[str]] = {}

    for result, sweep in zip(results, sweeps):
        scenario_dir = out / result.config.name
        for name in result.config.algorithms:
            series = result.series[name]
            target = scenario_dir / f"{name}.csv"
            _write_csv(_series_frame(series), target)
            written.append(target)
            z = _z_frame(series)
            if z is not None:
                target = scenario_dir / f"{name}_z.csv"
                _write_csv(z, target)
                written.append(target)
        rows.extend(summary_rows(result, sweep))
        timings[result.config.name] = {name: [round(s.wall_time_s, 6) for s in result.series[name]]
                                       for name in result.config.algorithms}
        timings[result.config.name]["scenario_total_s"] = [round(result.runtime_s, 6)]
        notes[result.config.name] = list(result.notes) + [
            "normalized utility uses the per-scenario lowest mean converged utility across compared algorithms",
        ]

    summary = pd.DataFrame(rows, columns=SUMMARY_COLUMNS)
    _write_csv(summary, out / "summary.csv")
    written.append(out / "summary.csv")

    metadata = {
        "seed": seed,
        "config": resolved_config,
        "scenarios": [r.config.name for r in results],
        "pools": {r.config.name: r.pool_info for r in results},
        "notes": notes,
        "timings_s": timings,
        "created_at": datetime.now(timezone.utc).isoformat(),
    }
    try:
        with open(out / "metadata.json", "w", encoding="utf-8") as fh:
            json.dump(metadata, fh, indent=2, sort_keys=True, default=str)
    except OSError as e:
        raise ResultsIOError(f"failed to write {out / 'metadata.json'}: {e}")
    written.append(out / "metadata.json")
    logger.info(f"Wrote {len(written)} result files to {out}")
    return written


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

def load_summaries(paths: Iterable) -> pd.DataFrame:
    """Concatenate summary.csv files found at or below each path."""
    frames = []
    for p in paths:
        p = Path(p)
        candidates = [p] if p.is_file() else sorted(p.rglob("summary.csv"))
        for candidate in candidates:
            try:
                frames.append(pd.read_csv(candidate))
            except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
                raise ResultsIOError(f"failed to read {candidate}: {e}")
    if not frames:
        raise ResultsIOError(f"no summary.csv found under {[str(p) for p in paths]}")
    return pd.concat(frames, ignore_index=True)


def report_tables(summary: pd.DataFrame) -> Dict[str, pd.DataFrame]:
    tables: Dict[str, pd.DataFrame] = {}
    if summary.empty:
        return tables
    tables["normalized_utility"] = summary.pivot_table(index="scenario", columns="algorithm",
                                                       values="normalized_utility", aggfunc="mean")
    tables["rise_time"] = summary.pivot_table(index="scenario", columns="algorithm",
                                              values="rise_time", aggfunc="mean")
    if summary["post_shift_rise_time"].notna().any():
        tables["post_shift_rise_time"] = summary.pivot_table(index="scenario", columns="algorithm",
                                                             values="post_shift_rise_time", aggfunc="mean")
    quartiles = (summary.dropna(subset=["normalized_utility"])
                 .groupby(["scenario", "algorithm"])["normalized_utility"]
                 .quantile([0.25, 0.5, 0.75]).unstack())
    if not quartiles.empty:
        quartiles.columns = ["q1", "median", "q3"]
        tables["normalized_quartiles"] = quartiles
    swept = summary.dropna(subset=["sweep_value"])
    if not swept.empty:
        tables["tradeoff"] = swept.pivot_table(index=["sweep_param", "sweep_value"], columns="algorithm",
                                               values=["converged_approval_rate", "converged_default_rate"],
                                               aggfunc="mean")
    return tables


def write_report(tables: Dict[str, pd.DataFrame], out_dir) -> List[Path]:
    out = Path(out_dir)
    written = []
    for name, table in tables.items():
        target = out / f"report_{name}.csv"
        try:
            out.mkdir(parents=True, exist_ok=True)
            table.to_csv(target, float_format=FLOAT_FORMAT, lineterminator="\n")
        except OSError as e:
            raise ResultsIOError(f"failed to write {target}: {e}")
        written.append(target)
    logger.info(f"Wrote {len(written)} report tables to {out}")
    return written
