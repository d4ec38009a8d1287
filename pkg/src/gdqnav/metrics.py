"""Per-epoch metrics, their CSV schema, and cross-seed aggregation.

The metrics CSV is deterministic for a given (config, seed): wall-clock
timings are kept out of it and written to a `timing.csv` sidecar instead, so
two identical runs produce byte-identical metric files. Header comment lines
embed the schema version, the config hash and the seed; aggregation refuses
to mix files whose hashes differ.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

SCHEMA_VERSION = 1
METRIC_COLUMNS = ("success_rate", "avg_reward", "avg_steps",
                  "collision_pct", "avg_landmark_distance")


@dataclass
class EpochMetrics:
    """One epoch (= one training episode), averaged over the agents."""

    epoch: int
    success_rate: float
    avg_reward: float
    avg_steps: float
    collision_pct: float
    avg_landmark_distance: float | None
    wall_time: float

    def __post_init__(self):
        if not 0.0 <= self.success_rate <= 1.0:
            raise ConfigurationError(f"success_rate out of range: {self.success_rate}")
        if not 0.0 <= self.collision_pct <= 1.0:
            raise ConfigurationError(f"collision_pct out of range: {self.collision_pct}")

    def row(self) -> list:
        vals = [self.epoch, self.success_rate, self.avg_reward,
                self.avg_steps, self.collision_pct]
        vals.append("" if self.avg_landmark_distance is None else self.avg_landmark_distance)
        return [v if isinstance(v, (int, str)) else repr(float(v)) for v in vals]


def header_lines(config_hash: str, seed: int, extra: dict | None = None) -> list[str]:
    fields = {"config_hash": config_hash, "seed": seed}
    fields.update(extra or {})
    kv = " ".join(f"{k}={v}" for k, v in fields.items())
    return [f"# gdqnav-metrics schema={SCHEMA_VERSION}", f"# {kv}"]


class MetricsWriter:
    """Streams epoch rows to disk so partial output survives a fault."""

    def __init__(self, path, config_hash: str, seed: int, extra: dict | None = None):
        self.path = path
        self._fh = open(path, "w", encoding="utf-8", newline="")
        for line in header_lines(config_hash, seed, extra):
            self._fh.write(line + "\n")
        self._csv = csv.writer(self._fh)
        self._csv.writerow(("epoch",) + METRIC_COLUMNS)
        self._fh.flush()

    def write(self, m: EpochMetrics) -> None:
        self._csv.writerow(m.row())
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


def read_metrics(path):
    """Parse a metrics CSV. Returns (meta dict, column dict of arrays)."""
    meta = {}
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        header = None
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                body = line.lstrip("# ")
                if body.startswith("gdqnav-metrics"):
                    meta["schema"] = int(body.split("schema=")[1])
                else:
                    for item in body.split():
                        if "=" in item:
                            k, v = item.split("=", 1)
                            meta[k] = v
                continue
            if header is None:
                header = line.split(",")
                continue
            rows.append(line.split(","))
    if meta.get("schema") != SCHEMA_VERSION:
        raise ConfigurationError(f"{path}: unsupported metrics schema {meta.get('schema')}")
    if header is None:
        raise ConfigurationError(f"{path}: no header row")
    cols = {}
    for j, name in enumerate(header):
        raw = [r[j] for r in rows]
        if name == "epoch":
            cols[name] = np.array([int(v) for v in raw])
        else:
            cols[name] = np.array([float(v) if v else np.nan for v in raw])
    return meta, cols


def moving_average(x: np.ndarray, window: int) -> np.ndarray:
    """Trailing mean over up to `window` past values (shorter at the start)."""
    out = np.empty(len(x))
    c = np.concatenate([[0.0], np.cumsum(x)])
    for i in range(len(x)):
        lo = max(0, i + 1 - window)
        out[i] = (c[i + 1] - c[lo]) / (i + 1 - lo)
    return out


def aggregate_metrics(paths, out_path, window: int | None = None) -> None:
    """Combine per-seed metric files into mean/std/smoothed series.

    All inputs must share one config hash (seeds may differ) and one epoch
    grid. The smoothed column is the moving average of the cross-seed mean.
    """
    if not paths:
        raise ConfigurationError("no metric files to aggregate")
    metas, tables = [], []
    for p in sorted(str(p) for p in paths):
        meta, cols = read_metrics(p)
        metas.append(meta)
        tables.append(cols)
    hashes = {m.get("config_hash") for m in metas}
    if len(hashes) != 1:
        raise ConfigurationError(f"refusing to aggregate mixed configs: hashes {sorted(hashes)}")
    epochs = tables[0]["epoch"]
    for t in tables[1:]:
        if len(t["epoch"]) != len(epochs) or np.any(t["epoch"] != epochs):
            raise ConfigurationError("metric files have different epoch grids")
    if window is None:
        window = int(metas[0].get("smoothing_window", 100))
    seeds = ",".join(m.get("seed", "?") for m in metas)

    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# gdqnav-aggregate schema={SCHEMA_VERSION}\n")
        fh.write(f"# config_hash={metas[0]['config_hash']} seeds={seeds} "
                 f"smoothing_window={window}\n")
        writer = csv.writer(fh)
        header = ["epoch"]
        for m in METRIC_COLUMNS:
            header += [f"{m}_mean", f"{m}_std", f"{m}_smooth"]
        writer.writerow(header)
        series = {}
        for m in METRIC_COLUMNS:
            stacked = np.stack([t[m] for t in tables])
            mean = stacked.mean(axis=0)
            std = stacked.std(axis=0)
            smooth = moving_average(np.nan_to_num(mean, nan=0.0), window)
            if np.isnan(stacked).all():
                smooth = np.full(len(mean), np.nan)
            series[m] = (mean, std, smooth)
        for i, ep in enumerate(epochs):
            row = [int(ep)]
            for m in METRIC_COLUMNS:
                mean, std, smooth = series[m]
                row += ["" if np.isnan(v) else repr(float(v))
                        for v in (mean[i], std[i], smooth[i])]
            writer.writerow(row)


def read_aggregate(path):
    """Parse an aggregate CSV back into (meta, column dict)."""
    meta = {}
    rows = []
    header = None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if line.startswith("#"):
                for item in line.lstrip("# ").split():
                    if "=" in item:
                        k, v = item.split("=", 1)
                        meta[k] = v
                continue
            if header is None:
                header = line.split(",")
                continue
            rows.append(line.split(","))
    cols = {}
    for j, name in enumerate(header):
        raw = [r[j] for r in rows]
        if name == "epoch":
            cols[name] = np.array([int(v) for v in raw])
        else:
            cols[name] = np.array([float(v) if v else np.nan for v in raw])
    return meta, cols
