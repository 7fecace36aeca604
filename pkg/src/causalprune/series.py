"""Data model, ingestion, downsampling, windowing and normalization for
multivariate run-to-failure sensor series."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np


class SchemaError(ValueError):
    """A required column is missing from the input file."""


class IngestionError(ValueError):
    """A data row could not be parsed; the message names the line."""


@dataclass
class ColumnSchema:
    """Column names of the delimited input files.

    ``sensors=None`` means "every column that is not unit/cycle/rul",
    in file order.
    """

    unit: str = "unit"
    cycle: str = "cycle"
    rul: str = "RUL"
    sensors: list[str] | None = None
    delimiter: str = ","

    @classmethod
    def from_dict(cls, d: dict) -> "ColumnSchema":
        return cls(**{k: d[k] for k in ("unit", "cycle", "rul", "sensors", "delimiter") if k in d})


@dataclass
class SensorSeries:
    """One unit's run-to-failure record.

    readings: (T, d) float array of sensor values.
    rul: (T,) float array of remaining-useful-life labels, all >= 0.
    """

    unit_id: str
    readings: np.ndarray
    rul: np.ndarray
    sample_period: float = 1.0

    def __post_init__(self):
        self.readings = np.asarray(self.readings, dtype=np.float64)
        self.rul = np.asarray(self.rul, dtype=np.float64)
        if self.readings.ndim != 2 or self.readings.shape[0] < 1 or self.readings.shape[1] < 1:
            raise ValueError("readings must be a nonempty (T, d) matrix")
        if self.rul.shape != (self.readings.shape[0],):
            raise ValueError("rul length must match readings")
        if np.any(self.rul < 0):
            raise ValueError("rul values must be >= 0")

    @property
    def length(self) -> int:
        return self.readings.shape[0]

    @property
    def n_sensors(self) -> int:
        return self.readings.shape[1]


@dataclass
class Window:
    """Fixed-length slice of a series.

    values: (w, d+1) matrix; column d is the RUL channel.  The label is
    the RUL at the window's last step and rul_level its integer part
    (the segment key).
    """

    unit_id: str
    rul_level: int
    start: int
    values: np.ndarray
    label: float

    @property
    def window_id(self) -> str:
        return f"{self.unit_id}:{self.start}"

    @property
    def sensor_values(self) -> np.ndarray:
        return self.values[:, :-1]


@dataclass
class WindowSet:
    windows: list[Window] = field(default_factory=list)
    width: int = 0

    def __len__(self):
        return len(self.windows)

    def __iter__(self):
        return iter(self.windows)

    def group_by_segment(self) -> dict[tuple[str, int], list[Window]]:
        groups: dict[tuple[str, int], list[Window]] = {}
        for w in self.windows:
            groups.setdefault((w.unit_id, w.rul_level), []).append(w)
        return {k: groups[k] for k in sorted(groups)}


@dataclass
class NormalizerParams:
    """Per-channel min/max of the training data."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=np.float64)
        self.hi = np.asarray(self.hi, dtype=np.float64)
        if np.any(self.lo > self.hi):
            raise ValueError("per-channel min must not exceed max")


def load_series(path, schema: ColumnSchema | None = None,
                sample_period: float = 1.0) -> list[SensorSeries]:
    """Load delimited text into one SensorSeries per distinct unit.

    Rows keep file order per unit.  Non-numeric cells raise an
    IngestionError naming the offending line.
    """
    schema = schema or ColumnSchema()
    with open(path, newline="") as fh:
        reader = csv.reader(fh, delimiter=schema.delimiter)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        for name in (schema.unit, schema.rul):
            if name not in header:
                raise SchemaError(f"{path}: missing required column {name!r}")
        unit_col = header.index(schema.unit)
        rul_col = header.index(schema.rul)
        skip = {unit_col, rul_col}
        if schema.cycle in header:
            skip.add(header.index(schema.cycle))
        if schema.sensors is None:
            sensor_cols = [i for i in range(len(header)) if i not in skip]
        else:
            missing = [s for s in schema.sensors if s not in header]
            if missing:
                raise SchemaError(f"{path}: missing sensor columns {missing}")
            sensor_cols = [header.index(s) for s in schema.sensors]
        if not sensor_cols:
            raise SchemaError(f"{path}: no sensor columns")

        units: dict[str, tuple[list, list]] = {}
        order: list[str] = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            unit = row[unit_col].strip()
            try:
                rul = float(row[rul_col])
                vals = [float(row[c]) for c in sensor_cols]
            except (ValueError, IndexError) as exc:
                raise IngestionError(f"{path}: line {lineno}: {exc}") from None
            if not all(math.isfinite(v) for v in vals) or not math.isfinite(rul):
                raise IngestionError(f"{path}: line {lineno}: non-finite value")
            if unit not in units:
                units[unit] = ([], [])
                order.append(unit)
            units[unit][0].append(vals)
            units[unit][1].append(rul)
    return [SensorSeries(u, np.array(units[u][0]), np.array(units[u][1]),
                         sample_period=sample_period) for u in order]


def write_series(series_list: list[SensorSeries], path,
                 schema: ColumnSchema | None = None) -> None:
    """Write series to delimited text; load_series round-trips it bit-exactly."""
    schema = schema or ColumnSchema()
    d = series_list[0].n_sensors
    sensors = schema.sensors or [f"s{i + 1}" for i in range(d)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, delimiter=schema.delimiter)
        writer.writerow([schema.unit, schema.cycle, schema.rul] + list(sensors))
        for s in series_list:
            for t in range(s.length):
                writer.writerow([s.unit_id, t, repr(float(s.rul[t]))]
                                + [repr(float(v)) for v in s.readings[t]])


def downsample(series: SensorSeries, factor: int) -> SensorSeries:
    """Keep every ``factor``-th sample starting at index 0."""
    if factor < 1:
        raise ValueError("downsample factor must be >= 1")
    return SensorSeries(series.unit_id,
                        series.readings[::factor].copy(),
                        series.rul[::factor].copy(),
                        sample_period=series.sample_period * factor)


def make_windows(series: SensorSeries, width: int, stride: int) -> WindowSet:
    """Overlapping windows at starts 0, s, 2s, ...; label = RUL at the last
    step; the RUL channel is appended as the final column."""
    if width < 1 or stride < 1:
        raise ValueError("window width and stride must be >= 1")
    ws = WindowSet(width=width)
    t = series.length
    if t < width:
        return ws
    stacked = np.column_stack([series.readings, series.rul])
    for start in range(0, t - width + 1, stride):
        label = float(series.rul[start + width - 1])
        ws.windows.append(Window(series.unit_id, int(label), start,
                                 stacked[start:start + width].copy(), label))
    return ws


def make_windows_all(series_list: list[SensorSeries], width: int,
                     stride: int) -> WindowSet:
    """Window several series; windows never cross unit boundaries."""
    ws = WindowSet(width=width)
    for s in series_list:
        ws.windows.extend(make_windows(s, width, stride).windows)
    return ws


def fit_normalizer(train: list[SensorSeries]) -> NormalizerParams:
    """Per-channel min/max over every row of the training series."""
    if not train:
        raise ValueError("fit_normalizer needs at least one series")
    stacked = np.vstack([s.readings for s in train])
    return NormalizerParams(stacked.min(axis=0), stacked.max(axis=0))


def apply_normalizer(series: SensorSeries, params: NormalizerParams) -> SensorSeries:
    """Map each channel by (x - min) / (max - min); constant channels map
    to 0; values outside [0, 1] are allowed (no clipping)."""
    return SensorSeries(series.unit_id,
                        normalize_values(series.readings, params),
                        series.rul.copy(),
                        sample_period=series.sample_period)


def normalize_values(values: np.ndarray, params: NormalizerParams) -> np.ndarray:
    span = params.hi - params.lo
    safe = np.where(span > 0, span, 1.0)
    out = (values - params.lo) / safe
    out[:, span == 0] = 0.0
    return out


def extract_segments(series_list: list[SensorSeries],
                     levels: set[tuple[str, int]] | None = None
                     ) -> dict[tuple[str, int], np.ndarray]:
    """Per (unit, rul_level) segment matrices with the RUL channel appended.

    A segment holds every sample of a unit whose integer RUL equals the
    level; it is the scope of the global causal graph.
    """
    out: dict[tuple[str, int], np.ndarray] = {}
    for s in series_list:
        lv = np.floor(s.rul).astype(np.int64)
        stacked = np.column_stack([s.readings, s.rul])
        for level in np.unique(lv):
            key = (s.unit_id, int(level))
            if levels is not None and key not in levels:
                continue
            out[key] = stacked[lv == level]
    return out


def write_window_index(windows: WindowSet, path) -> None:
    """Line-delimited index: one {unit, rul_level, start, label} per window."""
    with open(path, "w") as fh:
        for w in windows:
            fh.write(json.dumps({"unit": w.unit_id, "rul_level": w.rul_level,
                                 "start": w.start, "label": w.label}) + "\n")
