"""Uniformly sampled multi-channel time series with a deterministic CSV form."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class TimeSeries:
    time: np.ndarray
    channels: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.time = np.asarray(self.time, dtype=float)
        for name, values in self.channels.items():
            values = np.asarray(values, dtype=float)
            if values.shape != self.time.shape:
                raise ValueError(f"channel {name!r} has {values.size} samples, time grid has {self.time.size}")
            self.channels[name] = values

    def __getitem__(self, name: str) -> np.ndarray:
        if name == "t":
            return self.time
        return self.channels[name]

    def __contains__(self, name: str) -> bool:
        return name == "t" or name in self.channels

    @property
    def names(self) -> list[str]:
        return list(self.channels)

    @property
    def dt(self) -> float:
        return float(self.time[1] - self.time[0]) if self.time.size > 1 else 0.0

    def at(self, name: str, t: float) -> float:
        """Linearly interpolated value of a channel at time ``t``."""
        return float(np.interp(t, self.time, self[name]))

    def window(self, t0: float, t1: float = np.inf) -> "TimeSeries":
        mask = (self.time >= t0 - 1e-12) & (self.time <= t1 + 1e-12)
        return TimeSeries(self.time[mask], {k: v[mask] for k, v in self.channels.items()})

    def to_csv(self, path: str | Path | None = None) -> str:
        """Write ``t`` followed by the channels in insertion order.

        Values are formatted with ``repr`` so the text round-trips exactly and
        repeated runs produce identical bytes.
        """
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["t", *self.channels])
        columns = [self.time, *self.channels.values()]
        for row in zip(*columns):
            writer.writerow([repr(float(v)) for v in row])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, path: str | Path) -> "TimeSeries":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = [[float(v) for v in row] for row in reader if row]
        if not header or header[0] != "t":
            raise ValueError(f"{path}: first column must be 't'")
        data = np.array(rows, dtype=float).reshape(-1, len(header))
        return cls(data[:, 0], {name: data[:, i] for i, name in enumerate(header[1:], start=1)})
