"""Sampled multi-channel time series and their CSV encoding."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class Waveform:
    names: tuple
    times: np.ndarray
    values: np.ndarray  # shape (len(times), len(names))
    events: list = field(default_factory=list)  # (t, kind)
    grid: np.ndarray | None = None  # True for fixed-step samples, when known

    def __post_init__(self):
        self.names = tuple(self.names)
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float).reshape(len(self.times), len(self.names))
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("sample times must be strictly increasing")
        if self.grid is not None:
            self.grid = np.asarray(self.grid, dtype=bool).reshape(len(self.times))

    def __len__(self):
        return len(self.times)

    def __getitem__(self, name: str) -> np.ndarray:
        if name == "t":
            return self.times
        try:
            return self.values[:, self.names.index(name)]
        except ValueError:
            raise KeyError(name) from None

    def event_times(self, kind: str | None = None) -> np.ndarray:
        return np.array([t for t, k in self.events if kind is None or k == kind or k.startswith(kind + ":")])

    def on_grid(self, h: float | None = None, t0: float = 0.0, atol: float = 1e-7) -> np.ndarray:
        """Mask of fixed-step samples: the recorded flags, else times within atol*h of t0 + i*h."""
        if self.grid is not None:
            return self.grid.copy()
        if h is None:
            raise ValueError("step size needed when grid flags are not recorded")
        q = (self.times - t0) / h
        return np.abs(q - np.round(q)) <= atol

    def header(self) -> list[str]:
        return ["t", *self.names]

    def to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.header())
            for t, row in zip(self.times, self.values):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in row])
        return path

    def events_to_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "kind"])
            for t, kind in self.events:
                w.writerow([repr(float(t)), kind])
        return path

    @classmethod
    def from_csv(cls, path) -> "Waveform":
        with Path(path).open(newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        data = np.array([[float(x) for x in r] for r in body]).reshape(len(body), len(header))
        return cls(tuple(header[1:]), data[:, 0], data[:, 1:])
