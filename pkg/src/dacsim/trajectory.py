"""Simulation results and their serialized forms."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CSV_HEADER = "t,agent,x,u,u_avg,err"


@dataclass
class Trajectory:
    """Sampled run output.

    Arrays have one row per recorded time and one column per agent slot.
    Slots of agents that are not in the network at a given time hold NaN.
    ``u`` is the input each agent sees, ``u_avg`` the reference average that
    errors are measured against.
    """

    t: np.ndarray
    x: np.ndarray
    u: np.ndarray
    u_avg: np.ndarray
    states: dict[str, np.ndarray] = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.x.shape[1]

    @property
    def active(self) -> np.ndarray:
        return ~np.isnan(self.x)

    def error(self) -> np.ndarray:
        return self.x - self.u_avg[:, None]

    def tail(self, fraction: float) -> slice:
        k = len(self.t)
        return slice(min(int(np.floor(k * (1 - fraction))), k - 1), k)

    def to_csv_text(self) -> str:
        err = self.error()
        lines = [CSV_HEADER]
        for k in range(len(self.t)):
            tk, avg = self.t[k], self.u_avg[k]
            for i in range(self.n):
                if np.isnan(self.x[k, i]):
                    continue
                lines.append(
                    f"{tk:.17g},{i},{self.x[k, i]:.17g},{self.u[k, i]:.17g},{avg:.17g},{err[k, i]:.17g}"
                )
        return "\n".join(lines) + "\n"

    def write_csv(self, path: str | Path) -> Path:
        return atomic_write(path, self.to_csv_text())


def read_csv(path: str | Path) -> Trajectory:
    """Inverse of :meth:`Trajectory.write_csv` (internal states are not stored)."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    times = np.unique(data[:, 0])
    agents = int(data[:, 1].max()) + 1
    x = np.full((len(times), agents), np.nan)
    u = np.full_like(x, np.nan)
    avg = np.zeros(len(times))
    row = np.searchsorted(times, data[:, 0])
    col = data[:, 1].astype(int)
    x[row, col] = data[:, 2]
    u[row, col] = data[:, 3]
    avg[row] = data[:, 4]
    return Trajectory(times, x, u, avg)


def atomic_write(path: str | Path, text: str) -> Path:
    """Write through a temporary file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def atomic_write_json(path: str | Path, obj) -> Path:
    return atomic_write(path, json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
