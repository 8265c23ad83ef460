"""Input-state traces and their on-disk CSV format.

One CSV per trace with header ``k,x1..x{n_x},u1..u{n_u}``. A directory of
traces carries a ``traces.json`` manifest recording the sampling period and
file order, since the CSV rows hold sample indices only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InputError

MANIFEST = "traces.json"


@dataclass(frozen=True, eq=False)
class Trace:
    """States x(0..K) and inputs u(0..K) sampled every ``dt`` seconds."""

    states: np.ndarray
    inputs: np.ndarray
    dt: float
    id: str = ""

    def __post_init__(self):
        x = np.array(self.states, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        u = self.inputs
        u = np.zeros((x.shape[0], 0)) if u is None else np.array(u, dtype=np.float64)
        if u.ndim == 1:
            u = u[:, None] if u.size else np.zeros((x.shape[0], 0))
        if x.ndim != 2 or x.shape[1] < 1:
            raise InputError("states must be a (K+1) x n_x array")
        if u.shape[0] != x.shape[0]:
            raise InputError(
                f"inputs have {u.shape[0]} samples, states have {x.shape[0]}"
            )
        if x.shape[0] < 3:
            raise InputError("a trace needs at least 3 samples")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(u))):
            raise InputError("trace contains non-finite entries")
        if not self.dt > 0:
            raise InputError("dt must be positive")
        x.setflags(write=False)
        u.setflags(write=False)
        object.__setattr__(self, "states", x)
        object.__setattr__(self, "inputs", u)
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def horizon(self) -> int:
        return self.states.shape[0] - 1

    @property
    def n_x(self) -> int:
        return self.states.shape[1]

    @property
    def n_u(self) -> int:
        return self.inputs.shape[1]

    def shape_key(self) -> tuple:
        return (self.horizon, self.n_x, self.n_u, self.dt)


def check_consistent(traces: Sequence[Trace]) -> tuple:
    if len(traces) == 0:
        raise InputError("need at least one trace")
    key = traces[0].shape_key()
    for t in traces[1:]:
        if t.shape_key() != key:
            raise InputError(
                f"trace {t.id!r} has (K, n_x, n_u, dt) = {t.shape_key()}, expected {key}"
            )
    return key


def write_trace_csv(trace: Trace, path) -> None:
    cols = ["k"] + [f"x{i + 1}" for i in range(trace.n_x)]
    cols += [f"u{i + 1}" for i in range(trace.n_u)]
    k = np.arange(trace.horizon + 1)
    with open(path, "w") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(k.size):
            row = [str(k[i])] + [repr(float(v)) for v in trace.states[i]]
            row += [repr(float(v)) for v in trace.inputs[i]]
            fh.write(",".join(row) + "\n")


def read_trace_csv(path, dt: float = 1.0, trace_id: str | None = None) -> Trace:
    path = Path(path)
    with open(path) as fh:
        header = [h.strip() for h in fh.readline().split(",")]
    if not header or header[0] != "k":
        raise InputError(f"{path}: first column must be 'k'")
    xcols = [i for i, h in enumerate(header) if h.startswith("x")]
    ucols = [i for i, h in enumerate(header) if h.startswith("u")]
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if not np.array_equal(data[:, 0], np.arange(data.shape[0])):
        raise InputError(f"{path}: sample index column must run 0..K")
    return Trace(
        states=data[:, xcols],
        inputs=data[:, ucols] if ucols else None,
        dt=dt,
        id=trace_id if trace_id is not None else path.stem,
    )


def save_traces(traces: Sequence[Trace], directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    width = max(2, len(str(len(traces) - 1)))
    paths = []
    names = []
    for i, t in enumerate(traces):
        name = f"trace_{i:0{width}d}.csv"
        write_trace_csv(t, directory / name)
        paths.append(directory / name)
        names.append({"file": name, "id": t.id})
    manifest = {"dt": traces[0].dt if traces else None, "traces": names}
    (directory / MANIFEST).write_text(json.dumps(manifest, indent=1))
    return paths


def load_traces(directory, dt: float | None = None) -> list[Trace]:
    """Load every trace in ``directory``; ``dt`` overrides the manifest."""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"trace directory {directory} does not exist")
    manifest_path = directory / MANIFEST
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        entries = [(directory / e["file"], e.get("id")) for e in manifest["traces"]]
        step = dt if dt is not None else manifest.get("dt") or 1.0
    else:
        entries = [(p, None) for p in sorted(directory.glob("*.csv"))]
        step = dt if dt is not None else 1.0
    if not entries:
        raise FileNotFoundError(f"no trace CSV files in {directory}")
    return [read_trace_csv(p, dt=step, trace_id=i) for p, i in entries]
