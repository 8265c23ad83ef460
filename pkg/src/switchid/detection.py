"""Switching-instant detection from finite-difference discontinuities.

A switch at sample k shows up as a jump in the p-th difference of the state.
The statistic

    s_p(k) = |D^p x(k+1) - D^p x(k)| / max(|D^(p-1) x(k)|, floor)

with D^0 x = x is thresholded per order, aggregated over traces, and the
surviving instants split every trace into segments.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from . import kernels
from .errors import InputError
from .modeling import Segment, SegmentSet, build_training_pairs
from .trace import Trace, check_consistent


class Aggregation(str, Enum):
    PER_TRACE_UNION = "per-trace-union"
    CROSS_TRACE_AVERAGE = "cross-trace-average"


_AGG_ALIASES = {"union": Aggregation.PER_TRACE_UNION, "average": Aggregation.CROSS_TRACE_AVERAGE}


def parse_aggregation(value) -> Aggregation:
    if isinstance(value, Aggregation):
        return value
    return _AGG_ALIASES.get(value) or Aggregation(value)


@dataclass(frozen=True)
class DetectionConfig:
    thresholds: Mapping[int, float]
    max_order: int = 1
    aggregation: Aggregation = Aggregation.CROSS_TRACE_AVERAGE
    denominator_floor: float = 1e-9
    min_gap: int = 2

    def __post_init__(self):
        th = {int(k): float(v) for k, v in dict(self.thresholds).items()}
        if self.max_order < 1:
            raise InputError("max_order must be at least 1")
        missing = [p for p in range(1, self.max_order + 1) if p not in th]
        if missing:
            raise InputError(f"no threshold for order(s) {missing}")
        if any(v <= 0 for v in th.values()):
            raise InputError("thresholds must be positive")
        if not self.denominator_floor > 0:
            raise InputError("denominator_floor must be positive")
        if self.min_gap < 0:
            raise InputError("min_gap must be non-negative")
        object.__setattr__(self, "thresholds", th)
        object.__setattr__(self, "aggregation", parse_aggregation(self.aggregation))

    def to_dict(self) -> dict:
        return {
            "max_order": self.max_order,
            "thresholds": {str(k): v for k, v in sorted(self.thresholds.items())},
            "aggregation": self.aggregation.value,
            "denominator_floor": self.denominator_floor,
            "min_gap": self.min_gap,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DetectionConfig":
        return cls(
            thresholds={int(k): float(v) for k, v in d["thresholds"].items()},
            max_order=int(d.get("max_order", 1)),
            aggregation=d.get("aggregation", Aggregation.CROSS_TRACE_AVERAGE),
            denominator_floor=float(d.get("denominator_floor", 1e-9)),
            min_gap=int(d.get("min_gap", 2)),
        )


@dataclass(frozen=True)
class SwitchingSet:
    instants: tuple[int, ...]
    horizon: int

    def __post_init__(self):
        inst = tuple(int(k) for k in self.instants)
        if any(b <= a for a, b in zip(inst, inst[1:])):
            raise InputError("switching instants must be strictly increasing")
        if inst and (inst[0] < 1 or inst[-1] > self.horizon - 1):
            raise InputError(f"switching instants must lie in [1, {self.horizon - 1}]")
        object.__setattr__(self, "instants", inst)

    def __len__(self) -> int:
        return len(self.instants)

    def boundaries(self) -> list[int]:
        return [0, *self.instants, self.horizon]


class Statistic(NamedTuple):
    k: np.ndarray
    s: np.ndarray


def finite_difference(trace: Trace, order: int) -> np.ndarray:
    """D^order x(k) for k = order..K, as an array of K+1-order rows."""
    if order < 0:
        raise InputError("order must be non-negative")
    if trace.horizon < order:
        raise InputError(f"trace of length {trace.horizon + 1} too short for order {order}")
    return np.diff(trace.states, n=order, axis=0)


def switching_statistic(trace: Trace, order: int, floor: float = 1e-9) -> Statistic:
    if order < 1:
        raise InputError("order must be at least 1")
    if not floor > 0:
        raise InputError("floor must be positive")
    K = trace.horizon
    if K - order < 1:
        raise InputError(f"trace of length {K + 1} too short for order {order}")
    s = kernels.switching_statistic(trace.states, order, floor)
    return Statistic(k=np.arange(order, K), s=s)


def order_statistics(traces: Sequence[Trace], config: DetectionConfig) -> dict[int, np.ndarray]:
    """Per-order statistic matrices of shape (trace_count, K+1).

    Entries where the order's statistic is undefined are NaN.
    """
    K, *_ = check_consistent(traces)
    out = {}
    for p in range(1, config.max_order + 1):
        S = np.full((len(traces), K + 1), np.nan)
        for i, tr in enumerate(traces):
            st = switching_statistic(tr, p, config.denominator_floor)
            S[i, st.k] = st.s
        out[p] = S
    return out


def _collapse_runs(candidates: np.ndarray, score: np.ndarray, min_gap: int) -> list[int]:
    kept = []
    run = []
    for k in candidates:
        if run and k - run[-1] > min_gap:
            kept.append(max(run, key=lambda j: (score[j], -j)))
            run = []
        run.append(int(k))
    if run:
        kept.append(max(run, key=lambda j: (score[j], -j)))
    return kept


def detect_switchings(
    traces: Sequence[Trace],
    config: DetectionConfig,
    statistics: dict[int, np.ndarray] | None = None,
) -> SwitchingSet:
    """Threshold the switching statistics and return the detected instants.

    ``per-trace-union`` flags k when any order exceeds its threshold on any
    trace. ``cross-trace-average`` thresholds the mean statistic over traces.
    Flagged instants no more than ``min_gap`` apart form a run that collapses
    to its strongest member, scored by statistic / threshold.
    """
    K, *_ = check_consistent(traces)
    stats = statistics if statistics is not None else order_statistics(traces, config)
    flagged = np.zeros(K + 1, dtype=bool)
    score = np.zeros(K + 1)
    with np.errstate(invalid="ignore"):
        for p, S in stats.items():
            eps = config.thresholds[p]
            if config.aggregation is Aggregation.CROSS_TRACE_AVERAGE:
                agg = S.mean(axis=0)
            else:
                agg = S
            hit = agg >= eps
            ratio = np.nan_to_num(agg / eps, nan=0.0)
            if agg.ndim == 2:
                hit = hit.any(axis=0)
                ratio = ratio.max(axis=0)
            flagged |= hit
            score = np.maximum(score, ratio)
    candidates = np.flatnonzero(flagged)
    return SwitchingSet(tuple(_collapse_runs(candidates, score, config.min_gap)), K)


def segment_traces(traces: Sequence[Trace], s: SwitchingSet) -> SegmentSet:
    """Cut every trace at the detected instants and pool the m-th pieces.

    Segment m spans samples [k_{m-1}, k_m]; boundary samples are shared by
    neighbouring segments, and each training pair (x(k), u(k)) -> x(k+1)
    lies inside a single segment.
    """
    K, *_ = check_consistent(traces)
    if K != s.horizon:
        raise InputError(f"traces have horizon {K}, switching set has {s.horizon}")
    bounds = s.boundaries()
    segments = []
    for m in range(len(bounds) - 1):
        start, end = bounds[m], bounds[m + 1]
        pairs = [build_training_pairs(tr, start, end) for tr in traces]
        segments.append(
            Segment(
                index=m + 1,
                start=start,
                end=end,
                inputs=np.concatenate([p[0] for p in pairs]),
                targets=np.concatenate([p[1] for p in pairs]),
                trace_count=len(traces),
            )
        )
    return SegmentSet(segments=tuple(segments), horizon=K)
