"""Subsystem modeling: merge segments that share dynamics, one ELM per cluster."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Mapping, Sequence

import numpy as np

from .elm import (
    Activation,
    ElmModel,
    HiddenLayer,
    compute_hidden_matrix,
    init_hidden_layer,
    solve_output_weights,
)
from .errors import InputError
from .trace import Trace

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Segment:
    """Training pairs pooled from the same index range of every trace."""

    index: int
    start: int
    end: int
    inputs: np.ndarray
    targets: np.ndarray
    trace_count: int

    def __post_init__(self):
        if self.inputs.shape[0] != self.targets.shape[0]:
            raise InputError("inputs and targets must have equal length")

    @property
    def pair_count(self) -> int:
        return self.inputs.shape[0]


@dataclass(frozen=True)
class SegmentSet:
    segments: tuple[Segment, ...]
    horizon: int

    def __len__(self) -> int:
        return len(self.segments)

    def __iter__(self) -> Iterator[Segment]:
        return iter(self.segments)

    def __getitem__(self, i) -> Segment:
        return self.segments[i]

    @property
    def instants(self) -> tuple[int, ...]:
        return tuple(s.start for s in self.segments[1:])


def build_training_pairs(trace: Trace, start: int, end: int) -> tuple[np.ndarray, np.ndarray]:
    """Pairs ([x(k), u(k)], x(k+1)) for k = start..end-1."""
    if not 0 <= start <= end <= trace.horizon:
        raise InputError(f"range [{start}, {end}] outside trace horizon {trace.horizon}")
    if end - start < 1:
        log.warning("segment [%d, %d] of trace %r yields no pairs", start, end, trace.id)
    X = np.hstack([trace.states[start:end], trace.inputs[start:end]])
    T = trace.states[start + 1:end + 1].copy()
    return X, T


class ResidualMode(str, Enum):
    RAW_FROBENIUS = "raw-frobenius"
    PER_SAMPLE_RMS = "per-sample-rms"


_RESIDUAL_ALIASES = {"raw": ResidualMode.RAW_FROBENIUS, "rms": ResidualMode.PER_SAMPLE_RMS}


@dataclass(frozen=True)
class MergeConfig:
    zeta: float = 1.0
    residual_mode: ResidualMode = ResidualMode.RAW_FROBENIUS
    num_neurons: int = 200
    activation: Activation = Activation.SIGMOID
    seed: int = 0
    ridge: float = 0.0
    standardize: bool = True

    def __post_init__(self):
        if not self.zeta > 0:
            raise InputError("zeta must be positive")
        if self.ridge < 0:
            raise InputError("ridge must be non-negative")
        if self.num_neurons < 1:
            raise InputError("num_neurons must be positive")
        mode = self.residual_mode
        mode = _RESIDUAL_ALIASES.get(mode) or ResidualMode(mode)
        object.__setattr__(self, "residual_mode", mode)
        object.__setattr__(self, "activation", Activation(self.activation))

    def to_dict(self) -> dict:
        return {
            "zeta": self.zeta,
            "residual_mode": self.residual_mode.value,
            "num_neurons": self.num_neurons,
            "activation": self.activation.value,
            "seed": self.seed,
            "ridge": self.ridge,
            "standardize": self.standardize,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "MergeConfig":
        fields = ("zeta", "residual_mode", "num_neurons", "activation", "seed", "ridge", "standardize")
        return cls(**{k: d[k] for k in fields if k in d})


@dataclass(frozen=True)
class MergeAttempt:
    anchor: int | None
    candidate: int
    gamma: float | None
    accepted: bool
    note: str = ""

    def to_dict(self) -> dict:
        d = {
            "anchor": self.anchor,
            "candidate": self.candidate,
            "gamma": self.gamma,
            "accepted": self.accepted,
        }
        if self.note:
            d["note"] = self.note
        return d


@dataclass(frozen=True, eq=False)
class SubsystemLabeling:
    models: tuple[ElmModel, ...]
    segment_labels: dict[int, int]
    merge_log: tuple[MergeAttempt, ...] = field(default_factory=tuple)

    @property
    def model_count(self) -> int:
        return len(self.models)

    def labels(self) -> list[int]:
        return [self.segment_labels[m] for m in sorted(self.segment_labels)]

    def to_dict(self) -> dict:
        return {
            "models": [m.to_dict() for m in self.models],
            "segment_labels": {str(k): v for k, v in sorted(self.segment_labels.items())},
            "merge_log": [a.to_dict() for a in self.merge_log],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "SubsystemLabeling":
        return cls(
            models=tuple(ElmModel.from_dict(m) for m in d["models"]),
            segment_labels={int(k): int(v) for k, v in d["segment_labels"].items()},
            merge_log=tuple(
                MergeAttempt(
                    anchor=a["anchor"],
                    candidate=a["candidate"],
                    gamma=a["gamma"],
                    accepted=a["accepted"],
                    note=a.get("note", ""),
                )
                for a in d.get("merge_log", [])
            ),
        )


def shared_hidden_layer(segments: SegmentSet | Sequence[Segment], config: MergeConfig) -> HiddenLayer:
    """The single feature map used for every fit in a merge run."""
    usable = [s for s in segments if s.pair_count > 0]
    if not usable:
        raise InputError("no segment has training pairs")
    input_dim = usable[0].inputs.shape[1]
    hidden = init_hidden_layer(input_dim, config.num_neurons, config.activation, config.seed)
    if config.standardize:
        hidden = hidden.standardized(np.concatenate([s.inputs for s in usable]))
    return hidden


def _gamma(residual: float, rows: int, mode: ResidualMode) -> float:
    if mode is ResidualMode.PER_SAMPLE_RMS:
        return residual / np.sqrt(rows)
    return residual


def _r_factor(H, T) -> np.ndarray:
    return np.linalg.qr(np.hstack([H, T]), mode="r")


def _r_factor_stack(blocks) -> np.ndarray:
    return np.linalg.qr(np.vstack(blocks), mode="r")


def _solve_blocks(H_blocks, T_blocks, config: MergeConfig):
    H = np.concatenate(H_blocks)
    T = np.concatenate(T_blocks)
    beta, residual = solve_output_weights(H, T, config.ridge)
    return beta, _gamma(residual, H.shape[0], config.residual_mode)


def fit_combined(
    segments: Sequence[Segment],
    config: MergeConfig,
    hidden: HiddenLayer | None = None,
) -> tuple[np.ndarray, float]:
    """Fit one ELM to the union of ``segments``; returns (beta, gamma)."""
    if len(segments) == 0:
        raise InputError("need at least one segment")
    dims = {(s.inputs.shape[1], s.targets.shape[1]) for s in segments}
    if len(dims) != 1:
        raise InputError("segments disagree on input/target dimensions")
    if sum(s.pair_count for s in segments) == 0:
        raise InputError("segments contain no training pairs")
    if hidden is None:
        hidden = shared_hidden_layer(segments, config)
    blocks = [s for s in segments if s.pair_count > 0]
    return _solve_blocks(
        [compute_hidden_matrix(hidden, s.inputs) for s in blocks],
        [s.targets for s in blocks],
        config,
    )


def merge_and_model(
    segments: SegmentSet | Sequence[Segment],
    config: MergeConfig,
    hidden: HiddenLayer | None = None,
) -> SubsystemLabeling:
    """Greedy threshold-gated clustering of segments, then one ELM per cluster.

    Anchors are taken in ascending segment order. Each anchor's cluster is
    tested against every later unassigned segment in turn, fitting one ELM to
    the cluster's accumulated data plus the candidate; the candidate joins
    when gamma <= zeta. Segments without training pairs take the label of the
    nearest segment in time.
    """
    segs = list(segments)
    usable = [s for s in segs if s.pair_count > 0]
    if not usable:
        raise InputError("no segment has training pairs")
    if hidden is None:
        hidden = shared_hidden_layer(usable, config)

    H = {s.index: compute_hidden_matrix(hidden, s.inputs) for s in usable}
    T = {s.index: s.targets for s in usable}
    # ||H b - T|| and the singular values of H are unchanged when [H | T] is
    # replaced by its R factor, so candidate fits work on stacked R factors
    R = {i: _r_factor(H[i], T[i]) for i in H}
    rows = {i: H[i].shape[0] for i in H}
    L = hidden.num_neurons
    label: dict[int, int] = {}
    clusters: list[list[int]] = []
    attempts: list[MergeAttempt] = []

    order = [s.index for s in usable]
    for a_pos, anchor in enumerate(order):
        if anchor in label:
            continue
        cluster = [anchor]
        label[anchor] = len(clusters) + 1
        R_cluster, n_cluster = R[anchor], rows[anchor]
        for cand in order[a_pos + 1:]:
            if cand in label:
                continue
            R_try = _r_factor_stack([R_cluster, R[cand]])
            n_try = n_cluster + rows[cand]
            _, res = solve_output_weights(R_try[:, :L], R_try[:, L:], config.ridge, row_count=n_try)
            g = _gamma(res, n_try, config.residual_mode)
            ok = g <= config.zeta
            attempts.append(MergeAttempt(anchor, cand, float(g), bool(ok)))
            if ok:
                cluster.append(cand)
                label[cand] = label[anchor]
                R_cluster, n_cluster = R_try, n_try
        clusters.append(cluster)
        log.debug("cluster %d: segments %s", len(clusters), cluster)

    for s in segs:
        if s.index in label:
            continue
        nearest = min(order, key=lambda i: (abs(i - s.index), i))
        label[s.index] = label[nearest]
        attempts.append(
            MergeAttempt(None, s.index, None, True, note=f"no pairs; joined segment {nearest}")
        )

    models = []
    for cluster in clusters:
        beta, _ = _solve_blocks([H[i] for i in cluster], [T[i] for i in cluster], config)
        models.append(ElmModel(hidden=hidden, beta=beta))
    return SubsystemLabeling(
        models=tuple(models),
        segment_labels=dict(sorted(label.items())),
        merge_log=tuple(attempts),
    )
