"""Switching-sequence labeling and periodic switching-law inference."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple

import numpy as np

from .detection import SwitchingSet
from .errors import InputError
from .modeling import SubsystemLabeling


class SwitchEvent(NamedTuple):
    from_mode: int
    to_mode: int
    k: int


@dataclass(frozen=True)
class SwitchingSequence:
    """Mode changes inside the [0, K] window.

    ``dropped`` lists detected instants across which the label did not change.
    """

    initial_mode: int
    horizon: int
    events: tuple[SwitchEvent, ...] = ()
    dropped: tuple[int, ...] = field(default=(), compare=False)

    def __post_init__(self):
        events = tuple(SwitchEvent(*map(int, e)) for e in self.events)
        prev_k, prev_mode = 0, int(self.initial_mode)
        for e in events:
            if not prev_k < e.k < self.horizon:
                raise InputError(f"event instant {e.k} out of order or outside (0, {self.horizon})")
            if e.from_mode != prev_mode:
                raise InputError(f"event at {e.k} leaves mode {e.from_mode}, active mode is {prev_mode}")
            if e.from_mode == e.to_mode:
                raise InputError(f"event at {e.k} does not change mode")
            prev_k, prev_mode = e.k, e.to_mode
        object.__setattr__(self, "events", events)
        object.__setattr__(self, "dropped", tuple(int(k) for k in self.dropped))

    def modes(self, length: int | None = None) -> np.ndarray:
        """Active mode at samples 0..length-1 (default: 0..K-1)."""
        n = self.horizon if length is None else length
        out = np.full(n, self.initial_mode, dtype=np.int64)
        for e in self.events:
            if e.k < n:
                out[e.k:] = e.to_mode
        return out

    def mode_set(self) -> set[int]:
        return {self.initial_mode} | {e.to_mode for e in self.events}

    def relabel(self, mapping: Mapping[int, int]) -> "SwitchingSequence":
        return SwitchingSequence(
            initial_mode=mapping[self.initial_mode],
            horizon=self.horizon,
            events=tuple(SwitchEvent(mapping[e.from_mode], mapping[e.to_mode], e.k) for e in self.events),
            dropped=self.dropped,
        )

    def to_dict(self) -> dict:
        d = {
            "initial_mode": self.initial_mode,
            "horizon": self.horizon,
            "events": [{"from": e.from_mode, "to": e.to_mode, "k": e.k} for e in self.events],
        }
        if self.dropped:
            d["dropped_instants"] = list(self.dropped)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "SwitchingSequence":
        return cls(
            initial_mode=int(d["initial_mode"]),
            horizon=int(d["horizon"]),
            events=tuple(SwitchEvent(e["from"], e["to"], e["k"]) for e in d["events"]),
            dropped=tuple(d.get("dropped_instants", ())),
        )


class LawInterval(NamedTuple):
    mode: int
    start: int
    end: int


@dataclass(frozen=True)
class PeriodicLaw:
    """Mode pattern repeating every ``period`` samples from ``anchor``."""

    period: int
    intervals: tuple[LawInterval, ...]
    anchor: int = 0

    def __post_init__(self):
        if self.period < 1:
            raise InputError("period must be positive")
        ivs = tuple(LawInterval(*map(int, iv)) for iv in self.intervals)
        if not ivs:
            raise InputError("a law needs at least one interval")
        pos = 0
        for iv in ivs:
            if iv.start != pos or iv.end <= iv.start:
                raise InputError(f"intervals must partition [0, {self.period}) in order")
            pos = iv.end
        if pos != self.period:
            raise InputError(f"intervals must partition [0, {self.period})")
        for a, b in zip(ivs, ivs[1:]):
            if a.mode == b.mode:
                raise InputError("adjacent intervals must carry distinct modes")
        if self.anchor < 0:
            raise InputError("anchor must be non-negative")
        object.__setattr__(self, "intervals", ivs)

    def modes(self, length: int) -> np.ndarray:
        return np.array([mode_at(self, k) for k in range(length)], dtype=np.int64)

    def mode_set(self) -> set[int]:
        return {iv.mode for iv in self.intervals}

    def relabel(self, mapping: Mapping[int, int]) -> "PeriodicLaw":
        return PeriodicLaw(
            period=self.period,
            intervals=tuple(LawInterval(mapping[iv.mode], iv.start, iv.end) for iv in self.intervals),
            anchor=self.anchor,
        )

    def to_sequence(self, horizon: int) -> SwitchingSequence:
        m = self.modes(horizon)
        events = [SwitchEvent(int(m[k - 1]), int(m[k]), k) for k in range(1, horizon) if m[k] != m[k - 1]]
        return SwitchingSequence(initial_mode=int(m[0]), horizon=horizon, events=tuple(events))

    def to_dict(self) -> dict:
        return {
            "period": self.period,
            "anchor": self.anchor,
            "intervals": [{"mode": iv.mode, "start": iv.start, "end": iv.end} for iv in self.intervals],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PeriodicLaw":
        return cls(
            period=int(d["period"]),
            anchor=int(d.get("anchor", 0)),
            intervals=tuple(LawInterval(iv["mode"], iv["start"], iv["end"]) for iv in d["intervals"]),
        )


def mode_at(law: PeriodicLaw, k: int) -> int:
    if k < 0:
        raise InputError("sample index must be non-negative")
    r = (k - law.anchor) % law.period
    for iv in law.intervals:
        if iv.start <= r < iv.end:
            return iv.mode
    raise AssertionError("intervals do not cover the period")  # unreachable after validation


def reconstruct_sequence(s: SwitchingSet, labeling: SubsystemLabeling) -> SwitchingSequence:
    """Attach subsystem labels to the detected instants.

    Instants whose neighbouring segments share a label produce no event and
    are reported in ``dropped``.
    """
    labels = labeling.labels()
    if len(labels) != len(s.instants) + 1:
        raise InputError(
            f"{len(labels)} labelled segments but {len(s.instants)} instants"
        )
    events = []
    dropped = []
    for m, k in enumerate(s.instants):
        a, b = labels[m], labels[m + 1]
        if a == b:
            dropped.append(k)
        else:
            events.append(SwitchEvent(a, b, k))
    return SwitchingSequence(
        initial_mode=labels[0], horizon=s.horizon, events=tuple(events), dropped=tuple(dropped)
    )


def _circ(a: int, b: int, p: int) -> int:
    d = abs(a - b) % p
    return min(d, p - d)


def _try_period(seq: SwitchingSequence, P: int, jitter: int) -> PeriodicLaw | None:
    K = seq.horizon
    groups: list[dict] = []
    for e in sorted(seq.events, key=lambda e: (e.k % P, e.k)):
        off = e.k % P
        typ = (e.from_mode, e.to_mode)
        for g in groups:
            if g["type"] == typ and _circ(off, g["ref"], P) <= 2 * jitter:
                g["events"].append(e)
                break
        else:
            groups.append({"type": typ, "ref": off, "events": [e]})
    if len(groups) < 2:
        return None

    for g in groups:
        # center: an offset every member lies within jitter of; prefer the
        # most exact hits, then the smallest total deviation
        offs = [e.k % P for e in g["events"]]
        counts = Counter(offs)
        feasible = [
            c for c in range(P) if all(_circ(o, c, P) <= jitter for o in offs)
        ]
        if not feasible:
            return None
        g["center"] = min(
            feasible, key=lambda c: (-counts[c], sum(_circ(o, c, P) for o in offs), c)
        )
    groups.sort(key=lambda g: g["center"])
    centers = [g["center"] for g in groups]
    if len(set(centers)) != len(centers):
        return None
    for g, nxt in zip(groups, groups[1:] + groups[:1]):
        if g["type"][1] != nxt["type"][0]:
            return None

    # every expected instant away from the window edges must be hit exactly once
    for g in groups:
        c = g["center"]
        matched: dict[int, int] = {}
        for e in g["events"]:
            n = round((e.k - c) / P)
            if abs(e.k - (c + n * P)) > jitter or n in matched:
                return None
            matched[n] = e.k
        for n in range(-1, K // P + 2):
            expected = c + n * P
            if jitter < expected < K - jitter and n not in matched:
                return None

    anchor = centers[0]
    ends = centers[1:] + [centers[0] + P]
    intervals = tuple(
        LawInterval(g["type"][1], c - anchor, e - anchor) for g, c, e in zip(groups, centers, ends)
    )
    law = PeriodicLaw(period=P, intervals=intervals, anchor=anchor)
    # before the first event the law must agree with the initial mode,
    # except within jitter of one of its own boundaries
    first = seq.events[0].k if seq.events else K
    for k in range(min(first, K)):
        if any(_circ(k, c, P) <= jitter for c in centers):
            continue
        if mode_at(law, k) != seq.initial_mode:
            return None
    return law


def infer_periodic_law(seq: SwitchingSequence, jitter: int = 1) -> PeriodicLaw | None:
    """Smallest period P in [2, K/2] under which the sequence repeats.

    An exactly periodic fit is preferred; failing that, event instants may
    deviate from the periodic pattern by up to ``jitter`` samples. Returns
    None when no candidate period fits.
    """
    if len(seq.events) < 2:
        return None
    # exact periodicity first: over a few periods a +-1 drift can otherwise
    # pass for a neighbouring period
    for tol in sorted({0, jitter}):
        for P in range(2, seq.horizon // 2 + 1):
            law = _try_period(seq, P, tol)
            if law is not None:
                return law
    return None
