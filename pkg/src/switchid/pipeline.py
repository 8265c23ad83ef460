"""End-to-end identification pipeline and evaluation against ground truth.

Stages: simulate (or ingest) -> detect -> identify -> reconstruct -> evaluate.
Each stage reads its inputs from, and writes its artifacts to, fixed paths
under the output directory, so stages can be rerun one at a time.
"""

from __future__ import annotations

import copy
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from . import kernels
from .detection import (
    DetectionConfig,
    SwitchingSet,
    detect_switchings,
    order_statistics,
    segment_traces,
)
from .elm import ElmModel
from .errors import InputError, StageError
from .modeling import MergeConfig, SubsystemLabeling, merge_and_model
from .reconstruction import (
    PeriodicLaw,
    SwitchingSequence,
    infer_periodic_law,
    mode_at,
    reconstruct_sequence,
)
from .simulator import (
    SimConfig,
    SwitchedLinearSystem,
    batch_simulate,
    sample_initial_states,
    simulate,
    system_from_dict,
    system_to_dict,
)
from .trace import Trace, load_traces, save_traces

log = logging.getLogger(__name__)

STAGES = ("simulate", "detect", "identify", "reconstruct", "evaluate")
EXIT_CODES = {"config": 1, "simulate": 2, "detect": 3, "identify": 4, "reconstruct": 5, "evaluate": 6}

DEFAULT_CONFIG: dict[str, Any] = {
    "source": {
        "preset": "dcdc",
        "params": {},
        "printed_matrices": False,
        "sim": {"dt": 1e-5, "horizon": 1000, "integrator": "exact-exponential", "substeps": 1, "noise_std": 0.0},
        "x0_box": [[0.0, 0.0], [1.0, 1.0]],
        "trace_count": 20,
    },
    "detection": {
        "max_order": 1,
        "thresholds": {"1": 0.13},
        "aggregation": "cross-trace-average",
        "denominator_floor": 1e-9,
        "min_gap": 2,
    },
    "merge": {
        "zeta": 1.0,
        "residual_mode": "raw-frobenius",
        "num_neurons": 200,
        "activation": "sigmoid",
        "ridge": 0.0,
        "standardize": True,
    },
    "reconstruct": {"infer_periodic": True, "jitter": 1},
    "evaluate": {"rollout_x0": [0.5, 0.5], "rollout_horizon": 1000, "one_step": True, "match_tolerance": 0},
    "output_dir": "run",
    "master_seed": 0,
}


def _merge_dicts(base: dict, override: Mapping) -> dict:
    out = copy.deepcopy(base)
    for k, v in override.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), dict):
            out[k] = _merge_dicts(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass
class PipelineConfig:
    source: dict
    detection: DetectionConfig
    merge: MergeConfig
    reconstruct: dict
    evaluate: dict
    output_dir: Path
    master_seed: int = 0
    raw: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_dict(cls, d: Mapping | None = None) -> "PipelineConfig":
        """Build a config from a (partial) dict layered over the defaults.

        A ``trace_dir`` source replaces the simulated default entirely.
        """
        d = dict(d or {})
        base = copy.deepcopy(DEFAULT_CONFIG)
        if any(d.get("source", {}).get(k) is not None for k in ("preset", "system", "trace_dir")):
            base["source"] = {}
        full = _merge_dicts(base, d)
        src = full["source"]
        kinds = [k for k in ("preset", "system", "trace_dir") if src.get(k) is not None]
        if len(kinds) != 1:
            raise InputError(f"source must name exactly one of preset/system/trace_dir, got {kinds}")
        if kinds[0] != "trace_dir":
            for key in ("x0_box", "trace_count"):
                src.setdefault(key, copy.deepcopy(DEFAULT_CONFIG["source"][key]))
            src["sim"] = _merge_dicts(DEFAULT_CONFIG["source"]["sim"], src.get("sim", {}))
        seed = int(full["master_seed"])
        if seed < 0:
            raise InputError("master_seed must be non-negative")
        merge_d = dict(full["merge"])
        merge_d.setdefault("seed", derived_seeds(seed)["hidden"])
        cfg = cls(
            source=src,
            detection=DetectionConfig.from_dict(full["detection"]),
            merge=MergeConfig.from_dict(merge_d),
            reconstruct=dict(full["reconstruct"]),
            evaluate=dict(full["evaluate"]),
            output_dir=Path(full["output_dir"]),
            master_seed=seed,
            raw=full,
        )
        if cfg.simulated:
            cfg.truth_system()  # fail early on an unknown preset or malformed system
        return cfg

    @classmethod
    def load(cls, path, overrides: Mapping | None = None) -> "PipelineConfig":
        d = json.loads(Path(path).read_text())
        if overrides:
            d = _merge_dicts(d, overrides)
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "detection": self.detection.to_dict(),
            "merge": self.merge.to_dict(),
            "reconstruct": self.reconstruct,
            "evaluate": self.evaluate,
            "output_dir": str(self.output_dir),
            "master_seed": self.master_seed,
        }

    @property
    def simulated(self) -> bool:
        return self.source.get("trace_dir") is None

    def sim_config(self, x0=(0.0, 0.0)) -> SimConfig:
        sim = self.source["sim"]
        return SimConfig(
            dt=float(sim["dt"]),
            horizon=int(sim["horizon"]),
            x0=tuple(x0),
            integrator=sim.get("integrator", "exact-exponential"),
            substeps=int(sim.get("substeps", 1)),
            noise_std=float(sim.get("noise_std", 0.0)),
            noise_seed=derived_seeds(self.master_seed)["noise"],
        )

    def truth_system(self) -> SwitchedLinearSystem:
        src = self.source
        if src.get("preset") is not None:
            d = {k: src[k] for k in ("preset", "params", "printed_matrices") if k in src}
        else:
            d = src["system"]
        return system_from_dict(d, float(src["sim"]["dt"]))


def derived_seeds(master_seed: int) -> dict[str, int]:
    """Independent per-purpose seeds spawned from the master seed."""
    state = np.random.SeedSequence(master_seed).generate_state(4)
    return dict(zip(("initial_states", "noise", "hidden", "holdout"), (int(s) for s in state)))


_DEFAULT_FILES = {
    "traces": "traces",
    "detection": "detection.json",
    "labeling": "labeling.json",
    "models": "models.json",
    "sequence": "sequence.json",
    "law": "law.json",
    "report": "report.json",
    "response": "response.csv",
    "trajectory": "trajectory.csv",
    "runtimes": "runtimes.json",
    "config": "config.json",
}


@dataclass(frozen=True)
class Paths:
    """Artifact locations under ``root``; ``overrides`` replaces single entries."""

    root: Path
    overrides: Mapping[str, Path] = field(default_factory=dict)

    def __getattr__(self, name: str) -> Path:
        if name not in _DEFAULT_FILES:
            raise AttributeError(name)
        if name in self.overrides:
            return Path(self.overrides[name])
        return Path(self.root) / _DEFAULT_FILES[name]

    @property
    def truth(self) -> Path:
        return self.traces / "truth.json"

    @property
    def statistics(self) -> Path:
        return self.detection.with_name("statistics.csv")


def _dump(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=1) + "\n")


def _read(path: Path, producer: str):
    if not path.exists():
        raise FileNotFoundError(f"{path} not found; run the '{producer}' stage first")
    return json.loads(path.read_text())


def _record_runtime(paths: Paths, stage: str, seconds: float) -> None:
    times = json.loads(paths.runtimes.read_text()) if paths.runtimes.exists() else {}
    times[stage] = seconds
    _dump(times, paths.runtimes)


# ---------------------------------------------------------------- estimate


class LinearStepModel:
    """Exact discrete-time step of a linear mode, usable as a subsystem model."""

    def __init__(self, F, g):
        self.F = np.asarray(F, dtype=np.float64)
        self.g = np.asarray(g, dtype=np.float64)

    def predict(self, x, u=None):
        return self.F @ np.asarray(x, dtype=np.float64) + self.g

    def predict_many(self, inputs):
        X = np.asarray(inputs, dtype=np.float64)[:, : self.F.shape[1]]
        return X @ self.F.T + self.g


@dataclass(frozen=True, eq=False)
class SwitchedModelEstimate:
    """Identified subsystems plus the reconstructed switching behaviour.

    ``models[i - 1]`` is subsystem ``i``; each needs ``predict(x, u)`` and
    ``predict_many(inputs)``.
    """

    models: tuple
    sequence: SwitchingSequence
    law: PeriodicLaw | None = None

    def schedule(self, horizon: int) -> np.ndarray:
        """1-based mode for samples 0..horizon-1; beyond K only via the law."""
        if self.law is not None:
            return np.array([mode_at(self.law, k) for k in range(horizon)], dtype=np.int64)
        if horizon > self.sequence.horizon:
            raise InputError(
                f"no periodic law reconstructed; cannot schedule {horizon} samples "
                f"beyond the {self.sequence.horizon}-sample window"
            )
        return self.sequence.modes(horizon)

    def detected_instants(self) -> list[int]:
        return sorted([e.k for e in self.sequence.events] + list(self.sequence.dropped))

    def relabel(self, perm: Mapping[int, int]) -> "SwitchedModelEstimate":
        """Subsystem i becomes perm[i]."""
        models = [None] * len(self.models)
        for i, m in enumerate(self.models, start=1):
            models[perm[i] - 1] = m
        return SwitchedModelEstimate(
            models=tuple(models),
            sequence=self.sequence.relabel(perm),
            law=self.law.relabel(perm) if self.law is not None else None,
        )


def closed_loop_rollout(estimate: SwitchedModelEstimate, x0, horizon: int, inputs=None) -> np.ndarray:
    modes = estimate.schedule(horizon) - 1
    x0 = np.asarray(x0, dtype=np.float64)
    n_in = 0 if inputs is None else np.asarray(inputs).reshape(horizon, -1).shape[1]
    U = np.zeros((horizon, n_in)) if inputs is None else np.asarray(inputs, dtype=np.float64).reshape(horizon, -1)
    models = estimate.models
    if all(isinstance(m, ElmModel) for m in models) and all(m.hidden.same_as(models[0].hidden) for m in models):
        h = models[0].hidden
        betas = np.stack([m.beta for m in models])
        return kernels.elm_rollout(
            h.weights, h.biases, h.input_offset, h.input_scale, h.activation.code, betas, modes, x0, U
        )
    out = np.empty((horizon + 1, x0.size))
    out[0] = x0
    for k in range(horizon):
        out[k + 1] = models[modes[k]].predict(out[k], U[k])
    return out


def _rmse(err: np.ndarray) -> np.ndarray:
    return np.sqrt(np.mean(err ** 2, axis=0))


def _relative(rmse: np.ndarray, ref: np.ndarray) -> list[float]:
    scale = np.sqrt(np.mean(ref ** 2, axis=0))
    return [float(r / s) if s > 0 else (0.0 if r == 0 else float("inf")) for r, s in zip(rmse, scale)]


def mode_correspondence(est_modes: np.ndarray, true_modes: np.ndarray) -> dict[int, int]:
    """Map each estimated mode to the true mode it overlaps most (ties: lowest)."""
    out = {}
    for m in np.unique(est_modes):
        vals, counts = np.unique(true_modes[est_modes == m], return_counts=True)
        out[int(m)] = int(vals[np.argmax(counts)])
    return out


def _detection_scores(detected: Sequence[int], truth: Sequence[int], tol: int) -> dict:
    truth = list(truth)
    used = set()
    hits = 0
    for k in detected:
        match = next((t for t in truth if abs(t - k) <= tol and t not in used), None)
        if match is not None:
            used.add(match)
            hits += 1
    return {
        "true_count": len(truth),
        "detected_count": len(detected),
        "matched": hits,
        "precision": hits / len(detected) if detected else (1.0 if not truth else 0.0),
        "recall": hits / len(truth) if truth else 1.0,
        "tolerance": tol,
    }


@dataclass
class EvaluationReport:
    model_count: int
    detection: dict | None
    law: dict | None
    true_law: dict | None
    law_match: bool | None
    one_step: dict | None
    rollout: dict | None
    runtimes: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "model_count": self.model_count,
            "detection": self.detection,
            "law": self.law,
            "true_law": self.true_law,
            "law_match": self.law_match,
            "one_step": self.one_step,
            "rollout": self.rollout,
            "runtimes": self.runtimes,
        }


def evaluate_model(
    estimate: SwitchedModelEstimate,
    truth: SwitchedLinearSystem,
    sim: SimConfig,
    rollout_x0=None,
    rollout_horizon: int | None = None,
    holdout_x0=None,
    match_tolerance: int = 0,
) -> EvaluationReport:
    """Compare an estimate with the generating system.

    One-step errors predict x(k+1) from the true x(k) of a trace started at
    ``holdout_x0``; the rollout iterates the estimate on its own output from
    ``rollout_x0``. Both select subsystems with the reconstructed schedule.
    Relative errors divide per-dimension RMSE by the RMS of the true signal.
    """
    K = estimate.sequence.horizon
    true_modes = truth.schedule(K)
    est_modes = estimate.sequence.modes(K)
    mapping = mode_correspondence(est_modes, true_modes)

    true_instants = [k for k in range(1, K) if true_modes[k] != true_modes[k - 1]]
    detection = _detection_scores(estimate.detected_instants(), true_instants, match_tolerance)

    law_match = None
    true_law = truth.law.to_dict() if isinstance(truth.law, PeriodicLaw) else None
    if estimate.law is not None and isinstance(truth.law, PeriodicLaw):
        lm = {iv.mode: mapping.get(iv.mode, -iv.mode) for iv in estimate.law.intervals}
        law_match = bool(
            estimate.law.period == truth.law.period
            and all(lm[mode_at(estimate.law, k)] == mode_at(truth.law, k) for k in range(max(K, 2 * truth.law.period)))
        )

    one_step = None
    if holdout_x0 is not None:
        held = simulate(truth, sim.with_x0(holdout_x0))
        X = held.states[:-1]
        modes = estimate.schedule(held.horizon)
        pred = np.empty_like(X)
        inputs = np.hstack([X, held.inputs[:-1]])
        for m in np.unique(modes):
            sel = modes == m
            pred[sel] = estimate.models[m - 1].predict_many(inputs[sel])
        err = pred - held.states[1:]
        rm = _rmse(err)
        one_step = {
            "x0": [float(v) for v in holdout_x0],
            "samples": int(X.shape[0]),
            "rmse": rm.tolist(),
            "relative_rmse": _relative(rm, held.states[1:]),
            "max_abs_error": np.abs(err).max(axis=0).tolist(),
        }

    rollout = None
    if rollout_x0 is not None:
        if estimate.law is None:
            raise InputError("closed-loop rollout needs a reconstructed periodic law")
        H = int(rollout_horizon or K)
        pred = closed_loop_rollout(estimate, rollout_x0, H)
        true = simulate(truth, SimConfig(**{**sim.__dict__, "x0": tuple(rollout_x0), "horizon": H}))
        err = pred - true.states
        rm = _rmse(err)
        rollout = {
            "x0": [float(v) for v in rollout_x0],
            "horizon": H,
            "rmse": rm.tolist(),
            "relative_rmse": _relative(rm, true.states),
            "max_abs_error": np.abs(err).max(axis=0).tolist(),
            "true_states": true.states,
            "predicted_states": pred,
        }

    law_doc = None
    if estimate.law is not None:
        law_doc = estimate.law.to_dict()
        for iv in law_doc["intervals"]:
            iv["mode"] = mapping.get(iv["mode"], iv["mode"])
    return EvaluationReport(
        model_count=len(estimate.models),
        detection=detection,
        law=law_doc,
        true_law=true_law,
        law_match=law_match,
        one_step=one_step,
        rollout=rollout,
    )


# ---------------------------------------------------------------- stages


def _load_source_traces(cfg: PipelineConfig, paths: Paths) -> list[Trace]:
    if not paths.traces.is_dir():
        raise FileNotFoundError(f"{paths.traces} not found; run the 'simulate' stage first")
    return load_traces(paths.traces, dt=cfg.source.get("dt"))


def stage_simulate(cfg: PipelineConfig, paths: Paths) -> list[Trace]:
    """Generate training traces, or copy them from ``source.trace_dir``."""
    seeds = derived_seeds(cfg.master_seed)
    if not cfg.simulated:
        traces = load_traces(cfg.source["trace_dir"], dt=cfg.source.get("dt"))
        if Path(cfg.source["trace_dir"]).resolve() != paths.traces.resolve():
            save_traces(traces, paths.traces)
        return traces
    system = cfg.truth_system()
    box = np.asarray(cfg.source["x0_box"], dtype=np.float64)
    x0s = sample_initial_states(int(cfg.source["trace_count"]), box[0], box[1], seeds["initial_states"])
    traces = batch_simulate(system, cfg.sim_config(), x0s)
    save_traces(traces, paths.traces)
    sim = cfg.sim_config()
    _dump(
        {
            "system": system_to_dict(system),
            "sim": {k: v for k, v in sim.__dict__.items() if k != "x0"},
            "initial_states": x0s.tolist(),
        },
        paths.truth,
    )
    return traces


def write_statistics_csv(stats: Mapping[int, np.ndarray], path: Path) -> None:
    orders = sorted(stats)
    K = next(iter(stats.values())).shape[1] - 1
    cols = ["k"] + [f"s{p}_{agg}" for p in orders for agg in ("mean", "max")]
    lines = [",".join(cols)]
    with np.errstate(invalid="ignore"):
        summary = {p: (stats[p].mean(axis=0), stats[p].max(axis=0)) for p in orders}
    for k in range(K + 1):
        row = [str(k)]
        for p in orders:
            for v in summary[p]:
                row.append("" if np.isnan(v[k]) else repr(float(v[k])))
        lines.append(",".join(row))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n")


def stage_detect(cfg: PipelineConfig, paths: Paths) -> SwitchingSet:
    traces = _load_source_traces(cfg, paths)
    stats = order_statistics(traces, cfg.detection)
    s = detect_switchings(traces, cfg.detection, statistics=stats)
    write_statistics_csv(stats, paths.statistics)
    _dump(
        {
            "horizon": s.horizon,
            "instants": list(s.instants),
            "per_order_statistics": paths.statistics.name,
            "config": cfg.detection.to_dict(),
        },
        paths.detection,
    )
    return s


def load_switching_set(path: Path) -> SwitchingSet:
    d = _read(path, "detect")
    return SwitchingSet(tuple(d["instants"]), int(d["horizon"]))


def stage_identify(cfg: PipelineConfig, paths: Paths) -> SubsystemLabeling:
    traces = _load_source_traces(cfg, paths)
    s = load_switching_set(paths.detection)
    labeling = merge_and_model(segment_traces(traces, s), cfg.merge)
    doc = labeling.to_dict()
    doc["config"] = cfg.merge.to_dict()
    _dump(doc, paths.labeling)
    _dump({"models": doc["models"]}, paths.models)
    return labeling


def load_labeling(path: Path) -> SubsystemLabeling:
    return SubsystemLabeling.from_dict(_read(path, "identify"))


def stage_reconstruct(cfg: PipelineConfig, paths: Paths) -> tuple[SwitchingSequence, PeriodicLaw | None]:
    s = load_switching_set(paths.detection)
    labeling = load_labeling(paths.labeling)
    seq = reconstruct_sequence(s, labeling)
    _dump(seq.to_dict(), paths.sequence)
    law = None
    if cfg.reconstruct.get("infer_periodic", True):
        law = infer_periodic_law(seq, jitter=int(cfg.reconstruct.get("jitter", 1)))
    if law is not None:
        _dump(law.to_dict(), paths.law)
    elif paths.law.exists():
        paths.law.unlink()
    return seq, law


def load_estimate(paths: Paths) -> SwitchedModelEstimate:
    labeling = load_labeling(paths.labeling)
    seq = SwitchingSequence.from_dict(_read(paths.sequence, "reconstruct"))
    law = PeriodicLaw.from_dict(json.loads(paths.law.read_text())) if paths.law.exists() else None
    return SwitchedModelEstimate(models=labeling.models, sequence=seq, law=law)


def _write_plot_data(paths: Paths, dt: float, true: np.ndarray, pred: np.ndarray) -> None:
    n = true.shape[1]
    head = ["k", "t"] + [c for i in range(n) for c in (f"true_x{i + 1}", f"pred_x{i + 1}")]
    rows = [",".join(head)]
    for k in range(true.shape[0]):
        vals = [str(k), repr(k * dt)] + [repr(float(v)) for i in range(n) for v in (true[k, i], pred[k, i])]
        rows.append(",".join(vals))
    paths.response.write_text("\n".join(rows) + "\n")
    head = [f"true_x{i + 1}" for i in range(n)] + [f"pred_x{i + 1}" for i in range(n)]
    rows = [",".join(head)]
    for k in range(true.shape[0]):
        rows.append(",".join(repr(float(v)) for v in np.concatenate([true[k], pred[k]])))
    paths.trajectory.write_text("\n".join(rows) + "\n")


def stage_evaluate(cfg: PipelineConfig, paths: Paths) -> dict:
    t0 = time.perf_counter()
    estimate = load_estimate(paths)
    ev = cfg.evaluate
    if paths.truth.exists():
        truth_doc = json.loads(paths.truth.read_text())
        truth = system_from_dict(truth_doc["system"], float(truth_doc["sim"]["dt"]))
        sim = SimConfig(x0=(0.0,) * truth.n_x, **truth_doc["sim"])
        holdout = None
        if ev.get("one_step", True):
            holdout = ev.get("holdout_x0")
            if holdout is None:
                box = np.asarray(cfg.source.get("x0_box", [[0.0] * truth.n_x, [1.0] * truth.n_x]))
                holdout = sample_initial_states(1, box[0], box[1], derived_seeds(cfg.master_seed)["holdout"])[0]
        rollout_x0 = ev.get("rollout_x0")
        if rollout_x0 is not None and estimate.law is None:
            log.warning("no periodic law reconstructed; skipping the closed-loop rollout")
            rollout_x0 = None
        report = evaluate_model(
            estimate,
            truth,
            sim,
            rollout_x0=rollout_x0,
            rollout_horizon=ev.get("rollout_horizon"),
            holdout_x0=holdout,
            match_tolerance=int(ev.get("match_tolerance", 0)),
        )
        if report.rollout is not None:
            _write_plot_data(
                paths, sim.dt, report.rollout.pop("true_states"), report.rollout.pop("predicted_states")
            )
    else:
        log.info("no ground truth available; reporting model structure only")
        report = EvaluationReport(
            model_count=len(estimate.models),
            detection=None,
            law=estimate.law.to_dict() if estimate.law is not None else None,
            true_law=None,
            law_match=None,
            one_step=None,
            rollout=None,
        )
    doc = report.to_dict()
    doc["runtimes"] = json.loads(paths.runtimes.read_text()) if paths.runtimes.exists() else {}
    doc["runtimes"]["evaluate"] = time.perf_counter() - t0
    _dump(doc, paths.report)
    return doc


STAGE_FUNCS = {
    "simulate": stage_simulate,
    "detect": stage_detect,
    "identify": stage_identify,
    "reconstruct": stage_reconstruct,
    "evaluate": stage_evaluate,
}


def run_stage(name: str, cfg: PipelineConfig, paths: Paths | None = None):
    paths = paths or Paths(cfg.output_dir)
    paths.root.mkdir(parents=True, exist_ok=True)
    _dump(cfg.to_dict(), paths.config)
    t0 = time.perf_counter()
    try:
        result = STAGE_FUNCS[name](cfg, paths)
    except (InputError, FileNotFoundError, ValueError, KeyError, np.linalg.LinAlgError) as exc:
        raise StageError(name, exc, EXIT_CODES[name]) from exc
    _record_runtime(paths, name, time.perf_counter() - t0)
    log.info("stage %s done in %.3fs", name, time.perf_counter() - t0)
    return result


def run_pipeline(cfg: PipelineConfig) -> dict:
    """Run every stage in order and return the report dict."""
    paths = Paths(cfg.output_dir)
    paths.root.mkdir(parents=True, exist_ok=True)
    if paths.runtimes.exists():
        paths.runtimes.unlink()
    report = None
    for name in STAGES:
        report = run_stage(name, cfg, paths)
    return report
