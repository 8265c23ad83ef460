"""Command-line entry point: ``switchid <stage> [options]``.

Every subcommand accepts ``--config`` and ``--workdir``; other flags override
the matching config fields. Set SWITCHID_LOG_LEVEL (e.g. DEBUG) for more output.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .errors import InputError, StageError
from .pipeline import EXIT_CODES, Paths, PipelineConfig, _merge_dicts, run_pipeline, run_stage

log = logging.getLogger("switchid")


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


def _thresholds(text: str) -> dict[str, float]:
    """'0.13' sets order 1; '1:0.13,2:0.5' sets several orders."""
    out = {}
    for part in text.split(","):
        if ":" in part:
            p, v = part.split(":", 1)
            out[str(int(p))] = float(v)
        else:
            out["1"] = float(part)
    return out


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="pipeline config JSON")
    p.add_argument("--workdir", type=Path, help="artifact directory (overrides output_dir)")
    p.add_argument("--seed", type=int, dest="master_seed", help="master seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="switchid", description="Identify switched systems with ELMs.")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate (or ingest) training traces")
    _common(sim)
    sim.add_argument("--preset", choices=["dcdc"])
    sim.add_argument("--count", type=int, help="number of traces")
    sim.add_argument("--horizon", type=int)
    sim.add_argument("--noise-std", type=float)
    sim.add_argument("--trace-dir", type=Path, help="ingest CSV traces from this directory")
    sim.add_argument("--out", type=Path, help="trace output directory")

    det = sub.add_parser("detect", help="detect switching instants")
    _common(det)
    det.add_argument("--in", dest="traces", type=Path, help="trace directory")
    det.add_argument("--eps1", type=float, help="order-1 threshold")
    det.add_argument("--eps", help="per-order thresholds, e.g. 1:0.13,2:0.5")
    det.add_argument("--max-order", type=int)
    det.add_argument("--agg", choices=["average", "union", "cross-trace-average", "per-trace-union"])
    det.add_argument("--min-gap", type=int)
    det.add_argument("--floor", type=float)
    det.add_argument("--out", type=Path, help="detection JSON path")

    idf = sub.add_parser("identify", help="merge segments and fit subsystem models")
    _common(idf)
    idf.add_argument("--in", dest="traces", type=Path)
    idf.add_argument("--detection", type=Path)
    idf.add_argument("--zeta", type=float)
    idf.add_argument("--residual-mode", choices=["raw", "rms", "raw-frobenius", "per-sample-rms"])
    idf.add_argument("--neurons", type=int)
    idf.add_argument("--activation", choices=["sigmoid", "radial-basis", "sine", "exponential"])
    idf.add_argument("--hidden-seed", type=int)
    idf.add_argument("--ridge", type=float)
    idf.add_argument("--no-standardize", action="store_true")
    idf.add_argument("--out", type=Path, help="labeling JSON path")

    rec = sub.add_parser("reconstruct", help="label instants and infer a periodic law")
    _common(rec)
    rec.add_argument("--detection", type=Path)
    rec.add_argument("--labeling", type=Path)
    rec.add_argument("--no-periodic", action="store_true")
    rec.add_argument("--jitter", type=int)

    ev = sub.add_parser("evaluate", help="compare the estimate with ground truth")
    _common(ev)
    ev.add_argument("--in", dest="traces", type=Path, help="trace directory holding truth.json")
    ev.add_argument("--rollout-x0", type=_floats)
    ev.add_argument("--rollout-horizon", type=int)
    ev.add_argument("--no-one-step", action="store_true")

    pipe = sub.add_parser("pipeline", help="run every stage in order")
    _common(pipe)
    pipe.add_argument("--eps1", type=float)
    pipe.add_argument("--zeta", type=float)
    pipe.add_argument("--residual-mode", choices=["raw", "rms", "raw-frobenius", "per-sample-rms"])
    return parser


def _overrides(args: argparse.Namespace) -> dict:
    o: dict = {}

    def put(section, key, value):
        if value is not None:
            o.setdefault(section, {})[key] = value

    a = vars(args)
    if a.get("master_seed") is not None:
        o["master_seed"] = a["master_seed"]
    if a.get("workdir") is not None:
        o["output_dir"] = str(a["workdir"])
    if a.get("trace_dir") is not None:
        o["source"] = {"trace_dir": str(a["trace_dir"])}
    elif a.get("preset") is not None:
        o["source"] = {"preset": a["preset"]}
    put("source", "trace_count", a.get("count"))
    if a.get("horizon") is not None:
        o.setdefault("source", {}).setdefault("sim", {})["horizon"] = a["horizon"]
    if a.get("noise_std") is not None:
        o.setdefault("source", {}).setdefault("sim", {})["noise_std"] = a["noise_std"]

    if a.get("eps") is not None:
        o.setdefault("detection", {})["thresholds"] = _thresholds(a["eps"])
    if a.get("eps1") is not None:
        o.setdefault("detection", {}).setdefault("thresholds", {})["1"] = a["eps1"]
    put("detection", "max_order", a.get("max_order"))
    put("detection", "aggregation", a.get("agg"))
    put("detection", "min_gap", a.get("min_gap"))
    put("detection", "denominator_floor", a.get("floor"))

    put("merge", "zeta", a.get("zeta"))
    put("merge", "residual_mode", a.get("residual_mode"))
    put("merge", "num_neurons", a.get("neurons"))
    put("merge", "activation", a.get("activation"))
    put("merge", "seed", a.get("hidden_seed"))
    put("merge", "ridge", a.get("ridge"))
    if a.get("no_standardize"):
        put("merge", "standardize", False)

    if a.get("no_periodic"):
        put("reconstruct", "infer_periodic", False)
    put("reconstruct", "jitter", a.get("jitter"))

    put("evaluate", "rollout_x0", a.get("rollout_x0"))
    put("evaluate", "rollout_horizon", a.get("rollout_horizon"))
    if a.get("no_one_step"):
        put("evaluate", "one_step", False)
    return o


def _load_config(args: argparse.Namespace) -> PipelineConfig:
    overrides = _overrides(args)
    base = json.loads(args.config.read_text()) if args.config else {}
    if {"preset", "trace_dir"} & overrides.get("source", {}).keys():
        # switching source kinds replaces the whole source block
        base = {**base, "source": {}}
    return PipelineConfig.from_dict(_merge_dicts(base, overrides))


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("SWITCHID_LOG_LEVEL", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_config(args)
    except (InputError, ValueError, KeyError, OSError) as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CODES["config"]

    a = vars(args)
    files = {
        "traces": a.get("out") if args.command == "simulate" else a.get("traces"),
        "detection": a.get("out") if args.command == "detect" else a.get("detection"),
        "labeling": a.get("out") if args.command == "identify" else a.get("labeling"),
    }
    paths = Paths(cfg.output_dir, {k: Path(v) for k, v in files.items() if v is not None})
    try:
        if args.command == "pipeline":
            report = run_pipeline(cfg)
            print(json.dumps({k: report[k] for k in ("model_count", "law_match")}))
        else:
            result = run_stage(args.command, cfg, paths)
            if args.command == "simulate":
                print(f"wrote {len(result)} traces to {paths.traces}")
            elif args.command == "detect":
                print(f"detected {len(result.instants)} instants -> {paths.detection}")
            elif args.command == "identify":
                print(f"{result.model_count} subsystem model(s) -> {paths.labeling}")
            elif args.command == "reconstruct":
                seq, law = result
                print(f"{len(seq.events)} events; periodic law: {law.period if law else 'none'}")
            else:
                print(f"report -> {paths.report}")
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
