import json
import shutil

import jsonschema
import numpy as np
import pytest

import switchid
from switchid.cli import main
from switchid.errors import InputError, StageError
from switchid.pipeline import (
    EXIT_CODES,
    LinearStepModel,
    Paths,
    PipelineConfig,
    SwitchedModelEstimate,
    evaluate_model,
    load_estimate,
    run_pipeline,
    run_stage,
)
from switchid.reconstruction import mode_at
from switchid.simulator import SimConfig, discretize, simulate

SMALL = {"source": {"preset": "dcdc", "trace_count": 4, "sim": {"horizon": 200}},
         "evaluate": {"rollout_horizon": 200}, "merge": {"num_neurons": 60}}


def small_cfg(tmp_path, **extra):
    d = json.loads(json.dumps(SMALL))
    d["output_dir"] = str(tmp_path / "run")
    for k, v in extra.items():
        d.setdefault(k, {}).update(v) if isinstance(v, dict) else d.__setitem__(k, v)
    return PipelineConfig.from_dict(d)


def strip_runtimes(doc):
    return {k: v for k, v in doc.items() if k != "runtimes"}


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    cfg = small_cfg(tmp_path_factory.mktemp("pipe"))
    return cfg, run_pipeline(cfg)


def test_small_pipeline_recovers_structure(small_run):
    _, report = small_run
    assert report["model_count"] == 2
    assert report["law_match"] is True
    assert report["detection"]["precision"] == 1.0 and report["detection"]["recall"] == 1.0
    assert report["rollout"]["relative_rmse"][0] < 0.05


def test_report_matches_schema(small_run):
    jsonschema.validate(small_run[1], switchid.report_schema())


def test_artifacts_present(small_run):
    cfg, _ = small_run
    p = Paths(cfg.output_dir)
    for name in ("detection", "labeling", "models", "sequence", "law", "report", "response", "trajectory",
                 "runtimes", "config"):
        assert getattr(p, name).exists(), name
    assert p.statistics.exists() and p.truth.exists()
    assert set(json.loads(p.runtimes.read_text())) == {"simulate", "detect", "identify", "reconstruct", "evaluate"}


def test_pipeline_is_deterministic(tmp_path):
    a = run_pipeline(small_cfg(tmp_path / "a"))
    b = run_pipeline(small_cfg(tmp_path / "b"))
    assert strip_runtimes(a) == strip_runtimes(b)
    for name in ("detection", "labeling", "models", "sequence", "law"):
        fa = getattr(Paths(tmp_path / "a" / "run"), name).read_bytes()
        fb = getattr(Paths(tmp_path / "b" / "run"), name).read_bytes()
        assert fa == fb, name


def test_stages_compose_to_pipeline(tmp_path, small_run):
    cfg = small_cfg(tmp_path)
    for stage in ("simulate", "detect", "identify", "reconstruct", "evaluate"):
        run_stage(stage, cfg)
    manual = Paths(cfg.output_dir)
    auto = Paths(small_run[0].output_dir)
    for name in ("detection", "labeling", "models", "sequence", "law"):
        assert getattr(manual, name).read_bytes() == getattr(auto, name).read_bytes(), name
    assert strip_runtimes(json.loads(manual.report.read_text())) == strip_runtimes(small_run[1])


def test_huge_threshold_gives_single_model_without_law(tmp_path):
    report = run_pipeline(small_cfg(tmp_path, detection={"thresholds": {"1": 1e6}}))
    assert report["model_count"] == 1
    assert report["law"] is None and report["rollout"] is None
    assert report["detection"]["detected_count"] == 0
    jsonschema.validate(report, switchid.report_schema())


def test_missing_input_names_producing_stage(tmp_path):
    cfg = small_cfg(tmp_path)
    with pytest.raises(StageError) as info:
        run_stage("identify", cfg)
    assert info.value.exit_code == EXIT_CODES["identify"]
    assert "simulate" in str(info.value) or "detect" in str(info.value)


def test_trace_dir_source(tmp_path, small_run):
    src = tmp_path / "traces"
    shutil.copytree(Paths(small_run[0].output_dir).traces, src)
    (src / "truth.json").unlink()
    cfg = PipelineConfig.from_dict({"source": {"trace_dir": str(src)}, "output_dir": str(tmp_path / "run"),
                                    "merge": {"num_neurons": 60}})
    report = run_pipeline(cfg)
    assert report["model_count"] == 2
    assert report["law"]["period"] == 20
    assert report["detection"] is None


def test_source_kinds_are_exclusive():
    with pytest.raises(InputError):
        PipelineConfig.from_dict({"source": {"preset": "dcdc", "trace_dir": "x"}})


# ------------------------------------------------------------ evaluation


class TruthLookup:
    """Answers x -> next state by looking up recorded true trajectories."""

    def __init__(self, table):
        self.table = table

    def predict(self, x, u=None):
        return self.table[np.asarray(x, dtype=np.float64).tobytes()]

    def predict_many(self, inputs):
        return np.array([self.predict(row[:2]) for row in np.asarray(inputs)])


EVAL_KW = dict(rollout_x0=[0.5, 0.5], rollout_horizon=300, holdout_x0=[0.2, 0.7])


@pytest.fixture(scope="module")
def truth_setup():
    cfg = PipelineConfig.from_dict({"source": {"preset": "dcdc", "sim": {"horizon": 200}}})
    truth = cfg.truth_system()
    sim = cfg.sim_config()
    return truth, sim


@pytest.fixture(scope="module")
def exact_estimate(truth_setup):
    truth, sim = truth_setup
    table = {}
    for x0, H in ((EVAL_KW["rollout_x0"], EVAL_KW["rollout_horizon"]), (EVAL_KW["holdout_x0"], sim.horizon)):
        states = simulate(truth, SimConfig(**{**sim.__dict__, "x0": tuple(x0), "horizon": H})).states
        for a, b in zip(states[:-1], states[1:]):
            table[a.tobytes()] = b
    models = (TruthLookup(table), TruthLookup(table))
    est = SwitchedModelEstimate(models, truth.law.to_sequence(200), truth.law)
    return est, truth, sim


def test_exact_truth_scores_zero(exact_estimate):
    est, truth, sim = exact_estimate
    rep = evaluate_model(est, truth, sim, **EVAL_KW)
    assert rep.rollout["rmse"] == [0.0, 0.0]
    assert rep.one_step["rmse"] == [0.0, 0.0]
    assert rep.law_match is True
    assert rep.detection["precision"] == rep.detection["recall"] == 1.0


def test_true_sample_maps_score_at_rounding_level(truth_setup):
    truth, sim = truth_setup
    models = tuple(LinearStepModel(*discretize(m, sim.dt)) for m in truth.modes)
    est = SwitchedModelEstimate(models, truth.law.to_sequence(200), truth.law)
    rep = evaluate_model(est, truth, sim, **EVAL_KW)
    assert max(rep.rollout["relative_rmse"]) < 1e-12
    assert max(rep.one_step["relative_rmse"]) < 1e-12


def test_relabeling_leaves_report_unchanged(truth_setup):
    truth, sim = truth_setup
    models = tuple(LinearStepModel(*discretize(m, sim.dt)) for m in truth.modes)
    est = SwitchedModelEstimate(models, truth.law.to_sequence(200), truth.law)
    a = evaluate_model(est, truth, sim, **EVAL_KW)
    b = evaluate_model(est.relabel({1: 2, 2: 1}), truth, sim, **EVAL_KW)
    for key in ("model_count", "detection", "law", "law_match", "one_step"):
        assert getattr(a, key) == getattr(b, key), key
    np.testing.assert_array_equal(a.rollout["predicted_states"], b.rollout["predicted_states"])


def test_relabel_permutes_law(exact_estimate):
    est = exact_estimate[0].relabel({1: 2, 2: 1})
    assert [mode_at(est.law, k) for k in (0, 10, 11, 19, 20)] == [2, 2, 1, 1, 2]


def test_rollout_without_law_is_an_input_error(exact_estimate):
    est, truth, sim = exact_estimate
    bare = SwitchedModelEstimate(est.models, est.sequence, None)
    with pytest.raises(InputError):
        evaluate_model(bare, truth, sim, rollout_x0=[0.5, 0.5])
    with pytest.raises(InputError):
        bare.schedule(500)
    assert bare.schedule(200).shape == (200,)


def test_estimate_round_trips_through_files(small_run):
    est = load_estimate(Paths(small_run[0].output_dir))
    assert len(est.models) == 2 and est.law.period == 20


# ------------------------------------------------------------------- CLI


def test_cli_simulate_writes_traces(tmp_path, capsys):
    out = tmp_path / "traces"
    rc = main(["simulate", "--preset", "dcdc", "--count", "3", "--horizon", "50",
               "--workdir", str(tmp_path / "w"), "--out", str(out)])
    assert rc == 0
    assert len(list(out.glob("*.csv"))) == 3
    assert (out / "truth.json").exists()
    assert "wrote 3 traces" in capsys.readouterr().out


def test_cli_missing_file_exit_code(tmp_path, capsys):
    rc = main(["detect", "--workdir", str(tmp_path), "--in", str(tmp_path / "nothing")])
    assert rc == EXIT_CODES["detect"]
    assert "simulate" in capsys.readouterr().err


def test_cli_bad_config_exit_code(tmp_path):
    bad = tmp_path / "c.json"
    bad.write_text('{"source": {"preset": "nope"}}')
    assert main(["pipeline", "--config", str(bad), "--workdir", str(tmp_path / "w")]) == EXIT_CODES["config"]


def test_cli_stage_sequence(tmp_path, capsys):
    w = str(tmp_path / "w")
    base = ["--workdir", w]
    assert main(["simulate", "--count", "4", "--horizon", "200", *base]) == 0
    assert main(["detect", "--eps1", "0.13", *base]) == 0
    assert main(["identify", "--neurons", "60", *base]) == 0
    assert main(["reconstruct", *base]) == 0
    assert main(["evaluate", "--rollout-horizon", "200", *base]) == 0
    out = capsys.readouterr().out
    assert "2 subsystem model(s)" in out and "periodic law: 20" in out
    report = json.loads((tmp_path / "w" / "report.json").read_text())
    assert report["law_match"] is True
