import numpy as np
import pytest

from switchid.detection import DetectionConfig, detect_switchings, segment_traces
from switchid.elm import HiddenLayer
from switchid.simulator import DcDcParams, SimConfig, batch_simulate, dcdc_system, sample_initial_states

DT = 1e-5
HORIZON = 1000
CALIBRATED_EPS1 = 0.13


def make_layer(weights, biases, activation="sigmoid", seed=0):
    w = np.atleast_2d(np.asarray(weights, dtype=float))
    return HiddenLayer(
        input_dim=w.shape[1],
        num_neurons=w.shape[0],
        weights=w,
        biases=np.atleast_1d(biases),
        activation=activation,
        seed=seed,
        input_offset=np.zeros(w.shape[1]),
        input_scale=np.ones(w.shape[1]),
    )


@pytest.fixture(scope="session")
def dcdc_truth():
    return dcdc_system(DcDcParams(), DT)


@pytest.fixture(scope="session")
def dcdc_traces(dcdc_truth):
    x0s = sample_initial_states(20, [0.0, 0.0], [1.0, 1.0], seed=0)
    return batch_simulate(dcdc_truth, SimConfig(dt=DT, horizon=HORIZON, x0=(0.0, 0.0)), x0s)


@pytest.fixture(scope="session")
def dcdc_true_instants(dcdc_truth):
    m = dcdc_truth.schedule(HORIZON)
    return [k for k in range(1, HORIZON) if m[k] != m[k - 1]]


@pytest.fixture(scope="session")
def dcdc_segments(dcdc_traces):
    s = detect_switchings(dcdc_traces, DetectionConfig(thresholds={1: CALIBRATED_EPS1}))
    return s, segment_traces(dcdc_traces, s)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
