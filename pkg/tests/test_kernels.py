import os
import subprocess
import sys

import numpy as np
import pytest

from switchid import _pykernels as py

ck = pytest.importorskip("switchid._ckernels", reason="compiled kernels not built")

ACTS = [py.SIGMOID, py.RADIAL_BASIS, py.SINE, py.EXPONENTIAL]


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.mark.parametrize("kind", ACTS)
def test_hidden_matrix_parity(rng, kind):
    X = rng.normal(size=(300, 3)) * 5
    W, b = rng.uniform(-1, 1, (25, 3)), rng.uniform(-1, 1, 25)
    off, sc = rng.normal(size=3), rng.uniform(0.5, 2, 3)
    np.testing.assert_allclose(
        ck.hidden_matrix(X, W, b, off, sc, kind), py.hidden_matrix(X, W, b, off, sc, kind), rtol=1e-12, atol=1e-14
    )  # BLAS and the compiled loop sum W z in different orders


@pytest.mark.parametrize("kind", ACTS)
def test_extreme_arguments_parity(kind):
    X = np.array([[-1e300], [-800.0], [-30.0], [0.0], [30.0], [800.0], [1e300]])
    W, b = np.ones((1, 1)), np.zeros(1)
    a = ck.hidden_matrix(X, W, b, np.zeros(1), np.ones(1), kind)
    p = py.hidden_matrix(X, W, b, np.zeros(1), np.ones(1), kind)
    assert np.all(np.isfinite(a))
    np.testing.assert_allclose(a, p, rtol=1e-13)


@pytest.mark.parametrize("order", [1, 2, 3])
def test_switching_statistic_parity(rng, order):
    X = np.cumsum(rng.normal(size=(80, 2)), axis=0)
    X[10] = 0.0
    np.testing.assert_allclose(
        ck.switching_statistic(X, order, 1e-9), py.switching_statistic(X, order, 1e-9), rtol=1e-13
    )


def test_affine_recurrence_parity(rng):
    F = rng.normal(size=(3, 4, 4)) * 0.4
    g = rng.normal(size=(3, 4))
    modes = rng.integers(0, 3, size=200).astype(np.int64)
    x0 = rng.normal(size=4)
    np.testing.assert_allclose(ck.affine_recurrence(F, g, modes, x0), py.affine_recurrence(F, g, modes, x0), rtol=1e-12)


@pytest.mark.parametrize("n_u", [0, 1])
def test_elm_rollout_parity(rng, n_u):
    L, n = 30, 2
    W, b = rng.uniform(-1, 1, (L, n + n_u)), rng.uniform(-1, 1, L)
    off, sc = np.zeros(n + n_u), np.ones(n + n_u)
    betas = rng.normal(scale=0.05, size=(2, L, n))
    modes = (np.arange(100) // 7 % 2).astype(np.int64)
    U = rng.normal(size=(100, n_u))
    x0 = rng.normal(size=n)
    np.testing.assert_allclose(
        ck.elm_rollout(W, b, off, sc, 0, betas, modes, x0, U),
        py.elm_rollout(W, b, off, sc, 0, betas, modes, x0, U),
        rtol=1e-11,
    )


def test_rollout_matches_step_by_step(rng):
    L, n = 20, 2
    W, b = rng.uniform(-1, 1, (L, n)), rng.uniform(-1, 1, L)
    betas = rng.normal(scale=0.05, size=(1, L, n))
    x = rng.normal(size=n)
    out = py.elm_rollout(W, b, np.zeros(n), np.ones(n), 0, betas, np.zeros(10, np.int64), x, np.zeros((10, 0)))
    for k in range(10):
        x = (1 / (1 + np.exp(-(W @ x + b)))) @ betas[0]
        np.testing.assert_allclose(out[k + 1], x, rtol=1e-12)


def test_fallback_selected_by_environment():
    env = {**os.environ, "SWITCHID_BACKEND": "python"}
    out = subprocess.run(
        [sys.executable, "-c", "import switchid.kernels as k; print(k.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"
