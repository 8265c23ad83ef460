"""Extreme learning machine: random fixed hidden layer, least-squares readout.

The hidden layer maps an input ``x`` to ``h(x) = g(W z + b)`` where
``z = (x - input_offset) / input_scale``. ``W`` and ``b`` are drawn once from a
seeded generator and never trained; only the linear output weights ``beta``
are solved for, as the minimum-norm least-squares solution ``H^+ T``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path

import numpy as np

from . import kernels
from .errors import InputError


class Activation(str, Enum):
    SIGMOID = "sigmoid"
    RADIAL_BASIS = "radial-basis"
    SINE = "sine"
    EXPONENTIAL = "exponential"

    @property
    def code(self) -> int:
        return _ACTIVATION_CODES[self]


_ACTIVATION_CODES = {
    Activation.SIGMOID: kernels.SIGMOID,
    Activation.RADIAL_BASIS: kernels.RADIAL_BASIS,
    Activation.SINE: kernels.SINE,
    Activation.EXPONENTIAL: kernels.EXPONENTIAL,
}


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class HiddenLayer:
    """Random feature map shared by every model fitted in one run.

    ``input_offset`` and ``input_scale`` standardize inputs before the
    random projection; they default to the identity map.
    """

    input_dim: int
    num_neurons: int
    weights: np.ndarray
    biases: np.ndarray
    activation: Activation
    seed: int
    input_offset: np.ndarray
    input_scale: np.ndarray

    def __post_init__(self):
        w = _frozen(self.weights)
        if w.shape != (self.num_neurons, self.input_dim):
            raise InputError(
                f"weights must be {self.num_neurons}x{self.input_dim}, got {w.shape}"
            )
        b = _frozen(self.biases)
        if b.shape != (self.num_neurons,):
            raise InputError(f"biases must have length {self.num_neurons}")
        off = _frozen(self.input_offset)
        sc = _frozen(self.input_scale)
        if off.shape != (self.input_dim,) or sc.shape != (self.input_dim,):
            raise InputError("input_offset and input_scale must have length input_dim")
        if np.any(sc <= 0) or not np.all(np.isfinite(sc)):
            raise InputError("input_scale entries must be positive and finite")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)
        object.__setattr__(self, "input_offset", off)
        object.__setattr__(self, "input_scale", sc)
        object.__setattr__(self, "activation", Activation(self.activation))

    def standardized(self, inputs) -> "HiddenLayer":
        """Copy of this layer whose input map standardizes ``inputs``.

        Columns with zero spread keep scale 1.
        """
        X = np.asarray(inputs, dtype=np.float64)
        offset = X.mean(axis=0)
        scale = X.std(axis=0)
        scale[~(scale > 0)] = 1.0
        return replace(self, input_offset=offset, input_scale=scale)

    def same_as(self, other: "HiddenLayer") -> bool:
        return (
            self.activation == other.activation
            and self.seed == other.seed
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.biases, other.biases)
            and np.array_equal(self.input_offset, other.input_offset)
            and np.array_equal(self.input_scale, other.input_scale)
        )


def init_hidden_layer(
    input_dim: int,
    num_neurons: int,
    activation: Activation | str = Activation.SIGMOID,
    seed: int = 0,
) -> HiddenLayer:
    """Draw weights and biases i.i.d. uniform on [-1, 1] from ``seed``."""
    if input_dim < 1 or num_neurons < 1:
        raise InputError("input_dim and num_neurons must be positive")
    if seed < 0:
        raise InputError("seed must be non-negative")
    rng = np.random.default_rng(seed)
    weights = rng.uniform(-1.0, 1.0, size=(num_neurons, input_dim))
    biases = rng.uniform(-1.0, 1.0, size=num_neurons)
    return HiddenLayer(
        input_dim=input_dim,
        num_neurons=num_neurons,
        weights=weights,
        biases=biases,
        activation=Activation(activation),
        seed=seed,
        input_offset=np.zeros(input_dim),
        input_scale=np.ones(input_dim),
    )


def _check_inputs(layer: HiddenLayer, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != layer.input_dim:
        raise InputError(
            f"inputs must have {layer.input_dim} columns, got shape {X.shape}"
        )
    if not np.all(np.isfinite(X)):
        raise InputError("inputs contain non-finite entries")
    return X


def feature_map(layer: HiddenLayer, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise InputError("feature_map expects a single input vector")
    return compute_hidden_matrix(layer, x[None, :])[0]


def compute_hidden_matrix(layer: HiddenLayer, inputs) -> np.ndarray:
    """Hidden layer output matrix, entry (i, j) = h_j(x_i)."""
    X = np.asarray(inputs, dtype=np.float64)
    if X.ndim == 0 or X.shape[0] == 0:
        raise InputError("empty input sequence")
    X = _check_inputs(layer, X)
    return kernels.hidden_matrix(
        X,
        layer.weights,
        layer.biases,
        layer.input_offset,
        layer.input_scale,
        layer.activation.code,
    )


def solve_output_weights(
    H, T, ridge: float = 0.0, row_count: int | None = None
) -> tuple[np.ndarray, float]:
    """Minimum-norm least-squares ``beta`` for ``H beta ~ T`` via SVD.

    Singular values at or below ``max(N, L) * s_max * eps`` are treated as
    zero. With ``ridge > 0`` the retained spectrum is filtered by
    ``s / (s^2 + ridge)`` instead of ``1 / s``. Returns ``(beta, residual)``
    where residual is the Frobenius norm of ``H beta - T``.

    ``row_count`` overrides N in the cutoff when ``H``, ``T`` are a
    row-compressed (QR) form of a taller system.
    """
    H = np.asarray(H, dtype=np.float64)
    T = np.asarray(T, dtype=np.float64)
    vector_target = T.ndim == 1
    if vector_target:
        T = T[:, None]
    if H.ndim != 2 or T.ndim != 2:
        raise InputError("H and T must be matrices")
    if H.shape[0] != T.shape[0]:
        raise InputError(f"row mismatch: H has {H.shape[0]}, T has {T.shape[0]}")
    if not (np.all(np.isfinite(H)) and np.all(np.isfinite(T))):
        raise InputError("H and T must be finite")
    if ridge < 0:
        raise InputError("ridge must be non-negative")
    N, L = H.shape
    if N == 0:
        raise InputError("no training rows")

    U, s, Vt = np.linalg.svd(H, full_matrices=False)
    rows = N if row_count is None else row_count
    tol = max(rows, L) * (s[0] if s.size else 0.0) * np.finfo(np.float64).eps
    keep = s > tol
    if not np.any(keep):
        beta = np.zeros((L, T.shape[1]))
    else:
        sk = s[keep]
        filt = sk / (sk * sk + ridge) if ridge > 0 else 1.0 / sk
        beta = Vt[keep].T @ (filt[:, None] * (U[:, keep].T @ T))
    residual = float(np.linalg.norm(H @ beta - T))
    if vector_target:
        beta = beta[:, 0]
    return beta, residual


@dataclass(frozen=True, eq=False)
class ElmModel:
    hidden: HiddenLayer
    beta: np.ndarray

    def __post_init__(self):
        beta = _frozen(self.beta)
        if beta.ndim != 2 or beta.shape[0] != self.hidden.num_neurons:
            raise InputError(
                f"beta must have {self.hidden.num_neurons} rows, got shape {beta.shape}"
            )
        if not np.all(np.isfinite(beta)):
            raise InputError("beta contains non-finite entries")
        object.__setattr__(self, "beta", beta)

    @property
    def output_dim(self) -> int:
        return self.beta.shape[1]

    def predict(self, x, u=None) -> np.ndarray:
        return predict(self, x, u)

    def predict_many(self, inputs) -> np.ndarray:
        return compute_hidden_matrix(self.hidden, inputs) @ self.beta

    def to_dict(self) -> dict:
        h = self.hidden
        return {
            "activation": h.activation.value,
            "input_dim": h.input_dim,
            "output_dim": self.output_dim,
            "L": h.num_neurons,
            "seed": h.seed,
            "weights": h.weights.tolist(),
            "biases": h.biases.tolist(),
            "beta": self.beta.tolist(),
            "input_offset": h.input_offset.tolist(),
            "input_scale": h.input_scale.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ElmModel":
        n = int(d["input_dim"])
        hidden = HiddenLayer(
            input_dim=n,
            num_neurons=int(d["L"]),
            weights=np.array(d["weights"], dtype=np.float64).reshape(int(d["L"]), n),
            biases=d["biases"],
            activation=Activation(d["activation"]),
            seed=int(d["seed"]),
            input_offset=d.get("input_offset", [0.0] * n),
            input_scale=d.get("input_scale", [1.0] * n),
        )
        beta = np.array(d["beta"], dtype=np.float64).reshape(
            int(d["L"]), int(d["output_dim"])
        )
        return cls(hidden=hidden, beta=beta)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "ElmModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def predict(model: ElmModel, x, u=None) -> np.ndarray:
    """Next state ``h([x, u]) @ beta``; ``u`` may be omitted for autonomous models."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    u = np.zeros(0) if u is None else np.atleast_1d(np.asarray(u, dtype=np.float64))
    z = np.concatenate([x, u])
    if z.shape[0] != model.hidden.input_dim:
        raise InputError(
            f"state+input has length {z.shape[0]}, model expects {model.hidden.input_dim}"
        )
    return feature_map(model.hidden, z) @ model.beta


def fit_elm(hidden: HiddenLayer, inputs, targets, ridge: float = 0.0) -> tuple[ElmModel, float]:
    H = compute_hidden_matrix(hidden, inputs)
    T = np.asarray(targets, dtype=np.float64)
    if T.ndim == 1:
        T = T[:, None]
    beta, residual = solve_output_weights(H, T, ridge)
    return ElmModel(hidden=hidden, beta=beta), residual
