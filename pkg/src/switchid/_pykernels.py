"""Pure numpy implementations of the numerical kernels.

These define the reference behaviour; ``_ckernels.pyx`` mirrors every
function here with the same signature.
"""

import numpy as np
from scipy.special import expit

SIGMOID, RADIAL_BASIS, SINE, EXPONENTIAL = 0, 1, 2, 3

# exp() stays finite on this range
_EXP_LO, _EXP_HI = -745.0, 709.0


def activate(z, kind):
    if kind == SIGMOID:
        return expit(z)
    if kind == RADIAL_BASIS:
        # exp(-z^2) underflows to 0 well before |z| = 40; clipping avoids inf
        z = np.clip(z, -40.0, 40.0)
        return np.exp(-z * z)
    if kind == SINE:
        return np.sin(z)
    if kind == EXPONENTIAL:
        return np.exp(np.clip(z, _EXP_LO, _EXP_HI))
    raise ValueError(f"unknown activation code {kind}")


def hidden_matrix(X, W, b, offset, scale, kind):
    X = np.asarray(X, dtype=np.float64)
    Z = ((X - offset) / scale) @ W.T + b
    return activate(Z, kind)


def switching_statistic(X, order, floor):
    X = np.asarray(X, dtype=np.float64)
    K = X.shape[0] - 1
    num = np.linalg.norm(np.diff(X, n=order + 1, axis=0), axis=1)
    prev = np.diff(X, n=order - 1, axis=0) if order > 1 else X
    den = np.linalg.norm(prev[1:K - order + 1], axis=1)
    return num / np.maximum(den, floor)


def affine_recurrence(F, g, modes, x0):
    modes = np.asarray(modes, dtype=np.intp)
    out = np.empty((modes.shape[0] + 1, x0.shape[0]))
    x = np.array(x0, dtype=np.float64)
    out[0] = x
    for k, m in enumerate(modes):
        x = F[m] @ x + g[m]
        out[k + 1] = x
    return out


def elm_rollout(W, b, offset, scale, kind, betas, modes, x0, U):
    modes = np.asarray(modes, dtype=np.intp)
    out = np.empty((modes.shape[0] + 1, x0.shape[0]))
    x = np.array(x0, dtype=np.float64)
    out[0] = x
    for k, m in enumerate(modes):
        z = np.concatenate([x, U[k]])
        h = activate(((z - offset) / scale) @ W.T + b, kind)
        x = h @ betas[m]
        out[k + 1] = x
    return out
