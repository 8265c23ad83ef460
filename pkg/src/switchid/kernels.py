"""Backend selection for the numerical kernels.

The compiled extension is used when it was built; otherwise the numpy
implementations are used. Setting ``SWITCHID_BACKEND=python`` forces the
fallback.
"""

import logging
import os

from . import _pykernels

log = logging.getLogger(__name__)

_impl = _pykernels
BACKEND = "python"

if os.environ.get("SWITCHID_BACKEND", "").lower() != "python":
    try:
        from . import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:
        log.debug("compiled kernels unavailable, using numpy fallback")

# BLAS matmul plus vectorised expit beats the compiled loop for batch
# feature maps, so that one kernel stays on numpy under either backend
hidden_matrix = _pykernels.hidden_matrix
switching_statistic = _impl.switching_statistic
affine_recurrence = _impl.affine_recurrence
elm_rollout = _impl.elm_rollout

SIGMOID = _pykernels.SIGMOID
RADIAL_BASIS = _pykernels.RADIAL_BASIS
SINE = _pykernels.SINE
EXPONENTIAL = _pykernels.EXPONENTIAL
