"""Switched affine systems dx/dt = A_i x + B_i under time-dependent switching.

Includes the DC-DC boost converter preset (state x = [i_L, v]).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Mapping, Sequence

import numpy as np
from scipy.linalg import expm

from . import kernels
from .errors import InputError
from .reconstruction import LawInterval, PeriodicLaw, SwitchingSequence, mode_at
from .trace import Trace

EXACT = "exact-exponential"
RK4 = "rk4"


@dataclass(frozen=True, eq=False)
class LinearMode:
    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=np.float64)
        B = np.array(self.B, dtype=np.float64).reshape(-1)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] != B.shape[0]:
            raise InputError(f"A must be square and match B; got {A.shape} and {B.shape}")
        if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
            raise InputError("mode matrices must be finite")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True, eq=False)
class SwitchedLinearSystem:
    modes: tuple[LinearMode, ...]
    law: PeriodicLaw | SwitchingSequence

    def __post_init__(self):
        modes = tuple(self.modes)
        if not modes:
            raise InputError("need at least one mode")
        if len({m.n_x for m in modes}) != 1:
            raise InputError("all modes must share the state dimension")
        bad = [i for i in self.law.mode_set() if not 1 <= i <= len(modes)]
        if bad:
            raise InputError(f"law references unknown mode(s) {bad}")
        object.__setattr__(self, "modes", modes)

    @property
    def n_x(self) -> int:
        return self.modes[0].n_x

    def schedule(self, horizon: int) -> np.ndarray:
        """1-based active mode for samples 0..horizon-1."""
        if isinstance(self.law, PeriodicLaw):
            return np.array([mode_at(self.law, k) for k in range(horizon)], dtype=np.int64)
        if self.law.horizon < horizon:
            raise InputError(
                f"switching schedule covers {self.law.horizon} samples, {horizon} requested"
            )
        return self.law.modes(horizon)


@dataclass(frozen=True)
class SimConfig:
    dt: float
    horizon: int
    x0: tuple[float, ...]
    integrator: str = EXACT
    substeps: int = 1
    noise_std: float = 0.0
    noise_seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise InputError("dt must be positive")
        if self.horizon < 2:
            raise InputError("horizon must be at least 2")
        if self.substeps < 1:
            raise InputError("substeps must be at least 1")
        if self.noise_std < 0:
            raise InputError("noise_std must be non-negative")
        if self.integrator not in (EXACT, RK4):
            raise InputError(f"integrator must be {EXACT!r} or {RK4!r}")
        object.__setattr__(self, "x0", tuple(float(v) for v in np.ravel(self.x0)))

    def with_x0(self, x0) -> "SimConfig":
        return SimConfig(**{**asdict(self), "x0": tuple(np.ravel(x0))})


@dataclass(frozen=True)
class DcDcParams:
    """Boost converter constants in SI units. R_load and duty are chosen here, not given."""

    E: float = 20.0
    L_ind: float = 1e-3
    R_L: float = 0.1
    C_cap: float = 10e-6
    R_C: float = 0.06
    R_load: float = 5.0
    T_s: float = 1e-4
    duty: float = 0.1

    def __post_init__(self):
        for name in ("E", "L_ind", "R_L", "C_cap", "R_C", "R_load", "T_s"):
            if not getattr(self, name) > 0:
                raise InputError(f"{name} must be positive")
        if not 0.0 <= self.duty <= 1.0:
            raise InputError("duty must lie in [0, 1]")


def dcdc_modes(params: DcDcParams, printed_matrices: bool = False) -> tuple[LinearMode, LinearMode]:
    """Switch-on and switch-off modes of the boost converter.

    The default uses the standard boost state equations. ``printed_matrices``
    keeps the printed arrangement instead: a positive voltage pole in the
    switch-on mode and R/(R+R_C) multiplied (not divided) by L and C.
    """
    E, L, RL, C, RC, R = (
        params.E, params.L_ind, params.R_L, params.C_cap, params.R_C, params.R_load,
    )
    B = np.array([E / L, 0.0])
    if printed_matrices:
        A1 = np.array([[-RL / L, 0.0], [0.0, 1.0 / ((R + RC) * C)]])
        A2 = np.array([
            [-RL / L - RC * R / (L * (R + RC)), -R / (R + RC) * L],
            [R / (R + RC) * C, -1.0 / (R + RC) * C],
        ])
    else:
        A1 = np.array([[-RL / L, 0.0], [0.0, -1.0 / ((R + RC) * C)]])
        A2 = np.array([
            [-(RL + RC * R / (R + RC)) / L, -R / ((R + RC) * L)],
            [R / ((R + RC) * C), -1.0 / ((R + RC) * C)],
        ])
    return LinearMode(A1, B), LinearMode(A2, B.copy())


def _whole_samples(value: float, what: str) -> int:
    n = round(value)
    if abs(value - n) > 1e-6 * max(1.0, abs(value)):
        raise InputError(f"{what} = {value:g} samples; it must be a whole number of dt")
    return int(n)


def dcdc_switching_law(params: DcDcParams, dt: float) -> PeriodicLaw:
    """Mode 1 for the first T_s(1+duty) of every 2*T_s window, mode 2 after."""
    if not dt > 0:
        raise InputError("dt must be positive")
    period = _whole_samples(2 * params.T_s / dt, "2*T_s/dt")
    on = _whole_samples(params.T_s * (1 + params.duty) / dt, "T_s*(1+duty)/dt")
    if on >= period:
        return PeriodicLaw(period=period, intervals=(LawInterval(1, 0, period),))
    return PeriodicLaw(
        period=period, intervals=(LawInterval(1, 0, on), LawInterval(2, on, period))
    )


def dcdc_system(params: DcDcParams, dt: float, printed_matrices: bool = False) -> SwitchedLinearSystem:
    return SwitchedLinearSystem(
        modes=dcdc_modes(params, printed_matrices), law=dcdc_switching_law(params, dt)
    )


def discretize(mode: LinearMode, dt: float, integrator: str = EXACT, substeps: int = 1):
    """Affine sample map x(k+1) = F x(k) + g for one mode held over ``dt``."""
    n = mode.n_x
    if integrator == EXACT:
        # exp([[A, B], [0, 0]] dt) = [[e^{A dt}, int_0^dt e^{As} ds B], [0, 1]]; no A^{-1} needed
        M = np.zeros((n + 1, n + 1))
        M[:n, :n] = mode.A * dt
        M[:n, n] = mode.B * dt
        E = expm(M)
        return E[:n, :n], E[:n, n]
    if integrator == RK4:
        h = dt / substeps
        hA = h * mode.A
        eye = np.eye(n)
        hA2 = hA @ hA
        hA3 = hA2 @ hA
        step_F = eye + hA + hA2 / 2 + hA3 / 6 + hA3 @ hA / 24
        step_g = h * (eye + hA / 2 + hA2 / 6 + hA3 / 24) @ mode.B
        F, g = eye, np.zeros(n)
        for _ in range(substeps):
            F = step_F @ F
            g = step_F @ g + step_g
        return F, g
    raise InputError(f"unknown integrator {integrator!r}")


def simulate(system: SwitchedLinearSystem, config: SimConfig, trace_id: str = "") -> Trace:
    """Sample the system at multiples of dt; modes change only on sample boundaries.

    Measurement noise, when requested, is added to the recorded states only.
    """
    x0 = np.array(config.x0, dtype=np.float64)
    if x0.shape != (system.n_x,):
        raise InputError(f"x0 has length {x0.size}, system state has {system.n_x}")
    sched = system.schedule(config.horizon) - 1
    maps = [discretize(m, config.dt, config.integrator, config.substeps) for m in system.modes]
    F = np.stack([f for f, _ in maps])
    g = np.stack([c for _, c in maps])
    states = kernels.affine_recurrence(F, g, sched, x0)
    if config.noise_std > 0:
        rng = np.random.default_rng(config.noise_seed)
        states = states + rng.normal(0.0, config.noise_std, size=states.shape)
    return Trace(states=states, inputs=None, dt=config.dt, id=trace_id)


def batch_simulate(
    system: SwitchedLinearSystem,
    config: SimConfig,
    initial_states: Sequence,
) -> list[Trace]:
    """One trace per initial state; trace i uses noise seed ``noise_seed + i``."""
    if len(initial_states) == 0:
        raise InputError("need at least one initial state")
    out = []
    for i, x0 in enumerate(initial_states):
        cfg = SimConfig(**{**asdict(config), "x0": tuple(np.ravel(x0)), "noise_seed": config.noise_seed + i})
        out.append(simulate(system, cfg, trace_id=f"trace_{i:02d}"))
    return out


def sample_initial_states(count: int, low, high, seed: int) -> np.ndarray:
    """``count`` states drawn uniformly from the box [low, high]."""
    low = np.asarray(low, dtype=np.float64)
    high = np.asarray(high, dtype=np.float64)
    if low.shape != high.shape or np.any(high < low):
        raise InputError("initial-state box needs matching low <= high bounds")
    rng = np.random.default_rng(seed)
    return rng.uniform(low, high, size=(count, low.size))


def system_from_dict(d: Mapping, dt: float) -> SwitchedLinearSystem:
    """Build a system from ``{"preset": "dcdc", "params": {...}}`` or
    ``{"modes": [{"A", "B"}], "law": {...}}``."""
    if d.get("preset") is not None:
        if d["preset"] != "dcdc":
            raise InputError(f"unknown preset {d['preset']!r}")
        params = DcDcParams(**d.get("params", {}))
        return dcdc_system(params, dt, printed_matrices=bool(d.get("printed_matrices", False)))
    modes = tuple(LinearMode(m["A"], m["B"]) for m in d["modes"])
    law_d = d["law"]
    law = PeriodicLaw.from_dict(law_d) if "period" in law_d else SwitchingSequence.from_dict(law_d)
    return SwitchedLinearSystem(modes=modes, law=law)


def system_to_dict(system: SwitchedLinearSystem) -> dict:
    return {
        "modes": [{"A": m.A.tolist(), "B": m.B.tolist()} for m in system.modes],
        "law": system.law.to_dict(),
    }
