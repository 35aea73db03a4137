"""Per-bus Volt/Var controller update rules and step-size bounds.

Three families:

* droop      -- memoryless bounded Volt/Var curve, q = clamp(slope * (v - v_ref))
* alg1       -- deadband integrator, q <- q - eps * d(v_measured)
* alg2       -- projected dual integrator on a pair of nonnegative multipliers,
                q <- lam_lo(t - tau') - lam_hi(t - tau')

All controllers here are pure state-transition functions of scalars; the
scheduling, delays and voltage dynamics live in ``sim``. Squared voltages
(pu^2) throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .errors import HistoryUnderflow
from .network import SensitivityMatrices

# default safety factor on the strict theoretical step-size bounds
EPSILON_SAFETY = 0.9


@dataclass
class VoltageLimits:
    """Per-bus acceptable band [v_lo, v_hi] in pu^2 and its half-width."""

    v_lo: np.ndarray
    v_hi: np.ndarray
    half_width: np.ndarray = None

    def __post_init__(self):
        self.v_lo = np.atleast_1d(np.asarray(self.v_lo, dtype=float))
        self.v_hi = np.atleast_1d(np.asarray(self.v_hi, dtype=float))
        if np.any(self.v_lo > self.v_hi):
            bad = int(np.argmax(self.v_lo - self.v_hi))
            raise ValueError(f"v_lo > v_hi at bus {bad + 1}")
        if self.half_width is None:
            self.half_width = (self.v_hi - self.v_lo) / 2.0

    @property
    def n(self) -> int:
        return self.v_lo.shape[0]

    @property
    def center(self) -> np.ndarray:
        return (self.v_hi + self.v_lo) / 2.0

    def subset(self, idx) -> "VoltageLimits":
        return VoltageLimits(self.v_lo[idx], self.v_hi[idx])

    @classmethod
    def from_scalars(cls, lo: float, hi: float, n: int) -> "VoltageLimits":
        return cls(np.full(n, float(lo)), np.full(n, float(hi)))

    @classmethod
    def from_kv(cls, lo_kv: float, hi_kv: float, base_kv: float, n: int) -> "VoltageLimits":
        """Convert a kV band to pu^2: v_limit = (V_kV / V_base_kV)^2."""
        return cls.from_scalars((lo_kv / base_kv) ** 2, (hi_kv / base_kv) ** 2, n)


def deadband(v, v_lo, v_hi):
    """Signed band violation: max(v - v_hi, 0) - max(v_lo - v, 0).

    Zero on the closed band (boundary inclusive). Works elementwise on
    arrays. 1-Lipschitz in v.
    """
    return np.maximum(v - v_hi, 0.0) - np.maximum(v_lo - v, 0.0)


@dataclass(frozen=True)
class DroopCurve:
    """Static Volt/Var curve with saturation; the bounded controller class."""

    v_ref: float
    slope: float  # <= 0: overvoltage absorbs reactive power
    q_min: float
    q_max: float

    def __post_init__(self):
        if self.q_min > self.q_max:
            raise ValueError(f"q_min {self.q_min} > q_max {self.q_max}")


def droop_step(curve: DroopCurve, v_measured):
    """Memoryless droop response, clamped to [q_min, q_max]."""
    return np.clip(curve.slope * (v_measured - curve.v_ref), curve.q_min, curve.q_max)


@dataclass(frozen=True)
class Alg1State:
    """Deadband-integrator memory: current injection and step size."""

    q: float
    epsilon: float

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")


def alg1_step(
    state: Alg1State,
    v_delayed: float,
    v_lo: float,
    v_hi: float,
    is_update_step: bool = True,
) -> Alg1State:
    """One deadband-integrator transition on a delayed voltage measurement."""
    if not is_update_step:
        return state
    return replace(state, q=state.q - state.epsilon * float(deadband(v_delayed, v_lo, v_hi)))


@dataclass(frozen=True)
class Alg2State:
    """Dual-integrator memory: multiplier pair (both >= 0) and injection."""

    lambda_hi: float
    lambda_lo: float
    q: float
    epsilon: float

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.lambda_hi < 0 or self.lambda_lo < 0:
            raise ValueError("multipliers must be nonnegative")


def alg2_step(
    state: Alg2State,
    v_delayed: float,
    v_lo: float,
    v_hi: float,
    tau_prime: int = 0,
    lam_history: Callable[[int], tuple[float, float]] | None = None,
    is_update_step: bool = True,
) -> Alg2State:
    """One dual-integrator transition.

    The multipliers integrate the signed band violations and are projected
    onto >= 0; the injection actuates the multiplier pair from tau_prime
    steps back. For tau_prime > 0 the caller supplies ``lam_history(lag)``
    returning (lambda_hi, lambda_lo) as of lag steps before now.
    """
    if not is_update_step:
        return state
    new_hi = max(state.lambda_hi + state.epsilon * (v_delayed - v_hi), 0.0)
    new_lo = max(state.lambda_lo + state.epsilon * (v_lo - v_delayed), 0.0)
    if tau_prime == 0:
        hist_hi, hist_lo = new_hi, new_lo
    else:
        if lam_history is None:
            raise HistoryUnderflow(
                f"actuation lag {tau_prime} requested but no multiplier history given"
            )
        hist_hi, hist_lo = lam_history(tau_prime)
    return Alg2State(
        lambda_hi=new_hi, lambda_lo=new_lo, q=hist_lo - hist_hi, epsilon=state.epsilon
    )


def alg1_max_step(sens: SensitivityMatrices, T_d: int) -> float:
    """Exclusive upper step-size bound for the deadband integrator:
    2 / (sigma_max(X) + 2 ||X||_F T_d)."""
    if T_d < 0:
        raise ValueError("T_d must be >= 0")
    return 2.0 / (sens.sigma_max_X + 2.0 * sens.fro_norm_X * T_d)


def alg2_max_step(
    sens: SensitivityMatrices, T_d: int, T_a: int, synchronous: bool = False
) -> float:
    """Exclusive upper step-size bound for the dual integrator.

    Synchronous delay-free operation allows 1 / sigma_max(X); under update
    gaps up to T_a and delays up to T_d the bound tightens to
    1 / (sigma_max(X) + 2 ||X||_F (2 T_d + T_a)).
    """
    if synchronous:
        return 1.0 / sens.sigma_max_X
    if T_d < 0 or T_a < 1:
        raise ValueError("need T_d >= 0 and T_a >= 1")
    return 1.0 / (sens.sigma_max_X + 2.0 * sens.fro_norm_X * (2 * T_d + T_a))
