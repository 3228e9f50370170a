"""Feedback rules mapping the current state to a rotation rate.

Sign convention for the rate mu: a rotation by mu*dt > 0 tilts the Bloch
vector away from the +z pole, so dDelta = mu*a_z*dt and da_z = -mu*Delta*dt
to first order.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Union

import numpy as np

from .bloch import (
    BlochState,
    SimParams,
    collapse_arrays,
    measurement_arrays,
    rotation_arrays,
)

if TYPE_CHECKING:
    from .critline import CriticalLine


class Collapse(enum.Enum):
    """Marker returned by ``control`` for the unbounded policy: snap the state to the plane."""

    TO_PLANE = "collapse"


COLLAPSE = Collapse.TO_PLANE


@dataclass(frozen=True)
class NoFeedback:
    pass


@dataclass(frozen=True)
class IdealUnbounded:
    pass


@dataclass(frozen=True)
class BangBangUnbiased:
    lam: float

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("lambda must be nonnegative")


@dataclass(frozen=True)
class FixedBasisCritical:
    """Keep near the plane inside ``line``, rotate to the pole ``target_sign`` outside it."""

    lam: float
    line: "CriticalLine"
    target_sign: int = 1

    def __post_init__(self):
        if not self.lam >= 0:
            raise ValueError("lambda must be nonnegative")
        if self.target_sign not in (1, -1):
            raise ValueError("target_sign must be +1 or -1")


ControlPolicy = Union[NoFeedback, IdealUnbounded, BangBangUnbiased, FixedBasisCritical]


def angle_to_plane(delta, a_z):
    return np.arctan2(np.abs(a_z), delta)


def angle_to_pole(delta, a_z, target_sign):
    """Polar angle between the state and the target pole, in [0, pi]."""
    return np.arctan2(delta, target_sign * a_z)


def _toward_plane(delta, a_z, lam, dt):
    # capped so a single step lands on the plane rather than overshooting it
    return np.sign(a_z) * np.minimum(lam, angle_to_plane(delta, a_z) / dt)


def _toward_pole(delta, a_z, lam, dt, target_sign):
    return -target_sign * np.minimum(lam, angle_to_pole(delta, a_z, target_sign) / dt)


def control_arrays(policy: ControlPolicy, delta, a_z, dt):
    """Rotation rate for each state; raises for the unbounded policy, which has no finite rate."""
    if isinstance(policy, NoFeedback):
        return np.zeros_like(a_z)
    if isinstance(policy, BangBangUnbiased):
        return _toward_plane(delta, a_z, policy.lam, dt)
    if isinstance(policy, FixedBasisCritical):
        inside = policy.line.inside_arrays(delta, a_z, policy.target_sign)
        return np.where(
            inside,
            _toward_plane(delta, a_z, policy.lam, dt),
            _toward_pole(delta, a_z, policy.lam, dt, policy.target_sign),
        )
    if isinstance(policy, IdealUnbounded):
        raise TypeError("IdealUnbounded has no finite rotation rate")
    raise TypeError(f"unknown policy {policy!r}")


def control(policy: ControlPolicy, state: BlochState, dt: float):
    """Rotation rate mu for ``state``, or ``COLLAPSE`` for the unbounded policy."""
    if isinstance(policy, IdealUnbounded):
        return COLLAPSE
    mu = control_arrays(policy, np.float64(state.delta), np.float64(state.a_z), dt)
    return float(mu)


def step_arrays(policy: ControlPolicy, delta, a_z, dW, params: SimParams):
    """Measure, then apply the feedback rotation chosen from the post-measurement state."""
    dt = params.dt
    delta, a_z = measurement_arrays(delta, a_z, dW, params.k, dt, params.scheme)
    if isinstance(policy, NoFeedback):
        return delta, a_z
    if isinstance(policy, IdealUnbounded):
        return collapse_arrays(delta, a_z)
    mu = control_arrays(policy, delta, a_z, dt)
    return rotation_arrays(delta, a_z, mu * dt)


def step_with_policy(state: BlochState, policy: ControlPolicy, dW: float, params: SimParams) -> BlochState:
    if not math.isfinite(dW):
        raise ValueError(f"non-finite Wiener increment {dW!r}")
    d, z = step_arrays(policy, np.float64(state.delta), np.float64(state.a_z), np.float64(dW), params)
    return BlochState(float(d), float(z), state.phi)


def describe(policy: ControlPolicy) -> str:
    if isinstance(policy, NoFeedback):
        return "none"
    if isinstance(policy, IdealUnbounded):
        return "ideal"
    if isinstance(policy, BangBangUnbiased):
        return f"bangbang(lam={policy.lam!r})"
    return f"critical(lam={policy.lam!r},target_sign={policy.target_sign})"
