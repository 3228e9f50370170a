"""Reduced Bloch-vector state of a qubit under continuous sigma_z measurement.

The state is kept as (delta, a_z, phi): delta is the length of the projection
onto the x-y plane, a_z the z-component, phi the azimuth. phi never enters the
dynamics and is carried only for bookkeeping.

Two measurement integrators are available. ``"kraus"`` (the default) applies
the exact Bayesian update for a sigma_z measurement over one step, with the
integrated record increment a_z dt + c dW; it keeps the state inside the ball
and never lets impurity grow when the vector sits in the x-y plane.
``"euler"`` is the plain Euler-Maruyama step of the Bloch SDEs.

All step kernels come in two flavours: the ``*_arrays`` functions operate
elementwise on numpy arrays (used by the ensemble engine), and the
``BlochState`` wrappers call the same kernels on scalars so both paths are
bit-identical.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

BALL_SLACK = 1e-9
STABILITY_LIMIT = 1e-2
SCHEMES = ("kraus", "euler")


@dataclass(frozen=True)
class BlochState:
    delta: float = 0.0
    a_z: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.delta) and math.isfinite(self.a_z)):
            raise ValueError("non-finite Bloch state")
        if self.delta < 0:
            raise ValueError(f"delta must be nonnegative, got {self.delta}")
        if self.delta**2 + self.a_z**2 > 1 + BALL_SLACK:
            raise ValueError("state lies outside the Bloch ball")

    @property
    def radius(self) -> float:
        return math.hypot(self.delta, self.a_z)

    @property
    def a_x(self) -> float:
        return self.delta * math.cos(self.phi)

    @property
    def a_y(self) -> float:
        return self.delta * math.sin(self.phi)


def optimal_time(target_impurity: float, k: float) -> float:
    """Time for the ideal-feedback curve 0.5*exp(-8kt) to reach ``target_impurity``."""
    return math.log(1.0 / (2.0 * target_impurity)) / (8.0 * k)


@dataclass(frozen=True)
class SimParams:
    """Simulation knobs.

    ``dt`` defaults to 1e-3/k and ``max_time`` to ten times the ideal-feedback
    time to reach ``target_impurity``. ``lam`` is the largest allowed angular
    rotation rate of the Bloch vector.
    """

    k: float = 1.0
    dt: float | None = None
    lam: float = 0.0
    target_impurity: float = 0.05
    max_time: float | None = None
    master_seed: int = 1
    initial: BlochState = field(default_factory=BlochState)
    scheme: str = "kraus"

    def __post_init__(self):
        if not self.k > 0:
            raise ValueError("k must be positive")
        if self.dt is None:
            object.__setattr__(self, "dt", 1e-3 / self.k)
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.dt * self.k > STABILITY_LIMIT:
            raise ValueError(f"dt*k = {self.dt * self.k:g} exceeds the stability guard {STABILITY_LIMIT:g}")
        if not self.lam >= 0:
            raise ValueError("lambda must be nonnegative")
        if not 0 < self.target_impurity < 0.5:
            raise ValueError("target impurity must lie in (0, 0.5)")
        if self.max_time is None:
            object.__setattr__(self, "max_time", 10.0 * optimal_time(self.target_impurity, self.k))
        if not self.max_time > 0:
            raise ValueError("max_time must be positive")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")

    @property
    def record_noise(self) -> float:
        """Noise amplitude c of the measurement record, fixed by k = 1/(8c^2)."""
        return 1.0 / math.sqrt(8.0 * self.k)

    @property
    def n_steps(self) -> int:
        return int(math.ceil(self.max_time / self.dt - 1e-9))

    def with_(self, **changes) -> "SimParams":
        return replace(self, **changes)


# -- array kernels ---------------------------------------------------------


def impurity_arrays(delta, a_z):
    return np.clip(0.5 * (1.0 - delta * delta - a_z * a_z), 0.0, 0.5)


def euler_arrays(delta, a_z, dW, k, dt):
    s = math.sqrt(8.0 * k)
    new_delta = delta - (4.0 * k * dt + a_z * s * dW) * delta
    new_az = a_z + (1.0 - a_z * a_z) * s * dW
    return new_delta, new_az


def kraus_arrays(delta, a_z, dW, k, dt):
    # x is 8k times the record increment a_z dt + dW / sqrt(8k)
    x = 8.0 * k * a_z * dt + math.sqrt(8.0 * k) * dW
    th = np.tanh(x)
    den = 1.0 + a_z * th
    new_az = (a_z + th) / den
    new_delta = delta / (np.cosh(x) * den)
    return new_delta, new_az


def measurement_arrays(delta, a_z, dW, k, dt, scheme="kraus"):
    """One measurement step, clamped back into the ball."""
    if scheme == "kraus":
        new_delta, new_az = kraus_arrays(delta, a_z, dW, k, dt)
    else:
        new_delta, new_az = euler_arrays(delta, a_z, dW, k, dt)
    new_delta = np.maximum(new_delta, 0.0)
    new_az = np.clip(new_az, -1.0, 1.0)
    r2 = new_delta * new_delta + new_az * new_az
    over = r2 > 1.0
    if np.any(over):
        scale = np.where(over, 1.0 / np.sqrt(np.where(over, r2, 1.0)), 1.0)
        new_delta = new_delta * scale
        new_az = new_az * scale
    return new_delta, new_az


def rotation_arrays(delta, a_z, angle):
    """Exact rotation by ``angle`` in the (delta, a_z) half-plane.

    A positive angle tilts the vector away from the +z pole. Rounding-level
    negative deltas are reflected back through the axis.
    """
    c = np.cos(angle)
    s = np.sin(angle)
    new_delta = delta * c + a_z * s
    new_az = a_z * c - delta * s
    return np.abs(new_delta), new_az


def collapse_arrays(delta, a_z):
    return np.sqrt(delta * delta + a_z * a_z), np.zeros_like(a_z)


# -- scalar API ------------------------------------------------------------


def impurity(state: BlochState) -> float:
    return float(impurity_arrays(np.float64(state.delta), np.float64(state.a_z)))


def measurement_step(state: BlochState, dW: float, params: SimParams) -> BlochState:
    if not math.isfinite(dW):
        raise ValueError(f"non-finite Wiener increment {dW!r}")
    d, z = measurement_arrays(np.float64(state.delta), np.float64(state.a_z), np.float64(dW), params.k, params.dt, params.scheme)
    return BlochState(float(d), float(z), state.phi)


def rotation_step(state: BlochState, mu: float, dt: float) -> BlochState:
    angle = mu * dt
    if not abs(angle) <= math.pi:
        raise ValueError(f"rotation angle {angle!r} exceeds pi in a single step")
    c, s = float(np.cos(angle)), float(np.sin(angle))
    d = state.delta * c + state.a_z * s
    z = state.a_z * c - state.delta * s
    phi = state.phi
    if d < 0:
        # passed through the z axis: same vector, opposite azimuth
        d = -d
        phi = math.fmod(phi + math.pi, 2 * math.pi)
    return BlochState(d, z, phi)


def collapse_to_plane(state: BlochState) -> BlochState:
    d, z = collapse_arrays(np.float64(state.delta), np.float64(state.a_z))
    return BlochState(float(d), float(z), state.phi)


def sample_wiener(rng: np.random.Generator, dt: float) -> float:
    """Gaussian Wiener increment with variance ``dt``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return float(rng.standard_normal()) * math.sqrt(dt)
