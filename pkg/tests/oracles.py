"""Reference computations kept independent of the package's code paths."""
import math

import numpy as np
from scipy.integrate import quad

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def rho_from_bloch(ax, ay, az):
    return 0.5 * (np.eye(2) + ax * SIGMA_X + ay * SIGMA_Y + az * SIGMA_Z)


def bloch_from_rho(rho):
    return tuple(float(np.real(np.trace(rho @ s))) for s in (SIGMA_X, SIGMA_Y, SIGMA_Z))


def kraus_update(rho, dW, k, dt):
    """Gaussian-record Kraus map for a sigma_z measurement over dt, record Y = <z> dt + dW/sqrt(8k)."""
    c2 = 1.0 / (8.0 * k)
    az = float(np.real(np.trace(rho @ SIGMA_Z)))
    y = az * dt + math.sqrt(c2) * dW
    m = np.diag([math.exp(-((y - dt) ** 2) / (4 * c2 * dt)), math.exp(-((y + dt) ** 2) / (4 * c2 * dt))])
    out = m @ rho @ m.conj().T
    return out / np.trace(out)


def no_feedback_exit_time(target, k, dt=0.0):
    """Mean first time |a_z| reaches the target-impurity level, from a_z = 0, Delta = 0.

    In y = atanh(a_z) the motion is dy = sqrt(8k) dW + 8k tanh(y) dt; the mean
    exit time from (-b, b) solves a second-order ODE with closed-form first
    integral. For monitoring on a grid of spacing dt the barrier is shifted by
    0.5826 sqrt(8k dt) (discrete-monitoring continuity correction).
    """
    b = math.atanh(math.sqrt(1.0 - 2.0 * target)) + 0.5826 * math.sqrt(8.0 * k * dt)
    val = quad(lambda y: (y / 2 + math.sinh(2 * y) / 4) / (4 * math.cosh(y) ** 2), 0, b)[0]
    return val / k


def ideal_discrete_passage(target, k, dt, n, seed, max_steps=100000):
    """First passage of p_{j+1} = p_j sech^2(sqrt(8k dt) Z_j), p_0 = 1/2.

    This is the impurity recursion of measure-then-collapse with the Gaussian
    record Kraus step, written directly in terms of impurity.
    """
    rng = np.random.default_rng(seed)
    logp = np.full(n, math.log(0.5))
    tau = np.full(n, np.nan)
    s = math.sqrt(8.0 * k * dt)
    lt = math.log(target)
    for j in range(1, max_steps + 1):
        live = np.isnan(tau)
        if not live.any():
            break
        x = s * rng.standard_normal(live.sum())
        logp[live] += 2.0 * np.log(1.0 / np.cosh(x))
        hit = live.copy()
        hit[live] = logp[live] <= lt
        tau[hit] = j * dt
    return tau
