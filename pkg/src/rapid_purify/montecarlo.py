"""Ensemble simulation, first-passage statistics and speed-up estimates.

Trajectory ``i`` of an experiment is a pure function of (master_seed, i): its
noise comes from its own stream (see ``streams``) and the step kernels act
elementwise. Chunking the trajectories over worker processes therefore cannot
change any number, and two policies run on the same indices share their noise
exactly (common random numbers).

Two notions of "time to reach a target impurity" are provided:

* first passage: mean over trajectories of the first time the trajectory's own
  impurity is at or below the target;
* mean crossing: the time at which the ensemble-mean impurity curve reaches
  the target.

Standard errors for ratios and crossing times come from per-trajectory
influence values (delta method), which also give paired errors for
differences between arms driven by the same noise.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bloch import SimParams, impurity_arrays
from .policies import BangBangUnbiased, ControlPolicy, NoFeedback, step_arrays
from .streams import NoiseBlocks

CENSOR_FLAG_FRACTION = 0.10
PASSAGE_DEFS = ("first-passage", "mean-crossing")


@dataclass(frozen=True)
class ImpurityTarget:
    """Arrival test: impurity at or below ``target``."""

    target: float

    def __call__(self, delta, a_z):
        return impurity_arrays(delta, a_z) <= self.target


@dataclass(frozen=True)
class TrajectoryRecord:
    times: np.ndarray
    impurities: np.ndarray
    delta: np.ndarray
    a_z: np.ndarray
    first_passage: float | None
    record: np.ndarray | None = None

    @property
    def censored(self) -> bool:
        return self.first_passage is None


@dataclass(frozen=True)
class EnsembleStats:
    """Mean and standard error of a per-time curve or of a scalar.

    ``influence`` holds each trajectory's linearized contribution to ``mean``
    (scalar statistics only) so that paired comparisons can be made later.
    """

    n: int
    mean: np.ndarray | float
    stderr: np.ndarray | float
    seed: int
    times: np.ndarray | None = None
    censored_fraction: float = 0.0
    influence: np.ndarray | None = field(default=None, repr=False, compare=False)

    @property
    def flagged(self) -> bool:
        return self.censored_fraction > CENSOR_FLAG_FRACTION


@dataclass(frozen=True)
class SpeedupPoint:
    lam: float
    speedup: float
    stderr: float
    censored_fraction: float
    influence: np.ndarray = field(repr=False, compare=False)

    @property
    def flagged(self) -> bool:
        return self.censored_fraction > CENSOR_FLAG_FRACTION


def _initial_arrays(params: SimParams, n: int):
    return np.full(n, params.initial.delta, dtype=float), np.full(n, params.initial.a_z, dtype=float)


def _paths_chunk(policy, params, indices, n_steps):
    """Impurity of every trajectory at every step, shape (n_steps + 1, len(indices))."""
    delta, a_z = _initial_arrays(params, len(indices))
    noise = NoiseBlocks(params.master_seed, indices, params.dt)
    hist = np.empty((n_steps + 1, len(indices)))
    hist[0] = impurity_arrays(delta, a_z)
    for j in range(1, n_steps + 1):
        delta, a_z = step_arrays(policy, delta, a_z, noise.next(), params)
        hist[j] = impurity_arrays(delta, a_z)
    return hist, delta, a_z


def _passage_chunk(policy, params, indices, reached):
    """First time each trajectory satisfies ``reached``; NaN when censored at max_time."""
    n = len(indices)
    delta, a_z = _initial_arrays(params, n)
    noise = NoiseBlocks(params.master_seed, indices, params.dt)
    passage = np.full(n, np.nan)
    done = reached(delta, a_z)
    passage[done] = 0.0
    active = ~done
    for j in range(1, params.n_steps + 1):
        if not active.any():
            break
        dW = noise.next(active)
        idx = np.flatnonzero(active)
        d, z = step_arrays(policy, delta[idx], a_z[idx], dW[idx], params)
        delta[idx] = d
        a_z[idx] = z
        hit = reached(d, z)
        passage[idx[hit]] = j * params.dt
        active[idx[hit]] = False
    return passage, delta, a_z


def _split(n: int, workers: int):
    workers = max(1, min(int(workers), n))
    edges = np.linspace(0, n, workers + 1).astype(int)
    return [np.arange(a, b) for a, b in zip(edges[:-1], edges[1:])]


def _map_chunks(fn, n, workers, *args):
    chunks = _split(n, workers)
    if len(chunks) == 1:
        return [fn(*args[:2], chunks[0], *args[2:])]
    with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
        futures = [pool.submit(fn, *args[:2], c, *args[2:]) for c in chunks]
        return [f.result() for f in futures]


def _check_n(n):
    if int(n) < 2:
        raise ValueError("an ensemble needs at least two trajectories")


# -- single trajectories ---------------------------------------------------


def run_trajectory(
    policy: ControlPolicy,
    params: SimParams,
    trajectory_index: int,
    *,
    stride: int = 1,
    record: bool = False,
    stop_at_target: bool = True,
) -> TrajectoryRecord:
    """Integrate one trajectory until its impurity reaches the target or the horizon.

    Samples are taken every ``stride`` steps, plus the initial and final
    states. With ``record`` the measurement-record increment
    dr = a_z dt + c dW, summed over each sampling interval, is returned too.
    """
    if stride < 1:
        raise ValueError("stride must be at least 1")
    k, dt = params.k, params.dt
    c = params.record_noise
    delta, a_z = _initial_arrays(params, 1)
    noise = NoiseBlocks(params.master_seed, [trajectory_index], dt)
    reached = ImpurityTarget(params.target_impurity)

    times, imps, ds, zs, rec = [0.0], [float(impurity_arrays(delta, a_z)[0])], [delta[0]], [a_z[0]], [0.0]
    passage = 0.0 if reached(delta, a_z)[0] else None
    dr = 0.0
    last = 0
    j = 0
    while j < params.n_steps and not (stop_at_target and passage is not None):
        j += 1
        dW = noise.next()
        dr += float(a_z[0]) * dt + c * float(dW[0])
        delta, a_z = step_arrays(policy, delta, a_z, dW, params)
        if passage is None and reached(delta, a_z)[0]:
            passage = j * dt
        if j % stride == 0:
            times.append(j * dt)
            imps.append(float(impurity_arrays(delta, a_z)[0]))
            ds.append(float(delta[0]))
            zs.append(float(a_z[0]))
            rec.append(dr)
            dr = 0.0
            last = j
    if last != j:
        times.append(j * dt)
        imps.append(float(impurity_arrays(delta, a_z)[0]))
        ds.append(float(delta[0]))
        zs.append(float(a_z[0]))
        rec.append(dr)
    return TrajectoryRecord(
        times=np.array(times),
        impurities=np.array(imps),
        delta=np.array(ds),
        a_z=np.array(zs),
        first_passage=passage,
        record=np.array(rec) if record else None,
    )


# -- ensembles -------------------------------------------------------------


def impurity_paths(policy: ControlPolicy, params: SimParams, n: int, *, workers: int = 1):
    """Per-step impurities of ``n`` trajectories up to ``params.max_time``.

    Returns ``(times, paths, final_a_z)`` with ``paths`` of shape (steps + 1, n).
    """
    _check_n(n)
    n_steps = params.n_steps
    parts = _map_chunks(_paths_chunk, n, workers, policy, params, n_steps)
    paths = np.concatenate([p[0] for p in parts], axis=1)
    final_az = np.concatenate([p[2] for p in parts])
    times = np.arange(n_steps + 1) * params.dt
    return times, paths, final_az


def ensemble_mean_impurity(
    policy: ControlPolicy, params: SimParams, n: int, *, stride: int = 1, workers: int = 1
) -> EnsembleStats:
    """Mean impurity curve and its standard error on a grid shared by all trajectories."""
    times, paths, _ = impurity_paths(policy, params, n, workers=workers)
    sel = slice(None, None, stride)
    mean = paths.mean(axis=1)
    stderr = paths.std(axis=1, ddof=1) / math.sqrt(n)
    return EnsembleStats(n=n, mean=mean[sel], stderr=stderr[sel], seed=params.master_seed, times=times[sel])


def first_passage_times(policy, params: SimParams, n: int, reached=None, *, workers: int = 1):
    """Per-trajectory first-passage times (NaN when censored) and final states."""
    _check_n(n)
    if reached is None:
        reached = ImpurityTarget(params.target_impurity)
    parts = _map_chunks(_passage_chunk, n, workers, policy, params, reached)
    return tuple(np.concatenate([p[i] for p in parts]) for i in range(3))


def passage_stats(passage: np.ndarray, params: SimParams) -> EnsembleStats:
    """Mean first passage with censored trajectories counted at ``max_time``."""
    censored = np.isnan(passage)
    tau = np.where(censored, params.max_time, passage)
    n = len(tau)
    mean = float(tau.mean())
    return EnsembleStats(
        n=n,
        mean=mean,
        stderr=float(tau.std(ddof=1) / math.sqrt(n)),
        seed=params.master_seed,
        censored_fraction=float(censored.mean()),
        influence=tau - mean,
    )


def mean_first_passage(
    policy: ControlPolicy, params: SimParams, n: int, target: float | None = None, *, workers: int = 1
) -> EnsembleStats:
    if target is not None:
        params = params.with_(target_impurity=target)
    passage, _, _ = first_passage_times(policy, params, n, workers=workers)
    return passage_stats(passage, params)


def crossing_stats(times: np.ndarray, paths: np.ndarray, target: float, seed: int) -> EnsembleStats:
    """Time at which the mean of ``paths`` first falls to ``target``, linearly interpolated.

    A curve that never reaches the target is reported at the last grid time
    with ``censored_fraction`` 1.
    """
    n = paths.shape[1]
    mean = paths.mean(axis=1)
    below = np.flatnonzero(mean <= target)
    if len(below) == 0:
        return EnsembleStats(n=n, mean=float(times[-1]), stderr=math.nan, seed=seed,
                             censored_fraction=1.0, influence=np.zeros(n))
    j = int(below[0])
    if j == 0:
        return EnsembleStats(n=n, mean=float(times[0]), stderr=0.0, seed=seed, influence=np.zeros(n))
    m0, m1 = mean[j - 1], mean[j]
    dt = times[j] - times[j - 1]
    frac = (m0 - target) / (m0 - m1)
    t_cross = float(times[j - 1] + frac * dt)
    slope = (m1 - m0) / dt
    p_at = paths[j - 1] + frac * (paths[j] - paths[j - 1])
    influence = -(p_at - target) / slope
    return EnsembleStats(
        n=n,
        mean=t_cross,
        stderr=float(influence.std(ddof=1) / math.sqrt(n)),
        seed=seed,
        influence=influence,
    )


def mean_crossing_time(
    policy: ControlPolicy, params: SimParams, n: int, target: float | None = None, *, workers: int = 1
) -> EnsembleStats:
    target = params.target_impurity if target is None else target
    times, paths, _ = impurity_paths(policy, params, n, workers=workers)
    return crossing_stats(times, paths, target, params.master_seed)


def time_to_target(policy, params, n, target=None, passage_def="first-passage", *, workers=1) -> EnsembleStats:
    if passage_def == "first-passage":
        return mean_first_passage(policy, params, n, target, workers=workers)
    if passage_def == "mean-crossing":
        return mean_crossing_time(policy, params, n, target, workers=workers)
    raise ValueError(f"passage_def must be one of {PASSAGE_DEFS}")


def ratio_stats(num: EnsembleStats, den: EnsembleStats):
    """num/den with an influence-based standard error valid for paired (CRN) arms."""
    a, b = num.mean, den.mean
    ratio = a / b
    infl = (num.influence - ratio * den.influence) / b
    n = len(infl)
    return ratio, float(infl.std(ddof=1) / math.sqrt(n)), infl


def paired_stderr(infl_a: np.ndarray, infl_b: np.ndarray) -> float:
    """Standard error of the difference of two statistics computed on the same trajectories."""
    d = infl_a - infl_b
    return float(d.std(ddof=1) / math.sqrt(len(d)))


def speedup_vs_lambda(
    lambdas,
    params: SimParams,
    n: int,
    target: float | None = None,
    passage_def: str = "mean-crossing",
    *,
    workers: int = 1,
) -> list[SpeedupPoint]:
    """Speed-up of bang-bang feedback over plain measurement for each rate in ``lambdas``.

    Every arm reuses trajectory indices 0..n-1 and hence the same noise.
    """
    _check_n(n)
    if any(not lam >= 0 for lam in lambdas):
        raise ValueError("all lambdas must be nonnegative")
    if target is not None:
        params = params.with_(target_impurity=target)
    base = time_to_target(NoFeedback(), params, n, passage_def=passage_def, workers=workers)
    out = []
    for lam in lambdas:
        arm = time_to_target(BangBangUnbiased(lam), params, n, passage_def=passage_def, workers=workers)
        s, se, infl = ratio_stats(base, arm)
        out.append(SpeedupPoint(lam=lam, speedup=s, stderr=se,
                                censored_fraction=max(base.censored_fraction, arm.censored_fraction),
                                influence=infl))
    return out
