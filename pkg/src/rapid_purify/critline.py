"""Switching line for state preparation when the measurement basis is fixed.

The target is a pole of the measured axis. In the (delta, a_z) half-disc a
state is described by its radius r and its polar angle psi from the target
pole. The line gives a threshold radius as a piecewise-linear function of psi
on a fixed grid over [0, pi/2]; states below it are held near the x-y plane,
states on or beyond it are rotated toward the target at the full rate.
States in the far hemisphere (psi > pi/2) use the threshold at pi/2.

The line is tuned by simulating the policy with frozen noise and running a
bounded Nelder-Mead search over the node radii; the radius at psi = 0 is
pinned to the target-purity shell.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize as sopt

from .bloch import BlochState, SimParams, impurity_arrays
from .montecarlo import EnsembleStats, first_passage_times, paired_stderr, passage_stats
from .policies import FixedBasisCritical, angle_to_pole

DEFAULT_NODES = 8
DEFAULT_ANGLE_TOL = 0.05
ARRIVALS = ("combined", "impurity")


def shell_radius(target_impurity: float) -> float:
    """Bloch radius at which the impurity equals ``target_impurity``."""
    return math.sqrt(1.0 - 2.0 * target_impurity)


@dataclass(frozen=True)
class CriticalLine:
    psi: np.ndarray
    radius: np.ndarray

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=float)
        radius = np.asarray(self.radius, dtype=float)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "radius", radius)
        if psi.ndim != 1 or psi.shape != radius.shape or len(psi) < 2:
            raise ValueError("psi and radius must be matching 1-d arrays with at least two nodes")
        if psi[0] != 0.0 or psi[-1] > math.pi / 2 + 1e-12 or np.any(np.diff(psi) <= 0):
            raise ValueError("psi must start at 0, increase strictly and stay within pi/2")
        if np.any(radius < 0) or np.any(radius > 1):
            raise ValueError("radii must lie in [0, 1]")

    def __eq__(self, other):
        if not isinstance(other, CriticalLine):
            return NotImplemented
        return np.array_equal(self.psi, other.psi) and np.array_equal(self.radius, other.radius)

    __hash__ = None

    def threshold(self, psi):
        return np.interp(np.minimum(psi, math.pi / 2), self.psi, self.radius)

    def inside_arrays(self, delta, a_z, target_sign=1):
        r = np.sqrt(delta * delta + a_z * a_z)
        return r < self.threshold(angle_to_pole(delta, a_z, target_sign))

    def pinned(self, target_impurity: float) -> bool:
        return abs(self.radius[0] - shell_radius(target_impurity)) <= 1e-12

    @classmethod
    def constant(cls, radius: float, n_nodes: int = DEFAULT_NODES, target_impurity: float | None = None):
        """Flat line; with ``target_impurity`` the psi = 0 node is pinned to the target shell."""
        r = np.full(n_nodes, float(radius))
        if target_impurity is not None:
            r[0] = shell_radius(target_impurity)
        return cls(np.linspace(0.0, math.pi / 2, n_nodes), r)

    @classmethod
    def plane_then_rotate(cls, target_impurity: float, n_nodes: int = DEFAULT_NODES):
        """Purify in the plane up to the target shell, then turn to the target."""
        return cls.constant(shell_radius(target_impurity), n_nodes)

    def with_free_radii(self, free) -> "CriticalLine":
        r = self.radius.copy()
        r[1:] = free
        return CriticalLine(self.psi, r)


def inside(line: CriticalLine, state: BlochState, target_sign: int = 1) -> bool:
    """True when ``state`` lies strictly below the line; the line itself counts as outside."""
    return bool(line.inside_arrays(np.float64(state.delta), np.float64(state.a_z), target_sign))


@dataclass(frozen=True)
class TargetArrival:
    """Arrival test for state preparation at a pole."""

    target: float
    angle_tol: float = DEFAULT_ANGLE_TOL
    target_sign: int = 1
    mode: str = "combined"

    def __post_init__(self):
        if self.mode not in ARRIVALS:
            raise ValueError(f"arrival mode must be one of {ARRIVALS}")

    def __call__(self, delta, a_z):
        ok = impurity_arrays(delta, a_z) <= self.target
        if self.mode == "combined":
            ok &= angle_to_pole(delta, a_z, self.target_sign) <= self.angle_tol
        return ok


def time_to_target(
    line: CriticalLine,
    params: SimParams,
    n: int,
    seed: int | None = None,
    *,
    target_sign: int = 1,
    angle_tol: float = DEFAULT_ANGLE_TOL,
    arrival: str = "combined",
    workers: int = 1,
) -> EnsembleStats:
    """Mean time to reach the target under the line's policy, on trajectories 0..n-1 of ``seed``."""
    if not params.lam > 0:
        raise ValueError("the fixed-basis policy needs lambda > 0")
    if seed is not None:
        params = params.with_(master_seed=seed)
    policy = FixedBasisCritical(params.lam, line, target_sign)
    reached = TargetArrival(params.target_impurity, angle_tol, target_sign, arrival)
    passage, _, _ = first_passage_times(policy, params, n, reached, workers=workers)
    return passage_stats(passage, params)


def objective(line: CriticalLine, params: SimParams, n: int, seed: int | None = None, **kw) -> tuple[float, float]:
    """(mean time-to-target, standard error)."""
    st = time_to_target(line, params, n, seed, **kw)
    return st.mean, st.stderr


@dataclass
class OptimizeResult:
    line: CriticalLine
    objective: float
    stderr: float
    initial_objective: float
    converged: bool
    n_evals: int
    history: list = field(default_factory=list, repr=False)


def optimize(
    initial_line: CriticalLine,
    params: SimParams,
    n: int,
    seed: int | None = None,
    max_iters: int = 200,
    *,
    step: float = 0.15,
    restarts: int = 1,
    workers: int = 1,
    **kw,
) -> OptimizeResult:
    """Search the free node radii for the shortest mean time-to-target.

    The noise is frozen (same seed and trajectory indices for every
    candidate), so the objective is a deterministic function of the line. The
    initial simplex steps each free radius inward by ``step``; after the first
    search one restart is made from the best line with the step halved.
    """
    if not initial_line.pinned(params.target_impurity):
        raise ValueError("the psi = 0 radius must sit on the target-purity shell")
    cache: dict[bytes, EnsembleStats] = {}
    history = []

    def evaluate(free):
        free = np.clip(np.asarray(free, dtype=float), 0.0, 1.0)
        key = free.tobytes()
        if key not in cache:
            cache[key] = time_to_target(initial_line.with_free_radii(free), params, n, seed, workers=workers, **kw)
            history.append((free.copy(), cache[key].mean))
        return cache[key]

    x0 = initial_line.radius[1:].copy()
    start = evaluate(x0)
    best_x, best = x0, start
    converged = False
    if max_iters > 0:
        x = x0
        s = step
        for attempt in range(1 + restarts):
            dim = len(x)
            simplex = np.vstack([x] + [x - s * np.eye(dim)[i] for i in range(dim)])
            # keep the simplex inside the box; steps that hit 0 go outward instead
            simplex = np.where(simplex < 0, x + s, simplex)
            res = sopt.minimize(
                lambda v: evaluate(v).mean,
                x,
                method="Nelder-Mead",
                bounds=[(0.0, 1.0)] * dim,
                options={"maxiter": max_iters, "initial_simplex": np.clip(simplex, 0.0, 1.0),
                         "xatol": 1e-3, "fatol": 0.0},
            )
            converged = bool(res.success)
            cand_x = np.clip(res.x, 0.0, 1.0)
            cand = evaluate(cand_x)
            if cand.mean < best.mean:
                best_x, best = cand_x, cand
            x = best_x
            s = s / 2
    # every evaluated point is a candidate; report the best one seen
    for free, val in history:
        if val < best.mean:
            best_x, best = free, evaluate(free)
    return OptimizeResult(
        line=initial_line.with_free_radii(best_x) if max_iters > 0 else initial_line,
        objective=best.mean,
        stderr=best.stderr,
        initial_objective=start.mean,
        converged=converged,
        n_evals=len(cache),
        history=history,
    )


def compare(line_a: CriticalLine, line_b: CriticalLine, params: SimParams, n: int, seed: int | None = None, **kw):
    """Paired comparison on shared noise: returns (mean_a, mean_b, stderr of mean_a - mean_b)."""
    a = time_to_target(line_a, params, n, seed, **kw)
    b = time_to_target(line_b, params, n, seed, **kw)
    return a.mean, b.mean, paired_stderr(a.influence, b.influence)


# -- persistence -----------------------------------------------------------


def write_line_csv(line: CriticalLine, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["psi", "radius"])
    for p, r in zip(line.psi, line.radius):
        w.writerow([repr(float(p)), repr(float(r))])


def read_line_csv(fh) -> CriticalLine:
    if isinstance(fh, str):
        fh = io.StringIO(fh)
    rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    header, body = rows[0], rows[1:]
    ip, ir = header.index("psi"), header.index("radius")
    return CriticalLine([float(r[ip]) for r in body if r], [float(r[ir]) for r in body if r])
