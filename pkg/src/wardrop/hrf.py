"""Hessian-Riemannian flow integration over population flow polytopes.

Each population's flow follows the ordinary differential equation obtained
by projecting the negative cost onto its conservation constraint in the
metric of the entropy Hessian ``diag(1/x)``. Concretely the drift is

    d = -diag(x) c + diag(x) K' y,   (K diag(x) K') y = K diag(x) c,

which keeps ``K d = 0`` exactly, so conservation is preserved along the
flow while the entropy metric keeps every component positive. At a rest
point no population can lower its cost inside its polytope, which is the
equilibrium condition certified by :mod:`wardrop.equilibrium`.

Integration uses an explicit third-order Runge-Kutta scheme with the
Bogacki-Shampine stage layout, per-step halving when positivity is
threatened, and a least-squares pull-back whenever conservation drifts.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Sequence

import numpy as np
import scipy.linalg

from .costs import CostModel, FlowProfile
from .network import KirchhoffSystem, PopulationSystem

__all__ = [
    "SolverConfig",
    "HrfState",
    "SolveReport",
    "StepFailure",
    "TrajectoryPoint",
    "metric_inverse_apply",
    "projected_direction",
    "rhs",
    "step",
    "solve",
    "bregman_divergence",
]

# Relative uptick tolerated when checking divergence-to-limit monotonicity.
LYAPUNOV_UPTICK = 1e-6


class StepFailure(RuntimeError):
    """A single step could not preserve positivity within the halving limit."""


@dataclass(frozen=True)
class SolverConfig:
    """Integrator knobs.

    ``step`` of zero is permitted and makes :func:`step` a no-op, which is
    occasionally convenient in tests; everything else must be positive.
    """

    step: float = 1e-2
    max_time: float = 1e3
    rhs_tol: float = 1e-6
    conservation_tol: float = 1e-8
    positivity_floor: float = 1e-12
    max_halvings: int = 40
    record_stride: int = 10

    def __post_init__(self) -> None:
        if not np.isfinite(self.step) or self.step < 0.0:
            raise ValueError(f"step must be >= 0, got {self.step!r}")
        for name in ("max_time", "rhs_tol", "conservation_tol", "positivity_floor"):
            value = getattr(self, name)
            if not np.isfinite(value) or value <= 0.0:
                raise ValueError(f"{name} must be > 0, got {value!r}")
        if self.max_halvings < 0:
            raise ValueError("max_halvings must be >= 0")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")


class HrfState:
    """Strictly positive per-population flows at one instant of the flow.

    Caches its own evaluated drift so that a convergence check and the
    first integrator stage share one cost evaluation.
    """

    def __init__(self, system: PopulationSystem, thetas: Sequence[np.ndarray], t: float = 0.0):
        thetas = tuple(np.asarray(x, dtype=float) for x in thetas)
        for pop, theta in zip(system.populations, thetas):
            if theta.shape != (pop.n_reduced,):
                raise ValueError(
                    f"population {pop.name!r}: expected {pop.n_reduced} flows, "
                    f"got shape {theta.shape}"
                )
            if not np.all(np.isfinite(theta)) or theta.min() <= 0.0:
                raise ValueError(
                    f"population {pop.name!r}: state components must be strictly positive"
                )
        self.system = system
        self.thetas = thetas
        self.t = float(t)
        self._drift_cache: tuple[int, list[np.ndarray]] | None = None

    def profile(self) -> FlowProfile:
        return FlowProfile(self.system, self.thetas)

    def max_conservation_drift(self) -> float:
        return max(
            pop.kirchhoff.drift(theta)
            for pop, theta in zip(self.system.populations, self.thetas)
        )


def metric_inverse_apply(theta: np.ndarray, vector: np.ndarray) -> np.ndarray:
    """Apply the inverse entropy-Hessian metric, i.e. scale by the flows."""
    theta = np.asarray(theta, dtype=float)
    if np.any(theta <= 0.0):
        raise ValueError("metric requires strictly positive flows")
    return theta * np.asarray(vector, dtype=float)


def projected_direction(
    theta: np.ndarray,
    cost: np.ndarray,
    kirchhoff: KirchhoffSystem | np.ndarray,
    cond_limit: float = 1e12,
) -> np.ndarray:
    """Drift of one population: metric projection of the negative cost.

    Solves ``(K diag(theta) K') y = K diag(theta) cost`` through a Cholesky
    factorization, falling back to a rank-revealing least-squares solve
    when the factor's diagonal suggests conditioning beyond ``cond_limit``,
    and returns ``theta * (K' y - cost)``. The result satisfies
    ``K d = 0`` up to round-off regardless of the branch taken.
    """
    K = kirchhoff.matrix if isinstance(kirchhoff, KirchhoffSystem) else np.asarray(kirchhoff, dtype=float)
    theta = np.asarray(theta, dtype=float)
    cost = np.asarray(cost, dtype=float)
    if np.any(theta <= 0.0):
        raise ValueError("projected direction requires strictly positive flows")
    weighted = K * theta
    M = weighted @ K.T
    target = K @ (theta * cost)
    y: np.ndarray | None = None
    try:
        factor = scipy.linalg.cho_factor(M, check_finite=False)
        diag = np.abs(np.diag(factor[0]))
        if (diag.max() / diag.min()) ** 2 <= cond_limit:
            y = scipy.linalg.cho_solve(factor, target, check_finite=False)
    except scipy.linalg.LinAlgError:
        y = None
    if y is None:
        y = np.linalg.lstsq(M, target, rcond=None)[0]
    return theta * (K.T @ y - cost)


def rhs(state: HrfState, model: CostModel) -> list[np.ndarray]:
    """Stacked drift of every population at a state, cached on the state."""
    cached = state._drift_cache
    if cached is not None and cached[0] == id(model):
        return cached[1]
    directions = _directions(state.system, state.thetas, model)
    state._drift_cache = (id(model), directions)
    return directions


def _directions(
    system: PopulationSystem, thetas: Sequence[np.ndarray], model: CostModel
) -> list[np.ndarray]:
    costs = model.evaluate(FlowProfile(system, thetas))
    return [
        projected_direction(theta, c, pop.kirchhoff)
        for pop, theta, c in zip(system.populations, thetas, costs)
    ]


def rhs_norm(directions: Sequence[np.ndarray]) -> float:
    return max(float(np.abs(d).max(initial=0.0)) for d in directions)


def _pull_back(theta: np.ndarray, kirchhoff: KirchhoffSystem) -> np.ndarray:
    """Least-squares correction back onto the conservation subspace."""
    K = kirchhoff.matrix
    residual = K @ theta - kirchhoff.inflow
    correction = np.linalg.lstsq(K, residual, rcond=None)[0]
    return theta - correction


def step(state: HrfState, model: CostModel, config: SolverConfig) -> HrfState:
    """Advance one explicit third-order Runge-Kutta step.

    Stages follow the 2/9, 1/3, 4/9 Bogacki-Shampine combination. Whenever
    any stage or the tentative result turns a component negative, the step
    width is halved and retried, up to ``config.max_halvings`` times. A
    component that merely sinks into ``[0, positivity_floor]`` is pinned at
    the floor instead: the exact flow approaches zero only asymptotically,
    so the sub-floor undershoot is round-off, and pinning (a perturbation
    below the floor itself) lets the rest of the system keep integrating
    rather than halving forever against the barrier. Conservation is
    re-projected only when drift exceeds the configured tolerance.

    Raises:
        StepFailure: when no acceptable width remains.
    """
    if config.step == 0.0:
        return state
    system = state.system
    floor = config.positivity_floor
    k1 = rhs(state, model)
    h = config.step
    for _ in range(config.max_halvings + 1):
        new = _attempt(system, state.thetas, k1, model, h, floor, config)
        if new is not None:
            return HrfState(system, new, t=state.t + h)
        h *= 0.5
    raise StepFailure(
        f"positivity could not be preserved at t={state.t:.6g} even after "
        f"{config.max_halvings} halvings (floor {floor:g})"
    )


def _lift(vector: np.ndarray, floor: float) -> np.ndarray | None:
    """Pin barrier contact in ``[0, floor]`` at the floor; None if negative."""
    if vector.min() < 0.0:
        return None
    return np.maximum(vector, floor)


def _stage(
    thetas: Sequence[np.ndarray],
    directions: Sequence[np.ndarray],
    h: float,
    floor: float,
) -> list[np.ndarray] | None:
    out = []
    for x, d in zip(thetas, directions):
        lifted = _lift(x + h * d, floor)
        if lifted is None:
            return None
        out.append(lifted)
    return out


def _attempt(
    system: PopulationSystem,
    thetas: Sequence[np.ndarray],
    k1: Sequence[np.ndarray],
    model: CostModel,
    h: float,
    floor: float,
    config: SolverConfig,
) -> tuple[np.ndarray, ...] | None:
    stage1 = _stage(thetas, k1, 0.5 * h, floor)
    if stage1 is None:
        return None
    k2 = _directions(system, stage1, model)
    stage2 = _stage(thetas, k2, 0.75 * h, floor)
    if stage2 is None:
        return None
    k3 = _directions(system, stage2, model)
    out = []
    for pop, x, a, b, c in zip(system.populations, thetas, k1, k2, k3):
        theta = _lift(x + h * (2.0 * a + 3.0 * b + 4.0 * c) / 9.0, floor)
        if theta is None:
            return None
        if pop.kirchhoff.drift(theta) > config.conservation_tol:
            theta = _lift(_pull_back(theta, pop.kirchhoff), floor)
            if theta is None:
                return None
        out.append(theta)
    return tuple(out)


class TrajectoryPoint(NamedTuple):
    t: float
    thetas: tuple[np.ndarray, ...]
    rhs_norm: float


@dataclass
class SolveReport:
    """Outcome of one integration run.

    ``gaps`` stays ``None`` until an equilibrium certificate fills it in.
    ``trajectory`` holds the recorded states (always including the first
    and the final one).
    """

    profile: FlowProfile
    converged: bool
    iterations: int
    simulated_time: float
    rhs_norm: float
    max_conservation_drift: float
    lyapunov_violations: int
    wall_clock_seconds: float
    trajectory: tuple[TrajectoryPoint, ...]
    config: SolverConfig
    gaps: np.ndarray | None = None

    @property
    def final_thetas(self) -> tuple[np.ndarray, ...]:
        return self.profile.thetas


def solve(
    system: PopulationSystem,
    model: CostModel,
    config: SolverConfig | None = None,
    start: Sequence[np.ndarray] | None = None,
) -> SolveReport:
    """Integrate the flow from a strictly positive feasible start.

    ``start`` defaults to the deterministic interior point of each
    population. The run stops as soon as the stacked drift drops below
    ``config.rhs_tol`` in the infinity norm, or reports non-convergence
    once ``config.max_time`` of simulated time has elapsed.
    """
    config = config or SolverConfig()
    if start is None:
        start = system.interior_start()
    state = HrfState(system, start)
    for pop, theta in zip(system.populations, state.thetas):
        drift = pop.kirchhoff.drift(theta)
        if drift > config.conservation_tol:
            raise ValueError(
                f"population {pop.name!r}: start violates conservation "
                f"(drift {drift:.3g} > {config.conservation_tol:g})"
            )

    started = time.perf_counter()
    trajectory: list[TrajectoryPoint] = []
    max_drift = state.max_conservation_drift()
    iterations = 0
    converged = False
    norm = np.inf
    while True:
        directions = rhs(state, model)
        norm = rhs_norm(directions)
        record_due = iterations % config.record_stride == 0
        if record_due:
            trajectory.append(TrajectoryPoint(state.t, state.thetas, norm))
            max_drift = max(max_drift, state.max_conservation_drift())
        if norm <= config.rhs_tol:
            converged = True
            break
        if state.t >= config.max_time or config.step == 0.0:
            break
        state = step(state, model, config)
        iterations += 1
    if not trajectory or trajectory[-1].t != state.t:
        trajectory.append(TrajectoryPoint(state.t, state.thetas, norm))
        max_drift = max(max_drift, state.max_conservation_drift())

    violations = _lyapunov_violations(state.thetas, trajectory)
    return SolveReport(
        profile=state.profile(),
        converged=converged,
        iterations=iterations,
        simulated_time=state.t,
        rhs_norm=norm,
        max_conservation_drift=max_drift,
        lyapunov_violations=violations,
        wall_clock_seconds=time.perf_counter() - started,
        trajectory=tuple(trajectory),
        config=config,
    )


def _lyapunov_violations(
    final: Sequence[np.ndarray], trajectory: Sequence[TrajectoryPoint]
) -> int:
    """Count upticks of the divergence from recorded states to the limit."""
    values = [
        sum(bregman_divergence(f, theta) for f, theta in zip(final, point.thetas))
        for point in trajectory
    ]
    violations = 0
    for previous, current in zip(values, values[1:]):
        if current > previous * (1.0 + LYAPUNOV_UPTICK) + 1e-12:
            violations += 1
    return violations


def bregman_divergence(x: np.ndarray, y: np.ndarray) -> float:
    """Entropy Bregman divergence ``sum x log(x/y) - x + y``.

    ``x`` may touch zero (``0 log 0`` counts as zero), ``y`` must stay
    strictly positive. Nonnegative, and zero exactly at ``x == y``.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape:
        raise ValueError("shapes differ")
    if np.any(x < 0.0):
        raise ValueError("first argument must be nonnegative")
    if np.any(y <= 0.0):
        raise ValueError("second argument must be strictly positive")
    terms = np.where(x > 0.0, x * np.log(np.where(x > 0.0, x, 1.0) / y), 0.0)
    return float(np.sum(terms - x + y))
