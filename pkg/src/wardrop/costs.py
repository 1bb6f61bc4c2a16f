"""Flow profiles and edge cost models.

A flow profile bundles one reduced flow vector per population; cost models
map a profile to one per-edge cost vector per population, each living in
that population's reduced index space. Models only need to be continuous
and monotone in the profile for the surrounding machinery to make sense,
and ``monotonicity_probe`` gives a cheap sampled check of the latter.
"""

from __future__ import annotations

import abc
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .network import NetworkError, PopulationSystem

__all__ = [
    "FlowProfile",
    "CostModel",
    "LinearSumCost",
    "WeightedCongestionCost",
    "EmissionParams",
    "EmissionCost",
    "MonotonicityReport",
    "edge_speed",
    "emission_rate",
    "monotonicity_probe",
    "EMISSION_TYPES",
]


class FlowProfile:
    """Per-population reduced flows with a lazily assembled full-edge view.

    The full view is an (n_edges, n_populations) matrix whose entries on
    pruned edges are exactly zero; ``edge_totals`` sums it across
    populations.
    """

    def __init__(self, system: PopulationSystem, thetas: Sequence[np.ndarray]):
        thetas = tuple(np.asarray(t, dtype=float) for t in thetas)
        if len(thetas) != system.size:
            raise NetworkError(
                f"expected {system.size} flow vectors, got {len(thetas)}"
            )
        for pop, theta in zip(system.populations, thetas):
            if theta.shape != (pop.n_reduced,):
                raise NetworkError(
                    f"population {pop.name!r}: expected {pop.n_reduced} flows, "
                    f"got shape {theta.shape}"
                )
            if not np.all(np.isfinite(theta)):
                raise NetworkError(f"population {pop.name!r}: non-finite flow")
            if theta.min(initial=0.0) < 0.0:
                raise NetworkError(f"population {pop.name!r}: negative flow component")
        self.system = system
        self.thetas = thetas

    @cached_property
    def matrix(self) -> np.ndarray:
        """Full-edge flows, one column per population."""
        full = np.zeros((self.system.network.n_edges, self.system.size))
        for r, (pop, theta) in enumerate(zip(self.system.populations, self.thetas)):
            full[list(pop.edge_map), r] = theta
        return full

    @cached_property
    def edge_totals(self) -> np.ndarray:
        """Total flow per edge, across populations."""
        return self.matrix.sum(axis=1)

    def population(self, r: int) -> np.ndarray:
        return self.thetas[r]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FlowProfile):
            return NotImplemented
        return self.system is other.system and all(
            np.array_equal(a, b) for a, b in zip(self.thetas, other.thetas)
        )

    def __repr__(self) -> str:
        sizes = ", ".join(f"{p.name}:{t.shape[0]}" for p, t in zip(self.system.populations, self.thetas))
        return f"FlowProfile({sizes})"


class CostModel(abc.ABC):
    """Maps a flow profile to per-population reduced cost vectors."""

    name: str = "abstract"

    @abc.abstractmethod
    def evaluate(self, profile: FlowProfile) -> list[np.ndarray]:
        """Per-population edge costs, in each population's reduced space."""

    def param_record(self) -> dict:
        """Serializable record of the model's parameters."""
        return {}


class LinearSumCost(CostModel):
    """Every population pays the total flow on each edge it uses.

    This is the gradient of half the squared total flow, so equilibria
    coincide with a quadratic program over the admissible sets.
    """

    name = "linear_sum"

    def evaluate(self, profile: FlowProfile) -> list[np.ndarray]:
        totals = profile.edge_totals
        return [totals[list(p.edge_map)] for p in profile.system.populations]


class WeightedCongestionCost(CostModel):
    """Mix of a weighted total load and the population's own flow.

    On edge k, population r pays
    ``mix[0] * sum_s weights[s] * J[k, s] + mix[1] * J[k, r]``.
    """

    name = "weighted"

    def __init__(self, weights: Sequence[float], mix: Sequence[float] = (0.5, 0.5)):
        self.weights = np.asarray(weights, dtype=float)
        self.mix = tuple(float(m) for m in mix)
        if self.weights.ndim != 1 or self.weights.size == 0:
            raise ValueError("weights must be a non-empty 1-D sequence")
        if np.any(self.weights < 0.0):
            raise ValueError("weights must be nonnegative")
        if len(self.mix) != 2:
            raise ValueError("mix must hold exactly two coefficients")

    def evaluate(self, profile: FlowProfile) -> list[np.ndarray]:
        if profile.system.size != self.weights.size:
            raise ValueError(
                f"model built for {self.weights.size} populations, "
                f"profile has {profile.system.size}"
            )
        matrix = profile.matrix
        shared = matrix @ self.weights
        out = []
        for r, pop in enumerate(profile.system.populations):
            full = self.mix[0] * shared + self.mix[1] * matrix[:, r]
            out.append(full[list(pop.edge_map)])
        return out

    def param_record(self) -> dict:
        return {"weights": self.weights.tolist(), "mix": list(self.mix)}


EMISSION_TYPES = ("FC", "HC", "NOx", "CO", "CO2")

# Speed-dependence coefficients a (g/km * km/h) and offsets b (g/km) for a
# passenger car, one row per emission type above, with money prices in $/kg.
_CAR_A = np.array([1.56e3, 1.08e1, 2.00, 8.08e1, 4.78e3])
_CAR_B = np.array([3.54e1, -7.11e-3, -4.49e-2, 1.16, 1.11e2])
_PRICES = np.array([1.0321, 12.91, 14.54, 0.37, 0.02])

GRAMS_PER_KG = 1000.0


@dataclass(frozen=True)
class EmissionParams:
    """Parameters of the emission-pricing cost model.

    ``a`` and ``b`` hold one row per population and one column per entry of
    ``EMISSION_TYPES``; emission rates follow ``a / speed + b`` in g/km and
    are clamped at zero. ``prices`` is in $/kg (rates are converted from
    grams before pricing). Congestion follows a BPR-style slowdown
    ``speed = free_flow_speed / (1 + alpha (total/capacity)**beta)`` with
    free-flow travel time ``length / free_flow_speed`` unless a per-edge
    ``travel_time_h`` override is given.
    """

    a: np.ndarray
    b: np.ndarray
    prices: np.ndarray
    alpha: float = 5.0
    beta: float = 3.0
    capacity: float = 50.0
    free_flow_speed: float = 50.0
    travel_time_h: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "a", np.atleast_2d(np.asarray(self.a, dtype=float)))
        object.__setattr__(self, "b", np.atleast_2d(np.asarray(self.b, dtype=float)))
        object.__setattr__(self, "prices", np.asarray(self.prices, dtype=float))
        if self.a.shape != self.b.shape:
            raise ValueError("a and b must have matching shapes")
        if self.a.shape[1] != self.prices.size:
            raise ValueError("one price per emission type is required")
        if np.any(self.a <= 0.0):
            raise ValueError("speed coefficients a must be positive")
        if np.any(self.prices < 0.0):
            raise ValueError("prices must be nonnegative")
        for name, value in (("alpha", self.alpha), ("beta", self.beta),
                            ("capacity", self.capacity),
                            ("free_flow_speed", self.free_flow_speed)):
            if not np.isfinite(value) or value <= 0.0:
                raise ValueError(f"{name} must be > 0, got {value!r}")
        if self.travel_time_h is not None:
            object.__setattr__(
                self, "travel_time_h", tuple(float(t) for t in self.travel_time_h)
            )
            if any(t <= 0.0 for t in self.travel_time_h):
                raise ValueError("travel times must be positive")

    @property
    def n_populations(self) -> int:
        return self.a.shape[0]

    @classmethod
    def reference_fleet(
        cls, multipliers: Sequence[float] = (1.0,), **overrides
    ) -> "EmissionParams":
        """Car emission table scaled per population.

        ``multipliers`` gives one emission scale factor per population
        (e.g. ``(1, 3)`` for cars plus trucks emitting three times as much).
        """
        mult = np.asarray(multipliers, dtype=float)
        if mult.ndim != 1 or mult.size == 0 or np.any(mult <= 0.0):
            raise ValueError("multipliers must be positive, one per population")
        return cls(
            a=mult[:, None] * _CAR_A[None, :],
            b=mult[:, None] * _CAR_B[None, :],
            prices=_PRICES.copy(),
            **overrides,
        )


def edge_speed(
    total_flow: np.ndarray,
    lengths_km: np.ndarray,
    params: EmissionParams,
) -> np.ndarray:
    """Congestion-degraded speed (km/h) on each edge.

    Free-flow speed is ``lengths / travel_time`` and degrades by the factor
    ``1 + alpha (total/capacity)**beta``.
    """
    total = np.asarray(total_flow, dtype=float)
    lengths = np.asarray(lengths_km, dtype=float)
    if np.any(total < 0.0):
        raise ValueError("total flow must be nonnegative")
    if params.travel_time_h is not None:
        free = lengths / np.asarray(params.travel_time_h, dtype=float)
    else:
        free = np.full_like(lengths, params.free_flow_speed)
    return free / (1.0 + params.alpha * (total / params.capacity) ** params.beta)


def emission_rate(speed: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Emission rate ``a / speed + b`` in g/km, clamped at zero."""
    speed = np.asarray(speed, dtype=float)
    if np.any(speed <= 0.0):
        raise ValueError("speed must be positive")
    return np.maximum(np.asarray(a) / speed + np.asarray(b), 0.0)


class EmissionCost(CostModel):
    """Money-valued emission cost with a self-flow regularization.

    On edge k, population r pays half the edge's priced emission bill per
    unit of flow (length times the priced, gram-to-kilogram converted
    emission rates at the congested speed) plus half its own flow there.
    Requires the network to carry edge lengths.
    """

    name = "emission"

    def __init__(self, params: EmissionParams):
        self.params = params

    def evaluate(self, profile: FlowProfile) -> list[np.ndarray]:
        system = profile.system
        if self.params.n_populations != system.size:
            raise ValueError(
                f"model built for {self.params.n_populations} populations, "
                f"profile has {system.size}"
            )
        if system.network.lengths_km is None:
            raise NetworkError("emission cost requires edge lengths on the network")
        lengths = np.asarray(system.network.lengths_km, dtype=float)
        speed = edge_speed(profile.edge_totals, lengths, self.params)
        out = []
        for r, pop in enumerate(system.populations):
            rates = emission_rate(
                speed[None, :], self.params.a[r][:, None], self.params.b[r][:, None]
            )
            dollars_per_km = self.params.prices @ rates / GRAMS_PER_KG
            shared = lengths * dollars_per_km / 2.0
            out.append(shared[list(pop.edge_map)] + profile.thetas[r] / 2.0)
        return out

    def param_record(self) -> dict:
        return {
            "a": self.params.a.tolist(),
            "b": self.params.b.tolist(),
            "prices": self.params.prices.tolist(),
            "alpha": self.params.alpha,
            "beta": self.params.beta,
            "capacity": self.params.capacity,
            "free_flow_speed": self.params.free_flow_speed,
            "travel_time_h": list(self.params.travel_time_h)
            if self.params.travel_time_h is not None else None,
        }


@dataclass(frozen=True)
class MonotonicityReport:
    """Outcome of a sampled monotonicity check.

    ``min_value`` is the smallest inner product ``<C(J1)-C(J2), J1-J2>``
    seen; ``min_separated`` restricts the minimum to pairs at least
    ``separation`` apart in the infinity norm (``nan`` when no sampled pair
    is that far apart). ``witness`` holds the minimizing pair.
    """

    min_value: float
    min_separated: float
    witness: tuple[FlowProfile, FlowProfile]
    pairs: int
    separation: float

    @property
    def monotone(self) -> bool:
        return self.min_value >= -1e-10


def monotonicity_probe(
    model: CostModel,
    system: PopulationSystem,
    pairs: int = 1000,
    seed: int = 0,
    separation: float = 1e-3,
) -> MonotonicityReport:
    """Estimate monotonicity of a cost model by sampling feasible pairs.

    Pairs are random convex combinations of interior points and
    best-response vertices of each population's polytope, so every sample
    is feasible. A negative ``min_value`` certifies non-monotonicity with
    the witness pair; a nonnegative one is merely evidence.
    """
    from .equilibrium import sample_profiles

    if pairs < 1:
        raise ValueError("need at least one pair")
    rng = np.random.default_rng(seed)
    profiles = sample_profiles(system, 2 * pairs, rng=rng)
    best = np.inf
    best_sep = np.inf
    witness: tuple[FlowProfile, FlowProfile] | None = None
    for i in range(pairs):
        p1, p2 = profiles[2 * i], profiles[2 * i + 1]
        c1 = model.evaluate(p1)
        c2 = model.evaluate(p2)
        value = 0.0
        gap = 0.0
        for a1, a2, d1, d2 in zip(c1, c2, p1.thetas, p2.thetas):
            diff = d1 - d2
            value += float((a1 - a2) @ diff)
            gap = max(gap, float(np.abs(diff).max(initial=0.0)))
        if value < best:
            best = value
            witness = (p1, p2)
        if gap >= separation and value < best_sep:
            best_sep = value
    assert witness is not None
    return MonotonicityReport(
        min_value=best,
        min_separated=best_sep if np.isfinite(best_sep) else float("nan"),
        witness=witness,
        pairs=pairs,
        separation=separation,
    )
