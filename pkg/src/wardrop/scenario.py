"""Scenario files: a JSON schema tying networks, populations, and costs.

A scenario document looks like::

    {
      "name": "rush-hour",
      "vertices": [1, 2, 3],
      "edges": [[1, 2], [2, 3]],
      "exits": [3],
      "lengths_km": [1.0, 2.5],
      "populations": [
        {"name": "cars", "entrances": {"1": 10.0},
         "allowed_edges": [[1, 2], [2, 3]]}
      ],
      "cost": {"type": "weighted",
               "params": {"weights": [1.0], "mix": [0.5, 0.5]}},
      "solver": {"step": 0.01}
    }

``lengths_km``, ``allowed_edges``, ``params`` and ``solver`` are optional;
entrance keys are JSON strings and are matched back to the vertices by
their string form. Parsing errors cite the offending line or field. Three
built-in presets (``scenario1``..``scenario3``) reproduce the benchmark
networks used across the test-suite.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .costs import (
    CostModel,
    EmissionCost,
    EmissionParams,
    LinearSumCost,
    WeightedCongestionCost,
)
from .hrf import SolverConfig
from .network import NetworkError, NetworkSpec, PopulationSpec, PopulationSystem

__all__ = [
    "ScenarioError",
    "Scenario",
    "parse_scenario",
    "load_scenario",
    "scenario_to_dict",
    "dump_scenario",
    "preset",
    "PRESET_NAMES",
]

COST_TYPES = ("linear_sum", "weighted", "emission")


class ScenarioError(ValueError):
    """A scenario document that cannot be parsed or validated.

    Carries the offending ``field`` path (dotted, with list indices) or the
    ``line`` of a syntax error so messages point at the problem.
    """

    def __init__(self, message: str, field: str | None = None, line: int | None = None,
                 source: str | None = None):
        self.field = field
        self.line = line
        self.source = source
        where = source or "scenario"
        if line is not None:
            where += f":{line}"
        if field:
            where += f": {field}"
        super().__init__(f"{where}: {message}")


@dataclass
class Scenario:
    """A fully described solver input."""

    name: str
    network: NetworkSpec
    populations: tuple[PopulationSpec, ...]
    cost_type: str
    cost_params: dict = field(default_factory=dict)
    solver: SolverConfig = field(default_factory=SolverConfig)
    notes: str = ""

    def __post_init__(self) -> None:
        self.populations = tuple(self.populations)
        if self.cost_type not in COST_TYPES:
            raise ScenarioError(
                f"unknown cost type {self.cost_type!r}; expected one of {COST_TYPES}",
                field="cost.type",
            )

    def build_system(self) -> PopulationSystem:
        return PopulationSystem.build(self.network, self.populations)

    def build_cost(self) -> CostModel:
        return _build_cost(self)


def _build_cost(scenario: Scenario) -> CostModel:
    params = dict(scenario.cost_params)
    n_pops = len(scenario.populations)
    if scenario.cost_type == "linear_sum":
        return LinearSumCost()
    if scenario.cost_type == "weighted":
        weights = params.get("weights")
        if weights is None:
            weights = [
                p.cost_params.get("weight", 1.0) for p in scenario.populations
            ]
        if len(weights) != n_pops:
            raise ScenarioError(
                f"{len(weights)} weights for {n_pops} populations",
                field="cost.params.weights",
            )
        return WeightedCongestionCost(weights=weights, mix=params.get("mix", (0.5, 0.5)))
    # emission
    if scenario.network.lengths_km is None:
        raise ScenarioError(
            "the emission cost needs per-edge lengths", field="lengths_km"
        )
    knobs = {
        key: params[key]
        for key in ("alpha", "beta", "capacity", "free_flow_speed", "travel_time_h")
        if key in params
    }
    try:
        if "a" in params or "b" in params or "prices" in params:
            emission = EmissionParams(
                a=params["a"], b=params["b"], prices=params["prices"], **knobs
            )
        else:
            multipliers = params.get("multipliers")
            if multipliers is None:
                multipliers = [
                    p.cost_params.get("emission_multiplier", 1.0)
                    for p in scenario.populations
                ]
            emission = EmissionParams.reference_fleet(multipliers=multipliers, **knobs)
    except (KeyError, ValueError) as exc:
        raise ScenarioError(str(exc), field="cost.params") from exc
    if emission.n_populations != n_pops:
        raise ScenarioError(
            f"emission tables cover {emission.n_populations} populations, "
            f"scenario has {n_pops}",
            field="cost.params",
        )
    return EmissionCost(emission)


def _need(data: Mapping, key: str, kind, field_name: str, source: str | None):
    if key not in data:
        raise ScenarioError(f"missing required field", field=field_name, source=source)
    value = data[key]
    if kind is not None and not isinstance(value, kind):
        raise ScenarioError(
            f"expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}",
            field=field_name,
            source=source,
        )
    return value


def _as_edge(raw: Any, field_name: str, source: str | None) -> tuple:
    if not isinstance(raw, (list, tuple)) or len(raw) != 2:
        raise ScenarioError(
            f"an edge is a [tail, head] pair, got {raw!r}", field=field_name, source=source
        )
    return tuple(raw)


def parse_scenario(data: Mapping | str, source: str | None = None) -> Scenario:
    """Build a Scenario from a parsed JSON mapping or a JSON string."""
    if isinstance(data, str):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise ScenarioError(exc.msg, line=exc.lineno, source=source) from exc
    if not isinstance(data, Mapping):
        raise ScenarioError("the document root must be an object", source=source)

    name = data.get("name", "scenario")
    vertices = _need(data, "vertices", list, "vertices", source)
    raw_edges = _need(data, "edges", list, "edges", source)
    edges = []
    lengths = list(data["lengths_km"]) if "lengths_km" in data else None
    for k, raw in enumerate(raw_edges):
        if isinstance(raw, (list, tuple)) and len(raw) == 3:
            edges.append(tuple(raw[:2]))
            if lengths is None:
                lengths = [None] * len(raw_edges)
            lengths[k] = raw[2]
        else:
            edges.append(_as_edge(raw, f"edges[{k}]", source))
    if lengths is not None:
        for k, s in enumerate(lengths):
            if s is None:
                raise ScenarioError(
                    "lengths are given for some edges but missing here",
                    field=f"edges[{k}]",
                    source=source,
                )
    exits = _need(data, "exits", list, "exits", source)
    by_string = {str(v): v for v in vertices}

    def resolve_vertex(raw: Any, field_name: str):
        if raw in by_string.values():
            return raw
        v = by_string.get(str(raw))
        if v is None:
            raise ScenarioError(
                f"unknown vertex {raw!r}", field=field_name, source=source
            )
        return v

    try:
        network = NetworkSpec(
            vertices=tuple(vertices),
            edges=tuple(edges),
            exits=frozenset(resolve_vertex(x, "exits") for x in exits),
            lengths_km=tuple(lengths) if lengths is not None else None,
        )
    except NetworkError as exc:
        raise ScenarioError(str(exc), field="network", source=source) from exc

    raw_pops = _need(data, "populations", list, "populations", source)
    if not raw_pops:
        raise ScenarioError("at least one population is required",
                            field="populations", source=source)
    populations = []
    for i, raw in enumerate(raw_pops):
        where = f"populations[{i}]"
        if not isinstance(raw, Mapping):
            raise ScenarioError("each population is an object", field=where, source=source)
        pop_name = _need(raw, "name", str, f"{where}.name", source)
        raw_entr = _need(raw, "entrances", Mapping, f"{where}.entrances", source)
        entrances = {}
        for key, rate in raw_entr.items():
            v = resolve_vertex(key, f"{where}.entrances.{key}")
            if v in network.exits:
                raise ScenarioError(
                    f"entrance {key!r} is an exit vertex",
                    field=f"{where}.entrances.{key}",
                    source=source,
                )
            if not isinstance(rate, (int, float)) or rate <= 0:
                raise ScenarioError(
                    f"rate must be a positive number, got {rate!r}",
                    field=f"{where}.entrances.{key}",
                    source=source,
                )
            entrances[v] = float(rate)
        allowed = None
        if raw.get("allowed_edges") is not None:
            allowed = []
            edge_set = set(network.edges)
            for k, pair in enumerate(raw["allowed_edges"]):
                edge = _as_edge(pair, f"{where}.allowed_edges[{k}]", source)
                edge = (resolve_vertex(edge[0], f"{where}.allowed_edges[{k}]"),
                        resolve_vertex(edge[1], f"{where}.allowed_edges[{k}]"))
                if edge not in edge_set:
                    raise ScenarioError(
                        f"edge {edge!r} is not in the network",
                        field=f"{where}.allowed_edges[{k}]",
                        source=source,
                    )
                allowed.append(edge)
            allowed = tuple(allowed)
        try:
            populations.append(
                PopulationSpec(
                    name=pop_name,
                    entrances=entrances,
                    allowed_edges=allowed,
                    cost_params=dict(raw.get("cost_params", {})),
                )
            )
        except NetworkError as exc:
            raise ScenarioError(str(exc), field=where, source=source) from exc

    raw_cost = _need(data, "cost", Mapping, "cost", source)
    cost_type = _need(raw_cost, "type", str, "cost.type", source)
    if cost_type not in COST_TYPES:
        raise ScenarioError(
            f"unknown cost type {cost_type!r}; expected one of {COST_TYPES}",
            field="cost.type",
            source=source,
        )
    cost_params = dict(raw_cost.get("params", {}))

    solver = SolverConfig()
    if "solver" in data:
        raw_solver = data["solver"]
        if not isinstance(raw_solver, Mapping):
            raise ScenarioError("solver must be an object", field="solver", source=source)
        known = {f.name for f in dataclasses.fields(SolverConfig)}
        unknown = set(raw_solver) - known
        if unknown:
            raise ScenarioError(
                f"unknown solver options {sorted(unknown)}", field="solver", source=source
            )
        try:
            solver = SolverConfig(**raw_solver)
        except ValueError as exc:
            raise ScenarioError(str(exc), field="solver", source=source) from exc

    scenario = Scenario(
        name=str(name),
        network=network,
        populations=tuple(populations),
        cost_type=cost_type,
        cost_params=cost_params,
        solver=solver,
        notes=str(data.get("notes", "")),
    )
    # surface cost wiring problems (missing lengths, wrong table sizes) now
    scenario.build_cost()
    return scenario


def load_scenario(path: str | Path) -> Scenario:
    """Parse a scenario JSON file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(str(exc), source=str(path)) from exc
    return parse_scenario(text, source=str(path))


def scenario_to_dict(scenario: Scenario) -> dict:
    """Serialize a scenario into plain JSON-ready data."""
    data: dict[str, Any] = {
        "name": scenario.name,
        "vertices": list(scenario.network.vertices),
        "edges": [list(e) for e in scenario.network.edges],
        "exits": sorted(scenario.network.exits, key=str),
        "populations": [],
        "cost": {"type": scenario.cost_type, "params": scenario.cost_params},
    }
    if scenario.network.lengths_km is not None:
        data["lengths_km"] = list(scenario.network.lengths_km)
    for pop in scenario.populations:
        entry: dict[str, Any] = {
            "name": pop.name,
            "entrances": {str(v): rate for v, rate in pop.entrances.items()},
        }
        if pop.allowed_edges is not None:
            entry["allowed_edges"] = [list(e) for e in pop.allowed_edges]
        if pop.cost_params:
            entry["cost_params"] = dict(pop.cost_params)
        data["populations"].append(entry)
    solver = dataclasses.asdict(scenario.solver)
    if solver != dataclasses.asdict(SolverConfig()):
        data["solver"] = solver
    if scenario.notes:
        data["notes"] = scenario.notes
    return data


def dump_scenario(scenario: Scenario, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scenario_to_dict(scenario), indent=2) + "\n")


# ---------------------------------------------------------------------------
# presets

_BENCH_VERTICES = tuple(range(1, 11))
_BENCH_EDGES = (
    (1, 2), (2, 3), (9, 3), (2, 4), (3, 4), (3, 5), (4, 5), (4, 6),
    (5, 6), (3, 7), (4, 7), (5, 7), (6, 7), (7, 8), (7, 10),
)
_BENCH_EXITS = frozenset({8, 10})

# The third preset adds a direct truck road into exit 10; lengths there are
# placeholders (1 km per edge) and meant to be replaced with surveyed data.
_EMISSION_EDGES = (
    (1, 2), (2, 3), (9, 3), (2, 4), (3, 4), (3, 5), (4, 5), (4, 6),
    (5, 6), (3, 7), (4, 7), (5, 7), (6, 7), (6, 10), (7, 8), (7, 10),
)


def _scenario1() -> Scenario:
    network = NetworkSpec(
        vertices=_BENCH_VERTICES, edges=_BENCH_EDGES, exits=_BENCH_EXITS
    )
    return Scenario(
        name="scenario1",
        network=network,
        populations=(
            PopulationSpec(name="west", entrances={1: 100.0}),
            PopulationSpec(name="north", entrances={9: 100.0}),
        ),
        cost_type="linear_sum",
        notes="Two symmetric populations, cost equal to the total edge flow.",
    )


def _scenario2() -> Scenario:
    network = NetworkSpec(
        vertices=_BENCH_VERTICES, edges=_BENCH_EDGES, exits=_BENCH_EXITS
    )
    return Scenario(
        name="scenario2",
        network=network,
        populations=(
            PopulationSpec(name="cars", entrances={1: 100.0}),
            PopulationSpec(name="trucks", entrances={9: 50.0}),
        ),
        cost_type="weighted",
        cost_params={"weights": [1.0, 2.0], "mix": [0.5, 0.5]},
        # The relaxation here has a slow tail out to t ~ 800; step 0.02 is
        # still well inside the stable region and halves the wall clock.
        solver=SolverConfig(step=2e-2),
        notes="Cars and heavier trucks; cost mixes the weighted load with "
              "the population's own flow.",
    )


def _scenario3() -> Scenario:
    network = NetworkSpec(
        vertices=_BENCH_VERTICES,
        edges=_EMISSION_EDGES,
        exits=_BENCH_EXITS,
        lengths_km=tuple(1.0 for _ in _EMISSION_EDGES),
    )
    car_edges = tuple(e for e in _EMISSION_EDGES if e != (6, 10))
    truck_edges = tuple(e for e in _EMISSION_EDGES if e not in {(4, 5), (5, 6)})
    return Scenario(
        name="scenario3",
        network=network,
        populations=(
            PopulationSpec(name="cars", entrances={1: 100.0}, allowed_edges=car_edges),
            PopulationSpec(name="trucks", entrances={9: 50.0}, allowed_edges=truck_edges),
        ),
        cost_type="emission",
        cost_params={"multipliers": [1.0, 3.0]},
        notes="PLACEHOLDER LENGTHS: every edge is 1 km. Replace lengths_km "
              "with surveyed distances before reading the money totals as "
              "meaningful. Trucks emit three times as much and keep to "
              "truck-legal roads; (6,10) is truck-only, (4,5) and (5,6) are "
              "car-only.",
    )


_PRESETS = {
    "scenario1": _scenario1,
    "scenario2": _scenario2,
    "scenario3": _scenario3,
}

PRESET_NAMES = tuple(sorted(_PRESETS))


def preset(name: str) -> Scenario:
    """Return a fresh copy of a built-in scenario."""
    try:
        factory = _PRESETS[name]
    except KeyError:
        raise ScenarioError(
            f"unknown preset {name!r}; available: {', '.join(PRESET_NAMES)}"
        ) from None
    return factory()
