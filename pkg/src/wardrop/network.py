"""Directed flow networks, Kirchhoff conservation systems, and per-population
subgraph reduction.

A network is a directed graph with a designated set of exit vertices. Each
population enters at one or more entrance vertices at a fixed rate and may
drain at any exit. Writing a population's flow as a nonnegative per-edge
vector ``x``, conservation at every non-exit vertex reads ``K x = B`` for a
signed vertex-edge incidence matrix ``K`` (rows follow the vertex input
order, columns the edge input order). The admissible set of a population is
the polytope ``{x >= 0, K x = B}`` over the subgraph it can actually use.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "NetworkError",
    "NetworkSpec",
    "KirchhoffSystem",
    "PopulationSpec",
    "ReducedPopulation",
    "PopulationSystem",
    "build_kirchhoff",
    "reduce_population",
    "interior_point",
]

Vertex = Hashable
EdgePair = tuple[Vertex, Vertex]

# Conservation residual allowed for constructed feasible points.
FEASIBILITY_TOL = 1e-12


class NetworkError(ValueError):
    """Structurally invalid network, population, or reduction request."""


@dataclass(frozen=True)
class NetworkSpec:
    """Immutable description of a directed network.

    Attributes:
        vertices: All vertices, in input order. Order fixes matrix row
            layouts everywhere downstream.
        edges: Directed edges as (tail, head) pairs, in input order. Order
            fixes matrix column layouts.
        exits: Vertices where flow drains. Exits carry no conservation row.
        lengths_km: Optional per-edge lengths, aligned with ``edges``.
            Required by distance-based cost models.
    """

    vertices: tuple[Vertex, ...]
    edges: tuple[EdgePair, ...]
    exits: frozenset
    lengths_km: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "vertices", tuple(self.vertices))
        object.__setattr__(self, "edges", tuple(tuple(e) for e in self.edges))
        object.__setattr__(self, "exits", frozenset(self.exits))
        if self.lengths_km is not None:
            object.__setattr__(
                self, "lengths_km", tuple(float(s) for s in self.lengths_km)
            )
        self._validate()

    def _validate(self) -> None:
        if not self.vertices:
            raise NetworkError("network has no vertices")
        if len(set(self.vertices)) != len(self.vertices):
            raise NetworkError("vertex list contains duplicates")
        if not self.edges:
            raise NetworkError("network has no edges")
        known = set(self.vertices)
        seen: set[EdgePair] = set()
        for k, edge in enumerate(self.edges):
            if len(edge) != 2:
                raise NetworkError(f"edge #{k} is not a (tail, head) pair: {edge!r}")
            tail, head = edge
            if tail not in known or head not in known:
                raise NetworkError(f"edge #{k} {edge!r} references an unknown vertex")
            if tail == head:
                raise NetworkError(f"edge #{k} {edge!r} is a self-loop")
            if edge in seen:
                raise NetworkError(f"duplicate edge {edge!r}")
            seen.add(edge)
        if not self.exits:
            raise NetworkError("exit set is empty")
        unknown_exits = self.exits - known
        if unknown_exits:
            raise NetworkError(f"exits reference unknown vertices: {sorted(map(str, unknown_exits))}")
        if self.lengths_km is not None:
            if len(self.lengths_km) != len(self.edges):
                raise NetworkError(
                    f"{len(self.lengths_km)} lengths for {len(self.edges)} edges"
                )
            for k, s in enumerate(self.lengths_km):
                if not np.isfinite(s) or s <= 0.0:
                    raise NetworkError(f"edge #{k} has non-positive length {s!r}")

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def edge_index(self) -> dict[EdgePair, int]:
        """Map (tail, head) pairs back to their column index."""
        return {edge: k for k, edge in enumerate(self.edges)}


@dataclass(frozen=True)
class KirchhoffSystem:
    """A conservation system ``matrix @ x = inflow`` over non-exit vertices.

    ``matrix`` holds +1 where the row vertex is an edge's tail, -1 where it
    is the head, 0 elsewhere; it always has full row rank.
    """

    matrix: np.ndarray
    row_vertices: tuple[Vertex, ...]
    inflow: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "matrix", np.asarray(self.matrix, dtype=float))
        object.__setattr__(self, "inflow", np.asarray(self.inflow, dtype=float))
        if self.matrix.shape[0] != len(self.row_vertices):
            raise NetworkError("row count does not match row vertex list")
        if self.inflow.shape != (self.matrix.shape[0],):
            raise NetworkError("inflow vector length does not match row count")

    @property
    def n_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_edges(self) -> int:
        return self.matrix.shape[1]

    def residual(self, x: np.ndarray) -> np.ndarray:
        """Conservation residual ``matrix @ x - inflow``."""
        return self.matrix @ np.asarray(x, dtype=float) - self.inflow

    def drift(self, x: np.ndarray) -> float:
        """Infinity norm of the conservation residual."""
        return float(np.abs(self.residual(x)).max(initial=0.0))


def _incidence(row_vertices: Sequence[Vertex], edges: Sequence[EdgePair]) -> np.ndarray:
    K = np.zeros((len(row_vertices), len(edges)))
    row_of = {v: i for i, v in enumerate(row_vertices)}
    for k, (tail, head) in enumerate(edges):
        i = row_of.get(tail)
        if i is not None:
            K[i, k] = 1.0
        j = row_of.get(head)
        if j is not None:
            K[j, k] = -1.0
    return K


def build_kirchhoff(
    network: NetworkSpec, inflows: Mapping[Vertex, float] | None = None
) -> KirchhoffSystem:
    """Assemble the conservation system of a network.

    Rows are the non-exit vertices in input order, columns the edges in
    input order. ``inflows`` maps entrance vertices to nonnegative rates;
    missing vertices default to zero net inflow.

    Raises:
        NetworkError: on inflow at an exit or unknown vertex, negative
            rates, or a rank-deficient matrix (e.g. an isolated vertex).
    """
    inflows = dict(inflows or {})
    rows = tuple(v for v in network.vertices if v not in network.exits)
    known = set(network.vertices)
    for v, rate in inflows.items():
        if v not in known:
            raise NetworkError(f"inflow at unknown vertex {v!r}")
        if v in network.exits:
            raise NetworkError(f"inflow at exit vertex {v!r}")
        if not np.isfinite(rate) or rate < 0.0:
            raise NetworkError(f"inflow rate at vertex {v!r} must be >= 0, got {rate!r}")
    K = _incidence(rows, network.edges)
    if np.linalg.matrix_rank(K) < len(rows):
        raise NetworkError(
            "conservation matrix is rank deficient; check for vertices with "
            "no usable edges or disconnected components"
        )
    B = np.array([inflows.get(v, 0.0) for v in rows])
    return KirchhoffSystem(matrix=K, row_vertices=rows, inflow=B)


@dataclass(frozen=True)
class PopulationSpec:
    """One population: who enters where, and which edges it may use.

    ``entrances`` maps entrance vertices to strictly positive inflow rates.
    ``allowed_edges`` restricts the usable subgraph (``None`` means every
    edge). ``cost_params`` carries per-population knobs for cost models,
    e.g. an emission multiplier.
    """

    name: str
    entrances: Mapping[Vertex, float]
    allowed_edges: tuple[EdgePair, ...] | None = None
    cost_params: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "entrances", dict(self.entrances))
        if self.allowed_edges is not None:
            object.__setattr__(
                self, "allowed_edges", tuple(tuple(e) for e in self.allowed_edges)
            )
        object.__setattr__(self, "cost_params", dict(self.cost_params))
        if not self.name:
            raise NetworkError("population name is empty")
        if not self.entrances:
            raise NetworkError(f"population {self.name!r} has no entrances")
        for v, rate in self.entrances.items():
            if not np.isfinite(rate) or rate <= 0.0:
                raise NetworkError(
                    f"population {self.name!r}: entrance {v!r} rate must be > 0, got {rate!r}"
                )


@dataclass(frozen=True)
class ReducedPopulation:
    """A population together with its pruned subgraph and small conservation
    system.

    ``edge_map[j]`` gives the original column index of reduced edge ``j``,
    so reduced flow vectors scatter back into full per-edge vectors. Kept
    edges are exactly those lying on at least one entrance-to-exit path of
    the allowed subgraph, in original column order.
    """

    spec: PopulationSpec
    edges: tuple[EdgePair, ...]
    edge_map: tuple[int, ...]
    kirchhoff: KirchhoffSystem
    exit_vertices: tuple[Vertex, ...]
    n_full: int

    @property
    def n_reduced(self) -> int:
        return len(self.edge_map)

    @property
    def name(self) -> str:
        return self.spec.name

    def expand(self, theta: np.ndarray) -> np.ndarray:
        """Scatter a reduced flow vector into full edge space."""
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_reduced,):
            raise NetworkError(
                f"population {self.name!r}: expected {self.n_reduced} flows, got {theta.shape}"
            )
        full = np.zeros(self.n_full)
        full[list(self.edge_map)] = theta
        return full


def _reachable(seeds: Iterable[Vertex], edges: Sequence[EdgePair], reverse: bool = False) -> set:
    seen = set(seeds)
    grew = True
    while grew:
        grew = False
        for tail, head in edges:
            src, dst = (head, tail) if reverse else (tail, head)
            if src in seen and dst not in seen:
                seen.add(dst)
                grew = True
    return seen


def reduce_population(network: NetworkSpec, spec: PopulationSpec) -> ReducedPopulation:
    """Prune a population's subgraph down to edges it can actually use.

    An edge survives when it is allowed and lies on some directed path from
    an entrance to an exit. Vertices left without incident edges drop out of
    the conservation rows, which is what shrinks the reduced system. The
    operation is idempotent: reducing a reduced subgraph changes nothing.

    Raises:
        NetworkError: if an entrance coincides with an exit, cannot reach
            any exit, or the reduced system loses full row rank.
    """
    index_of = network.edge_index()
    if spec.allowed_edges is None:
        allowed = list(range(network.n_edges))
    else:
        allowed = []
        for e in spec.allowed_edges:
            k = index_of.get(tuple(e))
            if k is None:
                raise NetworkError(
                    f"population {spec.name!r}: allowed edge {tuple(e)!r} is not in the network"
                )
            allowed.append(k)
        allowed = sorted(set(allowed))
    known = set(network.vertices)
    for v in spec.entrances:
        if v not in known:
            raise NetworkError(f"population {spec.name!r}: unknown entrance {v!r}")
        if v in network.exits:
            raise NetworkError(
                f"population {spec.name!r}: entrance {v!r} is an exit vertex"
            )

    allowed_edges = [network.edges[k] for k in allowed]
    reach = _reachable(spec.entrances, allowed_edges)
    coreach = _reachable(network.exits, allowed_edges, reverse=True)
    for v in spec.entrances:
        if v not in coreach:
            raise NetworkError(
                f"population {spec.name!r}: entrance {v!r} has no path to an exit"
            )
    kept = [
        k for k in allowed
        if network.edges[k][0] in reach and network.edges[k][1] in coreach
    ]
    if not kept:
        raise NetworkError(f"population {spec.name!r}: no usable edges remain")

    kept_edges = tuple(network.edges[k] for k in kept)
    incident = {v for e in kept_edges for v in e}
    rows = tuple(v for v in network.vertices if v in incident and v not in network.exits)
    K = _incidence(rows, kept_edges)
    if np.linalg.matrix_rank(K) < len(rows):
        raise NetworkError(
            f"population {spec.name!r}: reduced conservation matrix is rank deficient"
        )
    B = np.zeros(len(rows))
    row_of = {v: i for i, v in enumerate(rows)}
    for v, rate in spec.entrances.items():
        B[row_of[v]] += rate
    exit_vertices = tuple(v for v in network.vertices if v in network.exits and v in incident)
    return ReducedPopulation(
        spec=spec,
        edges=kept_edges,
        edge_map=tuple(kept),
        kirchhoff=KirchhoffSystem(matrix=K, row_vertices=rows, inflow=B),
        exit_vertices=exit_vertices,
        n_full=network.n_edges,
    )


def _bfs_tree(
    edges: Sequence[EdgePair], seeds: Iterable[Vertex], reverse: bool = False
) -> dict[Vertex, int | None]:
    """Hop-count BFS tree over an edge list; ties go to the lowest edge index.

    Maps each reached vertex to the edge index used to reach it (seeds map
    to ``None``). With ``reverse=True`` the walk runs head-to-tail, which
    builds exit-bound trees.
    """
    tree: dict[Vertex, int | None] = {v: None for v in seeds}
    frontier = set(tree)
    while frontier:
        found: dict[Vertex, int] = {}
        for k, (tail, head) in enumerate(edges):
            src, dst = (head, tail) if reverse else (tail, head)
            if src in frontier and dst not in tree and dst not in found:
                found[dst] = k
        tree.update(found)
        frontier = set(found)
    return tree


def interior_point(reduced: ReducedPopulation, epsilon: float | None = None) -> np.ndarray:
    """Construct a strictly positive feasible flow for a reduced population.

    Every reduced edge receives ``epsilon`` along one entrance-edge-exit
    path found by breadth-first search (ties broken by lowest edge index);
    the leftover demand of each entrance then follows that entrance's
    hop-count shortest path to an exit. The result satisfies the reduced
    conservation system to within 1e-12 and has every component >= epsilon.

    ``epsilon`` defaults to 1e-2 times the smallest entrance rate divided by
    the full network's edge count, which always leaves the residuals
    nonnegative.

    Raises:
        NetworkError: if ``epsilon`` is so large that some entrance would
            inject more covering flow than its rate.
    """
    spec = reduced.spec
    rates = dict(spec.entrances)
    if epsilon is None:
        epsilon = 1e-2 * min(rates.values()) / reduced.n_full
    if not np.isfinite(epsilon) or epsilon <= 0.0:
        raise NetworkError(f"epsilon must be > 0, got {epsilon!r}")

    edges = reduced.edges
    in_tree = _bfs_tree(edges, rates)
    out_tree = _bfs_tree(edges, reduced.exit_vertices, reverse=True)

    def path_from_entrance(v: Vertex) -> tuple[list[int], Vertex]:
        path: list[int] = []
        while in_tree[v] is not None:
            k = in_tree[v]
            path.append(k)
            v = edges[k][0]
        path.reverse()
        return path, v

    def path_to_exit(v: Vertex) -> list[int]:
        path: list[int] = []
        while out_tree[v] is not None:
            k = out_tree[v]
            path.append(k)
            v = edges[k][1]
        return path

    x = np.zeros(len(edges))
    injected = dict.fromkeys(rates, 0.0)
    for k, (tail, head) in enumerate(edges):
        prefix, entrance = path_from_entrance(tail)
        suffix = path_to_exit(head)
        for j in prefix + [k] + suffix:
            x[j] += epsilon
        injected[entrance] += epsilon
    for v, rate in rates.items():
        residual = rate - injected[v]
        if residual < 0.0:
            raise NetworkError(
                f"epsilon={epsilon!r} too large: entrance {v!r} would inject "
                f"{injected[v]!r} > rate {rate!r}; keep epsilon below "
                "(min rate) / (number of covering paths)"
            )
        for j in path_to_exit(v):
            x[j] += residual
    return x


@dataclass(frozen=True)
class PopulationSystem:
    """A network together with every population's reduced subgraph."""

    network: NetworkSpec
    populations: tuple[ReducedPopulation, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "populations", tuple(self.populations))
        if not self.populations:
            raise NetworkError("system has no populations")
        names = [p.name for p in self.populations]
        if len(set(names)) != len(names):
            raise NetworkError("population names are not unique")

    @classmethod
    def build(
        cls, network: NetworkSpec, specs: Iterable[PopulationSpec]
    ) -> "PopulationSystem":
        return cls(
            network=network,
            populations=tuple(reduce_population(network, s) for s in specs),
        )

    @property
    def size(self) -> int:
        return len(self.populations)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.populations)

    def interior_start(self, epsilon: float | None = None) -> list[np.ndarray]:
        """Default strictly positive feasible flows, one per population."""
        return [interior_point(p, epsilon) for p in self.populations]
