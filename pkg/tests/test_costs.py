import numpy as np
import pytest

from wardrop import (
    CostModel,
    EmissionCost,
    EmissionParams,
    FlowProfile,
    LinearSumCost,
    NetworkError,
    NetworkSpec,
    PopulationSpec,
    PopulationSystem,
    WeightedCongestionCost,
    edge_speed,
    emission_rate,
    monotonicity_probe,
    preset,
)


@pytest.fixture
def two_pop_single_edge(single_edge):
    return PopulationSystem.build(
        single_edge,
        [
            PopulationSpec(name="a", entrances={1: 30.0}),
            PopulationSpec(name="b", entrances={1: 70.0}),
        ],
    )


def test_profile_validation(two_pop_single_edge):
    with pytest.raises(NetworkError, match="negative"):
        FlowProfile(two_pop_single_edge, [np.array([-1.0]), np.array([1.0])])
    with pytest.raises(NetworkError, match="expected 1 flows"):
        FlowProfile(two_pop_single_edge, [np.array([1.0, 2.0]), np.array([1.0])])
    with pytest.raises(NetworkError, match="non-finite"):
        FlowProfile(two_pop_single_edge, [np.array([np.nan]), np.array([1.0])])
    with pytest.raises(NetworkError, match="expected 2 flow vectors"):
        FlowProfile(two_pop_single_edge, [np.array([1.0])])


def test_profile_matrix_zero_on_pruned_edges(bench_network):
    system = PopulationSystem.build(
        bench_network,
        [
            PopulationSpec(name="west", entrances={1: 100.0}),
            PopulationSpec(name="north", entrances={9: 100.0}),
        ],
    )
    profile = FlowProfile(system, system.interior_start())
    west, north = system.populations
    assert profile.matrix.shape == (15, 2)
    assert profile.matrix[2, 0] == 0.0  # (9,3) pruned for the western population
    assert profile.matrix[0, 1] == 0.0  # (1,2) pruned for the northern one
    assert np.allclose(profile.edge_totals, profile.matrix.sum(axis=1))


def test_linear_sum_is_the_total(two_pop_single_edge):
    profile = FlowProfile(two_pop_single_edge, [np.array([30.0]), np.array([70.0])])
    costs = LinearSumCost().evaluate(profile)
    assert np.array_equal(costs[0], [100.0])
    assert np.array_equal(costs[1], [100.0])


def test_linear_sum_zero_profile(two_pop_single_edge):
    profile = FlowProfile(two_pop_single_edge, [np.zeros(1), np.zeros(1)])
    costs = LinearSumCost().evaluate(profile)
    assert np.array_equal(costs[0], [0.0])


def test_linear_sum_gathers_per_population_subgraph(bench_network):
    system = PopulationSystem.build(
        bench_network,
        [
            PopulationSpec(name="west", entrances={1: 100.0}),
            PopulationSpec(name="north", entrances={9: 100.0}),
        ],
    )
    west, north = system.populations
    theta_w = np.zeros(west.n_reduced)
    theta_w[west.edges.index((2, 3))] = 38.0
    profile = FlowProfile(system, [theta_w, np.zeros(north.n_reduced)])
    costs = LinearSumCost().evaluate(profile)
    assert costs[0][west.edges.index((2, 3))] == 38.0
    # symmetric labels with equal flows see identical costs
    swapped = FlowProfile(system, [np.zeros(west.n_reduced), np.zeros(north.n_reduced)])
    same = LinearSumCost().evaluate(swapped)
    assert np.array_equal(same[0], np.zeros(west.n_reduced))
    assert np.array_equal(same[1], np.zeros(north.n_reduced))


def test_weighted_cost_mixes_load_and_own_flow(two_pop_single_edge):
    model = WeightedCongestionCost(weights=(1.0, 2.0), mix=(0.5, 0.5))
    profile = FlowProfile(two_pop_single_edge, [np.array([10.0]), np.array([5.0])])
    costs = model.evaluate(profile)
    assert costs[0][0] == pytest.approx(15.0)
    assert costs[1][0] == pytest.approx(12.5)

    zero = FlowProfile(two_pop_single_edge, [np.zeros(1), np.zeros(1)])
    assert all(np.array_equal(c, [0.0]) for c in model.evaluate(zero))


def test_weighted_cost_self_term_breaks_symmetry(two_pop_single_edge):
    model = WeightedCongestionCost(weights=(1.0, 1.0), mix=(0.5, 0.5))
    profile = FlowProfile(two_pop_single_edge, [np.array([4.0]), np.array([2.0])])
    costs = model.evaluate(profile)
    assert costs[0][0] == pytest.approx(0.5 * 6 + 0.5 * 4)
    assert costs[1][0] == pytest.approx(0.5 * 6 + 0.5 * 2)


def test_weighted_cost_validation():
    with pytest.raises(ValueError, match="nonnegative"):
        WeightedCongestionCost(weights=(1.0, -1.0))
    with pytest.raises(ValueError, match="two coefficients"):
        WeightedCongestionCost(weights=(1.0,), mix=(0.5,))
    with pytest.raises(ValueError, match="non-empty"):
        WeightedCongestionCost(weights=())


def test_weighted_cost_population_count_guard(two_pop_single_edge):
    model = WeightedCongestionCost(weights=(1.0,))
    profile = FlowProfile(two_pop_single_edge, [np.zeros(1), np.zeros(1)])
    with pytest.raises(ValueError, match="built for 1 populations"):
        model.evaluate(profile)


def test_edge_speed_free_flow_and_congestion():
    params = EmissionParams.reference_fleet()
    lengths = np.array([1.0, 1.0, 1.0])
    free = edge_speed(np.zeros(3), lengths, params)
    assert np.allclose(free, 50.0)
    at_capacity = edge_speed(np.array([50.0]), np.array([1.0]), params)
    assert at_capacity[0] == pytest.approx(50.0 / 6.0)
    half = edge_speed(np.array([25.0]), np.array([1.0]), params)
    assert half[0] == pytest.approx(30.769, abs=5e-4)


def test_edge_speed_strictly_decreasing():
    params = EmissionParams.reference_fleet()
    totals = np.linspace(0.0, 150.0, 40)
    speeds = edge_speed(totals, np.ones_like(totals), params)
    assert np.all(np.diff(speeds) < 0.0)
    with pytest.raises(ValueError, match="nonnegative"):
        edge_speed(np.array([-1.0]), np.array([1.0]), params)


def test_edge_speed_travel_time_override():
    params = EmissionParams.reference_fleet(travel_time_h=(0.1, 0.25))
    lengths = np.array([2.0, 5.0])
    free = edge_speed(np.zeros(2), lengths, params)
    assert np.allclose(free, [20.0, 20.0])


def test_emission_rates_at_free_flow():
    params = EmissionParams.reference_fleet()
    rates = emission_rate(np.array([50.0]), params.a[0][:, None], params.b[0][:, None])
    fc, hc, nox, co, co2 = rates[:, 0]
    assert fc == pytest.approx(66.6)
    assert nox == 0.0  # 2.0/50 - 0.0449 < 0, clamped
    assert hc == pytest.approx(10.8 / 50 - 7.11e-3)
    assert co == pytest.approx(80.8 / 50 + 1.16)
    assert co2 == pytest.approx(4780 / 50 + 111)


def test_truck_rates_triple_car_rates():
    params = EmissionParams.reference_fleet(multipliers=(1.0, 3.0))
    car = emission_rate(np.array([50.0]), params.a[0][:, None], params.b[0][:, None])
    truck = emission_rate(np.array([50.0]), params.a[1][:, None], params.b[1][:, None])
    assert truck[0, 0] == pytest.approx(3 * 66.6)
    assert np.allclose(truck, 3 * car)


def test_emission_rate_decreasing_in_speed_where_unclamped():
    params = EmissionParams.reference_fleet()
    speeds = np.linspace(5.0, 120.0, 30)
    fc = emission_rate(speeds, params.a[0, 0], params.b[0, 0])
    assert np.all(np.diff(fc) < 0.0)
    with pytest.raises(ValueError, match="positive"):
        emission_rate(np.array([0.0]), params.a[0, 0], params.b[0, 0])


def test_emission_cost_zero_flow_single_edge(single_edge):
    network = NetworkSpec(
        vertices=(1, 2), edges=((1, 2),), exits={2}, lengths_km=(1.0,)
    )
    system = PopulationSystem.build(
        network, [PopulationSpec(name="cars", entrances={1: 5.0})]
    )
    model = EmissionCost(EmissionParams.reference_fleet())
    costs = model.evaluate(FlowProfile(system, [np.zeros(1)]))
    # hand-priced free-flow emission bill per unit flow on a 1 km edge:
    # (66.6*1.0321 + 0.20889*12.91 + 0*14.54 + 2.776*0.37 + 206.6*0.02)/2000
    assert costs[0][0] == pytest.approx(0.03829687495, abs=1e-12)


def test_emission_cost_self_term_is_half_own_flow():
    network = NetworkSpec(
        vertices=(1, 2), edges=((1, 2),), exits={2}, lengths_km=(1.0,)
    )
    system = PopulationSystem.build(
        network,
        [
            PopulationSpec(name="a", entrances={1: 30.0}),
            PopulationSpec(name="b", entrances={1: 70.0}),
        ],
    )
    model = EmissionCost(EmissionParams.reference_fleet(multipliers=(1.0, 1.0)))
    base = model.evaluate(FlowProfile(system, [np.array([10.0]), np.array([20.0])]))
    moved = model.evaluate(FlowProfile(system, [np.array([16.0]), np.array([14.0])]))
    # totals unchanged, so only the linear self-term moves
    assert moved[0][0] - base[0][0] == pytest.approx(6.0 / 2.0, abs=1e-12)
    assert moved[1][0] - base[1][0] == pytest.approx(-6.0 / 2.0, abs=1e-12)


def test_emission_cost_requires_lengths(two_pop_single_edge):
    model = EmissionCost(EmissionParams.reference_fleet(multipliers=(1.0, 1.0)))
    profile = FlowProfile(two_pop_single_edge, [np.zeros(1), np.zeros(1)])
    with pytest.raises(NetworkError, match="lengths"):
        model.evaluate(profile)


def test_emission_params_validation():
    with pytest.raises(ValueError, match="positive"):
        EmissionParams(a=[[-1.0] * 5], b=[[0.0] * 5], prices=[1.0] * 5)
    with pytest.raises(ValueError, match="matching shapes"):
        EmissionParams(a=[[1.0] * 5], b=[[0.0] * 4], prices=[1.0] * 5)
    with pytest.raises(ValueError, match="one price per emission type"):
        EmissionParams(a=[[1.0] * 5], b=[[0.0] * 5], prices=[1.0] * 4)
    with pytest.raises(ValueError, match="nonnegative"):
        EmissionParams(a=[[1.0] * 5], b=[[0.0] * 5], prices=[-1.0] * 5)
    with pytest.raises(ValueError, match="alpha"):
        EmissionParams.reference_fleet(alpha=0.0)
    with pytest.raises(ValueError, match="multipliers"):
        EmissionParams.reference_fleet(multipliers=(0.0,))
    with pytest.raises(ValueError, match="travel times"):
        EmissionParams.reference_fleet(travel_time_h=(0.0,))


def test_models_are_continuous_on_feasible_points():
    for name in ("scenario1", "scenario2", "scenario3"):
        scenario = preset(name)
        system = scenario.build_system()
        model = scenario.build_cost()
        thetas = system.interior_start()
        base = model.evaluate(FlowProfile(system, thetas))
        delta = 1e-7
        bumped = [t.copy() for t in thetas]
        bumped[0] = bumped[0] + delta  # off the constraint set, still in domain
        after = model.evaluate(FlowProfile(system, bumped))
        worst = max(
            np.abs(a - b).max(initial=0.0) for a, b in zip(after, base)
        )
        assert worst <= 1e3 * delta


def test_monotonicity_probe_accepts_builtin_models():
    scenario = preset("scenario1")
    system = scenario.build_system()
    report = monotonicity_probe(LinearSumCost(), system, pairs=100, seed=1)
    assert report.monotone
    assert report.min_value >= -1e-10


class _AntiMonotone(CostModel):
    name = "anti"

    def evaluate(self, profile):
        return [-theta for theta in profile.thetas]


def test_monotonicity_probe_catches_anti_monotone(diamond_system):
    report = monotonicity_probe(_AntiMonotone(), diamond_system, pairs=50, seed=0)
    assert not report.monotone
    assert report.min_value < 0.0
    p1, p2 = report.witness
    value = sum(
        float((a - b) @ (x - y))
        for a, b, x, y in zip(
            _AntiMonotone().evaluate(p1),
            _AntiMonotone().evaluate(p2),
            p1.thetas,
            p2.thetas,
        )
    )
    assert value == pytest.approx(report.min_value)


def test_param_records_round_trip():
    weighted = WeightedCongestionCost(weights=(1.0, 2.0), mix=(0.5, 0.5))
    record = weighted.param_record()
    again = WeightedCongestionCost(**record)
    assert np.array_equal(again.weights, weighted.weights)
    assert again.mix == weighted.mix

    emission = EmissionCost(EmissionParams.reference_fleet(multipliers=(1.0, 3.0)))
    record = emission.param_record()
    rebuilt = EmissionParams(**record) if record["travel_time_h"] else EmissionParams(
        **{k: v for k, v in record.items() if k != "travel_time_h"}
    )
    assert np.allclose(rebuilt.a, emission.params.a)
    assert rebuilt.capacity == emission.params.capacity
