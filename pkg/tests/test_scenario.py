import json

import numpy as np
import pytest

from wardrop import (
    EmissionCost,
    LinearSumCost,
    PRESET_NAMES,
    Scenario,
    ScenarioError,
    SolverConfig,
    WeightedCongestionCost,
    dump_scenario,
    load_scenario,
    parse_scenario,
    preset,
    scenario_to_dict,
)


def minimal() -> dict:
    return {
        "vertices": [1, 2],
        "edges": [[1, 2]],
        "exits": [2],
        "populations": [{"name": "p", "entrances": {"1": 5.0}}],
        "cost": {"type": "linear_sum"},
    }


def test_parse_minimal_dict():
    scenario = parse_scenario(minimal())
    assert scenario.network.vertices == (1, 2)
    assert scenario.network.edges == ((1, 2),)
    assert scenario.network.exits == frozenset({2})
    assert scenario.populations[0].entrances == {1: 5.0}
    assert scenario.cost_type == "linear_sum"
    assert scenario.solver == SolverConfig()


def test_parse_minimal_string():
    scenario = parse_scenario(json.dumps(minimal()))
    assert scenario.populations[0].name == "p"


def test_load_scenario_file(tmp_path):
    path = tmp_path / "scene.json"
    path.write_text(json.dumps(minimal()))
    scenario = load_scenario(path)
    assert scenario.network.edges == ((1, 2),)


def test_load_missing_file_errors(tmp_path):
    with pytest.raises(ScenarioError):
        load_scenario(tmp_path / "absent.json")


def test_string_entrance_keys_resolve_to_vertices():
    data = minimal()
    data["vertices"] = ["a", "b"]
    data["edges"] = [["a", "b"]]
    data["exits"] = ["b"]
    data["populations"][0]["entrances"] = {"a": 2.0}
    scenario = parse_scenario(data)
    assert scenario.populations[0].entrances == {"a": 2.0}


def test_syntax_error_cites_line():
    text = '{\n  "vertices": [1, 2,,]\n}'
    with pytest.raises(ScenarioError) as excinfo:
        parse_scenario(text, source="broken.json")
    assert excinfo.value.line == 2
    assert "broken.json:2" in str(excinfo.value)


def test_root_must_be_object():
    with pytest.raises(ScenarioError, match="root must be an object"):
        parse_scenario("[1, 2, 3]")


def test_missing_required_field_is_named():
    data = minimal()
    del data["exits"]
    with pytest.raises(ScenarioError) as excinfo:
        parse_scenario(data)
    assert excinfo.value.field == "exits"


def test_malformed_edge_is_located():
    data = minimal()
    data["edges"] = [[1, 2], [1]]
    with pytest.raises(ScenarioError) as excinfo:
        parse_scenario(data)
    assert excinfo.value.field == "edges[1]"


def test_unknown_exit_vertex():
    data = minimal()
    data["exits"] = [7]
    with pytest.raises(ScenarioError, match="unknown vertex 7"):
        parse_scenario(data)


def test_empty_populations_rejected():
    data = minimal()
    data["populations"] = []
    with pytest.raises(ScenarioError) as excinfo:
        parse_scenario(data)
    assert excinfo.value.field == "populations"


def test_entrance_at_exit_names_the_key():
    data = minimal()
    data["populations"][0]["entrances"] = {"2": 5.0}
    with pytest.raises(ScenarioError) as excinfo:
        parse_scenario(data)
    assert excinfo.value.field == "populations[0].entrances.2"
    assert "exit" in str(excinfo.value)


def test_nonpositive_rate_is_located():
    data = minimal()
    data["populations"][0]["entrances"] = {"1": 0}
    with pytest.raises(ScenarioError) as excinfo:
        parse_scenario(data)
    assert excinfo.value.field == "populations[0].entrances.1"
    assert "positive" in str(excinfo.value)


def test_allowed_edge_outside_network_is_located():
    data = minimal()
    data["populations"][0]["allowed_edges"] = [[1, 2], [2, 1]]
    with pytest.raises(ScenarioError) as excinfo:
        parse_scenario(data)
    assert excinfo.value.field == "populations[0].allowed_edges[1]"


def test_unknown_cost_type():
    data = minimal()
    data["cost"] = {"type": "affine"}
    with pytest.raises(ScenarioError) as excinfo:
        parse_scenario(data)
    assert excinfo.value.field == "cost.type"


def test_weight_count_must_match_populations():
    data = minimal()
    data["cost"] = {"type": "weighted", "params": {"weights": [1.0, 2.0]}}
    with pytest.raises(ScenarioError) as excinfo:
        parse_scenario(data)
    assert excinfo.value.field == "cost.params.weights"


def test_per_population_weight_fallback():
    data = minimal()
    data["cost"] = {"type": "weighted"}
    data["populations"][0]["cost_params"] = {"weight": 3.0}
    model = parse_scenario(data).build_cost()
    assert isinstance(model, WeightedCongestionCost)
    assert np.allclose(model.weights, [3.0])


def test_emission_cost_requires_lengths():
    data = minimal()
    data["cost"] = {"type": "emission", "params": {"multipliers": [1.0]}}
    with pytest.raises(ScenarioError) as excinfo:
        parse_scenario(data)
    assert excinfo.value.field == "lengths_km"


def test_unknown_solver_option_is_rejected():
    data = minimal()
    data["solver"] = {"steps": 0.5}
    with pytest.raises(ScenarioError, match="unknown solver option"):
        parse_scenario(data)


def test_invalid_solver_value_is_rejected():
    data = minimal()
    data["solver"] = {"step": -1.0}
    with pytest.raises(ScenarioError) as excinfo:
        parse_scenario(data)
    assert excinfo.value.field == "solver"


def test_inline_edge_lengths():
    data = minimal()
    data["vertices"] = [1, 2, 3]
    data["edges"] = [[1, 2, 2.5], [2, 3, 0.4]]
    data["exits"] = [3]
    data["cost"] = {"type": "emission", "params": {"multipliers": [1.0]}}
    scenario = parse_scenario(data)
    assert scenario.network.lengths_km == (2.5, 0.4)
    assert scenario.network.edges == ((1, 2), (2, 3))


def test_partial_inline_lengths_error():
    data = minimal()
    data["vertices"] = [1, 2, 3]
    data["edges"] = [[1, 2, 2.5], [2, 3]]
    data["exits"] = [3]
    with pytest.raises(ScenarioError) as excinfo:
        parse_scenario(data)
    assert excinfo.value.field == "edges[1]"
    assert "missing" in str(excinfo.value)


def test_direct_construction_validates_cost_type(diamond):
    with pytest.raises(ScenarioError, match="unknown cost type"):
        Scenario(
            name="x",
            network=diamond,
            populations=(),
            cost_type="mystery",
        )


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_presets_round_trip_through_json(name):
    scenario = preset(name)
    data = json.loads(json.dumps(scenario_to_dict(scenario)))
    back = parse_scenario(data)
    assert back.network == scenario.network
    assert back.populations == scenario.populations
    assert back.cost_type == scenario.cost_type
    assert back.cost_params == scenario.cost_params
    assert back.solver == scenario.solver


def test_solver_serialized_only_when_customized():
    assert "solver" not in scenario_to_dict(preset("scenario1"))
    assert scenario_to_dict(preset("scenario2"))["solver"]["step"] == 2e-2


def test_dump_and_load_file_round_trip(tmp_path):
    path = tmp_path / "scenario3.json"
    dump_scenario(preset("scenario3"), path)
    back = load_scenario(path)
    assert back.network == preset("scenario3").network
    assert back.cost_params == {"multipliers": [1.0, 3.0]}


def test_preset_catalog():
    assert PRESET_NAMES == ("scenario1", "scenario2", "scenario3")
    one = preset("scenario1")
    assert isinstance(one.build_cost(), LinearSumCost)
    assert one.network.n_edges == 15
    assert {p.name for p in one.populations} == {"west", "north"}

    two = preset("scenario2")
    model2 = two.build_cost()
    assert isinstance(model2, WeightedCongestionCost)
    assert np.allclose(model2.weights, [1.0, 2.0])
    assert two.populations[0].entrances == {1: 100.0}
    assert two.populations[1].entrances == {9: 50.0}
    assert two.solver.step == 2e-2

    three = preset("scenario3")
    assert three.network.n_edges == 16
    assert (6, 10) in three.network.edges
    assert three.network.lengths_km == tuple(1.0 for _ in range(16))
    model3 = three.build_cost()
    assert isinstance(model3, EmissionCost)
    assert np.allclose(model3.params.a[1], 3.0 * model3.params.a[0])
    cars, trucks = three.populations
    assert (6, 10) not in cars.allowed_edges
    assert (6, 10) in trucks.allowed_edges
    assert (4, 5) not in trucks.allowed_edges and (5, 6) not in trucks.allowed_edges


def test_unknown_preset():
    with pytest.raises(ScenarioError, match="unknown preset"):
        preset("scenario9")


def test_preset_returns_fresh_copies():
    a = preset("scenario1")
    b = preset("scenario1")
    assert a is not b
    a.cost_params["weights"] = [9.0]
    assert "weights" not in b.cost_params
