import math

import pytest
import yaml

from uuvsim.errors import ScenarioParseError, ScenarioValidationError
from uuvsim.scenario import (Scenario, echo, from_dict, load_scenario,
                             resolve_scenario, to_dict, validate)


def test_minimal_document_gets_all_defaults(tmp_path):
    path = tmp_path / "min.yaml"
    path.write_text("name: tiny\n")
    sc = load_scenario(path)
    doc = to_dict(sc)
    assert doc["name"] == "tiny"
    assert doc["vehicle"]["time_budget"] == 14_400.0
    assert doc["vehicle"]["max_speed"] == 2.82
    assert doc["map"]["k"] == 2
    assert doc["mission"]["dt"] == 1.0
    assert doc["de_global"]["restarts"] == 2
    for section in ("field", "map", "current", "obstacles", "network", "vehicle",
                    "de_global", "de_local", "weights", "spline", "mission", "montecarlo"):
        assert section in doc


def test_echo_round_trip_is_identity():
    sc = resolve_scenario("paper_baseline")
    again = from_dict(yaml.safe_load(echo(sc)))
    assert again == sc


def test_negative_budget_rejected():
    with pytest.raises(ScenarioValidationError, match="vehicle.time_budget"):
        from_dict({"vehicle": {"time_budget": -5.0}})


def test_unknown_keys_rejected():
    with pytest.raises(ScenarioValidationError, match="unknown key propulsion"):
        from_dict({"propulsion": {}})
    with pytest.raises(ScenarioValidationError, match="unknown key vehicle.warp"):
        from_dict({"vehicle": {"warp": 9}})


def test_cruise_above_max_rejected():
    with pytest.raises(ScenarioValidationError, match="cruise_speed"):
        from_dict({"vehicle": {"cruise_speed": 3.0, "max_speed": 2.82}})


def test_missing_raster_rejected(tmp_path):
    with pytest.raises(ScenarioValidationError, match="map.path"):
        from_dict({"map": {"source": "raster", "path": str(tmp_path / "nope.grid")}})


def test_malformed_yaml_reports_location(tmp_path):
    path = tmp_path / "broken.yaml"
    path.write_text("name: [unclosed\n")
    with pytest.raises(ScenarioParseError, match="line"):
        load_scenario(path)


def test_paper_baseline_values():
    sc = resolve_scenario("paper_baseline")
    assert (sc.field.x, sc.field.y, sc.field.z) == (10_000.0, 10_000.0, 1_000.0)
    assert sc.network.stations == 20
    assert sc.network.start == 1 and sc.network.goal == 20
    assert sc.vehicle.time_budget == 14_400.0
    assert sc.vehicle.max_speed == 2.82
    assert sc.vehicle.surge_max == 2.7
    assert sc.vehicle.sway_max == 0.5
    assert sc.vehicle.yaw_rate_max_deg == 17.0
    assert sc.current.count == [2, 5]


def test_unknown_bundled_name_raises():
    with pytest.raises(ScenarioParseError):
        resolve_scenario("does_not_exist")


def test_validate_spline_sampling_floor():
    with pytest.raises(ScenarioValidationError, match="spline.samples"):
        from_dict({"spline": {"control_points": 8, "samples": 50}})
