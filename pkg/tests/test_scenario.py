import copy
import json
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from exosim.muscle import TC_ACTIVATION, TC_DEACTIVATION
from exosim.scenario import (BUNDLED, ScenarioError, bundled_scenario, dump_scenario, load_schema,
                             parse_scenario, parse_scenario_dict, serialize)

ROOT = Path(__file__).resolve().parents[1]


def raw(name="pendulum_reach"):
    with open(bundled_scenario(name)) as fh:
        return json.load(fh)


def errors_of(d):
    with pytest.raises(ScenarioError) as info:
        parse_scenario_dict(d)
    return info.value.errors


def test_pendulum_scenario_parses():
    s = parse_scenario(bundled_scenario("pendulum_reach"))
    assert (s.n_bodies, len(s.muscles), s.n_stages) == (1, 2, 1)


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_scenarios_round_trip(name, tmp_path):
    s = parse_scenario(bundled_scenario(name))
    assert parse_scenario_dict(serialize(s)) == s
    dump_scenario(s, tmp_path / "copy.json")
    assert parse_scenario(tmp_path / "copy.json") == s


def test_muscle_dof_out_of_range():
    d = raw()
    d["muscles"][0]["dof"] = 3
    errs = errors_of(d)
    assert any(e.startswith("muscles[0].dof") for e in errs)


def test_omitted_time_constants_use_defaults():
    s = parse_scenario(bundled_scenario("pendulum_reach"))
    for m in s.build_muscles():
        assert m.tc_a == TC_ACTIVATION == 0.011
        assert m.tc_d == TC_DEACTIVATION == 0.068


def test_nonpositive_time_constant():
    d = raw()
    d["muscles"][1]["tc_a"] = 0.0
    assert any(e.startswith("muscles[1].tc_a") for e in errors_of(d))


def test_every_problem_is_reported():
    d = raw()
    d["muscles"][0]["dof"] = 3
    d["muscles"][1]["tc_d"] = -1.0
    d["stages"][0]["duration"] = [2.0, 1.0]
    errs = errors_of(d)
    assert len(errs) >= 3
    assert any("muscles[0].dof" in e for e in errs)
    assert any("muscles[1].tc_d" in e for e in errs)
    assert any("stages[0].duration" in e for e in errs)


def test_unknown_version():
    d = raw()
    d["version"] = "7"
    assert errors_of(d)[0].startswith("version")


def test_schema_violation_names_the_field():
    d = raw()
    d["muscles"][0]["tau_max"] = "strong"
    assert any(e.startswith("muscles[0].tau_max") for e in errors_of(d))
    d = raw()
    d["surprise"] = 1
    assert errors_of(d)


def test_malformed_json(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"version": "1",\n  "name": }')
    with pytest.raises(ScenarioError, match="line 2"):
        parse_scenario(path)


def test_missing_file(tmp_path):
    with pytest.raises(ScenarioError, match="cannot read"):
        parse_scenario(tmp_path / "nowhere.json")


def test_bad_expression_index():
    d = raw()
    d["stages"][0]["boundary_constraints"][4]["expr"]["index"] = 5
    assert any(e.startswith("stages[0].boundary_constraints[4]") for e in errors_of(d))


def test_design_parameter_must_name_an_element():
    d = raw("pendulum_codesign")
    d["exoskeleton"]["design"][0]["element"] = "nobody"
    assert errors_of(d)


def test_documented_schema_matches_package():
    with open(ROOT / "docs" / "scenario.schema.json") as fh:
        assert json.load(fh) == load_schema()


@given(mass=st.floats(0.1, 10), tau=st.floats(1, 100), tc_a=st.floats(0.005, 0.05),
       intervals=st.integers(1, 40), T=st.floats(0.2, 3.0), target=st.floats(-1.5, 1.5),
       explicit_tc=st.booleans(), interpolation=st.sampled_from(["linear", "constant"]))
def test_parse_serialize_round_trip(mass, tau, tc_a, intervals, T, target, explicit_tc, interpolation):
    d = copy.deepcopy(raw())
    d["model"]["bodies"][0]["mass"] = mass
    for m in d["muscles"]:
        m["tau_max"] = tau
        if explicit_tc:
            m["tc_a"] = tc_a
    st0 = d["stages"][0]
    st0["intervals"] = intervals
    st0["duration"] = [T, T]
    st0["control_interpolation"] = interpolation
    st0["boundary_constraints"][4]["value"] = target
    s = parse_scenario_dict(d)
    again = parse_scenario_dict(json.loads(json.dumps(serialize(s))))
    assert again == s
