"""Round-trip and validation tests for the config document layer.

The shipped files under maglogic/configs are the reference corpus:
each must parse, re-serialize canonically, and re-parse to the same
document. Loaders must reject unknown fields at any depth.
"""

import json
import os

import pytest

import maglogic
from maglogic import configio as cio
from maglogic import fsm
from maglogic import presets as pr
from maglogic.errors import ConfigError

CONFIG_DIR = os.path.join(os.path.dirname(maglogic.__file__), "configs")

SHIPPED_JSON = (
    "demo_topology.json",
    "degenerate_array.json",
    "pair_design_space.json",
    "mission_machine.json",
    "engine_machine.json",
    "demo_campaign.json",
)
SHIPPED_PROG = ("mission.prog", "engine.prog")


def shipped(name: str) -> str:
    return os.path.join(CONFIG_DIR, name)


def reserialize(doc: dict) -> str:
    kind = cio.document_kind(doc)
    if kind == cio.TOPOLOGY_FORMAT:
        units, keys, meta = cio.topology_from_doc(doc)
        return cio.dumps_canonical(cio.topology_to_doc(units, keys, meta))
    if kind == cio.DESIGN_FORMAT:
        lattice, template, keys, n_units, thresholds, meta = (
            cio.design_from_doc(doc))
        return cio.dumps_canonical(cio.design_to_doc(
            lattice, template, keys, n_units, thresholds, meta))
    if kind == cio.MACHINE_FORMAT:
        machine, meta = cio.machine_from_doc(doc)
        return cio.dumps_canonical(cio.machine_to_doc(machine, meta))
    campaign = cio.campaign_from_doc(doc)
    return cio.dumps_canonical(cio.campaign_to_doc(campaign))


def test_shipped_configs_exist_and_are_canonical():
    for name in SHIPPED_JSON:
        with open(shipped(name), encoding="utf-8") as fh:
            text = fh.read()
        doc = json.loads(text)
        assert cio.dumps_canonical(doc) == text, name


def test_shipped_configs_round_trip():
    for name in SHIPPED_JSON:
        doc = cio.load_document(shipped(name))
        once = reserialize(doc)
        again = reserialize(json.loads(once))
        assert once == again, name
        assert json.loads(once) == doc, name


def test_shipped_programs_round_trip():
    for name in SHIPPED_PROG:
        with open(shipped(name), encoding="utf-8") as fh:
            text = fh.read()
        program = fsm.parse_program(text)
        assert program
        canonical = fsm.serialize_program(program)
        assert fsm.parse_program(canonical) == program


def test_topology_round_trip_preserves_values():
    units, keys, meta = cio.load_topology(shipped("demo_topology.json"))
    assert [u.id for u in units] == ["alpha", "beta", "gamma"]
    assert [u.assigned_key for u in units] == ["+x", "+z", "-x"]
    assert [k.label for k in keys] == ["+x", "+z", "-x"]
    again, _, _ = cio.topology_from_doc(
        json.loads(cio.dumps_canonical(cio.topology_to_doc(units, keys, meta))))
    for a, b in zip(units, again):
        assert a.track == b.track
        assert [tuple(s.position) for s in a.stators] == [
            tuple(s.position) for s in b.stators]
        assert [tuple(s.moment) for s in a.stators] == [
            tuple(s.moment) for s in b.stators]


def test_machine_round_trip_equality():
    machine, meta = cio.load_machine(shipped("mission_machine.json"))
    doc = cio.machine_to_doc(machine, meta)
    machine2, _ = cio.machine_from_doc(json.loads(cio.dumps_canonical(doc)))
    assert machine2 == machine


def test_physical_machine_embeds_topology():
    topo = pr.demo_topology()
    machine = fsm.MachineDef(
        (fsm.UnitDef("alpha", "buffer"), fsm.UnitDef("beta", "buffer"),
         fsm.UnitDef("gamma", "buffer")),
        "physical", topology=topo)
    doc = cio.machine_to_doc(machine, {"name": "physical demo"})
    machine2, _ = cio.machine_from_doc(doc)
    assert [u.id for u in machine2.topology] == ["alpha", "beta", "gamma"]
    assert machine2.topology[0].track == topo[0].track
    pulse = fsm.parse_program("+x 20mT 0.05s")[0]
    state = fsm.initial_state(machine2)
    assert fsm.decode_pulse(machine2, state, pulse) == frozenset({"alpha"})


def test_campaign_builds_calibrated_commands():
    campaign = cio.load_campaign(shipped("demo_campaign.json"))
    assert len(campaign.grid) == 3
    assert len(campaign.commands) == 9
    assert campaign.cycles == 5000
    assert campaign.seed == 0
    assert campaign.noise is None
    first = campaign.commands[0]
    assert first.intended == ("node0", "alpha")
    # master hovers 5 mm above the commanded node
    assert first.pose.position[2] == pytest.approx(0.005)


def test_unknown_fields_rejected_at_depth():
    doc = cio.load_document(shipped("demo_topology.json"))
    for mutate in (
        lambda d: d.update(extra=1),
        lambda d: d["units"][0].update(extra=1),
        lambda d: d["units"][0]["track"].update(extra=1),
        lambda d: d["units"][0]["track"]["mover"].update(extra=1),
        lambda d: d["key_set"][0].update(extra=1),
        lambda d: d["metadata"].update(extra=1),
    ):
        broken = json.loads(json.dumps(doc))
        mutate(broken)
        with pytest.raises(ConfigError, match="extra"):
            cio.topology_from_doc(broken)


def test_missing_fields_rejected():
    doc = cio.load_document(shipped("demo_topology.json"))
    broken = json.loads(json.dumps(doc))
    del broken["units"][0]["track"]["mass"]
    with pytest.raises(ConfigError, match="mass"):
        cio.topology_from_doc(broken)
    broken = json.loads(json.dumps(doc))
    del broken["key_set"]
    with pytest.raises(ConfigError, match="key_set"):
        cio.topology_from_doc(broken)


def test_header_validation():
    doc = cio.load_document(shipped("demo_topology.json"))
    wrong = dict(doc, format="maglogic-campaign")
    with pytest.raises(ConfigError):
        cio.topology_from_doc(wrong)
    with pytest.raises(ConfigError, match="version"):
        cio.topology_from_doc(dict(doc, version=99))
    with pytest.raises(ConfigError, match="format"):
        cio.document_kind({"format": "mystery"})


def test_semantic_cross_checks():
    doc = cio.load_document(shipped("demo_topology.json"))
    broken = json.loads(json.dumps(doc))
    broken["units"][0]["assigned_key"] = "+q"
    with pytest.raises(ConfigError, match="\\+q"):
        cio.topology_from_doc(broken)
    broken = json.loads(json.dumps(doc))
    broken["units"][1]["id"] = "alpha"
    with pytest.raises(ConfigError, match="duplicate"):
        cio.topology_from_doc(broken)

    mdoc = cio.load_document(shipped("mission_machine.json"))
    broken = json.loads(json.dumps(mdoc))
    broken["decode"]["map"].append(["-y", "alpha"])
    with pytest.raises(ConfigError):
        cio.machine_from_doc(broken)
    broken = json.loads(json.dumps(mdoc))
    broken["gates"][0]["terms"][0] = {"done": "cutting", "unit": "alpha"}
    with pytest.raises(ConfigError):
        cio.machine_from_doc(broken)

    cdoc = cio.load_document(shipped("demo_campaign.json"))
    broken = json.loads(json.dumps(cdoc))
    broken["commands"][0]["node"] = "ghost"
    with pytest.raises(ConfigError, match="ghost"):
        cio.campaign_from_doc(broken)
    broken = json.loads(json.dumps(cdoc))
    broken["commands"][0]["channel"] = "delta"
    with pytest.raises(ConfigError, match="delta"):
        cio.campaign_from_doc(broken)
    broken = json.loads(json.dumps(cdoc))
    broken["master"]["style"] = "helical"
    with pytest.raises(ConfigError, match="helical"):
        cio.campaign_from_doc(broken)
    broken = json.loads(json.dumps(cdoc))
    broken["cycles"] = -1
    with pytest.raises(ConfigError, match="cycles"):
        cio.campaign_from_doc(broken)
    broken = json.loads(json.dumps(cdoc))
    broken["noise"] = {"wobble": 1.0}
    with pytest.raises(ConfigError, match="wobble"):
        cio.campaign_from_doc(broken)

    ddoc = cio.load_document(shipped("pair_design_space.json"))
    broken = json.loads(json.dumps(ddoc))
    broken["thresholds"]["mystery"] = 1.0
    with pytest.raises(ConfigError, match="mystery"):
        cio.design_from_doc(broken)
    broken = json.loads(json.dumps(ddoc))
    broken["n_units"] = 2.5
    with pytest.raises(ConfigError, match="n_units"):
        cio.design_from_doc(broken)


def test_load_document_errors(tmp_path):
    with pytest.raises(ConfigError, match="missing.json"):
        cio.load_document(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text('{"format": broken')
    with pytest.raises(ConfigError, match="line 1"):
        cio.load_document(bad)
    arr = tmp_path / "arr.json"
    arr.write_text("[1, 2, 3]\n")
    with pytest.raises(ConfigError, match="object"):
        cio.load_document(arr)


def test_write_atomic_overwrites_and_leaves_no_temp(tmp_path):
    target = tmp_path / "out.json"
    cio.write_atomic(target, "first\n")
    cio.write_atomic(target, "second\n")
    assert target.read_text() == "second\n"
    leftovers = [p for p in os.listdir(tmp_path) if p != "out.json"]
    assert leftovers == []


def test_dumps_canonical_is_order_insensitive():
    a = {"b": 1, "a": [1.5, 2.25], "nested": {"y": None, "x": True}}
    b = {"nested": {"x": True, "y": None}, "a": [1.5, 2.25], "b": 1}
    assert cio.dumps_canonical(a) == cio.dumps_canonical(b)
    assert cio.dumps_canonical(a).endswith("\n")
