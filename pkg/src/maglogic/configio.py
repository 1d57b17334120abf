"""Structured config documents for the CLI pipeline.

Four JSON document kinds, discriminated by a ``format`` header field:

* ``maglogic-topology``: a concrete magnet assembly (units + key set).
* ``maglogic-design``: a lattice search space for the design pipeline.
* ``maglogic-machine``: a pulse-count machine (units, decode, gates).
* ``maglogic-campaign``: a release-node grid with a calibrated master
  model and a command schedule.

Pulse programs are the separate plain-text format handled by
:func:`maglogic.fsm.parse_program` (conventionally ``*.prog``).

Loaders reject unknown fields so that typos fail loudly instead of being
silently ignored. Serialization is canonical (sorted keys, two-space
indent, trailing newline) so identical inputs produce byte-identical
files, and all writes go through a temp file plus rename.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from . import design as dg
from . import fsm
from . import landscape as ls
from . import magnetics as mag
from . import netbus as nb
from .errors import ConfigError

SCHEMA_VERSION = 1
TOPOLOGY_FORMAT = "maglogic-topology"
DESIGN_FORMAT = "maglogic-design"
MACHINE_FORMAT = "maglogic-machine"
CAMPAIGN_FORMAT = "maglogic-campaign"

_METADATA_FIELDS = ("name", "scale", "notes", "calibration")


# ---------------------------------------------------------------------------
# plumbing


def dumps_canonical(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=True) + "\n"


def write_atomic(path, text: str) -> None:
    """Write text to path via a sibling temp file and an atomic rename."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".maglogic-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.chmod(tmp, 0o644)  # mkstemp defaults to owner-only
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def load_document(path) -> dict:
    path = os.fspath(path)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror or exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return doc


def _check_fields(obj, where: str, required, optional=()) -> None:
    if not isinstance(obj, dict):
        raise ConfigError(f"{where} must be an object")
    missing = sorted(set(required) - obj.keys())
    if missing:
        raise ConfigError(f"{where}: missing fields {missing}")
    unknown = sorted(obj.keys() - set(required) - set(optional))
    if unknown:
        raise ConfigError(f"{where}: unknown fields {unknown}")


def _check_header(doc: dict, fmt: str, where: str, body_required, body_optional):
    _check_fields(doc, where, ("format", "version", *body_required),
                  ("metadata", *body_optional))
    if doc["format"] != fmt:
        raise ConfigError(f"{where}: format is {doc['format']!r}, expected {fmt!r}")
    if doc["version"] != SCHEMA_VERSION:
        raise ConfigError(f"{where}: unsupported version {doc['version']!r}")
    metadata = doc.get("metadata", {})
    _check_fields(metadata, f"{where}.metadata", (), _METADATA_FIELDS)
    return dict(metadata)


def _header(fmt: str, metadata: dict | None) -> dict:
    doc = {"format": fmt, "version": SCHEMA_VERSION}
    if metadata:
        doc["metadata"] = dict(metadata)
    return doc


def _vec(x) -> list:
    return [float(v) for v in np.asarray(x, dtype=float)]


def document_kind(doc: dict) -> str:
    fmt = doc.get("format")
    known = (TOPOLOGY_FORMAT, DESIGN_FORMAT, MACHINE_FORMAT, CAMPAIGN_FORMAT)
    if fmt not in known:
        raise ConfigError(f"unknown document format {fmt!r}")
    return fmt


# ---------------------------------------------------------------------------
# magnet specs and keys (shared fragments)


def _spec_to_doc(spec: mag.MagnetSpec) -> dict:
    return {
        "shape": spec.shape,
        "dims": [float(d) for d in spec.dims],
        "remanence": float(spec.remanence),
        "easy_axis": _vec(spec.easy_axis),
    }


def _spec_from_doc(doc, where: str) -> mag.MagnetSpec:
    _check_fields(doc, where, ("shape", "dims", "remanence", "easy_axis"))
    return mag.MagnetSpec(doc["shape"], tuple(doc["dims"]),
                          doc["remanence"], tuple(doc["easy_axis"]))


def _key_to_doc(key: mag.FieldKey) -> dict:
    return {
        "label": key.label,
        "direction": _vec(key.direction),
        "magnitude": float(key.magnitude),
    }


def _keys_from_doc(items, where: str) -> tuple:
    if not isinstance(items, list):
        raise ConfigError(f"{where} must be a list")
    keys = []
    for i, entry in enumerate(items):
        _check_fields(entry, f"{where}[{i}]", ("label", "direction", "magnitude"))
        keys.append(mag.FieldKey(tuple(entry["direction"]),
                                 entry["magnitude"], entry["label"]))
    labels = [k.label for k in keys]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"{where}: duplicate key labels")
    return tuple(keys)


# ---------------------------------------------------------------------------
# topology documents


def _source_to_doc(source: mag.MagnetSource, where: str) -> dict:
    if source.spec is None:
        raise ConfigError(f"{where}: bare dipole sources are not serializable")
    if source.subdipoles is not None:
        raise ConfigError(f"{where}: discretized sources are not serializable")
    return {
        "position": _vec(source.position),
        "axis": _vec(mag.unit(source.moment)),
        "spec": _spec_to_doc(source.spec),
    }


def _source_from_doc(doc, where: str) -> mag.MagnetSource:
    _check_fields(doc, where, ("position", "axis", "spec"))
    spec = _spec_from_doc(doc["spec"], f"{where}.spec")
    return mag.source_from_spec(spec, tuple(doc["position"]),
                                axis=tuple(doc["axis"]))


def _unit_to_doc(unit: ls.UnitTriplet) -> dict:
    track = unit.track
    doc = {
        "id": unit.id,
        "stators": [_source_to_doc(s, f"unit {unit.id!r} stator")
                    for s in unit.stators],
        "track": {
            "axis": _vec(track.axis),
            "origin": _vec(track.origin),
            "stroke": [float(track.x_in), float(track.x_out)],
            "mover": _spec_to_doc(track.mover),
            "mass": float(track.mass),
            "friction_force": float(track.friction_force),
        },
    }
    if unit.assigned_key is not None:
        doc["assigned_key"] = unit.assigned_key
    return doc


def _unit_from_doc(doc, where: str) -> ls.UnitTriplet:
    _check_fields(doc, where, ("id", "stators", "track"), ("assigned_key",))
    tdoc = doc["track"]
    _check_fields(tdoc, f"{where}.track",
                  ("axis", "origin", "stroke", "mover", "mass"),
                  ("friction_force",))
    track = ls.MoverTrack(
        tuple(tdoc["axis"]), tuple(tdoc["origin"]), tuple(tdoc["stroke"]),
        _spec_from_doc(tdoc["mover"], f"{where}.track.mover"),
        tdoc["mass"], tdoc.get("friction_force", 0.0),
    )
    stators = tuple(
        _source_from_doc(s, f"{where}.stators[{i}]")
        for i, s in enumerate(doc["stators"])
    )
    return ls.UnitTriplet(doc["id"], stators, track, doc.get("assigned_key"))


def _topology_body_to_doc(units, keys) -> dict:
    return {
        "units": [_unit_to_doc(u) for u in units],
        "key_set": [_key_to_doc(k) for k in keys],
    }


def _topology_body_from_doc(doc, where: str) -> tuple:
    units = tuple(_unit_from_doc(u, f"{where}.units[{i}]")
                  for i, u in enumerate(doc["units"]))
    ids = [u.id for u in units]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"{where}: duplicate unit ids")
    keys = _keys_from_doc(doc["key_set"], f"{where}.key_set")
    labels = {k.label for k in keys}
    for u in units:
        if u.assigned_key is not None and u.assigned_key not in labels:
            raise ConfigError(
                f"{where}: unit {u.id!r} assigned to unknown key "
                f"{u.assigned_key!r}")
    return units, keys


def topology_to_doc(units, keys, metadata: dict | None = None) -> dict:
    doc = _header(TOPOLOGY_FORMAT, metadata)
    doc.update(_topology_body_to_doc(units, keys))
    return doc


def topology_from_doc(doc: dict, where: str = "topology") -> tuple:
    """-> (units tuple, keys tuple, metadata dict)."""
    metadata = _check_header(doc, TOPOLOGY_FORMAT, where,
                             ("units", "key_set"), ())
    units, keys = _topology_body_from_doc(doc, where)
    return units, keys, metadata


def load_topology(path) -> tuple:
    return topology_from_doc(load_document(path), os.fspath(path))


def save_topology(path, units, keys, metadata: dict | None = None) -> None:
    write_atomic(path, dumps_canonical(topology_to_doc(units, keys, metadata)))


# ---------------------------------------------------------------------------
# design-space documents


def design_to_doc(lattice: dg.Lattice, template: dg.UnitTemplate, keys,
                  n_units: int, thresholds: dict | None = None,
                  metadata: dict | None = None) -> dict:
    doc = _header(DESIGN_FORMAT, metadata)
    doc["lattice"] = {
        "spacing": float(lattice.spacing),
        "extents": [[int(lo), int(hi)] for lo, hi in lattice.extents],
        "allowed_orientations": [_vec(v) for v in lattice.allowed_orientations],
        "allowed_track_axes": [_vec(v) for v in lattice.allowed_track_axes],
    }
    doc["template"] = {
        "stator": _spec_to_doc(template.stator),
        "mover": _spec_to_doc(template.mover),
        "inner_offset": float(template.inner_offset),
        "stroke_length": float(template.stroke_length),
        "mass": float(template.mass),
        "friction_force": float(template.friction_force),
    }
    doc["key_set"] = [_key_to_doc(k) for k in keys]
    doc["n_units"] = int(n_units)
    doc["thresholds"] = dict(
        dg.DEFAULT_THRESHOLDS if thresholds is None else thresholds)
    return doc


def design_from_doc(doc: dict, where: str = "design") -> tuple:
    """-> (lattice, template, keys tuple, n_units, thresholds, metadata)."""
    metadata = _check_header(
        doc, DESIGN_FORMAT, where,
        ("lattice", "template", "key_set", "n_units"), ("thresholds",))
    ldoc = doc["lattice"]
    _check_fields(ldoc, f"{where}.lattice", ("spacing", "extents"),
                  ("allowed_orientations", "allowed_track_axes"))
    lattice_args = {"spacing": ldoc["spacing"],
                    "extents": tuple(tuple(e) for e in ldoc["extents"])}
    for field in ("allowed_orientations", "allowed_track_axes"):
        if field in ldoc:
            lattice_args[field] = tuple(tuple(v) for v in ldoc[field])
    lattice = dg.Lattice(**lattice_args)
    tdoc = doc["template"]
    _check_fields(tdoc, f"{where}.template",
                  ("stator", "mover", "inner_offset", "stroke_length", "mass"),
                  ("friction_force",))
    template = dg.UnitTemplate(
        _spec_from_doc(tdoc["stator"], f"{where}.template.stator"),
        _spec_from_doc(tdoc["mover"], f"{where}.template.mover"),
        tdoc["inner_offset"], tdoc["stroke_length"], tdoc["mass"],
        tdoc.get("friction_force", 0.0),
    )
    keys = _keys_from_doc(doc["key_set"], f"{where}.key_set")
    n_units = doc["n_units"]
    if not isinstance(n_units, int):
        raise ConfigError(f"{where}: n_units must be an integer")
    thresholds = dict(dg.DEFAULT_THRESHOLDS)
    if "thresholds" in doc:
        _check_fields(doc["thresholds"], f"{where}.thresholds", (),
                      tuple(dg.DEFAULT_THRESHOLDS))
        thresholds.update(doc["thresholds"])
    return lattice, template, keys, n_units, thresholds, metadata


def load_design(path) -> tuple:
    return design_from_doc(load_document(path), os.fspath(path))


# ---------------------------------------------------------------------------
# machine documents


def _term_to_doc(term) -> dict:
    if isinstance(term, fsm.GateDone):
        return {"done": term.gate}
    return {"unit": term.unit, "op": term.op, "value": int(term.value)}


def _term_from_doc(doc, where: str):
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be an object")
    if "done" in doc:
        _check_fields(doc, where, ("done",))
        return fsm.GateDone(doc["done"])
    _check_fields(doc, where, ("unit", "op", "value"))
    return fsm.UnitPredicate(doc["unit"], doc["op"], doc["value"])


def machine_to_doc(machine: fsm.MachineDef,
                   metadata: dict | None = None) -> dict:
    doc = _header(MACHINE_FORMAT, metadata)
    units = []
    for u in machine.units:
        entry = {"id": u.id, "role": u.role}
        if u.max_count is not None:
            entry["max_count"] = int(u.max_count)
        if u.reset_key is not None:
            entry["reset_key"] = u.reset_key
        units.append(entry)
    doc["units"] = units
    decode = {"mode": machine.decode_mode}
    if machine.decode_map:
        decode["map"] = [[label, unit] for label, unit in machine.decode_map]
    if machine.topology is not None:
        decode["topology"] = {"units": [_unit_to_doc(u)
                                        for u in machine.topology]}
    doc["decode"] = decode
    doc["gates"] = [
        {"name": g.name, "terms": [_term_to_doc(t) for t in g.terms],
         "action": g.output_action}
        for g in machine.gates
    ]
    doc["external_load"] = float(machine.external_load)
    doc["n_samples"] = int(machine.n_samples)
    return doc


def machine_from_doc(doc: dict, where: str = "machine") -> tuple:
    """-> (MachineDef, metadata dict).

    For physical decode the topology is embedded inline under
    decode.topology.units (same unit layout as a topology file); pulses
    carry their own field vectors, so no key set is stored here.
    """
    metadata = _check_header(
        doc, MACHINE_FORMAT, where, ("units", "decode"),
        ("gates", "external_load", "n_samples"))
    units = []
    for i, entry in enumerate(doc["units"]):
        _check_fields(entry, f"{where}.units[{i}]", ("id", "role"),
                      ("max_count", "reset_key"))
        units.append(fsm.UnitDef(entry["id"], entry["role"],
                                 entry.get("max_count"),
                                 entry.get("reset_key")))
    ddoc = doc["decode"]
    _check_fields(ddoc, f"{where}.decode", ("mode",), ("map", "topology"))
    topology = None
    if "topology" in ddoc:
        tw = f"{where}.decode.topology"
        _check_fields(ddoc["topology"], tw, ("units",))
        topology = tuple(
            _unit_from_doc(u, f"{tw}.units[{i}]")
            for i, u in enumerate(ddoc["topology"]["units"])
        )
        tids = [u.id for u in topology]
        if len(set(tids)) != len(tids):
            raise ConfigError(f"{tw}: duplicate unit ids")
    decode_map = tuple(
        (pair[0], pair[1]) for pair in ddoc.get("map", ())
    )
    gates = []
    for i, g in enumerate(doc.get("gates", ())):
        gw = f"{where}.gates[{i}]"
        _check_fields(g, gw, ("name", "terms", "action"))
        terms = tuple(_term_from_doc(t, f"{gw}.terms[{j}]")
                      for j, t in enumerate(g["terms"]))
        gates.append(fsm.GateExpr(g["name"], terms, g["action"]))
    machine = fsm.MachineDef(
        tuple(units), ddoc["mode"], decode_map, topology, tuple(gates),
        doc.get("external_load", 0.0),
        doc.get("n_samples", ls.DEFAULT_SAMPLES),
    )
    return machine, metadata


def load_machine(path) -> tuple:
    return machine_from_doc(load_document(path), os.fspath(path))


# ---------------------------------------------------------------------------
# campaign documents


class Campaign:
    """A loaded campaign: grid, calibrated commands, endurance settings.

    ``master`` keeps the declarative calibration record (style, depth,
    field, separation) and ``command_specs`` the (node, channel, dwell)
    schedule, so the campaign re-serializes without loss. ``commands``
    are the posed, calibrated netbus commands in schedule order.
    """

    def __init__(self, grid, master, command_specs, commands, cycles,
                 noise, seed, metadata):
        self.grid = tuple(grid)
        self.master = dict(master)
        self.command_specs = tuple(command_specs)
        self.commands = tuple(commands)
        self.cycles = cycles
        self.noise = dict(noise) if noise is not None else None
        self.seed = seed
        self.metadata = dict(metadata)


def _master_for(master: dict, direction) -> nb.MasterPose:
    style = master["style"]
    if style == "auto":
        style = "axial" if abs(float(direction[2])) > 0.5 else "lateral"
        return nb.calibrate_master(master["depth"], master["field"], style,
                                   field_direction=direction)
    kwargs = {}
    if master.get("separation") is not None:
        kwargs["separation"] = master["separation"]
    return nb.calibrate_master(master["depth"], master["field"], style,
                               **kwargs)


def campaign_to_doc(campaign: Campaign) -> dict:
    doc = _header(CAMPAIGN_FORMAT, campaign.metadata)
    doc["grid"] = [
        {
            "id": n.id,
            "position": _vec(n.position),
            "channels": [{"label": c.label, "direction": _vec(c.key_direction)}
                         for c in n.channels],
            "threshold": float(n.threshold),
            "cone_half_angle": float(n.cone_half_angle),
        }
        for n in campaign.grid
    ]
    doc["master"] = dict(campaign.master)
    doc["commands"] = [
        {"node": node, "channel": channel, "dwell": float(dwell)}
        for node, channel, dwell in campaign.command_specs
    ]
    doc["cycles"] = int(campaign.cycles)
    if campaign.noise is not None:
        doc["noise"] = dict(campaign.noise)
    doc["seed"] = int(campaign.seed)
    return doc


def campaign_from_doc(doc: dict, where: str = "campaign") -> Campaign:
    metadata = _check_header(
        doc, CAMPAIGN_FORMAT, where, ("grid", "master", "commands"),
        ("cycles", "noise", "seed"))
    grid = []
    for i, ndoc in enumerate(doc["grid"]):
        nw = f"{where}.grid[{i}]"
        _check_fields(ndoc, nw, ("id", "position", "channels", "threshold"),
                      ("cone_half_angle",))
        channels = []
        for j, cdoc in enumerate(ndoc["channels"]):
            _check_fields(cdoc, f"{nw}.channels[{j}]", ("label", "direction"))
            channels.append(nb.Channel(cdoc["label"], tuple(cdoc["direction"])))
        grid.append(nb.NodeSpec(ndoc["id"], tuple(ndoc["position"]),
                                tuple(channels), ndoc["threshold"],
                                ndoc.get("cone_half_angle", 20.0)))
    ids = [n.id for n in grid]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"{where}: duplicate node ids")
    mdoc = doc["master"]
    _check_fields(mdoc, f"{where}.master", ("depth", "field"),
                  ("style", "separation"))
    master = {"style": mdoc.get("style", "auto"),
              "depth": mdoc["depth"], "field": mdoc["field"]}
    if mdoc.get("separation") is not None:
        master["separation"] = mdoc["separation"]
    if master["style"] not in ("auto", "lateral", "axial", "composite"):
        raise ConfigError(
            f"{where}.master: unknown style {master['style']!r}")
    by_id = {n.id: n for n in grid}
    command_specs, commands = [], []
    for i, cdoc in enumerate(doc["commands"]):
        cw = f"{where}.commands[{i}]"
        _check_fields(cdoc, cw, ("node", "channel"), ("dwell",))
        node = by_id.get(cdoc["node"])
        if node is None:
            raise ConfigError(f"{cw}: unknown node {cdoc['node']!r}")
        channel = next((c for c in node.channels
                        if c.label == cdoc["channel"]), None)
        if channel is None:
            raise ConfigError(
                f"{cw}: node {node.id!r} has no channel {cdoc['channel']!r}")
        dwell = cdoc.get("dwell", 1.0)
        reference = _master_for(master, channel.key_direction)
        pose = nb.pose_over(node, reference, master["depth"])
        command_specs.append((node.id, channel.label, float(dwell)))
        commands.append(nb.Command(pose, (node.id, channel.label), dwell))
    cycles = doc.get("cycles", 0)
    if not isinstance(cycles, int) or cycles < 0:
        raise ConfigError(f"{where}: cycles must be a non-negative integer")
    noise = doc.get("noise")
    if noise is not None:
        _check_fields(noise, f"{where}.noise", (),
                      ("angle_sigma_deg", "magnitude_sigma_T"))
    seed = doc.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError(f"{where}: seed must be an integer")
    return Campaign(grid, master, command_specs, commands, cycles,
                    noise, seed, metadata)


def load_campaign(path) -> Campaign:
    return campaign_from_doc(load_document(path), os.fspath(path))


# ---------------------------------------------------------------------------
# generic validation (cli `validate`)


def validate_document(doc: dict, where: str = "document"):
    """Parse any known document kind; returns the loaded value."""
    fmt = document_kind(doc)
    if fmt == TOPOLOGY_FORMAT:
        return topology_from_doc(doc, where)
    if fmt == DESIGN_FORMAT:
        return design_from_doc(doc, where)
    if fmt == MACHINE_FORMAT:
        return machine_from_doc(doc, where)
    return campaign_from_doc(doc, where)
