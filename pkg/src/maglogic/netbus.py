"""Wireless field-bus simulation over a grid of decode nodes.

A handheld master magnet (one or two point dipoles) broadcasts to nodes
that each carry a release threshold and a set of channel directions. Field
magnitude is the address bus: a node only listens when |B| meets its
threshold, which confines addressing to the volume right under the master.
Field direction is the control bus: the nearest channel direction within
the node's acceptance cone is the one that fires.

The master's moment is calibrated against a target field at a working
depth, so the shipped demos state their assumptions as two numbers (120 mT
at 5 mm) rather than a hardware model. Endurance campaigns perturb the
master pose with seeded Gaussian angle/magnitude noise and report exact
binomial (Clopper-Pearson) upper confidence bounds on the failure rate.
Zero-failure bounds are reported in both conventions, one-sided
1 - 0.05^(1/n) and two-sided 1 - 0.025^(1/n), because published figures
rarely say which one they used.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import beta as _beta_dist

from . import landscape as ls
from . import magnetics as mag
from .errors import ConfigError, MaglogicError

DOWN = np.array([0.0, 0.0, -1.0])  # master hovers above its target node
DEFAULT_ISOLATION_FRAC = 0.75  # neighbor must fall below this x threshold
_CALIBRATION_HEADROOM = 1e-6  # keeps the target strictly at/above threshold


@dataclass(frozen=True)
class Channel:
    label: str
    key_direction: tuple

    def __post_init__(self):
        d = mag.unit(np.asarray(self.key_direction, dtype=float))
        object.__setattr__(self, "key_direction", tuple(float(c) for c in d))


@dataclass(frozen=True)
class NodeSpec:
    id: str
    position: tuple
    channels: tuple
    threshold: float
    cone_half_angle: float = 20.0

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float)
        if pos.shape != (3,):
            raise ConfigError("node position must be a 3-vector")
        object.__setattr__(self, "position", tuple(float(c) for c in pos))
        object.__setattr__(self, "channels", tuple(self.channels))
        if not self.channels:
            raise ConfigError("node needs at least one channel")
        dirs = [c.key_direction for c in self.channels]
        if len(set(dirs)) != len(dirs):
            raise ConfigError("channel directions must be pairwise distinct")
        labels = [c.label for c in self.channels]
        if len(set(labels)) != len(labels):
            raise ConfigError("channel labels must be unique")
        if self.threshold <= 0.0:
            raise ConfigError("threshold must be positive")
        if not 0.0 < self.cone_half_angle < 90.0:
            raise ConfigError("cone half-angle must lie in (0, 90) degrees")


@dataclass(frozen=True)
class MasterPose:
    """Master magnet as 1-2 point dipoles; orientation lives in the moments.

    ``dipoles`` is a tuple of (offset, moment) pairs in the world frame,
    offsets relative to ``position``.
    """

    position: tuple
    dipoles: tuple

    def __post_init__(self):
        pos = np.asarray(self.position, dtype=float)
        if pos.shape != (3,):
            raise ConfigError("master position must be a 3-vector")
        object.__setattr__(self, "position", tuple(float(c) for c in pos))
        dips = []
        for off, m in self.dipoles:
            off = np.asarray(off, dtype=float)
            m = np.asarray(m, dtype=float)
            if off.shape != (3,) or m.shape != (3,):
                raise ConfigError("dipole offset and moment must be 3-vectors")
            dips.append((tuple(off), tuple(m)))
        if not dips:
            raise ConfigError("master needs at least one dipole")
        total = sum(np.linalg.norm(m) for _, m in dips)
        if total <= 0.0:
            raise ConfigError("master moment must be non-zero")
        object.__setattr__(self, "dipoles", tuple(dips))

    @classmethod
    def single(cls, position, moment):
        return cls(position, (((0.0, 0.0, 0.0), tuple(moment)),))

    def scaled(self, factor: float) -> "MasterPose":
        return MasterPose(
            self.position,
            tuple((off, tuple(factor * np.asarray(m))) for off, m in self.dipoles),
        )

    def rotated(self, rotation: np.ndarray) -> "MasterPose":
        """New pose with offsets and moments rotated about ``position``."""
        R = np.asarray(rotation, dtype=float)
        return MasterPose(
            self.position,
            tuple(
                (tuple(R @ np.asarray(off)), tuple(R @ np.asarray(m)))
                for off, m in self.dipoles
            ),
        )


@dataclass(frozen=True)
class Command:
    pose: MasterPose
    intended: tuple  # (node id, channel label)
    dwell: float = 1.0

    def __post_init__(self):
        if self.dwell <= 0.0:
            raise ConfigError("dwell must be positive")
        object.__setattr__(self, "intended", tuple(self.intended))


@dataclass(frozen=True)
class Event:
    time: float
    node_id: str
    channel: str
    magnitude: float  # T at the node
    intended: bool


def master_field_at(pose: MasterPose, point) -> np.ndarray:
    """Superposed dipole field of the master composite, tesla."""
    point = np.asarray(point, dtype=float)
    base = np.asarray(pose.position)
    pos = np.array([base + np.asarray(off) for off, _ in pose.dipoles])
    moments = np.array([m for _, m in pose.dipoles])
    return mag.dipole_field(pos, moments, point[None, :])[0]


def decode_node(node: NodeSpec, field) -> str | None:
    """Channel label fired by this field, or None.

    Address test: |field| >= threshold. Control test: the channel nearest
    in angle must lie within the acceptance cone (inclusive); angle ties
    resolve to the earliest channel in the list.
    """
    field = np.asarray(field, dtype=float)
    norm = float(np.linalg.norm(field))
    if norm < node.threshold:
        return None
    fdir = field / norm
    best = None
    for idx, ch in enumerate(node.channels):
        cosang = float(np.clip(fdir @ np.asarray(ch.key_direction), -1.0, 1.0))
        angle = float(np.degrees(np.arccos(cosang)))
        if best is None or angle < best[0]:
            best = (angle, idx, ch.label)
    if best[0] <= node.cone_half_angle:
        return best[2]
    return None


def execute_command(grid, command: Command, t: float = 0.0) -> list:
    """Decode one command at every node; events carry the intended flag."""
    events = []
    for node in grid:
        field = master_field_at(command.pose, node.position)
        label = decode_node(node, field)
        if label is not None:
            events.append(Event(
                t, node.id, label, float(np.linalg.norm(field)),
                (node.id, label) == command.intended,
            ))
    return events


@dataclass(frozen=True)
class TruthTable:
    columns: tuple  # (node id, channel label) pairs
    rows: tuple  # tuples of 0/1 ints, one per command
    exclusive: tuple  # per-row: exactly one 1 and it is the intended one
    intended: tuple  # per-row (node id, channel label)

    def row_dict(self, i: int) -> dict:
        return dict(zip(self.columns, self.rows[i]))


def truth_table(grid, commands) -> TruthTable:
    grid = list(grid)
    columns = tuple((n.id, c.label) for n in grid for c in n.channels)
    rows, exclusive, intended = [], [], []
    t = 0.0
    for cmd in commands:
        events = execute_command(grid, cmd, t)
        t += cmd.dwell
        hits = {(e.node_id, e.channel) for e in events}
        rows.append(tuple(1 if col in hits else 0 for col in columns))
        exclusive.append(hits == {cmd.intended})
        intended.append(cmd.intended)
    return TruthTable(columns, tuple(rows), tuple(exclusive), tuple(intended))


class ErrorRate(float):
    """Unintended/total event ratio; ``no_events`` marks the 0/0 case."""

    no_events: bool

    def __new__(cls, rate: float, no_events: bool):
        obj = super().__new__(cls, rate)
        obj.no_events = no_events
        return obj


def error_rate(log) -> ErrorRate:
    log = list(log)
    if not log:
        return ErrorRate(0.0, True)
    bad = sum(1 for e in log if not e.intended)
    return ErrorRate(bad / len(log), False)


def calibrate_master(depth: float, field: float, style: str = "lateral",
                     field_direction=None,
                     separation: float | None = None) -> MasterPose:
    """Master pose at height ``depth`` over the origin hitting |B| = field.

    ``field_direction`` is the wanted field direction at the target:
    transverse for "lateral" (the equatorial field points opposite the
    moment, default +x), +-z for "axial" and "composite" (the on-axis field
    is parallel to the moment, default -z). "composite" splits the moment
    over two dipoles separated along y (default ``depth/2``), which is the
    variant with anisotropic lateral decay. A tiny headroom factor keeps
    the target strictly at threshold under float round-off.
    """
    if depth <= 0.0 or field <= 0.0:
        raise ConfigError("depth and field must be positive")
    boost = 1.0 + _CALIBRATION_HEADROOM
    position = (0.0, 0.0, depth)
    if style in ("axial", "composite"):
        fdir = np.array([0.0, 0.0, -1.0]) if field_direction is None \
            else mag.unit(np.asarray(field_direction, dtype=float))
        if abs(fdir[0]) > 1e-12 or abs(fdir[1]) > 1e-12:
            raise ConfigError(f"{style} master needs a +-z field direction")
        if style == "axial":
            m = 2.0 * np.pi * depth**3 * field / mag.MU0 * boost
            return MasterPose.single(position, tuple(m * fdir))
        gap = depth / 2 if separation is None else separation
        if gap <= 0.0:
            raise ConfigError("separation must be positive")
        raw = MasterPose(position, (
            ((0.0, -gap / 2, 0.0), tuple(fdir)),
            ((0.0, +gap / 2, 0.0), tuple(fdir)),
        ))
        got = float(np.linalg.norm(master_field_at(raw, (0.0, 0.0, 0.0))))
        return raw.scaled(field / got * boost)
    if style == "lateral":
        fdir = np.array([1.0, 0.0, 0.0]) if field_direction is None \
            else mag.unit(np.asarray(field_direction, dtype=float))
        if abs(fdir[2]) > 1e-12:
            raise ConfigError("lateral master needs a transverse field direction")
        m = 4.0 * np.pi * depth**3 * field / mag.MU0 * boost
        return MasterPose.single(position, tuple(-m * fdir))
    raise ConfigError(f"unknown master style {style!r}")


def pose_over(node: NodeSpec, reference: MasterPose, depth: float) -> MasterPose:
    """The calibrated reference master translated directly over ``node``."""
    target = np.asarray(node.position)
    return MasterPose(tuple(target - depth * DOWN), reference.dipoles)


def min_spacing(pose: MasterPose, threshold: float, axis, depth: float,
                isolation_frac: float = DEFAULT_ISOLATION_FRAC,
                xtol: float = 1e-6) -> float:
    """Smallest neighbor offset whose field drops below the isolation level.

    The target sits ``depth`` below the master; neighbors are scanned along
    ``axis`` in the target plane. Isolation level = isolation_frac x
    threshold (default 0.75, i.e. a 90 mT ceiling for a 120 mT threshold).
    The master must reach the threshold at the target itself.
    """
    if not 0.0 < isolation_frac <= 1.0:
        raise ConfigError("isolation_frac must lie in (0, 1]")
    a = mag.unit(np.asarray(axis, dtype=float))
    target = np.asarray(pose.position) + depth * DOWN
    level = isolation_frac * threshold

    def excess(offset):
        point = target + offset * a
        return float(np.linalg.norm(master_field_at(pose, point))) - level

    at_target = float(np.linalg.norm(master_field_at(pose, target)))
    if at_target < threshold:
        raise MaglogicError(
            f"master reaches only {at_target:.3g} T at depth, "
            f"below the {threshold:.3g} T threshold"
        )
    lo, hi = 0.0, depth
    for _ in range(200):
        if excess(hi) < 0.0:
            break
        hi *= 2.0
    else:
        raise MaglogicError("field never falls below the isolation level")
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if excess(mid) < 0.0:
            hi = mid
        else:
            lo = mid
    return hi


# endurance


@dataclass(frozen=True)
class EnduranceStats:
    n_cycles: int
    false_triggers: int
    misses: int
    failures: int
    p_upper_one_sided: float
    p_upper_two_sided: float


def _cp_upper(k: int, n: int, alpha: float) -> float:
    """Exact binomial upper confidence bound at level 1 - alpha."""
    if k >= n:
        return 1.0
    if k == 0:
        return 1.0 - alpha ** (1.0 / n)
    return float(_beta_dist.ppf(1.0 - alpha, k + 1, n - k))


def _perturbed(pose: MasterPose, rng, angle_sigma_deg: float,
               magnitude_sigma_T: float, nominal_B: float) -> MasterPose:
    out = pose
    if angle_sigma_deg > 0.0:
        theta = np.radians(rng.normal(0.0, angle_sigma_deg))
        phi = rng.uniform(0.0, 2 * np.pi)
        axis = np.array([np.cos(phi), np.sin(phi), 0.0])
        c, s = np.cos(theta), np.sin(theta)
        ux, uy, uz = axis
        K = np.array([[0, -uz, uy], [uz, 0, -ux], [-uy, ux, 0]])
        R = np.eye(3) + s * K + (1 - c) * (K @ K)
        out = out.rotated(R)
    if magnitude_sigma_T > 0.0:
        out = out.scaled(1.0 + rng.normal(0.0, magnitude_sigma_T) / nominal_B)
    return out


def endurance_campaign(grid, command: Command, n_cycles: int,
                       noise: dict | None = None, seed: int = 0) -> EnduranceStats:
    """Repeat one command with seeded pose noise; exact binomial bounds.

    ``noise`` keys: "angle_sigma_deg" (tilt of the whole master) and
    "magnitude_sigma_T" (field error at the intended node, converted to a
    moment scale factor). A failure is any cycle with a false trigger or a
    missed intended activation.
    """
    if n_cycles < 1:
        raise ConfigError("n_cycles must be at least 1")
    noise = dict(noise or {})
    angle_sigma = float(noise.pop("angle_sigma_deg", 0.0))
    mag_sigma = float(noise.pop("magnitude_sigma_T", 0.0))
    if noise:
        raise ConfigError(f"unknown noise fields {sorted(noise)}")
    grid = list(grid)
    node = next((n for n in grid if n.id == command.intended[0]), None)
    if node is None:
        raise ConfigError(f"intended node {command.intended[0]!r} not in grid")
    nominal_B = float(np.linalg.norm(
        master_field_at(command.pose, node.position)))
    rng = np.random.default_rng(seed)
    false_triggers = 0
    misses = 0
    failures = 0
    for i in range(n_cycles):
        pose = _perturbed(command.pose, rng, angle_sigma, mag_sigma, nominal_B)
        events = execute_command(grid, Command(pose, command.intended), t=float(i))
        hits = {(e.node_id, e.channel) for e in events}
        bad = len(hits - {command.intended})
        missed = command.intended not in hits
        false_triggers += bad
        misses += int(missed)
        failures += int(bad > 0 or missed)
    return EnduranceStats(
        n_cycles, false_triggers, misses, failures,
        _cp_upper(failures, n_cycles, 0.05),
        _cp_upper(failures, n_cycles, 0.025),
    )


def sealing_check(node: NodeSpec, pressure_proxy: float, log) -> bool:
    """True iff the node stayed sealed until its first intended command.

    Any event on this node earlier than its first intended event is a leak.
    The pressure proxy is a bookkeeping scalar for the caller's reservoir
    model; it must be non-negative but does not enter the quasi-static
    check.
    """
    if pressure_proxy < 0.0:
        raise ConfigError("pressure proxy must be non-negative")
    events = sorted((e for e in log if e.node_id == node.id),
                    key=lambda e: e.time)
    first_intended = next((e.time for e in events if e.intended), None)
    for e in events:
        if first_intended is None or e.time < first_intended:
            if not e.intended:
                return False
    return True


def jet_velocity(profile, ejected_mass: float,
                 friction_force: float | None = None) -> float:
    """Inviscid upper bound on the ejection jet speed, m/s.

    Energy balance of the snap-through stroke applied to the effective
    ejected mass; fluid viscosity is not modeled, so real jets are slower.
    """
    return ls.ejection_velocity(profile, mass=ejected_mass,
                                friction_force=friction_force)
