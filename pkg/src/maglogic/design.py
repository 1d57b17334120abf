"""Lattice-constrained inverse design of addressable topologies.

The pipeline enumerates candidate stator/track placements on an integer
lattice, screens each candidate with the landscape module (one key must
snap-through exactly one unit while every other unit stays anchored), and
scores survivors:

* fidelity: worst-case (driving peak x weakest non-target barrier), divided
  by total magnet volume^(5/3). Forces scale s^2 and barriers s^3 under
  geometric scaling, so the exponent 5/3 makes the score scale-free.
* compactness: longest edge of the physical bounding box (mover bodies
  swept over their strokes) in units of the largest stator dimension. A
  lone stator scores exactly 1 by construction.
* control entropy: Shannon entropy of the key -> activation-pattern map
  under a uniform key distribution. Indiscriminate arrays score 0 bits.
* cross interference: the largest key-induced change of the axial force on
  a latched non-target, relative to the target's driving peak. The change
  against the no-key baseline is used rather than the raw latch force,
  which would be dominated by the unit's own static anchoring.

Candidates are deduplicated up to the symmetry group of the lattice box
(signed axis permutations). Stator moments transform as pseudovectors
(det(R) * R * m), track axes as ordinary vectors; this is the exact
invariance group of the dipole physics.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import landscape as ls
from . import magnetics as mag
from .errors import (
    ConfigError,
    DesignSpaceError,
    MaglogicError,
    NoPassingCandidateError,
)
from .landscape import MoverTrack, UnitTriplet
from .magnetics import FieldKey, MagnetSpec

DEFAULT_THRESHOLDS = {"drive_min": 0.1, "anchor_min": 1e-3}
MAX_CARTESIAN_KEYS = 6
_ANGLE_CAP_DEG = 85.0
_ANGLE_RESOLUTION_DEG = 0.25


@dataclass(frozen=True)
class Lattice:
    """Integer placement grid: site (i,j,k) sits at spacing*(i,j,k)."""

    spacing: float
    extents: tuple  # ((xlo, xhi), (ylo, yhi), (zlo, zhi)), inclusive ints
    allowed_orientations: tuple = (
        (1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1),
    )
    allowed_track_axes: tuple = (
        (1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1),
    )

    def __post_init__(self):
        if self.spacing <= 0:
            raise ConfigError("lattice spacing must be positive")
        ext = tuple((int(lo), int(hi)) for lo, hi in self.extents)
        if len(ext) != 3 or any(hi < lo for lo, hi in ext):
            raise ConfigError("extents must be three inclusive integer ranges")
        object.__setattr__(self, "extents", ext)
        for name in ("allowed_orientations", "allowed_track_axes"):
            vecs = tuple(tuple(float(c) for c in mag.unit(np.asarray(v, float)))
                         for v in getattr(self, name))
            if not vecs:
                raise ConfigError(f"{name} must be non-empty")
            object.__setattr__(self, name, vecs)

    def sites(self):
        (xl, xh), (yl, yh), (zl, zh) = self.extents
        return [
            (i, j, k)
            for i in range(xl, xh + 1)
            for j in range(yl, yh + 1)
            for k in range(zl, zh + 1)
        ]


@dataclass(frozen=True)
class UnitTemplate:
    """Per-unit geometry stamped onto each lattice placement."""

    stator: MagnetSpec
    mover: MagnetSpec
    inner_offset: float  # m, stator center to inner stop along the track
    stroke_length: float
    mass: float
    friction_force: float = 0.0

    def __post_init__(self):
        if self.inner_offset <= 0 or self.stroke_length <= 0:
            raise ConfigError("inner_offset and stroke_length must be positive")
        if self.mass <= 0:
            raise ConfigError("template mass must be positive")


@dataclass(frozen=True)
class CandidateTopology:
    units: tuple
    key_set: tuple
    placements: tuple = ()  # canonical integer description, for hashing

    @property
    def candidate_hash(self) -> str:
        return topology_hash(self.units, self.key_set, self.placements)


def topology_hash(units, key_set, placements=()) -> str:
    if placements:
        payload = [list(map(list, p)) for p in placements]
    else:
        payload = sorted(
            [u.id, list(u.track.origin), list(u.track.axis), list(u.track.stroke)]
            for u in units
        )
    payload.append(sorted(k.label for k in key_set))
    blob = json.dumps(payload, sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _spec_longest(spec: MagnetSpec) -> float:
    if spec.shape == "cylinder":
        r, length = spec.dims
        return max(2 * r, length)
    return max(spec.dims)


def _segment_points(track: MoverTrack):
    return track.point(track.x_in), track.point(track.x_out)


def _point_segment_dist(p, a, b) -> float:
    ab = b - a
    t = float(np.clip((p - a) @ ab / (ab @ ab), 0.0, 1.0))
    return float(np.linalg.norm(p - (a + t * ab)))


def _segment_segment_dist(a0, a1, b0, b1) -> float:
    """Closest distance between two segments (clamped closest-point pairs)."""
    u = a1 - a0
    v = b1 - b0
    w = a0 - b0
    a, b, c = u @ u, u @ v, v @ v
    d, e = u @ w, v @ w
    denom = a * c - b * b
    if denom > 1e-18:
        s = np.clip((b * e - c * d) / denom, 0.0, 1.0)
    else:
        s = 0.0
    t = (b * s + e) / c if c > 1e-18 else 0.0
    t = np.clip(t, 0.0, 1.0)
    # re-clamp s against the clamped t
    s = np.clip((b * t - d) / a, 0.0, 1.0) if a > 1e-18 else 0.0
    return float(np.linalg.norm((a0 + s * u) - (b0 + t * v)))


# enumeration


def _box_symmetry_group(extents):
    """Signed axis permutations mapping the extent box onto itself."""
    lens = [hi - lo for lo, hi in extents]
    elems = []
    for perm in itertools.permutations(range(3)):
        if any(lens[perm[i]] != lens[i] for i in range(3)):
            continue
        for signs in itertools.product((1, -1), repeat=3):
            elems.append((perm, signs))
    return elems


def _perm_sign(perm) -> int:
    s = 1
    for i in range(3):
        for j in range(i + 1, 3):
            if perm[i] > perm[j]:
                s = -s
    return s


def _transform_placement(placement, perm, signs, extents):
    site, moment, axis = placement
    det = _perm_sign(perm) * signs[0] * signs[1] * signs[2]
    new_site = []
    new_m = []
    new_ax = []
    for i in range(3):
        lo_i, hi_i = extents[i]
        lo_p, hi_p = extents[perm[i]]
        if signs[i] > 0:
            new_site.append(lo_i + (site[perm[i]] - lo_p))
        else:
            new_site.append(lo_i + (hi_p - site[perm[i]]))
        new_m.append(det * signs[i] * moment[perm[i]])
        new_ax.append(signs[i] * axis[perm[i]])
    rnd = lambda v: tuple(round(c, 9) + 0.0 for c in v)
    return (tuple(new_site), rnd(new_m), rnd(new_ax))


def _canonical_key(placements, group, extents):
    best = None
    base = tuple(sorted(placements))
    for perm, signs in group:
        image = tuple(
            sorted(_transform_placement(p, perm, signs, extents) for p in base)
        )
        if best is None or image < best:
            best = image
    return best


def _build_units(placements, lattice, template):
    units = []
    for idx, (site, moment_dir, axis) in enumerate(placements):
        pos = tuple(lattice.spacing * c for c in site)
        spec = MagnetSpec(
            template.stator.shape, template.stator.dims,
            template.stator.remanence, moment_dir,
        )
        stator = mag.source_from_spec(spec, pos)
        track = MoverTrack(
            axis, pos,
            (template.inner_offset, template.inner_offset + template.stroke_length),
            template.mover, template.mass, template.friction_force,
        )
        units.append(UnitTriplet(f"u{idx}", (stator,), track, None))
    return tuple(units)


def _candidate_valid(placements, lattice, template):
    sites = [p[0] for p in placements]
    if len(set(sites)) != len(sites):
        return None
    try:
        units = _build_units(placements, lattice, template)
    except ConfigError:
        return None
    stator_clear = 0.5 * (_spec_longest(template.stator) + _spec_longest(template.mover))
    mover_clear = _spec_longest(template.mover)
    segs = [_segment_points(u.track) for u in units]
    for i, u in enumerate(units):
        for j in range(len(units)):
            if i == j:
                continue
            for st in u.stators:
                if _point_segment_dist(st.position, *segs[j]) < stator_clear:
                    return None
        for j in range(i + 1, len(units)):
            if _segment_segment_dist(*segs[i], *segs[j]) < mover_clear:
                return None
    return units


def enumerate_candidates(lattice, n_units, key_set, template, budget, seed=0):
    """Deterministic candidate stream, deduplicated up to box symmetry.

    Exhaustive in lexicographic order when the raw combination count fits
    the budget; otherwise seeded uniform sampling of placements (still
    deduplicated) until the budget is filled.
    """
    if budget < 1:
        raise ConfigError("budget must be at least 1")
    if n_units < 1:
        raise ConfigError("need at least one unit")
    key_set = tuple(key_set)
    if len(key_set) > MAX_CARTESIAN_KEYS:
        raise DesignSpaceError(
            f"more than {MAX_CARTESIAN_KEYS} keys cannot be deterministic "
            "with Cartesian field directions"
        )
    sites = lattice.sites()
    if len(sites) < n_units:
        raise DesignSpaceError("lattice too small for the requested unit count")
    singles = [
        (site, m, ax)
        for site in sites
        for m in lattice.allowed_orientations
        for ax in lattice.allowed_track_axes
    ]
    group = _box_symmetry_group(lattice.extents)
    seen = set()
    yielded = 0

    def emit(placements):
        nonlocal yielded
        units = _candidate_valid(placements, lattice, template)
        if units is None:
            return None
        canon = _canonical_key(placements, group, lattice.extents)
        if canon in seen:
            return None
        seen.add(canon)
        yielded += 1
        return CandidateTopology(units, key_set, canon)

    total = math.comb(len(singles), n_units)
    if total <= budget:
        for combo in itertools.combinations(singles, n_units):
            cand = emit(combo)
            if cand is not None:
                yield cand
            if yielded >= budget:
                return
    else:
        rng = np.random.default_rng(seed)
        attempts = 0
        cap = budget * 200
        while yielded < budget and attempts < cap:
            attempts += 1
            idx = rng.choice(len(singles), size=n_units, replace=False)
            combo = tuple(sorted(singles[i] for i in idx))
            cand = emit(combo)
            if cand is not None:
                yield cand


# screening


@dataclass(frozen=True)
class SelectivityCell:
    entry: str  # DRIVE | ANCHOR | WEAK
    driving_peak: float
    margin: float | None
    barrier: float


@dataclass(frozen=True)
class SelectivityMatrix:
    key_labels: tuple
    unit_ids: tuple
    cells: tuple  # rows = keys
    passed: bool
    assignment: tuple | None  # ((key_label, unit_id), ...)
    total_magnet_volume: float | None

    def cell(self, key_label, unit_id) -> SelectivityCell:
        return self.cells[self.key_labels.index(key_label)][
            self.unit_ids.index(unit_id)
        ]


def _total_volume(units):
    vol = 0.0
    for u in units:
        for s in u.stators:
            if s.spec is None:
                return None
            vol += mag.volume(s.spec)
        vol += mag.volume(u.track.mover)
    return vol


def selectivity_filter(
    candidate, thresholds=None, n_samples: int = ls.DEFAULT_SAMPLES
) -> SelectivityMatrix:
    """Key x unit decision matrix and the one-hot pass verdict.

    Passes iff every key drives exactly one unit (peak >= drive_min), those
    units are all distinct, and every other unit anchors with margin >=
    anchor_min.
    """
    units = list(candidate.units) if hasattr(candidate, "units") else list(candidate)
    key_set = tuple(candidate.key_set) if hasattr(candidate, "key_set") else ()
    if not key_set:
        raise ConfigError("candidate has no keys")
    th = dict(DEFAULT_THRESHOLDS)
    if thresholds:
        th.update(thresholds)
    rows = []
    assignment = []
    passed = True
    for key in key_set:
        row = []
        drive_cols = []
        for u in units:
            d = ls.unit_decision(units, u.id, key, n_samples)
            if d.snap_through:
                row.append(SelectivityCell("DRIVE", d.driving_peak, None, 0.0))
                drive_cols.append(u.id)
            elif (
                d.anchoring_force is not None
                and d.anchoring_force >= th["anchor_min"]
                and not d.degenerate
            ):
                row.append(
                    SelectivityCell(
                        "ANCHOR", d.driving_peak, d.anchoring_force, d.barrier_out
                    )
                )
            else:
                row.append(
                    SelectivityCell("WEAK", d.driving_peak, d.anchoring_force, 0.0)
                )
        rows.append(tuple(row))
        if len(drive_cols) == 1:
            target = drive_cols[0]
            peak_ok = row[[u.id for u in units].index(target)].driving_peak >= th[
                "drive_min"
            ]
            others_ok = all(
                c.entry == "ANCHOR"
                for u, c in zip(units, row)
                if u.id != target
            )
            if peak_ok and others_ok:
                assignment.append((key.label, target))
            else:
                passed = False
        else:
            passed = False
    if passed:
        targets = [t for _, t in assignment]
        passed = len(set(targets)) == len(targets) and len(assignment) == len(key_set)
    return SelectivityMatrix(
        tuple(k.label for k in key_set),
        tuple(u.id for u in units),
        tuple(rows),
        bool(passed),
        tuple(assignment) if passed else None,
        _total_volume(units),
    )


def fidelity(matrix: SelectivityMatrix) -> float:
    """Worst-key contrast score, geometric-scale invariant.

    score = min over keys of driving_peak(target) * min barrier(non-target),
    divided by total_magnet_volume^(5/3): peaks grow as s^2 and barriers as
    s^3 under scaling by s, so the s^5 numerator is cancelled exactly.
    """
    if not matrix.passed or matrix.assignment is None:
        raise MaglogicError("fidelity is defined only for a passing matrix")
    if matrix.total_magnet_volume is None or matrix.total_magnet_volume <= 0:
        raise ConfigError("candidate magnet volume unknown or zero")
    worst = np.inf
    for key_label, target in matrix.assignment:
        i = matrix.key_labels.index(key_label)
        peak = matrix.cell(key_label, target).driving_peak
        barriers = [
            c.barrier for j, c in enumerate(matrix.cells[i])
            if matrix.unit_ids[j] != target
        ]
        if barriers:
            worst = min(worst, peak * min(barriers))
        else:
            worst = min(worst, peak)
    return float(worst / matrix.total_magnet_volume ** (5.0 / 3.0))


def _body_bounds(center, axis, spec):
    center = np.asarray(center, float)
    if spec.shape == "cylinder":
        r, length = spec.dims
        a = mag.unit(np.asarray(axis, float))
        half = np.abs(a) * (length / 2) + r * np.sqrt(np.maximum(0.0, 1.0 - a**2))
    else:
        half = np.asarray(spec.dims, float) / 2
    return center - half, center + half


def compactness(candidate) -> float:
    """Longest physical bounding-box edge in stator diameters.

    Mover bodies are swept over their full stroke. The divisor is the
    largest stator body dimension, so a lone stator scores exactly 1.
    Items in the iterable may be units or bare ``MagnetSource`` stators.
    """
    units = list(candidate.units) if hasattr(candidate, "units") else list(candidate)
    lo = np.full(3, np.inf)
    hi = np.full(3, -np.inf)
    divisor = 0.0
    n_stators = 0

    def add_stator(s):
        nonlocal divisor, n_stators, lo, hi
        if s.spec is None:
            raise ConfigError("compactness needs stator specs")
        n_stators += 1
        divisor = max(divisor, _spec_longest(s.spec))
        b_lo, b_hi = _body_bounds(s.position, s.moment, s.spec)
        lo, hi = np.minimum(lo, b_lo), np.maximum(hi, b_hi)

    for u in units:
        if isinstance(u, mag.MagnetSource):
            add_stator(u)
            continue
        for s in u.stators:
            add_stator(s)
        for xend in u.track.stroke:
            b_lo, b_hi = _body_bounds(u.track.point(xend), u.track.axis, u.track.mover)
            lo, hi = np.minimum(lo, b_lo), np.maximum(hi, b_hi)
    if n_stators == 0:
        raise ConfigError("compactness needs at least one stator")
    return float((hi - lo).max() / divisor)


def activation_pattern(units, key, n_samples: int = ls.DEFAULT_SAMPLES) -> frozenset:
    units = list(units)
    return frozenset(
        u.id for u in units
        if ls.unit_decision(units, u.id, key, n_samples).snap_through
    )


def control_entropy(units, key_set, n_samples: int = ls.DEFAULT_SAMPLES) -> float:
    """Shannon entropy (bits) of the key -> activation-pattern map."""
    key_set = tuple(key_set)
    if not key_set:
        raise ConfigError("key set is empty")
    patterns = [activation_pattern(units, k, n_samples) for k in key_set]
    counts = {}
    for p in patterns:
        counts[p] = counts.get(p, 0) + 1
    n = len(patterns)
    return float(-sum((c / n) * math.log2(c / n) for c in counts.values()) + 0.0)


# sensitivity


@dataclass(frozen=True)
class SensitivityReport:
    coax_trials: int
    coax_violations: int
    cone_directions: int
    cone_violations: int
    angle_margin_deg: float
    worst_margin: float  # N, smallest non-target margin seen across trials


def cone_directions(axis, half_angle_deg, n_rim: int = 8):
    """Center direction plus n_rim directions on the cone rim."""
    a = mag.unit(np.asarray(axis, float))
    helper = np.array([1.0, 0, 0]) if abs(a[0]) < 0.9 else np.array([0.0, 1.0, 0])
    e1 = mag.unit(np.cross(helper, a))
    e2 = np.cross(a, e1)
    th = np.deg2rad(half_angle_deg)
    dirs = [a]
    for i in range(n_rim):
        ph = 2 * np.pi * i / n_rim
        dirs.append(np.cos(th) * a + np.sin(th) * (np.cos(ph) * e1 + np.sin(ph) * e2))
    return dirs


def _one_hot_ok(units, key, expected: frozenset, n_samples, margins_out=None):
    units = list(units)
    snapped = set()
    for u in units:
        d = ls.unit_decision(units, u.id, key, n_samples)
        if d.snap_through:
            snapped.add(u.id)
        elif u.id not in expected:
            if d.anchoring_force is None or d.anchoring_force <= 0 or d.degenerate:
                return False
            if margins_out is not None:
                margins_out.append(d.anchoring_force)
    return snapped == set(expected)


def _offset_topology(units, rng, radius):
    out = []
    for u in units:
        ax = np.asarray(u.track.axis)
        helper = np.array([1.0, 0, 0]) if abs(ax[0]) < 0.9 else np.array([0.0, 1.0, 0])
        e1 = mag.unit(np.cross(helper, ax))
        e2 = np.cross(ax, e1)
        r = radius * np.sqrt(rng.uniform())
        ph = rng.uniform(0.0, 2 * np.pi)
        off = r * (np.cos(ph) * e1 + np.sin(ph) * e2)
        track = MoverTrack(
            u.track.axis, tuple(np.asarray(u.track.origin) + off), u.track.stroke,
            u.track.mover, u.track.mass, u.track.friction_force,
        )
        out.append(UnitTriplet(u.id, u.stators, track, u.assigned_key))
    return out


def _mover_diameter(spec: MagnetSpec) -> float:
    if spec.shape == "cylinder":
        return 2 * spec.dims[0]
    return max(spec.dims)


def sensitivity_sweep(
    candidate,
    coax_frac: float,
    angle_deg: float,
    n_trials: int,
    seed: int,
    n_samples: int = ls.DEFAULT_SAMPLES,
) -> SensitivityReport:
    """Monte Carlo coaxiality offsets plus a deterministic key-direction cone.

    Violations count every (trial, key) or (key, direction) whose activation
    pattern deviates from nominal or whose non-targets lose their anchoring.
    The angle margin is the largest cone half-angle (up to 85 deg, 0.25 deg
    resolution) at which the full rim grid stays clean.
    """
    if n_trials < 1:
        raise ConfigError("n_trials must be at least 1")
    units = list(candidate.units) if hasattr(candidate, "units") else list(candidate)
    key_set = tuple(candidate.key_set) if hasattr(candidate, "key_set") else ()
    if not key_set:
        raise ConfigError("candidate has no keys")
    expected = {k.label: activation_pattern(units, k, n_samples) for k in key_set}
    margins = []

    radius = coax_frac * max(_mover_diameter(u.track.mover) for u in units)
    rng = np.random.default_rng(seed)
    coax_viol = 0
    for _ in range(n_trials):
        topo = _offset_topology(units, rng, radius) if radius > 0 else units
        for k in key_set:
            if not _one_hot_ok(topo, k, expected[k.label], n_samples, margins):
                coax_viol += 1

    def cone_clean(half_deg):
        for k in key_set:
            for d in cone_directions(k.direction, half_deg):
                tilted = FieldKey(tuple(d), k.magnitude, k.label)
                if not _one_hot_ok(units, tilted, expected[k.label], n_samples):
                    return False
        return True

    cone_viol = 0
    n_dirs = 0
    for k in key_set:
        for d in cone_directions(k.direction, angle_deg):
            n_dirs += 1
            tilted = FieldKey(tuple(d), k.magnitude, k.label)
            if not _one_hot_ok(units, tilted, expected[k.label], n_samples, margins):
                cone_viol += 1

    if cone_viol > 0:
        lo, hi = 0.0, angle_deg
    else:
        lo, hi = angle_deg, None
        probe = max(angle_deg, 1.0)
        while hi is None and probe < _ANGLE_CAP_DEG:
            probe = min(probe * 1.5, _ANGLE_CAP_DEG)
            if cone_clean(probe):
                lo = probe
                if probe >= _ANGLE_CAP_DEG:
                    break
            else:
                hi = probe
    if hi is not None:
        while hi - lo > _ANGLE_RESOLUTION_DEG:
            mid = 0.5 * (lo + hi)
            if cone_clean(mid):
                lo = mid
            else:
                hi = mid
    return SensitivityReport(
        n_trials, coax_viol, n_dirs, cone_viol, float(lo),
        float(min(margins)) if margins else float("nan"),
    )


def cross_interference(candidate, n_samples: int = ls.DEFAULT_SAMPLES) -> float:
    """Max key-induced latch-force change on a non-target / target peak."""
    units = list(candidate.units) if hasattr(candidate, "units") else list(candidate)
    key_set = tuple(candidate.key_set) if hasattr(candidate, "key_set") else ()
    if not key_set:
        raise ConfigError("candidate has no keys")
    base = {
        u.id: ls.unit_decision(units, u.id, None, n_samples).force_at_inner_stop
        for u in units
    }
    worst = 0.0
    for k in key_set:
        decs = {u.id: ls.unit_decision(units, u.id, k, n_samples) for u in units}
        targets = [uid for uid, d in decs.items() if d.snap_through]
        if len(targets) != 1:
            raise MaglogicError(
                f"key {k.label!r} does not address exactly one unit"
            )
        peak = decs[targets[0]].driving_peak
        for uid, d in decs.items():
            if uid == targets[0]:
                continue
            worst = max(worst, abs(d.force_at_inner_stop - base[uid]) / peak)
    return float(worst)


# reporting


@dataclass(frozen=True)
class DesignReport:
    candidate: object
    matrix: SelectivityMatrix
    fidelity: float
    compactness: float
    entropy: float
    candidate_hash: str
    sensitivity: SensitivityReport | None = None


def evaluate_candidate(
    candidate, thresholds=None, n_samples: int = ls.DEFAULT_SAMPLES
) -> DesignReport:
    matrix = selectivity_filter(candidate, thresholds, n_samples)
    units = list(candidate.units) if hasattr(candidate, "units") else list(candidate)
    key_set = tuple(candidate.key_set) if hasattr(candidate, "key_set") else ()
    if matrix.passed:
        fid = fidelity(matrix)
        comp = compactness(units)
        ent = control_entropy(units, key_set, n_samples)
    else:
        fid, comp, ent = 0.0, float("nan"), float("nan")
    chash = (
        candidate.candidate_hash
        if hasattr(candidate, "candidate_hash")
        else topology_hash(units, key_set)
    )
    return DesignReport(candidate, matrix, fid, comp, ent, chash)


DEFAULT_RANK_WEIGHTS = {"fidelity": 1.0}


def rank(reports, weights=None):
    """Passing reports by descending weighted score; ties break by hash."""
    w = dict(DEFAULT_RANK_WEIGHTS)
    if weights:
        w.update(weights)
    passing = [r for r in reports if r.matrix.passed]
    if not passing:
        raise NoPassingCandidateError("no candidate passed the selectivity filter")

    def score(r):
        total = 0.0
        for name, weight in w.items():
            val = getattr(r, name)
            if val == val:  # skip NaN metrics
                total += weight * val
        return total

    return sorted(passing, key=lambda r: (-score(r), r.candidate_hash))


def run_pipeline(
    lattice,
    n_units,
    key_set,
    template,
    budget,
    seed=0,
    thresholds=None,
    threads: int = 1,
    n_samples: int = ls.DEFAULT_SAMPLES,
):
    """enumerate -> filter -> metrics, in deterministic candidate order."""
    candidates = list(
        enumerate_candidates(lattice, n_units, key_set, template, budget, seed)
    )
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(
                pool.map(
                    lambda c: evaluate_candidate(c, thresholds, n_samples), candidates
                )
            )
    else:
        reports = [evaluate_candidate(c, thresholds, n_samples) for c in candidates]
    return reports
