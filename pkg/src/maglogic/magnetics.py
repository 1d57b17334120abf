"""Point-dipole magnetostatics for permanent-magnet assemblies.

All quantities are SI: meters, tesla, A*m^2, joules, newtons, N*m.
Every magnet is represented by one point dipole at its center by default;
an opt-in grid discretization refines near-field behavior without changing
the public interface.

Conventions
-----------
* ``B(r) = MU0/(4 pi) * (3 (m.rhat) rhat - m) / |r|^3``
* pair energy   ``U = MU0/(4 pi r^3) * (ma.mb - 3 (ma.rhat)(mb.rhat))``
* force on b    ``F = 3 MU0/(4 pi r^4) * ((ma.rhat) mb + (mb.rhat) ma
  + (ma.mb) rhat - 5 (ma.rhat)(mb.rhat) rhat)`` with ``r = pb - pa``
* a spatially uniform field key exerts zero net force on any source and the
  torque ``m x B``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, SingularConfigError

MU0 = 4.0 * np.pi * 1e-7  # vacuum permeability, T*m/A (exact in SI-1948 units)
COINCIDENCE_EPS = 1e-9  # meters; closer than this counts as "same point"

_UNIT_TOL = 1e-9


def unit(v: np.ndarray) -> np.ndarray:
    """Return v/|v|, raising on (near-)zero input."""
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n < 1e-300:
        raise ConfigError("cannot normalize a zero vector")
    return v / n


def _as_vec3(v, name: str = "vector") -> np.ndarray:
    a = np.asarray(v, dtype=float)
    if a.shape != (3,):
        raise ConfigError(f"{name} must have shape (3,), got {a.shape}")
    return a


@dataclass(frozen=True)
class MagnetSpec:
    """Geometric and material description of one hard magnet.

    Parameters
    ----------
    shape : str
        ``"cylinder"`` (dims = (radius, length)) or ``"block"``
        (dims = (lx, ly, lz)).
    dims : tuple of float
        Dimensions in meters, all strictly positive.
    remanence : float
        Remanent flux density B_r in tesla, strictly positive.
    easy_axis : tuple of float
        Unit magnetization direction in the world frame.
    """

    shape: str
    dims: tuple
    remanence: float
    easy_axis: tuple

    def __post_init__(self):
        if self.shape not in ("cylinder", "block"):
            raise ConfigError(f"unknown magnet shape {self.shape!r}")
        ndims = 2 if self.shape == "cylinder" else 3
        dims = tuple(float(d) for d in self.dims)
        if len(dims) != ndims:
            raise ConfigError(f"{self.shape} needs {ndims} dims, got {len(dims)}")
        if any(d <= 0.0 for d in dims):
            raise ConfigError("magnet dimensions must be positive")
        if self.remanence <= 0.0:
            raise ConfigError("remanence must be positive (degenerate magnet)")
        axis = np.asarray(self.easy_axis, dtype=float)
        if axis.shape != (3,) or abs(np.linalg.norm(axis) - 1.0) > _UNIT_TOL:
            raise ConfigError("easy_axis must be a unit 3-vector")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "easy_axis", tuple(float(c) for c in axis))


def volume(spec: MagnetSpec) -> float:
    """Magnet volume in m^3."""
    if spec.shape == "cylinder":
        r, length = spec.dims
        return np.pi * r * r * length
    lx, ly, lz = spec.dims
    return lx * ly * lz


def moment_from_spec(spec: MagnetSpec) -> np.ndarray:
    """Dipole moment vector ``B_r * V / MU0 * easy_axis`` in A*m^2."""
    m = spec.remanence * volume(spec) / MU0
    return m * np.asarray(spec.easy_axis, dtype=float)


def _basis_from_axis(axis: np.ndarray) -> np.ndarray:
    """Right-handed orthonormal basis (e1, e2, axis), deterministic."""
    a = unit(axis)
    helper = np.array([1.0, 0.0, 0.0])
    if abs(a[0]) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    e1 = unit(np.cross(helper, a))
    e2 = np.cross(a, e1)
    return np.stack([e1, e2, a])


@dataclass(frozen=True, eq=False)
class MagnetSource:
    """A magnet placed in the world: position, net moment, optional sub-dipoles.

    ``subdipoles`` is a tuple of (offset_vector, fraction) pairs in the world
    frame; fractions sum to 1 and offsets stay inside the magnet envelope.
    ``None`` means a single point dipole at ``position``.
    """

    position: np.ndarray
    moment: np.ndarray
    spec: MagnetSpec | None = None
    subdipoles: tuple | None = None

    def __post_init__(self):
        object.__setattr__(self, "position", _as_vec3(self.position, "position"))
        object.__setattr__(self, "moment", _as_vec3(self.moment, "moment"))

    def dipole_positions(self) -> np.ndarray:
        if self.subdipoles is None:
            return self.position[None, :]
        return self.position[None, :] + np.array([o for o, _ in self.subdipoles])

    def dipole_moments(self) -> np.ndarray:
        if self.subdipoles is None:
            return self.moment[None, :]
        fr = np.array([f for _, f in self.subdipoles])
        return fr[:, None] * self.moment[None, :]

    def __eq__(self, other):
        if not isinstance(other, MagnetSource):
            return NotImplemented
        return (
            np.array_equal(self.position, other.position)
            and np.array_equal(self.moment, other.moment)
            and self.spec == other.spec
            and _subdipoles_equal(self.subdipoles, other.subdipoles)
        )


def _subdipoles_equal(a, b) -> bool:
    if a is None or b is None:
        return a is b
    if len(a) != len(b):
        return False
    return all(
        np.array_equal(oa, ob) and fa == fb for (oa, fa), (ob, fb) in zip(a, b)
    )


def _cylinder_offsets(spec: MagnetSpec, n: int) -> np.ndarray:
    r, length = spec.dims
    # n^3 grid over the bounding box, keep cell centers inside the cylinder
    xs = (np.arange(n) + 0.5) / n
    gx, gy, gz = np.meshgrid(
        (xs - 0.5) * 2 * r, (xs - 0.5) * 2 * r, (xs - 0.5) * length, indexing="ij"
    )
    pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    keep = pts[:, 0] ** 2 + pts[:, 1] ** 2 <= r * r
    return pts[keep]


def _block_offsets(spec: MagnetSpec, n: int) -> np.ndarray:
    lx, ly, lz = spec.dims
    xs = (np.arange(n) + 0.5) / n - 0.5
    gx, gy, gz = np.meshgrid(xs * lx, xs * ly, xs * lz, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)


def source_from_spec(
    spec: MagnetSpec,
    position,
    axis=None,
    discretize: int = 1,
) -> MagnetSource:
    """Place a magnet in the world.

    Parameters
    ----------
    spec : MagnetSpec
    position : array_like, shape (3,)
        Center of the magnet, meters.
    axis : array_like, optional
        World direction for the moment; defaults to ``spec.easy_axis``.
        The magnitude |m| always comes from the spec.
    discretize : int
        1 = single point dipole (default). n > 1 = n^3 grid of sub-dipoles
        (cells outside a cylindrical envelope are dropped); moments sum to
        the net moment exactly.
    """
    position = _as_vec3(position, "position")
    m_mag = np.linalg.norm(moment_from_spec(spec))
    direction = unit(axis) if axis is not None else unit(np.asarray(spec.easy_axis))
    moment = m_mag * direction
    if discretize <= 1:
        return MagnetSource(position, moment, spec=spec)
    # magnet-frame offsets with the local z along the moment direction
    local = (
        _cylinder_offsets(spec, discretize)
        if spec.shape == "cylinder"
        else _block_offsets(spec, discretize)
    )
    basis = _basis_from_axis(direction)  # rows e1, e2, axis
    world = local @ basis
    k = len(world)
    fr = np.full(k, 1.0 / k)
    fr[-1] = 1.0 - fr[:-1].sum()  # exact unity
    subs = tuple((world[i].copy(), float(fr[i])) for i in range(k))
    return MagnetSource(position, moment, spec=spec, subdipoles=subs)


@dataclass(frozen=True)
class FieldKey:
    """A spatially uniform broadcast field: direction (unit), magnitude (T)."""

    direction: tuple
    magnitude: float
    label: str = ""

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        if d.shape != (3,) or abs(np.linalg.norm(d) - 1.0) > _UNIT_TOL:
            raise ConfigError("key direction must be a unit 3-vector")
        if self.magnitude < 0.0:
            raise ConfigError("key magnitude must be non-negative")
        object.__setattr__(self, "direction", tuple(float(c) for c in d))

    @property
    def vector(self) -> np.ndarray:
        return self.magnitude * np.asarray(self.direction)


# ---------------------------------------------------------------------------
# vectorized primitives (broadcast over field points)
# ---------------------------------------------------------------------------


def dipole_field(src_pos: np.ndarray, src_m: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Field of point dipoles summed at ``points``.

    src_pos, src_m : (k, 3); points : (..., 3). Returns (..., 3) tesla.
    """
    pts = np.asarray(points, dtype=float)
    squeeze = pts.ndim == 1
    pts = np.atleast_2d(pts)
    r = pts[:, None, :] - src_pos[None, :, :]  # (N, k, 3)
    d2 = np.einsum("nkc,nkc->nk", r, r)
    d = np.sqrt(d2)
    if np.any(d < COINCIDENCE_EPS):
        raise SingularConfigError("field point coincides with a dipole")
    mdotr = np.einsum("kc,nkc->nk", src_m, r)
    coef = MU0 / (4.0 * np.pi)
    B = coef * (3.0 * mdotr / d2)[:, :, None] * r / d[:, :, None] ** 3
    B -= coef * src_m[None, :, :] / d[:, :, None] ** 3
    out = B.sum(axis=1)
    return out[0] if squeeze else out


def dipole_pair_force(pa, ma, pb, mb) -> np.ndarray:
    """Force on dipole(s) b due to dipole a. pb, mb may be (N, 3)."""
    pa = np.asarray(pa, dtype=float)
    ma = np.asarray(ma, dtype=float)
    pb = np.asarray(pb, dtype=float)
    mb = np.asarray(mb, dtype=float)
    squeeze = pb.ndim == 1
    pb = np.atleast_2d(pb)
    mb = np.atleast_2d(mb) if mb.ndim == 1 else mb
    if mb.shape[0] == 1 and pb.shape[0] > 1:
        mb = np.broadcast_to(mb, pb.shape)
    r = pb - pa[None, :]
    d = np.linalg.norm(r, axis=1)
    if np.any(d < COINCIDENCE_EPS):
        raise SingularConfigError("coincident dipoles have no defined pair force")
    rhat = r / d[:, None]
    mar = rhat @ ma
    mbr = np.einsum("nc,nc->n", mb, rhat)
    mamb = mb @ ma
    coef = 3.0 * MU0 / (4.0 * np.pi * d**4)
    F = coef[:, None] * (
        mar[:, None] * mb
        + mbr[:, None] * ma[None, :]
        + (mamb - 5.0 * mar * mbr)[:, None] * rhat
    )
    return F[0] if squeeze else F


def dipole_forces(src_pos, src_m, points, moments) -> np.ndarray:
    """Net force on test dipoles (points[i], moments[i]) from fixed dipoles.

    src_pos, src_m : (K, 3); points, moments : (N, 3). Returns (N, 3) newtons.
    """
    pts = np.asarray(points, dtype=float)
    mts = np.asarray(moments, dtype=float)
    r = pts[:, None, :] - src_pos[None, :, :]  # (N, K, 3)
    d = np.linalg.norm(r, axis=2)
    if np.any(d < COINCIDENCE_EPS):
        raise SingularConfigError("test dipole coincides with a source")
    rhat = r / d[:, :, None]
    mar = np.einsum("kc,nkc->nk", src_m, rhat)
    mbr = np.einsum("nc,nkc->nk", mts, rhat)
    mamb = mts @ src_m.T  # (N, K)
    coef = 3.0 * MU0 / (4.0 * np.pi * d**4)
    F = coef[:, :, None] * (
        mar[:, :, None] * mts[:, None, :]
        + mbr[:, :, None] * src_m[None, :, :]
        + (mamb - 5.0 * mar * mbr)[:, :, None] * rhat
    )
    return F.sum(axis=1)


def _pair_terms(a: MagnetSource, b: MagnetSource):
    pa, ma = a.dipole_positions(), a.dipole_moments()
    pb, mb = b.dipole_positions(), b.dipole_moments()
    r = pb[:, None, :] - pa[None, :, :]  # (kb, ka, 3)
    d = np.linalg.norm(r, axis=2)
    if np.any(d < COINCIDENCE_EPS):
        raise SingularConfigError("sources coincide")
    return pa, ma, pb, mb, r, d


def pair_energy(a: MagnetSource, b: MagnetSource) -> float:
    """Mutual magnetostatic energy of two sources, joules."""
    pa, ma, pb, mb, r, d = _pair_terms(a, b)
    rhat = r / d[:, :, None]
    mar = np.einsum("ac,bac->ba", ma, rhat)
    mbr = np.einsum("bc,bac->ba", mb, rhat)
    mamb = mb @ ma.T  # (kb, ka)
    U = MU0 / (4.0 * np.pi * d**3) * (mamb - 3.0 * mbr * mar)
    return float(U.sum())


def pair_force(a: MagnetSource, b: MagnetSource) -> np.ndarray:
    """Net force on source b due to source a, newtons."""
    pa, ma, pb, mb, r, d = _pair_terms(a, b)
    rhat = r / d[:, :, None]
    mar = np.einsum("ac,bac->ba", ma, rhat)
    mbr = np.einsum("bc,bac->ba", mb, rhat)
    mamb = mb @ ma.T
    coef = 3.0 * MU0 / (4.0 * np.pi * d**4)
    F = coef[:, :, None] * (
        mar[:, :, None] * mb[:, None, :]
        + mbr[:, :, None] * ma[None, :, :]
        + (mamb - 5.0 * mar * mbr)[:, :, None] * rhat
    )
    return F.sum(axis=(0, 1))


def dipole_field_at(source: MagnetSource, point) -> np.ndarray:
    """Field of one source at one point, tesla."""
    return dipole_field(
        source.dipole_positions(), source.dipole_moments(), _as_vec3(point, "point")
    )


def field_of_sources(sources, points, key: FieldKey | None = None) -> np.ndarray:
    """Total field of many sources (plus an optional uniform key) at points."""
    pts = np.asarray(points, dtype=float)
    out = np.zeros_like(np.atleast_2d(pts), dtype=float)
    for s in sources:
        out = out + dipole_field(s.dipole_positions(), s.dipole_moments(), np.atleast_2d(pts))
    if key is not None:
        out = out + key.vector[None, :]
    return out[0] if pts.ndim == 1 else out


def key_energy(source: MagnetSource, key: FieldKey) -> float:
    """Zeeman energy ``-m . B_key`` (the key is uniform, so no net force)."""
    return float(-source.moment @ key.vector)


def key_torque(source: MagnetSource, key: FieldKey) -> np.ndarray:
    """Torque ``m x B_key`` on a source, N*m."""
    return np.cross(source.moment, key.vector)


def assembly_energy(sources, key: FieldKey | None = None) -> float:
    """Total interaction energy: all unordered pairs plus key terms."""
    total = 0.0
    n = len(sources)
    for i in range(n):
        for j in range(i + 1, n):
            total += pair_energy(sources[i], sources[j])
    if key is not None:
        for s in sources:
            total += key_energy(s, key)
    return total
