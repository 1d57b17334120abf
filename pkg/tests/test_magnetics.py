"""Closed-form and finite-difference checks for the dipole core.

Frozen expectations below were computed by hand from the standard dipole
formulas before the implementation existed:

    m           = B_r V / MU0 = 1.2 * pi (2e-3)^2 (4e-3) / (4 pi 1e-7) = 0.048
    B_axial     = MU0 2 m / (4 pi z^3) = 1e-7 * 2 / 1e-3 = 2.0e-4      (m = 1, z = 0.1)
    B_equator   = -MU0 m / (4 pi x^3)  = -1.0e-4
    U_coax      = -MU0 2 m^2 / (4 pi r^3) = -2.0e-7                    (aligned, r = 1)
    F_coax      = 3 MU0 m^2 / (2 pi r^4) = 6.0e-7, attractive
"""

import numpy as np
import pytest

from maglogic import magnetics as mag
from maglogic.errors import ConfigError, SingularConfigError

EX = np.array([1.0, 0.0, 0.0])
EY = np.array([0.0, 1.0, 0.0])
EZ = np.array([0.0, 0.0, 1.0])


def simple_source(position, moment):
    return mag.MagnetSource(np.asarray(position, float), np.asarray(moment, float))


# ---------------------------------------------------------------------------
# moment_from_spec
# ---------------------------------------------------------------------------


def test_moment_cylinder_frozen_value():
    spec = mag.MagnetSpec("cylinder", (2e-3, 4e-3), 1.2, (0, 0, 1))
    m = mag.moment_from_spec(spec)
    assert np.linalg.norm(m) == pytest.approx(0.048, rel=1e-12)
    np.testing.assert_allclose(mag.unit(m), EZ, atol=1e-15)


def test_moment_block_volume():
    spec = mag.MagnetSpec("block", (1e-2, 2e-2, 3e-2), 1.0, (1, 0, 0))
    m = mag.moment_from_spec(spec)
    assert np.linalg.norm(m) == pytest.approx(6e-6 / mag.MU0, rel=1e-12)


def test_moment_scales_with_dims_cubed():
    a = mag.MagnetSpec("cylinder", (1e-3, 2e-3), 1.1, (0, 0, 1))
    b = mag.MagnetSpec("cylinder", (2e-3, 4e-3), 1.1, (0, 0, 1))
    ra = np.linalg.norm(mag.moment_from_spec(a))
    rb = np.linalg.norm(mag.moment_from_spec(b))
    assert rb / ra == pytest.approx(8.0, rel=1e-12)


def test_zero_remanence_rejected():
    with pytest.raises(ConfigError):
        mag.MagnetSpec("cylinder", (1e-3, 1e-3), 0.0, (0, 0, 1))


def test_bad_dims_and_axis_rejected():
    with pytest.raises(ConfigError):
        mag.MagnetSpec("cylinder", (-1e-3, 1e-3), 1.0, (0, 0, 1))
    with pytest.raises(ConfigError):
        mag.MagnetSpec("cylinder", (1e-3, 1e-3), 1.0, (0, 0, 2))
    with pytest.raises(ConfigError):
        mag.MagnetSpec("cone", (1e-3, 1e-3), 1.0, (0, 0, 1))


# ---------------------------------------------------------------------------
# dipole_field_at
# ---------------------------------------------------------------------------


def test_axial_field_frozen_value():
    s = simple_source([0, 0, 0], EZ)
    B = mag.dipole_field_at(s, [0, 0, 0.1])
    np.testing.assert_allclose(B, [0, 0, 2.0e-4], rtol=1e-9, atol=1e-22)


def test_equatorial_field_frozen_value():
    s = simple_source([0, 0, 0], EZ)
    B = mag.dipole_field_at(s, [0.1, 0, 0])
    np.testing.assert_allclose(B, [0, 0, -1.0e-4], rtol=1e-9, atol=1e-22)


def test_field_inverse_cube():
    s = simple_source([0, 0, 0], 3.7 * EZ)
    B1 = mag.dipole_field_at(s, [0, 0, 0.05])
    B2 = mag.dipole_field_at(s, [0, 0, 0.10])
    assert B1[2] / B2[2] == pytest.approx(8.0, rel=1e-12)


def test_field_singularity_raises():
    s = simple_source([0, 0, 0], EZ)
    with pytest.raises(SingularConfigError):
        mag.dipole_field_at(s, [0, 0, 1e-12])


def test_field_batched_matches_scalar():
    rng = np.random.default_rng(42)
    s = simple_source(rng.normal(size=3) * 0.01, rng.normal(size=3))
    pts = rng.normal(size=(7, 3)) * 0.3
    batch = mag.dipole_field(s.dipole_positions(), s.dipole_moments(), pts)
    for i in range(7):
        np.testing.assert_allclose(batch[i], mag.dipole_field_at(s, pts[i]), rtol=1e-13)


# ---------------------------------------------------------------------------
# pair energy / force
# ---------------------------------------------------------------------------


def test_pair_energy_coaxial_frozen_values():
    a = simple_source([0, 0, 0], EZ)
    b = simple_source([0, 0, 1.0], EZ)
    assert mag.pair_energy(a, b) == pytest.approx(-2.0e-7, rel=1e-12)
    b_anti = simple_source([0, 0, 1.0], -EZ)
    assert mag.pair_energy(a, b_anti) == pytest.approx(2.0e-7, rel=1e-12)


def test_pair_energy_symmetric():
    rng = np.random.default_rng(7)
    for _ in range(20):
        a = simple_source(rng.normal(size=3), rng.normal(size=3))
        b = simple_source(rng.normal(size=3) + 5.0, rng.normal(size=3))
        assert mag.pair_energy(a, b) == pytest.approx(mag.pair_energy(b, a), rel=1e-12)


def test_pair_force_coaxial_frozen_value():
    a = simple_source([0, 0, 0], EZ)
    b = simple_source([0, 0, 1.0], EZ)
    F = mag.pair_force(a, b)
    # aligned coaxial dipoles attract: force on b points back toward a
    np.testing.assert_allclose(F, [0, 0, -6.0e-7], rtol=1e-9, atol=1e-25)


def test_pair_force_quartic_falloff():
    a = simple_source([0, 0, 0], EZ)
    near = mag.pair_force(a, simple_source([0, 0, 0.5], EZ))
    far = mag.pair_force(a, simple_source([0, 0, 1.0], EZ))
    assert near[2] / far[2] == pytest.approx(16.0, rel=1e-12)


def test_pair_force_newton_third_law():
    rng = np.random.default_rng(11)
    for _ in range(20):
        a = simple_source(rng.normal(size=3), rng.normal(size=3))
        b = simple_source(rng.normal(size=3) + np.array([3.0, 0, 0]), rng.normal(size=3))
        np.testing.assert_allclose(
            mag.pair_force(a, b), -mag.pair_force(b, a), rtol=1e-12, atol=1e-30
        )


def fd_force_oracle(a, b, h=1e-6):
    """Independent oracle: central difference of pair_energy wrt b's position."""
    F = np.zeros(3)
    for k in range(3):
        dp = np.zeros(3)
        dp[k] = h
        up = mag.pair_energy(a, mag.MagnetSource(b.position + dp, b.moment))
        dn = mag.pair_energy(a, mag.MagnetSource(b.position - dp, b.moment))
        F[k] = -(up - dn) / (2 * h)
    return F


def test_pair_force_matches_fd_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        a = simple_source(rng.normal(size=3) * 0.02, rng.normal(size=3) * 0.05)
        offs = rng.normal(size=3)
        offs = offs / np.linalg.norm(offs) * rng.uniform(0.05, 0.3)
        b = simple_source(a.position + offs, rng.normal(size=3) * 0.05)
        F = mag.pair_force(a, b)
        F_fd = fd_force_oracle(a, b)
        np.testing.assert_allclose(F, F_fd, rtol=1e-6, atol=1e-15)


def test_pair_force_perpendicular_config_fd():
    a = simple_source([0, 0, 0], EX * 0.04)
    b = simple_source([0, 0.08, 0.02], EZ * 0.02)
    np.testing.assert_allclose(mag.pair_force(a, b), fd_force_oracle(a, b), rtol=1e-6)


def test_coincident_sources_raise():
    a = simple_source([0, 0, 0], EZ)
    b = simple_source([0, 0, 1e-10], EZ)
    with pytest.raises(SingularConfigError):
        mag.pair_energy(a, b)
    with pytest.raises(SingularConfigError):
        mag.pair_force(a, b)


# ---------------------------------------------------------------------------
# keys
# ---------------------------------------------------------------------------


def test_key_energy_frozen_value():
    s = simple_source([0, 0, 0], EX)
    key = mag.FieldKey((1, 0, 0), 0.02, "+x")
    assert mag.key_energy(s, key) == pytest.approx(-0.02, rel=1e-12)


def test_key_energy_translation_invariant():
    # uniform field: energy independent of position => zero net force
    key = mag.FieldKey((0, 0, 1), 0.05)
    for shift in ([0, 0, 0], [1, 2, 3], [-0.4, 0.1, 9.0]):
        s = simple_source(shift, 2.0 * EX + EZ)
        assert mag.key_energy(s, key) == pytest.approx(-0.05, rel=1e-12)


def test_key_torque_frozen_value():
    s = simple_source([0, 0, 0], EX)
    key = mag.FieldKey((0, 1, 0), 0.02)
    np.testing.assert_allclose(mag.key_torque(s, key), [0, 0, 0.02], atol=1e-18)


def test_key_torque_zero_when_aligned():
    s = simple_source([0, 0, 0], 3.3 * EZ)
    key = mag.FieldKey((0, 0, 1), 0.1)
    np.testing.assert_allclose(mag.key_torque(s, key), [0, 0, 0], atol=1e-18)


def test_key_validation():
    with pytest.raises(ConfigError):
        mag.FieldKey((1, 1, 0), 0.02)
    with pytest.raises(ConfigError):
        mag.FieldKey((1, 0, 0), -0.01)


# ---------------------------------------------------------------------------
# assembly energy
# ---------------------------------------------------------------------------


def test_assembly_single_source_is_key_energy():
    s = simple_source([1, 2, 3], EY)
    key = mag.FieldKey((0, 1, 0), 0.03)
    assert mag.assembly_energy([s], key) == pytest.approx(mag.key_energy(s, key))


def test_assembly_two_sources_no_key_is_pair_energy():
    a = simple_source([0, 0, 0], EZ)
    b = simple_source([0, 0, 1.0], EZ)
    assert mag.assembly_energy([a, b]) == pytest.approx(mag.pair_energy(a, b), rel=1e-12)


def brute_assembly_oracle(sources, key):
    """Independent re-derivation with explicit loops over the dipole formula."""
    total = 0.0
    n = len(sources)
    for i in range(n):
        for j in range(n):
            if j <= i:
                continue
            r = sources[j].position - sources[i].position
            d = np.linalg.norm(r)
            rhat = r / d
            mi, mj = sources[i].moment, sources[j].moment
            total += mag.MU0 / (4 * np.pi * d**3) * (mi @ mj - 3 * (mi @ rhat) * (mj @ rhat))
    if key is not None:
        for s in sources:
            total += -s.moment @ key.vector
    return total


def test_assembly_three_sources_vs_oracle():
    rng = np.random.default_rng(5)
    srcs = [
        simple_source(rng.normal(size=3) * 0.1 + np.array([i, 0, 0]), rng.normal(size=3))
        for i in range(3)
    ]
    key = mag.FieldKey((0, 0, 1), 0.02)
    assert mag.assembly_energy(srcs, key) == pytest.approx(
        brute_assembly_oracle(srcs, key), rel=1e-12
    )


def test_assembly_rotational_covariance():
    # rotating every position, moment and the key leaves the energy unchanged
    rng = np.random.default_rng(31)
    srcs = [simple_source(rng.normal(size=3), rng.normal(size=3)) for _ in range(4)]
    key = mag.FieldKey(tuple(mag.unit(rng.normal(size=3))), 0.04)
    # random rotation via QR
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(Q) < 0:
        Q[:, 0] *= -1
    rot_srcs = [simple_source(Q @ s.position, Q @ s.moment) for s in srcs]
    rot_key = mag.FieldKey(tuple(Q @ np.asarray(key.direction)), key.magnitude)
    assert mag.assembly_energy(rot_srcs, rot_key) == pytest.approx(
        mag.assembly_energy(srcs, key), rel=1e-12
    )


def test_scale_covariance_energy_and_force():
    # positions x s and dims x s: energies scale s^3, forces s^2
    rng = np.random.default_rng(77)
    spec = mag.MagnetSpec("cylinder", (2e-3, 4e-3), 1.2, (0, 0, 1))
    pa, pb = np.array([0, 0, 0.0]), np.array([0.02, 0.01, 0.015])
    axa, axb = mag.unit(rng.normal(size=3)), mag.unit(rng.normal(size=3))
    for s in (0.5, 2.0, 3.4):
        spec_s = mag.MagnetSpec(
            "cylinder", (spec.dims[0] * s, spec.dims[1] * s), 1.2, (0, 0, 1)
        )
        a1 = mag.source_from_spec(spec, pa, axa)
        b1 = mag.source_from_spec(spec, pb, axb)
        a2 = mag.source_from_spec(spec_s, pa * s, axa)
        b2 = mag.source_from_spec(spec_s, pb * s, axb)
        assert mag.pair_energy(a2, b2) == pytest.approx(
            s**3 * mag.pair_energy(a1, b1), rel=1e-9
        )
        np.testing.assert_allclose(
            mag.pair_force(a2, b2), s**2 * mag.pair_force(a1, b1), rtol=1e-9
        )


# ---------------------------------------------------------------------------
# discretization
# ---------------------------------------------------------------------------


def test_subdipole_moments_sum_to_total():
    spec = mag.MagnetSpec("cylinder", (2e-3, 4e-3), 1.2, (0, 0, 1))
    src = mag.source_from_spec(spec, [0, 0, 0], discretize=4)
    total = src.dipole_moments().sum(axis=0)
    np.testing.assert_allclose(total, src.moment, rtol=1e-9)
    assert len(src.dipole_positions()) > 1


def test_subdipole_offsets_inside_envelope():
    spec = mag.MagnetSpec("cylinder", (2e-3, 4e-3), 1.2, (1, 0, 0))
    src = mag.source_from_spec(spec, [0.01, 0, 0], discretize=5)
    offs = src.dipole_positions() - src.position
    # local axis is +x here: radial distance perpendicular to the axis
    axial = offs @ np.array([1.0, 0, 0])
    radial = np.linalg.norm(offs - axial[:, None] * np.array([1.0, 0, 0]), axis=1)
    assert np.all(np.abs(axial) <= 2e-3 + 1e-12)
    assert np.all(radial <= 2e-3 + 1e-12)


def test_discretized_far_field_matches_point_dipole():
    spec = mag.MagnetSpec("cylinder", (2e-3, 4e-3), 1.2, (0, 0, 1))
    point = mag.source_from_spec(spec, [0, 0, 0], discretize=1)
    fine = mag.source_from_spec(spec, [0, 0, 0], discretize=4)
    far = [0.0, 0.0, 0.5]
    np.testing.assert_allclose(
        mag.dipole_field_at(fine, far), mag.dipole_field_at(point, far),
        rtol=1e-4, atol=1e-20,
    )


def test_discretized_near_field_differs():
    spec = mag.MagnetSpec("cylinder", (2e-3, 4e-3), 1.2, (0, 0, 1))
    point = mag.source_from_spec(spec, [0, 0, 0], discretize=1)
    fine = mag.source_from_spec(spec, [0, 0, 0], discretize=4)
    near = [0.0, 0.0, 3e-3]
    Bp = mag.dipole_field_at(point, near)
    Bf = mag.dipole_field_at(fine, near)
    assert abs(Bf[2] - Bp[2]) / abs(Bp[2]) > 1e-3
