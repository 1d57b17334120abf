"""Tests for the release-node bus: decode, calibration, campaigns.

Frozen oracles, all recomputable by hand from mu0 = 4*pi*1e-7:

* Lateral master for 0.120 T at 5 mm: the equatorial dipole field is
  mu0*m/(4*pi*d^3), so m = d^3 * B / 1e-7 = 0.15 A*m^2, times the
  1e-6 calibration headroom = 0.15000015.  Axial uses the on-axis
  field mu0*2m/(4*pi*d^3), half the moment: 0.075000075.
* Target field therefore lands at 0.120 * (1 + 1e-6) = 0.12000012 T.
* Clopper-Pearson upper bound with zero failures in n trials is
  1 - alpha**(1/n): for n = 5000, alpha = 0.05 -> 5.989670023148763e-4
  and alpha = 0.025 -> 7.375038011081525e-4.  For k > 0 the bound p*
  satisfies the binomial tail identity sum_{i<=k} C(n,i) p*^i
  (1-p*)^(n-i) = alpha, checked directly with math.comb.
* Ejector: quarter-scale demo unit has mover mass 4.5e-4 * 0.25^3 =
  7.03125e-6 kg; a payload at a quarter of that is 1.7578125e-6 kg.
  Ejection speed is scale-invariant (~2 m/s for the mover), and a
  quarter-mass payload takes the same kinetic energy at twice the
  speed: v = 3.9912 m/s.
"""

import math

import numpy as np
import pytest

from maglogic import landscape as ls
from maglogic import netbus as nb
from maglogic import presets as pr
from maglogic.errors import ConfigError, MaglogicError

MU0_OVER_4PI = 1e-7
DEPTH = 0.005
FIELD = 0.120


def three_channel_node(threshold=FIELD, cone=20.0, position=(0.0, 0.0, 0.0)):
    return nb.NodeSpec(
        "n", position,
        (nb.Channel("alpha", (1, 0, 0)),
         nb.Channel("beta", (0, 1, 0)),
         nb.Channel("gamma", (0, 0, 1))),
        threshold, cone,
    )


def test_node_and_master_validation():
    ch = nb.Channel("a", (1, 0, 0))
    with pytest.raises(ConfigError):
        nb.NodeSpec("n", (0, 0), (ch,), 0.1)
    with pytest.raises(ConfigError):
        nb.NodeSpec("n", (0, 0, 0), (), 0.1)
    with pytest.raises(ConfigError):
        nb.NodeSpec("n", (0, 0, 0), (ch, nb.Channel("b", (1, 0, 0))), 0.1)
    with pytest.raises(ConfigError):
        nb.NodeSpec("n", (0, 0, 0), (ch, nb.Channel("a", (0, 1, 0))), 0.1)
    with pytest.raises(ConfigError):
        nb.NodeSpec("n", (0, 0, 0), (ch,), 0.0)
    with pytest.raises(ConfigError):
        nb.NodeSpec("n", (0, 0, 0), (ch,), 0.1, 90.0)
    with pytest.raises(ConfigError):
        nb.MasterPose((0, 0, 0), ())
    with pytest.raises(ConfigError):
        nb.MasterPose((0, 0, 0), (((0, 0, 0), (0, 0, 0)),))
    with pytest.raises(ConfigError):
        nb.Command(nb.MasterPose.single((0, 0, 0), (0, 0, 1)), ("n", "a"), 0.0)


def test_master_field_matches_dipole_closed_forms():
    m = 0.075
    pose = nb.MasterPose.single((0.0, 0.0, 0.0), (0.0, 0.0, m))
    on_axis = nb.master_field_at(pose, (0.0, 0.0, -DEPTH))
    want = MU0_OVER_4PI * 2 * m / DEPTH**3
    assert on_axis == pytest.approx([0.0, 0.0, want], abs=1e-15)
    equatorial = nb.master_field_at(pose, (DEPTH, 0.0, 0.0))
    assert equatorial == pytest.approx([0.0, 0.0, -want / 2], abs=1e-15)
    # inverse-cube law: doubling the stand-off divides the field by 8
    far = nb.master_field_at(pose, (0.0, 0.0, -2 * DEPTH))
    assert np.linalg.norm(on_axis) / np.linalg.norm(far) == pytest.approx(
        8.0, rel=1e-12)


def test_composite_field_is_superposition_of_parts():
    comp = nb.calibrate_master(DEPTH, FIELD, "composite")
    assert len(comp.dipoles) == 2
    point = (0.003, -0.002, -DEPTH)
    total = nb.master_field_at(comp, point)
    parts = sum(
        nb.master_field_at(
            nb.MasterPose.single(np.add(comp.position, off), mom), point)
        for off, mom in comp.dipoles
    )
    assert total == pytest.approx(parts, rel=1e-12)


def test_calibration_closed_forms_and_target_field():
    lat = nb.calibrate_master(DEPTH, FIELD, "lateral")
    (_, m_lat), = lat.dipoles
    assert np.linalg.norm(m_lat) == pytest.approx(0.15000015, rel=1e-12)
    axial = nb.calibrate_master(DEPTH, FIELD, "axial", field_direction=(0, 0, 1))
    (_, m_ax), = axial.dipoles
    assert np.linalg.norm(m_ax) == pytest.approx(0.075000075, rel=1e-12)
    for style in ("lateral", "axial", "composite"):
        pose = nb.calibrate_master(DEPTH, FIELD, style)
        b = nb.master_field_at(pose, np.add(pose.position, (0, 0, -DEPTH)))
        assert np.linalg.norm(b) == pytest.approx(0.12000012, rel=1e-9)
    # the lateral field at the target points along the requested direction
    lat_y = nb.calibrate_master(DEPTH, FIELD, "lateral", field_direction=(0, 1, 0))
    b = nb.master_field_at(lat_y, np.add(lat_y.position, (0, 0, -DEPTH)))
    assert b / np.linalg.norm(b) == pytest.approx([0.0, 1.0, 0.0], abs=1e-12)


def test_calibration_rejects_bad_requests():
    with pytest.raises(ConfigError):
        nb.calibrate_master(0.0, FIELD)
    with pytest.raises(ConfigError):
        nb.calibrate_master(DEPTH, -1.0)
    with pytest.raises(ConfigError):
        nb.calibrate_master(DEPTH, FIELD, "helical")
    with pytest.raises(ConfigError):
        nb.calibrate_master(DEPTH, FIELD, "lateral", field_direction=(0, 0, 1))
    with pytest.raises(ConfigError):
        nb.calibrate_master(DEPTH, FIELD, "axial", field_direction=(1, 0, 0))
    with pytest.raises(ConfigError):
        nb.calibrate_master(DEPTH, FIELD, "composite", separation=0.0)


def test_decode_threshold_and_cone():
    node = three_channel_node()
    assert nb.decode_node(node, (0.119, 0.0, 0.0)) is None
    assert nb.decode_node(node, (0.125, 0.0, 0.0)) == "alpha"
    assert nb.decode_node(node, (0.0, 0.0, 0.125)) == "gamma"
    # 25 degrees off +x is outside every 20-degree cone
    off = 0.125 * np.array([math.cos(math.radians(25)),
                            math.sin(math.radians(25)), 0.0])
    assert nb.decode_node(node, off) is None
    # the cone boundary itself is accepted
    edge = 0.125 * np.array([math.cos(math.radians(20)),
                             math.sin(math.radians(20)), 0.0])
    assert nb.decode_node(node, edge) == "alpha"
    assert nb.decode_node(node, (0.0, 0.0, 0.0)) is None


def test_decode_tie_resolves_to_earliest_channel():
    node = nb.NodeSpec(
        "n", (0, 0, 0),
        (nb.Channel("first", (1, 0, 0)),
         nb.Channel("second", (math.cos(math.radians(30)),
                               math.sin(math.radians(30)), 0.0))),
        0.1, 20.0,
    )
    halfway = 0.2 * np.array([math.cos(math.radians(15)),
                              math.sin(math.radians(15)), 0.0])
    assert nb.decode_node(node, halfway) == "first"


def test_demo_truth_table_is_identity():
    grid = pr.demo_grid()
    commands = pr.demo_bus_commands(grid)
    table = nb.truth_table(grid, commands)
    assert len(table.columns) == 9 and len(table.rows) == 9
    for i, row in enumerate(table.rows):
        assert row[i] == 1 and sum(row) == 1
    assert all(table.exclusive)
    assert table.intended == tuple(c.intended for c in commands)
    assert table.columns == tuple(
        (n.id, c.label) for n in grid for c in n.channels)
    assert table.row_dict(0)[("node0", "alpha")] == 1
    empty = nb.truth_table(grid, [])
    assert empty.rows == () and empty.exclusive == ()


def test_demo_commands_leave_neighbors_far_below_threshold():
    grid = pr.demo_grid()
    worst = 0.0
    for cmd in pr.demo_bus_commands(grid):
        for node in grid:
            if node.id == cmd.intended[0]:
                continue
            b = nb.master_field_at(cmd.pose, node.position)
            worst = max(worst, float(np.linalg.norm(b)))
    # 30 mm pitch leaves ~1 mT at the nearest neighbor
    assert worst < 0.002
    assert worst < 0.75 * FIELD


def test_error_rate_counts_unintended_events():
    grid = pr.demo_grid()
    commands = pr.demo_bus_commands(grid)
    log = []
    t = 0.0
    for cmd in commands:
        log.extend(nb.execute_command(grid, cmd, t))
        t += cmd.dwell
    rate = nb.error_rate(log)
    assert float(rate) == 0.0 and not rate.no_events
    empty = nb.error_rate([])
    assert float(empty) == 0.0 and empty.no_events
    mixed = log[:3] + [nb.Event(9.0, "node0", "beta", 0.13, False)]
    assert float(nb.error_rate(mixed)) == pytest.approx(0.25)


def test_pose_over_translates_reference_master():
    node = three_channel_node(position=(0.03, 0.0, 0.0))
    ref = nb.calibrate_master(DEPTH, FIELD, "lateral")
    pose = nb.pose_over(node, ref, DEPTH)
    assert pose.position == pytest.approx([0.03, 0.0, DEPTH])
    assert pose.dipoles == ref.dipoles
    b = nb.master_field_at(pose, node.position)
    assert np.linalg.norm(b) == pytest.approx(0.12000012, rel=1e-9)


def test_min_spacing_shrinks_with_threshold_and_isolates_neighbors():
    lat = nb.calibrate_master(DEPTH, FIELD, "lateral")
    spacings = [nb.min_spacing(lat, th, (1, 0, 0), DEPTH)
                for th in (0.06, 0.09, 0.12)]
    assert spacings[0] > spacings[1] > spacings[2] > 0
    assert spacings[2] == pytest.approx(3.6712646484375e-3, abs=2e-6)
    # a neighbor placed at the published spacing stays quiet
    s = spacings[2]
    grid = [three_channel_node(), three_channel_node(position=(s, 0.0, 0.0))]
    grid[1] = nb.NodeSpec("far", (s, 0.0, 0.0), grid[1].channels,
                          grid[1].threshold, grid[1].cone_half_angle)
    pose = nb.pose_over(grid[0], lat, DEPTH)
    events = nb.execute_command(grid, nb.Command(pose, ("n", "alpha")))
    assert {e.node_id for e in events} == {"n"}
    # tightening the isolation fraction to 1.0 allows closer packing
    relaxed = nb.min_spacing(lat, 0.12, (1, 0, 0), DEPTH, isolation_frac=1.0)
    assert relaxed < s
    with pytest.raises(MaglogicError):
        nb.min_spacing(lat, 0.15, (1, 0, 0), DEPTH)
    with pytest.raises(ConfigError):
        nb.min_spacing(lat, 0.12, (1, 0, 0), DEPTH, isolation_frac=0.0)


def test_min_spacing_follows_composite_footprint_anisotropy():
    comp = nb.calibrate_master(DEPTH, FIELD, "composite")
    along_split = nb.min_spacing(comp, FIELD, (0, 1, 0), DEPTH)
    across_split = nb.min_spacing(comp, FIELD, (1, 0, 0), DEPTH)
    # the two-lobe master is elongated along its split axis (y), so the
    # field there decays from a wider footprint and needs more room
    assert along_split > across_split


def test_endurance_zero_noise_matches_clopper_pearson():
    grid = pr.demo_grid()
    cmd = pr.demo_bus_commands(grid)[0]
    stats = nb.endurance_campaign(grid, cmd, 5000, None, seed=0)
    assert stats.n_cycles == 5000
    assert stats.false_triggers == 0 and stats.misses == 0
    assert stats.failures == 0
    assert stats.p_upper_one_sided == pytest.approx(
        1 - 0.05 ** (1 / 5000), rel=1e-12)
    assert stats.p_upper_one_sided == pytest.approx(5.989670023148763e-4,
                                                    rel=1e-12)
    assert stats.p_upper_two_sided == pytest.approx(
        1 - 0.025 ** (1 / 5000), rel=1e-12)
    assert stats.p_upper_two_sided == pytest.approx(7.375038011081525e-4,
                                                    rel=1e-12)


def test_endurance_with_angle_noise_is_seeded_and_can_miss():
    grid = pr.demo_grid()
    cmd = pr.demo_bus_commands(grid)[0]
    noisy = nb.endurance_campaign(grid, cmd, 200,
                                  {"angle_sigma_deg": 30.0}, seed=1)
    assert noisy.misses > 0
    assert noisy.failures >= noisy.misses > 0
    assert noisy.p_upper_one_sided > 0.1
    again = nb.endurance_campaign(grid, cmd, 200,
                                  {"angle_sigma_deg": 30.0}, seed=1)
    assert again == noisy
    gentle = nb.endurance_campaign(grid, cmd, 50,
                                   {"angle_sigma_deg": 1e-6}, seed=2)
    assert gentle.failures == 0


def test_endurance_argument_errors():
    grid = pr.demo_grid()
    cmd = pr.demo_bus_commands(grid)[0]
    with pytest.raises(ConfigError):
        nb.endurance_campaign(grid, cmd, 0)
    with pytest.raises(ConfigError):
        nb.endurance_campaign(grid, cmd, 10, {"wobble": 1.0})
    stranger = nb.Command(cmd.pose, ("ghost", "alpha"))
    with pytest.raises(ConfigError):
        nb.endurance_campaign(grid, stranger, 10)


def test_clopper_pearson_upper_bound_binomial_identity():
    for k, n in ((1, 20), (3, 100), (7, 5000)):
        p = nb._cp_upper(k, n, 0.05)
        tail = sum(math.comb(n, i) * p**i * (1 - p) ** (n - i)
                   for i in range(k + 1))
        assert tail == pytest.approx(0.05, abs=1e-9)
    assert nb._cp_upper(5, 5, 0.05) == 1.0
    assert nb._cp_upper(0, 20, 0.05) == pytest.approx(1 - 0.05 ** (1 / 20),
                                                      rel=1e-12)


def test_sealing_check_requires_intended_event_first():
    node = three_channel_node()
    mk = lambda t, ch, ok: nb.Event(t, "n", ch, 0.13, ok)
    assert nb.sealing_check(node, 1.0, [])
    assert nb.sealing_check(node, 1.0, [mk(0.0, "alpha", True),
                                        mk(1.0, "beta", False)])
    assert not nb.sealing_check(node, 1.0, [mk(0.0, "beta", False),
                                            mk(1.0, "alpha", True)])
    other = [nb.Event(0.0, "elsewhere", "beta", 0.13, False),
             mk(1.0, "alpha", True)]
    assert nb.sealing_check(node, 1.0, other)
    with pytest.raises(ConfigError):
        nb.sealing_check(node, -1.0, [])


def test_node_ejector_jet_clears_target_speed():
    topology, keys, payload = pr.node_ejector()
    assert payload == pytest.approx(1.7578125e-6, rel=1e-12)
    profile = ls.sample_profile(topology, "alpha", keys[0])
    v = nb.jet_velocity(profile, payload)
    assert v >= 3.8
    assert v == pytest.approx(3.9911763716, rel=1e-6)
    heavier = nb.jet_velocity(profile, 2 * payload)
    assert v / heavier == pytest.approx(math.sqrt(2), rel=1e-12)
