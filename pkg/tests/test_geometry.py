"""Tests for the parametric motor cross-section."""
import numpy as np
import pytest

from splinemotor.geometry import (DesignVector, GeometryError, MachineConstants,
                                  N_VARIABLES, VARIABLE_NAMES, build_geometry,
                                  default_bounds, feasibility, initial_design)

MM = 1e-3


@pytest.fixture(scope="module")
def constants():
    return MachineConstants()


@pytest.fixture(scope="module")
def initial(constants):
    return build_geometry(initial_design(), constants)


def loop_area(edges, n: int = 2000) -> float:
    """Independent area oracle: shoelace rule over densely sampled boundary.

    `edges` is a list of (curve, forward) pairs tracing the boundary CCW.
    """
    pts = []
    ts = np.linspace(0.0, 1.0, n)
    for curve, forward in edges:
        p, _ = curve.eval_many(ts if forward else ts[::-1], n_ders=0)
        pts.append(p[:-1])
    poly = np.vstack(pts)
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


# ---- construction ------------------------------------------------------

def test_patch_count_and_validation(initial):
    report = initial.validate()
    assert report["n_patches"] == 92
    assert report["min_jacobian"] > 0
    assert report["max_interface_gap"] < 1e-12


def test_patch_names_unique_and_tagged(initial):
    mats = {p.material for p in initial.patches}
    assert mats == {"iron", "air", "copper", "magnet"}
    assert sum(p.material == "magnet" for p in initial.patches) == 1
    assert sum(p.material == "copper" for p in initial.patches) == 6
    regions = {p.region for p in initial.patches}
    assert regions == {"rotor", "stator"}


def test_control_point_count_reasonable(initial):
    n = initial.control_point_count()
    assert 300 < n < 1200


def test_slot_phases_follow_pattern(initial, constants):
    slots = sorted((p.slot, p.phase) for p in initial.patches
                   if p.material == "copper")
    expect = [(k, ph) for k, ph in enumerate(constants.phase_layout())]
    assert slots == expect
    assert expect[0][1] == (0, 1.0)
    assert expect[2][1] == (1, -1.0)
    assert expect[4][1] == (2, 1.0)


def test_coupling_edges_ordered_and_on_circle(initial, constants):
    for group, count in ((initial.coupling_rotor, 5),
                         (initial.coupling_stator, 18)):
        assert len(group) == count
        start_angles = []
        for ref in group:
            curve = initial.edge_curve(ref)
            pts, _ = curve.eval_many(np.linspace(0, 1, 9), n_ders=0)
            radii = np.hypot(pts[:, 0], pts[:, 1])
            assert np.allclose(radii, constants.coupling_radius, atol=1e-12)
            start_angles.append(np.arctan2(pts[0, 1], pts[0, 0]))
        assert np.all(np.diff(start_angles) > 0)


def test_antiperiodic_pair_maps_under_sector_rotation(initial, constants):
    a = constants.sector_angle
    rot = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    cut_pairs = [itf for itf in initial.interfaces if itf.sign < 0]
    assert len(cut_pairs) == 8  # 4 rotor rows + 4 stator rows
    ts = np.linspace(0, 1, 11)
    for itf in cut_pairs:
        pa, _ = initial.patches[itf.a].edge_curve(itf.edge_a).eval_many(ts, 0)
        pb, _ = initial.patches[itf.b].edge_curve(itf.edge_b).eval_many(ts, 0)
        assert np.allclose(pa @ rot.T, pb, atol=1e-12)


# ---- measure -----------------------------------------------------------

def test_total_area_matches_annulus(initial, constants):
    total = sum(initial.patch_area(i) for i in range(len(initial)))
    expect = 0.5 * constants.sector_angle * (
        constants.stator_outer_radius ** 2 - constants.shaft_radius ** 2)
    assert total == pytest.approx(expect, rel=1e-10)


def test_magnet_area_exact(initial):
    d = initial.design
    areas = initial.area_by_material()
    assert areas["magnet"] == pytest.approx(d.MW * d.MH, rel=1e-12)


def test_pocket_patches_are_exact_rectangles(initial, constants):
    d = initial.design
    for name in ("rotor_cavity1", "rotor_cavity3"):
        i = initial.index(name)
        assert initial.patches[i].material == "air"
        area = initial.patch_area(i)
        assert area == pytest.approx(constants.pocket_width * d.MH, rel=1e-12)


def test_gap_layer_areas(initial, constants):
    rotor_gap = sum(initial.patch_area(initial.index(f"rotor_gap{c}"))
                    for c in range(5))
    expect = 0.5 * constants.sector_angle * (
        constants.coupling_radius ** 2 - constants.rotor_outer_radius ** 2)
    assert rotor_gap == pytest.approx(expect, rel=1e-10)
    stator_gap = sum(initial.patch_area(initial.index(f"stator{k}_air_{c}"))
                     for k in range(6) for c in ("tL", "mid", "tR"))
    expect = 0.5 * constants.sector_angle * (
        constants.stator_inner_radius ** 2 - constants.coupling_radius ** 2)
    assert stator_gap == pytest.approx(expect, rel=1e-10)


def test_slot_areas_equal_and_match_boundary_integral(initial):
    areas = initial.slot_areas()
    assert sorted(areas) == list(range(6))
    vals = np.array([areas[k] for k in range(6)])
    assert np.allclose(vals, vals[0], rtol=1e-12)

    patch = initial.patch("stator2_body_mid")
    edges = [(patch.edge_curve("start"), True),
             (patch.edge_curve("outer"), True),
             (patch.edge_curve("end"), False),
             (patch.edge_curve("inner"), False)]
    oracle = loop_area(edges)
    assert areas[2] == pytest.approx(oracle, rel=1e-5)


def test_magnet_corners(initial, constants):
    d, p = initial.design, constants
    surf = initial.patch("rotor_cavity2").surface
    y_t = p.rotor_outer_radius - d.MAG
    y_b = y_t - d.MH
    c = p.pole_center - 0.5 * np.pi
    rot = np.array([[np.cos(c), -np.sin(c)], [np.sin(c), np.cos(c)]])
    # u = 0 is the cavity bottom, v runs toward larger machine angle
    # (pole-local x decreasing)
    expect = {(0.0, 0.0): (+0.5 * d.MW, y_b), (1.0, 0.0): (+0.5 * d.MW, y_t),
              (0.0, 1.0): (-0.5 * d.MW, y_b), (1.0, 1.0): (-0.5 * d.MW, y_t)}
    for (u, v), local in expect.items():
        assert np.allclose(surf.eval(u, v), rot @ np.array(local), atol=1e-12)


# ---- symmetry and deformation ------------------------------------------

def test_mirror_symmetry_for_palindromic_offsets(constants):
    design = initial_design().replace(
        rotor_offsets=np.array([0.2, -0.1, 0.15, -0.1, 0.2]) * MM,
        stator_offsets=np.array([-0.1, 0.2, 0.05, 0.2, -0.1]) * MM)
    pw = build_geometry(design, constants)
    alpha = constants.pole_center
    refl = np.array([[np.cos(2 * alpha), np.sin(2 * alpha)],
                     [np.sin(2 * alpha), -np.cos(2 * alpha)]])
    us = np.array([0.15, 0.5, 0.85, 0.3])
    vs = np.array([0.2, 0.7, 0.45, 0.9])
    pairs = [("rotor_gap0", "rotor_gap4"), ("rotor_cap1", "rotor_cap3"),
             ("rotor_cavity2", "rotor_cavity2"),
             ("stator0_air_tL", "stator5_air_tR"),
             ("stator1_body_mid", "stator4_body_mid"),
             ("stator2_tip_tR", "stator3_tip_tL")]
    for name_a, name_b in pairs:
        sa = pw.patch(name_a).surface
        sb = pw.patch(name_b).surface
        pa, _ = sa.eval_many(us, vs)
        pb, _ = sb.eval_many(us, 1.0 - vs)
        assert np.allclose(pa @ refl.T, pb, atol=1e-12), (name_a, name_b)


def test_offsets_move_only_gap_surfaces(constants):
    base = build_geometry(initial_design(), constants)
    moved = build_geometry(initial_design().replace(
        rotor_offsets=np.array([0, 0, 0.25, 0, 0]) * MM,
        stator_offsets=np.array([0, -0.2, 0, 0, 0]) * MM), constants)
    same = ["rotor_hub2", "rotor_cavity2", "stator1_body_mid", "stator1_yoke_tL"]
    for name in same:
        assert np.allclose(base.patch(name).surface.ctrl,
                           moved.patch(name).surface.ctrl, atol=1e-15)
    # rotor pole face bulges outward mid-arc
    c_base = base.edge_curve(base.rotor_surface[2])
    c_moved = moved.edge_curve(moved.rotor_surface[2])
    r0 = np.hypot(*c_base.eval(0.5))
    r1 = np.hypot(*c_moved.eval(0.5))
    assert r1 > r0
    assert r1 - r0 == pytest.approx(0.25 * MM * c_moved.weights[1]
                                    * 0.5 / (0.5 + 0.5 * c_moved.weights[1]),
                                    rel=1e-3)
    # stator bore corner at the second tooth axis moves exactly inward
    bore = moved.edge_curve(moved.stator_bore[3 * 2 + 0])
    assert np.hypot(*bore.eval(0.0)) == pytest.approx(
        constants.stator_inner_radius - 0.2 * MM, abs=1e-15)


def test_rotated_patchwork_still_valid(initial):
    rotated = initial.rotated(np.deg2rad(7.0))
    report = rotated.validate()
    assert report["min_jacobian"] > 0


def test_zero_offset_surfaces_are_exact_circles(initial, constants):
    ts = np.linspace(0, 1, 17)
    for ref in initial.rotor_surface:
        pts, _ = initial.edge_curve(ref).eval_many(ts, 0)
        assert np.allclose(np.hypot(pts[:, 0], pts[:, 1]),
                           constants.rotor_outer_radius, atol=1e-12)
    for ref in initial.stator_bore:
        pts, _ = initial.edge_curve(ref).eval_many(ts, 0)
        assert np.allclose(np.hypot(pts[:, 0], pts[:, 1]),
                           constants.stator_inner_radius, atol=1e-12)


# ---- invalid designs ---------------------------------------------------

@pytest.mark.parametrize("changes,fragment", [
    ({"MAG": 6 * MM, "MH": 25 * MM}, "shaft"),
    ({"MAG": 6 * MM, "MW": 40 * MM}, "surface"),
    ({"SW4": 12 * MM}, "pinches"),
    ({"SD1": 90 * MM}, "slot bottom"),
    ({"SW3": 16 * MM, "SW2": 17 * MM, "SW1": 18 * MM}, "pinches"),
])
def test_invalid_designs_raise(constants, changes, fragment):
    design = initial_design().replace(**changes)
    with pytest.raises(GeometryError, match=fragment):
        build_geometry(design, constants)


# ---- design vector -----------------------------------------------------

def test_design_vector_roundtrip():
    d = initial_design()
    x = d.as_array()
    assert x.shape == (N_VARIABLES,)
    assert DesignVector.from_array(x).as_array() == pytest.approx(x)
    d2 = d.with_variable(VARIABLE_NAMES.index("MW"), 0.02)
    assert d2.MW == 0.02 and d.MW != 0.02

    disp = d.to_display_dict()
    assert disp["L"] == pytest.approx(100.0)
    assert disp["kR"] == pytest.approx(1.0)
    back = DesignVector.from_display_dict(
        {"MW": 21.0, "phi0": -5.0, "rotor_offsets": [0.1, 0, 0, 0, 0.1]})
    assert back.MW == pytest.approx(21 * MM)
    assert back.phi0 == pytest.approx(np.deg2rad(-5.0))
    assert back.rotor_offsets[0] == pytest.approx(0.1 * MM)
    assert back.L == pytest.approx(d.L)


def test_bounds_normalization():
    bounds = default_bounds()
    d = initial_design()
    assert bounds.contains(d)
    z = bounds.normalize(d)
    assert np.all(z >= 0) and np.all(z <= 1)
    assert bounds.denormalize(z).as_array() == pytest.approx(d.as_array())
    mid = bounds.denormalize(np.full(N_VARIABLES, 0.5))
    assert mid.MW == pytest.approx(0.5 * (10 + 25) * MM)


# ---- feasibility -------------------------------------------------------

def test_initial_design_is_feasible(constants):
    res = feasibility(initial_design(), constants)
    assert res.is_feasible()
    assert res.max_violation() == 0.0
    assert len(res.names) == len(set(res.names)) == res.values.size
    assert res.jacobian.shape == (res.values.size, N_VARIABLES)


def test_bridge_clearance_closed_form(constants):
    # independent closed-form solution of bridge_thickness = 0:
    # hypot(MW/2 + pocket, rotor_radius - MAG) = rotor_radius - bridge_min
    mag = 9 * MM
    y_t = constants.rotor_outer_radius - mag
    mw = 2 * (np.sqrt((constants.rotor_outer_radius - constants.bridge_min) ** 2
                      - y_t ** 2) - constants.pocket_width)
    res = feasibility(initial_design().replace(MAG=mag, MW=mw), constants)
    value = dict(zip(res.names, res.values))["bridge_thickness"]
    assert abs(value) < 1e-10
    # slightly wider magnet violates the bridge
    res2 = feasibility(initial_design().replace(MAG=mag, MW=mw + 0.1 * MM),
                       constants)
    assert dict(zip(res2.names, res2.values))["bridge_thickness"] > 0


def test_gap_clearance_rows_activate(constants):
    design = initial_design().replace(
        stator_offsets=np.array([-0.26, 0, 0, 0, 0]) * MM)
    res = feasibility(design, constants)
    worst = res.names[int(np.argmax(res.values))]
    assert not res.is_feasible()
    assert worst.startswith("stator_gap_clearance")
    assert res.max_violation() == pytest.approx(0.01 * MM, rel=1e-9)


def test_feasibility_gradient_matches_fd(constants):
    design = initial_design().replace(
        MAG=8 * MM, MW=20 * MM, SW2=2.5 * MM,
        rotor_offsets=np.array([0.1, -0.15, 0.2, 0.05, -0.1]) * MM,
        stator_offsets=np.array([-0.1, 0.12, -0.2, 0.08, 0.15]) * MM)
    res = feasibility(design, constants)
    x0 = design.as_array()
    h = 1e-6
    fd = np.zeros_like(res.jacobian)
    for j in range(N_VARIABLES):
        xp, xm = x0.copy(), x0.copy()
        xp[j] += h
        xm[j] -= h
        gp = feasibility(DesignVector.from_array(xp), constants).values
        gm = feasibility(DesignVector.from_array(xm), constants).values
        fd[:, j] = (gp - gm) / (2 * h)
    assert np.allclose(res.jacobian, fd, atol=2e-5)


def test_feasibility_counts(constants):
    res = feasibility(initial_design(), constants)
    scalar = [n for n in res.names if "gap_clearance" not in n]
    rotor = [n for n in res.names if n.startswith("rotor_gap")]
    stator = [n for n in res.names if n.startswith("stator_gap")]
    assert len(scalar) == 10
    assert len(rotor) == 15
    assert len(stator) == 35


def test_feasibility_fallback_when_unbuildable(constants):
    design = initial_design().replace(
        SD1=90 * MM, rotor_offsets=np.array([0.3, 0, 0, 0, 0]) * MM)
    res = feasibility(design, constants)
    values = dict(zip(res.names, res.values))
    assert values["slot_body_height"] > 0
    assert any(n.endswith("proxy_0") for n in res.names)
