"""Tests for the glued multipatch solution space."""
import numpy as np
import pytest

from splinemotor.discretization import Discretization, edge_local_indices
from splinemotor.geometry import MachineConstants, build_geometry, initial_design


@pytest.fixture(scope="module")
def patchwork():
    return build_geometry(initial_design(), MachineConstants())


@pytest.fixture(scope="module")
def disc1(patchwork):
    return Discretization(patchwork, refine=1)


@pytest.fixture(scope="module")
def disc2(patchwork):
    return Discretization(patchwork, refine=2)


# hand-counted glued space sizes: per region (radial basis count after
# gluing rows and removing the Dirichlet row) times (angular basis count
# after gluing columns and the antiperiodic identification)
def expected_dofs(refine: int) -> tuple[int, int]:
    rotor_radial = sum(r * refine + 2 for r in (3, 2, 2, 2)) - 3 - 1
    rotor_angular = sum(c * refine + 2 for c in (4, 3, 8, 3, 4)) - 4 - 1
    stator_radial = sum(r * refine + 2 for r in (2, 1, 4, 2)) - 3 - 1
    stator_angular = sum(c * refine + 2 for c in 6 * [2, 4, 2]) - 12 - 5 - 1
    return rotor_radial * rotor_angular, stator_radial * stator_angular


def test_dof_counts(disc1, disc2):
    r1, s1 = expected_dofs(1)
    assert disc1.n_rotor_dofs == r1
    assert disc1.n_dofs == r1 + s1 == 1209
    r2, s2 = expected_dofs(2)
    assert disc2.n_rotor_dofs == r2
    assert disc2.n_dofs == r2 + s2 == 3586


def test_dirichlet_rows_eliminated(disc1):
    pw = disc1.patchwork
    for ref in pw.dirichlet:
        t = disc1.tables[ref.patch]
        idx = edge_local_indices(t.n_u, t.n_v, ref.edge)
        assert np.all(disc1.gid[ref.patch][idx] == -1)


def test_interface_continuity(disc1):
    """A random coefficient vector yields a continuous field; across the
    antiperiodic cut the field flips sign."""
    rng = np.random.default_rng(7)
    u = rng.standard_normal(disc1.n_dofs)
    ts = np.linspace(0.0, 1.0, 9)
    for itf in disc1.patchwork.interfaces:
        vals = []
        for patch, edge in ((itf.a, itf.edge_a), (itf.b, itf.edge_b)):
            if edge == "inner":
                _, a, _ = disc1.evaluate(patch, [0.0], ts, u)
            elif edge == "outer":
                _, a, _ = disc1.evaluate(patch, [1.0], ts, u)
            elif edge == "start":
                _, a, _ = disc1.evaluate(patch, ts, [0.0], u)
            else:
                _, a, _ = disc1.evaluate(patch, ts, [1.0], u)
            vals.append(a.ravel())
        assert np.allclose(vals[0], itf.sign * vals[1], atol=1e-12)


def test_trace_measures(disc1):
    """Edge quadrature weights integrate dtheta: each coupling side spans
    the full sector angle."""
    sector = disc1.patchwork.constants.sector_angle
    for traces in (disc1.trace_rotor, disc1.trace_stator):
        total = sum(t.weight.sum() for t in traces)
        assert total == pytest.approx(sector, rel=1e-12)
        for t in traces:
            # partition of unity of the trace basis
            assert np.allclose(t.basis.sum(axis=1), 1.0, atol=1e-12)
            assert np.all(np.diff(t.theta) > 0)


def test_trace_regions(disc1):
    for t in disc1.trace_rotor:
        gids = t.gids[t.gids >= 0]
        assert np.all(disc1.dof_region[gids] == 0)
    for t in disc1.trace_stator:
        gids = t.gids[t.gids >= 0]
        assert np.all(disc1.dof_region[gids] == 1)


def test_geometry_tables_recover_areas(disc1, patchwork):
    gt = disc1.geometry_tables()
    by_mat = {}
    for patch, jxw in zip(patchwork.patches, gt.jxw):
        by_mat[patch.material] = by_mat.get(patch.material, 0.0) + jxw.sum()
    ref = patchwork.area_by_material()
    for mat, area in ref.items():
        assert by_mat[mat] == pytest.approx(area, rel=1e-9)


def test_geometry_tables_for_modified_design(disc1):
    """Same topology, different design: tables swap cleanly."""
    design = initial_design().replace(MW=21e-3, rotor_offsets=np.array(
        [0.0, 0.1e-3, 0.0, -0.1e-3, 0.0]))
    pw2 = build_geometry(design, disc1.patchwork.constants)
    gt2 = disc1.geometry_tables(pw2)
    i = disc1.patchwork.index("rotor_cavity2")
    assert gt2.jxw[i].sum() == pytest.approx(design.MW * design.MH, rel=1e-12)


def test_deterministic_numbering(patchwork):
    a = Discretization(patchwork, refine=1)
    b = Discretization(patchwork, refine=1)
    assert a.n_dofs == b.n_dofs
    for ga, gb in zip(a.gid, b.gid):
        assert np.array_equal(ga, gb)
    for sa, sb in zip(a.gsign, b.gsign):
        assert np.array_equal(sa, sb)


def test_evaluate_flux_density_shape(disc1):
    u = np.zeros(disc1.n_dofs)
    pts, a, b = disc1.evaluate(3, np.linspace(0, 1, 4), np.linspace(0, 1, 5), u)
    assert pts.shape == (4, 5, 2)
    assert a.shape == (4, 5)
    assert b.shape == (4, 5, 2)
    assert np.all(a == 0) and np.all(b == 0)
