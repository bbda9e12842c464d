import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from varimove.errors import MeshFormatError, NonPositiveJacobian
from varimove.mesh.admissibility import (boundary_is_simple, box_container, ciarlet_necas_defect,
                                         collision_distance, min_det, segment_distances)
from varimove.mesh.flowmap import FlowMapLedger, push_forward_fluid_mesh
from varimove.mesh.geometry import min_angles, signed_areas
from varimove.mesh.meshio import (read_fluid_mesh, read_mesh, read_solid_mesh, write_fluid_mesh,
                                  write_solid_mesh, write_vtk)
from varimove.mesh.types import ReferenceSolidMesh


def unit_square_solid():
    x = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    tris = [[0, 1, 2], [0, 2, 3]]
    bnd = [[0, 1], [1, 2], [2, 3], [3, 0]]
    return ReferenceSolidMesh(x, tris, bnd, ["P", "M", "M", "M"])


def clip(subject, clipper):
    """Sutherland-Hodgman clipping of a polygon by a convex ccw polygon."""
    out = list(subject)
    for i in range(len(clipper)):
        a, b = clipper[i], clipper[(i + 1) % len(clipper)]
        inside = lambda p: (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]) >= 0
        inp, out = out, []
        for j in range(len(inp)):
            p, q = inp[j], inp[(j + 1) % len(inp)]
            if inside(q):
                if not inside(p):
                    out.append(_intersect(p, q, a, b))
                out.append(q)
            elif inside(p):
                out.append(_intersect(p, q, a, b))
        if not out:
            break
    return out


def _intersect(p, q, a, b):
    p, q, a, b = map(np.asarray, (p, q, a, b))
    r, s = q - p, b - a
    t = ((a[0] - p[0]) * s[1] - (a[1] - p[1]) * s[0]) / (r[0] * s[1] - r[1] * s[0])
    return p + t * r


def polygon_area(poly):
    if len(poly) < 3:
        return 0.0
    p = np.asarray(poly)
    return 0.5 * float(np.sum(p[:, 0] * np.roll(p[:, 1], -1) - np.roll(p[:, 0], -1) * p[:, 1]))


def test_solid_mesh_validation():
    m = unit_square_solid()
    assert m.area == pytest.approx(1.0)
    assert list(m.p_nodes) == [0, 1]
    assert list(m.free_nodes) == [2, 3]
    with pytest.raises(ValueError):
        ReferenceSolidMesh(m.nodes, m.elements, m.boundary, ["M"] * 4)
    with pytest.raises(ValueError):
        ReferenceSolidMesh(m.nodes, m.elements[:, ::-1], m.boundary, m.tags)


def test_half_disk_meshes(solid, fluid):
    assert 50 <= len(solid.elements) <= 200
    assert 300 <= len(fluid.triangles) <= 1500
    assert np.degrees(min_angles(fluid.nodes, fluid.triangles).min()) > 25
    # interface nodes sit exactly on the solid nodes they are attached to
    for i, s in fluid.interface_node_map.items():
        assert np.array_equal(fluid.nodes[i], solid.nodes[s])
    # fluid + solid tile the unit square
    total = signed_areas(fluid.nodes, fluid.triangles).sum() + solid.area
    assert total == pytest.approx(1.0, rel=1e-12)


def test_mesh_format_round_trip(tmp_path, solid, fluid):
    write_solid_mesh(tmp_path / "s.mesh", solid)
    s2 = read_solid_mesh(tmp_path / "s.mesh")
    assert np.array_equal(s2.nodes, solid.nodes)
    assert np.array_equal(s2.elements, solid.elements)
    assert np.array_equal(s2.tags, solid.tags)
    write_fluid_mesh(tmp_path / "f.mesh", fluid)
    f2 = read_fluid_mesh(tmp_path / "f.mesh", solid)
    assert np.array_equal(f2.nodes, fluid.nodes)
    assert f2.interface_node_map == fluid.interface_node_map
    assert set(f2.outer_boundary_nodes) == set(fluid.outer_boundary_nodes)


def test_mesh_format_errors(tmp_path):
    p = tmp_path / "bad.mesh"
    p.write_text("nodes 1\n0 0 0\nelements 0\nboundary 1\n0 0 X\n")
    with pytest.raises(MeshFormatError):
        read_mesh(p)
    p.write_text("nodes 3\n0 0 0\n")
    with pytest.raises(MeshFormatError):
        read_mesh(p)


def test_vtk_writer(tmp_path, fluid):
    path = tmp_path / "f.vtk"
    write_vtk(path, fluid.nodes, fluid.triangles, point_data={"rho": np.ones(len(fluid.nodes))},
              cell_data={"d": np.ones(len(fluid.triangles))})
    text = path.read_text().splitlines()
    assert text[0].startswith("# vtk DataFile")
    assert f"POINTS {len(fluid.nodes)} double" in text
    assert f"CELL_TYPES {len(fluid.triangles)}" in text
    assert "SCALARS rho double 1" in text


def test_cn_defect_identity_and_stretch(solid):
    assert ciarlet_necas_defect(solid, solid.nodes) < 1e-12
    eta = solid.nodes * [1.3, 0.8]
    assert ciarlet_necas_defect(solid, eta) < 1e-12
    assert boundary_is_simple(solid, eta)


def test_cn_detects_folded_deformation():
    m = unit_square_solid()
    eta = m.nodes.copy()
    eta[3] = [0.8, 0.3]     # node 3 pulled across the diagonal: second triangle flips
    assert min_det(m, eta) < 0
    t1, t2 = eta[[0, 1, 2]], eta[[0, 2, 3]]
    a2 = abs(polygon_area(t2))
    overlap = polygon_area(clip(list(t2[::-1]), list(t1)))
    expected = 2 * a2 - overlap
    assert abs(ciarlet_necas_defect(m, eta) - expected) <= 1e-10
    assert ciarlet_necas_defect(m, eta) > 1e-3
    # the boundary stays a simple curve; only the determinant and the defect see the fold
    assert boundary_is_simple(m, eta)


def _brute_segment_distance(s, t, n=400):
    a = s[0] + np.linspace(0, 1, n)[:, None] * (s[1] - s[0])
    b = t[0] + np.linspace(0, 1, n)[:, None] * (t[1] - t[0])
    return np.min(np.linalg.norm(a[:, None] - b[None], axis=2))


coord = st.floats(-1, 1, allow_nan=False)


@settings(max_examples=40, deadline=None)
@given(st.lists(coord, min_size=8, max_size=8))
def test_segment_distance_matches_sampling(c):
    s = np.array(c[:4]).reshape(2, 2)
    t = np.array(c[4:]).reshape(2, 2)
    d = segment_distances(s[None], t[None])[0, 0]
    ref = _brute_segment_distance(s, t)
    # sampling overestimates by at most the sample spacing
    assert d <= ref + 1e-12
    assert ref - d <= 2 * (np.linalg.norm(s[1] - s[0]) + np.linalg.norm(t[1] - t[0])) / 399 + 1e-12


def test_collision_distance(solid):
    d0 = collision_distance(solid, solid.nodes, box_container(), 0.25)
    # edges near the clamped chord are excluded, so the top wall is at least 0.25 away
    assert 0.25 <= d0 <= 0.35
    eta = solid.nodes.copy()
    eta[:, 0] += 2.0 * (1.0 - eta[:, 1])   # shear the tip through the right wall
    assert collision_distance(solid, eta, box_container(), 0.25) == 0.0


def test_push_forward_and_ledger(fluid):
    rng = np.random.default_rng(1)
    ledger = FlowMapLedger(fluid)
    mesh = fluid
    for _ in range(5):
        v = 0.2 * rng.normal(size=mesh.nodes.shape)
        v[mesh.outer_boundary_nodes] = 0
        pushed, factors = push_forward_fluid_mesh(mesh, v, 1e-3)
        ledger.compose(1e-3 * v, factors, gradv_inf=1.0, tau=1e-3)
        mesh = pushed
    assert np.allclose(ledger.direct_det(), ledger.running_det, rtol=1e-12)
    assert np.array_equal(ledger.x, mesh.nodes)


def test_rigid_motion_has_unit_det(fluid):
    th = 0.3
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    v = (fluid.nodes - 0.5) @ (R - np.eye(2)).T + [0.1, -0.2]
    _, factors = push_forward_fluid_mesh(fluid, v, 1.0)
    assert np.allclose(factors, 1.0)


def test_push_forward_rejects_inversion(fluid):
    v = np.zeros_like(fluid.nodes)
    i = fluid.triangles[0]
    v[i[0]] = 50 * (fluid.nodes[i[1]] - fluid.nodes[i[0]])
    with pytest.raises(NonPositiveJacobian):
        push_forward_fluid_mesh(fluid, v, 0.1)


def test_push_forward_contraction_factor():
    from varimove.mesh.types import FluidMesh
    x = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    mesh = FluidMesh(x, [[0, 1, 2]], {}, np.array([], dtype=np.int64))
    c, tau = 0.7, 0.1
    pushed, f = push_forward_fluid_mesh(mesh, -c * x, tau)
    assert f[0] == pytest.approx((1 - tau * c) ** 2, rel=1e-14)
    pushed, f = push_forward_fluid_mesh(mesh, np.zeros_like(x), tau)
    assert np.array_equal(pushed.nodes, x) and f[0] == 1.0


def test_push_forward_is_undone_by_inverse_displacement(fluid):
    rng = np.random.default_rng(3)
    v = 0.1 * rng.normal(size=fluid.nodes.shape)
    pushed, _ = push_forward_fluid_mesh(fluid, v, 0.01)
    back = pushed.nodes - 0.01 * v
    assert np.max(np.abs(back - fluid.nodes)) <= 1e-12


def test_ledger_product_of_factors(fluid):
    ledger = FlowMapLedger(fluid)
    ledger.compose(np.zeros_like(fluid.nodes), np.full(len(fluid.triangles), 0.9))
    ledger.compose(np.zeros_like(fluid.nodes), np.full(len(fluid.triangles), 0.8))
    assert np.allclose(ledger.running_det, 0.72) and ledger.step == 2


def test_ledger_bounds(fluid):
    from varimove.errors import DeterminantBoundViolation
    ledger = FlowMapLedger(fluid, (0.5, 2.0))
    with pytest.raises(DeterminantBoundViolation):
        ledger.compose(np.zeros_like(fluid.nodes), np.full(len(fluid.triangles), 0.4))


def test_min_det_examples(solid):
    assert min_det(solid, solid.nodes) == pytest.approx(1.0)
    assert min_det(solid, 1.7 * solid.nodes) == pytest.approx(1.7 ** 2)


def test_collision_distance_geometry():
    # a tall rectangle clamped on its top edge; only the bottom edge is far from P
    x = np.array([[0.4, 0.3], [0.6, 0.3], [0.6, 0.7], [0.4, 0.7]])
    m = ReferenceSolidMesh(x, [[0, 1, 2], [0, 2, 3]], [[0, 1], [1, 2], [2, 3], [3, 0]],
                           ["M", "M", "P", "M"])
    box = box_container()
    d0 = collision_distance(m, m.nodes, box, 0.25)
    assert d0 == pytest.approx(0.3)
    # translating towards the floor by d reduces the distance by d
    assert collision_distance(m, m.nodes - [0, 0.15], box, 0.25) == pytest.approx(0.15)
    # simultaneous rigid motion of solid and container leaves it unchanged
    th = 0.4
    R = np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    moved = box @ R.T + [2.0, -1.0]
    assert collision_distance(m, m.nodes @ R.T + [2.0, -1.0], moved, 0.25) == pytest.approx(d0)
