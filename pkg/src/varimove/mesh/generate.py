"""Mesh generation for the clamped half-disk in a square container."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import triangle

from .geometry import boundary_edges, signed_areas
from .types import TAG_DIRICHLET, TAG_INTERFACE, FluidMesh, ReferenceSolidMesh


@dataclass(frozen=True)
class HalfDiskGeometry:
    """Half-disk hanging from the lid of the unit square container.

    The flat side of the disk lies on the lid ``y = cy`` and is clamped.
    """

    center: tuple = (0.5, 1.0)
    radius: float = 0.3
    n_arc: int = 16
    n_chord: int = 6
    solid_max_area: float = 0.004
    fluid_spacing: float = 0.0625
    fluid_max_area: float = 0.0025
    min_angle: float = 30.0
    width: float = 1.0
    height: float = 1.0


def _segment_points(p, q, spacing):
    p, q = np.asarray(p, float), np.asarray(q, float)
    n = max(1, int(np.ceil(np.linalg.norm(q - p) / spacing - 1e-9)))
    t = np.arange(n)[:, None] / n
    return p + t * (q - p)  # excludes q


def _ccw(x, tris):
    tris = np.array(tris, dtype=np.int64)
    flip = signed_areas(x, tris) < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    return tris


def _closed_segments(n, offset=0):
    i = np.arange(n)
    return np.column_stack([i, (i + 1) % n]) + offset


def half_disk_solid(geo: HalfDiskGeometry = HalfDiskGeometry()) -> ReferenceSolidMesh:
    cx, cy = geo.center
    r = geo.radius
    theta = np.linspace(np.pi, 2.0 * np.pi, geo.n_arc + 1)
    arc = np.column_stack([cx + r * np.cos(theta), cy + r * np.sin(theta)])
    arc[0] = [cx - r, cy]
    arc[-1] = [cx + r, cy]
    chord = np.linspace(arc[-1], arc[0], geo.n_chord + 1)[1:-1]
    verts = np.vstack([arc, chord])
    segs = _closed_segments(len(verts))
    out = triangle.triangulate({"vertices": verts, "segments": segs},
                               f"pq{geo.min_angle:g}a{geo.solid_max_area:g}YQ")
    x = out["vertices"]
    tris = _ccw(x, out["triangles"])
    bnd = boundary_edges(tris)
    on_lid = np.abs(x[bnd, 1] - cy) < 1e-12
    tags = np.where(on_lid.all(axis=1), TAG_DIRICHLET, TAG_INTERFACE)
    return ReferenceSolidMesh(x, tris, bnd, tags)


def container_with_cavity(solid: ReferenceSolidMesh, eta: np.ndarray,
                          geo: HalfDiskGeometry = HalfDiskGeometry()) -> FluidMesh:
    """Fluid mesh of the container minus the deformed solid ``eta(Q)``.

    The interface vertices are exactly the images of the solid M-nodes.
    """
    W, H = geo.width, geo.height
    loop = solid.loop()
    m_nodes = set(solid.m_nodes.tolist())
    # walk the solid loop backwards (fluid on the left) starting at an M-run
    p_set = set(solid.p_nodes.tolist())
    rev = loop[::-1]
    # rotate so that the run of M-nodes is contiguous, bracketed by P-nodes
    start = next(i for i in range(len(rev))
                 if rev[i] in p_set and rev[(i + 1) % len(rev)] in m_nodes
                 and rev[(i + 1) % len(rev)] not in p_set)
    rev = np.roll(rev, -start)
    run = [rev[0]]
    for nd in rev[1:]:
        run.append(nd)
        if nd in p_set:
            break
    run = np.array(run)  # from right chord end to left chord end, through the arc
    iface = eta[run]
    right_end, left_end = iface[0], iface[-1]
    s = geo.fluid_spacing
    wall_a = np.vstack([_segment_points((0, 0), (W, 0), s),
                        _segment_points((W, 0), (W, H), s),
                        _segment_points((W, H), right_end, s)])
    wall_b = np.vstack([_segment_points(left_end, (0, H), s)[1:],
                        _segment_points((0, H), (0, 0), s)])
    verts = np.vstack([wall_a, iface, wall_b])
    segs = _closed_segments(len(verts))
    out = triangle.triangulate({"vertices": verts, "segments": segs},
                               f"pq{geo.min_angle:g}a{geo.fluid_max_area:g}YQ")
    x = out["vertices"]
    if not np.array_equal(x[:len(verts)], verts):
        raise RuntimeError("mesh generator moved boundary vertices")
    tris = _ccw(x, out["triangles"])
    n_a = len(wall_a)
    imap = {int(n_a + j): int(run[j]) for j in range(len(run))}
    wall_idx = np.concatenate([np.arange(n_a), [n_a, n_a + len(run) - 1],
                               np.arange(n_a + len(run), len(verts))])
    return FluidMesh(x, tris, imap, np.unique(wall_idx))


def half_disk_scenario_meshes(geo: HalfDiskGeometry = HalfDiskGeometry()):
    """Reference solid mesh and the matching initial fluid mesh."""
    solid = half_disk_solid(geo)
    fluid = container_with_cavity(solid, solid.nodes, geo)
    return solid, fluid
