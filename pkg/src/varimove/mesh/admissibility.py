"""Geometric admissibility of solid deformations.

Determinant bounds, the Ciarlet-Necas injectivity defect and the distance
between the solid interface and the container walls.
"""
from __future__ import annotations

import numpy as np
import shapely
from shapely.geometry import LinearRing

from .geometry import signed_areas
from .types import TAG_DIRICHLET, TAG_INTERFACE, ReferenceSolidMesh


def element_dets(mesh: ReferenceSolidMesh, eta: np.ndarray) -> np.ndarray:
    """det grad eta per element (constant on linear triangles)."""
    return signed_areas(eta, mesh.elements) / signed_areas(mesh.nodes, mesh.elements)


def min_det(mesh: ReferenceSolidMesh, eta: np.ndarray) -> float:
    return float(element_dets(mesh, eta).min())


def deformed_area_union(mesh: ReferenceSolidMesh, eta: np.ndarray) -> float:
    """Area of the image eta(Q) as the union of the deformed triangles."""
    polys = shapely.polygons(eta[mesh.elements])
    return float(shapely.union_all(polys).area)


def ciarlet_necas_defect(mesh: ReferenceSolidMesh, eta: np.ndarray) -> float:
    """``|area(eta(Q)) - integral of det grad eta|``; zero iff the map does not overlap."""
    return abs(deformed_area_union(mesh, eta) - float(signed_areas(eta, mesh.elements).sum()))


def boundary_is_simple(mesh: ReferenceSolidMesh, eta: np.ndarray, loop=None) -> bool:
    """Whether the image of the boundary loop is a simple closed curve.

    Together with positive element determinants this implies that the
    piecewise-affine deformation is injective.
    """
    loop = mesh.loop() if loop is None else loop
    return bool(LinearRing(eta[loop]).is_simple)


def _orient(a, b, c):
    return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])


def _point_segment(p, a, b):
    ab = b - a
    t = np.einsum("...i,...i->...", p - a, ab) / np.maximum(np.einsum("...i,...i->...", ab, ab), 1e-300)
    t = np.clip(t, 0.0, 1.0)
    return np.linalg.norm(p - (a + t[..., None] * ab), axis=-1)


def segment_distances(s1: np.ndarray, s2: np.ndarray) -> np.ndarray:
    """Pairwise distances between segments ``s1`` (K, 2, 2) and ``s2`` (L, 2, 2)."""
    a, b = s1[:, None, 0], s1[:, None, 1]
    c, d = s2[None, :, 0], s2[None, :, 1]
    a, b = np.broadcast_to(a, (len(s1), len(s2), 2)), np.broadcast_to(b, (len(s1), len(s2), 2))
    c, d = np.broadcast_to(c, a.shape), np.broadcast_to(d, a.shape)
    dist = np.minimum.reduce([_point_segment(a, c, d), _point_segment(b, c, d),
                              _point_segment(c, a, b), _point_segment(d, a, b)])
    o1, o2 = _orient(a, b, c), _orient(a, b, d)
    o3, o4 = _orient(c, d, a), _orient(c, d, b)
    crossing = (o1 * o2 < 0) & (o3 * o4 < 0)
    return np.where(crossing, 0.0, dist)


def box_container(width=1.0, height=1.0) -> np.ndarray:
    """Wall segments of the rectangle [0, width] x [0, height]."""
    c = np.array([[0, 0], [width, 0], [width, height], [0, height]], float)
    return np.stack([c, np.roll(c, -1, axis=0)], axis=1)


def collision_distance(mesh: ReferenceSolidMesh, eta: np.ndarray, container: np.ndarray,
                       exclusion_radius: float) -> float:
    """Smallest gap between the image of M and the walls or M itself.

    Interface edges closer than ``exclusion_radius`` to the clamped part P
    (measured in the reference configuration) touch the wall by construction
    and are left out; self-distances are taken only between interface edges
    at least ``exclusion_radius`` apart in the reference configuration.
    """
    m_edges = mesh.boundary[mesh.tags == TAG_INTERFACE]
    p_edges = mesh.boundary[mesh.tags == TAG_DIRICHLET]
    ref_m = mesh.nodes[m_edges]
    ref_p = mesh.nodes[p_edges]
    far = segment_distances(ref_m, ref_p).min(axis=1) >= exclusion_radius
    cur = eta[m_edges]
    best = np.inf
    if far.any():
        best = float(segment_distances(cur[far], np.asarray(container, float)).min())
    ref_self = segment_distances(ref_m, ref_m)
    pairs = ref_self >= exclusion_radius
    if pairs.any():
        best = min(best, float(segment_distances(cur, cur)[pairs].min()))
    return best
