"""Mesh containers for the reference solid and the moving fluid domain."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import boundary_edges, boundary_loop, signed_areas

TAG_INTERFACE = "M"
TAG_DIRICHLET = "P"
TAG_WALL = "W"


@dataclass
class ReferenceSolidMesh:
    """Reference configuration Q of the solid.

    Attributes
    ----------
    nodes : (N, 2) ndarray
    elements : (T, 3) int ndarray
        Counter-clockwise triangles.
    boundary : (B, 2) int ndarray
        Boundary edges, oriented with the domain on the left.
    tags : (B,) ndarray of str
        ``"M"`` for the fluid interface, ``"P"`` for the clamped part.
    dirichlet_values : (N, 2) ndarray
        Prescribed positions; only rows of P-nodes are meaningful.
    """

    nodes: np.ndarray
    elements: np.ndarray
    boundary: np.ndarray
    tags: np.ndarray
    dirichlet_values: np.ndarray = None

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.elements = np.asarray(self.elements, dtype=np.int64)
        self.boundary = np.asarray(self.boundary, dtype=np.int64).reshape(-1, 2)
        self.tags = np.asarray(self.tags, dtype="<U1")
        if self.dirichlet_values is None:
            self.dirichlet_values = self.nodes.copy()
        self.validate()

    def validate(self):
        if np.any(signed_areas(self.nodes, self.elements) <= 0):
            raise ValueError("solid elements must be positively oriented")
        if not set(self.tags.tolist()) <= {TAG_INTERFACE, TAG_DIRICHLET}:
            raise ValueError("solid boundary tags must be M or P")
        be = boundary_edges(self.elements)
        if len(be) != len(self.boundary):
            raise ValueError("boundary tag list does not cover the mesh boundary")
        key = {tuple(sorted(e)) for e in be.tolist()}
        if key != {tuple(sorted(e)) for e in self.boundary.tolist()}:
            raise ValueError("tagged edges do not match the mesh boundary")
        if not np.any(self.tags == TAG_DIRICHLET):
            raise ValueError("the Dirichlet part P must be nonempty")

    @property
    def p_nodes(self) -> np.ndarray:
        return np.unique(self.boundary[self.tags == TAG_DIRICHLET])

    @property
    def m_nodes(self) -> np.ndarray:
        return np.unique(self.boundary[self.tags == TAG_INTERFACE])

    @property
    def free_nodes(self) -> np.ndarray:
        mask = np.ones(len(self.nodes), bool)
        mask[self.p_nodes] = False
        return np.flatnonzero(mask)

    @property
    def area(self) -> float:
        return float(signed_areas(self.nodes, self.elements).sum())

    def loop(self) -> np.ndarray:
        """Boundary nodes in counter-clockwise order."""
        return boundary_loop(self.boundary)


@dataclass
class FluidMesh:
    """Triangulated fluid domain at one time level.

    Attributes
    ----------
    nodes : (N, 2) ndarray
    triangles : (T, 3) int ndarray
    interface_node_map : dict[int, int]
        Fluid node -> solid node whose image it is.
    outer_boundary_nodes : (K,) int ndarray
        Nodes on the container wall (no-slip).
    boundary : (B, 2) int ndarray
        Boundary edges oriented with the fluid on the left.
    tags : (B,) ndarray of str
        ``"M"`` on the interface, ``"W"`` on the container wall.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    interface_node_map: dict
    outer_boundary_nodes: np.ndarray
    boundary: np.ndarray = None
    tags: np.ndarray = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.nodes = np.asarray(self.nodes, dtype=float)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        self.outer_boundary_nodes = np.asarray(self.outer_boundary_nodes, dtype=np.int64)
        if self.boundary is None:
            self.boundary = boundary_edges(self.triangles)
        self.boundary = np.asarray(self.boundary, dtype=np.int64).reshape(-1, 2)
        if self.tags is None:
            iface = set(self.interface_node_map)
            self.tags = np.array([TAG_INTERFACE if (a in iface and b in iface) else TAG_WALL
                                  for a, b in self.boundary.tolist()], dtype="<U1")
        self.tags = np.asarray(self.tags, dtype="<U1")

    @property
    def interface_nodes(self) -> np.ndarray:
        return np.array(sorted(self.interface_node_map), dtype=np.int64)

    def with_nodes(self, nodes: np.ndarray) -> "FluidMesh":
        """Same connectivity and maps, new coordinates."""
        return replace(self, nodes=np.array(nodes, dtype=float))

    def wall_edges(self) -> np.ndarray:
        return self.boundary[self.tags == TAG_WALL]

    def boundary_mesh_size(self) -> float:
        e = self.boundary
        return float(np.linalg.norm(self.nodes[e[:, 0]] - self.nodes[e[:, 1]], axis=1).max())
