"""Plain-text mesh files and legacy ASCII VTK output.

Mesh file layout (ids are 0-based, ``#`` starts a comment)::

    nodes N
    0 x y
    ...
    elements T
    0 n1 n2 n3
    ...
    boundary B
    n1 n2 TAG
    ...

TAG is ``M`` (fluid interface), ``P`` (clamped) or ``W`` (container wall).
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from ..errors import MeshFormatError
from .types import FluidMesh, ReferenceSolidMesh


def _fmt(v: float) -> str:
    return repr(float(v))


def write_mesh(path, nodes, elements, boundary, tags):
    lines = [f"nodes {len(nodes)}"]
    lines += [f"{i} {_fmt(x)} {_fmt(y)}" for i, (x, y) in enumerate(nodes)]
    lines.append(f"elements {len(elements)}")
    lines += [f"{i} {a} {b} {c}" for i, (a, b, c) in enumerate(elements)]
    lines.append(f"boundary {len(boundary)}")
    lines += [f"{a} {b} {t}" for (a, b), t in zip(boundary, tags)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path):
    """Parse a mesh file into ``(nodes, elements, boundary, tags)``."""
    raw = [ln.split("#", 1)[0].strip() for ln in Path(path).read_text().splitlines()]
    raw = [ln for ln in raw if ln]
    sections = {}
    i = 0
    while i < len(raw):
        head = raw[i].split()
        if len(head) != 2 or head[0] not in ("nodes", "elements", "boundary"):
            raise MeshFormatError(f"{path}: expected section header, got {raw[i]!r}")
        n = int(head[1])
        sections[head[0]] = raw[i + 1:i + 1 + n]
        if len(sections[head[0]]) != n:
            raise MeshFormatError(f"{path}: section {head[0]} truncated")
        i += n + 1
    for name in ("nodes", "elements"):
        if name not in sections:
            raise MeshFormatError(f"{path}: missing section {name}")
    nodes = np.zeros((len(sections["nodes"]), 2))
    for ln in sections["nodes"]:
        k, x, y = ln.split()
        nodes[int(k)] = float(x), float(y)
    elements = np.zeros((len(sections["elements"]), 3), dtype=np.int64)
    for ln in sections["elements"]:
        k, a, b, c = ln.split()
        elements[int(k)] = int(a), int(b), int(c)
    bnd, tags = [], []
    for ln in sections.get("boundary", []):
        a, b, t = ln.split()
        if t not in ("M", "P", "W"):
            raise MeshFormatError(f"{path}: unknown boundary tag {t!r}")
        bnd.append((int(a), int(b)))
        tags.append(t)
    return nodes, elements, np.array(bnd, dtype=np.int64).reshape(-1, 2), np.array(tags, dtype="<U1")


def write_solid_mesh(path, mesh: ReferenceSolidMesh):
    write_mesh(path, mesh.nodes, mesh.elements, mesh.boundary, mesh.tags)


def read_solid_mesh(path) -> ReferenceSolidMesh:
    nodes, elements, bnd, tags = read_mesh(path)
    return ReferenceSolidMesh(nodes, elements, bnd, tags)


def write_fluid_mesh(path, mesh: FluidMesh):
    write_mesh(path, mesh.nodes, mesh.triangles, mesh.boundary, mesh.tags)


def read_fluid_mesh(path, solid: ReferenceSolidMesh, eta=None, tol=1e-9) -> FluidMesh:
    """Read a fluid mesh and match its M-nodes to the solid interface images."""
    nodes, tris, bnd, tags = read_mesh(path)
    eta = solid.nodes if eta is None else eta
    m_fluid = np.unique(bnd[tags == "M"])
    m_solid = solid.m_nodes
    imap = {}
    for i in m_fluid:
        d = np.linalg.norm(eta[m_solid] - nodes[i], axis=1)
        j = int(np.argmin(d))
        if d[j] > tol:
            raise MeshFormatError(f"fluid interface node {i} has no matching solid node")
        imap[int(i)] = int(m_solid[j])
    wall = np.unique(bnd[tags == "W"])
    return FluidMesh(nodes, tris, imap, wall, bnd, tags)


def write_vtk(path, nodes, triangles, point_data=None, cell_data=None, title="varimove"):
    """Write an unstructured triangle grid as legacy ASCII VTK."""
    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {len(nodes)} double"]
    out += [f"{x:.17g} {y:.17g} 0" for x, y in nodes]
    out.append(f"CELLS {len(triangles)} {4 * len(triangles)}")
    out += [f"3 {a} {b} {c}" for a, b, c in triangles]
    out.append(f"CELL_TYPES {len(triangles)}")
    out += ["5"] * len(triangles)

    def block(data):
        res = []
        for name, arr in data.items():
            arr = np.asarray(arr, dtype=float)
            if arr.ndim == 1:
                res += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
                res += [f"{v:.17g}" for v in arr]
            else:
                res.append(f"VECTORS {name} double")
                res += [f"{a:.17g} {b:.17g} 0" for a, b in arr]
        return res

    if point_data:
        out.append(f"POINT_DATA {len(nodes)}")
        out += block(point_data)
    if cell_data:
        out.append(f"CELL_DATA {len(triangles)}")
        out += block(cell_data)
    Path(path).write_text("\n".join(out) + "\n")
