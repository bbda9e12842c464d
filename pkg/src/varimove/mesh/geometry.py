"""Linear triangle geometry: areas, shape gradients and sparse FE operators.

Vector fields on a mesh with ``N`` nodes are stored flat as ``u[2*i + d]``.
Element gradients are flattened as ``G[4*e + 2*a + b] = d u_a / d x_b``.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

# degree-2 three-point rule on the reference triangle (barycentric coordinates)
QUAD_BARY = np.array([[2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0],
                      [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
                      [1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0]])
QUAD_WEIGHTS = np.full(3, 1.0 / 3.0)


def signed_areas(x: np.ndarray, tris: np.ndarray) -> np.ndarray:
    a, b, c = x[tris[:, 0]], x[tris[:, 1]], x[tris[:, 2]]
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                  - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def shape_gradients(x: np.ndarray, tris: np.ndarray):
    """Areas and barycentric gradients of every triangle.

    Returns
    -------
    area : (T,) ndarray
        Signed areas (positive for counter-clockwise elements).
    grads : (T, 3, 2) ndarray
        ``grads[e, j]`` is the gradient of the hat function of local node j.
    """
    p = x[tris]
    area = signed_areas(x, tris)
    grads = np.empty((len(tris), 3, 2))
    for j in range(3):
        k, m = (j + 1) % 3, (j + 2) % 3
        grads[:, j, 0] = p[:, k, 1] - p[:, m, 1]
        grads[:, j, 1] = p[:, m, 0] - p[:, k, 0]
    grads /= (2.0 * area)[:, None, None]
    return area, grads


def element_gradients(u: np.ndarray, tris: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """Constant gradient (T, 2, 2) of a nodal vector field ``u`` of shape (N, 2)."""
    return np.einsum("tja,tjb->tab", u[tris], grads)


def gradient_operator(tris: np.ndarray, grads: np.ndarray, n_nodes: int) -> sp.csr_matrix:
    """Sparse map from flat nodal vectors to flat element gradients."""
    T = len(tris)
    e = np.arange(T)
    rows, cols, vals = [], [], []
    for j in range(3):
        for a in range(2):
            for b in range(2):
                rows.append(4 * e + 2 * a + b)
                cols.append(2 * tris[:, j] + a)
                vals.append(grads[:, j, b])
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(4 * T, 2 * n_nodes))


def interior_edges(tris: np.ndarray):
    """Interior edges with their two neighbouring triangles.

    Returns
    -------
    edges : (E, 2) int ndarray
    plus, minus : (E,) int ndarray
        Indices of the two triangles sharing each edge.
    """
    loc = np.array([[0, 1], [1, 2], [2, 0]])
    all_e = np.sort(tris[:, loc].reshape(-1, 2), axis=1)
    owner = np.repeat(np.arange(len(tris)), 3)
    uniq, inv, counts = np.unique(all_e, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    order = np.argsort(inv, kind="stable")
    sorted_inv = inv[order]
    starts = np.searchsorted(sorted_inv, np.arange(len(uniq)))
    interior = np.flatnonzero(counts == 2)
    plus = owner[order[starts[interior]]]
    minus = owner[order[starts[interior] + 1]]
    return uniq[interior], plus, minus


def boundary_edges(tris: np.ndarray) -> np.ndarray:
    """Edges used by exactly one triangle, oriented as in that triangle."""
    loc = np.array([[0, 1], [1, 2], [2, 0]])
    directed = tris[:, loc].reshape(-1, 2)
    key = np.sort(directed, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    return directed[counts[inv.ravel()] == 1]


def quadrature_operator(tris: np.ndarray, n_nodes: int) -> sp.csr_matrix:
    """Sparse map from flat nodal vectors to values at the three quadrature points.

    Output layout is ``[6*e + 2*q + d]``.
    """
    T = len(tris)
    e = np.arange(T)
    rows, cols, vals = [], [], []
    for q in range(3):
        for j in range(3):
            for d in range(2):
                rows.append(6 * e + 2 * q + d)
                cols.append(2 * tris[:, j] + d)
                vals.append(np.full(T, QUAD_BARY[q, j]))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(6 * T, 2 * n_nodes))


def scalar_at_quadrature(f: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Nodal scalar field evaluated at the quadrature points, shape (T, 3)."""
    return f[tris] @ QUAD_BARY.T


class P1Space:
    """Piecewise-linear vector space on a fixed triangulation geometry.

    Caches areas, shape gradients, the sparse gradient operator, the
    interior-edge jump operator used by the discrete second-gradient
    seminorm, scalar mass and stiffness matrices.

    Parameters
    ----------
    x : (N, 2) ndarray
        Node coordinates defining the geometry.
    tris : (T, 3) int ndarray
        Counter-clockwise triangles.
    """

    def __init__(self, x: np.ndarray, tris: np.ndarray):
        self.x = np.asarray(x, dtype=float)
        self.tris = np.asarray(tris, dtype=np.int64)
        self.n_nodes = len(self.x)
        self.area, self.grads = shape_gradients(self.x, self.tris)
        self._G = None
        self._jump = None
        self._Q = None

    @property
    def G(self) -> sp.csr_matrix:
        if self._G is None:
            self._G = gradient_operator(self.tris, self.grads, self.n_nodes)
        return self._G

    @property
    def Q(self) -> sp.csr_matrix:
        if self._Q is None:
            self._Q = quadrature_operator(self.tris, self.n_nodes)
        return self._Q

    @property
    def jump(self):
        """(B, weight, ell): jump operator and per-edge scaling.

        ``B @ u`` gives the flattened 2x2 gradient jump across every interior
        edge; ``weight`` is the patch area and ``ell = weight / |E|``.
        """
        if self._jump is None:
            edges, plus, minus = interior_edges(self.tris)
            n_e = len(edges)
            G = self.G.tocsr()
            rows_p = (4 * plus[:, None] + np.arange(4)[None, :]).ravel()
            rows_m = (4 * minus[:, None] + np.arange(4)[None, :]).ravel()
            B = G[rows_p] - G[rows_m]
            weight = self.area[plus] + self.area[minus]
            length = np.linalg.norm(self.x[edges[:, 0]] - self.x[edges[:, 1]], axis=1)
            ell = weight / length
            self._jump = (B.tocsr(), weight, ell)
            self.n_interior_edges = n_e
        return self._jump

    def lumped_mass(self) -> np.ndarray:
        m = np.zeros(self.n_nodes)
        np.add.at(m, self.tris.ravel(), np.repeat(self.area / 3.0, 3))
        return m

    def mass_matrix(self) -> sp.csr_matrix:
        """Consistent scalar P1 mass matrix."""
        local = (np.ones((3, 3)) + np.eye(3)) / 12.0
        vals = self.area[:, None, None] * local[None]
        r = np.repeat(self.tris, 3, axis=1).ravel()
        c = np.tile(self.tris, (1, 3)).ravel()
        return sp.csr_matrix((vals.ravel(), (r, c)), shape=(self.n_nodes, self.n_nodes))

    def stiffness_matrix(self) -> sp.csr_matrix:
        vals = self.area[:, None, None] * np.einsum("tid,tjd->tij", self.grads, self.grads)
        r = np.repeat(self.tris, 3, axis=1).ravel()
        c = np.tile(self.tris, (1, 3)).ravel()
        return sp.csr_matrix((vals.ravel(), (r, c)), shape=(self.n_nodes, self.n_nodes))

    def vector_mass_matrix(self) -> sp.csr_matrix:
        """Consistent mass matrix acting on flat vector fields."""
        return sp.kron(self.mass_matrix(), sp.eye(2), format="csr")

    def element_gradients(self, u: np.ndarray) -> np.ndarray:
        return element_gradients(np.asarray(u).reshape(-1, 2), self.tris, self.grads)


def min_angles(x: np.ndarray, tris: np.ndarray) -> np.ndarray:
    """Smallest interior angle (radians) of every triangle."""
    p = x[tris]
    out = np.full(len(tris), np.pi)
    for j in range(3):
        u = p[:, (j + 1) % 3] - p[:, j]
        w = p[:, (j + 2) % 3] - p[:, j]
        cosang = np.einsum("ij,ij->i", u, w) / (np.linalg.norm(u, axis=1) * np.linalg.norm(w, axis=1))
        out = np.minimum(out, np.arccos(np.clip(cosang, -1.0, 1.0)))
    return out


def boundary_loop(edges: np.ndarray) -> np.ndarray:
    """Order a set of directed boundary edges forming one closed loop."""
    nxt = {int(a): int(b) for a, b in edges}
    start = int(edges[0, 0])
    loop = [start]
    cur = nxt[start]
    while cur != start:
        loop.append(cur)
        cur = nxt[cur]
        if len(loop) > len(edges):
            raise ValueError("boundary edges do not form a single loop")
    return np.array(loop)
