"""Lagrangian push-forward of the fluid mesh and the composed flow map."""
from __future__ import annotations

import numpy as np

from ..errors import DeterminantBoundViolation, NonPositiveJacobian
from .geometry import shape_gradients, signed_areas
from .types import FluidMesh


def step_determinants(mesh: FluidMesh, v: np.ndarray, tau: float) -> np.ndarray:
    """det(I + tau grad v) on every element of ``mesh``."""
    _, grads = shape_gradients(mesh.nodes, mesh.triangles)
    gv = np.einsum("tja,tjb->tab", np.asarray(v)[mesh.triangles], grads)
    F = np.eye(2)[None] + tau * gv
    return F[:, 0, 0] * F[:, 1, 1] - F[:, 0, 1] * F[:, 1, 0]


def push_forward_fluid_mesh(mesh: FluidMesh, v: np.ndarray, tau: float,
                            jacobian_floor: float = 1e-6):
    """Move every node by ``tau * v``.

    Returns
    -------
    pushed : FluidMesh
        Same connectivity, nodes ``x + tau v(x)``.
    factors : (T,) ndarray
        det(I + tau grad v) per element.
    """
    v = np.asarray(v, dtype=float).reshape(-1, 2)
    factors = step_determinants(mesh, v, tau)
    bad = np.flatnonzero(factors <= jacobian_floor)
    if bad.size:
        raise NonPositiveJacobian(
            f"{bad.size} element(s) with det(I + tau grad v) <= {jacobian_floor:g}, min {factors.min():.3e}")
    return mesh.with_nodes(mesh.nodes + tau * v), factors


class FlowMapLedger:
    """Composed Lagrangian map from the initial fluid domain.

    Since the fluid mesh is moved node by node, the map is piecewise affine on
    the initial triangulation and is represented by the current node positions.

    Parameters
    ----------
    mesh : FluidMesh
        Initial fluid mesh (time 0).
    det_bounds : tuple of float
        Admissible range ``[c_lo, c_hi]`` of the running determinant.
    """

    def __init__(self, mesh: FluidMesh, det_bounds=(1e-3, 1e3)):
        self.tris = mesh.triangles
        self.x0 = mesh.nodes.copy()
        self.x = mesh.nodes.copy()
        self.area0 = signed_areas(self.x0, self.tris)
        self.running_det = np.ones(len(self.tris))
        self.c_lo, self.c_hi = det_bounds
        self.step = 0
        self.gradv_history: list[float] = []
        self.tau_history: list[float] = []
        self.anchors: dict[int, tuple[int, np.ndarray, np.ndarray]] = {0: (0, self.x0.copy(), self.running_det.copy())}

    def compose(self, displacement: np.ndarray, factors: np.ndarray, gradv_inf: float = None, tau: float = None):
        """Apply ``Psi = id + displacement`` to the front of the map."""
        displacement = np.asarray(displacement, dtype=float).reshape(-1, 2)
        self.x = self.x + displacement
        self.running_det = self.running_det * np.asarray(factors, dtype=float)
        self.step += 1
        if gradv_inf is not None:
            self.gradv_history.append(float(gradv_inf))
            self.tau_history.append(float(tau))
        lo, hi = float(self.running_det.min()), float(self.running_det.max())
        if lo < self.c_lo or hi > self.c_hi:
            raise DeterminantBoundViolation(
                f"running det in [{lo:.3e}, {hi:.3e}] outside [{self.c_lo:g}, {self.c_hi:g}]")
        return self

    def anchor(self, window: int):
        """Remember the map at the start of ``window``."""
        self.anchors[window] = (self.step, self.x.copy(), self.running_det.copy())

    def direct_det(self) -> np.ndarray:
        """det grad Phi recomputed from the composed node positions."""
        return signed_areas(self.x, self.tris) / self.area0

    def relative_det(self, window: int) -> np.ndarray:
        """det of the map from the anchor of ``window`` to the current domain."""
        return self.running_det / self.anchors[window][2]

    def envelope(self, n: int = 2, c: float = 3.0):
        """Bounds exp(-/+ c sum tau (|grad v| + |grad v|^n)) on the running det.

        Valid for steps with ``tau <= 1`` and ``tau |grad v| <= 1/4`` (Frobenius).
        """
        g = np.asarray(self.gradv_history)
        t = np.asarray(self.tau_history)
        s = float(np.sum(t * (g + g ** n)))
        return np.exp(-c * s), np.exp(c * s)


def compose_flow_map(ledger: FlowMapLedger, step_displacement, factors, **kw) -> FlowMapLedger:
    """Functional form of :meth:`FlowMapLedger.compose` (updates in place)."""
    return ledger.compose(step_displacement, factors, **kw)
