"""Damped mass transport on the moving fluid mesh and density diagnostics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import NonPositiveJacobian, SolverFailure
from .mesh.geometry import P1Space, signed_areas


def neumann_resolvent(rho, space: P1Space, tau_eps: float, lumped: bool = False):
    """Apply ``(id - tau eps Laplace)^{-1}`` with natural boundary conditions.

    Solves ``(M + tau eps K) rho_t = M rho`` for P1 nodal values, with M the
    consistent (or, if ``lumped``, the row-summed) mass matrix. The lumped
    variant is monotone on meshes whose stiffness matrix has nonpositive
    off-diagonal entries.

    Raises
    ------
    SolverFailure
        If the factorization fails or produces non-finite values.
    """
    rho = np.asarray(rho, dtype=float)
    if tau_eps == 0:
        return rho.copy()
    M = sp.diags(space.lumped_mass()) if lumped else space.mass_matrix()
    A = (M + tau_eps * space.stiffness_matrix()).tocsc()
    try:
        out = splu(A).solve(M @ rho)
    except RuntimeError as exc:  # singular factor
        raise SolverFailure(str(exc)) from exc
    if not np.all(np.isfinite(out)):
        raise SolverFailure("resolvent produced non-finite values")
    return out


def nodal_jacobian(tris, base_areas, factors, n_nodes):
    """Area-weighted nodal average of elementwise det factors."""
    num = np.zeros(n_nodes)
    den = np.zeros(n_nodes)
    np.add.at(num, tris.ravel(), np.repeat(base_areas * factors, 3))
    np.add.at(den, tris.ravel(), np.repeat(base_areas, 3))
    return num / den


def transport_density(rho_tilde, pushed_mesh, det_factors):
    """Density on the pushed mesh, ``rho_{k+1} = rho_tilde / Jbar``.

    ``Jbar`` averages the element factors ``det(I + tau grad v)`` around each
    node with the pre-push element areas as weights, so that the lumped mass
    ``sum m_i rho_i`` is carried over exactly.
    """
    det_factors = np.asarray(det_factors, dtype=float)
    if np.any(det_factors <= 0):
        raise NonPositiveJacobian("non-positive determinant factor in transport")
    new_area = signed_areas(pushed_mesh.nodes, pushed_mesh.triangles)
    jbar = nodal_jacobian(pushed_mesh.triangles, new_area / det_factors, det_factors,
                          len(pushed_mesh.nodes))
    return np.asarray(rho_tilde, dtype=float) / jbar


def lumped_total(rho, space: P1Space) -> float:
    return float(space.lumped_mass() @ rho)


def total_mass(rho, space: P1Space) -> float:
    """Exact integral of the P1 density."""
    return float(space.area @ np.asarray(rho)[space.tris].mean(axis=1))


@dataclass
class MinMaxReport:
    rho_min: float
    rho_max: float
    lower_bound: float
    upper_bound: float
    slack_needed: float
    slack_allowed: float

    @property
    def ok(self) -> bool:
        return self.rho_min > 0 and self.slack_needed <= self.slack_allowed


def minmax_certificate(rho0_min, rho0_max, rho_min, rho_max, div_inf, tau, slack=0.0) -> MinMaxReport:
    """Compare density extrema with ``rho0 exp(-/+ int |div v|_inf)``.

    Parameters
    ----------
    rho0_min, rho0_max : float
        Extrema of the initial density.
    rho_min, rho_max : array_like
        Extrema after each step.
    div_inf : array_like
        ``|div v|_inf`` of each step.
    tau : float or array_like
        Step lengths.
    slack : float
        Allowed relative excess; the check passes if both extrema lie within
        the envelope widened by the factor ``1 + slack``.
    """
    rho_min = np.asarray(rho_min, float)
    rho_max = np.asarray(rho_max, float)
    integral = np.cumsum(np.broadcast_to(tau, np.shape(div_inf)) * np.asarray(div_inf, float))
    lo = rho0_min * np.exp(-integral)
    hi = rho0_max * np.exp(integral)
    need = 1.0
    if len(rho_min):
        need = max(1.0, float(np.max(rho_max / hi)), float(np.max(lo / rho_min)))
    return MinMaxReport(float(rho_min.min()) if len(rho_min) else rho0_min,
                        float(rho_max.max()) if len(rho_max) else rho0_max,
                        float(lo[-1]) if len(lo) else rho0_min,
                        float(hi[-1]) if len(hi) else rho0_max,
                        need, 1.0 + slack)


@dataclass
class TransportRecord:
    """Per-step data needed by the renormalized continuity check."""

    tau: float
    epsilon: float
    mass_old: np.ndarray      # lumped masses on Omega_k
    mass_new: np.ndarray      # lumped masses on Omega_{k+1}
    rho_old: np.ndarray
    rho_tilde: np.ndarray
    rho_new: np.ndarray
    tris: np.ndarray
    area_old: np.ndarray
    div_v: np.ndarray         # div v_{k+1} per element of Omega_k
    K_rho_tilde: np.ndarray   # stiffness on Omega_k applied to rho_tilde


def renormalization_step_residual(rec: TransportRecord, theta, dtheta) -> float:
    """Discrete residual of ``d/dt int theta(rho) + int (rho theta' - theta) div v + eps int theta'' |grad rho|^2``.

    The diffusion term is written as ``theta'(rho_tilde)^T K rho_tilde``.
    """
    dt = (rec.mass_new @ theta(rec.rho_new) - rec.mass_old @ theta(rec.rho_old)) / rec.tau
    g = rec.rho_tilde * dtheta(rec.rho_tilde) - theta(rec.rho_tilde)
    transport = float(rec.area_old @ (g[rec.tris].mean(axis=1) * rec.div_v))
    diffusion = rec.epsilon * float(dtheta(rec.rho_tilde) @ rec.K_rho_tilde)
    return abs(dt + transport + diffusion)


def renormalization_residual(records, theta, dtheta) -> float:
    """Largest per-step renormalization residual over a run segment."""
    return max((renormalization_step_residual(r, theta, dtheta) for r in records), default=0.0)
