"""Per-step incremental functional in displacement variables.

The unknowns are the solid displacement ``D = eta - eta_k`` on non-clamped
solid nodes and the fluid displacement ``U = tau v`` on fluid nodes that are
neither on the wall nor on the interface. Interface fluid nodes copy the
displacement of the solid node they are attached to, wall nodes stay put.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .. import constitutive as cst
from ..config import SchemeParams
from ..errors import InadmissibleDeformation, NonPositiveJacobian
from ..mesh.admissibility import boundary_is_simple
from ..mesh.geometry import QUAD_WEIGHTS, P1Space, interior_edges, scalar_at_quadrature
from ..mesh.types import FluidMesh, ReferenceSolidMesh
from ..transport import neumann_resolvent

TERMS = ("elastic", "pressure", "diss_solid", "viscous", "kappa_fluid",
         "inertia_solid", "inertia_fluid", "work_solid", "work_fluid")


class SolidContext:
    """Time-independent solid data: reference mesh, FE space, mass matrix."""

    def __init__(self, mesh: ReferenceSolidMesh):
        self.mesh = mesh
        self.space = P1Space(mesh.nodes, mesh.elements)
        self.mass = self.space.vector_mass_matrix()
        self.free = mesh.free_nodes
        self.loop = mesh.loop()
        self.ref_area = mesh.area
        self.space.jump  # build once


@dataclass
class StepState:
    """Data entering one tau-step.

    Attributes
    ----------
    eta : (Ns, 2) ndarray
        Solid deformation eta_k.
    fluid : FluidMesh
        Fluid domain Omega_k.
    rho : (Nf,) ndarray
        Nodal density rho_k.
    zeta : (Ns, 2) ndarray
        Solid velocity one velocity-scale step earlier.
    w : (T, 3, 2) ndarray
        Fluid handoff field at quadrature points of the window's initial mesh.
    w_area : (T,) ndarray
        Element areas of the window's initial mesh.
    f_s : (Ns, 2) ndarray
        Solid body force density at the left end of the step.
    f_f : (T, 3, 2) ndarray
        Fluid body force per unit mass at the quadrature points.
    """

    eta: np.ndarray
    fluid: FluidMesh
    rho: np.ndarray
    zeta: np.ndarray
    w: np.ndarray
    w_area: np.ndarray
    f_s: np.ndarray
    f_f: np.ndarray
    time: float = 0.0
    step: int = 0
    extra: dict = field(default_factory=dict)


def _selection(n_nodes: int, owners: np.ndarray, n_vars_nodes: int, offset: int) -> sp.csr_matrix:
    """Map variables to flat nodal vectors; ``owners[i]`` is the variable node of i or -1."""
    rows, cols = [], []
    for d in range(2):
        ok = owners >= 0
        rows.append(2 * np.flatnonzero(ok) + d)
        cols.append(offset + 2 * owners[ok] + d)
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    return sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(2 * n_nodes, offset + 2 * n_vars_nodes))


class StepProblem:
    """Objective and gradient of one incremental step.

    Parameters
    ----------
    ctx : SolidContext
    state : StepState
    params : SchemeParams
    active : iterable of str, optional
        Subset of :data:`TERMS` to include (all by default).
    """

    def __init__(self, ctx: SolidContext, state: StepState, params: SchemeParams, active=None):
        self.ctx, self.state, self.params = ctx, state, params
        self.active = frozenset(TERMS if active is None else active)
        unknown = self.active - set(TERMS)
        if unknown:
            raise ValueError(f"unknown terms {sorted(unknown)}")
        p, fp = params, params.fluid
        self.tau, self.h = p.tau, p.h
        fl = state.fluid
        self.fspace = P1Space(fl.nodes, fl.triangles)
        if np.any(self.fspace.area <= 0):
            raise NonPositiveJacobian("fluid mesh has inverted elements")
        self.nf = len(fl.nodes)
        self.ns = len(ctx.mesh.nodes)

        # variable layout: solid free nodes first, then fluid interior nodes
        s_owner = -np.ones(self.ns, dtype=np.int64)
        s_owner[ctx.free] = np.arange(len(ctx.free))
        n_sv = len(ctx.free)
        f_free = np.ones(self.nf, bool)
        f_free[fl.outer_boundary_nodes] = False
        f_free[fl.interface_nodes] = False
        self.fluid_free = np.flatnonzero(f_free)
        f_owner = -np.ones(self.nf, dtype=np.int64)
        f_owner[self.fluid_free] = n_sv + np.arange(len(self.fluid_free))
        for i, s in fl.interface_node_map.items():
            f_owner[i] = s_owner[s]  # -1 for clamped solid nodes
        self.n_var = 2 * (n_sv + len(self.fluid_free))
        self.Ps = _selection(self.ns, s_owner, n_sv, 0)
        self.Ps.resize((2 * self.ns, self.n_var))
        self.Pf = _selection(self.nf, f_owner, n_sv + len(self.fluid_free), 0)
        self.s_owner, self.f_owner = s_owner, f_owner

        # density data on Omega_k
        self.mass_k = self.fspace.lumped_mass()
        self.rho_tilde = neumann_resolvent(state.rho, self.fspace, self.tau * fp.epsilon, p.lumped_mass)
        tris = fl.triangles
        w_avg = np.repeat(self.fspace.area / 3.0, 3) / self.mass_k[tris.ravel()]
        self.avg = sp.csr_matrix((w_avg, (tris.ravel(), np.repeat(np.arange(len(tris)), 3))),
                                 shape=(self.nf, len(tris)))
        self.avgT = self.avg.T.tocsr()
        self.rho_q = scalar_at_quadrature(np.asarray(state.rho, float), tris)   # (T, 3)
        self.sqrt_rho_q = np.sqrt(self.rho_q)
        self.qw = (self.fspace.area[:, None] * QUAD_WEIGHTS[None, :])            # (T, 3)
        self.w_tilde = state.w * np.sqrt(state.w_area / self.fspace.area)[:, None, None]
        self.Fs = np.asarray(state.f_s, float).ravel()
        self.MFs = ctx.mass @ self.Fs
        self.zeta = np.asarray(state.zeta, float).ravel()
        self.eta_k = np.asarray(state.eta, float).ravel()
        self.Fk = cst.deformation_gradient(ctx.space, self.eta_k)
        self.f_q = np.asarray(state.f_f, float)
        self.n_evals = 0

    # ------------------------------------------------------------------ maps
    def unpack(self, x):
        """Flat nodal displacements ``(D, U)`` of solid and fluid."""
        return self.Ps @ x, self.Pf @ x

    def pack_gradient(self, gD, gU):
        return self.Ps.T @ gD + self.Pf.T @ gU

    def fluid_jacobians(self, U):
        Fu = np.eye(2)[None] + (self.fspace.G @ U).reshape(-1, 2, 2)
        return Fu, Fu[:, 0, 0] * Fu[:, 1, 1] - Fu[:, 0, 1] * Fu[:, 1, 0]

    def admissible(self, x) -> bool:
        D, U = self.unpack(x)
        return self._guards(self.eta_k + D, self.fluid_jacobians(U)[1])

    # ------------------------------------------------------------- evaluation
    def evaluate(self, x, gradient=True, guard=True, only=None):
        """Objective value and gradient; ``(inf, None)`` outside the admissible set.

        ``only`` restricts the evaluation to a subset of the active terms.
        """
        self.n_evals += 1
        D, U = self.unpack(x)
        p, fp, ep = self.params, self.params.fluid, self.params.elastic
        tau, h = self.tau, self.h
        eta = self.eta_k + D
        Fu, J = self.fluid_jacobians(U)
        if guard and not self._guards(eta, J):
            return np.inf, None
        gD = np.zeros_like(D)
        gU = np.zeros_like(U)
        f = 0.0
        act = self.active if only is None else self.active & set(only)
        try:
            if "elastic" in act:
                v, g = cst.elastic_energy_kappa(self.ctx.space, eta, ep, gradient)
                f += v
                if gradient:
                    gD += g
        except InadmissibleDeformation:
            return np.inf, None
        if "pressure" in act:
            v, g = self._pressure(Fu, J, gradient)
            if not np.isfinite(v):
                return np.inf, None
            f += v
            if gradient:
                gU += g
        if "diss_solid" in act:
            v, g = cst.dissipation_kappa(self.ctx.space, self.eta_k, D, ep.kappa, gradient)
            f += v / tau
            if gradient:
                gD += g / tau
        if "viscous" in act:
            gv = (self.fspace.G @ U).reshape(-1, 2, 2)
            S = cst.viscous_stress(gv, fp.mu, fp.lam)
            f += float(self.fspace.area @ np.einsum("tij,tij->t", S, gv)) / (2.0 * tau)
            if gradient:
                gU += self.fspace.G.T @ (self.fspace.area[:, None, None] * S).ravel() / tau
        if "kappa_fluid" in act:
            v, g = cst.kappa_regularizer(self.fspace, U, ep.kappa, gradient)
            f += v / (2.0 * tau)
            if gradient:
                gU += g / (2.0 * tau)
        if "inertia_solid" in act:
            r = D - tau * self.zeta
            Mr = self.ctx.mass @ r
            f += fp.rho_s * float(r @ Mr) / (2.0 * h * tau)
            if gradient:
                gD += fp.rho_s * Mr / (h * tau)
        if "inertia_fluid" in act:
            Uq = (self.fspace.Q @ U).reshape(-1, 3, 2)
            r = self.sqrt_rho_q[..., None] * Uq - tau * self.w_tilde
            f += float(np.sum(self.qw[..., None] * r * r)) / (2.0 * h * tau)
            if gradient:
                gU += self.fspace.Q.T @ (self.qw[..., None] * self.sqrt_rho_q[..., None] * r).ravel() / (h * tau)
        if "work_solid" in act:
            f -= float(D @ self.MFs)
            if gradient:
                gD -= self.MFs
        if "work_fluid" in act:
            Uq = (self.fspace.Q @ U).reshape(-1, 3, 2)
            wq = (self.qw * self.rho_q)[..., None] * self.f_q
            f -= float(np.sum(wq * Uq))
            if gradient:
                gU -= self.fspace.Q.T @ wq.ravel()
        if not gradient:
            return f, None
        return f, self.pack_gradient(gD, gU)

    def __call__(self, x):
        return self.evaluate(x)

    def _guards(self, eta, J) -> bool:
        floor = self.params.jacobian_floor
        if np.min(J) <= floor:
            return False
        F = cst.deformation_gradient(self.ctx.space, eta)
        if np.min(F[:, 0, 0] * F[:, 1, 1] - F[:, 0, 1] * F[:, 1, 0]) <= floor:
            return False
        return boundary_is_simple(self.ctx.mesh, eta.reshape(-1, 2), self.ctx.loop)

    def _pressure(self, Fu, J, gradient):
        """``sum_i m_i Jbar_i H(rho_tilde_i / Jbar_i)`` and its U-derivative."""
        fp = self.params.fluid
        jbar = self.avg @ J
        rho_new = self.rho_tilde / jbar
        if np.any(rho_new < 0):
            return np.inf, None
        value = float(self.mass_k @ (jbar * cst.potential_delta(rho_new, fp)))
        if not gradient:
            return value, None
        # d/dJbar [Jbar H(r/Jbar)] = -p(r/Jbar)
        dJ = self.avgT @ (-self.mass_k * cst.pressure_delta(rho_new, fp))
        cof = np.empty_like(Fu)
        cof[:, 0, 0], cof[:, 0, 1] = Fu[:, 1, 1], -Fu[:, 1, 0]
        cof[:, 1, 0], cof[:, 1, 1] = -Fu[:, 0, 1], Fu[:, 0, 0]
        return value, self.fspace.G.T @ (dJ[:, None, None] * cof).ravel()

    # -------------------------------------------------------------- reporting
    def terms(self, x) -> dict:
        """Individual contributions to the objective at ``x``."""
        return {t: self.evaluate(x, gradient=False, guard=False, only=(t,))[0]
                for t in TERMS if t in self.active}

    def density_after(self, x):
        """``rho_{k+1}`` and the element factors for the displacement ``x``."""
        _, U = self.unpack(x)
        _, J = self.fluid_jacobians(U)
        return self.rho_tilde / (self.avg @ J), J

    def candidate_value(self) -> float:
        return self.evaluate(np.zeros(self.n_var), gradient=False)[0]

    # ---------------------------------------------------------- sparsity data
    def hessian_pattern(self) -> sp.csr_matrix:
        """Structural nonzeros of the Hessian in variable space."""
        mesh = self.ctx.mesh
        cliques = []
        add = cliques.append
        svar, fvar = self.s_owner, self.f_owner  # variable-node index or -1
        for tri in mesh.elements:
            add(svar[tri])
        _, pl, mi = interior_edges(mesh.elements)
        for a, b in zip(pl, mi):
            add(np.concatenate([svar[mesh.elements[a]], svar[mesh.elements[b]]]))
        tris = self.state.fluid.triangles
        for tri in tris:
            add(fvar[tri])
        _, pl, mi = interior_edges(tris)
        for a, b in zip(pl, mi):
            add(np.concatenate([fvar[tris[a]], fvar[tris[b]]]))
        # Jbar couples every node in the element star of a node
        star = [[] for _ in range(self.nf)]
        for e, tri in enumerate(tris):
            for i in tri:
                star[i].append(e)
        for i in range(self.nf):
            add(fvar[np.unique(tris[star[i]].ravel())])
        rows, cols = [], []
        for c, cl in enumerate(cliques):
            cl = np.unique(cl[cl >= 0])
            rows.append(np.full(len(cl), c))
            cols.append(cl)
        rows, cols = np.concatenate(rows), np.concatenate(cols)
        n_nodes = self.n_var // 2
        C = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(len(cliques), n_nodes))
        node_pat = (C.T @ C).tocsr()
        node_pat.data[:] = 1.0
        return sp.kron(node_pat, np.ones((2, 2)), format="csr")
