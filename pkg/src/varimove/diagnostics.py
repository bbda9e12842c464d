"""Energy ledger, inequality checker and per-step monitors."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import constitutive as cst
from .mesh.geometry import QUAD_BARY, QUAD_WEIGHTS, P1Space, scalar_at_quadrature

LHS_TERMS = ("elastic", "pressure_potential", "diss_solid", "diss_viscous", "diss_kappa_fluid",
             "diss_eps", "penalty_solid", "penalty_fluid")
WORK_TERMS = ("work_solid", "work_fluid")
RHS_TERMS = ("elastic_prev", "pressure_prev", "supply_solid", "supply_fluid")


@dataclass
class EnergyReport:
    """Energy decomposition of one accepted step.

    Dissipation, penalty and work entries are already multiplied by the
    step length, so the discrete inequality reads ``lhs <= rhs`` with
    ``lhs = elastic + pressure_potential + dissipations + penalties - work``
    and ``rhs = elastic_prev + pressure_prev + supplies``.
    """

    elastic: float
    pressure_potential: float
    kinetic_fluid: float
    kinetic_solid: float
    diss_solid: float
    diss_viscous: float
    diss_kappa_fluid: float
    diss_eps: float
    penalty_solid: float
    penalty_fluid: float
    supply_solid: float
    supply_fluid: float
    work_solid: float
    work_fluid: float
    elastic_prev: float
    pressure_prev: float

    @property
    def dissipation(self) -> float:
        return self.diss_solid + self.diss_viscous + self.diss_kappa_fluid + self.diss_eps

    @property
    def lhs(self) -> float:
        return (self.elastic + self.pressure_potential + self.dissipation
                + self.penalty_solid + self.penalty_fluid - self.work_solid - self.work_fluid)

    @property
    def rhs(self) -> float:
        return self.elastic_prev + self.pressure_prev + self.supply_solid + self.supply_fluid

    def as_dict(self) -> dict:
        return asdict(self)


def potential_energy(rho, space: P1Space, fp) -> float:
    """``sum_i m_i H_delta(rho_i)`` with lumped masses."""
    return float(space.lumped_mass() @ cst.potential_delta(rho, fp))


def energy_report(result, elastic_prev: float) -> EnergyReport:
    """Energy decomposition of a solved step (see :class:`EnergyReport`)."""
    prob = result.problem
    p = prob.params
    fp, ep = p.fluid, p.elastic
    st = prob.state
    terms = prob.terms(result.x)
    new_space = P1Space(result.fluid.nodes, result.fluid.triangles)
    U_new = potential_energy(result.rho, new_space, fp)
    U_prev = potential_energy(st.rho, prob.fspace, fp)
    K = prob.fspace.stiffness_matrix()
    diss_eps = p.tau * fp.epsilon * float(cst.dpotential_delta(prob.rho_tilde, fp) @ (K @ prob.rho_tilde))
    D, _ = prob.unpack(result.x)
    b = D / p.tau
    zeta = prob.zeta
    M = prob.ctx.mass
    vq = np.einsum("qj,tja->tqa", QUAD_BARY, result.v[st.fluid.triangles])
    kin_f = 0.5 * float(np.sum(prob.qw[..., None] * prob.rho_q[..., None] * vq * vq))
    w0 = np.sum((st.w_area[:, None] * QUAD_WEIGHTS[None, :])[..., None] * st.w * st.w)
    elastic = cst.elastic_energy_kappa(prob.ctx.space, result.eta, ep, gradient=False)[0]
    return EnergyReport(
        elastic=elastic,
        pressure_potential=U_new,
        kinetic_fluid=kin_f,
        kinetic_solid=0.5 * fp.rho_s * float(b @ (M @ b)),
        diss_solid=terms["diss_solid"],
        diss_viscous=terms["viscous"],
        diss_kappa_fluid=terms["kappa_fluid"],
        diss_eps=diss_eps,
        penalty_solid=terms["inertia_solid"],
        penalty_fluid=terms["inertia_fluid"],
        supply_solid=p.tau / (2 * p.h) * fp.rho_s * float(zeta @ (M @ zeta)),
        supply_fluid=p.tau / (2 * p.h) * float(w0),
        work_solid=-terms["work_solid"],
        work_fluid=-terms["work_fluid"],
        elastic_prev=elastic_prev,
        pressure_prev=U_prev,
    )


@dataclass
class InequalityReport:
    n_steps: int
    worst_step_margin: float
    worst_step: int
    worst_cumulative_margin: float
    worst_cumulative_step: int
    violations: list

    @property
    def ok(self) -> bool:
        return not self.violations


def check_energy_inequality(reports, slack_rel: float = 1e-10, negate_dissipation: bool = False) -> InequalityReport:
    """Check the per-step and the concatenated discrete energy inequality.

    Parameters
    ----------
    reports : sequence of EnergyReport or dict
        One entry per accepted step, in order.
    slack_rel : float
        A step passes if ``lhs <= rhs + slack_rel (1 + |rhs|)``.
    negate_dissipation : bool
        Fault injection: flip the sign of every dissipation entry.

    Returns
    -------
    InequalityReport
        Margins are ``rhs - lhs``; ``violations`` lists ``(kind, step, value)``
        with kind ``step``, ``cumulative`` or ``dissipation`` (a negative
        dissipation entry).
    """
    worst, worst_k = np.inf, -1
    cworst, cworst_k = np.inf, -1
    viol = []
    cum_l = cum_r = 0.0
    start = None
    for k, r in enumerate(reports):
        d = r if isinstance(r, dict) else r.as_dict()
        sgn = -1.0 if negate_dissipation else 1.0
        parts = [sgn * d[n] for n in ("diss_solid", "diss_viscous", "diss_kappa_fluid", "diss_eps")]
        if min(parts) < -slack_rel * (1 + abs(d["elastic_prev"] + d["pressure_prev"])):
            viol.append(("dissipation", k, min(parts)))
        diss = sum(parts)
        flux_l = diss + d["penalty_solid"] + d["penalty_fluid"] - d["work_solid"] - d["work_fluid"]
        flux_r = d["supply_solid"] + d["supply_fluid"]
        lhs = d["elastic"] + d["pressure_potential"] + flux_l
        rhs = d["elastic_prev"] + d["pressure_prev"] + flux_r
        m = rhs - lhs
        if m < worst:
            worst, worst_k = m, k
        if m < -slack_rel * (1 + abs(rhs)):
            viol.append(("step", k, m))
        if start is None:
            start = d["elastic_prev"] + d["pressure_prev"]
        cum_l += flux_l
        cum_r += flux_r
        c_lhs = d["elastic"] + d["pressure_potential"] + cum_l
        c_rhs = start + cum_r
        cm = c_rhs - c_lhs
        if cm < cworst:
            cworst, cworst_k = cm, k
        if cm < -slack_rel * (1 + abs(c_rhs)):
            viol.append(("cumulative", k, cm))
    return InequalityReport(len(reports), worst, worst_k, cworst, cworst_k, viol)


def fluid_gradient_norms(fluid, v):
    """``(|div v|_inf, |grad v|_inf)`` over elements (Frobenius norm)."""
    space = P1Space(fluid.nodes, fluid.triangles)
    gv = space.element_gradients(v)
    return (float(np.max(np.abs(gv[:, 0, 0] + gv[:, 1, 1]))),
            float(np.max(np.linalg.norm(gv, axis=(1, 2)))))


def handoff_norms(w, w_area, rho_src_q, v_src_q, area_src):
    """``(int |w|^2 on the anchor mesh, int rho |v|^2 on the source mesh)``."""
    lhs = float(np.sum((w_area[:, None] * QUAD_WEIGHTS)[..., None] * w * w))
    rhs = float(np.sum((area_src[:, None] * QUAD_WEIGHTS)[..., None] * rho_src_q[..., None] * v_src_q * v_src_q))
    return lhs, rhs


def density_at_quadrature(rho, tris):
    return scalar_at_quadrature(np.asarray(rho, float), tris)
