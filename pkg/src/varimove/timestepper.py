"""Window loop: tau-steps inside each velocity-scale window and the handoff between windows."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .config import SchemeParams
from .diagnostics import EnergyReport, energy_report, fluid_gradient_norms, handoff_norms
from .errors import CollisionDetected, VarimoveError
from .mesh.admissibility import box_container, collision_distance
from .mesh.flowmap import FlowMapLedger
from .mesh.geometry import QUAD_BARY, P1Space, scalar_at_quadrature, signed_areas
from .mesh.types import FluidMesh, ReferenceSolidMesh
from .minimizer.elforms import el_pairings, reduce_to_bank
from .minimizer.objective import SolidContext, StepState
from .minimizer.step import PreconditionerCache, StepResult, minimize_step
from .scenarios import build_meshes, initial_density
from .transport import TransportRecord

log = logging.getLogger("varimove")


@dataclass
class WindowState:
    """Data handed to window ``index``.

    ``zeta[j]`` and ``w[j]`` are the solid velocity and the transported fluid
    quantity used by the j-th tau-step. ``src_*`` keep the previous window's
    raw fields from which ``w`` was built (density at the step start,
    velocity, element areas), used by the long-time momentum monitor.
    """

    index: int
    eta0: np.ndarray
    rho0: np.ndarray
    fluid0: FluidMesh
    zeta: np.ndarray          # (N, Ns, 2)
    w: np.ndarray             # (N, T, 3, 2)
    w_area: np.ndarray        # (T,)
    src_rho: np.ndarray       # (N, Nf)
    src_v: np.ndarray         # (N, Nf, 2)
    src_area: np.ndarray      # (N, T)


@dataclass
class StepRecord:
    """Everything kept about one accepted tau-step."""

    row: dict
    report: EnergyReport
    eta: np.ndarray = None
    v: np.ndarray = None
    rho: np.ndarray = None
    fluid_nodes: np.ndarray = None
    det_phi: np.ndarray = None
    transport: TransportRecord = None


@dataclass
class Trajectory:
    """Result of a run: initial data, per-step records and window handoff checks."""

    params: SchemeParams
    solid: ReferenceSolidMesh
    fluid0: FluidMesh
    eta0: np.ndarray
    rho0: np.ndarray
    records: list = field(default_factory=list)
    handoffs: list = field(default_factory=list)    # (window, max relative error)
    status: str = "running"
    error: str = ""

    @property
    def rows(self):
        return [r.row for r in self.records]

    @property
    def reports(self):
        return [r.report for r in self.records]

    def times(self):
        return np.array([0.0] + [r.row["time"] for r in self.records])

    def _eta_list(self):
        return [self.eta0] + [r.eta for r in self.records]

    def eta_constant(self, t):
        """Piecewise constant interpolant taking the new value on each step."""
        k = min(int(math.floor(t / self.params.tau + 1e-12)), len(self.records) - 1)
        return self._eta_list()[k + 1]

    def eta_lagged(self, t):
        """Piecewise constant interpolant taking the old value on each step."""
        k = min(int(math.floor(t / self.params.tau + 1e-12)), len(self.records) - 1)
        return self._eta_list()[k]

    def eta_affine(self, t):
        """Continuous piecewise affine interpolant in time."""
        tau = self.params.tau
        k = min(int(math.floor(t / tau + 1e-12)), len(self.records) - 1)
        s = t / tau - k
        etas = self._eta_list()
        return (1 - s) * etas[k] + s * etas[k + 1]


def force_arrays(params: SchemeParams, t: float, n_solid: int, n_tri: int):
    fs = np.asarray(params.solid_force.at(t)) * params.fluid.rho_s
    ff = np.asarray(params.fluid_force.at(t))
    return np.tile(fs, (n_solid, 1)), np.tile(ff, (n_tri, 3, 1))


def first_window(params: SchemeParams, eta0, rho0, fluid0: FluidMesh) -> WindowState:
    """Initial handoff: ``zeta = eta_1`` and ``w = q0 / sqrt(rho0)`` on the whole window."""
    N = params.h_over_tau
    ns, T = len(eta0), len(fluid0.triangles)
    zeta = np.tile(np.asarray(params.initial_solid_velocity, float), (N, ns, 1))
    q0 = np.asarray(params.initial_momentum, float)
    rho_q = scalar_at_quadrature(rho0, fluid0.triangles)
    w1 = q0[None, None, :] / np.sqrt(rho_q)[..., None]
    area = signed_areas(fluid0.nodes, fluid0.triangles)
    v0 = np.tile(q0, (len(rho0), 1)) / rho0[:, None]
    return WindowState(0, eta0.copy(), rho0.copy(), fluid0, zeta, np.tile(w1, (N, 1, 1, 1)), area,
                       np.tile(rho0, (N, 1)), np.tile(v0, (N, 1, 1)), np.tile(area, (N, 1)))


def handoff(window: WindowState, steps: list, fluid_end: FluidMesh, eta_end, rho_end, tau: float):
    """Build the next window's data from the steps of the finished window.

    ``steps[j]`` is ``(eta_j, eta_{j+1}, rho_j, v_{j+1}, area_j)``. Returns the
    new window state and the largest relative error of the norm identity
    ``int |w_j|^2 = int rho_j |v_{j+1}|^2``.
    """
    tris = fluid_end.triangles
    area_end = signed_areas(fluid_end.nodes, tris)
    zeta, w, s_rho, s_v, s_area = [], [], [], [], []
    worst = 0.0
    for eta_a, eta_b, rho_j, v_j, area_j in steps:
        zeta.append((eta_b - eta_a) / tau)
        rho_q = scalar_at_quadrature(rho_j, tris)
        v_q = np.einsum("qj,tja->tqa", QUAD_BARY, v_j[tris])
        wj = np.sqrt(rho_q)[..., None] * v_q * np.sqrt(area_j / area_end)[:, None, None]
        lhs, rhs = handoff_norms(wj, area_end, rho_q, v_q, area_j)
        if rhs > 0:
            worst = max(worst, abs(lhs - rhs) / rhs)
        elif lhs > 0:
            worst = max(worst, 1.0)
        w.append(wj)
        s_rho.append(rho_j)
        s_v.append(v_j)
        s_area.append(area_j)
    new = WindowState(window.index + 1, eta_end.copy(), rho_end.copy(), fluid_end, np.array(zeta),
                      np.array(w), area_end, np.array(s_rho), np.array(s_v), np.array(s_area))
    return new, worst


def discrete_inertia_terms(result: StepResult, window: WindowState, j: int):
    """Long-time inertial terms of a solved step, rebuilt from the previous window.

    Returns the solid term ``(rho_s/h)(d_t eta(t) - d_t eta(t-h))`` and the fluid
    term ``(1/h)(rho v - sqrt(rho(t) rho(t-h) det grad Phi_{-h}) v(t-h))`` paired
    with all nodal hat functions, as (Ns, 2) and (Nf, 2) arrays.
    """
    from .minimizer.elforms import _local_mass_apply
    prob = result.problem
    p = prob.params
    st = prob.state
    mesh = prob.ctx.mesh
    area_s = prob.ctx.space.area
    b = (result.eta - st.eta) / p.tau
    solid = p.fluid.rho_s / p.h * _local_mass_apply(len(mesh.nodes), mesh.elements, area_s, b - window.zeta[j])
    tris = st.fluid.triangles
    area_k = prob.fspace.area
    rho_q = scalar_at_quadrature(st.rho, tris)
    v_q = np.einsum("qj,tja->tqa", QUAD_BARY, result.v[tris])
    old_rho_q = scalar_at_quadrature(window.src_rho[j], tris)
    old_v_q = np.einsum("qj,tja->tqa", QUAD_BARY, window.src_v[j][tris])
    ratio = window.src_area[j] / area_k
    amp = np.sqrt(rho_q * old_rho_q * ratio[:, None])
    vals = (area_k[:, None] / 3.0)[..., None] * (rho_q[..., None] * v_q - amp[..., None] * old_v_q) / p.h
    fluid = np.zeros((len(st.fluid.nodes), 2))
    for jj in range(3):
        np.add.at(fluid, tris[:, jj], np.einsum("q,tqa->ta", QUAD_BARY[:, jj], vals))
    return solid, fluid


def momentum_residual(result: StepResult, window: WindowState, j: int) -> float:
    """Euler-Lagrange pairing with the inertial terms taken from the trajectory history."""
    solid, fluid = el_pairings(result.problem, result.x)
    solid.pop("inertia_solid")
    fluid.pop("inertia_fluid")
    ins, inf_ = discrete_inertia_terms(result, window, j)
    r = reduce_to_bank(result.problem, sum(solid.values()) + ins, sum(fluid.values()) + inf_)
    return float(np.max(np.abs(r))) if r.size else 0.0


CSV_COLUMNS = ["step", "window", "local_step", "time", "objective", "candidate", "grad_norm",
               "iterations", "backtracks", "min_det", "cn_defect", "el_residual",
               "momentum_residual", "mass", "mass_drift", "rho_min", "rho_max", "div_inf",
               "gradv_inf", "det_phi_min", "det_phi_max", "envelope_lo", "envelope_hi", "direct_det_error",
               "flowmap_residual", "collision_distance", "handoff_error",
               "elastic", "pressure_potential", "kinetic_fluid", "kinetic_solid", "diss_solid",
               "diss_viscous", "diss_kappa_fluid", "diss_eps", "penalty_solid", "penalty_fluid",
               "supply_solid", "supply_fluid", "work_solid", "work_fluid", "elastic_prev",
               "pressure_prev", "energy_margin"]


class Simulation:
    """Drives windows of ``h / tau`` steps from initial data.

    Parameters
    ----------
    params : SchemeParams
    meshes : tuple, optional
        ``(solid, fluid)``; built from the parameters when omitted.
    keep_fields : bool
        Store nodal fields of every step in the trajectory.
    on_step : callable, optional
        Called with each :class:`StepRecord` right after it is accepted.
    """

    def __init__(self, params: SchemeParams, meshes=None, keep_fields: bool = True, on_step=None,
                 check_el: bool = True):
        self.params = params
        solid, fluid = meshes if meshes is not None else build_meshes(params)
        self.solid = solid
        self.ctx = SolidContext(solid)
        self.keep_fields = keep_fields
        self.on_step = on_step
        self.check_el = check_el
        self.cache = PreconditionerCache()
        eta0 = solid.nodes.copy()
        rho0 = initial_density(params, fluid.nodes)
        self.eta, self.fluid, self.rho = eta0, fluid, rho0
        self.k = 0
        self.window = first_window(params, eta0, rho0, fluid)
        self.ledger = FlowMapLedger(fluid, (params.det_lo, params.det_hi))
        self.window_steps = []
        self.mass0 = float(P1Space(fluid.nodes, fluid.triangles).lumped_mass() @ rho0)
        self.elastic_now = None
        tol = params.collision_tol
        self.collision_tol = 2.0 * fluid.boundary_mesh_size() if math.isnan(tol) else tol
        r = params.exclusion_radius
        self.exclusion_radius = 2.0 * self.collision_tol if math.isnan(r) else r
        self.container = box_container()
        self.trajectory = Trajectory(params, solid, fluid, eta0.copy(), rho0.copy())

    @property
    def local_step(self) -> int:
        return self.k % self.params.h_over_tau

    def step_state(self) -> StepState:
        p, j = self.params, self.local_step
        t = self.k * p.tau
        fs, ff = force_arrays(p, t, len(self.eta), len(self.fluid.triangles))
        return StepState(self.eta, self.fluid, self.rho, self.window.zeta[j], self.window.w[j],
                         self.window.w_area, fs, ff, time=t, step=self.k)

    def advance(self) -> StepRecord:
        """Take one tau-step; performs the handoff when a window completes."""
        from . import constitutive as cst

        p = self.params
        j = self.local_step
        state = self.step_state()
        if self.elastic_now is None:
            self.elastic_now = cst.elastic_energy_kappa(self.ctx.space, self.eta, p.elastic, False)[0]
        res = minimize_step(self.ctx, state, p, cache=self.cache, check_el=self.check_el)
        rep = energy_report(res, self.elastic_now)
        prob = res.problem
        div_inf, gradv_inf = fluid_gradient_norms(state.fluid, res.v)
        det_before = self.ledger.running_det.copy()
        x_before = self.ledger.x.copy()
        self.ledger.compose(p.tau * res.v, res.factors, gradv_inf=gradv_inf, tau=p.tau)
        gv = prob.fspace.element_gradients(res.v)
        flow_res = max(
            float(np.max(np.abs((self.ledger.running_det - det_before) / p.tau
                                - (gv[:, 0, 0] + gv[:, 1, 1]) * det_before))),
            float(np.max(np.abs((self.ledger.x - x_before) / p.tau - res.v))))
        env_lo, env_hi = self.ledger.envelope()
        new_space = P1Space(res.fluid.nodes, res.fluid.triangles)
        mass_new = new_space.lumped_mass()
        mass = float(mass_new @ res.rho)
        mom = momentum_residual(res, self.window, j) if self.check_el else float("nan")
        coll = collision_distance(self.solid, res.eta, self.container, self.exclusion_radius)
        K = prob.fspace.stiffness_matrix()
        trec = TransportRecord(p.tau, p.fluid.epsilon, prob.mass_k, mass_new, np.asarray(state.rho),
                               prob.rho_tilde, res.rho, state.fluid.triangles, prob.fspace.area,
                               gv[:, 0, 0] + gv[:, 1, 1], K @ prob.rho_tilde)
        row = dict(step=self.k + 1, window=self.window.index, local_step=j, time=(self.k + 1) * p.tau,
                   objective=res.objective, candidate=res.candidate, grad_norm=res.grad_norm,
                   iterations=res.iterations, backtracks=res.backtracks, min_det=res.min_det,
                   cn_defect=res.cn_defect, el_residual=res.el_residual, momentum_residual=mom,
                   mass=mass, mass_drift=(mass - self.mass0) / self.mass0,
                   rho_min=float(res.rho.min()), rho_max=float(res.rho.max()),
                   div_inf=div_inf, gradv_inf=gradv_inf,
                   det_phi_min=float(self.ledger.running_det.min()),
                   det_phi_max=float(self.ledger.running_det.max()),
                   envelope_lo=env_lo, envelope_hi=env_hi,
                   direct_det_error=float(np.max(np.abs(self.ledger.direct_det() - self.ledger.running_det))),
                   flowmap_residual=flow_res, collision_distance=coll, handoff_error=float("nan"))
        row.update(rep.as_dict())
        row["energy_margin"] = rep.rhs - rep.lhs
        rec = StepRecord(row, rep, transport=trec)
        if self.keep_fields:
            rec.eta, rec.v, rec.rho, rec.fluid_nodes = res.eta, res.v, res.rho, res.fluid.nodes
            rec.det_phi = self.ledger.running_det.copy()
        self.window_steps.append((self.eta, res.eta, np.asarray(state.rho), res.v, prob.fspace.area))
        self.eta, self.fluid, self.rho = res.eta, res.fluid, res.rho
        self.elastic_now = rep.elastic
        self.k += 1
        self.trajectory.records.append(rec)
        if self.k % p.h_over_tau == 0:
            self.window, err = handoff(self.window, self.window_steps, self.fluid, self.eta, self.rho, p.tau)
            self.trajectory.handoffs.append((self.window.index, err))
            row["handoff_error"] = err
            self.ledger.anchor(self.window.index)
            self.window_steps = []
        log.info("step %d t=%.5f it=%d |g|=%.2e el=%.2e margin=%.2e", self.k, row["time"],
                 res.iterations, res.grad_norm, res.el_residual, row["energy_margin"])
        if self.on_step is not None:
            self.on_step(rec)
        if coll < self.collision_tol:
            raise CollisionDetected(f"collision distance {coll:.3e} below {self.collision_tol:.3e}")
        return rec

    def run(self, n_steps: int = None) -> Trajectory:
        """Advance ``n_steps`` steps (default: up to ``final_time``).

        Errors stop the run; the partial trajectory is kept with ``status``
        set to ``"error"`` and the exception re-raised.
        """
        p = self.params
        if n_steps is None:
            n_steps = max(0, int(round(p.final_time / p.tau)) - self.k)
        try:
            for _ in range(n_steps):
                self.advance()
        except VarimoveError as exc:
            self.trajectory.status = "error"
            self.trajectory.error = f"{type(exc).__name__}: {exc}"
            raise
        self.trajectory.status = "done"
        return self.trajectory


def run_window(sim: Simulation) -> list:
    """Advance ``sim`` through the remainder of its current window."""
    n = sim.params.h_over_tau - sim.local_step
    return [sim.advance() for _ in range(n)]


def run_simulation(params: SchemeParams, n_steps: int = None, **kw) -> Trajectory:
    """Run from the initial data described by ``params``."""
    return Simulation(params, **kw).run(n_steps)
