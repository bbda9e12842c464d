"""One incremental step: minimize, push the fluid mesh, transport the density."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..config import SchemeParams
from ..errors import InadmissibleDeformation, MeshQualityExhausted
from ..mesh.admissibility import ciarlet_necas_defect, min_det
from ..mesh.flowmap import push_forward_fluid_mesh
from ..mesh.geometry import min_angles
from ..mesh.types import FluidMesh
from ..transport import transport_density
from .elforms import el_residual
from .lbfgs import color_columns, fd_hessian, lbfgs, make_preconditioner
from .objective import SolidContext, StepProblem, StepState


@dataclass
class StepResult:
    """Outcome of :func:`minimize_step`."""

    eta: np.ndarray          # eta_{k+1}, (Ns, 2)
    v: np.ndarray            # v_{k+1} on Omega_k nodes, (Nf, 2)
    rho: np.ndarray          # rho_{k+1} on Omega_{k+1}
    fluid: FluidMesh         # Omega_{k+1}
    factors: np.ndarray      # det(I + tau grad v) per element
    x: np.ndarray
    problem: StepProblem
    objective: float
    candidate: float
    grad_norm: float
    iterations: int
    backtracks: int
    evaluations: int
    min_det: float
    cn_defect: float
    el_residual: float


class PreconditionerCache:
    """Hessian sparsity pattern and column coloring, reused across steps."""

    def __init__(self):
        self._key = None
        self.pattern = None
        self.colors = None

    def get(self, problem: StepProblem):
        key = (id(problem.ctx), problem.state.fluid.triangles.tobytes(), problem.n_var)
        if key != self._key:
            self.pattern = problem.hessian_pattern()
            self.colors = color_columns(self.pattern)
            self._key = key
        return self.pattern, self.colors


_DEFAULT_CACHE = PreconditionerCache()


def minimize_step(ctx: SolidContext, state: StepState, params: SchemeParams,
                  cache: PreconditionerCache = None, check_el: bool = True) -> StepResult:
    """Solve one incremental problem starting from the candidate ``(eta_k, 0)``.

    Raises
    ------
    LineSearchStall, MaxIterations
        From the optimizer.
    MeshQualityExhausted
        If the pushed fluid mesh has an angle below ``params.min_angle_floor``.
    InadmissibleDeformation
        If the accepted deformation has a Ciarlet-Necas defect above tolerance.
    """
    cache = cache or _DEFAULT_CACHE
    prob = StepProblem(ctx, state, params)
    x0 = np.zeros(prob.n_var)
    f0, g0 = prob.evaluate(x0)
    precond = None
    if np.max(np.abs(g0), initial=0.0) > params.grad_tol * (1.0 + abs(f0)):
        pattern, colors = cache.get(prob)
        H = fd_hessian(lambda z: prob.evaluate(z, guard=False)[1], x0, pattern, colors)
        precond = make_preconditioner(H, g0)
    res = lbfgs(prob.evaluate, x0, precond=precond, memory=params.lbfgs_memory,
                grad_tol=params.grad_tol, max_iter=params.max_iter)
    D, U = prob.unpack(res.x)
    eta = np.asarray(state.eta) + D.reshape(-1, 2)
    cn = ciarlet_necas_defect(ctx.mesh, eta)
    if cn > params.cn_tol * ctx.ref_area:
        raise InadmissibleDeformation(f"Ciarlet-Necas defect {cn:.3e} above tolerance")
    v = U.reshape(-1, 2) / params.tau
    pushed, factors = push_forward_fluid_mesh(state.fluid, v, params.tau, params.jacobian_floor)
    ang = float(np.degrees(min_angles(pushed.nodes, pushed.triangles).min()))
    if ang < params.min_angle_floor:
        raise MeshQualityExhausted(f"minimum fluid angle {ang:.2f} deg below {params.min_angle_floor:g}")
    rho = transport_density(prob.rho_tilde, pushed, factors)
    elr = el_residual(prob, res.x) if check_el else float("nan")
    return StepResult(eta, v, rho, pushed, factors, res.x, prob, res.f, f0, res.grad_norm,
                      res.iterations, res.backtracks, res.evaluations, min_det(ctx.mesh, eta), cn, elr)
