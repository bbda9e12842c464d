"""Euler-Lagrange residual of a step, assembled term by term.

The terms are written in their physical form (stresses paired with test
gradients, the pressure evaluated on the new domain) and assembled
element by element, independently of the objective's gradient code.
The test bank consists of the coupled nodal pairs ``(phi, b)``: a solid hat
function on a free node together with the fluid hat function on the
interface node attached to it, or a fluid hat function on an interior node.
"""
from __future__ import annotations

import numpy as np

from .. import constitutive as cst
from ..mesh.geometry import QUAD_BARY, QUAD_WEIGHTS, interior_edges, shape_gradients


def _scatter_grad(n_nodes, tris, grads, stress):
    """``out[j] += stress_e @ grad_j`` for every element e and local node j."""
    out = np.zeros((n_nodes, 2))
    for j in range(3):
        np.add.at(out, tris[:, j], np.einsum("tab,tb->ta", stress, grads[:, j]))
    return out


def _scatter_jump(n_nodes, x, tris, grads, area, u, coef_fn):
    """Pairing of the edge-jump functional derivative with nodal hat functions."""
    edges, plus, minus = interior_edges(tris)
    gu = np.einsum("tja,tjb->tab", u[tris], grads)
    J = gu[plus] - gu[minus]
    W = area[plus] + area[minus]
    ell = W / np.linalg.norm(x[edges[:, 0]] - x[edges[:, 1]], axis=1)
    C = coef_fn(J, W, ell)[:, None, None] * J
    out = np.zeros((n_nodes, 2))
    for j in range(3):
        np.add.at(out, tris[plus, j], np.einsum("eab,eb->ea", C, grads[plus, j]))
        np.add.at(out, tris[minus, j], -np.einsum("eab,eb->ea", C, grads[minus, j]))
    return out


def _local_mass_apply(n_nodes, tris, area, u):
    """Consistent P1 mass matrix times a nodal vector field."""
    out = np.zeros((n_nodes, 2))
    ue = u[tris]
    for i in range(3):
        s = (ue.sum(axis=1) + ue[:, i]) * (area / 12.0)[:, None]
        np.add.at(out, tris[:, i], s)
    return out


def el_pairings(problem, x) -> tuple[dict, dict]:
    """Per-term pairings on all solid and fluid nodes at the solution ``x``.

    Returns two dicts of (N, 2) arrays, one for the solid test functions and
    one for the fluid test functions.
    """
    st, p = problem.state, problem.params
    ep, fp = p.elastic, p.fluid
    tau, h = p.tau, p.h
    mesh = problem.ctx.mesh
    Y, tris_s = mesh.nodes, mesh.elements
    ns = len(Y)
    area_s, grads_s = shape_gradients(Y, tris_s)
    D, U = problem.unpack(x)
    D, U = D.reshape(-1, 2), U.reshape(-1, 2)
    eta_k = np.asarray(st.eta, float)
    eta = eta_k + D
    b = D / tau                      # solid velocity
    v = U / tau                      # fluid velocity on Omega_k
    solid, fluid = {}, {}

    F = np.einsum("tja,tjb->tab", eta[tris_s], grads_s)
    Pk = cst.first_piola(F, ep) * area_s[:, None, None]
    q = ep.q
    solid["elastic"] = (_scatter_grad(ns, tris_s, grads_s, Pk)
                        + _scatter_jump(ns, Y, tris_s, grads_s, area_s, eta,
                                        lambda J, W, l: q * W * np.linalg.norm(J, axis=(1, 2)) ** (q - 2) / l ** q) / (8 * q)
                        + _scatter_jump(ns, Y, tris_s, grads_s, area_s, eta,
                                        lambda J, W, l: 2 * ep.kappa * W / l ** 2))
    Fk = np.einsum("tja,tjb->tab", eta_k[tris_s], grads_s)
    Gb = np.einsum("tja,tjb->tab", b[tris_s], grads_s)
    A = np.swapaxes(Gb, 1, 2) @ Fk + np.swapaxes(Fk, 1, 2) @ Gb
    solid["diss_solid"] = (_scatter_grad(ns, tris_s, grads_s, 4.0 * area_s[:, None, None] * (Fk @ A))
                           + _scatter_jump(ns, Y, tris_s, grads_s, area_s, b,
                                           lambda J, W, l: 2 * ep.kappa * W / l ** 2))
    zeta = np.asarray(st.zeta, float).reshape(-1, 2)
    solid["inertia_solid"] = fp.rho_s / h * _local_mass_apply(ns, tris_s, area_s, b - zeta)
    solid["work_solid"] = -_local_mass_apply(ns, tris_s, area_s, np.asarray(st.f_s, float).reshape(-1, 2))

    fl = st.fluid
    X, tris_f = fl.nodes, fl.triangles
    nf = len(X)
    area_k, grads_k = shape_gradients(X, tris_f)
    gv = np.einsum("tja,tjb->tab", v[tris_f], grads_k)
    fluid["viscous"] = _scatter_grad(nf, tris_f, grads_k,
                                     area_k[:, None, None] * cst.viscous_stress(gv, fp.mu, fp.lam))
    fluid["kappa_fluid"] = _scatter_jump(nf, X, tris_f, grads_k, area_k, v,
                                         lambda J, W, l: ep.kappa * W / l ** 2)
    # pressure on the new domain
    rho_new, _ = problem.density_after(x)
    X1 = X + U
    area_1, grads_1 = shape_gradients(X1, tris_f)
    pbar = cst.pressure_delta(rho_new, fp)[tris_f].mean(axis=1)
    fluid["pressure"] = _scatter_grad(nf, tris_f, grads_1,
                                      -(area_1 * pbar)[:, None, None] * np.eye(2)[None])
    rho_q = np.asarray(st.rho, float)[tris_f] @ QUAD_BARY.T
    v_q = np.einsum("qj,tja->tqa", QUAD_BARY, v[tris_f])
    w_t = st.w * np.sqrt(st.w_area / area_k)[:, None, None]
    wq = area_k[:, None] * QUAD_WEIGHTS[None, :]
    inert_q = (wq[..., None] * (rho_q[..., None] * v_q - np.sqrt(rho_q)[..., None] * w_t)) / h
    force_q = -wq[..., None] * rho_q[..., None] * np.asarray(st.f_f, float)
    for name, vals in (("inertia_fluid", inert_q), ("work_fluid", force_q)):
        out = np.zeros((nf, 2))
        for j in range(3):
            np.add.at(out, tris_f[:, j], np.einsum("q,tqa->ta", QUAD_BARY[:, j], vals))
        fluid[name] = out
    return solid, fluid


def reduce_to_bank(problem, solid_total, fluid_total) -> np.ndarray:
    """Pairings with the coupled test pairs, one row per free node."""
    n_nodes = problem.n_var // 2
    out = np.zeros((n_nodes, 2))
    s_own, f_own = problem.s_owner, problem.f_owner
    ok = s_own >= 0
    np.add.at(out, s_own[ok], solid_total[ok])
    ok = f_own >= 0
    np.add.at(out, f_own[ok], fluid_total[ok])
    return out


def el_residual(problem, x, test_bank=None) -> float:
    """Largest Euler-Lagrange pairing over the test bank.

    Test functions are unit nodal hats (sup norm 1), so no further
    normalization is applied. ``test_bank`` may restrict the bank to a subset
    of free-node indices.
    """
    solid, fluid = el_pairings(problem, x)
    tot_s = sum(solid.values())
    tot_f = sum(fluid.values())
    r = reduce_to_bank(problem, tot_s, tot_f)
    if test_bank is not None:
        r = r[np.asarray(test_bank)]
    return float(np.max(np.abs(r))) if r.size else 0.0
