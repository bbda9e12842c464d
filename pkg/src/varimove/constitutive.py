"""Elastic energy, dissipation, regularizers, viscous stress and barotropic pressure.

Solid fields are linear on the reference triangulation, so deformation
gradients are constant per element. The second-gradient terms use the
jump of the gradient across interior edges (see :func:`second_gradient_seminorm`).
"""
from __future__ import annotations

import numpy as np
from scipy.optimize import brentq

from .config import ElasticParams, FluidParams
from .errors import InadmissibleDeformation, NegativeDensity
from .mesh.geometry import P1Space

I2 = np.eye(2)


def _det(F):
    return F[..., 0, 0] * F[..., 1, 1] - F[..., 0, 1] * F[..., 1, 0]


def _cof(F):
    """Cofactor matrix, ``det(F) F^{-T}``."""
    C = np.empty_like(F)
    C[..., 0, 0] = F[..., 1, 1]
    C[..., 0, 1] = -F[..., 1, 0]
    C[..., 1, 0] = -F[..., 0, 1]
    C[..., 1, 1] = F[..., 0, 0]
    return C


def _tr(M):
    return M[..., 0, 0] + M[..., 1, 1]


def _T(M):
    return np.swapaxes(M, -1, -2)


# ---------------------------------------------------------------- elasticity

def elasticity_action(M, ep: ElasticParams):
    """``C M = 2 mu_s M + lambda_s tr(M) I``."""
    return 2.0 * ep.mu_s * M + ep.lambda_s * _tr(M)[..., None, None] * I2


def stored_energy_density(F, ep: ElasticParams):
    """Local part of the prototype energy density, ``(C G : G + det^{-a}) / 8``.

    ``G = F^T F - I``. Returns ``inf`` where ``det F <= 0``.
    """
    G = _T(F) @ F - I2
    J = _det(F)
    with np.errstate(divide="ignore", invalid="ignore"):
        pen = np.where(J > 0, np.abs(J) ** (-ep.a), np.inf)
    return (np.einsum("...ij,...ij->...", elasticity_action(G, ep), G) + pen) / 8.0


def first_piola(F, ep: ElasticParams):
    """Derivative of :func:`stored_energy_density` with respect to F."""
    G = _T(F) @ F - I2
    J = _det(F)
    cof = _cof(F)
    # d det^{-a} / dF = -a det^{-a-1} cof(F)
    return (4.0 * F @ elasticity_action(G, ep) - ep.a * (J ** (-ep.a - 1.0))[..., None, None] * cof) / 8.0


def second_gradient_seminorm(space: P1Space, u, q: float = 2.0, gradient: bool = True):
    """Discrete ``int |D^2 u|^q`` from gradient jumps across interior edges.

    Each interior edge E contributes ``W_E |[grad u]_E / l_E|^q`` where
    ``W_E`` is the area of the two adjacent triangles and ``l_E = W_E / |E|``.
    For ``q = 2`` this is the usual interior-penalty surrogate of the
    Hessian seminorm.

    Returns
    -------
    value : float
    grad : ndarray or None
        Derivative with respect to the flat nodal vector ``u``.
    """
    B, W, ell = space.jump
    J = (B @ np.ravel(u)).reshape(-1, 4)
    nJ = np.sqrt(np.einsum("ij,ij->i", J, J))
    value = float(np.sum(W * (nJ / ell) ** q))
    if not gradient:
        return value, None
    if q == 2:
        coef = 2.0 * W / ell ** 2
    else:
        coef = q * W * nJ ** (q - 2.0) / ell ** q
    return value, B.T @ (coef[:, None] * J).ravel()


def kappa_regularizer(space: P1Space, u, kappa: float, gradient: bool = True):
    """``kappa`` times the discrete squared second-gradient seminorm."""
    v, g = second_gradient_seminorm(space, u, 2.0, gradient)
    return kappa * v, (None if g is None else kappa * g)


def deformation_gradient(space: P1Space, eta):
    return (space.G @ np.ravel(eta)).reshape(-1, 2, 2)


def elastic_energy(space: P1Space, eta, ep: ElasticParams, gradient: bool = True):
    """Prototype stored energy of a linear deformation on the reference mesh.

    ``E = sum_T |T| W(grad eta) + S_q(eta) / (8 q)``.

    Raises
    ------
    InadmissibleDeformation
        If any element has ``det grad eta <= 0``.
    """
    F = deformation_gradient(space, eta)
    J = _det(F)
    if np.any(J <= 0):
        raise InadmissibleDeformation(f"det grad eta = {J.min():.3e} <= 0")
    W = stored_energy_density(F, ep)
    sq, gq = second_gradient_seminorm(space, eta, ep.q, gradient)
    value = float(space.area @ W) + sq / (8.0 * ep.q)
    if not gradient:
        return value, None
    P = first_piola(F, ep) * space.area[:, None, None]
    return value, space.G.T @ P.ravel() + gq / (8.0 * ep.q)


def elastic_energy_kappa(space: P1Space, eta, ep: ElasticParams, gradient: bool = True):
    """``E_kappa = E + kappa S_2``."""
    v, g = elastic_energy(space, eta, ep, gradient)
    kv, kg = kappa_regularizer(space, eta, ep.kappa, gradient)
    return v + kv, (None if g is None else g + kg)


def dissipation(space: P1Space, eta, b, gradient: bool = True):
    """``R(eta, b) = int |grad b^T grad eta + grad eta^T grad b|^2`` and its b-derivative."""
    F = deformation_gradient(space, eta)
    Gb = deformation_gradient(space, b)
    A = _T(Gb) @ F + _T(F) @ Gb
    value = float(space.area @ np.einsum("tij,tij->t", A, A))
    if not gradient:
        return value, None
    return value, space.G.T @ (4.0 * space.area[:, None, None] * (F @ A)).ravel()


def dissipation_kappa(space: P1Space, eta, b, kappa: float, gradient: bool = True):
    """``R_kappa = R + kappa S_2(b)``."""
    v, g = dissipation(space, eta, b, gradient)
    kv, kg = kappa_regularizer(space, b, kappa, gradient)
    return v + kv, (None if g is None else g + kg)


# ---------------------------------------------------------------- fluid

def viscous_stress(gv, mu: float, lam: float):
    """Newtonian stress ``2 mu (sym grad v - div v I / 3) + lam div v I``.

    The deviatoric factor 1/3 is used in two dimensions as well.
    """
    gv = np.asarray(gv, dtype=float)
    d = _tr(gv)[..., None, None]
    return 2.0 * mu * (0.5 * (gv + _T(gv)) - d * I2 / 3.0) + lam * d * I2


def viscous_dissipation(gv, mu: float, lam: float):
    """Integrand ``S(grad v) : grad v``."""
    return np.einsum("...ij,...ij->...", viscous_stress(gv, mu, lam), gv)


def _check_density(rho):
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise NegativeDensity(f"density {rho.min():.3e} < 0")
    return rho


def pressure(rho, fp: FluidParams):
    """``p = a_p rho^gamma``."""
    rho = _check_density(rho)
    return fp.a_p * rho ** fp.gamma


def pressure_potential(rho, fp: FluidParams):
    """``H = a_p rho^gamma / (gamma - 1)``, so that ``p = H' rho - H``."""
    rho = _check_density(rho)
    return fp.a_p * rho ** fp.gamma / (fp.gamma - 1.0)


def pressure_delta(rho, fp: FluidParams):
    """``p_delta = p + delta rho^beta + delta rho^2``."""
    rho = _check_density(rho)
    return fp.a_p * rho ** fp.gamma + fp.delta * (rho ** fp.beta + rho ** 2)


def potential_delta(rho, fp: FluidParams):
    """``H_delta = H + delta rho^beta / (beta - 1) + delta rho^2``."""
    rho = _check_density(rho)
    return (fp.a_p * rho ** fp.gamma / (fp.gamma - 1.0)
            + fp.delta * (rho ** fp.beta / (fp.beta - 1.0) + rho ** 2))


def dpotential_delta(rho, fp: FluidParams):
    """First derivative ``H_delta'``."""
    rho = _check_density(rho)
    g, b = fp.gamma, fp.beta
    return (fp.a_p * g / (g - 1.0) * rho ** (g - 1.0)
            + fp.delta * (b / (b - 1.0) * rho ** (b - 1.0) + 2.0 * rho))


def d2potential_delta(rho, fp: FluidParams):
    """Second derivative ``H_delta'' = p_delta' / rho``."""
    rho = _check_density(rho)
    g, b = fp.gamma, fp.beta
    return fp.a_p * g * rho ** (g - 2.0) + fp.delta * (b * rho ** (b - 2.0) + 2.0)


def dpressure_delta(rho, fp: FluidParams):
    rho = _check_density(rho)
    g, b = fp.gamma, fp.beta
    return fp.a_p * g * rho ** (g - 1.0) + fp.delta * (b * rho ** (b - 1.0) + 2.0 * rho)


def d2pressure_delta(rho, fp: FluidParams):
    rho = _check_density(rho)
    g, b = fp.gamma, fp.beta
    return (fp.a_p * g * (g - 1.0) * rho ** (g - 2.0)
            + fp.delta * (b * (b - 1.0) * rho ** (b - 2.0) + 2.0))


def density_for_pressure(target: float, fp: FluidParams) -> float:
    """Density with ``p_delta(rho) = target`` (the pressure is increasing)."""
    hi = 1.0
    while pressure_delta(hi, fp) < target:
        hi *= 2.0
    return float(brentq(lambda r: pressure_delta(r, fp) - target, 0.0, hi, xtol=1e-15, rtol=1e-15))
