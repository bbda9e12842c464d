"""Shipped scenarios and construction of initial data from parameters."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from . import constitutive as cst
from .config import ForceSpec, SchemeParams
from .mesh.generate import HalfDiskGeometry, container_with_cavity, half_disk_solid
from .mesh.meshio import read_fluid_mesh, read_solid_mesh


def geometry_for(params: SchemeParams) -> HalfDiskGeometry:
    s = params.mesh_scale
    base = HalfDiskGeometry()
    return replace(base, n_arc=max(4, int(round(base.n_arc / s))),
                   n_chord=max(2, int(round(base.n_chord / s))),
                   solid_max_area=base.solid_max_area * s * s,
                   fluid_spacing=base.fluid_spacing * s,
                   fluid_max_area=base.fluid_max_area * s * s)


def build_meshes(params: SchemeParams):
    """Reference solid mesh and initial fluid mesh named by the parameters."""
    geo = geometry_for(params)
    if params.solid_mesh == "half-disk":
        solid = half_disk_solid(geo)
    else:
        solid = read_solid_mesh(params.solid_mesh)
    if params.fluid_mesh == "generate":
        fluid = container_with_cavity(solid, solid.nodes, geo)
    else:
        fluid = read_fluid_mesh(params.fluid_mesh, solid)
    return solid, fluid


def initial_density(params: SchemeParams, nodes: np.ndarray) -> np.ndarray:
    """Nodal initial density.

    ``params.rho0`` is ``uniform r``, ``linear r0 slope y0`` (``r0 + slope (y - y0)``)
    or ``equilibrium`` (uniform, with pressure balancing the unloaded solid).
    """
    parts = params.rho0.split()
    kind = parts[0]
    if kind == "uniform":
        return np.full(len(nodes), float(parts[1]))
    if kind == "linear":
        r0, slope, y0 = map(float, parts[1:4])
        return r0 + slope * (nodes[:, 1] - y0)
    if kind == "equilibrium":
        return np.full(len(nodes), rest_density(params))
    raise ValueError(f"unknown initial density {params.rho0!r}")


def rest_density(params: SchemeParams) -> float:
    """Uniform density whose pressure equals the identity stress ``a/8`` of the solid."""
    return cst.density_for_pressure(params.elastic.a / 8.0, params.fluid)


def rest_params(**kw) -> SchemeParams:
    """Unloaded solid in gas at the balancing pressure; stays at rest."""
    p = SchemeParams(rho0="equilibrium")
    return replace(p, **kw)


def falling_disk_params(**kw) -> SchemeParams:
    """Clamped half-disk sagging under gravity in a stratified gas.

    The pressure coefficient is chosen so that the mean density 1.5 balances
    the unloaded solid.
    """
    p = SchemeParams(rho0="linear 1.5 -1 0.5",
                     solid_force=ForceSpec("gravity", g=1.0),
                     fluid_force=ForceSpec("gravity", g=1.0))
    fp = p.fluid
    r = 1.5
    a_p = (p.elastic.a / 8.0 - fp.delta * (r ** fp.beta + r ** 2)) / r ** fp.gamma
    p = replace(p, fluid=replace(fp, a_p=a_p))
    return replace(p, **kw)


DEMOS = {"rest": rest_params, "falling-disk": falling_disk_params}
