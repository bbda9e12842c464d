"""Parameters and the ``key = value`` configuration file.

The file has four sections::

    [scheme]  tau, h, final_time, kappa, epsilon, delta, tolerances
    [solid]   mu_s, lambda_s, rho_s, a, q, force, mesh
    [fluid]   mu, lambda, a_p, gamma, beta, force, rho0, mesh
    [io]      output_dir, csv, vtk_stride, checkpoint_every

Every key is optional; missing keys take the defaults below.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigInvalid

DIM = 2


@dataclass(frozen=True)
class ElasticParams:
    """Isotropic elasticity tensor ``C M = 2 mu_s M + lambda_s tr(M) I`` and exponents."""

    mu_s: float = 5.0
    lambda_s: float = 5.0
    a: float = 5.0
    q: float = 4.0
    kappa: float = 1e-4
    regularizer: str = "c0ip"


@dataclass(frozen=True)
class FluidParams:
    mu: float = 0.05
    lam: float = 0.05
    a_p: float = 1.0
    gamma: float = 2.0
    delta: float = 1e-3
    beta: float = 5.0
    rho_s: float = 1.0
    epsilon: float = 1e-3


@dataclass(frozen=True)
class ForceSpec:
    """Body force preset.

    ``kind`` is ``none``, ``constant`` (vector ``value``), ``gravity``
    (``-g e2``) or ``ramp`` (gravity growing linearly up to ``ramp_time``).
    """

    kind: str = "none"
    value: tuple = (0.0, 0.0)
    g: float = 1.0
    ramp_time: float = 0.0

    def at(self, t: float):
        if self.kind == "none":
            return (0.0, 0.0)
        if self.kind == "constant":
            return tuple(float(c) for c in self.value)
        if self.kind == "gravity":
            return (0.0, -self.g)
        if self.kind == "ramp":
            s = 1.0 if self.ramp_time <= 0 else min(1.0, t / self.ramp_time)
            return (0.0, -self.g * s)
        raise ValueError(f"unknown force kind {self.kind!r}")

    @classmethod
    def parse(cls, text: str) -> "ForceSpec":
        parts = text.split()
        if not parts or parts[0] == "none":
            return cls()
        kind = parts[0]
        if kind == "constant":
            return cls("constant", (float(parts[1]), float(parts[2])))
        if kind == "gravity":
            return cls("gravity", g=float(parts[1]) if len(parts) > 1 else 1.0)
        if kind == "ramp":
            return cls("ramp", g=float(parts[1]), ramp_time=float(parts[2]))
        raise ValueError(f"unknown force preset {text!r}")

    def format(self) -> str:
        if self.kind == "constant":
            return f"constant {self.value[0]!r} {self.value[1]!r}"
        if self.kind == "gravity":
            return f"gravity {self.g!r}"
        if self.kind == "ramp":
            return f"ramp {self.g!r} {self.ramp_time!r}"
        return "none"


@dataclass(frozen=True)
class SchemeParams:
    """All scalar parameters of the scheme plus scenario and output settings."""

    tau: float = 0.02 / 16
    h: float = 0.02
    final_time: float = 0.2
    elastic: ElasticParams = field(default_factory=ElasticParams)
    fluid: FluidParams = field(default_factory=FluidParams)
    grad_tol: float = 1e-8
    max_iter: int = 500
    lbfgs_memory: int = 10
    mass_tol: float = 1e-8
    cn_tol: float = 1e-10  # relative to area(Q)
    jacobian_floor: float = 1e-6
    collision_tol: float = math.nan
    exclusion_radius: float = math.nan
    min_angle_floor: float = 5.0
    det_lo: float = 1e-3
    det_hi: float = 1e3
    lumped_mass: bool = True
    solid_force: ForceSpec = field(default_factory=ForceSpec)
    fluid_force: ForceSpec = field(default_factory=ForceSpec)
    rho0: str = "uniform 1.5"
    initial_solid_velocity: tuple = (0.0, 0.0)
    initial_momentum: tuple = (0.0, 0.0)
    solid_mesh: str = "half-disk"
    fluid_mesh: str = "generate"
    mesh_scale: float = 1.0
    output_dir: str = "out"
    csv: str = "diagnostics.csv"
    vtk_stride: int = 0
    checkpoint_every: int = 0

    @property
    def h_over_tau(self) -> int:
        return int(round(self.h / self.tau))

    @property
    def kappa(self) -> float:
        return self.elastic.kappa

    def with_(self, **kw) -> "SchemeParams":
        return replace(self, **kw)


def validate(params: SchemeParams) -> SchemeParams:
    """Raise :class:`ConfigInvalid` listing every violated constraint."""
    n = DIM
    e, f = params.elastic, params.fluid
    bad = []
    gmin = 2 * n * (n - 1) / (3 * n - 2)
    if not f.gamma > gmin:
        bad.append(f"gamma = {f.gamma:g} must exceed 2n(n-1)/(3n-2) = {gmin:g}")
    if not f.beta > max(4.0, f.gamma):
        bad.append(f"beta = {f.beta:g} must exceed max(4, gamma) = {max(4.0, f.gamma):g}")
    if not e.q > n:
        bad.append(f"q = {e.q:g} must exceed n = {n}")
    elif not e.a > n * e.q / (e.q - n):
        bad.append(f"a = {e.a:g} must exceed nq/(q-n) = {n * e.q / (e.q - n):g}")
    for name, val in (("mu", f.mu), ("lambda", f.lam), ("rho_s", f.rho_s), ("a_p", f.a_p),
                      ("mu_s", e.mu_s), ("tau", params.tau), ("h", params.h)):
        if not val > 0:
            bad.append(f"{name} = {val:g} must be positive")
    if not e.mu_s + e.lambda_s > 0:
        bad.append("mu_s + lambda_s must be positive for a positive definite elasticity tensor")
    for name, val in (("delta", f.delta), ("epsilon", f.epsilon), ("kappa", e.kappa)):
        if not val >= 0:
            bad.append(f"{name} = {val:g} must be nonnegative")
    if params.tau > 0 and params.h > 0:
        r = params.h / params.tau
        if abs(r - round(r)) > 1e-9 * r or round(r) < 1:
            bad.append(f"h / tau = {r:g} must be a positive integer")
    if not 0 < params.jacobian_floor < 1:
        bad.append("jacobian_floor must lie in (0, 1)")
    if not 0 < params.det_lo < 1 < params.det_hi:
        bad.append("determinant bounds must satisfy det_lo < 1 < det_hi")
    if params.lbfgs_memory < 1 or params.max_iter < 1:
        bad.append("lbfgs_memory and max_iter must be positive")
    if bad:
        raise ConfigInvalid(bad)
    return params


def _bool(s):
    return s.strip().lower() in ("1", "true", "yes", "on")


def _vec(s):
    a, b = s.split()
    return (float(a), float(b))


# section -> key -> (attribute path, converter)
_KEYS = {
    "scheme": {
        "tau": ("tau", float), "h": ("h", float), "final_time": ("final_time", float),
        "kappa": ("elastic.kappa", float), "epsilon": ("fluid.epsilon", float),
        "delta": ("fluid.delta", float), "grad_tol": ("grad_tol", float),
        "max_iter": ("max_iter", int), "lbfgs_memory": ("lbfgs_memory", int),
        "mass_tol": ("mass_tol", float), "cn_tol": ("cn_tol", float),
        "jacobian_floor": ("jacobian_floor", float), "collision_tol": ("collision_tol", float),
        "exclusion_radius": ("exclusion_radius", float),
        "min_angle_floor": ("min_angle_floor", float), "det_lo": ("det_lo", float),
        "det_hi": ("det_hi", float), "lumped_mass": ("lumped_mass", _bool),
        "h_over_tau": ("@h_over_tau", int),
    },
    "solid": {
        "mu_s": ("elastic.mu_s", float), "lambda_s": ("elastic.lambda_s", float),
        "a": ("elastic.a", float), "q": ("elastic.q", float), "rho_s": ("fluid.rho_s", float),
        "force": ("solid_force", ForceSpec.parse), "mesh": ("solid_mesh", str),
        "initial_velocity": ("initial_solid_velocity", _vec), "mesh_scale": ("mesh_scale", float),
    },
    "fluid": {
        "mu": ("fluid.mu", float), "lambda": ("fluid.lam", float), "a_p": ("fluid.a_p", float),
        "gamma": ("fluid.gamma", float), "beta": ("fluid.beta", float),
        "force": ("fluid_force", ForceSpec.parse), "rho0": ("rho0", str),
        "initial_momentum": ("initial_momentum", _vec), "mesh": ("fluid_mesh", str),
    },
    "io": {
        "output_dir": ("output_dir", str), "csv": ("csv", str),
        "vtk_stride": ("vtk_stride", int), "checkpoint_every": ("checkpoint_every", int),
    },
}


def params_from_mapping(sections: dict, base: SchemeParams = None) -> SchemeParams:
    """Build parameters from ``{section: {key: text}}`` and validate them."""
    p = base or SchemeParams()
    top, el, fl = {}, {}, {}
    ratio = None
    unknown = []
    for sec, items in sections.items():
        table = _KEYS.get(sec)
        if table is None:
            unknown.append(f"unknown section [{sec}]")
            continue
        for key, text in items.items():
            if key not in table:
                unknown.append(f"unknown key {key!r} in [{sec}]")
                continue
            target, conv = table[key]
            try:
                val = conv(text)
            except (ValueError, IndexError) as exc:
                unknown.append(f"cannot parse {sec}.{key} = {text!r}: {exc}")
                continue
            if target == "@h_over_tau":
                ratio = val
            elif target.startswith("elastic."):
                el[target[8:]] = val
            elif target.startswith("fluid."):
                fl[target[6:]] = val
            else:
                top[target] = val
    if unknown:
        raise ConfigInvalid(unknown)
    p = replace(p, elastic=replace(p.elastic, **el), fluid=replace(p.fluid, **fl), **top)
    if ratio is not None and "tau" not in top:
        p = replace(p, tau=p.h / ratio)
    return validate(p)


def load_config(path) -> SchemeParams:
    """Read and validate a configuration file."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    with open(path) as fh:
        cp.read_file(fh)
    sections = {s: dict(cp.items(s)) for s in cp.sections()}
    return params_from_mapping(sections)


def dump_config(params: SchemeParams) -> str:
    """Serialize parameters back to the configuration format (round-trips)."""
    out = []
    for sec, table in _KEYS.items():
        out.append(f"[{sec}]")
        for key, (target, _) in table.items():
            if target == "@h_over_tau":
                continue
            obj = params
            for part in target.split("."):
                obj = getattr(obj, part)
            if isinstance(obj, ForceSpec):
                text = obj.format()
            elif isinstance(obj, tuple):
                text = f"{obj[0]!r} {obj[1]!r}"
            elif isinstance(obj, bool):
                text = "true" if obj else "false"
            else:
                text = repr(obj) if isinstance(obj, float) else str(obj)
            out.append(f"{key} = {text}")
        out.append("")
    return "\n".join(out)


def write_config(params: SchemeParams, path):
    Path(path).write_text(dump_config(params))


__all__ = ["ElasticParams", "FluidParams", "ForceSpec", "SchemeParams", "load_config",
           "params_from_mapping", "validate", "dump_config", "write_config"]
