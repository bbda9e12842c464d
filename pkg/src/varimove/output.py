"""CSV ledger, VTK frames, run summary and text checkpoints."""
from __future__ import annotations

import configparser
import csv
import math
from pathlib import Path

import numpy as np

from .config import dump_config, params_from_mapping
from .errors import VarimoveError
from .mesh.flowmap import FlowMapLedger
from .mesh.meshio import write_vtk

CHECKPOINT_MAGIC = "varimove-checkpoint 1"


def fmt(value) -> str:
    """17 significant digits for floats, plain text otherwise."""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return str(value)


class CsvLedger:
    """Append-only CSV stream with a fixed column schema."""

    def __init__(self, path, columns, append: bool = False):
        self.path = Path(path)
        self.columns = list(columns)
        exists = append and self.path.exists() and self.path.stat().st_size > 0
        self._fh = open(self.path, "a" if exists else "w", newline="")
        self._w = csv.writer(self._fh)
        if not exists:
            self._w.writerow(self.columns)
            self._fh.flush()

    def write(self, row: dict):
        self._w.writerow([fmt(row.get(c, math.nan)) for c in self.columns])
        self._fh.flush()

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_csv(path, rows, columns):
    """Write all rows at once; an empty trajectory gives a header-only file."""
    with CsvLedger(path, columns) as led:
        for r in rows:
            led.write(r)


def read_csv(path) -> list[dict]:
    """Rows as dicts of floats (``nan`` for empty cells)."""
    with open(path, newline="") as fh:
        rd = csv.DictReader(fh)
        return [{k: float(v) if v != "" else math.nan for k, v in r.items()} for r in rd]


def frame_count(n_steps: int, stride: int) -> int:
    return 0 if stride <= 0 else n_steps // stride


def write_frame(out_dir, step: int, fluid_nodes, fluid_tris, v, rho, det_phi, solid_nodes, solid_tris):
    """One VTK frame: the fluid mesh with v, rho, det grad Phi and the deformed solid."""
    out_dir = Path(out_dir)
    write_vtk(out_dir / f"fluid_{step:06d}.vtk", fluid_nodes, fluid_tris,
              point_data={"v": v, "rho": rho}, cell_data={"det_grad_phi": det_phi})
    write_vtk(out_dir / f"solid_{step:06d}.vtk", solid_nodes, solid_tris)


def summary_text(rows, status: str = "done", error: str = "", handoffs=()) -> str:
    """Plain key = value block closing a run."""
    lines = ["[summary]", f"status = {status}", f"steps = {len(rows)}"]
    if error:
        lines.append(f"error = {error}")
    if rows:
        last = rows[-1]
        lines.append(f"final_time = {fmt(last['time'])}")
        lines.append(f"mass_drift = {fmt(last['mass_drift'])}")
        lines.append(f"worst_energy_margin = {fmt(min(r['energy_margin'] for r in rows))}")
        lines.append(f"max_el_residual = {fmt(max(r['el_residual'] for r in rows))}")
        lines.append(f"min_rho = {fmt(min(r['rho_min'] for r in rows))}")
        lines.append(f"min_collision_distance = {fmt(min(r['collision_distance'] for r in rows))}")
    if handoffs:
        lines.append(f"max_handoff_error = {fmt(max(e for _, e in handoffs))}")
    return "\n".join(lines) + "\n"


def write_outputs(trajectory, out_dir, vtk_stride: int = 0, columns=None):
    """Write the CSV ledger, VTK frames every ``vtk_stride`` steps and the summary."""
    from .timestepper import CSV_COLUMNS

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    p = trajectory.params
    (out / "config.ini").write_text(dump_config(p))
    write_csv(out / p.csv, trajectory.rows, columns or CSV_COLUMNS)
    fl, sol = trajectory.fluid0, trajectory.solid
    if vtk_stride > 0:
        for rec in trajectory.records:
            s = rec.row["step"]
            if s % vtk_stride == 0:
                write_frame(out, s, rec.fluid_nodes, fl.triangles, rec.v, rec.rho, rec.det_phi,
                            rec.eta, sol.elements)
    (out / "summary.txt").write_text(summary_text(trajectory.rows, trajectory.status,
                                                  trajectory.error, trajectory.handoffs))


# -- checkpoints ------------------------------------------------------------

def _write_array(fh, name, a):
    a = np.asarray(a)
    kind = "int" if np.issubdtype(a.dtype, np.integer) else "float"
    fh.write(f"array {name} {kind} {' '.join(map(str, a.shape)) or '-'}\n")
    fh.write(" ".join(fmt(x) for x in a.ravel()) + "\n")


def _write_scalar(fh, name, x):
    fh.write(f"scalar {name} {fmt(x)}\n")


def save_checkpoint(sim, path):
    """Write the full state of a :class:`Simulation` as text.

    Layout: a magic line, the configuration between ``[config]`` and
    ``[end config]``, then ``scalar name value`` lines and ``array name kind
    shape`` headers each followed by one line of values.
    """
    w = sim.window
    led = sim.ledger
    with open(path, "w") as fh:
        fh.write(CHECKPOINT_MAGIC + "\n[config]\n")
        fh.write(dump_config(sim.params))
        fh.write("[end config]\n")
        _write_scalar(fh, "k", sim.k)
        _write_scalar(fh, "mass0", sim.mass0)
        _write_scalar(fh, "elastic_now", math.nan if sim.elastic_now is None else sim.elastic_now)
        _write_scalar(fh, "collision_tol", sim.collision_tol)
        _write_scalar(fh, "exclusion_radius", sim.exclusion_radius)
        _write_array(fh, "eta", sim.eta)
        _write_array(fh, "rho", sim.rho)
        _write_array(fh, "fluid_nodes", sim.fluid.nodes)
        _write_array(fh, "fluid_triangles", sim.fluid.triangles)
        _write_scalar(fh, "window.index", w.index)
        for name in ("eta0", "rho0", "zeta", "w", "w_area", "src_rho", "src_v", "src_area"):
            _write_array(fh, f"window.{name}", getattr(w, name))
        _write_array(fh, "window.fluid0_nodes", w.fluid0.nodes)
        _write_scalar(fh, "ledger.step", led.step)
        _write_array(fh, "ledger.x0", led.x0)
        _write_array(fh, "ledger.x", led.x)
        _write_array(fh, "ledger.running_det", led.running_det)
        _write_array(fh, "ledger.gradv_history", np.array(led.gradv_history, float))
        _write_array(fh, "ledger.tau_history", np.array(led.tau_history, float))
        for key, (step, x, det) in sorted(led.anchors.items()):
            _write_scalar(fh, f"anchor.{key}.step", step)
            _write_array(fh, f"anchor.{key}.x", x)
            _write_array(fh, f"anchor.{key}.det", det)
        _write_scalar(fh, "window_steps", len(sim.window_steps))
        for j, tup in enumerate(sim.window_steps):
            for name, a in zip(("eta_a", "eta_b", "rho", "v", "area"), tup):
                _write_array(fh, f"ws.{j}.{name}", a)


def read_checkpoint(path):
    """Parse a checkpoint into ``(params, values)``."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise VarimoveError(f"{path}: not a checkpoint file")
    end = lines.index("[end config]")
    cp = configparser.ConfigParser()
    cp.read_string("\n".join(lines[2:end]))
    params = params_from_mapping({s: dict(cp.items(s)) for s in cp.sections()})
    vals = {}
    i = end + 1
    while i < len(lines):
        head = lines[i].split()
        if head[0] == "scalar":
            txt = head[2]
            vals[head[1]] = int(txt) if txt.lstrip("-").isdigit() else float(txt)
            i += 1
        elif head[0] == "array":
            shape = () if head[3] == "-" else tuple(int(s) for s in head[3:])
            body = lines[i + 1].split()
            dtype = int if head[2] == "int" else float
            vals[head[1]] = np.array([dtype(t) for t in body], dtype=dtype).reshape(shape)
            i += 2
        else:
            raise VarimoveError(f"{path}: bad line {i + 1}")
    return params, vals


def load_checkpoint(path, **sim_kw):
    """Rebuild a :class:`Simulation` from a checkpoint, ready to continue."""
    from .timestepper import Simulation, WindowState

    params, v = read_checkpoint(path)
    sim = Simulation(params, **sim_kw)
    if not np.array_equal(sim.fluid.triangles, v["fluid_triangles"]):
        raise VarimoveError("checkpoint fluid connectivity does not match the configured mesh")
    sim.k = v["k"]
    sim.mass0 = v["mass0"]
    sim.elastic_now = None if math.isnan(v["elastic_now"]) else v["elastic_now"]
    sim.collision_tol = v["collision_tol"]
    sim.exclusion_radius = v["exclusion_radius"]
    sim.eta = v["eta"]
    sim.rho = v["rho"]
    base = sim.trajectory.fluid0
    sim.fluid = base.with_nodes(v["fluid_nodes"])
    sim.window = WindowState(v["window.index"], v["window.eta0"], v["window.rho0"],
                             base.with_nodes(v["window.fluid0_nodes"]), v["window.zeta"],
                             v["window.w"], v["window.w_area"], v["window.src_rho"],
                             v["window.src_v"], v["window.src_area"])
    led = FlowMapLedger(base, (params.det_lo, params.det_hi))
    led.step = v["ledger.step"]
    led.x0, led.x = v["ledger.x0"], v["ledger.x"]
    led.running_det = v["ledger.running_det"]
    led.gradv_history = [float(g) for g in v["ledger.gradv_history"]]
    led.tau_history = [float(t) for t in v["ledger.tau_history"]]
    led.anchors = {}
    for key in v:
        if key.startswith("anchor.") and key.endswith(".step"):
            wi = int(key.split(".")[1])
            led.anchors[wi] = (v[key], v[f"anchor.{wi}.x"], v[f"anchor.{wi}.det"])
    sim.ledger = led
    sim.window_steps = [tuple(v[f"ws.{j}.{n}"] for n in ("eta_a", "eta_b", "rho", "v", "area"))
                        for j in range(v["window_steps"])]
    return sim
