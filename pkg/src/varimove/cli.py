"""Command line entry point: ``varimove run|check|demo|mesh-info``."""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .config import dump_config, load_config
from .errors import ConfigInvalid, VarimoveError
from .mesh.geometry import min_angles
from .output import CsvLedger, load_checkpoint, read_csv, save_checkpoint, summary_text, write_frame
from .scenarios import DEMOS, build_meshes
from .timestepper import CSV_COLUMNS, Simulation

log = logging.getLogger("varimove")


def _setup_logging():
    level = os.environ.get("VARIMOVE_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def execute(sim: Simulation, out_dir, n_steps=None, append=False) -> int:
    """Run ``sim`` streaming CSV rows, VTK frames and checkpoints into ``out_dir``."""
    p = sim.params
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.ini").write_text(dump_config(p))
    rows = []
    with CsvLedger(out / p.csv, CSV_COLUMNS, append=append) as led:
        def on_step(rec):
            led.write(rec.row)
            rows.append(rec.row)
            s = rec.row["step"]
            if p.vtk_stride > 0 and s % p.vtk_stride == 0:
                write_frame(out, s, rec.fluid_nodes, sim.fluid.triangles, rec.v, rec.rho, rec.det_phi,
                            rec.eta, sim.solid.elements)
            if p.checkpoint_every > 0 and s % p.checkpoint_every == 0:
                save_checkpoint(sim, out / f"checkpoint_{s:06d}.txt")

        sim.on_step = on_step
        code = 0
        try:
            sim.run(n_steps)
        except VarimoveError as exc:
            code = 2
            print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
    save_checkpoint(sim, out / "checkpoint_last.txt")
    text = summary_text(rows, sim.trajectory.status, sim.trajectory.error, sim.trajectory.handoffs)
    (out / "summary.txt").write_text(text)
    print(text, end="")
    return code


def check_rows(rows, grad_tol=1e-8, slack_rel=1e-10, mass_tol=1e-6, cn_rel=None):
    """Invariant suite on CSV rows; returns a list of ``(name, ok, detail)``."""
    from .diagnostics import check_energy_inequality

    out = []
    if not rows:
        return [("nonempty", False, "no steps recorded")]
    ineq = check_energy_inequality(rows, slack_rel)
    out.append(("energy inequality", ineq.ok, f"worst margin {ineq.worst_step_margin:.3e}"))
    drift = max(abs(r["mass_drift"]) for r in rows)
    out.append(("mass conservation", drift <= mass_tol, f"max drift {drift:.3e}"))
    rmin = min(r["rho_min"] for r in rows)
    out.append(("positivity", rmin > 0, f"min rho {rmin:.6g}"))
    el = max(r["el_residual"] for r in rows)
    out.append(("stationarity", el <= 10 * grad_tol, f"max EL residual {el:.3e}"))
    env = all(r["envelope_lo"] <= r["det_phi_min"] and r["det_phi_max"] <= r["envelope_hi"] for r in rows)
    out.append(("flow-map envelope", env, ""))
    cn = max(r["cn_defect"] for r in rows)
    out.append(("injectivity", cn_rel is None or cn <= cn_rel, f"max CN defect {cn:.3e}"))
    hand = [r["handoff_error"] for r in rows if not math.isnan(r["handoff_error"])]
    ok = all(e <= 1e-6 for e in hand)
    out.append(("handoff identity", ok, f"{len(hand)} boundaries, max {max(hand, default=0.0):.3e}"))
    return out


def cmd_run(args) -> int:
    if args.resume:
        sim = load_checkpoint(args.resume)
        p = sim.params
    else:
        p = load_config(args.config)
        sim = Simulation(p)
    out = args.output or p.output_dir
    return execute(sim, out, args.steps, append=bool(args.resume))


def cmd_demo(args) -> int:
    p = DEMOS[args.name]()
    if args.final_time is not None:
        p = p.with_(final_time=args.final_time)
    out = args.output or f"demo-{args.name}"
    return execute(Simulation(p), out, args.steps)


def cmd_check(args) -> int:
    d = Path(args.directory)
    cfg = d / "config.ini"
    p = load_config(cfg) if cfg.exists() else None
    rows = read_csv(d / (p.csv if p else "diagnostics.csv"))
    kw = {}
    if p is not None:
        from .mesh.generate import half_disk_solid
        from .scenarios import geometry_for
        kw = dict(grad_tol=p.grad_tol, cn_rel=p.cn_tol * half_disk_solid(geometry_for(p)).area
                  if p.solid_mesh == "half-disk" else None)
    results = check_rows(rows, **kw)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
    return 0 if all(ok for _, ok, _ in results) else 1


def cmd_mesh_info(args) -> int:
    p = load_config(args.config) if args.config else DEMOS["falling-disk"]()
    solid, fluid = build_meshes(p)
    sa = np.degrees(min_angles(solid.nodes, solid.elements))
    fa = np.degrees(min_angles(fluid.nodes, fluid.triangles))
    print(f"solid: {len(solid.nodes)} nodes, {len(solid.elements)} triangles, area {solid.area:.6g}, "
          f"min angle {sa.min():.2f} deg, {len(solid.p_nodes)} clamped, {len(solid.m_nodes)} interface")
    print(f"fluid: {len(fluid.nodes)} nodes, {len(fluid.triangles)} triangles, "
          f"min angle {fa.min():.2f} deg, boundary mesh size {fluid.boundary_mesh_size():.4g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="varimove", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a configured simulation")
    g = r.add_mutually_exclusive_group(required=True)
    g.add_argument("--config")
    g.add_argument("--resume", metavar="CKPT")
    r.add_argument("--steps", type=int)
    r.add_argument("--output")
    r.set_defaults(func=cmd_run)
    c = sub.add_parser("check", help="invariant suite on a saved trajectory")
    c.add_argument("directory")
    c.set_defaults(func=cmd_check)
    d = sub.add_parser("demo", help="run a shipped scenario")
    d.add_argument("name", choices=sorted(DEMOS))
    d.add_argument("--steps", type=int)
    d.add_argument("--final-time", type=float)
    d.add_argument("--output")
    d.set_defaults(func=cmd_demo)
    m = sub.add_parser("mesh-info", help="print mesh statistics")
    m.add_argument("--config")
    m.set_defaults(func=cmd_mesh_info)
    return ap


def cli_main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigInvalid as exc:
        print("invalid configuration:", file=sys.stderr)
        for v in exc.violations:
            print(f"  - {v}", file=sys.stderr)
        return 3
    except (VarimoveError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(cli_main())
