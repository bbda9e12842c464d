import numpy as np
import pytest

from varimove.diagnostics import check_energy_inequality
from varimove.output import (fmt, frame_count, load_checkpoint, read_checkpoint, read_csv,
                             save_checkpoint, write_csv, write_outputs)
from varimove.scenarios import falling_disk_params
from varimove.timestepper import CSV_COLUMNS, Simulation, Trajectory


@pytest.fixture(scope="module")
def short_run(meshes):
    sim = Simulation(falling_disk_params(), meshes=meshes)
    sim.run(10)
    return sim


def test_float_format_round_trips():
    rng = np.random.default_rng(0)
    for x in rng.normal(size=100) * 10.0 ** rng.integers(-300, 300, 100):
        assert float(fmt(x)) == x
    assert fmt(3) == "3" and fmt(np.int64(4)) == "4"


def test_empty_trajectory_gives_header_only_csv(tmp_path, meshes):
    solid, fluid = meshes
    traj = Trajectory(falling_disk_params(), solid, fluid, solid.nodes, np.ones(len(fluid.nodes)))
    write_outputs(traj, tmp_path)
    lines = (tmp_path / "diagnostics.csv").read_text().splitlines()
    assert lines == [",".join(CSV_COLUMNS)]
    assert read_csv(tmp_path / "diagnostics.csv") == []


def test_frame_count_matches_stride(tmp_path, short_run):
    write_outputs(short_run.trajectory, tmp_path, vtk_stride=4)
    assert len(list(tmp_path.glob("fluid_*.vtk"))) == frame_count(10, 4) == 2
    assert len(list(tmp_path.glob("solid_*.vtk"))) == 2
    rows = read_csv(tmp_path / "diagnostics.csv")
    assert len(rows) == 10
    assert check_energy_inequality(rows).ok
    # values survive the text round trip exactly
    assert rows[3]["objective"] == short_run.trajectory.rows[3]["objective"]
    assert "status = done" in (tmp_path / "summary.txt").read_text()


def test_fault_injection_on_saved_ledger(tmp_path, short_run):
    write_csv(tmp_path / "d.csv", short_run.trajectory.rows, CSV_COLUMNS)
    rows = read_csv(tmp_path / "d.csv")
    assert check_energy_inequality(rows).ok
    bad = check_energy_inequality(rows, negate_dissipation=True)
    assert not bad.ok and {v[0] for v in bad.violations} == {"dissipation"}
    # energy that appears from nowhere breaks the inequality itself
    rows[4]["elastic"] += 1e-3
    kinds = {v[0] for v in check_energy_inequality(rows).violations}
    assert kinds == {"step", "cumulative"}


def test_checkpoint_round_trip_is_exact(tmp_path, short_run):
    save_checkpoint(short_run, tmp_path / "a.txt")
    sim = load_checkpoint(tmp_path / "a.txt")
    for name in ("eta", "rho"):
        assert np.array_equal(getattr(sim, name), getattr(short_run, name))
    assert np.array_equal(sim.fluid.nodes, short_run.fluid.nodes)
    for name in ("zeta", "w", "w_area", "src_rho", "src_v", "src_area", "eta0", "rho0"):
        assert np.array_equal(getattr(sim.window, name), getattr(short_run.window, name))
    assert np.array_equal(sim.ledger.running_det, short_run.ledger.running_det)
    assert sim.ledger.gradv_history == short_run.ledger.gradv_history
    assert sim.k == short_run.k and sim.elastic_now == short_run.elastic_now
    assert len(sim.window_steps) == len(short_run.window_steps) == 10
    save_checkpoint(sim, tmp_path / "b.txt")
    assert (tmp_path / "a.txt").read_text() == (tmp_path / "b.txt").read_text()
    params, vals = read_checkpoint(tmp_path / "a.txt")
    assert params.tau == short_run.params.tau and vals["k"] == 10


def test_resume_continues_bit_exactly(tmp_path, meshes):
    a = Simulation(falling_disk_params(), meshes=meshes)
    a.run(14)
    save_checkpoint(a, tmp_path / "c.txt")
    b = load_checkpoint(tmp_path / "c.txt")
    ra = a.run(4).rows[-4:]       # crosses the window boundary at step 16
    rb = b.run(4).rows
    for x, y in zip(ra, rb):
        assert [fmt(x[c]) for c in CSV_COLUMNS] == [fmt(y[c]) for c in CSV_COLUMNS]


def test_runs_are_bit_reproducible(tmp_path, meshes):
    for name in ("a", "b"):
        sim = Simulation(falling_disk_params(), meshes=meshes)
        sim.run(5)
        write_csv(tmp_path / f"{name}.csv", sim.trajectory.rows, CSV_COLUMNS)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
