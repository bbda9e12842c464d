import pytest

from varimove.cli import cli_main
from varimove.config import write_config
from varimove.output import read_csv
from varimove.scenarios import falling_disk_params


def test_mesh_info(capsys):
    assert cli_main(["mesh-info"]) == 0
    out = capsys.readouterr().out
    assert "solid: 41 nodes" in out and "fluid:" in out


def test_run_check_resume(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    write_config(falling_disk_params(output_dir=str(tmp_path / "out"), vtk_stride=2,
                                     checkpoint_every=3), cfg)
    assert cli_main(["run", "--config", str(cfg), "--steps", "4"]) == 0
    out = tmp_path / "out"
    assert len(read_csv(out / "diagnostics.csv")) == 4
    assert (out / "checkpoint_000003.txt").exists()
    assert len(list(out.glob("fluid_*.vtk"))) == 2
    assert cli_main(["check", str(out)]) == 0
    assert "PASS  energy inequality" in capsys.readouterr().out
    assert cli_main(["run", "--resume", str(out / "checkpoint_last.txt"), "--steps", "2"]) == 0
    rows = read_csv(out / "diagnostics.csv")
    assert [r["step"] for r in rows] == [1, 2, 3, 4, 5, 6]


def test_check_reports_failure(tmp_path, capsys):
    cfg = tmp_path / "run.ini"
    write_config(falling_disk_params(output_dir=str(tmp_path / "out")), cfg)
    cli_main(["run", "--config", str(cfg), "--steps", "2"])
    csv = tmp_path / "out" / "diagnostics.csv"
    lines = csv.read_text().splitlines()
    head = lines[0].split(",")
    row = lines[1].split(",")
    row[head.index("mass_drift")] = "0.5"
    csv.write_text("\n".join([lines[0], ",".join(row)] + lines[2:]) + "\n")
    assert cli_main(["check", str(tmp_path / "out")]) == 1
    assert "FAIL  mass conservation" in capsys.readouterr().out


def test_invalid_config_lists_violations(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[fluid]\ngamma = 0.5\nbeta = 3\n")
    assert cli_main(["run", "--config", str(cfg)]) == 3
    err = capsys.readouterr().err
    assert "gamma" in err and "beta" in err


def test_demo(tmp_path, capsys):
    assert cli_main(["demo", "rest", "--steps", "2", "--output", str(tmp_path / "d")]) == 0
    assert "steps = 2" in capsys.readouterr().out


def test_unknown_demo_rejected():
    with pytest.raises(SystemExit):
        cli_main(["demo", "nope"])
