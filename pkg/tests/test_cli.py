import pytest

from tdsekit.cli import main, read_config
from tdsekit.bench import read_csv


def test_run_prints_header_and_error(capsys):
    assert main(["run", "--model", "two-level", "--N", "32", "--method", "TK"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("# tdsekit run:") and "corrector_exponents=(-1, 4)" in out
    assert "error_l2" in out and "mat-vec      32" in out


def test_run_several_methods_share_one_reference(tmp_path, capsys):
    out = tmp_path / "run.csv"
    assert main(["run", "--model", "two-level", "--N", "32", "--m", "8",
                 "--method", "TK,ITK_LOW,STRANG", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert text.count("error_l2") == 3 and "mat-vec      65" in text
    assert [r.method.value for r in read_csv(out)] == ["TK", "ITK_LOW", "STRANG"]


def test_toolkit_build_inspect_and_reuse(tmp_path, capsys):
    cache = str(tmp_path / "tk.bin")
    assert main(["toolkit", "build", "--model", "rotor", "--N", "16", "--m", "4", "--cache", cache]) == 0
    assert main(["toolkit", "inspect", "--model", "rotor", "--cache", cache]) == 0
    assert "levels       5 (m=4)" in capsys.readouterr().out
    assert main(["run", "--model", "rotor", "--N", "16", "--method", "ITK_HIGH", "--cache", cache,
                 "--no-reference"]) == 0
    assert main(["run", "--model", "two-level", "--cache", cache, "--no-reference"]) == 2


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults\nmodel = rotor\nN=8\nmethod=STRANG\nno-reference = yes\n")
    assert read_config(cfg)["no_reference"] == "yes"
    assert main(["run", "--config", str(cfg)]) == 0
    out = capsys.readouterr().out
    assert "model=rotor" in out and "mat-vec      24" in out
    assert main(["run", "--config", str(cfg), "--N", "4"]) == 0
    assert "mat-vec      12" in capsys.readouterr().out
    cfg.write_text("bogus=1\n")
    assert main(["run", "--config", str(cfg)]) == 2


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--bogus"])
    assert exc.value.code == 2
    assert main(["run", "--method", "NOPE"]) == 2
    assert main(["run", "--model", "nope"]) == 2
    assert main(["run", "--method", "ITK_HIGH", "--no-reference"]) == 2


def test_numerical_failure_exit_code():
    assert main(["cost", "--method", "STRANG", "--tol", "1e-14", "--tol-ref", "1e-6"]) == 3


def test_sweep_dt_writes_csv(tmp_path, capsys):
    out = tmp_path / "s.csv"
    assert main(["sweep-dt", "--method", "TK,STRANG", "--N", "64", "--levels", "3",
                 "--out", str(out)]) == 0
    recs = read_csv(out)
    assert len(recs) == 6
    assert "slope[TK]" in capsys.readouterr().out


def test_sweep_deps(tmp_path, capsys):
    assert main(["sweep-deps", "--N", "512", "--m", "4", "--levels", "3", "--tol-ref", "1e-9"]) == 0
    assert "slope[TK] vs deps" in capsys.readouterr().out


def test_cost_table(tmp_path, capsys):
    assert main(["cost", "--tol", "2", "--out", str(tmp_path / "c.csv")]) == 0
    out = capsys.readouterr().out
    assert "Matrix products" in out and "Strang splitting" in out
    assert (tmp_path / "c.csv").read_text().startswith("method,N,mat_products,m\n")


def test_ensemble(tmp_path, capsys):
    out = tmp_path / "e.csv"
    assert main(["ensemble", "--members", "4", "--m", "16", "--seed", "3", "--out", str(out)]) == 0
    assert "mean populations" in capsys.readouterr().out
    assert len(out.read_text().splitlines()) == 5


def test_hcn_preset(capsys):
    assert main(["run", "--field", "hcn", "--T", "1000", "--N", "8"]) == 0
    assert "field=hcn" in capsys.readouterr().out
