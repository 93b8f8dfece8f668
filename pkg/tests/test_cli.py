import pytest

from nldpg import cli
from nldpg.cli import (
    CSV_COLUMNS,
    ConfigError,
    RunConfig,
    adaptive_loop,
    config_to_text,
    csv_text,
    init_weight,
    main,
    parse_config_text,
    read_csv,
)
from nldpg.mesh import export_mesh, make_lshape_mesh, read_mesh
from nldpg.solver import NewtonFailure


def test_parse_config_roundtrip():
    cfg = parse_config_text(
        "# run\nproblem = lshape\nrefine = adaptive  # inline\ntheta = 0.5\nlevels = 3\n"
        "energy_ref = none\nc_df = 2.0\nexport_meshes = yes\n"
    )
    assert (cfg.problem, cfg.refine, cfg.theta, cfg.levels) == ("lshape", "adaptive", 0.5, 3)
    assert cfg.energy_ref is None and cfg.c_df == 2.0 and cfg.export_meshes is True
    assert parse_config_text(config_to_text(cfg)) == cfg


@pytest.mark.parametrize(
    "text",
    [
        "bogus = 1",
        "levels 3",
        "levels = three",
        "theta = 1.5",
        "refine = sometimes",
        "model = nope",
        "init = linear:-1",
        "levels = 0",
        "export_meshes = maybe",
        "c_f = -1",
        "levels = none",
    ],
)
def test_config_errors(text):
    with pytest.raises(ConfigError):
        parse_config_text(text).validate()


def test_init_weight():
    assert init_weight(RunConfig()) == 1.0
    assert init_weight(RunConfig(problem="lshape")) == 2.5
    assert init_weight(RunConfig(init="linear:3")) == 3.0


def test_square_columns_and_determinism():
    cfg = RunConfig(model="example-a-data", levels=2)
    recs, _ = adaptive_loop(cfg)
    again, _ = adaptive_loop(RunConfig(model="example-a-data", levels=2))
    text = csv_text(recs).splitlines()
    assert text[0] == ",".join(CSV_COLUMNS)
    strip = lambda lines: [l.rsplit(",", 1)[0] for l in lines]
    assert strip(text) == strip(csv_text(again).splitlines())
    assert [r.ndof for r in recs] == [33, 129]
    for r in recs:
        assert None not in (r.energy_diff_sqrt, r.error_energy, r.guaranteed_bound, r.lambda_min, r.vmax)


def test_lshape_adaptive_empty_fields():
    recs, mesh = adaptive_loop(RunConfig(problem="lshape", refine="adaptive", levels=3))
    assert [r.ndof for r in recs][0] == 25
    assert all(r.error_energy is None and r.guaranteed_bound is None for r in recs)
    assert recs[0].energy_diff_sqrt is None  # no reference energy for this model
    row = csv_text(recs).splitlines()[1].split(",")
    assert row[CSV_COLUMNS.index("error_energy")] == ""
    assert mesh.check_regular() == []


def test_max_ndof_budget():
    recs, _ = adaptive_loop(RunConfig(problem="lshape", levels=5, max_ndof=100))
    assert [r.ndof for r in recs] == [25, 97]


def test_main_writes_outputs(tmp_path, capsys):
    out = tmp_path / "run"
    cfg = tmp_path / "run.cfg"
    cfg.write_text("problem = lshape\nmodel = example-a-data\nexport_meshes = true\n")
    code = main(["--config", str(cfg), "--levels", "2", "--out", str(out)])
    assert code == 0
    rows = read_csv(out / "history.csv")
    assert [int(r["ndof"]) for r in rows] == [25, 97]
    assert float(rows[0]["eta"]) == pytest.approx(1.77434343, rel=1e-7)
    assert float(rows[1]["vmax"]) == pytest.approx(0.241428368, rel=1e-7)
    assert (out / "config.txt").read_text().startswith("problem = lshape")
    assert read_mesh(out / "mesh_final.txt").n_triangles == read_mesh(out / "mesh_01.txt").n_triangles
    assert capsys.readouterr().out.startswith("level,ndof")


def test_main_custom_mesh(tmp_path):
    path = tmp_path / "domain.txt"
    export_mesh(make_lshape_mesh(), path)
    assert main(["--problem", str(path), "--levels", "1", "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "history.csv")
    assert rows[0]["ndof"] == "25" and rows[0]["vmax"] == ""


def test_main_config_errors(tmp_path, capsys):
    assert main(["--config", str(tmp_path / "missing.cfg"), "--out", str(tmp_path)]) == 1
    assert main(["--theta", "2", "--out", str(tmp_path)]) == 1
    assert main(["--problem", str(tmp_path / "nomesh.txt"), "--out", str(tmp_path / "x")]) == 1
    assert "error" in capsys.readouterr().err


def test_main_newton_failure(tmp_path, monkeypatch):
    real = cli.newton
    calls = {"n": 0}

    def flaky(mesh, model, weights, init, **kw):
        calls["n"] += 1
        if calls["n"] == 2:
            raise NewtonFailure("singular Hessian", init, [1.0])
        return real(mesh, model, weights, init, **kw)

    monkeypatch.setattr(cli, "newton", flaky)
    code = main(["--problem", "lshape", "--levels", "3", "--out", str(tmp_path)])
    assert code == 2
    rows = read_csv(tmp_path / "history.csv")
    assert len(rows) == 1 and rows[0]["ndof"] == "25"


def test_module_entry_point(tmp_path):
    import subprocess
    import sys

    res = subprocess.run(
        [sys.executable, "-m", "nldpg", "--problem", "lshape", "--levels", "1", "--out", str(tmp_path)],
        capture_output=True, text=True, check=False,
    )
    assert res.returncode == 0, res.stderr
    assert res.stdout.splitlines()[0] == ",".join(CSV_COLUMNS)
