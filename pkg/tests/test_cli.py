import json
from pathlib import Path

import numpy as np
import pytest

from spnn_fpv import cli, spnn
from spnn_fpv.optimizer import TolerantDesign
from spnn_fpv.varmap import load_map

MNIST = str(Path(__file__).resolve().parents[1] / "data" / "mnist")


@pytest.fixture(scope="module")
def weights(tmp_path_factory):
    p = tmp_path_factory.mktemp("w") / "net.json"
    spnn.network1(2).save(p)
    return str(p)


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr().out
    return code, (json.loads(out) if code == 0 else None)


def test_genmap_is_seeded_and_round_trips(tmp_path, capsys):
    args = ["genmap", "--width", 400, "--height", 200, "--corr-len", 100, "--seed", 4]
    code, res = run(capsys, *args, "--out", tmp_path / "a.json")
    assert code == 0 and res["shape"] == [20, 40]
    run(capsys, *args, "--out", tmp_path / "b.bin")
    a, b = load_map(tmp_path / "a.json"), load_map(tmp_path / "b.bin")
    assert a == b
    assert a.params.corr_length == 100.0 and a.params.seed == 4


def test_config_precedence(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"sigma-w": 3.0, "corr_len": 250, "width": 300, "height": 100}))
    run(capsys, "genmap", "--config", cfg, "--sigma-w", 4, "--out", tmp_path / "m.json")
    p = load_map(tmp_path / "m.json").params
    assert (p.sigma_w, p.sigma_t, p.corr_length) == (4.0, 2.0, 250.0)
    cfg.write_text(json.dumps({"colour": 1}))
    assert cli.main(["genmap", "--config", str(cfg)]) == cli.EXIT_USAGE


def test_output_dir_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    code, res = run(capsys, "optimize-worstcase", "--budget", 0.01)
    assert code == 0
    assert Path(res["design"]) == tmp_path / "env" / "design.json"
    code, res = run(capsys, "optimize-worstcase", "--budget", 0.01, "--out-dir", tmp_path / "flag")
    assert Path(res["design"]).parent == tmp_path / "flag"


def test_worstcase_design_export(tmp_path, capsys):
    code, res = run(capsys, "optimize-worstcase", "--budget", 0.32, "--count", 5, "--out", tmp_path / "d.json")
    d = TolerantDesign.from_dict(json.loads((tmp_path / "d.json").read_text()))
    assert len(d) == 5 and np.all(d.widths == res["width"])
    assert res["arm_length"] == pytest.approx(135 + (res["width"] - 470) / 100)
    row = d.to_dict()["mzis"][0]
    assert set(row) == {"mzi", "region", "widths", "taper_lengths", "arm_lengths"}


def test_exit_codes(tmp_path, capsys, weights):
    assert cli.main(["nonsense"]) == cli.EXIT_USAGE
    assert cli.main(["sweep-fig6", "--mnist", MNIST]) == cli.EXIT_USAGE  # no weights
    assert cli.main(["sweep-fig5", "--policies", "R7"]) == cli.EXIT_USAGE
    assert cli.main(["sweep-fig5", "--trials", "0"]) == cli.EXIT_USAGE
    assert cli.main(["evaluate", "--weights", str(tmp_path / "missing.json"), "--mnist", MNIST]) == cli.EXIT_IO
    assert cli.main(["evaluate", "--weights", weights, "--mnist", str(tmp_path)]) == cli.EXIT_IO
    assert cli.main(["optimize-worstcase", "--budget", "-0.5"]) == cli.EXIT_DOMAIN
    assert cli.main(["genmap", "--corr-len", "-5"]) == cli.EXIT_DOMAIN
    capsys.readouterr()


def test_decompose(tmp_path, capsys, weights):
    code, res = run(capsys, "decompose", "--weights", weights, "--out", tmp_path / "d.json")
    assert code == 0 and res["mzi_count"] == 687 and res["max_residual"] < 1e-10
    from spnn_fpv.mesh import LayerDecomposition
    doc = json.loads((tmp_path / "d.json").read_text())
    decs = [LayerDecomposition.from_dict(L) for L in doc["layers"]]
    model = spnn.SpnnModel.load(weights)
    np.testing.assert_allclose(decs[2].nominal(), model.weights[2], atol=1e-10)


def test_evaluate_with_region_design(tmp_path, capsys, weights):
    common = ["--weights", weights, "--mnist", MNIST, "--limit", 100, "--corr-len", 1000, "--seed", 6]
    code, nom = run(capsys, "evaluate", *common[:6], "--out", tmp_path / "e0.json")
    assert nom["software_accuracy"] == nom["nominal_photonic_accuracy"]
    assert "deviated_accuracy" not in nom
    run(capsys, "optimize-region", *common, "--region", "R1", "--out", tmp_path / "d.json")
    code, plain = run(capsys, "evaluate", *common, "--sigma-w", 5, "--out", tmp_path / "e1.json")
    code, opt = run(capsys, "evaluate", *common, "--sigma-w", 5, "--design", tmp_path / "d.json",
                    "--out", tmp_path / "e2.json")
    assert code == 0
    assert opt["mean_rvd"] < plain["mean_rvd"]
    bad = TolerantDesign(np.full((3, 4), 470.0)).to_dict()
    (tmp_path / "bad.json").write_text(json.dumps(bad))
    assert cli.main(["evaluate", *map(str, common), "--sigma-w", "5", "--design", str(tmp_path / "bad.json")]) \
        == cli.EXIT_USAGE


def test_optimize_region_single_mesh(tmp_path, capsys):
    code, res = run(capsys, "optimize-region", "--unitary-size", 6, "--region", "R3", "--geometry", "ridge",
                    "--out", tmp_path / "d.json")
    assert code == 0 and res["mzis"] == 15 and res["regions"] == 5
    d = TolerantDesign.from_dict(json.loads((tmp_path / "d.json").read_text()))
    assert d.geometry == "ridge"


def test_fig5_zero_sigma_and_csv_round_trip(tmp_path, capsys):
    code, res = run(capsys, "sweep-fig5", "--size", 4, "--count", 3, "--trials", 2, "--sigma-w", 0, "--sigma-t", 0,
                    "--policies", "none,R1-strip", "--out", tmp_path / "f5.csv")
    rows = cli.read_csv(tmp_path / "f5.csv")
    assert len(rows) == 4 == res["rows"]
    for r in rows:
        assert r["median"] == r["whisker_hi"] == r["mean"] == 0.0
        assert r["n"] == 6


def test_fig6_zero_sigma_rows_and_summary(tmp_path, capsys, weights):
    code, res = run(capsys, "sweep-fig6", "--weights", weights, "--mnist", MNIST, "--limit", 60,
                    "--sigma-scales", "0", "--corr-lens", "100,1000", "--policies", "none,R1-strip",
                    "--trials", 2, "--out-dir", tmp_path)
    assert code == 0
    rows = cli.read_csv(tmp_path / "fig6_trials.csv")
    assert len(rows) == 1 * 2 * 2 * 2 * 2 == res["rows"]
    assert {r["accuracy"] for r in rows} == {res["nominal_accuracy"]}
    summary = json.loads((tmp_path / "fig6_summary.json").read_text())
    assert len(summary["groups"]) == 8
    assert all(g["accuracy_std"] == 0 for g in summary["groups"])


def test_fig6_is_deterministic(tmp_path, capsys, weights):
    argv = ["sweep-fig6", "--weights", weights, "--mnist", MNIST, "--limit", 40, "--sigma-scales", "1",
            "--corr-lens", "1000", "--policies", "none", "--modes", "W+T", "--trials", 1, "--seed", 3]
    run(capsys, *argv, "--out", tmp_path / "a.csv")
    run(capsys, *argv, "--out", tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()


def test_table3_zero_budget(tmp_path, capsys, weights):
    code, res = run(capsys, "sweep-table3", "--weights", weights, "--mnist", MNIST, "--limit", 60,
                    "--budgets", "0,0.08", "--corr-lens", "1000", "--trials", 1, "--out", tmp_path / "t3.csv")
    rows = cli.read_csv(tmp_path / "t3.csv")
    assert rows[0]["width"] == 470.0 and rows[0]["arm_length"] == 135.0
    assert rows[0]["pre_accuracy_l1000"] == rows[0]["post_accuracy_l1000"]
    assert rows[1]["width"] > 470
