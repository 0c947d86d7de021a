"""End-to-end checks of the experiment command line (in-process, tiny shapes)."""

import json

import numpy as np
import pytest

from fdglm import generate_synthetic, load_csv
from fdglm.cli import _DEFAULTS, main


def _read_curve(path):
    return np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def test_defaults_match_experiment_shape():
    assert _DEFAULTS["n"] == 16384
    assert _DEFAULTS["d"] == 2048
    assert _DEFAULTS["rounds"] == 1000
    assert _DEFAULTS["loss"] == "squared" and _DEFAULTS["reg"] == "zero"
    assert _DEFAULTS["graph"] == ["complete"] and _DEFAULTS["m"] == [4]


def test_generate_writes_loadable_csv(tmp_path):
    rc = main(["generate", "--n", "12", "--d", "5", "--seed", "3", "--out-dir", str(tmp_path)])
    assert rc == 0
    path = tmp_path / "data-n12-d5-seed3.csv"
    assert path.exists() and path.with_suffix(".csv.json").exists()
    back = load_csv(path)
    fresh = generate_synthetic(12, 5, 3)
    assert np.array_equal(back.X, fresh.X) and np.array_equal(back.y, fresh.y)
    assert back.seed == 3


def test_generate_explicit_out_is_repeatable(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(["generate", "--n", "8", "--d", "3", "--seed", "1", "--out", str(a)]) == 0
    assert main(["generate", "--n", "8", "--d", "3", "--seed", "1", "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_run_emits_curve_figure_and_summary(tmp_path, capsys):
    rc = main([
        "run", "--n", "12", "--d", "6", "--seed", "1", "--graph", "complete", "-m", "3",
        "-T", "400", "--checkpoint-every", "100", "--out-dir", str(tmp_path),
    ])
    assert rc == 0
    assert "final log10 rel err" in capsys.readouterr().out
    curve = _read_curve(tmp_path / "curve-complete-m3.csv")
    assert curve.shape == (4, 7)
    assert (tmp_path / "curve-complete-m3.png").exists()
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["command"] == "run" and summary["rounds"] == 400
    (cell,) = summary["cells"]
    assert cell["graph"] == "complete" and cell["m"] == 3
    assert cell["steps"]["source"] == "theorem"
    assert cell["bound_model"] == "SqrtLip"
    # with theorem steps the guarantee must actually hold at the horizon
    assert cell["theorem_bound"] is not None
    assert cell["theorem_margin"] >= -1e-9
    assert cell["work_ratio"] > 0
    assert cell["figure"].endswith(".png")


def test_run_fans_out_over_graphs_and_m(tmp_path):
    rc = main([
        "run", "--n", "10", "--d", "6", "--graph", "complete", "star", "-m", "2", "3",
        "-T", "20", "--out-dir", str(tmp_path),
    ])
    assert rc == 0
    for stem in ("curve-complete-m2", "curve-complete-m3", "curve-star-m2", "curve-star-m3"):
        assert (tmp_path / f"{stem}.csv").exists()
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert len(summary["cells"]) == 4


def test_baseline_routes_agree_and_match_singleton_run(tmp_path):
    shape = ["--n", "10", "--d", "4", "--seed", "2", "-T", "50",
             "--tau", "0.8", "--sigma", "0.8", "--checkpoint-every", "10", "--no-plot"]
    d_sub = tmp_path / "sub"
    d_flag = tmp_path / "flag"
    d_one = tmp_path / "one"
    assert main(["baseline", *shape, "--out-dir", str(d_sub)]) == 0
    assert main(["run", "--baseline", *shape, "--out-dir", str(d_flag)]) == 0
    assert main(["run", "--graph", "complete", "-m", "1", *shape, "--out-dir", str(d_one)]) == 0
    sub = _read_curve(d_sub / "curve-baseline.csv")
    flag = _read_curve(d_flag / "curve-baseline.csv")
    one = _read_curve(d_one / "curve-complete-m1.csv")
    assert np.array_equal(sub, flag)
    # the singleton run produces the same iterates; only work accounting differs
    assert np.array_equal(sub[:, 2], one[:, 2])  # objective
    assert np.array_equal(sub[:, 3], one[:, 3])  # log10 relative error
    assert not np.array_equal(sub[:, 5], one[:, 5])  # flops


def test_sweep_overlay_and_work_normalized_axis(tmp_path):
    rc = main([
        "sweep", "--n", "12", "--d", "8", "--graph", "star", "-m", "2", "4",
        "--reg", "l1:0.05", "-T", "40", "--work-normalized", "--out-dir", str(tmp_path),
    ])
    assert rc == 0
    assert (tmp_path / "curve-star-m2.csv").exists()
    assert (tmp_path / "curve-star-m4.csv").exists()
    assert (tmp_path / "curves-overlay.png").exists()
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["command"] == "sweep"
    assert summary["overlay_figure"].endswith("curves-overlay.png")
    # work units column scales rounds by the cost-model ratio
    curve = _read_curve(tmp_path / "curve-star-m2.csv")
    cell = summary["cells"][0]
    assert np.allclose(curve[:, 1], curve[:, 0] * cell["work_ratio"])


def test_no_plot_suppresses_figures(tmp_path):
    rc = main([
        "run", "--n", "8", "--d", "4", "--graph", "complete", "-m", "2",
        "-T", "10", "--no-plot", "--out-dir", str(tmp_path),
    ])
    assert rc == 0
    assert not list(tmp_path.glob("*.png"))
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert "figure" not in summary["cells"][0]


def test_run_accepts_dataset_file(tmp_path):
    data = tmp_path / "ds.csv"
    assert main(["generate", "--n", "9", "--d", "3", "--seed", "5", "--out", str(data)]) == 0
    rc = main([
        "run", "--data", str(data), "--graph", "complete", "-m", "3", "-T", "15",
        "--no-plot", "--out-dir", str(tmp_path / "out"),
    ])
    assert rc == 0
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["dataset"]["path"] == str(data)
    assert summary["dataset"]["n"] == 9 and summary["dataset"]["d"] == 3


def test_graph_info_reports(tmp_path, capsys):
    assert main(["graph-info", "--graph", "complete", "--m", "4"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["edges"] == 6 and rep["diameter"] == 1
    assert rep["lambda2"] == pytest.approx(4.0, abs=1e-8)
    assert rep["lambda_max"] == pytest.approx(4.0, abs=1e-8)
    assert rep["inv_lambda2"] == pytest.approx(0.25, abs=1e-9)
    assert rep["mohar_slack"] >= -1e-9 and rep["mckay_slack"] >= -1e-9

    assert main(["graph-info", "--graph", "star", "--m", "9"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["lambda2"] == pytest.approx(1.0, abs=1e-8)
    assert rep["lambda_max"] == pytest.approx(9.0, abs=1e-8)

    out = tmp_path / "info.json"
    assert main(["graph-info", "--graph", "complete", "--m", "2", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["lambda2"] == pytest.approx(2.0, abs=1e-10)


def test_config_file_with_flag_precedence(tmp_path):
    cfg_dir = tmp_path / "from-config"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"n": 10, "d": 6, "seed": 3, "out_dir": str(cfg_dir)}))
    assert main(["generate", "--config", str(cfg)]) == 0
    assert (cfg_dir / "data-n10-d6-seed3.csv").exists()

    flag_dir = tmp_path / "from-flag"
    assert main(["generate", "--config", str(cfg), "--n", "14", "--out-dir", str(flag_dir)]) == 0
    assert (flag_dir / "data-n14-d6-seed3.csv").exists()
    assert not (cfg_dir / "data-n14-d6-seed3.csv").exists()


def test_out_dir_environment_fallback(tmp_path, monkeypatch):
    env_dir = tmp_path / "env-out"
    monkeypatch.setenv("FDGLM_OUT", str(env_dir))
    assert main(["generate", "--n", "8", "--d", "3", "--seed", "0"]) == 0
    assert (env_dir / "data-n8-d3-seed0.csv").exists()

    flag_dir = tmp_path / "flag-out"
    assert main(["generate", "--n", "8", "--d", "3", "--seed", "0",
                 "--out-dir", str(flag_dir)]) == 0
    assert (flag_dir / "data-n8-d3-seed0.csv").exists()
    assert not (env_dir / "data-n8-d3-seed0.csv").with_name("data-n8-d3-seed0.csv.json~").exists()


def test_exit_code_on_unpaired_manual_steps(tmp_path, capsys):
    rc = main(["run", "--n", "8", "--d", "4", "--graph", "complete", "-m", "2",
               "--tau", "0.1", "-T", "5", "--out-dir", str(tmp_path)])
    assert rc == 2
    assert "tau" in capsys.readouterr().err


@pytest.mark.filterwarnings("ignore::UserWarning")
@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_exit_code_on_divergence(tmp_path, capsys):
    rc = main(["run", "--n", "8", "--d", "4", "--graph", "complete", "-m", "2",
               "--tau", "1e30", "--sigma", "1e30", "-T", "60", "--no-plot",
               "--out-dir", str(tmp_path)])
    assert rc == 3
    assert "divergence" in capsys.readouterr().err


def test_exit_code_on_bad_loss(tmp_path, capsys):
    rc = main(["run", "--n", "8", "--d", "4", "--loss", "quartic",
               "-T", "5", "--out-dir", str(tmp_path)])
    assert rc == 2
    assert "quartic" in capsys.readouterr().err


def test_exit_code_on_missing_dataset(tmp_path, capsys):
    rc = main(["run", "--data", str(tmp_path / "absent.csv"), "-T", "5",
               "--out-dir", str(tmp_path)])
    assert rc == 2
