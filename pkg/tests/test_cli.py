import json
import re
import subprocess
import sys

import numpy as np
import pytest

from frapident import cli
from frapident.estimation import read_curve_csv
from frapident.io import read_field_csv, read_profile_csv, read_tau_csv

pytestmark = pytest.mark.filterwarnings("ignore::RuntimeWarning")


def run(argv):
    return cli.main([str(a) for a in argv])


def test_simulate_region2(tmp_path):
    assert run(["simulate", "--region", 2, "--out", tmp_path]) == 0
    curve = read_curve_csv(tmp_path / "region2_synthetic.csv")
    assert len(curve) == 41 and curve.values[0] == 0.0


def test_simulate_noise_seeded(tmp_path, tiny_config_path):
    for d in ("a", "b"):
        assert run(["--config", tiny_config_path, "--preset", "tiny", "--seed", 5, "simulate",
                    "--noise", 0.01, "--out", tmp_path / d]) == 0
    a = (tmp_path / "a" / "region1_synthetic.csv").read_bytes()
    assert a == (tmp_path / "b" / "region1_synthetic.csv").read_bytes()


def test_tau_hyperbola(tmp_path):
    assert run(["tau", "--s-min", -3, "--s-max", 3, "--n", 49, "--out", tmp_path]) == 0
    arr = read_tau_csv(tmp_path / "tau.csv")
    assert arr.shape == (49, 3)
    assert np.allclose((arr[:, 1] + 6) * (arr[:, 2] + 6), 1, atol=1e-12)


@pytest.mark.parametrize("argv", [["bogus"], ["simulate", "--nope"], ["--region", "4", "tau"],
                                  []])
def test_usage_errors_exit_1(argv, capsys):
    assert run(argv) == 1
    assert "usage" in capsys.readouterr().err


def test_validation_errors_exit_1(tmp_path, capsys):
    assert run(["fit", "--data", tmp_path / "missing.csv"]) == 1
    assert run(["--config", tmp_path / "missing.json", "simulate"]) == 1
    assert run(["simulate", "--params", -1, 1, 1, 1, "--out", tmp_path]) == 1
    assert run(["--grid-n", 16, "simulate", "--out", tmp_path]) == 1
    assert run(["tau", "--s-min", 1, "--s-max", 0, "--out", tmp_path]) == 1
    err = capsys.readouterr().err
    assert err.count("invalid input") == 5


def test_runtime_failure_exit_2(monkeypatch, tmp_path):
    def boom(*a, **k):
        raise RuntimeError("solver exploded")

    monkeypatch.setattr(cli, "fit", boom)
    assert run(["fit", "--out", tmp_path]) == 2


def test_threads_env(monkeypatch):
    monkeypatch.setenv("FRAP_IDENT_THREADS", "3")
    assert cli.resolve_threads(None) == 3
    assert cli.resolve_threads(2) == 2
    monkeypatch.setenv("FRAP_IDENT_THREADS", "x")
    with pytest.raises(cli.FrapError):
        cli.resolve_threads(None)
    monkeypatch.delenv("FRAP_IDENT_THREADS")
    assert cli.resolve_threads(None) == 1
    with pytest.raises(cli.FrapError):
        cli.resolve_threads(0)


def test_global_flags_either_side(tmp_path):
    assert run(["--region", 3, "simulate", "--out", tmp_path / "a"]) == 0
    assert run(["simulate", "--region", 3, "--out", tmp_path / "b"]) == 0
    assert (tmp_path / "a" / "region3_synthetic.csv").read_bytes() == \
        (tmp_path / "b" / "region3_synthetic.csv").read_bytes()


def test_fit_and_sigma_print_nine_digits(tmp_path, tiny_config_path, capsys):
    common = ["--config", tiny_config_path, "--preset", "tiny", "--region", 2, "--out", tmp_path]
    assert run(common + ["simulate", "--noise", 0.003]) == 0
    data = tmp_path / "region2_synthetic.csv"
    assert run(common + ["sigma", "--data", data]) == 0
    out = capsys.readouterr().out
    value = re.search(r"^sigma\t(\S+)$", out, re.M).group(1)
    assert len(re.sub(r"[^0-9]", "", value.split("e")[0]).lstrip("0")) >= 9
    assert float(value) == pytest.approx(0.003, rel=0.3)
    assert run(common + ["fit", "--data", data]) == 0
    out = capsys.readouterr().out
    assert re.search(r"^D\t\d\.\d{8,}", out, re.M)
    saved = json.loads((tmp_path / "region2_fit.json").read_text())
    assert saved["D"] == pytest.approx(1.5, rel=0.05)


def test_scan_subcommands(tmp_path, tiny_config_path):
    common = ["--config", tiny_config_path, "--preset", "tiny", "--region", 1, "--out", tmp_path]
    assert run(common + ["profile", "--param", "c", "--n", 5]) == 0
    prof = read_profile_csv(tmp_path / "region1_profile_c.csv")
    assert prof["value"].size == 5
    assert run(common + ["profile2d", "--n", 3]) == 0
    assert run(common + ["subset", "--n", 5]) == 0
    assert run(common + ["lse-grid", "--n", 5]) == 0
    assert run(common + ["slope-field", "--n", 3]) == 0
    field = read_field_csv(tmp_path / "region1_slope_field.csv")
    assert field.slope.shape == (3, 3)
    assert run(common + ["s-profile", "--n", 5, "--fix-cd"]) == 0
    assert run(common + ["trace", "--field", tmp_path / "region1_slope_field.csv",
                         "--start", -6, -2]) == 0
    assert run(common + ["trace", "--field", tmp_path / "region1_slope_field.csv",
                         "--s", 10]) == 1  # tau(10) lies outside the field
    for name in ("profile_c", "surface", "lse_grid", "slope_field", "profile_s", "trace"):
        csv = tmp_path / f"region1_{name}.csv"
        assert run(["plot", csv]) == 0
        assert csv.with_suffix(".svg").read_text().startswith("<?xml")


def test_plot_rejects_unknown_csv(tmp_path):
    path = tmp_path / "x.csv"
    path.write_text("a,b\n1,2\n")
    assert run(["plot", path]) == 1


def test_pipeline_layout_and_report(tmp_path, tiny_config_path):
    argv = ["--config", tiny_config_path, "--preset", "tiny", "--region", 2, "--out", tmp_path,
            "pipeline"]
    assert run(argv) == 0
    rdir = tmp_path / "region2"
    report = json.loads((rdir / "report.json").read_text())
    assert report["schema_version"] == 1 and report["region_id"] == 2
    assert [s["step"] for s in report["steps"]] == [1, 2, 3, 4]
    for n in (1, 2, 3, 4):
        assert (rdir / f"step{n}").is_dir()

    def paths(node):
        if isinstance(node, dict):
            for k, v in node.items():
                if k.endswith(("csv", "svg")) and isinstance(v, str):
                    yield v
                else:
                    yield from paths(v)
        elif isinstance(node, list):
            for v in node:
                yield from paths(v)

    refs = list(paths(report))
    assert len(refs) > 10
    assert all((rdir / r).is_file() for r in refs)
    assert "wall_clock" not in report
    assert set(json.loads((rdir / "timings.json").read_text())) == {f"step{n}" for n in (1, 2, 3, 4)}


def test_entry_point_help():
    out = subprocess.run([sys.executable, "-m", "frapident.cli", "--help"], capture_output=True,
                         text=True)
    assert out.returncode == 0
    for sub in ("simulate", "profile2d", "lse-grid", "slope-field", "s-profile", "pipeline"):
        assert sub in out.stdout
