import csv
import subprocess
import sys

import numpy as np
import pytest

from osmosis_adi.cli import main, read_manifest
from osmosis_adi.grid_image import Image, load_image, rrmse, save_image


@pytest.fixture
def images(tmp_path, rng):
    y, x = np.mgrid[0:12, 0:10] + 0.5
    v = 0.3 + 0.6 * np.exp(-((x - 5) ** 2 + (y - 6) ** 2) / 10)
    gray = tmp_path / "v.pgm"
    save_image(Image(v), gray)
    rgb = tmp_path / "rgb.ppm"
    save_image(Image(rng.uniform(0.2, 1.0, (3, 12, 10))), rgb)
    mask = tmp_path / "mask.pgm"
    m = np.zeros((12, 10))
    m[4, 2:8] = 1
    save_image(Image(m), mask)
    empty = tmp_path / "empty.pgm"
    save_image(Image(np.zeros((12, 10))), empty)
    small = tmp_path / "small.pgm"
    save_image(Image(np.zeros((5, 5))), small)
    return dict(gray=str(gray), rgb=str(rgb), mask=str(mask), empty=str(empty), small=str(small))


def test_solve_pr_smoke(tmp_path, images):
    out = str(tmp_path / "o.pgm")
    assert main(["solve", "--input", images["gray"], "--scheme", "pr", "--tau", "10",
                 "--T", "10", "--out", out, "--diagnostics"]) == 0
    img = load_image(out)
    assert img.shape == (12, 10)
    man = read_manifest(out + ".manifest.csv")
    assert man["scheme"] == "pr" and man["tau"] == "10.0" and "argv" in man
    rows = list(csv.reader(open(out + ".diagnostics.csv")))
    assert rows[0][:3] == ["step", "time", "mean_c0"] and len(rows) == 3


def test_solve_reference_steady_state(tmp_path, images):
    # constant input with the bump as reference converges to the rescaled bump
    const = tmp_path / "c.pgm"
    save_image(Image(np.full((12, 10), 0.4)), const)
    out = str(tmp_path / "o.pgm")
    assert main(["solve", "--input", str(const), "--reference", images["gray"],
                 "--tau", "10", "--T", "3000", "--out", out]) == 0
    v = load_image(images["gray"]).data + 1 / 255
    w = (0.4 + 1 / 255) / v.mean() * v - 1 / 255
    assert rrmse(load_image(out), Image(w)) < 0.01


def test_solve_fe_bound_rejected(tmp_path, images, capsys):
    code = main(["solve", "--input", images["gray"], "--scheme", "fe", "--tau", "10",
                 "--T", "10", "--out", str(tmp_path / "o.pgm")])
    assert code == 2
    assert "tau <" in capsys.readouterr().err


def test_solve_usage_errors(tmp_path, images, capsys):
    assert main(["solve", "--out", str(tmp_path / "o.pgm")]) == 2
    assert "usage" in capsys.readouterr().err
    assert main(["solve", "--input", images["gray"], "--tau", "-1",
                 "--out", str(tmp_path / "o.pgm")]) == 2
    assert main(["solve", "--input", images["gray"], "--reference", images["small"],
                 "--out", str(tmp_path / "o.pgm")]) == 2


def test_solve_runtime_failure(tmp_path):
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"P7\n")
    assert main(["solve", "--input", str(bad), "--out", str(tmp_path / "o.pgm")]) == 1


def test_replay_is_bit_identical(tmp_path, images):
    out = str(tmp_path / "o.ppm")
    assert main(["solve", "--input", images["rgb"], "--tau", "5", "--T", "50", "--out", out]) == 0
    first = open(out, "rb").read()
    assert main(["replay", out + ".manifest.csv"]) == 0
    assert open(out, "rb").read() == first


def test_order_study_cli(tmp_path, capsys):
    out = tmp_path / "o.csv"
    assert main(["order-study", "--taus", "0.1,1,10", "--T", "10", "--grid", "8x6",
                 "--schemes", "pr,douglas:1", "--out-csv", str(out),
                 "--loglog", str(tmp_path / "o.dat")]) == 0
    rows = list(csv.reader(open(out)))
    assert rows[0] == ["scheme", "theta", "tau", "rrmse", "time_s"]
    assert [r[2] for r in rows[1:4]] == ["0.1", "1.0", "10.0"]
    assert ["# slopes"] in rows
    assert "pr: slope" in capsys.readouterr().out


def test_order_study_single_tau_and_slope(tmp_path):
    out = tmp_path / "o.csv"
    assert main(["order-study", "--taus", "0.5", "--T", "2", "--grid", "6x5",
                 "--schemes", "pr", "--out-csv", str(out)]) == 0
    assert rows_after_slopes(out) == [["pr", "-", "absent"]]
    assert main(["order-study", "--taus", "0.05,0.1,0.2", "--T", "2", "--grid", "8x7",
                 "--schemes", "pr", "--out-csv", str(out)]) == 0
    (row,) = rows_after_slopes(out)
    assert abs(float(row[2]) - 2.0) < 0.15


def rows_after_slopes(path):
    rows = list(csv.reader(open(path)))
    i = rows.index(["scheme", "theta", "slope"])
    return rows[i + 1 :]


def test_order_study_cap(tmp_path):
    assert main(["order-study", "--grid", "20x20", "--cap", "100", "--taus", "1",
                 "--out-csv", str(tmp_path / "o.csv")]) == 1


def test_bench_cli(tmp_path, images):
    out = tmp_path / "b.csv"
    assert main(["bench", "--taus", "1,10", "--T", "20", "--grid", "8x6",
                 "--out-csv", str(out)]) == 0
    rows = list(csv.DictReader(open(out)))
    assert len(rows) == 14 and all(r["status"] == "ok" for r in rows)
    assert main(["bench", "--taus", "5", "--T", "10", "--input", images["rgb"],
                 "--methods", "douglas,pr", "--repeat", "2", "--out-csv", str(out)]) == 0
    assert main(["bench", "--methods", "simplex", "--out-csv", str(out)]) == 2


def test_bench_all_cells_fail(tmp_path):
    out = tmp_path / "b.csv"
    assert main(["bench", "--taus", "1", "--T", "2", "--grid", "6x5", "--methods", "bicgstab",
                 "--thetas", "1", "--maxiter", "1", "--tol", "1e-15", "--out-csv", str(out)]) == 1


def test_shadow_cli(tmp_path, images):
    out = str(tmp_path / "s.ppm")
    assert main(["shadow", "--input", images["rgb"], "--mask", images["mask"],
                 "--tau", "10", "--theta", "0.5", "--T", "200", "--out", out]) == 0
    assert load_image(out).channels == 3
    text = open(out + ".diagnostics.txt").read()
    assert text.count("channel") == 3 and "first_negative_step" in text
    assert load_image(out + ".mask.pgm").vector().sum() > 6
    assert read_manifest(out + ".manifest.csv")["dilate"] == "1"


def test_shadow_cli_empty_mask_and_mismatch(tmp_path, images):
    out = str(tmp_path / "s.pgm")
    assert main(["shadow", "--input", images["gray"], "--mask", images["empty"],
                 "--T", "500", "--out", out]) == 0
    assert rrmse(load_image(out), load_image(images["gray"])) < 0.01
    assert main(["shadow", "--input", images["gray"], "--mask", images["small"],
                 "--out", out]) == 2


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "osmosis_adi", "--version"],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "osmosis-adi" in r.stdout
