import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import DATA
from feminpaint import cli, codec
from feminpaint.image import Image, load_image, mse, save_image
from feminpaint.spatial import MaskSet


@pytest.fixture(scope="module")
def small_pgm(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    f = Image.from_array(load_image(DATA / "camera256.pgm").to_array()[100:148, 60:124])
    path = d / "small.pgm"
    save_image(f, path)
    return path


def run(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def run_json(capsys, *argv):
    code, out, err = run(capsys, *argv, "--report", "json")
    assert code == 0, err
    return json.loads(out)


def test_densify_tonal_decode(capsys, small_pgm, tmp_path):
    pay = tmp_path / "a.femi"
    rep = run_json(capsys, "densify", "--input", small_pgm, "--density", "0.05", "--iters", "5",
                   "--seed", "3", "--out", pay)
    f = load_image(small_pgm)
    m = round(0.05 * f.n_pixels)
    assert (rep["m"], rep["p"], rep["n"], rep["seed"]) == (m, m, 5, 3)
    assert rep["payload_bytes"] == pay.stat().st_size == codec.payload_size(m, m, 1)
    assert rep["timings"]["spatial"] >= 0
    assert rep["inpaintings"] == 5

    out = tmp_path / "b.femi"
    tr = run_json(capsys, "tonal", "--input", small_pgm, "--payload", pay, "--out", out)
    assert tr["mse_after"] < tr["mse_before"]
    assert tr["mse_before"] == pytest.approx(rep["mse_no_to"], rel=1e-6)
    assert tr["peak_memory_estimate_bytes"] > 0
    assert all(v >= 0 for v in tr["timings"].values())

    img = tmp_path / "rec.pgm"
    dr = run_json(capsys, "decode", "--payload", out, "--out", img)
    assert (dr["width"], dr["height"], dr["m"]) == (f.width, f.height, m)
    # the written file is the 8-bit rounding of the quantised-value reconstruction
    assert mse(f, load_image(img)) == pytest.approx(tr["mse_after_quantised"], abs=0.5)


def test_densify_is_deterministic(capsys, small_pgm, tmp_path):
    for name in ("x", "y"):
        code, _, _ = run(capsys, "densify", "--input", small_pgm, "--mask-count", "80",
                         "--iters", "4", "--seed", "1", "--out", tmp_path / name)
        assert code == 0
    assert (tmp_path / "x").read_bytes() == (tmp_path / "y").read_bytes()


def test_l1_report(capsys, small_pgm, tmp_path):
    pay = tmp_path / "a.femi"
    run(capsys, "densify", "--input", small_pgm, "--mask-count", "100", "--iters", "3",
        "--out", pay)
    rep = run_json(capsys, "tonal", "--input", small_pgm, "--payload", pay, "--out",
                   tmp_path / "b", "--l1", "--irls-iters", "2")
    assert rep["objective"] == "l1"
    assert len(rep["l1_history"][0]) == 3


def test_optimal_payload_is_fixed_point(capsys, small_pgm, tmp_path):
    pay, once, twice = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    run(capsys, "densify", "--input", small_pgm, "--mask-count", "100", "--iters", "3",
        "--out", pay)
    first = run_json(capsys, "tonal", "--input", small_pgm, "--payload", pay, "--out", once)
    second = run_json(capsys, "tonal", "--input", small_pgm, "--payload", once, "--out", twice)
    assert second["mse_after_quantised"] == pytest.approx(first["mse_after_quantised"], abs=0.5)
    assert second["mse_before"] == pytest.approx(first["mse_after_quantised"], rel=1e-6)


@pytest.mark.parametrize("argv", [
    ["densify", "--input", "x.pgm", "--density", "0", "--out", "o"],
    ["densify", "--input", "x.pgm", "--density", "1.5", "--out", "o"],
    ["densify", "--input", "x.pgm", "--out", "o"],
    ["densify", "--input", "x.pgm", "--density", "0.1", "--iters", "0", "--out", "o"],
    ["bench", "--sizes", "4,abc"],
    ["frobnicate"],
])
def test_argument_errors(capsys, argv):
    code, _, _ = run(capsys, *argv)
    assert code == 2


def test_too_many_points_is_argument_error(capsys, small_pgm, tmp_path):
    code, _, err = run(capsys, "densify", "--input", small_pgm, "--mask-count", "3000",
                       "--out", tmp_path / "o")
    assert code == 2 and "exceeds" in err


def test_missing_input_is_io_error(capsys, tmp_path):
    code, _, _ = run(capsys, "densify", "--input", tmp_path / "nope.pgm", "--density", "0.1",
                     "--out", tmp_path / "o")
    assert code == 3


def test_dimension_mismatch(capsys, small_pgm, tmp_path):
    pay = tmp_path / "p"
    codec.write_payload(pay, MaskSet([5], [[1.0]]), [0, 9, 90, 99], 10, 10)
    code, _, err = run(capsys, "tonal", "--input", small_pgm, "--payload", pay,
                       "--out", tmp_path / "o")
    assert code == 2 and "does not match" in err


def test_corrupt_payload(capsys, tmp_path):
    pay = tmp_path / "p"
    pay.write_bytes(b"JUNKJUNKJUNKJUNKJUNKJUNKJUNK")
    code, _, _ = run(capsys, "decode", "--payload", pay, "--out", tmp_path / "o.pgm")
    assert code != 0


def test_single_mask_pixel_decodes_to_constant(capsys, tmp_path):
    pay = tmp_path / "p"
    codec.write_payload(pay, MaskSet([27], [[93.0]]), [0, 9, 90, 99], 10, 10)
    code, _, _ = run(capsys, "decode", "--payload", pay, "--out", tmp_path / "o.pgm")
    assert code == 0
    assert np.all(load_image(tmp_path / "o.pgm").data == 93)


def test_colour_pipeline(capsys, tmp_path):
    pay = tmp_path / "c.femi"
    run_json(capsys, "densify", "--input", DATA / "astronaut128.ppm", "--density", "0.03",
             "--iters", "3", "--out", pay)
    assert codec.read_payload(pay).channels == 3
    run_json(capsys, "decode", "--payload", pay, "--out", tmp_path / "c.ppm")
    assert load_image(tmp_path / "c.ppm").channels == 3


def test_bench_single_size_has_no_ratios(capsys):
    rep = run_json(capsys, "bench", "--sizes", "32", "--iters", "2")
    assert len(rep["rows"]) == 1
    row = rep["rows"][0]
    assert "spatial_ratio" not in row and "tonal_ratio" not in row
    assert row["spatial_s"] >= 0 and row["tonal_s"] >= 0


def test_bench_ratios_and_text(capsys):
    rep = run_json(capsys, "bench", "--sizes", "16,32", "--iters", "2", "--no-tonal")
    assert rep["rows"][1]["spatial_ratio"] == pytest.approx(
        rep["rows"][1]["spatial_s"] / rep["rows"][0]["spatial_s"])
    code, out, _ = run(capsys, "bench", "--sizes", "16,32", "--iters", "2")
    assert code == 0 and "tonal_ratio" in out


def test_text_report(capsys, small_pgm, tmp_path):
    code, out, _ = run(capsys, "densify", "--input", small_pgm, "--mask-count", "50",
                       "--iters", "2", "--out", tmp_path / "o")
    assert code == 0 and "mse_no_to" in out


def test_module_entry_point(small_pgm, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "feminpaint", "--threads", "1", "densify",
                           "--input", str(small_pgm), "--mask-count", "40", "--iters", "2",
                           "--out", str(tmp_path / "o"), "--report", "json"],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["m"] == 40
