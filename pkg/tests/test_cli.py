"""End-to-end CLI smoke tests on a small dataset."""

import json

import numpy as np
import pytest

from sparsedpd import io as sio
from sparsedpd.cli import main


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory, capsys_disabled=None):
    path = tmp_path_factory.mktemp("data") / "small.bin"
    rc = main(["gen", "--symbols", "1200", "--samples", "9000",
               "--seed", "5", "--out", str(path)])
    assert rc == 0
    return path


def _run_json(capsys, argv):
    rc = main(argv)
    out = capsys.readouterr().out
    return rc, json.loads(out)


def test_gen_summary_and_payload(tmp_path, capsys):
    p = tmp_path / "d.bin"
    rc, summary = _run_json(capsys, ["gen", "--symbols", "600", "--samples", "4000",
                                     "--seed", "2", "--out", str(p)])
    assert rc == 0
    assert summary["samples"] == 4000
    ds = sio.read_dataset(p)
    assert len(ds) == 4000
    assert ds.metadata["seed"] == 2
    # inputs respect the Q1.13 range
    assert ds.input_i.max() <= 8191 and ds.input_i.min() >= -8192


def test_gen_default_sample_count(tmp_path, capsys):
    p = tmp_path / "big.bin"
    rc, summary = _run_json(capsys, ["gen", "--out", str(p)])
    assert rc == 0
    assert summary["samples"] == 172035


def test_train_eval_roundtrip(small_dataset, tmp_path, capsys):
    out_dir = tmp_path / "run"
    rc, summary = _run_json(capsys, ["train", "--data", str(small_dataset),
                                     "--config", "ci", "--out-dir", str(out_dir)])
    assert rc == 0
    assert (out_dir / "checkpoint.json").exists()
    assert (out_dir / "history.csv").exists()
    assert (out_dir / "params_report.json").exists()
    assert 0.0 < summary["sparsity"] < 1.0
    assert summary["pa_fit_residual_db"] < -60

    for path in ("reference", "fixedpoint"):
        rc, ev = _run_json(capsys, ["eval", "--data", str(small_dataset),
                                    "--checkpoint", str(out_dir / "checkpoint.json"),
                                    "--path", path,
                                    "--out-dir", str(tmp_path / f"eval_{path}")])
        assert rc == 0
        assert "nmse_db" in ev and "acpr_db" in ev
        assert (tmp_path / f"eval_{path}" / "psd_dpd.csv").exists()


def test_eval_rejects_tampered_hash(small_dataset, tmp_path, capsys):
    out_dir = tmp_path / "run"
    assert main(["train", "--data", str(small_dataset), "--config", "ci",
                 "--out-dir", str(out_dir)]) == 0
    capsys.readouterr()
    ckpt = out_dir / "checkpoint.json"
    doc = json.loads(ckpt.read_text())
    doc["config_hash"] = "0" * 16
    ckpt.write_text(json.dumps(doc))
    rc = main(["eval", "--data", str(small_dataset), "--checkpoint", str(ckpt)])
    assert rc == 2


def test_certify_invsqrt_reduced(capsys, tmp_path):
    lut = tmp_path / "seed.hex"
    # reduced input width keeps the sweep fast; the full 28-bit sweep runs
    # in the acceptance suite
    rc, summary = _run_json(capsys, ["certify-invsqrt", "--input-bits", "18",
                                     "--input-frac-bits", "16",
                                     "--lut-out", str(lut)])
    assert rc == 0 and summary["pass"]
    assert summary["eps_max"] <= 2.0 ** -12
    assert lut.exists() and len(lut.read_text().splitlines()) == 256


def test_certify_invsqrt_fails_without_iterations(capsys):
    rc, summary = _run_json(capsys, ["certify-invsqrt", "--input-bits", "18",
                                     "--input-frac-bits", "16", "--iters", "0"])
    assert rc == 2 and not summary["pass"]


def test_export_tv(small_dataset, tmp_path, capsys):
    out_dir = tmp_path / "run"
    assert main(["train", "--data", str(small_dataset), "--config", "ci",
                 "--out-dir", str(out_dir)]) == 0
    capsys.readouterr()
    tv = tmp_path / "vectors.txt"
    rc, summary = _run_json(capsys, ["export-tv", "--data", str(small_dataset),
                                     "--checkpoint", str(out_dir / "checkpoint.json"),
                                     "--count", "500", "--out", str(tv)])
    assert rc == 0 and summary["vectors"] == 500
    header, ii, qq, oi, oq = sio.read_test_vectors(tv)
    assert len(ii) == 500
    ds = sio.read_dataset(small_dataset)
    assert np.array_equal(ii, ds.input_i[:500])


def test_missing_file_is_clean_error(capsys):
    rc = main(["eval", "--data", "/nonexistent.bin", "--checkpoint", "/nope.json"])
    assert rc == 1
    assert "error" in capsys.readouterr().err
