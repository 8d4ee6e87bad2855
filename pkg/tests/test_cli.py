import json
import os
import shutil
import subprocess
import sys

import numpy as np
import pytest

from spectramap.cli import entry
from spectramap.dmaps import nystrom_extend
from spectramap.serialize import load_model


def write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh)
    return str(path)


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_data")
    cfg = write_json(root / "synth.json",
                     {"kind": "peak_spectra", "n_samples": 60,
                      "noise": 0.01, "seed": 3})
    assert entry(["synth", "--config", cfg, "--out", str(root / "data")]) == 0
    return root


@pytest.fixture(scope="module")
def trained_run(data_dir):
    cfg = write_json(data_dir / "run.json", {
        "data": {"spectra": str(data_dir / "data" / "spectra.csv"),
                 "sizes": str(data_dir / "data" / "sizes.csv")},
        "split": {"test_fraction": 0.25, "seed": 1},
        "dmaps": {"n_eig": 8},
    })
    out = data_dir / "run"
    assert entry(["train", "direct_dmaps_nn", "--config", cfg,
                  "--out", str(out)]) == 0
    return cfg, out


class TestSynth:
    def test_outputs_exist(self, data_dir):
        for name in ("spectra.csv", "sizes.csv", "sidecar.json"):
            assert os.path.isfile(data_dir / "data" / name)

    def test_rerun_reproduces_bytes(self, data_dir, tmp_path):
        cfg = str(data_dir / "synth.json")
        assert entry(["synth", "--config", cfg,
                      "--out", str(tmp_path / "again")]) == 0
        for name in ("spectra.csv", "sizes.csv", "sidecar.json"):
            a = (data_dir / "data" / name).read_bytes()
            b = (tmp_path / "again" / name).read_bytes()
            assert a == b

    def test_seed_flag_overrides_config(self, data_dir, tmp_path):
        cfg = str(data_dir / "synth.json")
        assert entry(["synth", "--config", cfg, "--seed", "9",
                      "--out", str(tmp_path / "other")]) == 0
        a = (data_dir / "data" / "spectra.csv").read_bytes()
        b = (tmp_path / "other" / "spectra.csv").read_bytes()
        assert a != b

    def test_unknown_key_rejected(self, tmp_path):
        cfg = write_json(tmp_path / "bad.json",
                         {"kind": "peak_spectra", "n": 50})
        assert entry(["synth", "--config", cfg,
                      "--out", str(tmp_path / "x")]) == 2


class TestTrainPredictEvaluate:
    def test_train_writes_report(self, trained_run):
        _, out = trained_run
        for name in ("report.json", "metrics.csv", "parity.csv"):
            assert os.path.isfile(out / name)
        assert os.path.isfile(out / "models" / "manifest.json")

    def test_predict_then_evaluate(self, data_dir, trained_run, tmp_path):
        _, out = trained_run
        pcfg = write_json(tmp_path / "p.json", {
            "models": str(out / "models"),
            "spectra": str(data_dir / "data" / "spectra.csv")})
        preds = tmp_path / "preds.csv"
        assert entry(["predict", "--config", pcfg, "--out", str(preds)]) == 0
        with open(preds) as fh:
            assert fh.readline().strip() == "sample_id,diameter_nm"

        ecfg = write_json(tmp_path / "e.json", {
            "predictions": str(preds),
            "sizes": str(data_dir / "data" / "sizes.csv")})
        metrics = tmp_path / "metrics.json"
        assert entry(["evaluate", "--config", ecfg,
                      "--out", str(metrics)]) == 0
        doc = json.loads(metrics.read_text())
        assert doc["n_samples"] == 60
        assert doc["r2"] > 0.9

    def test_report_reemission_is_byte_identical(self, trained_run, tmp_path):
        _, out = trained_run
        rcfg = write_json(tmp_path / "r.json",
                          {"report": str(out / "report.json")})
        again = tmp_path / "again"
        assert entry(["report", "--config", rcfg, "--out", str(again)]) == 0
        for name in ("report.json", "metrics.csv", "parity.csv"):
            assert (out / name).read_bytes() == (again / name).read_bytes()

    def test_workflow_name_mismatch(self, trained_run, tmp_path):
        cfg_path, _ = trained_run
        doc = json.loads(open(cfg_path).read())
        doc["workflow"] = "yshaped"
        bad = write_json(tmp_path / "bad.json", doc)
        assert entry(["train", "direct_dmaps_nn", "--config", bad,
                      "--out", str(tmp_path / "x")]) == 2

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_numeric_failure_exit_code(self, data_dir, tmp_path):
        cfg = write_json(tmp_path / "diverge.json", {
            "data": {"spectra": str(data_dir / "data" / "spectra.csv"),
                     "sizes": str(data_dir / "data" / "sizes.csv")},
            "dmaps": {"n_eig": 8},
            "regressor": {"learning_rate": 1e6, "epochs": 50},
        })
        assert entry(["train", "direct_dmaps_nn", "--config", cfg,
                      "--out", str(tmp_path / "x")]) == 3


class TestPreprocessAndModels:
    def test_preprocess(self, data_dir, tmp_path):
        cfg = write_json(tmp_path / "pre.json", {
            "spectra": str(data_dir / "data" / "spectra.csv"),
            "sizes": str(data_dir / "data" / "sizes.csv"),
            "pretreatment": {"region": "fingerprint",
                             "baseline": "rubber_band",
                             "normalization": "snv"}})
        out = tmp_path / "treated"
        assert entry(["preprocess", "--config", cfg, "--out", str(out)]) == 0
        assert os.path.isfile(out / "spectra.csv")
        assert os.path.isfile(out / "sizes.csv")

    def test_dmap_fit_and_extend(self, data_dir, tmp_path):
        fit_cfg = write_json(tmp_path / "fit.json", {
            "spectra": str(data_dir / "data" / "spectra.csv"),
            "dmaps": {"n_eig": 6}})
        model_dir = tmp_path / "dmap"
        assert entry(["dmap", "fit", "--config", fit_cfg,
                      "--out", str(model_dir)]) == 0

        ext_cfg = write_json(tmp_path / "ext.json", {
            "model": str(model_dir),
            "spectra": str(data_dir / "data" / "spectra.csv"),
            "indices": [1, 2]})
        coords = tmp_path / "coords.csv"
        assert entry(["dmap", "extend", "--config", ext_cfg,
                      "--out", str(coords)]) == 0

        model = load_model(model_dir)
        expected = nystrom_extend(model, model.points, (1, 2))
        got = np.loadtxt(coords, delimiter=",", skiprows=1,
                         usecols=(1, 2))
        assert np.allclose(got, expected, atol=1e-12, rtol=0)
        # training points come back to their own embedding
        assert np.allclose(got, model.eigenvectors[:, 1:3], atol=1e-8)

    def test_alt_fit(self, data_dir, tmp_path):
        cfg = write_json(tmp_path / "alt.json", {
            "sensor1": str(data_dir / "data" / "spectra.csv"),
            "sensor2": str(data_dir / "data" / "spectra.csv"),
            "altdmaps": {"n_eig": 5}})
        out = tmp_path / "alt_model"
        assert entry(["alt", "fit", "--config", cfg, "--out", str(out)]) == 0
        model = load_model(out)
        assert model.eigenvalues.shape == (5,)


class TestErrorSurface:
    def test_missing_config_file(self, tmp_path):
        assert entry(["synth", "--config", str(tmp_path / "nope.json"),
                      "--out", str(tmp_path / "x")]) == 2

    def test_config_must_be_object(self, tmp_path):
        path = tmp_path / "arr.json"
        path.write_text("[1, 2, 3]")
        assert entry(["synth", "--config", str(path),
                      "--out", str(tmp_path / "x")]) == 2

    def test_no_arguments_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            entry([])
        assert exc.value.code == 2

    def test_unknown_subcommand_is_usage_error(self):
        with pytest.raises(SystemExit) as exc:
            entry(["transmogrify"])
        assert exc.value.code == 2


class TestConsoleInvocation:
    def test_module_invocation(self, tmp_path):
        cfg = write_json(tmp_path / "s.json",
                         {"kind": "arc_manifold", "n_samples": 20})
        proc = subprocess.run(
            [sys.executable, "-m", "spectramap.cli", "synth",
             "--config", cfg, "--out", str(tmp_path / "d")],
            capture_output=True, text=True)
        assert proc.returncode == 0, proc.stderr
        assert "20 spectra" in proc.stdout

    def test_installed_script(self, tmp_path):
        exe = shutil.which("spectramap")
        if exe is None:
            pytest.skip("console script not on PATH")
        proc = subprocess.run([exe, "--help"], capture_output=True, text=True)
        assert proc.returncode == 0
        assert "synth" in proc.stdout
