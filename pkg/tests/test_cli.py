import json

import numpy as np
import pytest

from motionrec.cli import _parse_budgets, main
from motionrec.data import load_dataset
from motionrec.models import GenerativeModel, load_checkpoint


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """One tiny dataset and genmodel checkpoint shared by the module."""
    root = tmp_path_factory.mktemp("cli")
    data_dir = root / "data"
    assert (
        main(
            [
                "synth",
                "--out",
                str(data_dir),
                "--subjects",
                "2",
                "--trials-per-subject",
                "2",
                "--activities",
                "3",
                "--channels",
                "4",
                "--trial-len",
                "60",
                "--seed",
                "5",
            ]
        )
        == 0
    )
    ckpt = root / "gen.ckpt"
    assert (
        main(
            [
                "train-rep",
                "--dataset",
                str(data_dir / "manifest.json"),
                "--feature",
                "genmodel",
                "--genmodel-hidden",
                "8",
                "--genmodel-components",
                "2",
                "--rep-epochs",
                "2",
                "--downsample",
                "2",
                "--out",
                str(ckpt),
            ]
        )
        == 0
    )
    return {"root": root, "data": data_dir / "manifest.json", "ckpt": ckpt}


class TestBudgetParsing:
    def test_forms(self):
        assert _parse_budgets("3") == [3]
        assert _parse_budgets("1,2,5") == [1, 2, 5]
        assert _parse_budgets("1..4") == [1, 2, 3, 4]
        assert _parse_budgets("1, 3..5, 9") == [1, 3, 4, 5, 9]


class TestSynth:
    def test_writes_loadable_dataset(self, workdir):
        ds = load_dataset(workdir["data"])
        assert len(ds.trials) == 4
        assert ds.n_channels == 4
        assert ds.n_classes == 3

    def test_seeded_regeneration_matches(self, workdir, tmp_path):
        assert (
            main(
                [
                    "synth",
                    "--out",
                    str(tmp_path / "again"),
                    "--subjects",
                    "2",
                    "--trials-per-subject",
                    "2",
                    "--activities",
                    "3",
                    "--channels",
                    "4",
                    "--trial-len",
                    "60",
                    "--seed",
                    "5",
                ]
            )
            == 0
        )
        a = load_dataset(workdir["data"])
        b = load_dataset(tmp_path / "again" / "manifest.json")
        for t0, t1 in zip(a.trials, b.trials):
            assert np.array_equal(t0.kinematics, t1.kinematics)


class TestConfigHandling:
    def test_print_config_merges_file_and_flags(self, capsys, tmp_path):
        cfg_file = tmp_path / "c.json"
        cfg_file.write_text(json.dumps({"feature": "genmodel", "rep_epochs": 5, "seed": 9}))
        code = main(
            [
                "train-rep",
                "--config",
                str(cfg_file),
                "--rep-epochs",
                "7",
                "--print-config",
            ]
        )
        assert code == 0
        merged = json.loads(capsys.readouterr().out)
        assert merged["feature"] == "genmodel"
        assert merged["rep_epochs"] == 7  # flag beats file
        assert merged["seed"] == 9

    def test_unknown_config_key_is_usage_error(self, tmp_path, capsys):
        cfg_file = tmp_path / "c.json"
        cfg_file.write_text(json.dumps({"feature": "raw", "momentum": 0.9}))
        assert main(["evaluate", "--config", str(cfg_file), "--print-config"]) == 2
        assert "momentum" in capsys.readouterr().err

    def test_malformed_config_json(self, tmp_path):
        cfg_file = tmp_path / "c.json"
        cfg_file.write_text("{broken")
        assert main(["evaluate", "--config", str(cfg_file)]) == 2

    def test_budget_flag_accepts_ranges(self, capsys):
        assert main(["evaluate", "--n-labeled", "1..3", "--print-config"]) == 0
        merged = json.loads(capsys.readouterr().out)
        assert merged["n_labeled"] == [1, 2, 3]


class TestExitCodes:
    def test_usage_errors_are_2(self, workdir):
        assert main(["train-rep", "--feature", "genmodel"]) == 2  # no dataset
        assert (
            main(["train-rep", "--dataset", str(workdir["data"]), "--feature", "raw"]) == 2
        )
        assert (
            main(
                [
                    "train-rec",
                    "--dataset",
                    str(workdir["data"]),
                    "--train-trials",
                    "nope",
                    "--rec-epochs",
                    "0",
                    "--out",
                    "/tmp/unused.ckpt",
                ]
            )
            == 2
        )

    def test_bad_argv_is_2(self):
        assert main(["no-such-command"]) == 2
        assert main(["synth", "--frobnicate"]) == 2

    def test_help_is_0(self):
        assert main(["--help"]) == 0

    def test_validation_errors_are_1(self, workdir, tmp_path):
        code = main(
            [
                "sample",
                "--dataset",
                str(workdir["data"]),
                "--checkpoint",
                str(workdir["ckpt"]),
                "--trial",
                "s00_t00",
                "--prefix-frames",
                "-1",
                "--downsample",
                "2",
                "--out",
                str(tmp_path / "s"),
            ]
        )
        assert code == 1

    def test_missing_files_are_3(self, tmp_path):
        assert (
            main(
                [
                    "train-rep",
                    "--dataset",
                    str(tmp_path / "absent" / "manifest.json"),
                    "--feature",
                    "genmodel",
                    "--out",
                    str(tmp_path / "x.ckpt"),
                ]
            )
            == 3
        )


class TestTrainRep:
    def test_checkpoint_and_trace(self, workdir):
        model = load_checkpoint(workdir["ckpt"])
        assert isinstance(model, GenerativeModel)
        assert model.hidden_size == 8
        trace = (workdir["root"] / "gen.ckpt.trace.csv").read_text().splitlines()
        assert trace[0] == "epoch,mean_loss"
        assert len(trace) == 3  # header + 2 epochs


class TestEncode:
    def test_feature_csvs(self, workdir, tmp_path):
        out = tmp_path / "feats"
        code = main(
            [
                "encode",
                "--dataset",
                str(workdir["data"]),
                "--checkpoint",
                str(workdir["ckpt"]),
                "--feature",
                "genmodel",
                "--downsample",
                "2",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        manifest = json.loads((out / "features_manifest.json").read_text())
        assert manifest["feature_kind"] == "genmodel"
        assert manifest["width"] == 8
        assert len(manifest["trials"]) == 4
        feats = np.loadtxt(out / "s00_t00_features.csv", delimiter=",")
        assert feats.shape == (30, 8)

    def test_recognizer_checkpoint_refused(self, workdir, tmp_path):
        rec_ckpt = tmp_path / "rec.ckpt"
        assert (
            main(
                [
                    "train-rec",
                    "--dataset",
                    str(workdir["data"]),
                    "--train-trials",
                    "s00_t00",
                    "--rec-epochs",
                    "1",
                    "--rec-layers",
                    "1",
                    "--rec-hidden",
                    "4",
                    "--downsample",
                    "2",
                    "--out",
                    str(rec_ckpt),
                ]
            )
            == 0
        )
        code = main(
            [
                "encode",
                "--dataset",
                str(workdir["data"]),
                "--checkpoint",
                str(rec_ckpt),
                "--downsample",
                "2",
                "--out",
                str(tmp_path / "f"),
            ]
        )
        assert code == 2


class TestEvaluate:
    def test_protocol_outputs(self, workdir, tmp_path):
        out = tmp_path / "eval"
        code = main(
            [
                "evaluate",
                "--dataset",
                str(workdir["data"]),
                "--feature",
                "raw",
                "--n-labeled",
                "1",
                "--rec-epochs",
                "1",
                "--rec-layers",
                "1",
                "--rec-hidden",
                "4",
                "--downsample",
                "2",
                "--out",
                str(out),
            ]
        )
        assert code == 0
        rows = (out / "results.csv").read_text().splitlines()
        assert rows[0] == "n_labeled,split_id,error_rate,edit_distance"
        assert len(rows) == 5  # header + 4 exhaustive splits (2 subjects x 2 trials)
        plan = json.loads((out / "splits_1.json").read_text())
        assert plan["mode"] == "exhaustive"


class TestSample:
    def test_outputs_and_determinism(self, workdir, tmp_path):
        def run(out):
            return main(
                [
                    "sample",
                    "--dataset",
                    str(workdir["data"]),
                    "--checkpoint",
                    str(workdir["ckpt"]),
                    "--trial",
                    "s01_t00",
                    "--prefix-frames",
                    "5",
                    "--horizon",
                    "4",
                    "--n-samples",
                    "2",
                    "--downsample",
                    "2",
                    "--seed",
                    "3",
                    "--out",
                    str(out),
                ]
            )

        assert run(tmp_path / "a") == 0
        assert run(tmp_path / "b") == 0
        for name in ("prefix.csv", "truth.csv", "sample_00.csv", "sample_01.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        sample = np.loadtxt(tmp_path / "a" / "sample_00.csv", delimiter=",")
        assert sample.shape == (4, 4)
        s0 = np.loadtxt(tmp_path / "a" / "sample_00.csv", delimiter=",")
        s1 = np.loadtxt(tmp_path / "a" / "sample_01.csv", delimiter=",")
        assert not np.array_equal(s0, s1)

    def test_oversized_prefix_rejected(self, workdir, tmp_path):
        code = main(
            [
                "sample",
                "--dataset",
                str(workdir["data"]),
                "--checkpoint",
                str(workdir["ckpt"]),
                "--trial",
                "s00_t00",
                "--prefix-frames",
                "999",
                "--downsample",
                "2",
                "--out",
                str(tmp_path / "s"),
            ]
        )
        assert code == 1


class TestGradcheck:
    def test_clean_run_passes(self, capsys):
        assert main(["gradcheck", "--seed", "0"]) == 0
        out = capsys.readouterr().out
        assert out.count("PASS") == 4
        assert "FAIL" not in out

    def test_injected_fault_caught(self, capsys):
        assert main(["gradcheck", "--inject-fault", "genmodel:lstm.W"]) == 1
        out = capsys.readouterr().out
        assert "gradcheck genmodel" in out
        assert "FAIL" in out

    def test_unknown_fault_tensor(self):
        assert main(["gradcheck", "--inject-fault", "genmodel:nope"]) == 2
        assert main(["gradcheck", "--inject-fault", "plain"]) == 2
