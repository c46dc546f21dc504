import json

import numpy as np
import pytest

from eblab import cli
from eblab import data as datakit
from eblab import metrics
from eblab import trainer


@pytest.fixture()
def ring_config(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text(
        "dataset = ring\ntotal_steps = 20\nbatch_size = 16\nsizeG = 8\nsizeD = 8\n"
        "eval_samples = 16\nlog_every = 10\nseed = 2\n"
    )
    return path


class TestMakeData:
    def test_ring_with_spec_file(self, tmp_path, capsys):
        spec = tmp_path / "ring.spec"
        spec.write_text("modes = 4\ncount = 100\nseed = 3\n")
        out = tmp_path / "ring.npz"
        assert cli.main(["make-data", "ring", "--spec", str(spec), "--out", str(out)]) == 0
        ds = datakit.load_dataset(out)
        assert len(ds) == 100 and ds.n_classes == 4

    def test_digits_defaults(self, tmp_path):
        out = tmp_path / "digits.npz"
        assert cli.main(["make-data", "digits", "--out", str(out)]) == 0
        assert datakit.load_dataset(out).dim == 64


class TestTrain:
    def test_train_writes_run_dir(self, tmp_path, ring_config, capsys):
        out = tmp_path / "run_out"
        assert cli.main(["train", "--config", str(ring_config), "--out", str(out)]) == 0
        record = trainer.load_record(out)
        assert record.status == "completed"
        assert "completed" in capsys.readouterr().out

    def test_seed_env_override(self, tmp_path, ring_config, monkeypatch):
        out_a = tmp_path / "a"
        out_b = tmp_path / "b"
        monkeypatch.setenv("EBLAB_SEED", "77")
        cli.main(["train", "--config", str(ring_config), "--out", str(out_a)])
        monkeypatch.delenv("EBLAB_SEED")
        cli.main(["train", "--config", str(ring_config), "--out", str(out_b)])
        assert trainer.load_record(out_a).seed == 77
        assert trainer.load_record(out_b).seed == 2


class TestOracle:
    def test_all_suites_pass_and_write_summary(self, tmp_path, capsys):
        out = tmp_path / "summary.json"
        code = cli.main(["oracle", "--suite", "all", "--trials", "50", "--out", str(out)])
        assert code == 0
        printed = capsys.readouterr().out
        assert printed.count("PASS") == 4
        summary = json.loads(out.read_text())
        assert summary["all_passed"] is True
        assert len(summary["suites"]) == 4

    def test_single_suite(self, tmp_path, capsys):
        out = tmp_path / "one.json"
        assert cli.main(["oracle", "--suite", "lemma1", "--trials", "20", "--out", str(out)]) == 0
        assert json.loads(out.read_text())["suites"][0]["name"] == "scalar-minimizer"


class TestEstimateMargin:
    def test_prints_value(self, tmp_path, ring_config, capsys):
        assert cli.main(
            ["estimate-margin", "--config", str(ring_config), "--steps", "50"]
        ) == 0
        assert "suggested margin" in capsys.readouterr().out


class TestEvalCommand:
    def test_eval_scores_finished_run(self, tmp_path, ring_config, capsys):
        # a digits run so the classifier applies
        cfg_path = tmp_path / "digit_run.cfg"
        cfg_path.write_text(
            "dataset = digits\ntotal_steps = 15\nbatch_size = 32\nsizeG = 8\nsizeD = 8\n"
            "eval_samples = 16\nseed = 1\n"
        )
        run_dir = tmp_path / "digit_run"
        assert cli.main(["train", "--config", str(cfg_path), "--out", str(run_dir)]) == 0
        dataset = datakit.gen_synth_digits(datakit.DigitSpec(count=600, seed=5))
        clf, _ = metrics.train_proxy_classifier(dataset, steps=400, seed=3, accuracy_gate=0.0)
        clf_path = tmp_path / "clf.npz"
        clf.save(clf_path)
        assert cli.main(["eval", "--run", str(run_dir), "--classifier", str(clf_path)]) == 0
        payload = json.loads((run_dir / "eval.json").read_text())
        assert payload["n_samples"] == 16
        assert payload["i_prime"] >= 0.0


class TestGridCommand:
    def test_grid_end_to_end(self, tmp_path, capsys):
        data_path = tmp_path / "digits.npz"
        datakit.save_dataset(
            datakit.gen_synth_digits(datakit.DigitSpec(count=600, seed=5)), data_path
        )
        dataset = datakit.load_dataset(data_path)
        clf, _ = metrics.train_proxy_classifier(dataset, steps=400, seed=3, accuracy_gate=0.0)
        clf_path = tmp_path / "clf.npz"
        clf.save(clf_path)
        spec = tmp_path / "grid.spec"
        spec.write_text(
            "framework = ebgan\nseeds = 1\ntag = mini\n"
            f"dataset = {data_path}\n"
            "sizeG = 8, 16\nsizeD = 8\ntotal_steps = 10\nbatch_size = 16\n"
            "eval_samples = 16\n"
        )
        code = cli.main(
            [
                "grid", "--spec", str(spec), "--out", str(tmp_path / "out"),
                "--parallel", "1", "--classifier", str(clf_path),
            ]
        )
        assert code == 0
        assert (tmp_path / "out" / "mini" / "scores.csv").exists()
        assert "2/2 runs completed" in capsys.readouterr().out
