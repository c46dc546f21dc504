import numpy as np
import pytest

from eblab import data as datakit
from eblab import harness
from eblab import metrics
from eblab.config import GridSpec
from eblab.trainer import RunRecord


@pytest.fixture(scope="module")
def small_digits(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "digits_small.npz"
    datakit.save_dataset(
        datakit.gen_synth_digits(datakit.DigitSpec(count=600, seed=5)), path
    )
    return str(path)


@pytest.fixture(scope="module")
def cheap_classifier(small_digits):
    dataset = datakit.load_dataset(small_digits)
    clf, _ = metrics.train_proxy_classifier(
        dataset, steps=600, seed=3, accuracy_gate=0.0
    )
    return clf


def toy_grid(dataset, *, seeds=1, framework="ebgan", tag="toy", steps=25):
    return GridSpec(
        framework=framework,
        axes={
            "sizeG": [8, 16],
            "sizeD": [8],
            "dataset": [dataset],
            "total_steps": [steps],
            "batch_size": [16],
            "eval_samples": [32],
            "log_every": [10],
        },
        seeds=seeds,
        tag=tag,
    )


class TestRunGrid:
    def test_toy_grid_completes_with_records(self, tmp_path, small_digits, cheap_classifier):
        grid = toy_grid(small_digits, seeds=2, tag="toy4")
        result = harness.run_grid(grid, tmp_path, classifier=cheap_classifier)
        assert len(result.records) == 4
        assert all(r.status == "completed" for r in result.records)
        assert all(r.final_i_prime is not None for r in result.records)
        assert result.scores_csv.exists()
        for i in range(4):
            run_dir = result.grid_dir / harness.run_dir_name(i)
            assert (run_dir / "record.json").exists()
            assert (run_dir / "metrics.csv").exists()
            assert not (run_dir / "record.json.tmp").exists()

    def test_rerun_scores_bit_identical(self, tmp_path, small_digits, cheap_classifier):
        grid = toy_grid(small_digits, tag="rerun")
        a = harness.run_grid(grid, tmp_path / "a", classifier=cheap_classifier)
        b = harness.run_grid(grid, tmp_path / "b", classifier=cheap_classifier)
        assert a.scores_csv.read_bytes() == b.scores_csv.read_bytes()
        for ra, rb in zip(a.records, b.records):
            assert ra.final_i_prime == rb.final_i_prime

    def test_parallel_matches_serial(self, tmp_path, small_digits, cheap_classifier):
        grid = toy_grid(small_digits, tag="par")
        serial = harness.run_grid(grid, tmp_path / "s", parallelism=1, classifier=cheap_classifier)
        parallel = harness.run_grid(grid, tmp_path / "p", parallelism=2, classifier=cheap_classifier)
        assert serial.scores_csv.read_bytes() == parallel.scores_csv.read_bytes()

    def test_unlabeled_dataset_skips_scores(self, tmp_path):
        ring = datakit.gen_ring_mixture(datakit.RingMixtureSpec(count=256, seed=1))
        unlabeled_path = tmp_path / "ring_unlabeled.npz"
        datakit.save_dataset(datakit.Dataset(ring.samples, tag="ring"), unlabeled_path)
        grid = GridSpec(
            framework="ebgan",
            axes={
                "sizeG": [8],
                "sizeD": [8],
                "dataset": [str(unlabeled_path)],
                "total_steps": [10],
                "batch_size": [16],
                "eval_samples": [16],
            },
            seeds=1,
            tag="ring_toy",
        )
        result = harness.run_grid(grid, tmp_path, classifier=None)
        assert all(r.status == "completed" for r in result.records)
        assert all(r.final_i_prime is None for r in result.records)
        # scores.csv still valid, with empty score cells
        lines = result.scores_csv.read_text().strip().split("\n")
        assert lines[1].endswith(",completed,")


class TestReport:
    def _record(self, run_id, framework="ebgan", pt=0.0, status="completed", score=1.0):
        from dataclasses import asdict

        from eblab.config import ExperimentConfig

        cfg = ExperimentConfig(framework=framework, pt_weight=pt, dataset="digits").resolved()
        return RunRecord(
            run_id=run_id,
            config=asdict(cfg),
            status=status,
            final_i_prime=score if status == "completed" else None,
        )

    def test_zero_records_give_header_only_csv(self, tmp_path):
        scores_csv, _ = harness.report([], tmp_path)
        assert scores_csv.read_text() == harness.SCORES_HEADER + "\n"

    def test_failed_runs_scored_zero_and_listed(self, tmp_path):
        records = [
            self._record("run0000", score=0.8),
            self._record("run0001", status="failed"),
        ]
        scores_csv, _ = harness.report(records, tmp_path)
        lines = scores_csv.read_text().strip().split("\n")
        assert lines[2].endswith(",failed,0.0")
        assert "run0001" in (tmp_path / "report.txt").read_text()

    def test_best_selection_tie_breaks_to_earliest(self, tmp_path):
        rows = harness._record_rows(
            [
                self._record("run0000", score=0.5),
                self._record("run0001", score=0.9),
                self._record("run0002", score=0.9),
            ]
        )
        best = harness._best_row(rows, "ebgan")
        assert best["run_id"] == "run0001"

    def test_best_config_echo_format(self, tmp_path):
        records = [self._record("run0000", pt=0.1, score=1.2)]
        harness.report(records, tmp_path)
        text = (tmp_path / "report.txt").read_text()
        assert "best ebgan-pt" in text
        assert "nLayerG=2" in text and "optimD=adam" in text and "pt_weight=0.1" in text

    def test_variant_labels(self):
        assert harness.variant_of({"framework": "gan", "pt_weight": 0.0}) == "gan"
        assert harness.variant_of({"framework": "ebgan", "pt_weight": 0.0}) == "ebgan"
        assert harness.variant_of({"framework": "ebgan", "pt_weight": 0.1}) == "ebgan-pt"

    def test_histograms_regenerate_bit_identical(self, tmp_path):
        records = [
            self._record("run0000", score=0.3),
            self._record("run0001", score=1.1),
            self._record("run0002", framework="gan", score=0.6),
            self._record("run0003", status="failed"),
        ]
        harness.report(records, tmp_path)
        rebuilt = harness.rebuild_histogram_files(tmp_path, tmp_path / "regen")
        for name, path in rebuilt.items():
            original = tmp_path / f"{name}.csv"
            assert original.read_bytes() == path.read_bytes(), name

    def test_scores_csv_round_trip(self, tmp_path):
        records = [
            self._record("run0000", score=0.25),
            self._record("run0001", framework="gan", score=0.75),
        ]
        harness.report(records, tmp_path)
        rows = harness.parse_scores_csv(tmp_path / "scores.csv")
        assert rows[0]["i_prime"] == 0.25
        assert rows[1]["config"]["framework"] == "gan"
        assert rows[0]["config"]["lr"] == 0.001

    def test_subgrid_histograms_per_optimizer_combo(self, tmp_path):
        records = [
            self._record("run0000", score=0.4),
            self._record("run0001", framework="gan", score=0.5),
        ]
        records[1].config["optimD"] = "sgd"
        _, files = harness.report(records, tmp_path)
        assert any("hist_sub_gan_sgd" in name for name in files)


class TestPrefabSpecs:
    def test_desk_grid_is_eight_configs_per_seed(self):
        spec = harness.desk_grid_spec("ebgan", seeds=5)
        assert spec.size() == 8 * 5
        from eblab.config import expand_grid

        configs = expand_grid(spec)
        assert len({(c.nLayerG, c.nLayerD, c.sizeG, c.sizeD) for c in configs}) == 8
        assert all(c.nLayerG == c.nLayerD for c in configs)

    def test_margin_sweep_spec_values(self):
        spec = harness.margin_sweep_spec()
        from eblab.config import expand_grid

        margins = [c.margin for c in expand_grid(spec)]
        assert margins == [1.0, 2.0, 4.0, 6.0, 8.0, 12.0, 16.0, 32.0]
