"""Grid orchestration: share-nothing parallel runs, scoring, and reports."""

from __future__ import annotations

import concurrent.futures
import dataclasses
import shutil
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data as datakit
from . import metrics
from . import trainer
from .config import ExperimentConfig, GridSpec, expand_grid, _format_value
from .trainer import RunRecord, load_record, write_record

_CONFIG_FIELDS = [f.name for f in dataclasses.fields(ExperimentConfig)]
SCORES_HEADER = "run_id," + ",".join(_CONFIG_FIELDS) + ",status,i_prime"

DEFAULT_HIST_BINS = 20
CLASSIFIER_SEED = 1234


def run_dir_name(index):
    return f"run{index:04d}"


def variant_of(config_dict):
    """Reporting label: the energy framework with the repelling term counts
    as its own variant."""
    if config_dict["framework"] == "gan":
        return "gan"
    return "ebgan-pt" if config_dict["pt_weight"] > 0 else "ebgan"


def _execute_run(payload):
    """Worker entry: run one config, always leaving a record behind."""
    cfg_dict, run_dir = payload
    cfg = ExperimentConfig(**cfg_dict)
    try:
        dataset = datakit.resolve_dataset(cfg.dataset)
        trainer.train_run(cfg, dataset, run_dir)
    except Exception:
        Path(run_dir).mkdir(parents=True, exist_ok=True)
        record = RunRecord(
            run_id=Path(run_dir).name,
            config=cfg_dict,
            status="failed",
            seed=cfg.seed,
            error=traceback.format_exc(limit=4),
        )
        write_record(record, run_dir)
    return run_dir


@dataclass
class GridResult:
    grid_dir: Path
    records: list
    scores_csv: Path
    histogram_files: dict = field(default_factory=dict)
    classifier_accuracy: float | None = None


def run_grid(grid, out_dir, parallelism=1, *, classifier=None,
             classifier_seed=CLASSIFIER_SEED, hist_bins=DEFAULT_HIST_BINS):
    """Execute every config of the grid, score completed runs, and report.

    Each run owns its seed-derived rng streams and its own directory under
    ``out_dir/<tag>/runNNNN``; failures are recorded, never fatal. Scoring
    uses the given classifier, or trains one deterministically from the
    grid's (labeled) dataset.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    configs = expand_grid(grid)
    expected = grid.size()
    if len(configs) != expected:
        raise RuntimeError(f"grid expanded to {len(configs)} configs, declared {expected}")
    grid_dir = Path(out_dir) / grid.tag
    grid_dir.mkdir(parents=True, exist_ok=True)

    dataset = datakit.resolve_dataset(configs[0].dataset)
    accuracy = None
    if classifier is None and dataset.labels is not None:
        classifier, accuracy = metrics.train_proxy_classifier(dataset, seed=classifier_seed)

    jobs = [
        (dataclasses.asdict(cfg), str(grid_dir / run_dir_name(i)))
        for i, cfg in enumerate(configs)
    ]
    if parallelism == 1:
        for job in jobs:
            _execute_run(job)
    else:
        with concurrent.futures.ProcessPoolExecutor(max_workers=parallelism) as pool:
            list(pool.map(_execute_run, jobs))

    records = []
    for i in range(len(configs)):
        run_dir = grid_dir / run_dir_name(i)
        record = load_record(run_dir)
        if record.status == "completed" and classifier is not None:
            with np.load(run_dir / record.eval_samples_file) as bundle:
                samples = bundle["samples"]
            record.final_i_prime = metrics.modified_inception_score(samples, classifier)
            write_record(record, run_dir)
        records.append(record)

    scores_csv, hist_files = report(records, grid_dir, hist_bins=hist_bins)
    return GridResult(
        grid_dir=grid_dir,
        records=records,
        scores_csv=scores_csv,
        histogram_files=hist_files,
        classifier_accuracy=accuracy,
    )


# ---------------------------------------------------------------------------
# reporting (a pure function of the records)

def _score_of(record_row):
    """Histogram score: failed runs count as 0, the floor of the scale."""
    if record_row["status"] != "completed":
        return 0.0
    return record_row["i_prime"]


def _record_rows(records):
    rows = []
    for record in records:
        rows.append(
            {
                "run_id": record.run_id,
                "config": dict(record.config),
                "status": record.status,
                "i_prime": record.final_i_prime,
            }
        )
    return rows


def _scores_csv_text(rows):
    lines = [SCORES_HEADER]
    for row in rows:
        cells = [row["run_id"]]
        cells.extend(_format_value(row["config"][name]) for name in _CONFIG_FIELDS)
        cells.append(row["status"])
        score = row["i_prime"]
        if row["status"] != "completed":
            cells.append(_format_value(0.0))
        else:
            cells.append("" if score is None else _format_value(float(score)))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def parse_scores_csv(path):
    """Rows of a persisted scores.csv, typed like fresh records."""
    text = Path(path).read_text(encoding="utf-8")
    lines = text.strip().split("\n")
    if lines[0] != SCORES_HEADER:
        raise ValueError(f"{path}: unexpected scores.csv header")
    rows = []
    for line in lines[1:]:
        cells = line.split(",")
        config = {}
        for name, cell in zip(_CONFIG_FIELDS, cells[1:]):
            kind = ExperimentConfig.__dataclass_fields__[name].type
            if kind == "bool":
                config[name] = cell == "true"
            elif kind == "int":
                config[name] = int(cell)
            elif kind == "float":
                config[name] = float(cell)
            else:
                config[name] = cell
        status = cells[1 + len(_CONFIG_FIELDS)]
        raw_score = cells[2 + len(_CONFIG_FIELDS)]
        rows.append(
            {
                "run_id": cells[0],
                "config": config,
                "status": status,
                "i_prime": None if raw_score == "" else float(raw_score),
            }
        )
    return rows


def build_histograms(rows, hist_bins=DEFAULT_HIST_BINS):
    """Per-framework histograms plus per-optimization sub-histograms.

    Shares one score range across every histogram so the files are a pure
    function of the scored rows.
    """
    scored = [r for r in rows if _score_of(r) is not None]
    values = [_score_of(r) for r in scored]
    hi = max(values) if values else 1.0
    value_range = (0.0, hi if hi > 0 else 1.0)

    histograms = {}
    for framework in ("ebgan", "gan"):
        members = [
            _score_of(r) for r in scored if r["config"]["framework"] == framework
        ]
        if members:
            histograms[f"hist_{framework}"] = metrics.build_histogram(
                members, hist_bins, value_range, tag=framework
            )
    gan_rows = [r for r in scored if r["config"]["framework"] == "gan"]
    groups = sorted(
        {
            (r["config"]["optimD"], r["config"]["optimG"], r["config"]["lr"])
            for r in gan_rows
        }
    )
    for opt_d, opt_g, lr in groups:
        members = [
            _score_of(r)
            for r in gan_rows
            if (r["config"]["optimD"], r["config"]["optimG"], r["config"]["lr"])
            == (opt_d, opt_g, lr)
        ]
        name = f"hist_sub_gan_{opt_d}_{opt_g}_{_format_value(lr)}"
        histograms[name] = metrics.build_histogram(
            members, hist_bins, value_range, tag=f"gan {opt_d}/{opt_g}/{lr}"
        )
    return histograms


def _best_row(rows, variant):
    candidates = [
        r
        for r in rows
        if r["status"] == "completed"
        and r["i_prime"] is not None
        and variant_of(r["config"]) == variant
    ]
    if not candidates:
        return None
    # argmax score; ties break to the earliest run id
    return max(candidates, key=lambda r: (r["i_prime"], -int(r["run_id"][3:])))


def _echo_config(config):
    keys = ("nLayerG", "nLayerD", "sizeG", "sizeD", "dropoutD", "optimD", "optimG", "lr")
    parts = [f"{k}={_format_value(config[k])}" for k in keys]
    if config["framework"] == "ebgan":
        parts.append(f"margin={_format_value(config['margin'])}")
        if config["pt_weight"] > 0:
            parts.append(f"pt_weight={_format_value(config['pt_weight'])}")
    return ", ".join(parts)


def report(records, grid_dir, hist_bins=DEFAULT_HIST_BINS):
    """Write scores.csv, histogram CSV/SVG files, best-run sample grids, and
    a text summary into ``grid_dir``."""
    grid_dir = Path(grid_dir)
    rows = _record_rows(records)
    scores_csv = grid_dir / "scores.csv"
    scores_csv.write_text(_scores_csv_text(rows), encoding="utf-8")

    histograms = build_histograms(rows, hist_bins)
    hist_files = {}
    for name, hist in histograms.items():
        csv_path = grid_dir / f"{name}.csv"
        csv_path.write_text(hist.csv_rows(), encoding="utf-8")
        hist_files[name] = csv_path
    frameworks = [histograms[k] for k in ("hist_ebgan", "hist_gan") if k in histograms]
    if frameworks:
        svg_path = grid_dir / "hist_compare.svg"
        metrics.write_histogram_svg(svg_path, frameworks, title="score distribution by framework")
        hist_files["hist_compare_svg"] = svg_path
    for name in list(histograms):
        if name.startswith("hist_sub_gan") and "hist_ebgan" in histograms:
            svg_path = grid_dir / f"{name}.svg"
            metrics.write_histogram_svg(
                svg_path,
                [histograms["hist_ebgan"], histograms[name]],
                title=histograms[name].tag,
            )
            hist_files[f"{name}_svg"] = svg_path

    summary = [f"runs: {len(rows)}"]
    failed = [r for r in rows if r["status"] != "completed"]
    summary.append(f"failed: {len(failed)} (scored 0.0 in histograms)")
    for row in failed:
        summary.append(f"  {row['run_id']}")
    for variant in ("gan", "ebgan", "ebgan-pt"):
        best = _best_row(rows, variant)
        if best is None:
            continue
        grid_name = f"best_{variant}.pgm"
        source = grid_dir / best["run_id"] / "samples_final.pgm"
        if source.exists():
            shutil.copyfile(source, grid_dir / grid_name)
        summary.append(
            f"best {variant}: {best['run_id']} score={best['i_prime']!r} "
            f"({_echo_config(best['config'])})"
        )
    (grid_dir / "report.txt").write_text("\n".join(summary) + "\n", encoding="utf-8")
    return scores_csv, hist_files


def rebuild_histogram_files(grid_dir, out_dir, hist_bins=DEFAULT_HIST_BINS):
    """Regenerate histogram CSVs purely from a persisted scores.csv."""
    rows = parse_scores_csv(Path(grid_dir) / "scores.csv")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = {}
    for name, hist in build_histograms(rows, hist_bins).items():
        path = out_dir / f"{name}.csv"
        path.write_text(hist.csv_rows(), encoding="utf-8")
        written[name] = path
    return written


# ---------------------------------------------------------------------------
# prefab protocols

def desk_grid_spec(framework, *, seeds=5, base_seed=0, dataset="digits",
                   total_steps=2500, pt_weight=0.0, tag=None):
    """The default desk-scale sweep: tied layer count x sizeG x sizeD."""
    axes = {
        "nLayer": [2, 3],
        "sizeG": [64, 128],
        "sizeD": [64, 128],
        "dataset": [dataset],
        "total_steps": [total_steps],
    }
    if framework == "ebgan" and pt_weight > 0:
        axes["pt_weight"] = [pt_weight]
    return GridSpec(
        framework=framework,
        axes=axes,
        seeds=seeds,
        base_seed=base_seed,
        tag=tag or f"desk_{framework}",
    )


def margin_sweep_spec(margins=(1, 2, 4, 6, 8, 12, 16, 32), *, dataset="digits",
                      total_steps=2500, seed=0, tag="margin_sweep"):
    """One run per margin value, everything else pinned."""
    return GridSpec(
        framework="ebgan",
        axes={
            "margin": [float(m) for m in margins],
            "dataset": [dataset],
            "total_steps": [total_steps],
        },
        seeds=1,
        base_seed=seed,
        tag=tag,
    )
