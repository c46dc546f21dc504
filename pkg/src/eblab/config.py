"""Experiment configuration: flat key=value files, validation, grid expansion."""

from __future__ import annotations

import dataclasses
import itertools
import os
from dataclasses import dataclass, field

SEED_ENV_VAR = "EBLAB_SEED"

FRAMEWORKS = ("ebgan", "gan")
OPTIMIZERS = ("adam", "sgd")
ENERGY_FORMS = ("euclidean", "squared")

# Values a full-scale grid may sweep; anything else is rejected in grid mode.
GRID_LAYER_CHOICES = (2, 3, 4, 5)
GAN_GRID_LR_CHOICES = (0.01, 0.001, 0.0001)
EBGAN_GRID_LR = 0.001

# Grid-spec keys that are not per-run config fields.
_GRID_SCALAR_KEYS = ("framework", "seeds", "base_seed", "tag")


@dataclass
class ExperimentConfig:
    """One experiment: framework, architecture, optimization, and run budget.

    Field names double as the keys of the config file format. ``latent_dim=0``
    means "resolve from the dataset kind" (100 for image-like data, 8 for the
    2-D ring); parsing always resolves it to a concrete value.
    """

    framework: str = "ebgan"
    nLayerG: int = 2
    nLayerD: int = 2
    sizeG: int = 64
    sizeD: int = 64
    dropoutD: bool = False
    optimD: str = "adam"
    optimG: str = "adam"
    lr: float = 0.001
    margin: float = 10.0
    margin_decay_end: int = 0
    pt_weight: float = 0.0
    latent_dim: int = 0
    batch_size: int = 64
    total_steps: int = 2500
    seed: int = 0
    dataset: str = "digits"
    energy_form: str = "euclidean"
    lr_decay_start: float = 1.0
    log_every: int = 100
    snapshot_every: int = 0
    eval_samples: int = 1024

    def resolved(self):
        """Copy with ``latent_dim`` made concrete."""
        if self.latent_dim > 0:
            return self
        dim = 8 if self.dataset.startswith("ring") else 100
        return dataclasses.replace(self, latent_dim=dim)

    def validate(self, grid_mode=False):
        if self.framework not in FRAMEWORKS:
            raise ValueError(f"framework must be one of {FRAMEWORKS}, got {self.framework!r}")
        if self.optimD not in OPTIMIZERS or self.optimG not in OPTIMIZERS:
            raise ValueError(f"optimD/optimG must be one of {OPTIMIZERS}")
        if self.energy_form not in ENERGY_FORMS:
            raise ValueError(f"energy_form must be one of {ENERGY_FORMS}")
        if self.nLayerG < 1:
            raise ValueError("nLayerG must be >= 1")
        min_d = 2 if self.framework == "ebgan" else 1
        if self.nLayerD < min_d:
            raise ValueError(
                f"nLayerD must be >= {min_d} for {self.framework}"
                " (the reconstruction decoder is always exactly one layer)"
            )
        if self.sizeG < 1 or self.sizeD < 1:
            raise ValueError("sizeG and sizeD must be positive")
        if self.lr <= 0:
            raise ValueError("lr must be positive")
        if self.margin < 0:
            raise ValueError("margin must be non-negative")
        if self.margin_decay_end < 0:
            raise ValueError("margin_decay_end must be >= 0")
        if self.pt_weight < 0:
            raise ValueError("pt_weight must be non-negative")
        if self.latent_dim < 0:
            raise ValueError("latent_dim must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.total_steps < 0:
            raise ValueError("total_steps must be >= 0")
        if not 0.0 <= self.lr_decay_start <= 1.0:
            raise ValueError("lr_decay_start must be in [0, 1]")
        if self.log_every < 1:
            raise ValueError("log_every must be positive")
        if self.snapshot_every < 0:
            raise ValueError("snapshot_every must be >= 0")
        if self.eval_samples < 1:
            raise ValueError("eval_samples must be positive")
        if grid_mode:
            if self.nLayerG not in GRID_LAYER_CHOICES:
                raise ValueError(
                    f"grid nLayerG must be one of {list(GRID_LAYER_CHOICES)}, got {self.nLayerG}"
                )
            if self.nLayerD not in GRID_LAYER_CHOICES:
                raise ValueError(
                    f"grid nLayerD must be one of {list(GRID_LAYER_CHOICES)}, got {self.nLayerD}"
                )
            if self.framework == "ebgan":
                if self.optimD != "adam" or self.optimG != "adam":
                    raise ValueError("grid-mode ebgan runs use adam for both nets")
                if self.lr != EBGAN_GRID_LR:
                    raise ValueError(f"grid-mode ebgan runs use lr={EBGAN_GRID_LR}")
            else:
                if self.lr not in GAN_GRID_LR_CHOICES:
                    raise ValueError(
                        f"grid gan lr must be one of {list(GAN_GRID_LR_CHOICES)}, got {self.lr}"
                    )
        return self


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ExperimentConfig)}
_BOOL_WORDS = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def _coerce(key, raw):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if kind == "bool":
            if raw.lower() not in _BOOL_WORDS:
                raise ValueError
            return _BOOL_WORDS[raw.lower()]
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        return raw
    except ValueError:
        raise ValueError(f"config key {key!r}: cannot parse {raw!r} as {kind}") from None


def _read_pairs(text, source):
    pairs = []
    seen = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = line.split("=", 1)
        key = key.strip()
        if key in seen:
            raise ValueError(f"{source}:{lineno}: duplicate key {key!r}")
        seen.add(key)
        pairs.append((key, raw))
    return pairs


def parse_config_text(text, source="<config>", grid_mode=False):
    values = {}
    for key, raw in _read_pairs(text, source):
        if key not in _FIELD_TYPES:
            raise ValueError(f"{source}: unknown config key {key!r}")
        values[key] = _coerce(key, raw)
    cfg = ExperimentConfig(**values).resolved()
    cfg.validate(grid_mode=grid_mode)
    return cfg


def parse_config(path, grid_mode=False):
    """Parse and validate a config file; unknown keys are hard errors."""
    with open(path, "r", encoding="utf-8") as handle:
        text = handle.read()
    return parse_config_text(text, source=str(path), grid_mode=grid_mode)


def _format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg):
    """Config file text that parses back to an equal config."""
    lines = [
        f"{f.name} = {_format_value(getattr(cfg, f.name))}"
        for f in dataclasses.fields(cfg)
    ]
    return "\n".join(lines) + "\n"


def apply_seed_override(cfg, env=os.environ):
    """Honor the seed override variable, if set, over the config's seed."""
    raw = env.get(SEED_ENV_VAR)
    if raw is None:
        return cfg
    return dataclasses.replace(cfg, seed=int(raw))


# ---------------------------------------------------------------------------
# grids

@dataclass
class GridSpec:
    """A cartesian sweep: per-field value lists plus a replication seed count.

    ``axes`` preserves declaration order; expansion is lexicographic over the
    declared axes with the replication seed varying fastest. The pseudo-axis
    ``nLayer`` ties nLayerG and nLayerD to one shared value.
    """

    framework: str = "ebgan"
    axes: dict = field(default_factory=dict)
    seeds: int = 1
    base_seed: int = 0
    tag: str = "grid"

    def size(self):
        n = self.seeds
        for values in self.axes.values():
            n *= len(values)
        return n


def parse_grid_spec(path):
    with open(path, "r", encoding="utf-8") as handle:
        text = handle.read()
    return parse_grid_spec_text(text, source=str(path))


def parse_grid_spec_text(text, source="<grid>"):
    spec = GridSpec()
    for key, raw in _read_pairs(text, source):
        if key == "framework":
            spec.framework = raw.strip()
        elif key == "seeds":
            spec.seeds = int(raw)
        elif key == "base_seed":
            spec.base_seed = int(raw)
        elif key == "tag":
            spec.tag = raw.strip()
        elif key == "nLayer":
            spec.axes["nLayer"] = [int(v) for v in raw.split(",")]
        elif key in _FIELD_TYPES:
            if key in ("framework", "seed"):
                raise ValueError(f"{source}: {key!r} cannot be a grid axis")
            spec.axes[key] = [_coerce(key, v) for v in raw.split(",")]
        else:
            raise ValueError(f"{source}: unknown grid key {key!r}")
    if spec.framework not in FRAMEWORKS:
        raise ValueError(f"{source}: framework must be one of {FRAMEWORKS}")
    if spec.seeds < 1:
        raise ValueError(f"{source}: seeds must be >= 1")
    if "nLayer" in spec.axes and ("nLayerG" in spec.axes or "nLayerD" in spec.axes):
        raise ValueError(f"{source}: nLayer cannot be combined with nLayerG/nLayerD axes")
    if len(spec.axes.get("dataset", [""])) != 1:
        raise ValueError(f"{source}: dataset must be a single value")
    return spec


def expand_grid(grid):
    """All configs of a grid, in deterministic declaration order.

    The result length always equals ``grid.size()``; every config is validated
    under grid-mode rules.
    """
    names = list(grid.axes)
    value_lists = [grid.axes[n] for n in names]
    configs = []
    for combo in itertools.product(*value_lists) if names else [()]:
        assignment = dict(zip(names, combo))
        if "nLayer" in assignment:
            tied = assignment.pop("nLayer")
            assignment["nLayerG"] = tied
            assignment["nLayerD"] = tied
        for replica in range(grid.seeds):
            cfg = ExperimentConfig(
                framework=grid.framework, seed=grid.base_seed + replica, **assignment
            ).resolved()
            cfg.validate(grid_mode=True)
            configs.append(cfg)
    return configs
