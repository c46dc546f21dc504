"""Alternating optimization of the adversarial pair, margin estimation, and
the full run driver with metrics streaming and crash-safe records."""

from __future__ import annotations

import dataclasses
import json
import math
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import data as datakit
from . import nets
from . import objectives as obj
from . import tensor as T
from .config import serialize_config
from .nets import LatentSpec
from .objectives import MarginSchedule, margin_at

METRICS_HEADER = "step,margin,loss_d,loss_g,e_real,e_fake,f_pt,lr_d,lr_g"

ADAM_BETA1 = 0.5
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


class DivergenceError(RuntimeError):
    """A loss or update went non-finite; the run must abort, not clip."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


# ---------------------------------------------------------------------------
# optimizers

class Sgd:
    kind = "sgd"

    def __init__(self, params, lr):
        self.params = list(params)
        self.lr = lr
        self.t = 0

    def step(self):
        self.t += 1
        for p in self.params:
            if p.grad is None:
                continue
            p.data -= self.lr * p.grad

    def zero_grad(self):
        for p in self.params:
            p.grad = None


class Adam:
    """Bias-corrected adaptive moments; denominator is sqrt(v_hat) + eps."""

    kind = "adam"

    def __init__(self, params, lr, beta1=ADAM_BETA1, beta2=ADAM_BETA2, eps=ADAM_EPS):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]
        self.t = 0

    def step(self):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (self.m[i] / b1c) / (np.sqrt(self.v[i] / b2c) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


def make_optimizer(kind, params, lr):
    if kind == "adam":
        return Adam(params, lr)
    if kind == "sgd":
        return Sgd(params, lr)
    raise ValueError(f"unknown optimizer {kind!r}")


@dataclass(frozen=True)
class LrSchedule:
    """Constant rate, optionally decaying linearly to 0 from a given fraction
    of the total step budget onward."""

    base: float
    decay_start_frac: float = 1.0

    def at(self, step, total_steps):
        if self.base < 0:
            raise ValueError("learning rate must be non-negative")
        if self.decay_start_frac >= 1.0 or total_steps <= 0:
            return self.base
        start = int(self.decay_start_frac * total_steps)
        if step < start or total_steps == start:
            return self.base
        return self.base * max(0.0, 1.0 - (step - start) / (total_steps - start))


# ---------------------------------------------------------------------------
# train state

@dataclass
class TrainState:
    generator: nets.Generator
    discriminator: object
    opt_g: object
    opt_d: object
    objective: obj.ObjectiveConfig
    latent: LatentSpec
    rng_data: np.random.Generator
    rng_latent: np.random.Generator
    rng_dropout: np.random.Generator
    step: int = 0


def margin_schedule_from_config(cfg):
    if cfg.margin_decay_end > 0:
        return MarginSchedule("linear", cfg.margin, cfg.margin_decay_end)
    return MarginSchedule("constant", cfg.margin)


def rng_streams(seed):
    """The five independent streams one run consumes, by fixed name.

    Children of one seed sequence, in spawn order: generator init,
    discriminator init, data batching, latent draws, dropout masks.
    """
    children = np.random.SeedSequence(seed).spawn(5)
    names = ("init_g", "init_d", "data", "latent", "dropout")
    return {name: np.random.default_rng(s) for name, s in zip(names, children)}


def build_train_state(cfg, data_dim):
    """Fresh nets, optimizers, and rng streams for one run.

    The config seed fully determines initialization, batching, latent draws,
    and dropout; the streams are independent children of one seed sequence.
    """
    cfg = cfg.resolved()
    streams = rng_streams(cfg.seed)
    rng_init_g, rng_init_d = streams["init_g"], streams["init_d"]
    rng_data, rng_latent, rng_dropout = (
        streams["data"],
        streams["latent"],
        streams["dropout"],
    )

    gen = nets.Generator(cfg.latent_dim, data_dim, cfg.nLayerG, cfg.sizeG)
    nets.init_weights(gen, "generator", rng_init_g)
    dropout_rate = nets.DROPOUT_RATE if cfg.dropoutD else 0.0
    if cfg.framework == "ebgan":
        disc = nets.AutoEncoderDiscriminator(
            data_dim, cfg.nLayerD, cfg.sizeD, dropout_rate, cfg.energy_form
        )
    else:
        disc = nets.LogisticDiscriminator(data_dim, cfg.nLayerD, cfg.sizeD, dropout_rate)
    nets.init_weights(disc, "discriminator", rng_init_d)

    objective = obj.ObjectiveConfig(
        framework=cfg.framework,
        margin=margin_schedule_from_config(cfg),
        pt_weight=cfg.pt_weight,
    )
    return TrainState(
        generator=gen,
        discriminator=disc,
        opt_g=make_optimizer(cfg.optimG, gen.parameters(), cfg.lr),
        opt_d=make_optimizer(cfg.optimD, disc.parameters(), cfg.lr),
        objective=objective,
        latent=LatentSpec(cfg.latent_dim),
        rng_data=rng_data,
        rng_latent=rng_latent,
        rng_dropout=rng_dropout,
    )


def _require_finite(value, label, step):
    if not math.isfinite(value):
        raise DivergenceError(f"{label} became non-finite at step {step}", step=step)
    return value


def train_step(state, real_batch):
    """One discriminator update then one generator update, fresh latents each.

    Returns {step, margin, loss_d, loss_g, e_real, e_fake, f_pt} for the step
    that was just applied. Non-finite losses raise DivergenceError.
    """
    x = T.Tensor(real_batch)
    batch = x.shape[0]
    gen, disc = state.generator, state.discriminator
    margin = margin_at(state.objective.margin, state.step)
    ebgan = state.objective.framework == "ebgan"

    # Discriminator phase: the fake batch is a constant here.
    z = state.latent.sample(state.rng_latent, batch)
    fake = nets.generate(gen, z, training=True).detach()
    if ebgan:
        out_real = disc.energy(x, training=True, rng=state.rng_dropout)
        out_fake = disc.energy(fake, training=True, rng=state.rng_dropout)
        loss_d = obj.ebgan_d_loss(out_real.energies, out_fake.energies, margin)
        e_real = float(out_real.energies.data.mean())
        e_fake = float(out_fake.energies.data.mean())
    else:
        p_real = disc.score(x, training=True, rng=state.rng_dropout)
        p_fake = disc.score(fake, training=True, rng=state.rng_dropout)
        loss_d = obj.gan_d_loss(p_real, p_fake)
        e_real = float(p_real.data.mean())
        e_fake = float(p_fake.data.mean())
    state.opt_d.zero_grad()
    loss_d.backward()
    state.opt_d.step()

    # Generator phase: gradients flow through the discriminator's function,
    # but only the generator's parameters are stepped.
    z = state.latent.sample(state.rng_latent, batch)
    fake = nets.generate(gen, z, training=True)
    f_pt = 0.0
    if ebgan:
        out = disc.energy(fake, training=True, rng=state.rng_dropout)
        loss_g = obj.ebgan_g_loss(out.energies)
        if state.objective.pt_weight > 0.0:
            pt = obj.pull_away_term(out.representations)
            f_pt = float(pt.data)
            loss_g = T.add(loss_g, T.mul(pt, state.objective.pt_weight))
    else:
        loss_g = obj.gan_g_loss(disc.score(fake, training=True, rng=state.rng_dropout))
    state.opt_g.zero_grad()
    loss_g.backward()
    state.opt_g.step()

    metrics = {
        "step": state.step,
        "margin": margin,
        "loss_d": _require_finite(float(loss_d.data), "loss_d", state.step),
        "loss_g": _require_finite(float(loss_g.data), "loss_g", state.step),
        "e_real": _require_finite(e_real, "e_real", state.step),
        "e_fake": _require_finite(e_fake, "e_fake", state.step),
        "f_pt": f_pt,
    }
    state.step += 1
    return metrics


# ---------------------------------------------------------------------------
# margin estimation

def estimate_margin(dataset, n_layers, width, *, steps=3000, batch_size=64,
                    lr=0.001, optimizer="adam", dropout_rate=0.0,
                    energy_form="euclidean", seed=0, window=200, full=False):
    """Train the auto-encoder alone on real data; the converged mean
    reconstruction energy is a workable starting margin.

    The discriminator spec (layers, width, dropout) should match the run the
    margin is being chosen for. Returns the mean training energy over the
    last ``window`` steps, or ``(value, per_step_losses)`` when ``full`` is
    set.
    """
    if len(dataset) == 0:
        raise ValueError("margin estimation needs a non-empty dataset")
    seeds = np.random.SeedSequence(seed).spawn(3)
    rng_init = np.random.default_rng(seeds[0])
    rng_data = np.random.default_rng(seeds[1])
    rng_dropout = np.random.default_rng(seeds[2])
    disc = nets.AutoEncoderDiscriminator(dataset.dim, n_layers, width, dropout_rate, energy_form)
    nets.init_weights(disc, "discriminator", rng_init)
    opt = make_optimizer(optimizer, disc.parameters(), lr)
    sampler = _BatchSampler(len(dataset), batch_size, rng_data)
    losses = []
    for step in range(steps):
        batch = dataset.samples[sampler.next()]
        out = disc.energy(T.Tensor(batch), training=True, rng=rng_dropout)
        loss = T.mean(out.energies)
        value = float(loss.data)
        if not math.isfinite(value):
            raise DivergenceError(f"margin estimation diverged at step {step}", step=step)
        opt.zero_grad()
        loss.backward()
        opt.step()
        losses.append(value)
    tail = losses[-window:] if window > 0 else losses
    value = float(np.mean(tail)) if tail else 0.0
    return (value, losses) if full else value


def estimate_margin_for_config(cfg, dataset, steps=3000, window=200):
    """Margin suggestion matching a run config's discriminator spec."""
    cfg = cfg.resolved()
    return estimate_margin(
        dataset,
        cfg.nLayerD,
        cfg.sizeD,
        steps=steps,
        batch_size=cfg.batch_size,
        lr=cfg.lr,
        optimizer=cfg.optimD,
        dropout_rate=nets.DROPOUT_RATE if cfg.dropoutD else 0.0,
        energy_form=cfg.energy_form,
        seed=cfg.seed,
        window=window,
    )


class _BatchSampler:
    """Shuffled epochs of full batches; partial tail batches are dropped."""

    def __init__(self, n, batch_size, rng):
        if n < batch_size:
            raise ValueError(f"dataset of {n} samples cannot fill batches of {batch_size}")
        self.n = n
        self.batch_size = batch_size
        self.rng = rng
        self._order = None
        self._cursor = 0

    def next(self):
        if self._order is None or self._cursor + self.batch_size > self.n:
            self._order = self.rng.permutation(self.n)
            self._cursor = 0
        picked = self._order[self._cursor : self._cursor + self.batch_size]
        self._cursor += self.batch_size
        return picked


# ---------------------------------------------------------------------------
# run records and the run driver

RECORD_SCHEMA = "eblab-record-v1"


@dataclass
class RunRecord:
    """Persisted outcome of one training run."""

    run_id: str
    config: dict
    status: str = "completed"
    seed: int = 0
    metrics_csv: str = "metrics.csv"
    sample_grids: list = field(default_factory=list)
    eval_samples_file: str | None = None
    final_i_prime: float | None = None
    final_e_real: float | None = None
    final_e_fake: float | None = None
    wall_clock_s: float = 0.0
    error: str | None = None

    def to_json(self):
        payload = {"schema": RECORD_SCHEMA}
        payload.update(dataclasses.asdict(self))
        return json.dumps(payload, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        payload = json.loads(text)
        schema = payload.pop("schema", None)
        if schema != RECORD_SCHEMA:
            raise ValueError(f"unsupported record schema {schema!r}")
        return cls(**payload)


def write_record(record, run_dir):
    """Write record.json atomically: the record appears only when complete."""
    path = Path(run_dir) / "record.json"
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(record.to_json() + "\n", encoding="utf-8")
    os.replace(tmp, path)
    return path


def load_record(run_dir):
    return RunRecord.from_json((Path(run_dir) / "record.json").read_text(encoding="utf-8"))


def _format_metrics_row(metrics, lr_d, lr_g):
    return ",".join(
        repr(v) if isinstance(v, float) else str(v)
        for v in (
            metrics["step"],
            metrics["margin"],
            metrics["loss_d"],
            metrics["loss_g"],
            metrics["e_real"],
            metrics["e_fake"],
            metrics["f_pt"],
            lr_d,
            lr_g,
        )
    )


def _write_snapshot(state, run_dir, cfg, label, eval_z):
    samples = nets.generate(state.generator, eval_z, training=False).data
    path = Path(run_dir) / f"samples_{label}.pgm"
    if samples.shape[1] == 2:
        datakit.render_scatter_pgm(samples, path)
    else:
        side = int(round(samples.shape[1] ** 0.5))
        if side * side != samples.shape[1]:
            return None
        rows = cols = int(math.isqrt(min(64, len(samples))))
        datakit.write_sample_grid(samples, rows, cols, path)
    return path.name


def _final_eval(state, dataset, cfg, rng_eval):
    """Inference-mode sample batch and mean real/fake scores."""
    z = state.latent.sample(rng_eval, cfg.eval_samples)
    fakes = nets.generate(state.generator, z, training=False).data
    n_real = min(cfg.eval_samples, len(dataset))
    real = T.Tensor(dataset.samples[:n_real])
    if cfg.framework == "ebgan":
        e_real = float(state.discriminator.energy(real, training=False).energies.data.mean())
        e_fake = float(
            state.discriminator.energy(T.Tensor(fakes), training=False).energies.data.mean()
        )
    else:
        e_real = float(state.discriminator.score(real, training=False).data.mean())
        e_fake = float(state.discriminator.score(T.Tensor(fakes), training=False).data.mean())
    return fakes, e_real, e_fake


def train_run(cfg, dataset, out_dir, total_steps=None, callbacks=None):
    """Run one experiment end to end, persisting everything under ``out_dir``.

    Layout: config, metrics.csv (streamed), samples_*.pgm snapshots,
    samples_final.npz (inference-mode generator batch), record.json (written
    last, atomically). A diverged run persists a partial record with
    ``status="failed"`` and the abort diagnostic.
    """
    cfg = cfg.resolved()
    cfg.validate()
    if total_steps is None:
        total_steps = cfg.total_steps
    run_dir = Path(out_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config").write_text(serialize_config(cfg), encoding="utf-8")

    state = build_train_state(cfg, dataset.dim)
    rng_eval = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xE7A1]))
    snapshot_z = state.latent.sample(rng_eval, min(64, cfg.eval_samples))
    schedule = LrSchedule(cfg.lr, cfg.lr_decay_start)
    sampler = _BatchSampler(len(dataset), cfg.batch_size, state.rng_data)

    record = RunRecord(
        run_id=run_dir.name,
        config=dataclasses.asdict(cfg),
        seed=cfg.seed,
        status="completed",
    )
    started = time.perf_counter()
    grids = []

    name = _write_snapshot(state, run_dir, cfg, "init", snapshot_z)
    if name:
        grids.append(name)

    metrics_path = run_dir / "metrics.csv"
    try:
        with open(metrics_path, "w", encoding="utf-8") as stream, np.errstate(
            over="ignore", invalid="ignore"
        ):
            stream.write(METRICS_HEADER + "\n")
            for step in range(total_steps):
                lr_now = schedule.at(step, total_steps)
                state.opt_d.lr = lr_now
                state.opt_g.lr = lr_now
                metrics = train_step(state, dataset.samples[sampler.next()])
                logged = (step + 1) % cfg.log_every == 0 or step + 1 == total_steps
                if logged:
                    stream.write(_format_metrics_row(metrics, lr_now, lr_now) + "\n")
                    for callback in callbacks or ():
                        callback(step, metrics)
                if cfg.snapshot_every and (step + 1) % cfg.snapshot_every == 0:
                    name = _write_snapshot(state, run_dir, cfg, f"{step + 1:07d}", snapshot_z)
                    if name:
                        grids.append(name)
    except (DivergenceError, T.NonFiniteError) as exc:
        record.status = "failed"
        record.error = f"{type(exc).__name__}: {exc}"

    if record.status == "completed":
        name = _write_snapshot(state, run_dir, cfg, "final", snapshot_z)
        if name:
            grids.append(name)
        fakes, e_real, e_fake = _final_eval(state, dataset, cfg, rng_eval)
        np.savez(run_dir / "samples_final.npz", samples=fakes)
        record.eval_samples_file = "samples_final.npz"
        record.final_e_real = e_real
        record.final_e_fake = e_fake
        nets.save_net(state.generator, run_dir / "generator.npz")
        nets.save_net(state.discriminator, run_dir / "discriminator.npz")

    record.sample_grids = grids
    record.metrics_csv = "metrics.csv"
    record.wall_clock_s = time.perf_counter() - started
    write_record(record, run_dir)
    return record
