"""Losses: energy margin objectives, the repelling regularizer, margin
schedules, and the probabilistic baseline losses."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T

PROB_CLAMP = 1e-7
# Added to squared row norms: exact no-op for any row with norm >~ 1e-8,
# equivalent to a 1e-12 norm floor for all-zero rows.
_SQNORM_FLOOR = 1e-24


class ZeroRowError(ValueError):
    """A representation row has zero norm and strict mode is on."""


@dataclass(frozen=True)
class MarginSchedule:
    """Energy margin as a function of the training step.

    ``constant`` always returns ``m0``; ``linear`` decays from ``m0`` at step
    0 to exactly 0 at ``decay_end_step`` and stays there.
    """

    kind: str = "constant"
    m0: float = 10.0
    decay_end_step: int = 0

    def __post_init__(self):
        if self.kind not in ("constant", "linear"):
            raise ValueError(f"unknown margin schedule kind {self.kind!r}")
        if self.m0 < 0:
            raise ValueError("m0 must be non-negative")
        if self.kind == "linear" and self.decay_end_step <= 0:
            raise ValueError("linear margin decay needs a positive decay_end_step")


def margin_at(schedule, step):
    if step < 0:
        raise ValueError("step must be >= 0")
    if schedule.kind == "constant":
        return schedule.m0
    return schedule.m0 * max(0.0, 1.0 - step / schedule.decay_end_step)


@dataclass(frozen=True)
class ObjectiveConfig:
    """Which adversarial objective a run optimizes.

    The probabilistic framework ignores the margin schedule and the
    repelling-term weight.
    """

    framework: str = "ebgan"
    margin: MarginSchedule = field(default_factory=MarginSchedule)
    pt_weight: float = 0.0

    def __post_init__(self):
        if self.framework not in ("ebgan", "gan"):
            raise ValueError(f"unknown framework {self.framework!r}")
        if self.pt_weight < 0:
            raise ValueError("pt_weight must be non-negative")


def _check_energies(e, name):
    if np.any(e.data < 0):
        raise ValueError(f"{name} contains negative energies")


def ebgan_d_loss(e_real, e_fake, m):
    """mean(e_real) + mean([m - e_fake]^+)."""
    if m < 0:
        raise ValueError("margin must be non-negative")
    _check_energies(e_real, "e_real")
    _check_energies(e_fake, "e_fake")
    hinge = T.relu(T.sub(m, e_fake))
    return T.add(T.mean(e_real), T.mean(hinge))


def ebgan_g_loss(e_fake):
    """mean(e_fake): the generator pushes its samples toward low energy."""
    _check_energies(e_fake, "e_fake")
    return T.mean(e_fake)


def pull_away_term(s, strict=False):
    """Mean squared pairwise cosine similarity over batch representations.

    ``s`` is a (N, d) tensor, N >= 2. The value is in [0, 1]: exactly 0 when
    all row pairs are orthogonal, exactly 1 when all rows are identical, and
    invariant to positive per-row rescaling. Zero-norm rows are treated as
    orthogonal to everything unless ``strict`` is set, in which case they
    raise ZeroRowError.
    """
    n = s.shape[0]
    if s.ndim != 2 or n < 2:
        raise ValueError("pull_away_term needs a 2-D batch with at least 2 rows")
    gram = T.matmul(s, T.transpose(s))
    sq_norms = T.diag_part(gram)
    if strict and np.any(sq_norms.data == 0.0):
        raise ZeroRowError("zero-norm representation row")
    safe = T.add(sq_norms, _SQNORM_FLOOR)
    denom = T.mul(T.reshape(safe, (n, 1)), T.reshape(safe, (1, n)))
    # The squared cosine is bounded by [0, 1] with zero derivative at both
    # ends, so clamping removes last-ulp rounding overshoot without touching
    # any genuine gradient.
    cos_sq = T.clip(T.div(T.mul(gram, gram), denom), 0.0, 1.0)
    off_diagonal = 1.0 - np.eye(n)
    total = T.sum_all(T.mul(cos_sq, off_diagonal))
    return T.div(total, float(n * (n - 1)))


def gan_d_loss(p_real, p_fake):
    """mean(-log p_real - log(1 - p_fake)), probabilities clamped away from
    0 and 1 before the logs."""
    real_term = T.neg(T.log(T.clip(p_real, PROB_CLAMP, 1.0 - PROB_CLAMP)))
    fake_term = T.neg(T.log(T.sub(1.0, T.clip(p_fake, PROB_CLAMP, 1.0 - PROB_CLAMP))))
    return T.add(T.mean(real_term), T.mean(fake_term))


def gan_g_loss(p_fake):
    """Non-saturating form: mean(-log p_fake)."""
    return T.mean(T.neg(T.log(T.clip(p_fake, PROB_CLAMP, 1.0 - PROB_CLAMP))))
