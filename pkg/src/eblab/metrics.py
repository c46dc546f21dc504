"""Generation-quality metrics: the diversity score, its proxy classifier,
score histograms, and toy-data mode coverage.

The diversity score of a sample set is the mean KL divergence from the
marginal class distribution to each per-sample posterior under a proxy
classifier: zero for a collapsed sample set, larger for confident, varied
generations. Aggregations use exact summation so the score is bit-identical
under any reordering of the samples.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import nets
from . import tensor as T
from . import trainer
from .tensor import Tensor

POSTERIOR_CLAMP = 1e-8
ACCURACY_GATE = 0.97


def kl_divergence(p, q, clamp=POSTERIOR_CLAMP):
    """sum p_i * ln(p_i / max(q_i, clamp)) in nats; p_i = 0 terms contribute 0."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise ValueError("kl_divergence expects two 1-D vectors of equal length")
    for name, vec in (("p", p), ("q", q)):
        if np.any(vec < 0) or abs(float(vec.sum()) - 1.0) > 1e-6:
            raise ValueError(f"{name} is not a probability vector")
    q = np.maximum(q, clamp)
    mask = p > 0
    return float(math.fsum(p[mask] * np.log(p[mask] / q[mask])))


def modified_inception_score(samples, classifier):
    """Mean KL(marginal || posterior) over the sample set, in nats.

    ``classifier`` must expose ``predict_proba(samples) -> (n, C)``. The
    marginal is the exact (order-independent) mean of the posteriors.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if len(samples) < 1:
        raise ValueError("need at least one sample")
    posteriors = np.asarray(classifier.predict_proba(samples), dtype=np.float64)
    n = posteriors.shape[0]
    marginal = np.array([math.fsum(posteriors[:, c]) / n for c in range(posteriors.shape[1])])
    per_sample = [kl_divergence(marginal, posteriors[i]) for i in range(n)]
    return math.fsum(per_sample) / n


# ---------------------------------------------------------------------------
# proxy classifier

class ProxyClassifier:
    """One-hidden-layer MLP emitting class-probability vectors.

    Deliberately small: it exists to score generations from the synthetic
    corpora, and its scores are comparable only against classifiers trained
    on the same data.
    """

    kind = "classifier"

    def __init__(self, in_dim, n_classes, hidden=64):
        self.in_dim = in_dim
        self.n_classes = n_classes
        self.hidden = hidden
        self.l1 = nets.Linear(in_dim, hidden)
        self.l2 = nets.Linear(hidden, n_classes)

    def parameters(self):
        return self.l1.parameters() + self.l2.parameters()

    def logits(self, x):
        return self.l2(T.relu(self.l1(x)))

    def predict_proba(self, samples):
        probs = T.softmax_rowwise(self.logits(Tensor(samples))).data
        return probs

    def predict(self, samples):
        return np.argmax(self.predict_proba(samples), axis=1)

    def accuracy(self, samples, labels):
        return float(np.mean(self.predict(samples) == np.asarray(labels)))

    def meta(self):
        return {"in_dim": self.in_dim, "n_classes": self.n_classes, "hidden": self.hidden}

    def save(self, path):
        np.savez(
            path,
            __format__=np.array([nets.CHECKPOINT_FORMAT]),
            __kind__=np.array([self.kind]),
            __meta__=np.array([json.dumps(self.meta(), sort_keys=True)]),
            **{
                "l1.weight": self.l1.weight.data,
                "l1.bias": self.l1.bias.data,
                "l2.weight": self.l2.weight.data,
                "l2.bias": self.l2.bias.data,
            },
        )

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as bundle:
            kind = str(bundle["__kind__"][0])
            if kind != cls.kind:
                raise ValueError(f"{path}: not a classifier checkpoint")
            meta = json.loads(str(bundle["__meta__"][0]))
            clf = cls(meta["in_dim"], meta["n_classes"], meta["hidden"])
            clf.l1.weight.data[...] = bundle["l1.weight"]
            clf.l1.bias.data[...] = bundle["l1.bias"]
            clf.l2.weight.data[...] = bundle["l2.weight"]
            clf.l2.bias.data[...] = bundle["l2.bias"]
        return clf


def train_proxy_classifier(dataset, *, hidden=64, steps=3000, batch_size=128,
                           lr=1e-3, seed=1234, holdout_frac=0.2,
                           accuracy_gate=ACCURACY_GATE):
    """Fit the proxy classifier and gate it on held-out accuracy.

    Raises RuntimeError when the held-out accuracy misses the gate; scores
    from an ungated classifier are not to be trusted. Returns
    ``(classifier, holdout_accuracy)``.
    """
    if dataset.labels is None:
        raise ValueError("classifier training needs a labeled dataset")
    n = len(dataset)
    n_hold = max(1, int(round(holdout_frac * n)))
    if n - n_hold < batch_size:
        raise ValueError("dataset too small for the requested batch size")
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    hold_idx, train_idx = order[:n_hold], order[n_hold:]
    x_train, y_train = dataset.samples[train_idx], dataset.labels[train_idx]

    n_classes = int(dataset.labels.max()) + 1
    clf = ProxyClassifier(dataset.dim, n_classes, hidden)
    for p in clf.parameters():
        if p.data.ndim == 2:
            p.data[...] = rng.normal(0.0, 0.05, size=p.data.shape)
    opt = trainer.Adam(clf.parameters(), lr, beta1=0.9)
    eye = np.eye(n_classes)
    sampler = trainer._BatchSampler(len(x_train), batch_size, rng)
    for _ in range(steps):
        picked = sampler.next()
        loss = T.cross_entropy_logits(clf.logits(Tensor(x_train[picked])), eye[y_train[picked]])
        opt.zero_grad()
        loss.backward()
        opt.step()
    accuracy = clf.accuracy(dataset.samples[hold_idx], dataset.labels[hold_idx])
    if accuracy < accuracy_gate:
        raise RuntimeError(
            f"proxy classifier held-out accuracy {accuracy:.4f} is below the "
            f"{accuracy_gate:.2f} gate; scores would be meaningless"
        )
    return clf, accuracy


# ---------------------------------------------------------------------------
# histograms

@dataclass
class ScoreHistogram:
    """Counts per bin plus the share-of-runs percentages used for reporting."""

    edges: np.ndarray
    counts: np.ndarray
    total: int
    tag: str = ""

    def __post_init__(self):
        self.edges = np.asarray(self.edges, dtype=np.float64)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.edges.ndim != 1 or len(self.edges) != len(self.counts) + 1:
            raise ValueError("edges must have one more entry than counts")
        if np.any(np.diff(self.edges) <= 0):
            raise ValueError("edges must be strictly increasing")
        if int(self.counts.sum()) != self.total:
            raise ValueError("counts must sum to the total")

    @property
    def percents(self):
        if self.total == 0:
            return np.zeros(len(self.counts))
        return 100.0 * self.counts / self.total

    def csv_rows(self):
        rows = ["bin_lo,bin_hi,percent"]
        for lo, hi, pct in zip(self.edges[:-1], self.edges[1:], self.percents):
            rows.append(f"{lo!r},{hi!r},{pct!r}")
        return "\n".join(rows) + "\n"


def build_histogram(scores, bins, value_range=None, tag=""):
    """Histogram of scores with out-of-range values clipped into the end bins."""
    if bins < 1:
        raise ValueError("bins must be >= 1")
    scores = np.asarray(list(scores), dtype=np.float64)
    if value_range is None:
        if scores.size == 0:
            value_range = (0.0, 1.0)
        else:
            hi = float(scores.max())
            value_range = (0.0, hi if hi > 0 else 1.0)
    lo, hi = value_range
    if not hi > lo:
        raise ValueError("value_range must be increasing")
    edges = np.linspace(lo, hi, bins + 1)
    if scores.size:
        counts, _ = np.histogram(np.clip(scores, lo, hi), bins=edges)
    else:
        counts = np.zeros(bins, dtype=np.int64)
    return ScoreHistogram(edges, counts, int(scores.size), tag)


def write_histogram_svg(path, histograms, title=""):
    """Standalone SVG with translucent overlaid bars, one color per series."""
    width, height, pad = 640, 360, 48
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"]
    all_edges = [h.edges for h in histograms if len(h.edges)]
    lo = min(float(e[0]) for e in all_edges) if all_edges else 0.0
    hi = max(float(e[-1]) for e in all_edges) if all_edges else 1.0
    top = max((float(h.percents.max()) for h in histograms if h.counts.size), default=1.0)
    top = max(top, 1.0)

    def sx(v):
        return pad + (v - lo) / (hi - lo) * (width - 2 * pad)

    def sy(pct):
        return height - pad - pct / top * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 12}" text-anchor="middle" font-size="11">score</text>',
        f'<text x="14" y="{height / 2:.1f}" font-size="11" transform="rotate(-90 14 {height / 2:.1f})" text-anchor="middle">percent of runs</text>',
    ]
    for idx, hist in enumerate(histograms):
        color = colors[idx % len(colors)]
        for blo, bhi, pct in zip(hist.edges[:-1], hist.edges[1:], hist.percents):
            if pct <= 0:
                continue
            x0, x1 = sx(blo), sx(bhi)
            y = sy(pct)
            parts.append(
                f'<rect x="{x0:.2f}" y="{y:.2f}" width="{x1 - x0:.2f}" '
                f'height="{height - pad - y:.2f}" fill="{color}" fill-opacity="0.45"/>'
            )
        parts.append(
            f'<rect x="{width - pad - 130}" y="{pad + 18 * idx}" width="12" height="12" fill="{color}" fill-opacity="0.45"/>'
        )
        parts.append(
            f'<text x="{width - pad - 112}" y="{pad + 18 * idx + 10}" font-size="11">{hist.tag or f"series {idx}"} (n={hist.total})</text>'
        )
    parts.append(f'<text x="{pad - 6}" y="{sy(top) + 4:.1f}" text-anchor="end" font-size="10">{top:.1f}%</text>')
    parts.append(f'<text x="{pad - 6}" y="{height - pad + 4}" text-anchor="end" font-size="10">0</text>')
    parts.append(f'<text x="{pad}" y="{height - pad + 16}" text-anchor="middle" font-size="10">{lo:.2f}</text>')
    parts.append(f'<text x="{width - pad}" y="{height - pad + 16}" text-anchor="middle" font-size="10">{hi:.2f}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("\n".join(parts) + "\n")


# ---------------------------------------------------------------------------
# toy-data mode coverage

@dataclass
class ModeCoverage:
    covered: int
    per_mode_counts: np.ndarray
    per_mode_mass: np.ndarray
    details: dict = field(default_factory=dict)


def mode_coverage(samples, centers, radius, coverage_frac=0.2):
    """Count modes that captured their share of samples.

    A sample belongs to its nearest center if within ``radius`` of it; a mode
    is covered when it captured at least ``coverage_frac`` of the equal-split
    expectation ``n / n_modes``.
    """
    samples = np.asarray(samples, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    if radius <= 0:
        raise ValueError("radius must be positive")
    if len(np.unique(centers, axis=0)) != len(centers):
        raise ValueError("centers must be distinct")
    deltas = samples[:, None, :] - centers[None, :, :]
    distances = np.sqrt(np.einsum("nkd,nkd->nk", deltas, deltas))
    nearest = np.argmin(distances, axis=1)
    within = distances[np.arange(len(samples)), nearest] <= radius
    counts = np.bincount(nearest[within], minlength=len(centers))
    expected = len(samples) / len(centers)
    covered = int(np.count_nonzero(counts >= coverage_frac * expected))
    return ModeCoverage(
        covered=covered,
        per_mode_counts=counts,
        per_mode_mass=counts / max(1, len(samples)),
        details={"expected_per_mode": expected, "threshold": coverage_frac * expected},
    )
