"""Fully-connected generator and discriminator builders.

Construction rules shared by every net: hidden layers are linear maps
followed by batch normalization and ReLU; batch normalization is skipped on
the first discriminator layer and on every output layer; the generator ends
in tanh so outputs live in (-1, 1); discriminator dropout (when enabled)
acts on hidden activations only.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import Tensor

G_INIT_STD = 0.02
D_INIT_STD = 0.002
DROPOUT_RATE = 0.5

CHECKPOINT_FORMAT = "eblab-checkpoint-v1"


class Linear:
    def __init__(self, in_dim, out_dim):
        self.weight = Tensor(np.zeros((in_dim, out_dim)), requires_grad=True)
        self.bias = Tensor(np.zeros(out_dim), requires_grad=True)

    def __call__(self, x):
        return T.add_bias(T.matmul(x, self.weight), self.bias)

    def parameters(self):
        return [self.weight, self.bias]


class BatchNorm:
    def __init__(self, dim, scale_enabled=True, momentum=0.9, eps=1e-5):
        self.beta = Tensor(np.zeros(dim), requires_grad=True)
        self.gamma = Tensor(np.ones(dim), requires_grad=True) if scale_enabled else None
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)
        self.momentum = momentum
        self.eps = eps

    def __call__(self, x, training):
        return T.batchnorm(
            x,
            self.beta,
            self.gamma,
            self.running_mean,
            self.running_var,
            training=training,
            momentum=self.momentum,
            eps=self.eps,
        )

    def parameters(self):
        return [self.beta] if self.gamma is None else [self.beta, self.gamma]


@dataclass(frozen=True)
class LatentSpec:
    """Source of generator inputs: i.i.d. standard normal components."""

    dim: int
    distribution: str = "normal"

    def sample(self, rng, count):
        if self.distribution != "normal":
            raise ValueError(f"unsupported latent distribution {self.distribution!r}")
        return Tensor(rng.standard_normal((count, self.dim)))


@dataclass
class EnergyOutput:
    """Per-sample reconstruction energies plus the encoder representations."""

    energies: Tensor
    representations: Tensor


def _widths(in_dim, hidden, count, out_dim):
    dims = [in_dim] + [hidden] * (count - 1) + [out_dim]
    return list(zip(dims[:-1], dims[1:]))


class Generator:
    """MLP generator: (n_layers - 1) hidden blocks, then a tanh output layer."""

    kind = "generator"

    def __init__(self, latent_dim, out_dim, n_layers, width):
        if n_layers < 1:
            raise ValueError("generator needs at least one layer")
        self.latent_dim = latent_dim
        self.out_dim = out_dim
        self.n_layers = n_layers
        self.width = width
        self.linears = [Linear(a, b) for a, b in _widths(latent_dim, width, n_layers, out_dim)]
        self.norms = [BatchNorm(width) for _ in range(n_layers - 1)]

    def forward(self, z, training=False):
        h = z
        for linear, norm in zip(self.linears[:-1], self.norms):
            h = T.relu(norm(linear(h), training))
        return T.tanh(self.linears[-1](h))

    def parameters(self):
        params = []
        for linear in self.linears:
            params.extend(linear.parameters())
        for norm in self.norms:
            params.extend(norm.parameters())
        return params

    def meta(self):
        return {
            "latent_dim": self.latent_dim,
            "out_dim": self.out_dim,
            "n_layers": self.n_layers,
            "width": self.width,
        }

    @classmethod
    def from_meta(cls, meta):
        return cls(meta["latent_dim"], meta["out_dim"], meta["n_layers"], meta["width"])


class AutoEncoderDiscriminator:
    """Energy is the per-sample reconstruction discrepancy of an auto-encoder.

    ``n_layers`` counts encoder plus decoder layers; the decoder is always
    exactly one linear layer, so the encoder gets ``n_layers - 1``. The
    representation handed to the repelling regularizer is the encoder output
    after its nonlinearity (before dropout).
    """

    kind = "ae_discriminator"

    def __init__(self, in_dim, n_layers, width, dropout_rate=0.0, energy_form="euclidean"):
        if n_layers < 2:
            raise ValueError(
                "auto-encoder discriminator needs >= 2 layers (decoder is one layer)"
            )
        if energy_form not in ("euclidean", "squared"):
            raise ValueError(f"unknown energy_form {energy_form!r}")
        self.in_dim = in_dim
        self.n_layers = n_layers
        self.width = width
        self.dropout_rate = dropout_rate
        self.energy_form = energy_form
        n_enc = n_layers - 1
        self.encoder = [Linear(a, b) for a, b in _widths(in_dim, width, n_enc, width)]
        self.enc_norms = [BatchNorm(width) for _ in range(n_enc - 1)]  # none on layer 1
        self.decoder = Linear(width, in_dim)

    @property
    def representation_dim(self):
        return self.width

    def encode(self, x, training=False, rng=None):
        h = T.relu(self.encoder[0](x))
        for linear, norm in zip(self.encoder[1:], self.enc_norms):
            h = T.dropout(h, self.dropout_rate, training, rng)
            h = T.relu(norm(linear(h), training))
        return h

    def energy(self, x, training=False, rng=None):
        rep = self.encode(x, training, rng)
        h = T.dropout(rep, self.dropout_rate, training, rng)
        recon = self.decoder(h)
        diff = T.sub(recon, x)
        if self.energy_form == "euclidean":
            energies = T.euclidean_norm_rowwise(diff)
        else:
            energies = T.squared_l2_rowwise(diff)
        return EnergyOutput(energies=energies, representations=rep)

    def parameters(self):
        params = []
        for linear in self.encoder:
            params.extend(linear.parameters())
        for norm in self.enc_norms:
            params.extend(norm.parameters())
        params.extend(self.decoder.parameters())
        return params

    def meta(self):
        return {
            "in_dim": self.in_dim,
            "n_layers": self.n_layers,
            "width": self.width,
            "dropout_rate": self.dropout_rate,
            "energy_form": self.energy_form,
        }

    @classmethod
    def from_meta(cls, meta):
        return cls(
            meta["in_dim"],
            meta["n_layers"],
            meta["width"],
            meta["dropout_rate"],
            meta["energy_form"],
        )


class LogisticDiscriminator:
    """MLP ending in a single sigmoid unit; scores are strictly inside (0, 1)."""

    kind = "logistic_discriminator"

    def __init__(self, in_dim, n_layers, width, dropout_rate=0.0):
        if n_layers < 1:
            raise ValueError("discriminator needs at least one layer")
        self.in_dim = in_dim
        self.n_layers = n_layers
        self.width = width
        self.dropout_rate = dropout_rate
        self.linears = [Linear(a, b) for a, b in _widths(in_dim, width, n_layers, 1)]
        self.norms = [BatchNorm(width) for _ in range(max(0, n_layers - 2))]  # none on layer 1

    def score(self, x, training=False, rng=None):
        h = x
        for i, linear in enumerate(self.linears[:-1]):
            h = linear(h)
            if i > 0:
                h = self.norms[i - 1](h, training)
            h = T.dropout(T.relu(h), self.dropout_rate, training, rng)
        logits = self.linears[-1](h)
        return T.reshape(T.sigmoid(logits), (x.shape[0],))

    def parameters(self):
        params = []
        for linear in self.linears:
            params.extend(linear.parameters())
        for norm in self.norms:
            params.extend(norm.parameters())
        return params

    def meta(self):
        return {
            "in_dim": self.in_dim,
            "n_layers": self.n_layers,
            "width": self.width,
            "dropout_rate": self.dropout_rate,
        }

    @classmethod
    def from_meta(cls, meta):
        return cls(meta["in_dim"], meta["n_layers"], meta["width"], meta["dropout_rate"])


_NET_KINDS = {
    cls.kind: cls
    for cls in (Generator, AutoEncoderDiscriminator, LogisticDiscriminator)
}


def init_weights(net, role, rng):
    """Gaussian linear weights (std 0.002 for discriminators, 0.02 for
    generators), zero biases, and fresh batch-norm state."""
    std = {"generator": G_INIT_STD, "discriminator": D_INIT_STD}.get(role)
    if std is None:
        raise ValueError(f"role must be 'generator' or 'discriminator', got {role!r}")
    for name, array in _state_arrays(net).items():
        if name.endswith(".weight"):
            array[...] = rng.normal(0.0, std, size=array.shape)
        elif name.endswith((".bias", ".beta", ".running_mean")):
            array[...] = 0.0
        elif name.endswith((".gamma", ".running_var")):
            array[...] = 1.0
    return net


def generate(gen, z, training=False):
    """Run the generator on a latent batch; outputs live in (-1, 1)."""
    if z.shape[1] != gen.latent_dim:
        raise ValueError(f"latent batch width {z.shape[1]} != generator dim {gen.latent_dim}")
    return gen.forward(z, training=training)


def ae_energy(disc, x, training=False, rng=None):
    """Per-sample reconstruction energy and encoder representations."""
    if x.shape[1] != disc.in_dim:
        raise ValueError(f"input width {x.shape[1]} != discriminator dim {disc.in_dim}")
    return disc.energy(x, training=training, rng=rng)


def logistic_score(disc, x, training=False, rng=None):
    if x.shape[1] != disc.in_dim:
        raise ValueError(f"input width {x.shape[1]} != discriminator dim {disc.in_dim}")
    return disc.score(x, training=training, rng=rng)


# ---------------------------------------------------------------------------
# checkpoints: one .npz per net, documented in the README

def _state_arrays(net):
    """Ordered name -> ndarray view of every stored array in the net."""
    arrays = {}

    def put(prefix, obj):
        if isinstance(obj, Linear):
            arrays[f"{prefix}.weight"] = obj.weight.data
            arrays[f"{prefix}.bias"] = obj.bias.data
        elif isinstance(obj, BatchNorm):
            arrays[f"{prefix}.beta"] = obj.beta.data
            if obj.gamma is not None:
                arrays[f"{prefix}.gamma"] = obj.gamma.data
            arrays[f"{prefix}.running_mean"] = obj.running_mean
            arrays[f"{prefix}.running_var"] = obj.running_var

    if isinstance(net, Generator):
        for i, lin in enumerate(net.linears):
            put(f"linear{i}", lin)
        for i, norm in enumerate(net.norms):
            put(f"norm{i}", norm)
    elif isinstance(net, AutoEncoderDiscriminator):
        for i, lin in enumerate(net.encoder):
            put(f"enc{i}", lin)
        for i, norm in enumerate(net.enc_norms):
            put(f"enc_norm{i}", norm)
        put("dec", net.decoder)
    elif isinstance(net, LogisticDiscriminator):
        for i, lin in enumerate(net.linears):
            put(f"linear{i}", lin)
        for i, norm in enumerate(net.norms):
            put(f"norm{i}", norm)
    else:
        raise TypeError(f"cannot extract state from {type(net).__name__}")
    return arrays


def save_net(net, path):
    arrays = _state_arrays(net)
    np.savez(
        path,
        __format__=np.array([CHECKPOINT_FORMAT]),
        __kind__=np.array([net.kind]),
        __meta__=np.array([json.dumps(net.meta(), sort_keys=True)]),
        **arrays,
    )


def load_net(path):
    with np.load(path, allow_pickle=False) as bundle:
        fmt = str(bundle["__format__"][0])
        if fmt != CHECKPOINT_FORMAT:
            raise ValueError(f"{path}: unsupported checkpoint format {fmt!r}")
        kind = str(bundle["__kind__"][0])
        meta = json.loads(str(bundle["__meta__"][0]))
        stored = {k: bundle[k] for k in bundle.files if not k.startswith("__")}
    cls = _NET_KINDS.get(kind)
    if cls is None:
        raise ValueError(f"{path}: unknown net kind {kind!r}")
    net = cls.from_meta(meta)
    arrays = _state_arrays(net)
    if set(arrays) != set(stored):
        raise ValueError(f"{path}: checkpoint arrays do not match the declared shape")
    for name, array in arrays.items():
        if stored[name].shape != array.shape:
            raise ValueError(f"{path}: shape mismatch for {name}")
        array[...] = stored[name]
    return net
