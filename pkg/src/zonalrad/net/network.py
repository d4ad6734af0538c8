"""Micro convolutional network: assembly, loss, Adam, training loop and saliency."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..core import NumericalError, ValidationError
from ..seeding import derive_rng
from .layers import (BatchNorm2D, Context, Conv2D, Dropout, Flatten, Linear, MaxPool2D,
                     ReLU)


@dataclass(frozen=True)
class NetConfig:
    input_size: int = 16
    channels: tuple = (16, 32)
    kernel: int = 3
    hidden: int = 128
    dropout: float = 0.5
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 32
    epochs: int = 30
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if self.input_size % (2 ** len(self.channels)):
            raise ValidationError("input size must be divisible by 2 per pooling block")
        if not 0 <= self.dropout < 1:
            raise ValidationError("dropout probability must lie in [0, 1)")
        if self.lr <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValidationError("lr and batch_size must be positive, epochs non-negative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValidationError("Adam betas must lie in [0, 1)")

    @property
    def flat_features(self) -> int:
        side = self.input_size // 2 ** len(self.channels)
        return self.channels[-1] * side * side

    def to_dict(self) -> dict:
        d = asdict(self)
        d["channels"] = list(self.channels)
        return d


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy and its gradient with respect to the logits."""
    labels = np.asarray(labels)
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -float(logp[np.arange(n), labels].mean())
    d = np.exp(logp)
    d[np.arange(n), labels] -= 1.0
    return loss, d / n


class Network:
    """A stack of named layers with optional fixed input standardization.

    Inputs are ``(N, H, W)`` patches; the first operation maps them to
    ``(x - input_mean) / input_std`` with one channel.
    """

    def __init__(self, layers, names, config: NetConfig | None = None):
        if len(layers) != len(names):
            raise ValidationError("one name per layer")
        self.layers = list(layers)
        self.names = list(names)
        self.config = config
        self.input_mean = 0.0
        self.input_std = 1.0
        self.m = {k: np.zeros_like(v) for k, v in self.parameters().items()}
        self.v = {k: np.zeros_like(v) for k, v in self.parameters().items()}
        self.step = 0
        self.mode = "eval"

    # parameters are addressed as "<layer name>.<param>"
    def parameters(self) -> dict:
        return {f"{n}.{k}": v for n, layer in zip(self.names, self.layers)
                for k, v in layer.params.items()}

    def buffers(self) -> dict:
        return {f"{n}.{k}": v for n, layer in zip(self.names, self.layers)
                for k, v in layer.buffers.items()}

    def set_array(self, key, value) -> None:
        name, attr = key.rsplit(".", 1)
        layer = self.layers[self.names.index(name)]
        store = layer.params if attr in layer.params else layer.buffers
        if attr not in store or store[attr].shape != np.shape(value):
            raise ValidationError(f"cannot assign {key} with shape {np.shape(value)}")
        store[attr] = np.array(value, dtype=np.float64)

    def _prepare(self, patches):
        x = np.asarray(patches, dtype=np.float64)
        if x.ndim == 2:
            x = x[None]
        if x.ndim != 3:
            raise ValidationError(f"expected a batch of 2-D patches, got shape {x.shape}")
        if self.config is not None and x.shape[1:] != (self.config.input_size,) * 2:
            raise ValidationError(
                f"expected {self.config.input_size}x{self.config.input_size} patches, "
                f"got {x.shape[1]}x{x.shape[2]}")
        return ((x - self.input_mean) / self.input_std)[:, None]

    def forward(self, patches, mode="eval", rng=None, dropout=None):
        """Logits ``(N, 2)``.

        ``mode="train"`` normalizes with batch statistics (updating the
        running ones) and applies dropout unless ``dropout=False``.
        """
        if mode not in ("train", "eval"):
            raise ValidationError(f"mode must be 'train' or 'eval', got {mode!r}")
        train = mode == "train"
        ctx = Context(train=train, dropout=train if dropout is None else dropout, rng=rng)
        x = self._prepare(patches)
        for layer in self.layers:
            x = layer.forward(x, ctx)
        return x

    def backward(self, dlogits):
        """Backpropagate; returns (parameter gradients, gradient wrt the raw patches)."""
        d = dlogits
        for layer in reversed(self.layers):
            d = layer.backward(d)
        grads = {f"{n}.{k}": g for n, layer in zip(self.names, self.layers)
                 for k, g in layer.grads.items()}
        return grads, d[:, 0] / self.input_std

    def loss_and_grads(self, patches, labels, mode="train", rng=None, dropout=None):
        labels = np.asarray(labels)
        if not np.all(np.isin(labels, (0, 1))):
            raise ValidationError("labels must be 0 or 1")
        logits = self.forward(patches, mode, rng, dropout)
        loss, dlogits = cross_entropy(logits, labels)
        if not np.isfinite(loss):
            raise NumericalError("non-finite loss")
        grads, _ = self.backward(dlogits)
        return loss, grads

    def adam_step(self, grads) -> None:
        """Bias-corrected Adam update of every parameter; increments ``step``."""
        cfg = self.config or NetConfig()
        self.step += 1
        b1, b2 = cfg.beta1, cfg.beta2
        c1 = 1.0 - b1 ** self.step
        c2 = 1.0 - b2 ** self.step
        params = self.parameters()
        for k, g in grads.items():
            self.m[k] = b1 * self.m[k] + (1 - b1) * g
            self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
            params[k] -= cfg.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + cfg.eps)

    def positive_proba(self, patches, batch_size=256) -> np.ndarray:
        x = np.asarray(patches, dtype=np.float64)
        out = [softmax(self.forward(x[i:i + batch_size]))[:, 1]
               for i in range(0, x.shape[0], batch_size)]
        return np.concatenate(out) if out else np.zeros(0)

    def saliency_map(self, patch) -> np.ndarray:
        """``|d logit_1 / d pixel|`` in eval mode, same shape as ``patch``."""
        patch = np.asarray(patch, dtype=np.float64)
        logits = self.forward(patch[None], "eval")
        d = np.zeros_like(logits)
        d[:, 1] = 1.0
        _, dx = self.backward(d)
        return np.abs(dx[0])


def build_micro_net(config: NetConfig | None = None) -> Network:
    """Conv-BN-ReLU-pool blocks, then FC-ReLU-dropout-FC to two logits."""
    cfg = config or NetConfig()
    rng = derive_rng(cfg.seed, "net-init")
    layers, names = [], []
    c_in = 1
    for b, c_out in enumerate(cfg.channels, start=1):
        layers += [Conv2D(c_in, c_out, cfg.kernel, rng), BatchNorm2D(c_out), ReLU(), MaxPool2D()]
        names += [f"conv{b}", f"bn{b}", f"relu{b}", f"pool{b}"]
        c_in = c_out
    layers += [Flatten(), Linear(cfg.flat_features, cfg.hidden, rng), ReLU(),
               Dropout(cfg.dropout), Linear(cfg.hidden, 2, rng, gain=1.0)]
    names += ["flatten", "fc1", "relu_fc", "dropout", "fc2"]
    return Network(layers, names, cfg)


@dataclass
class TrainResult:
    net: Network
    epoch_loss: list


def train_net(patches, labels, config: NetConfig | None = None) -> TrainResult:
    """Adam on mini-batches; shuffling and dropout streams derive from the seed.

    The per-epoch loss is the mean training-mode loss over that epoch's
    batches.  A non-finite loss raises with the epoch index.
    """
    cfg = config or NetConfig()
    x = np.asarray(patches, dtype=np.float64)
    y = np.asarray(labels).astype(np.int64)
    if x.ndim != 3 or x.shape[0] != y.size:
        raise ValidationError("patches must be (N, H, W) with one label each")
    if not (np.any(y == 0) and np.any(y == 1)):
        raise ValidationError("training the network needs both classes")
    net = build_micro_net(cfg)
    net.input_mean = float(x.mean())
    net.input_std = float(x.std()) or 1.0
    drop_rng = derive_rng(cfg.seed, "net-dropout")
    history = []
    for epoch in range(cfg.epochs):
        order = derive_rng(cfg.seed, "net-shuffle", epoch).permutation(y.size)
        losses, sizes = [], []
        for start in range(0, y.size, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            try:
                loss, grads = net.loss_and_grads(x[idx], y[idx], "train", drop_rng)
            except NumericalError:
                raise NumericalError(f"training diverged in epoch {epoch}") from None
            net.adam_step(grads)
            losses.append(loss)
            sizes.append(idx.size)
        history.append(float(np.average(losses, weights=sizes)))
    net.mode = "eval"
    return TrainResult(net, history)


def saliency_map(net: Network, patch) -> np.ndarray:
    return net.saliency_map(patch)
