"""Dilated-convolution classifier with optional subject embeddings.

Architecture: L causal dilated conv layers (dilation 2^l, conv -> activation
-> dropout), temporal mean-pool by the receptive field, flatten, dense ->
activation -> dropout -> dense to class logits. Subject embeddings, when
enabled, are concatenated to the input as constant channels and learned by
backpropagation like every other parameter.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .backend import conv1d_backward, conv1d_forward

ACTIVATIONS = ("asinh", "identity")
DOWNSAMPLE_MODES = ("mean", "stride")


def asinh_activation(x):
    return np.arcsinh(x)


def asinh_derivative(x):
    return 1.0 / np.sqrt(1.0 + np.square(x))


def identity_activation(x):
    return x


def identity_derivative(x):
    return np.ones_like(x)


_ACT = {
    "asinh": (asinh_activation, asinh_derivative),
    "identity": (identity_activation, identity_derivative),
}


def dropout(x, rate: float, rng=None, mode: str = "train"):
    """Inverted dropout. Returns (output, scaled mask or None).

    Train mode zeroes entries with probability ``rate`` and scales survivors
    by 1/(1-rate); eval mode is the identity.
    """
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    if mode not in ("train", "eval"):
        raise ValueError(f"unknown dropout mode: {mode!r}")
    if mode == "eval" or rate == 0.0:
        return x, None
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)
    return x * mask, mask


def temporal_downsample(x, factor: int, mode: str = "mean"):
    """Downsample the last axis by ``factor`` (mean pool or strided pick)."""
    if factor < 1:
        raise ValueError("factor must be >= 1")
    t = x.shape[-1]
    if t % factor:
        raise ValueError(f"factor {factor} does not divide T={t}")
    if mode == "mean":
        return x.reshape(x.shape[:-1] + (t // factor, factor)).mean(axis=-1)
    if mode == "stride":
        return x[..., ::factor]
    raise ValueError(f"unknown downsample mode: {mode!r}")


def concat_embedding(y, e):
    """Concatenate embedding vector e (E,) to trial y (C,T) as constant rows."""
    y = np.asarray(y)
    e = np.asarray(e, dtype=y.dtype)
    if e.size == 0:
        return y
    return np.concatenate([y, np.repeat(e[:, None], y.shape[1], axis=1)], axis=0)


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    ez = np.exp(z)
    return ez / ez.sum(axis=-1, keepdims=True)


def cross_entropy(logits, labels):
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    n, n_classes = logits.shape
    if n == 0:
        raise ValueError("empty batch")
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} != ({n},)")
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError(f"labels out of range [0, {n_classes})")
    z = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - logsumexp
    loss = float(-logp[np.arange(n), labels].mean())
    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n
    return loss, dlogits.astype(logits.dtype)


@dataclass(frozen=True)
class ModelConfig:
    """Architecture description; immutable and JSON-serializable."""

    n_channels: int
    n_classes: int
    n_timesteps: int
    n_layers: int = 6
    kernel_size: int = 2
    hidden_channels: int = 128
    fc_hidden: int = 512
    dropout: float = 0.4
    embedding_size: int = 0
    n_subjects: int = 1
    activation: str = "asinh"
    activation_mask: tuple | None = None  # per conv layer; None = all active
    downsample: str = "mean"
    use_bias: bool = True

    def __post_init__(self):
        if min(self.n_channels, self.n_classes, self.n_timesteps, self.n_layers) < 1:
            raise ValueError("n_channels, n_classes, n_timesteps, n_layers must be >= 1")
        if self.kernel_size < 1:
            raise ValueError("kernel_size must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must be in [0, 1)")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if self.downsample not in DOWNSAMPLE_MODES:
            raise ValueError(f"downsample must be one of {DOWNSAMPLE_MODES}")
        if self.embedding_size < 0:
            raise ValueError("embedding_size must be >= 0")
        if self.embedding_size > 0 and self.n_subjects < 1:
            raise ValueError("embeddings need n_subjects >= 1")
        if self.activation_mask is not None:
            mask = tuple(bool(v) for v in self.activation_mask)
            if len(mask) != self.n_layers:
                raise ValueError("activation_mask length must equal n_layers")
            object.__setattr__(self, "activation_mask", mask)
        if self.n_timesteps % self.receptive_field:
            raise ValueError(
                f"receptive field {self.receptive_field} does not divide "
                f"T={self.n_timesteps}"
            )

    @property
    def dilations(self) -> tuple:
        return tuple(2**layer for layer in range(self.n_layers))

    @property
    def receptive_field(self) -> int:
        # 1 + (k-1) * sum(dilations); equals 2^L for k=2
        return 1 + (self.kernel_size - 1) * (2**self.n_layers - 1)

    @property
    def n_pooled(self) -> int:
        return self.n_timesteps // self.receptive_field

    @property
    def input_channels(self) -> int:
        return self.n_channels + self.embedding_size

    def layer_activation(self, layer: int) -> str:
        if self.activation_mask is not None and not self.activation_mask[layer]:
            return "identity"
        return self.activation

    def to_dict(self) -> dict:
        return {
            "n_channels": self.n_channels,
            "n_classes": self.n_classes,
            "n_timesteps": self.n_timesteps,
            "n_layers": self.n_layers,
            "kernel_size": self.kernel_size,
            "hidden_channels": self.hidden_channels,
            "fc_hidden": self.fc_hidden,
            "dropout": self.dropout,
            "embedding_size": self.embedding_size,
            "n_subjects": self.n_subjects,
            "activation": self.activation,
            "activation_mask": list(self.activation_mask)
            if self.activation_mask is not None
            else None,
            "downsample": self.downsample,
            "use_bias": self.use_bias,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "ModelConfig":
        obj = dict(obj)
        if obj.get("activation_mask") is not None:
            obj["activation_mask"] = tuple(obj["activation_mask"])
        return cls(**obj)


class WavenetClassifier:
    """Trainable classifier; parameters live in an ordered name->array dict."""

    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float32):
        self.config = config
        self.dtype = np.dtype(dtype)
        rng = np.random.default_rng(seed)
        params = {}
        cin = config.input_channels
        for layer in range(config.n_layers):
            fan_in = cin * config.kernel_size
            bound = math.sqrt(3.0 / fan_in)
            params[f"conv{layer}_w"] = rng.uniform(
                -bound, bound, (config.hidden_channels, cin, config.kernel_size)
            )
            if config.use_bias:
                params[f"conv{layer}_b"] = np.zeros(config.hidden_channels)
            cin = config.hidden_channels
        flat = config.hidden_channels * config.n_pooled
        bound = math.sqrt(3.0 / flat)
        params["fc1_w"] = rng.uniform(-bound, bound, (config.fc_hidden, flat))
        if config.use_bias:
            params["fc1_b"] = np.zeros(config.fc_hidden)
        bound = math.sqrt(3.0 / config.fc_hidden)
        params["fc2_w"] = rng.uniform(-bound, bound, (config.n_classes, config.fc_hidden))
        if config.use_bias:
            params["fc2_b"] = np.zeros(config.n_classes)
        if config.embedding_size > 0:
            params["embedding"] = rng.normal(
                0.0,
                1.0 / math.sqrt(config.embedding_size),
                (config.n_subjects, config.embedding_size),
            )
        self.params = {k: np.ascontiguousarray(v, dtype=self.dtype) for k, v in params.items()}

    def parameters(self) -> dict:
        return self.params

    def copy(self) -> "WavenetClassifier":
        clone = object.__new__(type(self))
        clone.config = self.config
        clone.dtype = self.dtype
        clone.params = {k: v.copy() for k, v in self.params.items()}
        return clone

    def astype(self, dtype) -> "WavenetClassifier":
        clone = object.__new__(type(self))
        clone.config = self.config
        clone.dtype = np.dtype(dtype)
        clone.params = {
            k: np.ascontiguousarray(v, dtype=dtype) for k, v in self.params.items()
        }
        return clone

    def _bias(self, name: str):
        if self.config.use_bias:
            return self.params[name]
        return None

    def _embed_input(self, x, subject_idx, embedding_override=None):
        cfg = self.config
        if cfg.embedding_size == 0:
            return x
        if embedding_override is not None:
            rows = np.asarray(embedding_override, dtype=self.dtype)
            if rows.shape != (x.shape[0], cfg.embedding_size):
                raise ValueError("embedding_override must be (batch, E)")
        else:
            if subject_idx is None:
                raise ValueError("model uses embeddings; subject_idx is required")
            rows = self.params["embedding"][np.asarray(subject_idx)]
        const = np.repeat(rows[:, :, None], cfg.n_timesteps, axis=2)
        return np.concatenate([x, const], axis=1)

    def forward(
        self,
        x,
        subject_idx=None,
        mode: str = "eval",
        rng=None,
        return_cache: bool = False,
        embedding_override=None,
    ):
        """Batch forward pass; returns logits (and the cache when asked)."""
        cfg = self.config
        x = np.ascontiguousarray(np.asarray(x, dtype=self.dtype))
        if x.ndim != 3 or x.shape[1] != cfg.n_channels or x.shape[2] != cfg.n_timesteps:
            raise ValueError(
                f"input shape {x.shape} != (batch, {cfg.n_channels}, {cfg.n_timesteps})"
            )
        if mode not in ("train", "eval"):
            raise ValueError(f"unknown mode: {mode!r}")
        if mode == "train" and cfg.dropout > 0 and rng is None:
            raise ValueError("train mode with dropout needs an rng")

        cache = {"mode": mode, "subject_idx": None}
        if subject_idx is not None:
            cache["subject_idx"] = np.asarray(subject_idx)
        x0 = self._embed_input(x, subject_idx, embedding_override)
        cache["override"] = embedding_override is not None
        cache["inputs"] = [x0]
        cache["pre"] = []
        cache["masks"] = []

        a = x0
        for layer in range(cfg.n_layers):
            z = conv1d_forward(
                a, self.params[f"conv{layer}_w"], self._bias(f"conv{layer}_b"),
                dilation=cfg.dilations[layer],
            )
            act, _ = _ACT[cfg.layer_activation(layer)]
            h = act(z)
            h, m = dropout(h, cfg.dropout, rng, mode)
            cache["pre"].append(z)
            cache["masks"].append(m)
            if layer + 1 < cfg.n_layers:
                cache["inputs"].append(h)
            a = h

        pooled = temporal_downsample(a, cfg.receptive_field, cfg.downsample)
        flat = pooled.reshape(a.shape[0], -1)
        cache["conv_out"] = a
        cache["flat"] = flat

        z1 = flat @ self.params["fc1_w"].T
        if cfg.use_bias:
            z1 = z1 + self.params["fc1_b"]
        act, _ = _ACT[cfg.activation]
        h1 = act(z1)
        h1d, m_fc = dropout(h1, cfg.dropout, rng, mode)
        logits = h1d @ self.params["fc2_w"].T
        if cfg.use_bias:
            logits = logits + self.params["fc2_b"]
        cache["z1"] = z1
        cache["h1d"] = h1d
        cache["mask_fc"] = m_fc

        if return_cache:
            return logits, cache
        return logits

    def backward(self, dlogits, cache) -> dict:
        """Reverse-mode gradients for every parameter, shape-matched."""
        cfg = self.config
        grads = {}
        dlogits = np.asarray(dlogits, dtype=self.dtype)

        grads["fc2_w"] = dlogits.T @ cache["h1d"]
        if cfg.use_bias:
            grads["fc2_b"] = dlogits.sum(axis=0)
        d_h1 = dlogits @ self.params["fc2_w"]
        if cache["mask_fc"] is not None:
            d_h1 = d_h1 * cache["mask_fc"]
        _, dact = _ACT[cfg.activation]
        d_z1 = d_h1 * dact(cache["z1"])
        grads["fc1_w"] = d_z1.T @ cache["flat"]
        if cfg.use_bias:
            grads["fc1_b"] = d_z1.sum(axis=0)
        d_flat = d_z1 @ self.params["fc1_w"]

        n = d_flat.shape[0]
        rf = cfg.receptive_field
        d_pooled = d_flat.reshape(n, cfg.hidden_channels, cfg.n_pooled)
        if cfg.downsample == "mean":
            d_a = np.repeat(d_pooled, rf, axis=2) / self.dtype.type(rf)
        else:
            d_a = np.zeros_like(cache["conv_out"])
            d_a[:, :, ::rf] = d_pooled

        for layer in reversed(range(cfg.n_layers)):
            mask = cache["masks"][layer]
            if mask is not None:
                d_a = d_a * mask
            _, dact = _ACT[cfg.layer_activation(layer)]
            d_z = d_a * dact(cache["pre"][layer])
            dx, dw, db = conv1d_backward(
                cache["inputs"][layer],
                self.params[f"conv{layer}_w"],
                cfg.dilations[layer],
                d_z,
            )
            grads[f"conv{layer}_w"] = dw
            if cfg.use_bias:
                grads[f"conv{layer}_b"] = db
            d_a = dx

        if cfg.embedding_size > 0:
            grads["embedding"] = np.zeros_like(self.params["embedding"])
            if not cache["override"] and cache["subject_idx"] is not None:
                d_rows = d_a[:, cfg.n_channels :, :].sum(axis=2)
                np.add.at(grads["embedding"], cache["subject_idx"], d_rows)

        return {k: grads[k] for k in self.params}  # parameter declaration order

    def loss_and_grads(self, x, labels, subject_idx=None, rng=None):
        logits, cache = self.forward(
            x, subject_idx, mode="train", rng=rng, return_cache=True
        )
        loss, dlogits = cross_entropy(logits, labels)
        return loss, self.backward(dlogits, cache), logits

    def predict(self, x, subject_idx=None, batch_size: int = 256) -> np.ndarray:
        """Eval-mode argmax class predictions, computed in batches."""
        x = np.asarray(x)
        out = np.empty(x.shape[0], dtype=np.int64)
        for lo in range(0, x.shape[0], batch_size):
            hi = min(lo + batch_size, x.shape[0])
            sub = None if subject_idx is None else np.asarray(subject_idx)[lo:hi]
            logits = self.forward(x[lo:hi], sub, mode="eval")
            out[lo:hi] = logits.argmax(axis=1)
        return out

    def conv_activations(self, x, subject_idx=None, layer: int | None = None,
                         embedding_override=None, pre_activation: bool = False):
        """Eval-mode activations of one conv layer (default: last)."""
        cfg = self.config
        if layer is None:
            layer = cfg.n_layers - 1
        if not 0 <= layer < cfg.n_layers:
            raise ValueError(f"layer {layer} out of range [0, {cfg.n_layers})")
        x = np.ascontiguousarray(np.asarray(x, dtype=self.dtype))
        if x.ndim == 2:
            x = x[None]
        a = self._embed_input(x, subject_idx, embedding_override)
        for lidx in range(layer + 1):
            z = conv1d_forward(
                a, self.params[f"conv{lidx}_w"], self._bias(f"conv{lidx}_b"),
                dilation=cfg.dilations[lidx],
            )
            act, _ = _ACT[cfg.layer_activation(lidx)]
            a = act(z)
            if lidx == layer and pre_activation:
                return z
        return a
