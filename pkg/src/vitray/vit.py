"""Vision Transformer classifier built on :mod:`vitray.tensor`.

Parameters live in a flat, ordered ``dict[str, np.ndarray]`` whose names and
shapes come from :func:`param_shapes`; linear layers use the ``x @ W + b``
convention, so a weight has shape ``(in, out)``.

Encoder blocks are pre-norm::

    z' = z + MHA(LN1(z))
    z'' = z' + FFN(LN2(z'))       FFN = Linear -> GELU -> Linear

and the CLS token (position 0) also receives positional row 0. A final
LayerNorm precedes the classification head.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Mapping

import numpy as np

from . import rng
from . import tensor as T
from .errors import ContractError, ShapeError
from .tensor import Tensor

ViTParams = dict  # name -> np.ndarray, ordered as param_shapes()


@dataclass(frozen=True)
class ModelConfig:
    image_size: int = 32
    patch_size: int = 8
    embed_dim: int = 64
    num_layers: int = 2
    num_heads: int = 4
    ffn_dim: int = 128
    num_classes: int = 2
    in_channels: int = 3
    layer_norm_eps: float = 1e-6

    def __post_init__(self):
        for name in ("image_size", "patch_size", "embed_dim", "num_layers", "num_heads", "ffn_dim", "num_classes", "in_channels"):
            if getattr(self, name) < 1:
                raise ContractError(f"{name} must be >= 1")
        if self.image_size % self.patch_size:
            raise ContractError(f"image_size {self.image_size} is not divisible by patch_size {self.patch_size}")
        if self.embed_dim % self.num_heads:
            raise ContractError(f"embed_dim {self.embed_dim} is not divisible by num_heads {self.num_heads}")
        if self.layer_norm_eps <= 0:
            raise ContractError("layer_norm_eps must be positive")

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.grid**2

    @property
    def seq_len(self) -> int:
        return self.num_patches + 1

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.num_heads

    @property
    def patch_dim(self) -> int:
        return self.patch_size**2 * self.in_channels

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "ModelConfig":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})

    @classmethod
    def preset(cls, name: str) -> "ModelConfig":
        try:
            return PRESETS[name]
        except KeyError:
            raise ContractError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None


PRESETS = {
    "paper": ModelConfig(224, 16, 768, 12, 12, 3072, 2),
    "tiny": ModelConfig(32, 8, 64, 2, 4, 128, 2),
}

_LAYER_SHAPES = (
    ("ln1.gamma", "D"),
    ("ln1.beta", "D"),
    ("attn.wq.weight", "DD"),
    ("attn.wq.bias", "D"),
    ("attn.wk.weight", "DD"),
    ("attn.wk.bias", "D"),
    ("attn.wv.weight", "DD"),
    ("attn.wv.bias", "D"),
    ("attn.wo.weight", "DD"),
    ("attn.wo.bias", "D"),
    ("ln2.gamma", "D"),
    ("ln2.beta", "D"),
    ("ffn.fc1.weight", "DF"),
    ("ffn.fc1.bias", "F"),
    ("ffn.fc2.weight", "FD"),
    ("ffn.fc2.bias", "D"),
)


def param_shapes(config: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    D, F = config.embed_dim, config.ffn_dim
    dims = {"D": D, "F": F}
    shapes = [
        ("patch_embed.weight", (config.patch_dim, D)),
        ("patch_embed.bias", (D,)),
        ("cls_token", (D,)),
        ("pos_embed", (config.seq_len, D)),
    ]
    for i in range(config.num_layers):
        shapes += [(f"layers.{i}.{name}", tuple(dims[c] for c in code)) for name, code in _LAYER_SHAPES]
    shapes += [
        ("norm.gamma", (D,)),
        ("norm.beta", (D,)),
        ("head.weight", (D, config.num_classes)),
        ("head.bias", (config.num_classes,)),
    ]
    return shapes


def count_params(config: ModelConfig) -> int:
    return sum(math.prod(shape) for _, shape in param_shapes(config))


def _trunc_normal(gen: np.random.Generator, shape, std=0.02, bound=2.0) -> np.ndarray:
    out = gen.normal(0.0, std, size=shape)
    bad = np.abs(out) >= bound * std
    while bad.any():
        out[bad] = gen.normal(0.0, std, size=int(bad.sum()))
        bad = np.abs(out) >= bound * std
    return out


def init_params(config: ModelConfig, seed: int) -> ViTParams:
    """Weights ~ N(0, 0.02) truncated at 2 sigma; LN gains 1; everything else 0."""
    gen = rng.numpy_generator(seed, rng.STREAM_INIT)
    params = {}
    for name, shape in param_shapes(config):
        if name.endswith(".weight"):
            params[name] = _trunc_normal(gen, shape)
        elif name.endswith(".gamma"):
            params[name] = np.ones(shape)
        else:
            params[name] = np.zeros(shape)
    return params


def validate_params(params: Mapping[str, np.ndarray], config: ModelConfig) -> None:
    """Raise :class:`ShapeError` naming the first tensor that disagrees with ``config``."""
    for name, shape in param_shapes(config):
        if name not in params:
            raise ShapeError(f"missing parameter tensor {name!r}")
        got = tuple(np.shape(params[name]))
        if got != shape:
            raise ShapeError(f"parameter {name!r} has shape {got}, expected {shape}")
    extra = set(params) - {name for name, _ in param_shapes(config)}
    if extra:
        raise ShapeError(f"unexpected parameter tensor {sorted(extra)[0]!r}")


def as_tensors(params: Mapping[str, np.ndarray], requires_grad: bool = False) -> dict[str, Tensor]:
    return {k: v if isinstance(v, Tensor) else Tensor(v, requires_grad) for k, v in params.items()}


# -- model pieces -------------------------------------------------------------


def patchify(images: np.ndarray, patch_size: int) -> np.ndarray:
    """Split ``(C, H, W)`` or ``(B, C, H, W)`` images into flattened patches.

    Patches run row-major over the grid; each patch is flattened channel-major,
    then row-major inside the patch. Output is ``(N, C*P*P)`` (or batched).
    """
    images = np.asarray(images, dtype=np.float64)
    single = images.ndim == 3
    if single:
        images = images[None]
    if images.ndim != 4:
        raise ContractError(f"patchify expects (C, H, W) or (B, C, H, W), got {images.shape}")
    b, c, h, w = images.shape
    p = patch_size
    if h != w or h % p:
        raise ContractError(f"image {h}x{w} is not square or not divisible by patch size {p}")
    g = h // p
    out = images.reshape(b, c, g, p, g, p).transpose(0, 2, 4, 1, 3, 5).reshape(b, g * g, c * p * p)
    return out[0] if single else out


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    return x @ weight + bias


def embed(patches, params: Mapping[str, Tensor]) -> Tensor:
    """Project patches and assemble ``[cls + p0, E_1 + p1, ..., E_N + pN]``."""
    patches = T.as_tensor(patches)
    if patches.ndim == 2:
        patches = patches.reshape(1, *patches.shape)
    w = params["patch_embed.weight"]
    if patches.shape[-1] != w.shape[0]:
        raise ShapeError(f"patch length {patches.shape[-1]} does not match projection {w.shape}")
    b, n, _ = patches.shape
    d = w.shape[1]
    pos = params["pos_embed"]
    if pos.shape != (n + 1, d):
        raise ShapeError(f"pos_embed {pos.shape} does not fit {n} patches of width {d}")
    tokens = linear(patches, w, params["patch_embed.bias"])
    cls = T.broadcast_to(params["cls_token"].reshape(1, 1, d), (b, 1, d))
    return T.concat([cls, tokens], axis=1) + pos


def attention(q: Tensor, k: Tensor, v: Tensor, trace: list | None = None) -> Tensor:
    """``softmax(q k^T / sqrt(d_k)) v`` over the last two axes."""
    q, k, v = T.as_tensor(q), T.as_tensor(k), T.as_tensor(v)
    if q.shape[-1] != k.shape[-1]:
        raise ShapeError(f"attention: query {q.shape} and key {k.shape} widths differ")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"attention: key {k.shape} and value {v.shape} lengths differ")
    scores = (q @ T.swap_last(k)) / math.sqrt(q.shape[-1])
    weights = T.softmax(scores, axis=-1)
    if trace is not None:
        trace.append(weights.data)
    return weights @ v


def multi_head_attention(x: Tensor, lp: Mapping[str, Tensor], num_heads: int, trace: list | None = None) -> Tensor:
    b, t, d = x.shape
    dk = d // num_heads

    def heads(name):
        y = linear(x, lp[f"attn.{name}.weight"], lp[f"attn.{name}.bias"])
        return T.transpose(y.reshape(b, t, num_heads, dk), (0, 2, 1, 3))

    out = attention(heads("wq"), heads("wk"), heads("wv"), trace)
    merged = T.transpose(out, (0, 2, 1, 3)).reshape(b, t, d)
    return linear(merged, lp["attn.wo.weight"], lp["attn.wo.bias"])


def encoder_layer(z: Tensor, lp: Mapping[str, Tensor], config: ModelConfig, trace: list | None = None) -> Tensor:
    if z.shape[-1] != lp["ln1.gamma"].shape[0]:
        raise ShapeError(f"token width {z.shape[-1]} does not match layer width {lp['ln1.gamma'].shape[0]}")
    eps = config.layer_norm_eps
    h = T.layer_norm(z, lp["ln1.gamma"], lp["ln1.beta"], eps)
    z = z + multi_head_attention(h, lp, config.num_heads, trace)
    h = T.layer_norm(z, lp["ln2.gamma"], lp["ln2.beta"], eps)
    h = T.gelu(linear(h, lp["ffn.fc1.weight"], lp["ffn.fc1.bias"]))
    return z + linear(h, lp["ffn.fc2.weight"], lp["ffn.fc2.bias"])


def layer_params(params: Mapping[str, Tensor], i: int) -> dict[str, Tensor]:
    prefix = f"layers.{i}."
    return {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}


def forward(images, params: Mapping, config: ModelConfig, trace: list | None = None) -> Tensor:
    """Class probabilities ``(B, num_classes)`` for a ``(B, C, H, W)`` batch.

    ``params`` may hold arrays (inference) or tensors (training). When
    ``trace`` is a list, each layer appends its ``(B, heads, T, T)`` attention
    weights.
    """
    images = np.asarray(images, dtype=np.float64)
    expected = (config.in_channels, config.image_size, config.image_size)
    if images.ndim != 4 or images.shape[1:] != expected:
        raise ShapeError(f"batch shape {images.shape} does not match (B, {', '.join(map(str, expected))})")
    params = as_tensors(params)
    z = embed(patchify(images, config.patch_size), params)
    for i in range(config.num_layers):
        z = encoder_layer(z, layer_params(params, i), config, trace)
    z = T.layer_norm(z, params["norm.gamma"], params["norm.beta"], config.layer_norm_eps)
    logits = linear(z[:, 0, :], params["head.weight"], params["head.bias"])
    return T.softmax(logits, axis=-1)
