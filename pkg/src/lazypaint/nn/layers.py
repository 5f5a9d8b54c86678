"""Transformer building blocks on top of the autodiff engine.

Two block flavors: plain pre-norm blocks for the context encoder, and
modulated blocks (per-condition shift/scale/gate on norms, zero-initialized
gates) for the diffusion decoder. All blocks accept (n, d) or batched
(B, n, d) token tensors.
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from .autodiff import (
    Tensor,
    concat,
    gelu,
    grad_enabled,
    layer_norm,
    softmax,
    take_rows,
)


def trunc_normal(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    """Normal(0, std) clipped at 2 std, the usual ViT projection init."""
    w = rng.normal(0.0, std, size=shape)
    return np.clip(w, -2.0 * std, 2.0 * std).astype(np.float32)


class Module:
    """Minimal container: tracks Tensors and sub-modules by attribute name."""

    def _walk(self, prefix: str = ""):
        for name, val in vars(self).items():
            if isinstance(val, Tensor):
                yield prefix + name, val
            elif isinstance(val, Module):
                yield from val._walk(prefix + name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item._walk(f"{prefix}{name}.{i}.")
                    elif isinstance(item, Tensor):
                        yield f"{prefix}{name}.{i}", item

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        return [(n, t) for n, t in self._walk() if t.requires_grad]

    def parameters(self) -> list[Tensor]:
        return [t for _, t in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def astype(self, dtype) -> "Module":
        for _, t in self._walk():
            t.data = t.data.astype(dtype)
        return self

    def num_parameters(self) -> int:
        return int(sum(p.data.size for p in self.parameters()))


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator | None = None,
                 std: float = 0.02, bias: bool = True):
        if std == 0.0 or rng is None:
            w = np.zeros((d_in, d_out), dtype=np.float32)
        else:
            w = trunc_normal(rng, (d_in, d_out), std)
        self.weight = Tensor(w, requires_grad=True)
        self.bias = Tensor(np.zeros(d_out, dtype=np.float32), requires_grad=True) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.weight
        if self.bias is not None:
            y = y + self.bias
        return y


class LayerNorm(Module):
    def __init__(self, dim: int, affine: bool = True, eps: float = 1e-5):
        self.eps = eps
        self.gamma = Tensor(np.ones(dim, dtype=np.float32), requires_grad=affine)
        self.beta = Tensor(np.zeros(dim, dtype=np.float32), requires_grad=affine)

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta, self.eps)


class Mlp(Module):
    def __init__(self, dim: int, hidden: int, rng: np.random.Generator):
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(gelu(self.fc1(x)))


class MultiHeadAttention(Module):
    """Self- or cross-attention. In no-grad mode the softmax core runs on the
    kernels backend (compiled when built)."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator, kv_dim: int | None = None):
        if dim % heads != 0:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        kv_dim = dim if kv_dim is None else kv_dim
        self.heads = heads
        self.head_dim = dim // heads
        self.scale = 1.0 / float(np.sqrt(self.head_dim))
        self.wq = Linear(dim, dim, rng)
        self.wk = Linear(kv_dim, dim, rng)
        self.wv = Linear(kv_dim, dim, rng)
        self.wo = Linear(dim, dim, rng)

    def _split(self, t: Tensor) -> Tensor:
        t = t.reshape(t.shape[:-1] + (self.heads, self.head_dim))
        return t.swapaxes(-2, -3)

    def __call__(self, x: Tensor, kv: Tensor | None = None) -> Tensor:
        src = x if kv is None else kv
        q = self._split(self.wq(x))
        k = self._split(self.wk(src))
        v = self._split(self.wv(src))
        if grad_enabled():
            att = softmax((q @ k.swapaxes(-1, -2)) * self.scale)
            out = att @ v
        else:
            out = Tensor(kernels.attention(q.data, k.data, v.data, self.scale))
        out = out.swapaxes(-2, -3)
        out = out.reshape(out.shape[:-2] + (self.heads * self.head_dim,))
        return self.wo(out)


class EncoderBlock(Module):
    """Pre-norm block: x + attn(ln(x)); x + mlp(ln(x))."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator, mlp_ratio: int = 4):
        self.ln1 = LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, heads, rng)
        self.ln2 = LayerNorm(dim)
        self.mlp = Mlp(dim, mlp_ratio * dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        x = x + self.attn(self.ln1(x))
        return x + self.mlp(self.ln2(x))


def _chunk_last(t: Tensor, parts: int) -> list[Tensor]:
    step = t.shape[-1] // parts
    return [t[..., i * step:(i + 1) * step] for i in range(parts)]


class ModulatedBlock(Module):
    """Pre-norm block whose norms get per-condition shift/scale and whose
    residual branches are gated; gates start at zero so a fresh block is the
    identity map. Optional cross-attention to context tokens sits between
    self-attention and the MLP."""

    def __init__(self, dim: int, heads: int, rng: np.random.Generator,
                 cross_dim: int | None = None, mlp_ratio: int = 4):
        self.ln1 = LayerNorm(dim, affine=False)
        self.attn = MultiHeadAttention(dim, heads, rng)
        self.ln2 = LayerNorm(dim, affine=False)
        self.mlp = Mlp(dim, mlp_ratio * dim, rng)
        self.modulation = Linear(dim, 6 * dim, std=0.0)
        if cross_dim is not None:
            self.ln_cross = LayerNorm(dim, affine=False)
            self.cross = MultiHeadAttention(dim, heads, rng, kv_dim=cross_dim)
        else:
            self.cross = None

    def __call__(self, x: Tensor, cond: Tensor, context: Tensor | None = None) -> Tensor:
        if not np.all(np.isfinite(x.data)):
            raise FloatingPointError("non-finite token values entering block")
        s1, sc1, g1, s2, sc2, g2 = _chunk_last(self.modulation(gelu(cond)), 6)
        h = self.ln1(x) * (sc1 + 1.0) + s1
        x = x + self.attn(h) * g1
        if self.cross is not None:
            if context is None:
                raise ValueError("block built with cross-attention needs context tokens")
            x = x + self.cross(self.ln_cross(x), context)
        h = self.ln2(x) * (sc2 + 1.0) + s2
        return x + self.mlp(h) * g2


class FinalLayer(Module):
    """Modulated norm + zero-init projection to the output channels."""

    def __init__(self, dim: int, out_dim: int):
        self.ln = LayerNorm(dim, affine=False)
        self.modulation = Linear(dim, 2 * dim, std=0.0)
        self.proj = Linear(dim, out_dim, std=0.0)

    def __call__(self, x: Tensor, cond: Tensor) -> Tensor:
        shift, scale = _chunk_last(self.modulation(gelu(cond)), 2)
        return self.proj(self.ln(x) * (scale + 1.0) + shift)


def sinusoid_embed(t: np.ndarray, dim: int, max_period: float = 10000.0) -> np.ndarray:
    """Classic frequency embedding of (possibly fractional) timesteps, (B, dim)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(max_period) * np.arange(half, dtype=np.float64) / half)
    args = t[:, None] * freqs[None, :]
    emb = np.concatenate([np.cos(args), np.sin(args)], axis=-1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros((emb.shape[0], 1))], axis=-1)
    return emb


class TimestepEmbedder(Module):
    def __init__(self, dim: int, rng: np.random.Generator, freq_dim: int = 256):
        self.freq_dim = freq_dim
        self.fc1 = Linear(freq_dim, dim, rng)
        self.fc2 = Linear(dim, dim, rng)

    def __call__(self, t: np.ndarray) -> Tensor:
        emb = sinusoid_embed(t, self.freq_dim).astype(self.fc1.weight.dtype)
        return self.fc2(gelu(self.fc1(Tensor(emb))))


class LabelEmbedder(Module):
    """Class-label table with one extra row reserved for the null label used
    by classifier-free guidance."""

    def __init__(self, num_classes: int, dim: int, rng: np.random.Generator):
        self.num_classes = num_classes
        self.table = Tensor(trunc_normal(rng, (num_classes + 1, dim)), requires_grad=True)

    @property
    def null_id(self) -> int:
        return self.num_classes

    def __call__(self, ids: np.ndarray) -> Tensor:
        ids = np.atleast_1d(np.asarray(ids, dtype=np.int64))
        if np.any(ids < 0) or np.any(ids > self.num_classes):
            raise ValueError(f"label ids must be in [0, {self.num_classes}]")
        return take_rows(self.table, ids)


def _sincos_1d(dim: int, positions: np.ndarray) -> np.ndarray:
    omega = np.arange(dim // 2, dtype=np.float64) / (dim / 2.0)
    omega = 1.0 / 10000.0**omega
    out = positions.reshape(-1)[:, None] * omega[None, :]
    return np.concatenate([np.sin(out), np.cos(out)], axis=1)


def pos_embed_2d(dim: int, grid_h: int, grid_w: int) -> np.ndarray:
    """Fixed 2-D sine/cosine position table, (grid_h * grid_w, dim), row-major."""
    if dim % 4 != 0:
        raise ValueError("2-D sincos position embedding needs dim divisible by 4")
    ys, xs = np.meshgrid(np.arange(grid_h), np.arange(grid_w), indexing="ij")
    emb_h = _sincos_1d(dim // 2, ys.astype(np.float64))
    emb_w = _sincos_1d(dim // 2, xs.astype(np.float64))
    return np.concatenate([emb_h, emb_w], axis=1).astype(np.float32)


def sequence_concat(a: Tensor, b: Tensor) -> Tensor:
    """Concatenate two token sets along the sequence axis."""
    return concat([a, b], axis=-2)
