"""Global context encoder: one ViT pass over the full masked canvas.

The encoder always processes all N grid tokens regardless of the mask;
compression happens afterwards by dropping every token whose receptive
field misses the hole. Kept tokens are bit-identical rows of the full
token set, so dropping is a strict restriction.
"""

from dataclasses import dataclass

import numpy as np

from . import nn
from .errors import ConfigurationError
from .nn import Tensor
from .patches import HoleIndexSet, MaskSpec, PatchGeometry, cell_index_table, hole_indices


@dataclass(frozen=True)
class EncoderConfig:
    geometry: PatchGeometry
    channels: int = 4
    dim: int = 64
    layers: int = 4
    heads: int = 4
    mask_factor: int = 1

    def __post_init__(self) -> None:
        if self.channels < 1 or self.dim < 1 or self.layers < 1 or self.heads < 1:
            raise ConfigurationError("encoder config values must be positive")
        if self.dim % self.heads:
            raise ConfigurationError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.mask_factor < 1:
            raise ConfigurationError("mask_factor must be >= 1")

    @property
    def token_count(self) -> int:
        return self.geometry.n_tokens

    @property
    def patch_dim(self) -> int:
        # one extra channel holds the downsampled mask
        return (self.channels + 1) * self.geometry.kernel * self.geometry.kernel


def toy_config(geometry: PatchGeometry, channels: int = 4, mask_factor: int = 1) -> EncoderConfig:
    return EncoderConfig(geometry, channels=channels, dim=64, layers=4, heads=4,
                         mask_factor=mask_factor)


def full_scale_config(channels: int = 4, layers: int = 24) -> EncoderConfig:
    geometry = PatchGeometry(latent_h=128, latent_w=128)
    return EncoderConfig(geometry, channels=channels, dim=1152, layers=layers,
                         heads=16, mask_factor=8)


@dataclass(frozen=True)
class ContextTokens:
    """Compressed context: the k hole tokens plus their grid coordinates."""

    tokens: Tensor
    idx: HoleIndexSet

    def __post_init__(self) -> None:
        if self.tokens.ndim != 2 or self.tokens.shape[0] != self.idx.k:
            raise ValueError(
                f"token rows {self.tokens.shape} do not match {self.idx.k} hole indices")

    @property
    def k(self) -> int:
        return self.idx.k

    @property
    def dim(self) -> int:
        return int(self.tokens.shape[1])


class ContextEncoder(nn.Module):
    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        self.cfg = cfg
        f = cfg.mask_factor
        # learned mask downsampler: a kernel-f stride-f conv expressed as a
        # matmul over non-overlapping f*f windows
        self.mask_conv_w = Tensor(
            nn.trunc_normal(rng, (f * f, 1), 0.02), requires_grad=True)
        self.mask_conv_b = Tensor(np.zeros((1,), np.float32), requires_grad=True)
        self.embed = nn.Linear(cfg.patch_dim, cfg.dim, rng)
        self.pos = Tensor(nn.pos_embed_2d(cfg.dim, cfg.geometry.grid_h, cfg.geometry.grid_w))
        self.blocks = [nn.EncoderBlock(cfg.dim, cfg.heads, rng) for _ in range(cfg.layers)]
        self.norm = nn.LayerNorm(cfg.dim)

    def _mask_channel(self, full_mask: np.ndarray) -> Tensor:
        cfg = self.cfg
        f = cfg.mask_factor
        lh, lw = cfg.geometry.latent_h, cfg.geometry.latent_w
        if full_mask.shape != (lh * f, lw * f):
            raise ValueError(
                f"mask shape {full_mask.shape} does not match latent {lh}x{lw} at factor {f}")
        windows = full_mask.astype(np.float32).reshape(lh, f, lw, f)
        windows = windows.swapaxes(1, 2).reshape(lh * lw, f * f)
        return Tensor(windows) @ self.mask_conv_w + self.mask_conv_b

    def encode(self, z: np.ndarray, mask: MaskSpec) -> Tensor:
        """Full token set for a masked latent canvas, shape (N, dim)."""
        cfg = self.cfg
        geom = cfg.geometry
        lh, lw = geom.latent_h, geom.latent_w
        if z.shape != (cfg.channels, lh, lw):
            raise ValueError(f"latent shape {z.shape}, expected {(cfg.channels, lh, lw)}")
        if mask.latent.shape != (lh, lw):
            raise ValueError(f"mask latent shape {mask.latent.shape}, expected {(lh, lw)}")

        # the hole region carries no signal by construction; re-zero so that
        # stale pixels under the mask can never leak into the tokens
        z_vis = z.astype(np.float32) * (1.0 - mask.latent.astype(np.float32))
        flat = Tensor(z_vis.reshape(cfg.channels, lh * lw))
        mask_chan = self._mask_channel(mask.full).swapaxes(0, 1)
        stack = nn.concat([flat, mask_chan], axis=0)

        # gather patch windows through a zero pad slot at index L
        pad = Tensor(np.zeros((cfg.channels + 1, 1), np.float32))
        padded = nn.concat([stack, pad], axis=1).swapaxes(0, 1)
        table = cell_index_table(geom)
        idx = np.where(table < 0, lh * lw, table).reshape(-1)
        n, win = table.shape
        g = nn.take_rows(padded, idx).reshape(n, win, cfg.channels + 1)
        g = g.swapaxes(1, 2).reshape(n, cfg.patch_dim)

        x = self.embed(g) + self.pos
        for blk in self.blocks:
            x = blk(x)
        return self.norm(x)


def drop_tokens(all_tokens: Tensor, mask: MaskSpec) -> ContextTokens:
    """Restrict the full token set to the hole tokens, order preserved."""
    idx = hole_indices(mask.token)
    if all_tokens.ndim != 2 or all_tokens.shape[0] != mask.token.size:
        raise ValueError(
            f"token set {all_tokens.shape} does not cover a {mask.token.shape} grid")
    return ContextTokens(tokens=nn.take_rows(all_tokens, idx.flat), idx=idx)
