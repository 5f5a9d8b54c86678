"""Overlapping patch grid: patchify/scatter, mask reductions, latent blending.

The latent is split into kernel x kernel windows on a strided grid (default
4/2/1 overlap scheme). Tokens are flattened windows, channel-major. A single
cell-index table drives patchify, scatter-back, and the receptive-field mask
reduction, so the three can never disagree on geometry.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class PatchGeometry:
    latent_h: int
    latent_w: int
    kernel: int = 4
    stride: int = 2
    pad: int = 1

    def __post_init__(self):
        if min(self.latent_h, self.latent_w, self.kernel, self.stride) < 1 or self.pad < 0:
            raise ConfigurationError("patch geometry fields must be positive (pad >= 0)")
        if self.stride > self.kernel:
            raise ConfigurationError("stride > kernel leaves latent cells uncovered")
        for side, grid in ((self.latent_h, self.grid_h), (self.latent_w, self.grid_w)):
            if grid < 1:
                raise ConfigurationError("latent too small for this kernel/stride/pad")
            if (grid - 1) * self.stride - self.pad + self.kernel < side:
                raise ConfigurationError(
                    "patch grid does not cover the full latent; adjust kernel/stride/pad"
                )

    @property
    def grid_h(self) -> int:
        return (self.latent_h + 2 * self.pad - self.kernel) // self.stride + 1

    @property
    def grid_w(self) -> int:
        return (self.latent_w + 2 * self.pad - self.kernel) // self.stride + 1

    @property
    def n_tokens(self) -> int:
        return self.grid_h * self.grid_w

    @property
    def window(self) -> int:
        return self.kernel * self.kernel


@functools.lru_cache(maxsize=32)
def cell_index_table(geom: PatchGeometry) -> np.ndarray:
    """(N, kernel^2) flat latent-cell index per token window element, -1 where
    the window hangs over the padded border."""
    ky, kx = np.meshgrid(np.arange(geom.kernel), np.arange(geom.kernel), indexing="ij")
    gy, gx = np.meshgrid(np.arange(geom.grid_h), np.arange(geom.grid_w), indexing="ij")
    ys = gy.reshape(-1, 1) * geom.stride - geom.pad + ky.reshape(1, -1)
    xs = gx.reshape(-1, 1) * geom.stride - geom.pad + kx.reshape(1, -1)
    inside = (ys >= 0) & (ys < geom.latent_h) & (xs >= 0) & (xs < geom.latent_w)
    flat = ys * geom.latent_w + xs
    flat[~inside] = -1
    return flat.astype(np.int64)


@dataclass(frozen=True)
class MaskSpec:
    """A mask at its three working resolutions."""

    full: np.ndarray    # (h, w) uint8, pixel space
    latent: np.ndarray  # (latent_h, latent_w) uint8, nearest reduction
    token: np.ndarray   # (grid_h, grid_w) uint8, receptive-field max

    @property
    def k(self) -> int:
        return int(self.token.sum())


@dataclass(frozen=True)
class HoleIndexSet:
    """Token coordinates with m_i = 1, strict row-major order."""

    coords: np.ndarray  # (k, 2) int64 rows of (row, col)
    grid_h: int
    grid_w: int

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "coords", c)
        if c.size:
            if c[:, 0].min() < 0 or c[:, 1].min() < 0 or \
               c[:, 0].max() >= self.grid_h or c[:, 1].max() >= self.grid_w:
                raise ValueError("token coordinates outside the grid")
            flat = c[:, 0] * self.grid_w + c[:, 1]
            if np.any(np.diff(flat) <= 0):
                raise ValueError("hole indices must be strictly increasing row-major")

    @property
    def k(self) -> int:
        return int(self.coords.shape[0])

    @property
    def flat(self) -> np.ndarray:
        return self.coords[:, 0] * self.grid_w + self.coords[:, 1]


def hole_indices(token_mask: np.ndarray) -> HoleIndexSet:
    token_mask = np.asarray(token_mask)
    rows, cols = np.nonzero(token_mask)
    coords = np.stack([rows, cols], axis=1) if rows.size else np.zeros((0, 2), np.int64)
    return HoleIndexSet(coords, token_mask.shape[0], token_mask.shape[1])


def _check_binary(m: np.ndarray, name: str) -> np.ndarray:
    m = np.asarray(m)
    if not np.isin(m, (0, 1)).all():
        raise ValueError(f"{name} must be binary (0/1)")
    return m.astype(np.uint8)


def patchify(latent: np.ndarray, geom: PatchGeometry,
             mask_channel: np.ndarray | None = None) -> np.ndarray:
    """Flatten every kernel window into a token vector, (N, C * kernel^2),
    channel-major within the token, zeros where the window leaves the latent.
    mask_channel, when given, rides along as one extra channel."""
    latent = np.asarray(latent)
    if latent.ndim != 3 or latent.shape[1:] != (geom.latent_h, geom.latent_w):
        raise ValueError(f"latent shape {latent.shape} does not match geometry")
    planes = latent
    if mask_channel is not None:
        if mask_channel.shape != (geom.latent_h, geom.latent_w):
            raise ValueError("mask channel spatial dims do not match geometry")
        planes = np.concatenate([latent, mask_channel[None].astype(latent.dtype)], axis=0)
    idx = cell_index_table(geom)
    flat = planes.reshape(planes.shape[0], -1)
    gathered = flat[:, np.clip(idx, 0, None)]          # (C, N, k*k)
    gathered[:, idx < 0] = 0
    return np.ascontiguousarray(gathered.transpose(1, 0, 2).reshape(geom.n_tokens, -1))


def scatter_unpatchify(hole_tokens: np.ndarray, idx: HoleIndexSet,
                       geom: PatchGeometry) -> np.ndarray:
    """Spread hole-token windows back onto the latent; overlapping
    contributions are averaged by per-cell coverage count, uncovered cells
    stay exactly zero."""
    if idx.grid_h != geom.grid_h or idx.grid_w != geom.grid_w:
        raise ValueError("hole index grid does not match geometry")
    hole_tokens = np.asarray(hole_tokens)
    if hole_tokens.ndim != 2 or hole_tokens.shape[0] != idx.k:
        raise ValueError("token count does not match hole index set")
    if hole_tokens.shape[1] % geom.window != 0:
        raise ValueError("token width is not a multiple of kernel^2")
    c = hole_tokens.shape[1] // geom.window

    ncells = geom.latent_h * geom.latent_w
    out = np.zeros((c, ncells), dtype=np.float64)
    count = np.zeros(ncells, dtype=np.int64)
    if idx.k:
        cells = cell_index_table(geom)[idx.flat]       # (k, k*k)
        valid = cells >= 0
        target = cells[valid]
        vals = hole_tokens.reshape(idx.k, c, geom.window).astype(np.float64)
        for ch in range(c):
            np.add.at(out[ch], target, vals[:, ch, :][valid])
        np.add.at(count, target, 1)
    covered = count > 0
    out[:, covered] /= count[covered]
    return out.reshape(c, geom.latent_h, geom.latent_w).astype(hole_tokens.dtype)


def reduce_mask(full_mask: np.ndarray, geom: PatchGeometry) -> MaskSpec:
    """Pixel mask -> latent mask (nearest) -> token mask (window max).

    The codec factor is inferred from the shape ratio; a token is masked iff
    any latent cell under its receptive field is masked."""
    full = _check_binary(full_mask, "mask")
    h, w = full.shape
    if h % geom.latent_h or w % geom.latent_w:
        raise ValueError(f"mask {full.shape} not an integer multiple of latent dims")
    fy, fx = h // geom.latent_h, w // geom.latent_w
    latent = full[fy // 2::fy, fx // 2::fx]

    idx = cell_index_table(geom)
    vals = latent.reshape(-1)[np.clip(idx, 0, None)]
    vals[idx < 0] = 0
    token = vals.max(axis=1).reshape(geom.grid_h, geom.grid_w)
    return MaskSpec(full=full, latent=np.ascontiguousarray(latent), token=token)


def blend_latent(z: np.ndarray, z_hole: np.ndarray, latent_mask: np.ndarray) -> np.ndarray:
    """Cellwise select: masked cells from z_hole, the rest copied from z."""
    z = np.asarray(z)
    if z.shape != np.asarray(z_hole).shape or z.shape[1:] != latent_mask.shape:
        raise ValueError("blend operands must share spatial dims")
    return np.where(np.asarray(latent_mask)[None] != 0, z_hole, z)
