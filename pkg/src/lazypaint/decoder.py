"""Diffusion-transformer decoder over hole tokens, with every conditioning
variant and both regeneration baselines.

Lazy variants touch only the k hole token rows per step. The two regenerate
baselines reproduce the classic inpainting recipes: a channel-concat model
over the full canvas, and the same model applied to a fixed-resolution
square crop around the hole.
"""

from dataclasses import dataclass

import numpy as np
from PIL import Image

from . import nn
from .codec import LatentCodec, from_diffusion_space, to_diffusion_space
from .diffusion import NoiseSchedule, SamplerOpts, sample
from .encoder import ContextTokens
from .errors import ConfigurationError
from .nn import Tensor
from .patches import (
    PatchGeometry,
    blend_latent,
    hole_indices,
    patchify,
    reduce_mask,
    scatter_unpatchify,
)

LAZY_VARIANTS = ("concat_hidden", "concat_length", "weighted_sum",
                 "xattn_compressed", "xattn_full")
VARIANTS = LAZY_VARIANTS + ("regenerate_image", "regenerate_crop")


@dataclass(frozen=True)
class DecoderConfig:
    variant: str
    geometry: PatchGeometry
    channels: int = 4
    context_dim: int = 64
    dim: int = 64
    layers: int = 4
    heads: int = 4
    num_classes: int = 4

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ConfigurationError(f"unknown variant {self.variant!r}")
        if self.dim % self.heads:
            raise ConfigurationError(f"dim {self.dim} not divisible by heads {self.heads}")
        if min(self.channels, self.context_dim, self.dim, self.layers,
               self.heads, self.num_classes) < 1:
            raise ConfigurationError("decoder config values must be positive")

    @property
    def window(self) -> int:
        return self.geometry.kernel * self.geometry.kernel

    @property
    def token_dim(self) -> int:
        return self.channels * self.window

    @property
    def null_label(self) -> int:
        return self.num_classes


# layer/width pairs per variant; the lighter concat_length and
# xattn_compressed stacks offset their longer sequences / extra attention
_PAPER_TABLE = {
    "concat_hidden": (28, 1152), "weighted_sum": (28, 1152),
    "concat_length": (24, 1024), "xattn_compressed": (26, 1152),
    "xattn_full": (28, 1152), "regenerate_image": (28, 1152),
}
_TOY_TABLE = {
    "concat_hidden": (4, 64), "weighted_sum": (4, 64),
    "concat_length": (3, 56), "xattn_compressed": (4, 60),
    "xattn_full": (4, 64), "regenerate_image": (4, 64),
}


def full_scale_config(variant: str, num_classes: int = 1000) -> DecoderConfig:
    if variant not in _PAPER_TABLE:
        raise ConfigurationError(f"no full-scale table entry for {variant!r}")
    layers, dim = _PAPER_TABLE[variant]
    return DecoderConfig(variant, PatchGeometry(latent_h=128, latent_w=128),
                         channels=4, context_dim=1152, dim=dim, layers=layers,
                         heads=16, num_classes=num_classes)


def toy_config(variant: str, geometry: PatchGeometry, channels: int = 4,
               context_dim: int = 64, num_classes: int = 4) -> DecoderConfig:
    if variant not in _TOY_TABLE:
        raise ConfigurationError(f"no toy table entry for {variant!r}")
    layers, dim = _TOY_TABLE[variant]
    return DecoderConfig(variant, geometry, channels=channels,
                         context_dim=context_dim, dim=dim, layers=layers,
                         heads=4, num_classes=num_classes)


@dataclass(frozen=True)
class ConditionBundle:
    """Everything the decoder conditions on for one denoising step."""

    t: int
    label: int
    context: ContextTokens | None = None
    context_all: Tensor | None = None
    weight: Tensor | None = None
    image_tokens: np.ndarray | None = None
    mask_tokens: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.t < 0:
            raise ValueError(f"timestep must be non-negative, got {self.t}")
        if self.label < 0:
            raise ValueError(f"label must be non-negative, got {self.label}")


class LazyDecoder(nn.Module):
    def __init__(self, cfg: DecoderConfig, rng: np.random.Generator):
        if cfg.variant == "regenerate_crop":
            raise ConfigurationError(
                "regenerate_crop is a pipeline around a regenerate_image model; "
                "build that model and call regenerate_crop_pipeline")
        self.cfg = cfg
        p = cfg.token_dim
        in_dim = 2 * p + cfg.window if cfg.variant == "regenerate_image" else p
        self.embed = nn.Linear(in_dim, cfg.dim, rng)
        self.pos = Tensor(nn.pos_embed_2d(cfg.dim, cfg.geometry.grid_h, cfg.geometry.grid_w))
        self.t_embedder = nn.TimestepEmbedder(cfg.dim, rng)
        self.label_embedder = nn.LabelEmbedder(cfg.num_classes, cfg.dim, rng)

        if cfg.variant == "concat_hidden":
            self.proj_context = nn.Linear(cfg.dim + cfg.context_dim, cfg.dim, rng)
        elif cfg.variant == "concat_length":
            self.proj_context = nn.Linear(cfg.context_dim, cfg.dim, rng)
        elif cfg.variant == "weighted_sum":
            # strictly linear so a zero weight and a zeroed context agree
            self.proj_context = nn.Linear(cfg.context_dim, cfg.dim, rng, bias=False)
            self.ws_weight = Tensor(np.zeros(cfg.dim, np.float32), requires_grad=True)

        def crossed(i: int) -> int | None:
            if cfg.variant == "xattn_full":
                return cfg.context_dim
            if cfg.variant == "xattn_compressed" and i == 0:
                return cfg.context_dim
            return None

        self.blocks = [nn.ModulatedBlock(cfg.dim, cfg.heads, rng, cross_dim=crossed(i))
                       for i in range(cfg.layers)]
        self.final = nn.FinalLayer(cfg.dim, 2 * p)
        self.last_rows = 0

    def _cond_vec(self, t: int, label: int) -> Tensor:
        return self.t_embedder(np.array([t], np.float64)) + self.label_embedder([label])

    def _run(self, x: Tensor, cond_vec: Tensor, context: Tensor | None,
             keep: int) -> tuple[Tensor, Tensor]:
        self.last_rows = int(x.shape[0])
        for blk in self.blocks:
            x = blk(x, cond_vec, context=context if blk.cross is not None else None)
        out = self.final(x[:keep] if keep != x.shape[0] else x, cond_vec)
        p = self.cfg.token_dim
        return out[:, :p], out[:, p:]

    def backbone_forward(self, x_t: Tensor, t: int, label: int,
                         idx_flat: np.ndarray) -> tuple[Tensor, Tensor]:
        """Bare DiT forward with no context wiring, for equivalence checks."""
        x = self.embed(x_t) + nn.take_rows(self.pos, idx_flat)
        return self._run(x, self._cond_vec(t, label), None, int(x.shape[0]))

    def denoise_forward(self, x_t: Tensor, cond: ConditionBundle) -> tuple[Tensor, Tensor]:
        """Predict (eps, raw variance) per token, both shaped like x_t."""
        cfg = self.cfg
        k = int(x_t.shape[0])
        if x_t.ndim != 2 or x_t.shape[1] != cfg.token_dim:
            raise ValueError(
                f"noise tokens {x_t.shape}, expected (k, {cfg.token_dim})")
        cond_vec = self._cond_vec(cond.t, cond.label)

        if cfg.variant == "regenerate_image":
            if cond.image_tokens is None or cond.mask_tokens is None:
                raise ValueError("regenerate_image needs image_tokens and mask_tokens")
            n = cfg.geometry.n_tokens
            if k != n:
                raise ValueError(f"regenerate_image runs all {n} tokens, got {k}")
            if cond.image_tokens.shape != (n, cfg.token_dim):
                raise ValueError(f"image_tokens shape {cond.image_tokens.shape}")
            if cond.mask_tokens.shape != (n, cfg.window):
                raise ValueError(f"mask_tokens shape {cond.mask_tokens.shape}")
            stacked = nn.concat(
                [x_t, Tensor(cond.image_tokens.astype(np.float32)),
                 Tensor(cond.mask_tokens.astype(np.float32))], axis=1)
            x = self.embed(stacked) + self.pos
            return self._run(x, cond_vec, None, n)

        if cond.context is None:
            raise ValueError(f"variant {cfg.variant} needs compressed context tokens")
        ctx = cond.context
        if ctx.k != k:
            raise ValueError(f"{k} noise tokens vs {ctx.k} context tokens")
        if ctx.dim != cfg.context_dim:
            raise ValueError(f"context dim {ctx.dim}, expected {cfg.context_dim}")

        x = self.embed(x_t) + nn.take_rows(self.pos, ctx.idx.flat)

        if cfg.variant == "concat_hidden":
            x = self.proj_context(nn.concat([x, ctx.tokens], axis=1))
            return self._run(x, cond_vec, None, k)
        if cfg.variant == "weighted_sum":
            w = cond.weight if cond.weight is not None else self.ws_weight
            x = x + w * self.proj_context(ctx.tokens)
            return self._run(x, cond_vec, None, k)
        if cfg.variant == "concat_length":
            seq = nn.sequence_concat(x, self.proj_context(ctx.tokens))
            return self._run(seq, cond_vec, None, k)
        if cfg.variant == "xattn_compressed":
            return self._run(x, cond_vec, ctx.tokens, k)
        # xattn_full attends to the uncompressed token set in every block
        if cond.context_all is None:
            raise ValueError("xattn_full needs the full token set in context_all")
        if cond.context_all.shape[1] != cfg.context_dim:
            raise ValueError(f"context_all dim {cond.context_all.shape}")
        return self._run(x, cond_vec, cond.context_all, k)


def init_identity(decoder: LazyDecoder) -> None:
    """Make the prepended projection pass noise tokens through untouched and
    ignore the context, so a fresh lazy model equals the bare backbone."""
    cfg = decoder.cfg
    if cfg.variant != "concat_hidden":
        raise ConfigurationError(f"identity init applies to concat_hidden, not {cfg.variant}")
    w = decoder.proj_context.weight
    if w.shape != (cfg.dim + cfg.context_dim, cfg.dim):
        raise ConfigurationError(f"projection weight {w.shape} has unexpected shape")
    fresh = np.zeros(w.shape, np.float32)
    fresh[:cfg.dim] = np.eye(cfg.dim, dtype=np.float32)
    w.data[...] = fresh
    decoder.proj_context.bias.data[...] = 0.0


# ------------------------------------------------------------- crop baseline


def bilinear_resize(img: np.ndarray, h: int, w: int) -> np.ndarray:
    """Channel-wise bilinear resample of a (c, H, W) float array."""
    planes = [Image.fromarray(np.ascontiguousarray(ch, dtype=np.float32), mode="F")
              .resize((w, h), Image.Resampling.BILINEAR) for ch in img]
    return np.stack([np.asarray(p, dtype=np.float32) for p in planes])


def nearest_resize_mask(mask: np.ndarray, h: int, w: int) -> np.ndarray:
    im = Image.fromarray(mask.astype(np.uint8), mode="L")
    return np.asarray(im.resize((w, h), Image.Resampling.NEAREST), dtype=np.uint8)


def square_crop_bounds(mask: np.ndarray, crop_res: int) -> tuple[int, int, int]:
    """Top-left corner and side of the square crop: covers the mask bounding
    box, never smaller than crop_res, clamped inside the canvas."""
    if mask.ndim != 2 or mask.shape[0] != mask.shape[1]:
        raise ValueError(f"square canvas required, got {mask.shape}")
    ys, xs = np.nonzero(mask)
    if ys.size == 0:
        raise ValueError("crop baseline needs a non-empty mask")
    size = mask.shape[0]
    bh = int(ys.max()) - int(ys.min()) + 1
    bw = int(xs.max()) - int(xs.min()) + 1
    side = min(size, max(bh, bw, crop_res))
    cy = (int(ys.max()) + int(ys.min()) + 1) // 2
    cx = (int(xs.max()) + int(xs.min()) + 1) // 2
    y0 = min(max(cy - side // 2, 0), size - side)
    x0 = min(max(cx - side // 2, 0), size - side)
    return y0, x0, side


def regenerate_crop_pipeline(image: np.ndarray, mask: np.ndarray, label: int,
                             decoder: LazyDecoder, codec: LatentCodec,
                             opts: SamplerOpts, schedule: NoiseSchedule) -> np.ndarray:
    """Crop-resize-inpaint-composite baseline around a regenerate_image model.

    The model runs at a fixed resolution of half the canvas side, so holes
    over a quarter of the canvas area see fewer pixels than they replace.
    """
    cfg = decoder.cfg
    if cfg.variant != "regenerate_image":
        raise ConfigurationError("crop pipeline drives a regenerate_image model")
    if image.ndim != 3 or image.shape[1] != image.shape[2]:
        raise ValueError(f"expected a square (c, s, s) image, got {image.shape}")
    size = image.shape[1]
    crop_res = size // 2
    want = crop_res // codec.factor
    if (cfg.geometry.latent_h, cfg.geometry.latent_w) != (want, want):
        raise ConfigurationError(
            f"decoder grid {cfg.geometry.latent_h} does not match crop latent {want}")

    y0, x0, side = square_crop_bounds(mask, crop_res)
    crop = image[:, y0:y0 + side, x0:x0 + side].astype(np.float32)
    mcrop = mask[y0:y0 + side, x0:x0 + side]
    crop_r = bilinear_resize(crop, crop_res, crop_res)
    mask_r = nearest_resize_mask(mcrop, crop_res, crop_res)

    spec = reduce_mask(mask_r, cfg.geometry)
    z = to_diffusion_space(codec.encode(crop_r * (1 - mask_r[None].astype(np.float32))))
    geom = cfg.geometry
    image_tokens = patchify(z.astype(np.float32), geom)
    mask_tokens = patchify(spec.latent[None].astype(np.float32), geom)

    def model(x, t, lab):
        bundle = ConditionBundle(t=t, label=lab, image_tokens=image_tokens,
                                 mask_tokens=mask_tokens)
        with nn.no_grad():
            eps, vraw = decoder.denoise_forward(Tensor(x), bundle)
        return eps.numpy(), vraw.numpy()

    n = geom.n_tokens
    tokens = sample(model, n, cfg.token_dim, label, opts, schedule,
                    null_label=cfg.null_label)
    all_idx = hole_indices(np.ones((geom.grid_h, geom.grid_w), np.uint8))
    z_out = scatter_unpatchify(tokens, all_idx, geom).astype(np.float32)
    z_final = blend_latent(z, z_out, spec.latent)
    px = np.clip(codec.decode(from_diffusion_space(z_final)), 0.0, 1.0)

    up = bilinear_resize(px, side, side)
    m = mcrop[None].astype(np.float32)
    out = image.astype(np.float32).copy()
    region = out[:, y0:y0 + side, x0:x0 + side]
    out[:, y0:y0 + side, x0:x0 + side] = up * m + region * (1.0 - m)
    return out
