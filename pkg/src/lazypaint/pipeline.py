"""One interactive edit, end to end: encode the masked canvas once, denoise
only the hole tokens, scatter them back, blend in latent space, decode, and
seam-blend in pixel space. Pixels outside the mask come back bit-exact.
"""

import time
from dataclasses import dataclass, replace

import numpy as np

from .codec import LatentCodec, from_diffusion_space, to_diffusion_space
from .costs import decoder_flops, pipeline_report
from .decoder import LAZY_VARIANTS, ConditionBundle, LazyDecoder
from .diffusion import NoiseSchedule, SamplerOpts, sample
from .encoder import ContextEncoder, drop_tokens
from .errors import ConfigurationError
from .nn import Tensor, no_grad
from .patches import blend_latent, patchify, reduce_mask, scatter_unpatchify
from .poisson import BlendProblem, poisson_blend


@dataclass(frozen=True)
class EditRequest:
    mask: np.ndarray
    label: int
    seed: int = 0
    steps: int = 50
    guidance_scale: float = 4.5
    sdedit_strength: float = 0.0
    poisson: bool = True

    def sampler_opts(self) -> SamplerOpts:
        return SamplerOpts(steps=self.steps, guidance_scale=self.guidance_scale,
                           seed=self.seed, sdedit_strength=self.sdedit_strength)


@dataclass
class EditResult:
    canvas: np.ndarray  # (3, h, w) float32 in [0, 1]
    patch: np.ndarray   # generated content on black, same shape
    telemetry: dict


class EditPipeline:
    def __init__(self, decoder: LazyDecoder, encoder: ContextEncoder,
                 codec: LatentCodec, schedule: NoiseSchedule,
                 poisson_tol: float = 1e-6, poisson_max_iters: int = 10_000):
        if decoder.cfg.variant not in LAZY_VARIANTS:
            raise ConfigurationError(
                f"interactive editing drives the lazy variants, not {decoder.cfg.variant!r}")
        if encoder.cfg.geometry != decoder.cfg.geometry:
            raise ConfigurationError("encoder and decoder geometry differ")
        if encoder.cfg.dim != decoder.cfg.context_dim:
            raise ConfigurationError(
                f"encoder dim {encoder.cfg.dim} vs decoder context_dim {decoder.cfg.context_dim}")
        if encoder.cfg.channels != codec.channels:
            raise ConfigurationError("encoder channels do not match codec")
        if encoder.cfg.mask_factor != codec.factor:
            raise ConfigurationError(
                f"encoder mask_factor {encoder.cfg.mask_factor} must equal codec factor "
                f"{codec.factor} so the pixel mask feeds the mask channel directly")
        self.decoder = decoder
        self.encoder = encoder
        self.codec = codec
        self.schedule = schedule
        self.poisson_tol = poisson_tol
        self.poisson_max_iters = poisson_max_iters

    @property
    def geometry(self):
        return self.decoder.cfg.geometry

    @property
    def canvas_size(self) -> tuple[int, int]:
        g = self.geometry
        return g.latent_h * self.codec.factor, g.latent_w * self.codec.factor

    def blank_canvas(self) -> np.ndarray:
        h, w = self.canvas_size
        return np.full((3, h, w), 0.5, dtype=np.float32)

    def _check_canvas(self, canvas: np.ndarray) -> np.ndarray:
        canvas = np.asarray(canvas, dtype=np.float32)
        h, w = self.canvas_size
        if canvas.shape != (3, h, w):
            raise ValueError(f"canvas shape {canvas.shape}, this pipeline edits (3, {h}, {w})")
        return canvas

    def apply_edit(self, canvas: np.ndarray, req: EditRequest,
                   on_step=None) -> EditResult:
        canvas = self._check_canvas(canvas)
        mask = np.asarray(req.mask)
        if mask.shape != canvas.shape[1:]:
            raise ValueError(f"mask shape {mask.shape} does not cover the canvas")
        if not np.isin(mask, (0, 1)).all():
            raise ValueError("mask must be binary")
        mask = mask.astype(np.uint8)
        if not mask.any():
            raise ValueError("empty mask: nothing to edit")
        opts = req.sampler_opts()
        geom = self.geometry
        cfg = self.decoder.cfg
        timings: dict[str, float] = {}

        t0 = time.perf_counter()
        spec = reduce_mask(mask, geom)
        k = spec.k
        if k == 0:
            raise ValueError("mask vanishes at latent resolution; paint a larger region")
        visible = (canvas * (1.0 - mask[None])).astype(np.float32)
        z_vis = to_diffusion_space(self.codec.encode(visible))
        z_cur = to_diffusion_space(self.codec.encode(canvas))
        timings["codec"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        with no_grad():
            tokens_all = self.encoder.encode(z_vis, spec)
        ctx = drop_tokens(tokens_all, spec)
        timings["encoder"] = time.perf_counter() - t0

        context_all = tokens_all if cfg.variant == "xattn_full" else None

        def model(x_t, t, label):
            bundle = ConditionBundle(t=t, label=label, context=ctx,
                                     context_all=context_all)
            with no_grad():
                eps, vraw = self.decoder.denoise_forward(Tensor(x_t), bundle)
            return eps.data, vraw.data

        sdedit_tokens = None
        if opts.sdedit_strength > 0.0:
            sdedit_tokens = patchify(z_cur, geom)[ctx.idx.flat]

        t0 = time.perf_counter()
        x0_tokens, info = sample(model, k, cfg.token_dim, req.label, opts,
                                 self.schedule, cfg.null_label,
                                 sdedit_tokens=sdedit_tokens, on_step=on_step,
                                 return_info=True)
        timings["decode_steps"] = time.perf_counter() - t0

        t0 = time.perf_counter()
        z_hole = scatter_unpatchify(x0_tokens, ctx.idx, geom)
        z_blend = blend_latent(z_cur, z_hole, spec.latent)
        decoded = np.clip(self.codec.decode(from_diffusion_space(z_blend)), 0.0, 1.0)
        patch_latent = from_diffusion_space(z_hole) * spec.latent[None]
        patch = np.clip(self.codec.zero_pad_decode(patch_latent), 0.0, 1.0)
        timings["codec"] += time.perf_counter() - t0

        t0 = time.perf_counter()
        if req.poisson:
            blended = poisson_blend(
                BlendProblem(base=canvas, insert=decoded, region=mask),
                tol=self.poisson_tol, max_iters=self.poisson_max_iters)
            out = np.clip(blended, 0.0, 1.0).astype(np.float32)
        else:
            out = np.where(mask[None] != 0, decoded, canvas).astype(np.float32)
        timings["blend"] = time.perf_counter() - t0

        return EditResult(canvas=out, patch=patch,
                          telemetry=self._telemetry(req, k, info, timings))

    def _telemetry(self, req: EditRequest, k: int, info: dict,
                   timings: dict) -> dict:
        geom = self.geometry
        n = geom.n_tokens
        steps_run = info["steps_run"]
        lazy = pipeline_report(self.encoder.cfg, self.decoder.cfg, k,
                               steps_run, self.codec)
        ri_cfg = replace(self.decoder.cfg, variant="regenerate_image")
        ri_step = decoder_flops(ri_cfg, n)
        ri_total = ri_step.times(steps_run).flops
        return {
            "k": k,
            "n_tokens": n,
            "mask_ratio_tokens": k / n,
            "label": req.label,
            "seed": req.seed,
            "steps_requested": req.steps,
            "steps_run": steps_run,
            "model_calls": info["model_calls"],
            "token_steps": k * steps_run,
            "timings": timings,
            "flops_lazy_per_step": lazy.decoder_step.flops,
            "flops_lazy_total": lazy.total.flops,
            "flops_encoder": lazy.encoder.flops,
            "flops_regenerate_per_step": ri_step.flops,
            "flops_regenerate_total": ri_total,
            "speedup_analytic": ri_total / lazy.total.flops,
        }


def mask_for_ratio(ratio: float, height: int, width: int) -> np.ndarray:
    """Row-major prefix mask covering round(ratio * pixels) pixels."""
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"mask ratio {ratio} outside (0, 1]")
    flat = np.zeros(height * width, dtype=np.uint8)
    flat[:max(1, round(ratio * flat.size))] = 1
    return flat.reshape(height, width)


def benchmark_runner(pipeline: EditPipeline, label: int = 0, steps: int = 4,
                     seed: int = 0):
    """Adapter for benchmark_wallclock: ratio -> per-phase seconds of one
    real edit on a blank canvas."""
    canvas = pipeline.blank_canvas()
    h, w = pipeline.canvas_size

    def run(ratio: float):
        req = EditRequest(mask=mask_for_ratio(ratio, h, w), label=label,
                          seed=seed, steps=steps, guidance_scale=1.0,
                          poisson=False)
        result = pipeline.apply_edit(canvas, req)
        timings = dict(result.telemetry["timings"])
        timings["per_step_decode"] = timings["decode_steps"] / result.telemetry["steps_run"]
        return timings

    return run
