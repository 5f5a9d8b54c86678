"""Analytic compute accounting plus wall-clock benchmarking helpers.

Conventions, applied uniformly: one multiply-accumulate counts as 2 FLOPs;
softmax, norm, and activation work counts 5 FLOPs per element. Reports carry
both raw MAC counts and FLOPs so either convention can be compared.
"""

import csv
import io
import json
import statistics
import time
import warnings
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass

from .codec import LatentCodec
from .decoder import DecoderConfig
from .encoder import EncoderConfig
from .errors import ConfigurationError

POINTWISE_FLOPS = 5
MACS_TO_FLOPS = 2


@dataclass(frozen=True)
class StepCost:
    macs: int
    flops: int

    def __add__(self, other: "StepCost") -> "StepCost":
        return StepCost(self.macs + other.macs, self.flops + other.flops)

    def times(self, n: int) -> "StepCost":
        return StepCost(self.macs * n, self.flops * n)


ZERO_COST = StepCost(0, 0)


@dataclass(frozen=True)
class FlopsReport:
    decoder_step: StepCost
    encoder: StepCost
    fixed: StepCost
    steps: int
    n_tokens: int
    k: int

    @property
    def total(self) -> StepCost:
        return self.encoder + self.fixed + self.decoder_step.times(self.steps)


def _block_cost(n: int, d: int, heads: int, mlp_ratio: int = 4,
                cross_len: int = 0, cross_dim: int = 0) -> StepCost:
    macs = 4 * n * d * d + 2 * n * n * d + 2 * mlp_ratio * n * d * d + 6 * d * d
    softmax_elems = heads * n * n
    pointwise_elems = 2 * n * d + mlp_ratio * n * d + 4 * n * d
    if cross_len:
        macs += 2 * n * d * d + 2 * cross_len * cross_dim * d + 2 * n * cross_len * d
        softmax_elems += heads * n * cross_len
        pointwise_elems += n * d
    return StepCost(macs, MACS_TO_FLOPS * macs
                    + POINTWISE_FLOPS * (softmax_elems + pointwise_elems))


def _head_and_tail(n: int, d: int, in_dim: int, out_dim: int) -> StepCost:
    # patch embed, timestep MLP, modulated final norm + projection
    macs = n * in_dim * d + 256 * d + d * d + 2 * d * d + n * d * out_dim
    return StepCost(macs, MACS_TO_FLOPS * macs + POINTWISE_FLOPS * n * d)


def backbone_flops(cfg: DecoderConfig, n: int) -> StepCost:
    """One denoise step of the bare DiT stack, no context wiring."""
    if n < 1:
        raise ConfigurationError("token count must be >= 1")
    p = cfg.token_dim
    cost = _head_and_tail(n, cfg.dim, p, 2 * p)
    return cost + _block_cost(n, cfg.dim, cfg.heads).times(cfg.layers)


def decoder_flops(cfg: DecoderConfig, n: int) -> StepCost:
    """One denoise step at n hole tokens, including variant conditioning."""
    if n < 1:
        raise ConfigurationError("token count must be >= 1")
    d, ctx, p = cfg.dim, cfg.context_dim, cfg.token_dim
    variant = cfg.variant
    seq = n
    extra_macs = 0
    cross = (0, 0)

    if variant == "concat_hidden":
        extra_macs = n * (d + ctx) * d
    elif variant == "weighted_sum":
        extra_macs = n * ctx * d + n * d
    elif variant == "concat_length":
        extra_macs = n * ctx * d
        seq = 2 * n
    elif variant == "xattn_compressed":
        cross = (n, ctx)
    elif variant == "xattn_full":
        cross = (cfg.geometry.n_tokens, ctx)
    elif variant == "regenerate_image":
        pass
    else:
        raise ConfigurationError(f"no per-step cost for variant {variant!r}")

    in_dim = 2 * p + cfg.window if variant == "regenerate_image" else p
    cost = _head_and_tail(n, d, in_dim, 2 * p)
    cost = cost + StepCost(extra_macs, MACS_TO_FLOPS * extra_macs)

    if variant == "xattn_compressed":
        one = _block_cost(seq, d, cfg.heads, cross_len=cross[0], cross_dim=cross[1])
        rest = _block_cost(seq, d, cfg.heads).times(cfg.layers - 1)
        return cost + one + rest
    if variant == "xattn_full":
        return cost + _block_cost(seq, d, cfg.heads, cross_len=cross[0],
                                  cross_dim=cross[1]).times(cfg.layers)
    return cost + _block_cost(seq, d, cfg.heads).times(cfg.layers)


def encoder_flops(cfg: EncoderConfig) -> StepCost:
    """One full-canvas context encoding: every token, any mask."""
    n, d = cfg.token_count, cfg.dim
    macs = n * cfg.patch_dim * d
    macs += cfg.geometry.latent_h * cfg.geometry.latent_w * cfg.mask_factor**2
    pointwise = n * d  # final norm
    cost = StepCost(macs, MACS_TO_FLOPS * macs + POINTWISE_FLOPS * pointwise)
    block_macs = 4 * n * d * d + 2 * n * n * d + 8 * n * d * d
    block_point = 2 * n * d + 4 * n * d
    block = StepCost(block_macs, MACS_TO_FLOPS * block_macs
                     + POINTWISE_FLOPS * (cfg.heads * n * n + block_point))
    return cost + block.times(cfg.layers)


def _codec_blend_cost(enc_cfg: EncoderConfig, codec: LatentCodec | None) -> StepCost:
    lh, lw = enc_cfg.geometry.latent_h, enc_cfg.geometry.latent_w
    factor = 1 if codec is None else codec.factor
    channels = 3 if codec is None else codec.channels
    pixels = lh * lw * factor * factor * 3
    cells = lh * lw
    macs = 0 if codec is None or codec.factor == 1 else 2 * cells * 12
    pointwise = 2 * pixels + cells * channels
    return StepCost(macs, MACS_TO_FLOPS * macs + POINTWISE_FLOPS * pointwise)


def pipeline_report(enc_cfg: EncoderConfig, dec_cfg: DecoderConfig, k: int,
                    steps: int, codec: LatentCodec | None = None) -> FlopsReport:
    if steps < 1:
        raise ConfigurationError("steps must be >= 1")
    return FlopsReport(decoder_step=decoder_flops(dec_cfg, k),
                       encoder=encoder_flops(enc_cfg),
                       fixed=_codec_blend_cost(enc_cfg, codec),
                       steps=steps, n_tokens=enc_cfg.token_count, k=k)


def speedup_curve(enc_cfg: EncoderConfig, lazy_cfg: DecoderConfig,
                  baseline_cfg: DecoderConfig, mask_ratios: Sequence[float],
                  steps: int, codec: LatentCodec | None = None) -> list[dict]:
    """End-to-end cost ratios: full-canvas baseline over the lazy pipeline."""
    n = lazy_cfg.geometry.n_tokens
    base_total = decoder_flops(baseline_cfg, baseline_cfg.geometry.n_tokens).times(steps)
    rows = []
    for ratio in mask_ratios:
        if not 0.0 < ratio <= 1.0:
            raise ConfigurationError(f"mask ratio {ratio} outside (0, 1]")
        k = max(1, round(ratio * n))
        report = pipeline_report(enc_cfg, lazy_cfg, k, steps, codec)
        rows.append({
            "mask_ratio": ratio,
            "k": k,
            "lazy_flops": report.total.flops,
            "baseline_flops": base_total.flops,
            "per_step_flops": report.decoder_step.flops,
            "per_step_ratio": base_total.flops / steps / report.decoder_step.flops,
            "speedup": base_total.flops / report.total.flops,
        })
    return rows


def crossover_ratio(lazy_cfg: DecoderConfig, crop_cfg: DecoderConfig) -> float:
    """Mask ratio where the lazy per-step cost meets the crop baseline's."""
    target = decoder_flops(crop_cfg, crop_cfg.geometry.n_tokens).flops
    n = lazy_cfg.geometry.n_tokens
    # per-step cost is quadratic in k; recover coefficients by evaluation
    c0 = decoder_flops(lazy_cfg, 1).flops
    c1 = decoder_flops(lazy_cfg, 2).flops
    c2 = decoder_flops(lazy_cfg, 3).flops
    a = (c2 - 2 * c1 + c0) / 2.0
    b = (c1 - c0) - 3.0 * a
    c = c0 - a - b
    disc = b * b - 4.0 * a * (c - target)
    k = (-b + disc**0.5) / (2.0 * a)
    return k / n


def benchmark_wallclock(run_edit: Callable[[float], Mapping[str, float]],
                        mask_ratios: Sequence[float], repetitions: int = 3,
                        warmup: int = 1) -> list[dict]:
    """Medians and spread of per-phase timings returned by run_edit(ratio)."""
    if repetitions < 1:
        raise ConfigurationError("repetitions must be >= 1")
    resolution = time.get_clock_info("perf_counter").resolution
    rows = []
    for ratio in mask_ratios:
        for _ in range(warmup):
            run_edit(ratio)
        samples: dict[str, list[float]] = {}
        for _ in range(repetitions):
            for phase, seconds in run_edit(ratio).items():
                samples.setdefault(phase, []).append(float(seconds))
        row: dict = {"mask_ratio": ratio}
        for phase, vals in samples.items():
            med = statistics.median(vals)
            if 0 < med < 5 * resolution:
                warnings.warn(f"phase {phase!r} at ratio {ratio} is near timer "
                              "resolution; readings unreliable", stacklevel=2)
            row[f"{phase}_mean"] = statistics.fmean(vals)
            row[f"{phase}_median"] = med
            row[f"{phase}_stddev"] = statistics.stdev(vals) if len(vals) > 1 else 0.0
        rows.append(row)
    return rows


def rows_to_csv(rows: Iterable[Mapping]) -> str:
    rows = list(rows)
    if not rows:
        return ""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(rows[0].keys()))
    writer.writeheader()
    writer.writerows(rows)
    return buf.getvalue()


def series_json(rows: Iterable[Mapping], x: str = "mask_ratio",
                y: str = "speedup") -> str:
    """Plot-ready [{x, y}] pairs for the telemetry panel."""
    return json.dumps([{"x": r[x], "y": r[y]} for r in rows])
