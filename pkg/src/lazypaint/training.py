"""Joint training of the context encoder and lazy decoder.

Each iteration draws a batch of synthetic scenes, dilates one entity mask
per scene, encodes the masked canvas once, and takes a hybrid-loss gradient
step on the noise/variance prediction for the hole tokens only. Encoder and
decoder update together from the same loss; the regeneration baseline has no
encoder and trains on all tokens.
"""

import csv
import json
import time
from dataclasses import asdict, dataclass, replace

import numpy as np

from .codec import LatentCodec, to_diffusion_space
from .data import sample_mask, synth_dataset
from .decoder import ConditionBundle, LazyDecoder
from .diffusion import NoiseSchedule, training_loss
from .encoder import ContextEncoder, drop_tokens
from .errors import ConfigurationError, ConvergenceError
from .patches import patchify, reduce_mask


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 2e-5          # published joint-training rate; toy runs use more
    weight_decay: float = 3e-2
    beta1: float = 0.9
    beta2: float = 0.999
    batch_size: int = 8
    iterations: int = 2000
    cfg_dropout: float = 0.1  # rate of null-label substitution for guidance
    seed: int = 0
    dataset_size: int = 256
    canvas_size: int = 32

    def __post_init__(self):
        if self.lr <= 0.0:
            raise ConfigurationError("lr must be positive")
        if not 0.0 <= self.cfg_dropout < 1.0:
            raise ConfigurationError("cfg_dropout must lie in [0, 1)")
        if self.batch_size < 1 or self.iterations < 0:
            raise ConfigurationError("batch_size >= 1 and iterations >= 0 required")
        if self.dataset_size < 1:
            raise ConfigurationError("dataset_size must be >= 1")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=2)

    @staticmethod
    def from_json(text: str) -> "TrainConfig":
        return TrainConfig(**json.loads(text))


def toy_train_config(**overrides) -> TrainConfig:
    """Working small-scale settings: the published rate is far too slow to
    show learning inside a few thousand iterations at this model size."""
    base = TrainConfig(lr=1e-3, iterations=2000, batch_size=8)
    return replace(base, **overrides) if overrides else base


class AdamW:
    """Adaptive moments with decoupled weight decay, bias-corrected."""

    def __init__(self, params, lr: float, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8, weight_decay: float = 0.0):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = p.grad
            self._m[i] = self.beta1 * self._m[i] + (1.0 - self.beta1) * g
            self._v[i] = self.beta2 * self._v[i] + (1.0 - self.beta2) * g * g
            update = (self._m[i] / b1c) / (np.sqrt(self._v[i] / b2c) + self.eps)
            if self.weight_decay:
                update = update + self.weight_decay * p.data
            p.data -= (self.lr * update).astype(p.data.dtype)


def build_item(sample, rng: np.random.Generator, decoder: LazyDecoder,
               encoder: ContextEncoder | None, codec: LatentCodec,
               cfg_dropout: float) -> dict:
    """One training example: pick an entity, dilate its mask, encode the
    masked canvas, gather ground-truth hole tokens."""
    cfg = decoder.cfg
    geom = cfg.geometry
    pick = int(rng.integers(len(sample.entity_masks)))
    label = int(sample.labels[pick])
    if cfg_dropout > 0.0 and rng.random() < cfg_dropout:
        label = cfg.null_label
    mask, _ = sample_mask(sample.entity_masks[pick], sample.image.shape[1], rng)

    spec = reduce_mask(mask, geom)
    visible = (sample.image * (1.0 - mask[None])).astype(np.float32)
    z_vis = to_diffusion_space(codec.encode(visible))
    z_full = to_diffusion_space(codec.encode(sample.image))

    if cfg.variant == "regenerate_image":
        return {"x0_hole": patchify(z_full, geom), "label": label,
                "image_tokens": patchify(z_vis, geom),
                "mask_tokens": patchify(spec.latent[None].astype(np.float32), geom)}

    if spec.k == 0:
        return {"x0_hole": np.zeros((0, cfg.token_dim), np.float32), "label": label}
    tokens_all = encoder.encode(z_vis, spec)
    ctx = drop_tokens(tokens_all, spec)
    item = {"x0_hole": patchify(z_full, geom)[ctx.idx.flat], "label": label,
            "context": ctx}
    if cfg.variant == "xattn_full":
        item["context_all"] = tokens_all
    return item


@dataclass
class TrainResult:
    trace: list[float]
    diagnostics: dict


def moving_average(trace, window: int = 10) -> np.ndarray:
    """Trailing mean; entry i averages trace[max(0, i-window+1) .. i]."""
    t = np.asarray(trace, dtype=np.float64)
    if t.size == 0:
        return t
    c = np.concatenate([[0.0], np.cumsum(t)])
    i = np.arange(1, t.size + 1)
    lo = np.maximum(0, i - window)
    return (c[i] - c[lo]) / (i - lo)


def write_loss_trace(path, trace) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["iteration", "loss"])
        for i, v in enumerate(trace):
            w.writerow([i, repr(float(v))])


def train(decoder: LazyDecoder, encoder: ContextEncoder | None,
          codec: LatentCodec, cfg: TrainConfig, schedule: NoiseSchedule,
          data=None, trace_path=None, on_iteration=None) -> TrainResult:
    """Run the joint loop; returns the loss trace and run diagnostics.

    A non-finite loss aborts with the trailing trace attached. Determinism:
    (seed, config, data) fixes the whole trajectory.
    """
    lazy = decoder.cfg.variant != "regenerate_image"
    if lazy and encoder is None:
        raise ConfigurationError(f"variant {decoder.cfg.variant!r} trains with an encoder")
    if lazy and encoder.cfg.geometry != decoder.cfg.geometry:
        raise ConfigurationError("encoder and decoder geometry differ")
    if cfg.canvas_size % codec.factor:
        raise ConfigurationError("canvas size not divisible by codec factor")
    if cfg.canvas_size // codec.factor != decoder.cfg.geometry.latent_h:
        raise ConfigurationError("canvas/codec resolution does not match model geometry")
    if lazy and encoder.cfg.mask_factor != codec.factor:
        raise ConfigurationError(
            f"encoder mask_factor {encoder.cfg.mask_factor} must equal codec factor {codec.factor}")

    if data is None:
        data = list(synth_dataset(cfg.dataset_size, cfg.canvas_size, seed=cfg.seed + 1))
    data = list(data)
    if not data:
        raise ConfigurationError("empty training dataset")

    params = list(decoder.parameters())
    if lazy:
        params += list(encoder.parameters())
    opt = AdamW(params, lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2,
                weight_decay=cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed)

    def model(item, x_t, t):
        bundle = ConditionBundle(t=t, label=item["label"],
                                 context=item.get("context"),
                                 context_all=item.get("context_all"),
                                 image_tokens=item.get("image_tokens"),
                                 mask_tokens=item.get("mask_tokens"))
        return decoder.denoise_forward(x_t, bundle)

    trace: list[float] = []
    skipped = 0
    started = time.perf_counter()
    for it in range(cfg.iterations):
        batch = []
        for _ in range(cfg.batch_size):
            sample = data[int(rng.integers(len(data)))]
            batch.append(build_item(sample, rng, decoder, encoder, codec,
                                    cfg.cfg_dropout))
        loss, diag = training_loss(model, batch, schedule, rng)
        skipped += diag["skipped"]
        value = float(loss.data)
        if not np.isfinite(value):
            raise ConvergenceError(
                f"non-finite loss at iteration {it}; last values: "
                f"{[round(v, 4) for v in trace[-5:]]}, step t draws: {diag['t']}")
        opt.zero_grad()
        loss.backward()
        opt.step()
        trace.append(value)
        if on_iteration is not None:
            on_iteration(it, value)

    result = TrainResult(trace=trace, diagnostics={
        "iterations": cfg.iterations,
        "skipped_items": skipped,
        "seconds": time.perf_counter() - started,
        "final_moving_average": float(moving_average(trace)[-1]) if trace else None,
    })
    if trace_path is not None:
        write_loss_trace(trace_path, trace)
    return result
