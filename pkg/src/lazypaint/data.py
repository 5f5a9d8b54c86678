"""Synthetic scenes and the training-mask dilation protocol.

Scenes are colored geometric shapes over a textured gradient background.
Entity masks record the topmost shape per pixel, so they are disjoint by
construction. Labels cycle through the class list, keeping counts balanced
to within one scene.
"""

from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np

CLASS_NAMES = ("circle", "square", "triangle", "cross")
THRESHOLDS = (1e-1, 1e-2, 1e-3, 1e-4)
BBOX_PROBABILITY = 0.2


@dataclass(frozen=True)
class SyntheticSample:
    image: np.ndarray
    entity_masks: list
    labels: list

    def __post_init__(self) -> None:
        total = np.zeros(self.image.shape[1:], np.int32)
        for m in self.entity_masks:
            total += m.astype(np.int32)
        if np.any(total > 1):
            raise ValueError("entity masks overlap")
        if len(self.entity_masks) != len(self.labels):
            raise ValueError("one label per entity required")


def _background(size: int, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32) / size
    img = np.empty((3, size, size), np.float32)
    for c in range(3):
        base = rng.uniform(0.1, 0.5)
        gy, gx = rng.uniform(-0.3, 0.3, size=2)
        freq = rng.uniform(2.0, 6.0)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        amp = rng.uniform(0.02, 0.12)
        img[c] = base + gy * yy + gx * xx + amp * np.sin(freq * 2 * np.pi * xx + phase)
    return np.clip(img, 0.0, 1.0)


def _stamp(shape: str, size: int, rng: np.random.Generator) -> np.ndarray:
    r = int(rng.integers(3, max(4, size // 4)))
    cy = int(rng.integers(r, size - r))
    cx = int(rng.integers(r, size - r))
    yy, xx = np.mgrid[0:size, 0:size]
    if shape == "circle":
        hit = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    elif shape == "square":
        hit = np.maximum(np.abs(yy - cy), np.abs(xx - cx)) <= r
    elif shape == "triangle":
        rise = yy - (cy - r)
        hit = (rise >= 0) & (yy <= cy + r) & (np.abs(xx - cx) * 2 <= rise)
    else:  # cross
        t = max(1, r // 3)
        arm_y = (np.abs(yy - cy) <= t) & (np.abs(xx - cx) <= r)
        arm_x = (np.abs(xx - cx) <= t) & (np.abs(yy - cy) <= r)
        hit = arm_y | arm_x
    return hit.astype(np.uint8)


def synth_dataset(n: int, canvas_size: int = 32, seed: int = 0) -> Iterator[SyntheticSample]:
    """Deterministic stream of n scenes with 1-4 labeled shapes each."""
    if canvas_size < 16:
        raise ValueError("canvas too small for shape placement")
    rng = np.random.default_rng(seed)
    next_label = 0
    for _ in range(n):
        image = _background(canvas_size, rng)
        count = int(rng.integers(1, 5))
        stamps, labels = [], []
        for _ in range(count):
            label = next_label % len(CLASS_NAMES)
            next_label += 1
            mask = _stamp(CLASS_NAMES[label], canvas_size, rng)
            color = rng.uniform(0.2, 1.0, size=3).astype(np.float32)
            image = np.where(mask[None].astype(bool), color[:, None, None], image)
            stamps.append(mask)
            labels.append(label)
        taken = np.zeros((canvas_size, canvas_size), np.uint8)
        entities = []
        for mask in reversed(stamps):  # last drawn is on top
            visible = mask & ~taken
            taken |= mask
            entities.append(visible)
        entities.reverse()
        keep = [i for i, m in enumerate(entities) if m.any()]
        yield SyntheticSample(image=image,
                              entity_masks=[entities[i] for i in keep],
                              labels=[labels[i] for i in keep])


def _gauss_kernel(size: int, sigma: float) -> np.ndarray:
    c = (size - 1) / 2.0
    x = np.arange(size, dtype=np.float64) - c
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def _blur_axis(img: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    pad = len(kernel) // 2
    widths = [(0, 0), (0, 0)]
    widths[axis] = (pad, pad)
    padded = np.pad(img, widths)
    out = np.zeros_like(img)
    for i, w in enumerate(kernel):
        sl = [slice(None), slice(None)]
        sl[axis] = slice(i, i + img.shape[axis])
        out += w * padded[tuple(sl)]
    return out


def dilate_mask(mask: np.ndarray, kernel_size: int, sigma_y: float,
                sigma_x: float, threshold: float) -> np.ndarray:
    """Separable Gaussian blur then threshold; falls back to the input when
    the thresholded support is empty (possible at the coarsest threshold)."""
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ValueError(f"kernel size must be odd and positive, got {kernel_size}")
    blur = _blur_axis(mask.astype(np.float64), _gauss_kernel(kernel_size, sigma_y), 0)
    blur = _blur_axis(blur, _gauss_kernel(kernel_size, sigma_x), 1)
    out = (blur > threshold).astype(np.uint8)
    if not out.any():
        return mask.astype(np.uint8).copy()
    return out


def bounding_box_mask(mask: np.ndarray) -> np.ndarray:
    ys, xs = np.nonzero(mask)
    out = np.zeros_like(mask, dtype=np.uint8)
    out[ys.min():ys.max() + 1, xs.min():xs.max() + 1] = 1
    return out


def sample_mask(entity_mask: np.ndarray, image_size: int,
                rng: np.random.Generator) -> tuple[np.ndarray, dict]:
    """Training mask: sometimes the bounding box, always blur-dilated.

    Draw order is fixed (branch, kernel, sigmas, threshold) so tests can
    replay the stream.
    """
    if not entity_mask.any():
        raise ValueError("entity mask is empty")
    use_bbox = rng.random() < BBOX_PROBABILITY
    base = bounding_box_mask(entity_mask) if use_bbox else entity_mask.astype(np.uint8)
    raw = rng.uniform(image_size / 15.0, image_size / 5.0)
    kernel = int(round(raw))
    if kernel % 2 == 0:
        kernel += 1
    kernel = max(kernel, 1)
    sigma_y, sigma_x = rng.uniform(3.0, 17.0, size=2)
    threshold = float(THRESHOLDS[rng.integers(0, len(THRESHOLDS))])
    mask = dilate_mask(base, kernel, sigma_y, sigma_x, threshold)
    meta = {"bbox": use_bbox, "base": base, "kernel": kernel,
            "sigma": (float(sigma_y), float(sigma_x)), "threshold": threshold}
    return mask, meta
