"""Pluggable latent codec: the compressed space the diffusion operates in.

Images are float32 RGB, channel-major (3, h, w), values in [0, 1]. The
identity codec keeps pixels as the latent (toy default). The pool codecs
average-pool by an integer factor and lift 3 -> 4 channels through a fixed
orthonormal matrix (a stand-in for a learned autoencoder, fixed at
construction); decode transposes the lift and upsamples nearest.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

# Diffusion model space: latents shifted/scaled so [0,1] content spans [-1,1].
_SHIFT = 0.5
_SCALE = 2.0


def to_diffusion_space(z: np.ndarray) -> np.ndarray:
    return ((z - _SHIFT) * _SCALE).astype(np.float32)


def from_diffusion_space(x: np.ndarray) -> np.ndarray:
    return (x / _SCALE + _SHIFT).astype(np.float32)


_LIFT_SEED = 7


def _lift_matrix() -> np.ndarray:
    """Fixed orthonormal-column 4x3 channel lift (pretrained stand-in)."""
    a = np.random.default_rng(_LIFT_SEED).normal(size=(4, 3))
    q, _ = np.linalg.qr(a)
    return q.astype(np.float64)


@dataclass(frozen=True)
class LatentCodec:
    kind: str = "identity"
    factor: int = field(init=False, default=1)
    channels: int = field(init=False, default=3)

    def __post_init__(self):
        if self.kind == "identity":
            f, c = 1, 3
        elif self.kind.startswith("pool"):
            try:
                f = int(self.kind[4:])
            except ValueError:
                raise ConfigurationError(f"unknown codec kind {self.kind!r}") from None
            if f < 2:
                raise ConfigurationError("pool factor must be >= 2")
            c = 4
        else:
            raise ConfigurationError(f"unknown codec kind {self.kind!r}")
        object.__setattr__(self, "factor", f)
        object.__setattr__(self, "channels", c)

    def encode(self, image: np.ndarray) -> np.ndarray:
        image = np.asarray(image, dtype=np.float32)
        if image.ndim != 3 or image.shape[0] != 3:
            raise ValueError(f"expected (3, h, w) image, got {image.shape}")
        _, h, w = image.shape
        if h % self.factor or w % self.factor:
            raise ValueError(f"image dims {h}x{w} not divisible by codec factor {self.factor}")
        if self.kind == "identity":
            return image.copy()
        f = self.factor
        pooled = image.reshape(3, h // f, f, w // f, f).mean(axis=(2, 4), dtype=np.float64)
        lifted = np.einsum("lc,chw->lhw", _lift_matrix(), pooled)
        return lifted.astype(np.float32)

    def decode(self, latent: np.ndarray) -> np.ndarray:
        latent = np.asarray(latent, dtype=np.float32)
        if latent.ndim != 3 or latent.shape[0] != self.channels:
            raise ValueError(f"expected ({self.channels}, h, w) latent, got {latent.shape}")
        if self.kind == "identity":
            return latent.copy()
        rgb = np.einsum("lc,lhw->chw", _lift_matrix(), latent.astype(np.float64))
        up = rgb.repeat(self.factor, axis=1).repeat(self.factor, axis=2)
        return up.astype(np.float32)

    def zero_pad_decode(self, z_hole: np.ndarray) -> np.ndarray:
        """Decode an incremental generation as-is: zeros outside the hole
        stay black, showing the generated content in isolation."""
        return self.decode(z_hole)
