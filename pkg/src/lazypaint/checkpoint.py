"""Self-describing checkpoint files and model (de)serialization.

Layout: 8-byte magic, u32 format version, u64 header length, JSON header,
raw little-endian C-order tensor bytes. The header lists every tensor with
dtype, shape, and offset, plus an arbitrary config block. JSON keys are
sorted so identical state produces identical bytes.
"""

import json
import struct
from pathlib import Path

import numpy as np

from .codec import LatentCodec
from .decoder import DecoderConfig, LazyDecoder
from .encoder import ContextEncoder, EncoderConfig
from .errors import CheckpointError
from .patches import PatchGeometry

MAGIC = b"LAZYPNT\x00"
FORMAT_VERSION = 1


def save_tensors(path, tensors, config) -> None:
    entries = []
    blobs = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        if arr.dtype.byteorder == ">":
            arr = arr.astype(arr.dtype.newbyteorder("<"))
        raw = arr.tobytes()
        entries.append({"name": name, "dtype": arr.dtype.str.replace(">", "<"),
                        "shape": list(arr.shape), "offset": offset,
                        "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"config": config, "tensors": entries},
                        sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQ", FORMAT_VERSION, len(header)))
        f.write(header)
        for raw in blobs:
            f.write(raw)


def load_tensors(path) -> tuple[dict, dict]:
    data = Path(path).read_bytes()
    if len(data) < len(MAGIC) + 12 or data[:len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, header_len = struct.unpack_from("<IQ", data, len(MAGIC))
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    start = len(MAGIC) + 12
    try:
        header = json.loads(data[start:start + header_len])
    except ValueError as e:
        raise CheckpointError(f"{path}: corrupt header: {e}") from None
    blob = data[start + header_len:]
    tensors = {}
    for ent in header["tensors"]:
        end = ent["offset"] + ent["nbytes"]
        if end > len(blob):
            raise CheckpointError(f"{path}: truncated tensor {ent['name']!r}")
        arr = np.frombuffer(blob[ent["offset"]:end], dtype=np.dtype(ent["dtype"]))
        tensors[ent["name"]] = arr.reshape(ent["shape"]).copy()
    return tensors, header["config"]


# ------------------------------------------------------------ model configs


def _geometry_dict(g: PatchGeometry) -> dict:
    return {"latent_h": g.latent_h, "latent_w": g.latent_w, "kernel": g.kernel,
            "stride": g.stride, "pad": g.pad}


def _geometry_from(d: dict) -> PatchGeometry:
    return PatchGeometry(**d)


def encoder_config_dict(cfg: EncoderConfig) -> dict:
    return {"geometry": _geometry_dict(cfg.geometry), "channels": cfg.channels,
            "dim": cfg.dim, "layers": cfg.layers, "heads": cfg.heads,
            "mask_factor": cfg.mask_factor}


def decoder_config_dict(cfg: DecoderConfig) -> dict:
    return {"variant": cfg.variant, "geometry": _geometry_dict(cfg.geometry),
            "channels": cfg.channels, "context_dim": cfg.context_dim,
            "dim": cfg.dim, "layers": cfg.layers, "heads": cfg.heads,
            "num_classes": cfg.num_classes}


def encoder_config_from(d: dict) -> EncoderConfig:
    d = dict(d)
    d["geometry"] = _geometry_from(d["geometry"])
    return EncoderConfig(**d)


def decoder_config_from(d: dict) -> DecoderConfig:
    d = dict(d)
    d["geometry"] = _geometry_from(d["geometry"])
    return DecoderConfig(**d)


def _module_state(module, prefix: str) -> dict:
    return {f"{prefix}.{name}": p.data for name, p in module.named_parameters()}


def _restore_module(module, prefix: str, tensors: dict, path) -> None:
    names = set()
    for name, p in module.named_parameters():
        key = f"{prefix}.{name}"
        names.add(key)
        if key not in tensors:
            raise CheckpointError(f"{path}: missing tensor {key!r}")
        arr = tensors[key]
        if tuple(arr.shape) != tuple(p.shape):
            raise CheckpointError(
                f"{path}: tensor {key!r} has shape {arr.shape}, model expects {p.shape}")
        p.data[...] = arr.astype(p.data.dtype)
    stray = [k for k in tensors if k.startswith(prefix + ".") and k not in names]
    if stray:
        raise CheckpointError(f"{path}: unexpected tensors {stray[:3]}")


def save_pipeline(path, decoder: LazyDecoder, encoder: ContextEncoder | None,
                  extra: dict | None = None) -> None:
    """One file holding decoder (and encoder, when present) plus configs."""
    config = {"kind": "lazypaint", "decoder": decoder_config_dict(decoder.cfg)}
    tensors = _module_state(decoder, "decoder")
    if encoder is not None:
        config["encoder"] = encoder_config_dict(encoder.cfg)
        tensors.update(_module_state(encoder, "encoder"))
    if extra:
        config["extra"] = extra
    save_tensors(path, tensors, config)


def load_pipeline(path, expect_variant: str | None = None):
    """Rebuild (decoder, encoder_or_None, extra) from a checkpoint file."""
    tensors, config = load_tensors(path)
    if config.get("kind") != "lazypaint":
        raise CheckpointError(f"{path}: not a pipeline checkpoint")
    try:
        dec_cfg = decoder_config_from(config["decoder"])
    except (KeyError, TypeError, ValueError) as e:
        raise CheckpointError(f"{path}: bad decoder config: {e}") from None
    if expect_variant is not None and dec_cfg.variant != expect_variant:
        raise CheckpointError(
            f"{path}: checkpoint variant {dec_cfg.variant!r}, expected {expect_variant!r}")
    decoder = LazyDecoder(dec_cfg, np.random.default_rng(0))
    _restore_module(decoder, "decoder", tensors, path)
    encoder = None
    if "encoder" in config:
        encoder = ContextEncoder(encoder_config_from(config["encoder"]),
                                 np.random.default_rng(0))
        _restore_module(encoder, "encoder", tensors, path)
    return decoder, encoder, config.get("extra", {})


def codec_from_extra(extra: dict) -> LatentCodec:
    return LatentCodec(extra.get("codec", "identity"))
