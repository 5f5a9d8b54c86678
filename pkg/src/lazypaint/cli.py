"""Command line front end: train, sample, bench, ablate, serve.

Checkpoints resolve from --checkpoint or the LAZYPAINT_CHECKPOINT env var.
Training flags mirror the JSON config file field for field.
"""

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from . import decoder as decoder_mod
from . import encoder as encoder_mod
from .checkpoint import codec_from_extra, load_pipeline, save_pipeline
from .codec import LatentCodec
from .costs import (benchmark_wallclock, crossover_ratio, decoder_flops,
                    rows_to_csv, speedup_curve)
from .decoder import LazyDecoder, full_scale_config
from .diffusion import make_schedule
from .encoder import ContextEncoder
from .errors import CheckpointError, ConvergenceError
from .patches import PatchGeometry
from .pipeline import EditPipeline, EditRequest, benchmark_runner, mask_for_ratio
from .training import TrainConfig, moving_average, toy_train_config, train

TRAINABLE = ("concat_hidden", "weighted_sum", "concat_length",
             "xattn_compressed", "xattn_full", "regenerate_image")
CHECKPOINT_ENV = "LAZYPAINT_CHECKPOINT"


def _say(msg: str) -> None:
    print(msg, file=sys.stderr)


def _resolve_checkpoint(args) -> str:
    path = args.checkpoint or os.environ.get(CHECKPOINT_ENV)
    if not path:
        raise ValueError(f"no checkpoint: pass --checkpoint or set {CHECKPOINT_ENV}")
    return path


def _build_models(variant: str, canvas_size: int, codec: LatentCodec, seed: int):
    if canvas_size % codec.factor:
        raise ValueError(f"canvas size {canvas_size} not divisible by codec "
                         f"factor {codec.factor}")
    latent = canvas_size // codec.factor
    geometry = PatchGeometry(latent_h=latent, latent_w=latent)
    rng = np.random.default_rng(seed)
    decoder = LazyDecoder(decoder_mod.toy_config(variant, geometry,
                                                 channels=codec.channels), rng)
    encoder = None
    if variant != "regenerate_image":
        encoder = ContextEncoder(
            encoder_mod.toy_config(geometry, channels=codec.channels,
                                   mask_factor=codec.factor), rng)
    return decoder, encoder


def _load_edit_pipeline(path: str):
    decoder, encoder, extra = load_pipeline(path)
    codec = codec_from_extra(extra)
    schedule = make_schedule(int(extra.get("schedule_T", 1000)))
    if encoder is None:
        raise CheckpointError(f"{path}: {decoder.cfg.variant!r} checkpoint has no "
                              "encoder; interactive editing needs a lazy variant")
    return EditPipeline(decoder, encoder, codec, schedule)


# ------------------------------------------------------------- train


def _train_config(args) -> TrainConfig:
    if args.config:
        with open(args.config) as fh:
            cfg = TrainConfig.from_json(fh.read())
    else:
        cfg = toy_train_config()
    overrides = {name: getattr(args, name) for name in
                 ("lr", "weight_decay", "beta1", "beta2", "batch_size",
                  "iterations", "cfg_dropout", "seed", "dataset_size",
                  "canvas_size")
                 if getattr(args, name) is not None}
    return replace(cfg, **overrides) if overrides else cfg


def cmd_train(args) -> int:
    cfg = _train_config(args)
    codec = LatentCodec(args.codec)
    decoder, encoder = _build_models(args.variant, cfg.canvas_size, codec, cfg.seed)
    schedule = make_schedule(args.schedule_steps)
    _say(f"training {args.variant} on {cfg.canvas_size}x{cfg.canvas_size} "
         f"({codec.kind} codec, {cfg.iterations} iterations)")

    every = args.log_every or max(1, cfg.iterations // 20)
    trace: list[float] = []

    def on_iteration(it, value):
        trace.append(value)
        if (it + 1) % every == 0 or it + 1 == cfg.iterations:
            avg = float(moving_average(trace)[-1])
            _say(f"  iter {it + 1}/{cfg.iterations}  loss {value:.4f}  avg {avg:.4f}")

    result = train(decoder, encoder, codec, cfg, schedule,
                   trace_path=args.trace, on_iteration=on_iteration)
    extra = {"codec": codec.kind, "schedule_T": schedule.T,
             "train_config": json.loads(cfg.to_json()),
             "diagnostics": result.diagnostics}
    save_pipeline(args.out, decoder, encoder, extra)
    d = result.diagnostics
    _say(f"done in {d['seconds']:.1f}s, final moving-average loss "
         f"{d['final_moving_average']:.4f}")
    _say(f"saved {args.out}")
    return 0


# ------------------------------------------------------------- sample


def _read_png(path: str) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


def cmd_sample(args) -> int:
    from .service import mask_png_decode, png_decode, png_encode

    pipeline = _load_edit_pipeline(_resolve_checkpoint(args))
    h, w = pipeline.canvas_size
    if args.canvas:
        canvas = png_decode(_read_png(args.canvas))
        if canvas.shape != (3, h, w):
            raise ValueError(f"canvas {args.canvas} is "
                             f"{canvas.shape[2]}x{canvas.shape[1]}, model edits {w}x{h}")
    else:
        canvas = pipeline.blank_canvas()
    if args.mask:
        mask = mask_png_decode(_read_png(args.mask))
        if mask.shape != (h, w):
            raise ValueError(f"mask {args.mask} is {mask.shape[1]}x{mask.shape[0]}, "
                             f"canvas is {w}x{h}")
    else:
        mask = mask_for_ratio(args.mask_ratio, h, w)

    req = EditRequest(mask=mask, label=args.label, seed=args.seed,
                      steps=args.steps, guidance_scale=args.guidance,
                      sdedit_strength=args.sdedit, poisson=not args.no_poisson)

    def on_step(step, total, t):
        if not args.quiet:
            _say(f"  step {step}/{total} (t={t})")

    result = pipeline.apply_edit(canvas, req, on_step=on_step)
    with open(args.out, "wb") as fh:
        fh.write(png_encode(result.canvas))
    _say(f"wrote {args.out}")
    if args.patch:
        with open(args.patch, "wb") as fh:
            fh.write(png_encode(result.patch))
        _say(f"wrote {args.patch}")
    tel = json.dumps(result.telemetry, indent=2)
    if args.telemetry == "-":
        print(tel)
    elif args.telemetry:
        with open(args.telemetry, "w") as fh:
            fh.write(tel + "\n")
        _say(f"wrote {args.telemetry}")
    return 0


# ------------------------------------------------------------- bench


def _crop_config(latent_side: int):
    full = full_scale_config("regenerate_image")
    return replace(full, geometry=PatchGeometry(latent_h=latent_side,
                                                latent_w=latent_side))


def _print_rows(rows: list[dict], columns: list[str]) -> None:
    widths = [max(len(c), *(len(f"{r[c]:.4g}" if isinstance(r[c], float) else str(r[c]))
                            for r in rows)) for c in columns]
    print("  ".join(c.rjust(v) for c, v in zip(columns, widths)))
    for r in rows:
        cells = [f"{r[c]:.4g}" if isinstance(r[c], float) else str(r[c])
                 for c in columns]
        print("  ".join(s.rjust(v) for s, v in zip(cells, widths)))


def cmd_bench(args) -> int:
    ratios = [float(r) for r in args.ratios.split(",")]

    if args.full_scale:
        from .costs import backbone_flops
        from .encoder import full_scale_config as enc_full

        ch, ws = full_scale_config("concat_hidden"), full_scale_config("weighted_sum")
        ri = full_scale_config("regenerate_image")
        n = ch.geometry.n_tokens
        base = backbone_flops(ch, n).flops
        print(f"condition-injection overhead vs plain backbone at {n} tokens:")
        for name, cfg in (("concat_hidden", ch), ("weighted_sum", ws)):
            over = (decoder_flops(cfg, n).flops - base) / base
            print(f"  {name:<15} {over * 100:.2f}%")
        k10 = max(1, round(0.10 * n))
        per_step = decoder_flops(ri, n).flops / decoder_flops(ch, k10).flops
        print(f"per-step cost ratio, full regeneration vs 10% mask: {per_step:.2f}")
        print(f"\nend-to-end speedup over full regeneration ({args.steps} steps):")
        rows = speedup_curve(enc_full(), ch, ri, ratios, steps=args.steps)
        _print_rows(rows, ["mask_ratio", "k", "per_step_ratio", "speedup"])
        print("\ncrossover mask ratio (lazy per-step cost meets baseline):")
        for name, cfg in (("crop 512px", _crop_config(64)),
                          ("crop 256px", _crop_config(32)),
                          ("full regeneration", ri)):
            print(f"  {name:<18} {crossover_ratio(ch, cfg):.4f}")
        if args.csv:
            with open(args.csv, "w") as fh:
                fh.write(rows_to_csv(rows))
            _say(f"wrote {args.csv}")
        return 0

    if args.checkpoint or os.environ.get(CHECKPOINT_ENV):
        pipeline = _load_edit_pipeline(_resolve_checkpoint(args))
    else:
        codec = LatentCodec(args.codec)
        dec, enc = _build_models("concat_hidden", args.canvas_size, codec, seed=0)
        pipeline = EditPipeline(dec, enc, codec, make_schedule(50))
        _say("no checkpoint given; timing a randomly initialized model")

    ri_cfg = replace(pipeline.decoder.cfg, variant="regenerate_image")
    rows = speedup_curve(pipeline.encoder.cfg, pipeline.decoder.cfg, ri_cfg,
                         ratios, steps=args.steps, codec=pipeline.codec)
    print("analytic cost model:")
    _print_rows(rows, ["mask_ratio", "k", "lazy_flops", "baseline_flops",
                       "per_step_ratio", "speedup"])

    if args.measure:
        run = benchmark_runner(pipeline, steps=args.steps)
        measured = benchmark_wallclock(run, ratios, repetitions=args.reps)
        print("\nmeasured seconds per phase (median):")
        _print_rows(measured, ["mask_ratio", "encoder_median",
                               "decode_steps_median", "per_step_decode_median",
                               "blend_median"])
        if args.csv:
            with open(args.csv, "w") as fh:
                fh.write(rows_to_csv(measured))
            _say(f"wrote {args.csv}")
    elif args.csv:
        with open(args.csv, "w") as fh:
            fh.write(rows_to_csv(rows))
        _say(f"wrote {args.csv}")
    return 0


# ------------------------------------------------------------- ablate


def cmd_ablate(args) -> int:
    variants = args.variants.split(",") if args.variants else list(TRAINABLE)
    for v in variants:
        if v not in TRAINABLE:
            raise ValueError(f"unknown variant {v!r}; choose from {', '.join(TRAINABLE)}")
    cfg = toy_train_config(iterations=args.iterations, seed=args.seed,
                           canvas_size=args.canvas_size)
    codec = LatentCodec(args.codec)
    schedule = make_schedule(args.schedule_steps)
    rows = []
    for variant in variants:
        _say(f"[{variant}] {cfg.iterations} iterations...")
        decoder, encoder = _build_models(variant, cfg.canvas_size, codec, cfg.seed)
        try:
            result = train(decoder, encoder, codec, cfg, schedule)
        except ConvergenceError as e:
            _say(f"[{variant}] diverged: {e}")
            rows.append({"variant": variant, "final_loss_avg": float("nan"),
                         "seconds": float("nan"), "per_step_flops_10pct": 0})
            continue
        n = decoder.cfg.geometry.n_tokens
        k10 = max(1, round(0.10 * n))
        flops = decoder_flops(decoder.cfg, n if variant == "regenerate_image" else k10)
        rows.append({
            "variant": variant,
            "final_loss_avg": result.diagnostics["final_moving_average"],
            "seconds": result.diagnostics["seconds"],
            "per_step_flops_10pct": flops.flops,
        })
        if args.save_dir:
            os.makedirs(args.save_dir, exist_ok=True)
            path = os.path.join(args.save_dir, f"{variant}.lzp")
            save_pipeline(path, decoder, encoder,
                          {"codec": codec.kind, "schedule_T": schedule.T,
                           "train_config": json.loads(cfg.to_json())})
            _say(f"[{variant}] saved {path}")
    _print_rows(rows, ["variant", "final_loss_avg", "seconds",
                       "per_step_flops_10pct"])
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(rows_to_csv(rows))
        _say(f"wrote {args.csv}")
    return 0


# ------------------------------------------------------------- serve


def cmd_serve(args) -> int:
    from .service import serve

    pipeline = _load_edit_pipeline(_resolve_checkpoint(args))
    ui_html = None
    if args.ui:
        with open(args.ui) as fh:
            ui_html = fh.read()
    h, w = pipeline.canvas_size
    _say(f"serving a {w}x{h} {pipeline.decoder.cfg.variant} model "
         f"on http://{args.host}:{args.port}")
    serve(pipeline, host=args.host, port=args.port, ui_html=ui_html)
    return 0


# ------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lazypaint",
        description="Masked image generation that pays only for the hole.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a toy pipeline and save a checkpoint")
    p.add_argument("--out", required=True, help="checkpoint path to write")
    p.add_argument("--variant", default="concat_hidden", choices=TRAINABLE)
    p.add_argument("--config", help="JSON training config file")
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", type=float, dest="weight_decay")
    p.add_argument("--beta1", type=float)
    p.add_argument("--beta2", type=float)
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--iterations", type=int)
    p.add_argument("--cfg-dropout", type=float, dest="cfg_dropout")
    p.add_argument("--seed", type=int)
    p.add_argument("--dataset-size", type=int, dest="dataset_size")
    p.add_argument("--canvas-size", type=int, dest="canvas_size")
    p.add_argument("--codec", default="identity")
    p.add_argument("--schedule-steps", type=int, default=1000, dest="schedule_steps")
    p.add_argument("--trace", help="write the loss trace CSV here")
    p.add_argument("--log-every", type=int, dest="log_every")
    p.set_defaults(run=cmd_train)

    p = sub.add_parser("sample", help="apply one edit from files")
    p.add_argument("--checkpoint")
    p.add_argument("--canvas", help="input canvas PNG (default: blank)")
    p.add_argument("--mask", help="mask PNG (white = regenerate)")
    p.add_argument("--mask-ratio", type=float, default=0.25, dest="mask_ratio")
    p.add_argument("--label", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--guidance", type=float, default=4.5)
    p.add_argument("--sdedit", type=float, default=0.0)
    p.add_argument("--no-poisson", action="store_true", dest="no_poisson")
    p.add_argument("--out", required=True, help="output canvas PNG")
    p.add_argument("--patch", help="also write the bare patch PNG")
    p.add_argument("--telemetry", help="telemetry JSON path, or - for stdout")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(run=cmd_sample)

    p = sub.add_parser("bench", help="cost model: analytic table, optional wall clock")
    p.add_argument("--checkpoint")
    p.add_argument("--full-scale", action="store_true",
                   help="published-scale analytic report instead of the toy model")
    p.add_argument("--ratios", default="1.0,0.5,0.25,0.1,0.05")
    p.add_argument("--steps", type=int, default=50)
    p.add_argument("--measure", action="store_true", help="time real edits")
    p.add_argument("--reps", type=int, default=3)
    p.add_argument("--canvas-size", type=int, default=32, dest="canvas_size")
    p.add_argument("--codec", default="identity")
    p.add_argument("--csv", help="write the table here")
    p.set_defaults(run=cmd_bench)

    p = sub.add_parser("ablate", help="train every conditioning variant briefly")
    p.add_argument("--variants", help=f"comma list from: {','.join(TRAINABLE)}")
    p.add_argument("--iterations", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--canvas-size", type=int, default=32, dest="canvas_size")
    p.add_argument("--codec", default="identity")
    p.add_argument("--schedule-steps", type=int, default=1000, dest="schedule_steps")
    p.add_argument("--save-dir", dest="save_dir", help="save per-variant checkpoints")
    p.add_argument("--csv", help="write the comparison table here")
    p.set_defaults(run=cmd_ablate)

    p = sub.add_parser("serve", help="run the interactive editing HTTP service")
    p.add_argument("--checkpoint")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--ui", help="HTML file to serve at /")
    p.set_defaults(run=cmd_serve)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.run(args)
    except (ValueError, CheckpointError, ConvergenceError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
