"""Command-line entry points: train, encode, decode, eval, bdrate, heatmap.

Exit codes: 0 ok, 2 config error, 3 data error, 4 decode-verification failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import torch

from . import bitstream, coding
from .codec import CodecModel
from .config import (
    ConfigError,
    TrainingConfig,
    CodecConfig,
    load_config_file,
)
from .errors import CodingError, CorruptionError, DataError, FormatError
from .evaluation import (
    bd_rate,
    context_heatmap,
    parse_rd_csv,
    run_test_protocol,
    save_heatmap,
)
from .frameio import SequenceSpec, crop_random_patch, load_sequence
from .training import load_checkpoint, save_checkpoint, train

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_VERIFY = 4


def _load_spec(args) -> SequenceSpec:
    if not args.config:
        raise ConfigError("--config is required")
    cfg = load_config_file(args.config)
    return SequenceSpec.from_config(cfg, base=Path(args.config).parent)


def _load_model(args) -> tuple[CodecModel, dict]:
    if not args.checkpoint:
        raise ConfigError("--checkpoint is required")
    if not Path(args.checkpoint).is_file():
        raise ConfigError(f"checkpoint not found: {args.checkpoint}")
    return load_checkpoint(args.checkpoint)


def _parse_stages(text: str):
    stages = []
    for part in text.split(","):
        name, unroll, steps, lr = part.split(":")
        stages.append((name, int(unroll), int(steps), float(lr)))
    return tuple(stages)


def cmd_train(args) -> int:
    cfg = load_config_file(args.config) if args.config else {}
    spec = SequenceSpec.from_config(cfg, base=Path(args.config).parent) if "source" in cfg else None
    kwargs = {}
    for key, cast in (
        ("lambda_index", int),
        ("clip_frames", int),
        ("batch_size", int),
        ("seed", int),
        ("distortion", str),
        ("weight_decay", float),
    ):
        if key in cfg:
            kwargs[key] = cast(cfg[key])
    if "stages" in cfg:
        kwargs["stages"] = _parse_stages(cfg["stages"])
    if args.lambda_index is not None:
        kwargs["lambda_index"] = args.lambda_index
    if args.seed is not None:
        kwargs["seed"] = args.seed
    tcfg = TrainingConfig(**kwargs)

    if spec is None:
        raise ConfigError("training config must name a source sequence")
    frames = load_sequence(spec, int(cfg.get("frames", spec.frames)))
    if "crop" in cfg:
        rng = np.random.default_rng(tcfg.seed)
        clips = []
        for start in range(0, len(frames) - tcfg.clip_frames + 1, tcfg.clip_frames):
            clip = frames[start : start + tcfg.clip_frames]
            clips.append(crop_random_patch(clip, int(cfg["crop"]), rng))
    else:
        clips = [
            frames[s : s + tcfg.clip_frames]
            for s in range(0, len(frames) - tcfg.clip_frames + 1, tcfg.clip_frames)
        ]
    if not clips:
        raise DataError(f"sequence too short for {tcfg.clip_frames}-frame clips")

    model = CodecModel(CodecConfig.for_variant(args.variant))
    out = Path(args.out or "checkpoint.pt")
    out.parent.mkdir(parents=True, exist_ok=True)
    model, history = train(tcfg, clips, model, checkpoint_dir=out.parent, log_every=args.log_every)
    save_checkpoint(out, model, tcfg, "final", sum(len(v) for v in history.values()), tcfg.distortion)
    print(f"trained {sum(len(v) for v in history.values())} steps; checkpoint: {out}")
    return EXIT_OK


def cmd_encode(args) -> int:
    spec = _load_spec(args)
    model, meta = _load_model(args)
    if meta.get("lambda_index") != args.lambda_index:
        print(
            f"warning: checkpoint was trained for lambda index {meta.get('lambda_index')}, "
            f"encoding with {args.lambda_index}",
            file=sys.stderr,
        )
    n = args.frames or spec.frames
    frames = load_sequence(spec, n)
    data, stats, _ = coding.encode_sequence(model, frames, args.intra_period, args.lambda_index)
    out = Path(args.out or "out.lstc")
    out.write_bytes(data)
    bpp = bitstream.bpp_of(data)
    print(f"wrote {out} ({len(data)} bytes, {bpp:.6f} bpp, {len(frames)} frames)")
    for st in stats:
        print(f"frame {st.index:3d} {st.frame_type} {st.payload_bits:8d} bits  hash {st.recon_hash[:16]}")
    if args.stats_out:
        payload = {
            "bpp": bpp,
            "frames": [
                {
                    "index": st.index,
                    "type": st.frame_type,
                    "bits": st.payload_bits,
                    "estimate_bits": st.estimate_bits,
                    "hash": st.recon_hash,
                }
                for st in stats
            ],
        }
        Path(args.stats_out).write_text(json.dumps(payload, indent=1))
    return EXIT_OK


def cmd_decode(args) -> int:
    model, meta = _load_model(args)
    path = Path(args.bitstream)
    if not path.is_file():
        raise DataError(f"bitstream not found: {path}")
    header, recons, stats = coding.decode_sequence(model, path.read_bytes())
    if meta.get("lambda_index") != header.lambda_index:
        print(
            f"warning: stream was coded at lambda index {header.lambda_index}, "
            f"checkpoint is for {meta.get('lambda_index')}; reconstruction is defined but quality may be off",
            file=sys.stderr,
        )
    outdir = Path(args.out or "decoded")
    outdir.mkdir(parents=True, exist_ok=True)
    frames = coding.decoded_display_frames(header, recons)
    from PIL import Image

    for i, f in enumerate(frames):
        arr = np.round(f.pixels.transpose(1, 2, 0) * 255.0).astype(np.uint8)
        Image.fromarray(arr).save(outdir / f"frame{i:04d}.png")
    for st in stats:
        print(f"frame {st.index:3d} {st.frame_type} hash {st.recon_hash}")
    if args.expect_hashes:
        expected = json.loads(Path(args.expect_hashes).read_text())["frames"]
        for exp, st in zip(expected, stats):
            if exp["hash"] != st.recon_hash:
                print(f"verification failed at frame {st.index}", file=sys.stderr)
                return EXIT_VERIFY
        print("verification ok: all reconstruction hashes match")
    return EXIT_OK


def cmd_eval(args) -> int:
    spec = _load_spec(args)
    frames = load_sequence(spec, args.frames or spec.frames)
    models = {}
    for ck in args.checkpoint:
        model, meta = load_checkpoint(ck)
        models[int(meta["lambda_index"])] = model
    result = run_test_protocol(
        [(spec.source.name, frames)], models, intra_period=args.intra_period, verify=True
    )
    outdir = Path(args.out or "eval-out")
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "rd.csv").write_text(result.csv)
    (outdir / "report.txt").write_text(result.summary)
    print(result.csv, end="")
    print(f"report: {outdir / 'report.txt'}")
    return EXIT_OK


def cmd_bdrate(args) -> int:
    anchor = parse_rd_csv(Path(args.anchor).read_text())
    test = parse_rd_csv(Path(args.test).read_text())
    value = bd_rate(anchor, test, quality=args.quality)
    print(f"BD-Rate ({args.quality}): {value:+.4f}%")
    return EXIT_OK


def cmd_heatmap(args) -> int:
    spec = _load_spec(args)
    model, _ = _load_model(args)
    n = args.frame_index + 1
    frames = load_sequence(spec, n)
    from .frameio import pad_to_multiple16

    schedule = coding.frame_schedule(n, args.intra_period)
    if schedule[args.frame_index]:
        raise ConfigError(f"frame {args.frame_index} is intra-coded and has no mined context")
    buf = None
    heat = None
    with torch.no_grad():
        for t, frame in enumerate(frames):
            x = coding.frame_to_tensor(pad_to_multiple16(frame))
            if schedule[t]:
                buf = model.intra_buffer(model.intra_reconstruct(x))
                continue
            symbols, recon = model.code_inter(x, buf)
            if t == args.frame_index:
                heat = context_heatmap(recon["ctx"].level1, model.cfg.ctx_channels[0])
                break
            buf = model.update_buffer(buf, recon["x_hat"], recon["feature"])
    out = Path(args.out or "heatmap.png")
    save_heatmap(heat, out)
    print(f"wrote {out} ({heat.shape[1]}x{heat.shape[0]})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ctxcodec", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, checkpoint=True):
        sp.add_argument("--config", help="key=value config file")
        if checkpoint:
            sp.add_argument("--checkpoint", help="model checkpoint path")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--out", default=None)

    sp = sub.add_parser("train", help="train a model for one lambda")
    common(sp, checkpoint=False)
    sp.add_argument("--lambda-index", type=int, choices=range(4), default=None)
    sp.add_argument("--variant", choices=("Ma", "Mb", "Mc", "full"), default="full")
    sp.add_argument("--log-every", type=int, default=0)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("encode", help="encode a sequence to a container")
    common(sp)
    sp.add_argument("--lambda-index", type=int, choices=range(4), default=3)
    sp.add_argument("--frames", type=int, default=None)
    sp.add_argument("--intra-period", type=int, default=32)
    sp.add_argument("--stats-out", default=None)
    sp.set_defaults(func=cmd_encode)

    sp = sub.add_parser("decode", help="decode a container to frames")
    common(sp)
    sp.add_argument("bitstream")
    sp.add_argument("--expect-hashes", default=None, help="stats JSON from the encoder")
    sp.set_defaults(func=cmd_decode)

    sp = sub.add_parser("eval", help="run the coding protocol and emit RD points")
    common(sp, checkpoint=False)
    sp.add_argument("--checkpoint", action="append", default=[], help="repeat per rate point")
    sp.add_argument("--frames", type=int, default=None)
    sp.add_argument("--intra-period", type=int, default=32)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("bdrate", help="BD-rate between two RD CSV files")
    sp.add_argument("--anchor", required=True)
    sp.add_argument("--test", required=True)
    sp.add_argument("--quality", choices=("psnr", "msssim"), default="psnr")
    sp.set_defaults(func=cmd_bdrate)

    sp = sub.add_parser("heatmap", help="context heatmap for one inter frame")
    common(sp)
    sp.add_argument("--frame-index", type=int, default=1)
    sp.add_argument("--intra-period", type=int, default=32)
    sp.set_defaults(func=cmd_heatmap)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "seed", None) is not None:
        torch.manual_seed(args.seed)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (CorruptionError, CodingError, FormatError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
