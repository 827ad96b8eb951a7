#!/usr/bin/env python3
"""Train all four rate points on a short sequence and emit an RD curve.

Desk-scale stand-in for a full benchmark run: one synthetic (or provided)
sequence, a compressed schedule per rate point, then the coding protocol
with real entropy coding and decode verification.
"""

import argparse
import sys
from pathlib import Path

import torch

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from ctxcodec.codec import CodecModel
from ctxcodec.config import CodecConfig, TrainingConfig, load_config_file
from ctxcodec.evaluation import run_test_protocol
from ctxcodec.frameio import SequenceSpec, load_sequence
from ctxcodec.training import save_checkpoint, train
from overfit_smoke import smoke_clip


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", help="sequence config; synthetic clip if omitted")
    ap.add_argument("--frames", type=int, default=33)
    ap.add_argument("--intra-period", type=int, default=32)
    ap.add_argument("--steps", type=int, default=400)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="rd-out")
    args = ap.parse_args()

    if args.config:
        spec = SequenceSpec.from_config(load_config_file(args.config), base=Path(args.config).parent)
        frames = load_sequence(spec, min(args.frames, spec.frames))
        name = spec.source.name
    else:
        frames = smoke_clip(n=args.frames, size=64, seed=args.seed)
        name = "synthetic64"

    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    clips = [frames[s : s + 5] for s in range(0, len(frames) - 4, 5)]
    models = {}
    for lam_idx in range(4):
        torch.manual_seed(args.seed)
        config = TrainingConfig(
            lambda_index=lam_idx,
            clip_frames=5,
            seed=args.seed,
            stages=(
                ("motion", 1, max(args.steps // 8, 10), 1e-3),
                ("cascade", 4, args.steps, 1e-3),
            ),
        )
        print(f"training rate point {lam_idx} (lambda {config.rd_lambda:g}) ...", flush=True)
        model, _ = train(config, clips, CodecModel(CodecConfig()))
        save_checkpoint(outdir / f"model_l{lam_idx}.pt", model, config, "final", args.steps, "mse")
        models[lam_idx] = model

    result = run_test_protocol([(name, frames)], models, intra_period=args.intra_period)
    (outdir / "rd.csv").write_text(result.csv)
    (outdir / "report.txt").write_text(result.summary)
    print(result.csv)
    print(f"wrote {outdir}/rd.csv and {outdir}/report.txt")


if __name__ == "__main__":
    main()
