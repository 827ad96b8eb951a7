#!/usr/bin/env python3
"""Overfit the full codec on a single 5-frame 64x64 clip (rate point 3).

The run reports the training-loss trajectory and the coded (real
quantization) PSNR of the clip's inter frames, stopping as soon as the
final loss undercuts a quarter of the step-100 loss and the coded PSNR
clears the target.
"""

import argparse
import sys
import time
from pathlib import Path

import numpy as np
import torch

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from ctxcodec import coding
from ctxcodec.codec import CodecModel
from ctxcodec.config import CodecConfig, TrainingConfig
from ctxcodec.evaluation import sequence_psnr
from ctxcodec.frameio import Frame
from ctxcodec.training import train


def smoke_clip(n=5, size=64, seed=0):
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float32)
    g = np.random.default_rng(seed)
    ph = g.uniform(0, 6.28, size=3)
    frames = []
    for t in range(n):
        r = 0.5 + 0.35 * np.sin((xx + 2.0 * t) / 7.0 + ph[0]) * np.cos((yy - 1.0 * t) / 9.0)
        gc = 0.5 + 0.35 * np.cos((xx - 1.5 * t) / 11.0 + ph[1]) * np.sin((yy + 2.5 * t) / 6.0)
        b = 0.5 + 0.35 * np.sin((xx + yy + 3.0 * t) / 13.0 + ph[2])
        arr = np.stack([r, gc, b]).clip(0.0, 1.0)
        frames.append(Frame.from_array(np.round(arr * 255.0).astype(np.float32) / 255.0))
    return frames


def coded_inter_psnr(model, frames):
    """PSNR of the inter frames after real coding (the intra frame is
    stored losslessly and would only inflate the average)."""
    was_training = model.training
    data, stats, recons = coding.encode_sequence(model, frames, intra_period=32, lambda_index=3)
    rec = [Frame(r.squeeze(0).numpy(), 64, 64) for r in recons]
    value = sequence_psnr(frames[1:], rec[1:])
    if was_training:
        model.train()
    return value, len(data)


def run(max_steps=2000, lr=1e-3, psnr_target=28.0, check_every=50, seed=0, log=print):
    torch.manual_seed(seed)
    frames = smoke_clip()
    model = CodecModel(CodecConfig())
    config = TrainingConfig(
        lambda_index=3,
        clip_frames=5,
        seed=seed,
        stages=(("cascade", 4, max_steps, lr),),
    )
    t0 = time.perf_counter()
    state = {"psnr": None, "bytes": None, "stopped_at": None}

    def stop_check(stage, step, losses):
        if step % check_every or step < 100:
            return False
        ratio = losses[-1] / losses[99] if len(losses) > 99 else float("inf")
        psnr_now, nbytes = coded_inter_psnr(model, frames)
        state.update(psnr=psnr_now, bytes=nbytes)
        log(
            f"step {step}: loss {losses[-1]:.4f} (ratio {ratio:.3f}), "
            f"coded PSNR {psnr_now:.2f} dB, {nbytes} B, {time.perf_counter() - t0:.0f}s"
        )
        if ratio < 0.25 and psnr_now >= psnr_target:
            state["stopped_at"] = step
            return True
        return False

    model, history = train(config, [frames], model, stop_check=stop_check)
    losses = history["cascade"]
    psnr_final, nbytes = coded_inter_psnr(model, frames)
    elapsed = time.perf_counter() - t0
    result = {
        "steps": len(losses),
        "loss_100": losses[99] if len(losses) > 99 else None,
        "loss_final": losses[-1],
        "ratio": losses[-1] / losses[99] if len(losses) > 99 else None,
        "coded_psnr": psnr_final,
        "elapsed_s": elapsed,
    }
    log(
        f"done after {result['steps']} steps in {elapsed:.0f}s: "
        f"loss {result['loss_final']:.4f} (ratio {result['ratio']:.3f} of step-100), "
        f"coded inter PSNR {psnr_final:.2f} dB"
    )
    return model, frames, result


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("--max-steps", type=int, default=2000)
    ap.add_argument("--lr", type=float, default=1e-3)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--check-every", type=int, default=50)
    ap.add_argument("--out", default=None, help="save the trained checkpoint here")
    args = ap.parse_args()
    model, frames, result = run(
        max_steps=args.max_steps, lr=args.lr, seed=args.seed, check_every=args.check_every
    )
    if args.out:
        from ctxcodec.training import save_checkpoint

        config = TrainingConfig(lambda_index=3, clip_frames=5)
        save_checkpoint(args.out, model, config, "smoke", result["steps"], "mse")
    ok = result["ratio"] is not None and result["ratio"] < 0.25 and result["coded_psnr"] >= 28.0
    sys.exit(0 if ok else 1)
