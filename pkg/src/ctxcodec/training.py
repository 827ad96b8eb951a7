"""Rate-distortion objective and the staged training loop."""

from __future__ import annotations

import copy
import dataclasses
from pathlib import Path

import numpy as np
import torch

from .codec import CodecModel
from .coding import frame_to_tensor
from .config import CodecConfig, TrainingConfig, frame_weight
from .entropy import RateEstimate
from .errors import NumericError
from .evaluation import msssim_tensor
from .frameio import Frame, pad_to_multiple16

CHECKPOINT_VERSION = 1


def rd_loss(x, x_hat, rate_bits, weight: float, lam: float, mode: str = "mse"):
    """w * lambda * d(x, x_hat) + rate, with the rate in bits per padded pixel."""
    if isinstance(rate_bits, RateEstimate):
        rate_bits = rate_bits.bits
    if not torch.is_tensor(x):
        x = torch.as_tensor(x)
    if not torch.is_tensor(x_hat):
        x_hat = torch.as_tensor(x_hat)
    pixels = x.shape[-1] * x.shape[-2]
    if mode == "mse":
        d = torch.mean((x - x_hat) ** 2)
    elif mode == "msssim":
        d = 1.0 - msssim_tensor(x, x_hat)
    else:
        raise ValueError(f"unknown distortion mode {mode!r}")
    loss = weight * lam * d + rate_bits / pixels
    if torch.is_tensor(loss):
        if not torch.isfinite(loss):
            raise NumericError("non-finite training loss")
    elif not np.isfinite(loss):
        raise NumericError("non-finite training loss")
    return loss


def clip_loss(per_frame):
    """Mean over the unrolled frames."""
    if len(per_frame) == 0:
        raise ValueError("clip loss needs at least one frame loss")
    if torch.is_tensor(per_frame[0]):
        return torch.stack(list(per_frame)).mean()
    return float(np.mean(per_frame))


def _motion_parameters(model: CodecModel):
    mods = [model.flow_net, model.motion_ae, model.motion_prior]
    for m in mods:
        yield from m.parameters()


def clip_tensors(clip: list[Frame]) -> list[torch.Tensor]:
    return [frame_to_tensor(pad_to_multiple16(f)) for f in clip]


def unrolled_clip_loss(
    model: CodecModel,
    tensors: list[torch.Tensor],
    lam: float,
    weights,
    mode: str = "mse",
    motion_only: bool = False,
):
    """Intra-anchor the first frame, code the rest sequentially, average Eq-style
    per-frame losses. Keeps gradients across the in-clip recurrence."""
    x0 = model.intra_reconstruct(tensors[0])
    buf = model.intra_buffer(x0)
    losses = []
    recons = []
    for t, x in enumerate(tensors[1:], start=1):
        out = model.train_inter(x, buf, motion_only=motion_only)
        w = frame_weight(t, weights)
        if motion_only:
            bits = out["bits_motion"] + out["bits_hyper_motion"]
            losses.append(rd_loss(x, out["warped"], bits, w, lam, "mse"))
        else:
            bits = (
                out["bits_motion"]
                + out["bits_hyper_motion"]
                + out["bits_context"]
                + out["bits_hyper_context"]
            )
            losses.append(rd_loss(x, out["x_hat"], bits, w, lam, mode))
            recons.append(out["x_hat"])
            buf = model.update_buffer(buf, out["x_hat"], out["feature"])
    return clip_loss(losses), recons


def save_checkpoint(path, model: CodecModel, config: TrainingConfig, stage: str, step: int, distortion: str):
    payload = {
        "version": CHECKPOINT_VERSION,
        "lambda_index": config.lambda_index,
        "lambda": config.rd_lambda,
        "distortion": distortion,
        "stage": stage,
        "step": step,
        "codec_config": dataclasses.asdict(model.cfg),
        "model_state": model.state_dict(),
    }
    torch.save(payload, path)


def load_checkpoint(path) -> tuple[CodecModel, dict]:
    payload = torch.load(path, map_location="cpu", weights_only=False)
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
    cfg_fields = dict(payload["codec_config"])
    cfg_fields["ctx_channels"] = tuple(cfg_fields["ctx_channels"])
    model = CodecModel(CodecConfig(**cfg_fields))
    model.load_state_dict(payload["model_state"])
    model.eval()
    return model, payload


def train(
    config: TrainingConfig,
    clips: list[list[Frame]],
    model: CodecModel | None = None,
    checkpoint_dir: str | Path | None = None,
    stop_check=None,
    log_every: int = 0,
) -> tuple[CodecModel, dict]:
    """Staged schedule: motion warmup, short full unroll, cascaded unroll,
    low-rate fine-tune. One model per lambda; fully seeded; per-stage
    checkpoints. Returns the model and the per-stage loss history."""
    torch.manual_seed(config.seed)
    rng = np.random.default_rng(config.seed)
    if model is None:
        model = CodecModel(CodecConfig())
    model.train()
    lam = config.rd_lambda
    history: dict[str, list[float]] = {}
    prepared = [clip_tensors(c[: config.clip_frames]) for c in clips]
    ckpt_dir = Path(checkpoint_dir) if checkpoint_dir else None
    stopped = False
    for stage, unroll, steps, lr in config.stages:
        if stopped:
            break
        motion_only = stage == "motion"
        params = list(_motion_parameters(model)) if motion_only else list(model.parameters())
        opt = torch.optim.AdamW(params, lr=lr, weight_decay=config.weight_decay)
        losses: list[float] = []
        history[stage] = losses
        for step in range(steps):
            batch_losses = []
            opt.zero_grad(set_to_none=True)
            for _ in range(config.batch_size):
                clip = prepared[int(rng.integers(len(prepared)))]
                tensors = clip[: unroll + 1]
                loss, _ = unrolled_clip_loss(
                    model, tensors, lam, config.frame_weights, config.distortion, motion_only
                )
                (loss / config.batch_size).backward()
                batch_losses.append(float(loss.item()))
            torch.nn.utils.clip_grad_norm_(params, config.grad_clip)
            opt.step()
            losses.append(float(np.mean(batch_losses)))
            if log_every and step % log_every == 0:
                print(f"[{stage}] step {step}: loss {losses[-1]:.4f}", flush=True)
            if stop_check is not None and stop_check(stage, step, losses):
                stopped = True
                break
        if ckpt_dir is not None:
            save_checkpoint(
                ckpt_dir / f"ckpt_lambda{config.lambda_index}_{stage}.pt",
                model, config, stage, len(losses), config.distortion,
            )
    model.eval()
    return model, history


def finetune_msssim(
    config: TrainingConfig,
    clips: list[list[Frame]],
    model: CodecModel,
    steps: int = 100,
    lr: float = 1e-5,
    checkpoint_dir: str | Path | None = None,
) -> tuple[CodecModel, dict]:
    """Short 1-MS-SSIM fine-tune on a copy; the input model is untouched."""
    tuned = copy.deepcopy(model)
    ft_config = dataclasses.replace(
        config,
        distortion="msssim",
        stages=(("finetune-msssim", config.clip_frames - 1, steps, lr),),
    )
    tuned, history = train(ft_config, clips, tuned, checkpoint_dir=checkpoint_dir)
    return tuned, history
