"""Dataclass configs and the key=value config-file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path


class ConfigError(Exception):
    """Bad or missing configuration."""


# Rate-distortion weights used for the four rate points.
LAMBDA_VALUES = (85.0, 170.0, 380.0, 840.0)

# Hierarchical per-frame weights, cycled with period 4 for longer clips.
FRAME_WEIGHT_CYCLE = (0.5, 1.2, 0.5, 0.9)

VARIANTS = ("Ma", "Mb", "Mc", "full")


@dataclass(frozen=True)
class CodecConfig:
    """Architecture hyper-parameters.

    Defaults are the production widths; tests shrink them to keep
    finite-difference checks and smoke runs cheap. The three context scales
    always carry ``ctx_channels`` maps at resolutions H, H/2, H/4.
    """

    chain_channels: int = 48          # hidden/cell width of both recurrent branches
    feature_channels: int = 64        # F_t buffer width
    ctx_channels: tuple[int, int, int] = (48, 64, 96)
    motion_latent_channels: int = 64
    frame_latent_channels: int = 96
    hyper_channels: int = 64
    flow_net_channels: int = 24
    # Ablation toggles: Ma = no chain, no spatial/fusion; Mb = chain only.
    use_chain: bool = True
    use_spatial_fusion: bool = True
    sigma_floor: float = 0.04

    @property
    def variant(self) -> str:
        if not self.use_chain:
            return "Ma"
        return "Mc" if self.use_spatial_fusion else "Mb"

    @staticmethod
    def for_variant(name: str, **overrides) -> "CodecConfig":
        if name not in VARIANTS:
            raise ConfigError(f"unknown variant {name!r}; expected one of {VARIANTS}")
        toggles = {
            "Ma": dict(use_chain=False, use_spatial_fusion=False),
            "Mb": dict(use_chain=True, use_spatial_fusion=False),
            "Mc": dict(use_chain=True, use_spatial_fusion=True),
            "full": dict(use_chain=True, use_spatial_fusion=True),
        }[name]
        toggles.update(overrides)
        return CodecConfig(**toggles)


@dataclass
class TrainingConfig:
    """Schedule and objective for the staged training loop."""

    lambdas: tuple[float, ...] = LAMBDA_VALUES
    lambda_index: int = 3
    frame_weights: tuple[float, ...] = FRAME_WEIGHT_CYCLE
    clip_frames: int = 5              # frames per clip; clip_frames-1 inter frames unrolled
    batch_size: int = 1
    # (stage name, inter frames unrolled, optimizer steps, learning rate)
    stages: tuple[tuple[str, int, int, float], ...] = (
        ("motion", 1, 200, 1e-3),
        ("full2", 1, 300, 1e-3),
        ("cascade", 4, 1200, 1e-3),
        ("finetune", 4, 300, 1e-4),
    )
    distortion: str = "mse"           # "mse" or "msssim"
    weight_decay: float = 1e-4
    grad_clip: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.lambda_index not in range(len(self.lambdas)):
            raise ConfigError(f"lambda_index {self.lambda_index} out of range")
        if any(l <= 0 for l in self.lambdas):
            raise ConfigError("lambda values must be positive")
        if self.clip_frames < 2:
            raise ConfigError("clips need at least 2 frames (one inter frame)")
        if not self.frame_weights:
            raise ConfigError("frame weight cycle must be non-empty")
        if self.distortion not in ("mse", "msssim"):
            raise ConfigError(f"unknown distortion mode {self.distortion!r}")

    @property
    def rd_lambda(self) -> float:
        return self.lambdas[self.lambda_index]


def frame_weight(t: int, cycle=FRAME_WEIGHT_CYCLE) -> float:
    """Weight of the t-th inter frame of a clip (t = 1 for the first)."""
    if t < 1:
        raise ConfigError("inter-frame index starts at 1")
    return cycle[(t - 1) % len(cycle)]


def parse_config_text(text: str) -> dict[str, str]:
    """Parse ``key = value`` lines; '#' starts a comment, blanks ignored."""
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def load_config_file(path: str | Path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_text(path.read_text())
