"""Profiles (rates, sizes, vocab shape) and the flat-key run configuration."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .core import CoreError, VocabLayout, build_vocab_layout


@dataclass(frozen=True)
class Profile:
    """Every rate and size the pipeline depends on, in one place."""

    name: str
    sample_rate: int = 16000
    segment_seconds: float = 2.0
    sem_frame_rate: int = 50
    sem_embed_dim: int = 32
    sem_levels: int = 1
    sem_codebook: int = 64
    codec_frame_rate: int = 75
    codec_stages: int = 8
    codec_codebook: int = 64
    coarse_target_levels: int = 3
    vocal_cond_levels: int = 3
    prompt_embed_dim: int = 64
    prompt_stages: int = 12
    prompt_codebook: int = 64

    def vocab_layout(self) -> VocabLayout:
        return build_vocab_layout(
            [
                ("semantic", self.sem_levels, self.sem_codebook),
                ("coarse", self.coarse_target_levels, self.codec_codebook),
                ("prompt", self.prompt_stages, self.prompt_codebook),
            ]
        )

    def sem_frames(self, duration: float | None = None) -> int:
        d = self.segment_seconds if duration is None else duration
        return int(d * self.sem_frame_rate)

    def coarse_frames(self, duration: float | None = None) -> int:
        d = self.segment_seconds if duration is None else duration
        return int(d * self.codec_frame_rate)

    def semantic_seq_len(self) -> int:
        # BOS + prompt + SEP + vocal sem + SEP + target sem + EOS
        frames = self.sem_frames()
        return 3 + self.prompt_stages + 2 * frames * self.sem_levels + 1

    def coarse_seq_len(self) -> int:
        # BOS + accomp sem + SEP + vocal coarse + SEP + target + EOS
        return (
            3
            + self.sem_frames() * self.sem_levels
            + self.coarse_frames() * self.vocal_cond_levels
            + self.coarse_frames() * self.coarse_target_levels
            + 1
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "Profile":
        return cls(**d)


DESK = Profile(name="desk")

PAPER = Profile(
    name="paper",
    segment_seconds=10.0,
    sem_embed_dim=768,
    sem_levels=5,
    sem_codebook=1024,
    codec_stages=12,
    codec_codebook=1024,
    prompt_embed_dim=512,
    prompt_stages=12,
    prompt_codebook=1024,
)

PROFILES = {"desk": DESK, "paper": PAPER}


class ConfigError(ValueError):
    """Bad run configuration."""


# flat dotted keys and their defaults; unknown keys are rejected
CONFIG_DEFAULTS: dict[str, object] = {
    "profile": "desk",
    "seed": 0,
    "paths.corpus": "corpus",
    "paths.artifacts": "artifacts",
    "paths.reports": "reports",
    "corpus.n_tracks": 8,
    "corpus.duration": 2.0,
    "corpus.tempo_lo": 80,
    "corpus.tempo_hi": 160,
    "dataset.segment_seconds": 2.0,
    "model.semantic.d_model": 64,
    "model.semantic.n_layers": 2,
    "model.semantic.n_heads": 4,
    "model.semantic.d_ff": 256,
    "model.coarse.d_model": 64,
    "model.coarse.n_layers": 2,
    "model.coarse.n_heads": 4,
    "model.coarse.d_ff": 256,
    "train.semantic.learning_rate": 2e-3,
    "train.semantic.batch_size": 8,
    "train.semantic.accum_steps": 1,
    "train.semantic.max_steps": 600,
    "train.semantic.warmup_steps": 20,
    "train.semantic.clip_norm": 1.0,
    "train.coarse.learning_rate": 2e-3,
    "train.coarse.batch_size": 8,
    "train.coarse.accum_steps": 1,
    "train.coarse.max_steps": 900,
    "train.coarse.warmup_steps": 20,
    "train.coarse.clip_norm": 1.0,
    "sampling.temperature": 0.9,
    "sampling.top_k": 50,
}


@dataclass
class RunConfig:
    """Flat dotted-key settings; file values override defaults, flags override both."""

    values: dict[str, object] = field(default_factory=dict)

    def __post_init__(self) -> None:
        unknown = set(self.values) - set(CONFIG_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if self.values.get("profile", "desk") not in PROFILES:
            raise ConfigError(f"unknown profile {self.values['profile']!r}")

    @classmethod
    def load(cls, path: str | Path | None, overrides: dict[str, object] | None = None) -> "RunConfig":
        values: dict[str, object] = {}
        if path is not None:
            try:
                raw = json.loads(Path(path).read_text())
            except FileNotFoundError:
                raise ConfigError(f"config file not found: {path}")
            except json.JSONDecodeError as e:
                raise ConfigError(f"config file {path} is not valid JSON: {e}")
            if not isinstance(raw, dict):
                raise ConfigError(f"config file {path} must hold a JSON object")
            values.update(raw)
        if overrides:
            values.update(overrides)
        # coerce override strings to the default's type
        for key, val in list(values.items()):
            default = CONFIG_DEFAULTS.get(key)
            if isinstance(val, str) and not isinstance(default, str):
                try:
                    values[key] = type(default)(json.loads(val))
                except (json.JSONDecodeError, TypeError, ValueError):
                    raise ConfigError(f"config key {key}: cannot parse {val!r}")
        return cls(values)

    def get(self, key: str):
        if key not in CONFIG_DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        return self.values.get(key, CONFIG_DEFAULTS[key])

    @property
    def seed(self) -> int:
        return int(self.get("seed"))

    def profile(self) -> Profile:
        base = PROFILES[str(self.get("profile"))]
        seg = float(self.get("dataset.segment_seconds"))
        return replace(base, segment_seconds=seg) if seg != base.segment_seconds else base

    def path(self, kind: str) -> Path:
        return Path(str(self.get(f"paths.{kind}")))

    def model_settings(self, stage: str) -> dict:
        return {
            "d_model": int(self.get(f"model.{stage}.d_model")),
            "n_layers": int(self.get(f"model.{stage}.n_layers")),
            "n_heads": int(self.get(f"model.{stage}.n_heads")),
            "d_ff": int(self.get(f"model.{stage}.d_ff")),
        }

    def train_settings(self, stage: str) -> dict:
        return {
            "learning_rate": float(self.get(f"train.{stage}.learning_rate")),
            "batch_size": int(self.get(f"train.{stage}.batch_size")),
            "accum_steps": int(self.get(f"train.{stage}.accum_steps")),
            "max_steps": int(self.get(f"train.{stage}.max_steps")),
            "warmup_steps": int(self.get(f"train.{stage}.warmup_steps")),
            "clip_norm": float(self.get(f"train.{stage}.clip_norm")),
        }

    def sampling_settings(self) -> dict:
        return {
            "temperature": float(self.get("sampling.temperature")),
            "top_k": int(self.get("sampling.top_k")),
        }
