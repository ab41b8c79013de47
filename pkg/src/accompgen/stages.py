"""Two-stage factorized generation: semantic stage, coarse stage, orchestrator.

Stage 1 predicts accompaniment semantic tokens from the vocal's semantic
tokens plus quantized prompt codes; stage 2 predicts 3-level coarse codec
tokens from those semantic tokens plus the vocal's coarse tokens. The joint
score of a generated accompaniment is the exact sum of the two stages'
sequence log-probabilities.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import Profile
from .core import (
    CodeGrid,
    CoreError,
    ManifestEntry,
    PromptTokens,
    VocabLayout,
    Waveform,
    flatten,
    unflatten,
)
from .encoders import (
    SynthPromptEncoder,
    SynthSemanticEncoder,
    fit_synth_codec,
    read_wav,
    synth_acoustic_decode,
    synth_acoustic_encode,
)
from .quantize import (
    RVQCodebooks,
    load_rvq,
    rvq_encode,
    rvq_fit,
    save_rvq,
)
from .seeds import derive_seed
from .seqmodel import (
    CausalTransformer,
    Checkpoint,
    TrainConfig,
    TransformerConfig,
    apply_checkpoint,
    build_model,
    checkpoint_from,
    config_fingerprint,
    load_checkpoint,
    sample,
    save_checkpoint,
    train,
)


class StageError(ValueError):
    """Stage assembly, artifact, or generation failure."""


STAGE_KINDS = ("semantic", "coarse")

ARTIFACT_FILES = {
    "layout": "layout.json",
    "profile": "profile.json",
    "sem_quantizer": "sem_quantizer.rvq",
    "codec": "codec.rvq",
    "prompt_quantizer": "prompt_quantizer.rvq",
    "semantic": "semantic.ckpt",
    "coarse": "coarse.ckpt",
}


# ---------------------------------------------------------------------------
# stage specs and sequence assembly
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StageSpec:
    """What one stage conditions on and predicts, against a fixed vocab."""

    kind: str
    layout: VocabLayout
    condition: tuple[tuple[str, int], ...]  # (family, n_levels) in prefix order
    target_family: str
    target_levels: int
    max_seq_len: int

    def __post_init__(self) -> None:
        if self.kind not in STAGE_KINDS:
            raise StageError(f"stage kind must be one of {STAGE_KINDS}, got {self.kind!r}")
        for name, n_levels in self.condition + ((self.target_family, self.target_levels),):
            fam = self.layout.family(name)
            if not 1 <= n_levels <= fam.n_levels:
                raise StageError(
                    f"family {name!r} has {fam.n_levels} levels, cannot use {n_levels}"
                )
        if self.kind == "coarse" and self.target_levels != 3:
            raise StageError(f"coarse stage targets 3 levels, got {self.target_levels}")
        if self.max_seq_len < 4:
            raise StageError(f"max_seq_len too small: {self.max_seq_len}")


def semantic_stage_spec(profile: Profile, max_duration: float | None = None) -> StageSpec:
    d = profile.segment_seconds if max_duration is None else max_duration
    frames = int(d * profile.sem_frame_rate)
    max_len = 3 + profile.prompt_stages + 2 * frames * profile.sem_levels + 1
    return StageSpec(
        kind="semantic",
        layout=profile.vocab_layout(),
        condition=(("prompt", profile.prompt_stages), ("semantic", profile.sem_levels)),
        target_family="semantic",
        target_levels=profile.sem_levels,
        max_seq_len=max_len,
    )


def coarse_stage_spec(profile: Profile, max_duration: float | None = None) -> StageSpec:
    d = profile.segment_seconds if max_duration is None else max_duration
    max_len = (
        3
        + int(d * profile.sem_frame_rate) * profile.sem_levels
        + int(d * profile.codec_frame_rate)
        * (profile.vocal_cond_levels + profile.coarse_target_levels)
        + 1
    )
    return StageSpec(
        kind="coarse",
        layout=profile.vocab_layout(),
        condition=(("semantic", profile.sem_levels), ("coarse", profile.vocal_cond_levels)),
        target_family="coarse",
        target_levels=profile.coarse_target_levels,
        max_seq_len=max_len,
    )


@dataclass(frozen=True)
class AssembledExample:
    """One flat token sequence plus the index where the target region starts."""

    tokens: np.ndarray
    prefix_len: int

    def __post_init__(self) -> None:
        tokens = np.asarray(self.tokens, dtype=np.int64)
        if tokens.ndim != 1 or len(tokens) < 2:
            raise StageError(f"assembled tokens must be a flat sequence, got shape {tokens.shape}")
        if not 2 <= self.prefix_len <= len(tokens):
            raise StageError(f"prefix_len {self.prefix_len} outside [2, {len(tokens)}]")
        object.__setattr__(self, "tokens", tokens)

    @property
    def target_tokens(self) -> np.ndarray:
        return self.tokens[self.prefix_len :]


def _flatten_first_levels(grid: CodeGrid, layout: VocabLayout, family: str, n_levels: int) -> np.ndarray:
    """Flatten only the first n_levels of a grid (frame-major)."""
    fam = layout.family(family)
    if grid.n_levels < n_levels:
        raise StageError(
            f"grid has {grid.n_levels} levels, condition needs {n_levels}"
        )
    restricted = grid.level_prefix(n_levels)
    if n_levels == fam.n_levels:
        return flatten(restricted, layout, family)
    if restricted.codebook_size != fam.codebook_size:
        raise StageError(
            f"grid codebook {restricted.codebook_size} != family codebook {fam.codebook_size}"
        )
    offsets = fam.base_offset + np.arange(n_levels, dtype=np.int64) * fam.codebook_size
    return (restricted.codes + offsets[None, :]).reshape(-1)


def _check_len(spec: StageSpec, n_tokens: int) -> None:
    if n_tokens > spec.max_seq_len:
        raise StageError(
            f"{spec.kind} sequence of {n_tokens} tokens exceeds max_seq_len {spec.max_seq_len}"
        )


def assemble_semantic(
    spec: StageSpec,
    prompt: PromptTokens,
    vocal_sem: CodeGrid,
    target_sem: CodeGrid | None = None,
) -> AssembledExample:
    """BOS, prompt codes, SEP, vocal semantics, SEP, [target semantics, EOS]."""
    if spec.kind != "semantic":
        raise StageError(f"semantic assembly needs a semantic spec, got {spec.kind!r}")
    layout = spec.layout
    prompt_family, prompt_stages = spec.condition[0]
    if prompt.n_stages != prompt_stages:
        raise StageError(f"prompt has {prompt.n_stages} stages, spec expects {prompt_stages}")
    prompt_ids = np.array(
        [layout.token_id(prompt_family, lvl, int(c)) for lvl, c in enumerate(prompt.codes)],
        dtype=np.int64,
    )
    vocal_ids = flatten(vocal_sem, layout, "semantic")
    parts = [
        np.array([layout.bos], dtype=np.int64),
        prompt_ids,
        np.array([layout.sep], dtype=np.int64),
        vocal_ids,
        np.array([layout.sep], dtype=np.int64),
    ]
    prefix_len = 3 + len(prompt_ids) + len(vocal_ids)
    if target_sem is not None:
        if target_sem.n_frames != vocal_sem.n_frames:
            raise StageError(
                f"target has {target_sem.n_frames} frames, vocal has {vocal_sem.n_frames}"
            )
        parts.append(flatten(target_sem, layout, "semantic"))
        parts.append(np.array([layout.eos], dtype=np.int64))
    tokens = np.concatenate(parts)
    _check_len(spec, len(tokens))
    return AssembledExample(tokens, prefix_len)


def assemble_coarse(
    spec: StageSpec,
    accomp_sem: CodeGrid,
    vocal_coarse: CodeGrid,
    target_coarse: CodeGrid | None = None,
) -> AssembledExample:
    """BOS, accomp semantics, SEP, vocal coarse (first n_cond levels), SEP, [target, EOS]."""
    if spec.kind != "coarse":
        raise StageError(f"coarse assembly needs a coarse spec, got {spec.kind!r}")
    layout = spec.layout
    n_cond = spec.condition[1][1]
    sem_ids = flatten(accomp_sem, layout, "semantic")
    cond_ids = _flatten_first_levels(vocal_coarse, layout, "coarse", n_cond)
    parts = [
        np.array([layout.bos], dtype=np.int64),
        sem_ids,
        np.array([layout.sep], dtype=np.int64),
        cond_ids,
        np.array([layout.sep], dtype=np.int64),
    ]
    prefix_len = 3 + len(sem_ids) + len(cond_ids)
    if target_coarse is not None:
        if target_coarse.n_levels != spec.target_levels:
            raise StageError(
                f"coarse target must have exactly {spec.target_levels} levels, "
                f"got {target_coarse.n_levels}"
            )
        parts.append(flatten(target_coarse, layout, "coarse"))
        parts.append(np.array([layout.eos], dtype=np.int64))
    tokens = np.concatenate(parts)
    _check_len(spec, len(tokens))
    return AssembledExample(tokens, prefix_len)


# ---------------------------------------------------------------------------
# stage artifacts: quantizers, layout, checkpoints, profile
# ---------------------------------------------------------------------------


@dataclass
class StageArtifacts:
    """Everything generation needs, as saved to / loaded from one directory."""

    profile: Profile
    layout: VocabLayout
    sem_quantizer: RVQCodebooks | None = None
    codec: RVQCodebooks | None = None
    prompt_quantizer: RVQCodebooks | None = None
    semantic_config: TransformerConfig | None = None
    semantic_model: CausalTransformer | None = None
    semantic_step: int = 0
    coarse_config: TransformerConfig | None = None
    coarse_model: CausalTransformer | None = None
    coarse_step: int = 0
    semantic_ckpt: Checkpoint | None = field(default=None, repr=False)
    coarse_ckpt: Checkpoint | None = field(default=None, repr=False)
    semantic_history: list = field(default_factory=list, repr=False)
    coarse_history: list = field(default_factory=list, repr=False)

    def semantic_encoder(self) -> SynthSemanticEncoder:
        return SynthSemanticEncoder(embed_dim=self.profile.sem_embed_dim)

    def prompt_encoder(self) -> SynthPromptEncoder:
        return SynthPromptEncoder(embed_dim=self.profile.prompt_embed_dim)

    def require(self, *names: str) -> None:
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise StageError(f"stage artifacts missing: {', '.join(missing)}")


def new_artifacts(profile: Profile) -> StageArtifacts:
    return StageArtifacts(profile=profile, layout=profile.vocab_layout())


def stage_fingerprint(kind: str, config: TransformerConfig, layout: VocabLayout) -> bytes:
    return config_fingerprint(config, extra={"stage": kind, "layout": layout.to_dict()})


def _write_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def save_stage_artifacts(dirpath: str | Path, arts: StageArtifacts) -> None:
    """Write whichever pieces are present, under their fixed file names."""
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    _write_json(d / ARTIFACT_FILES["layout"], arts.layout.to_dict())
    _write_json(
        d / ARTIFACT_FILES["profile"],
        {
            "profile": arts.profile.to_dict(),
            "semantic_model": arts.semantic_config.to_dict() if arts.semantic_config else None,
            "coarse_model": arts.coarse_config.to_dict() if arts.coarse_config else None,
        },
    )
    for name in ("sem_quantizer", "codec", "prompt_quantizer"):
        books = getattr(arts, name)
        if books is not None:
            save_rvq(d / ARTIFACT_FILES[name], books)
    for kind in STAGE_KINDS:
        model = getattr(arts, f"{kind}_model")
        if model is None:
            continue
        ckpt = getattr(arts, f"{kind}_ckpt")
        if ckpt is None:
            fp = stage_fingerprint(kind, model.config, arts.layout)
            ckpt = checkpoint_from(model, None, getattr(arts, f"{kind}_step"), fp)
        save_checkpoint(d / ARTIFACT_FILES[kind], ckpt)


def load_stage_artifacts(dirpath: str | Path) -> StageArtifacts:
    """Load whatever the directory holds; models are rebuilt and restored."""
    d = Path(dirpath)
    profile_path = d / ARTIFACT_FILES["profile"]
    layout_path = d / ARTIFACT_FILES["layout"]
    if not profile_path.exists() or not layout_path.exists():
        raise StageError(f"no stage artifacts under {d}")
    meta = json.loads(profile_path.read_text())
    profile = Profile.from_dict(meta["profile"])
    layout = VocabLayout.from_dict(json.loads(layout_path.read_text()))
    if layout != profile.vocab_layout():
        raise StageError(f"layout.json under {d} does not match its profile")
    arts = StageArtifacts(profile=profile, layout=layout)
    for name in ("sem_quantizer", "codec", "prompt_quantizer"):
        path = d / ARTIFACT_FILES[name]
        if path.exists():
            setattr(arts, name, load_rvq(path))
    for kind in STAGE_KINDS:
        cfg_dict = meta.get(f"{kind}_model")
        path = d / ARTIFACT_FILES[kind]
        if cfg_dict is None or not path.exists():
            continue
        config = TransformerConfig.from_dict(cfg_dict)
        ckpt = load_checkpoint(path, expected_fingerprint=stage_fingerprint(kind, config, layout))
        model = build_model(config)
        apply_checkpoint(ckpt, model)
        model.eval()
        setattr(arts, f"{kind}_config", config)
        setattr(arts, f"{kind}_model", model)
        setattr(arts, f"{kind}_step", ckpt.step)
        setattr(arts, f"{kind}_ckpt", ckpt)
    return arts


# ---------------------------------------------------------------------------
# quantizer fitting and manifest encoding
# ---------------------------------------------------------------------------

PROMPT_FIT_GENRES = ("ballad", "jazz", "pop", "rock", "romantic")
PROMPT_FIT_INSTRUMENTS = ("bass", "drum", "guitar", "organ", "piano")
PROMPT_FIT_TEMPOS = tuple(range(60, 185, 5))


def _phrase(words: tuple[str, ...]) -> str:
    return words[0] if len(words) == 1 else ", ".join(words[:-1]) + " and " + words[-1]


def prompt_fit_texts(extra: list[str] | None = None) -> list[str]:
    """Deterministic prompt grid spanning the tag whitelists, plus extras."""
    texts = []
    combos = [
        c
        for r in (2, 3)
        for c in itertools.combinations(PROMPT_FIT_INSTRUMENTS, r)
    ]
    for genre in PROMPT_FIT_GENRES:
        for combo in combos:
            for bpm in PROMPT_FIT_TEMPOS:
                texts.append(f"A {genre} song with {_phrase(combo)} at {bpm} bpm")
    seen = set(texts)
    for t in sorted(set(extra or [])):
        if t not in seen:
            texts.append(t)
    return texts


def _read_stems(entry: ManifestEntry) -> tuple[Waveform, Waveform]:
    try:
        return read_wav(entry.vocal_path), read_wav(entry.accomp_path)
    except (OSError, CoreError) as e:
        raise StageError(f"cannot read audio for entry {entry.id!r}: {e}")


def fit_stage_quantizers(
    manifest: list[ManifestEntry],
    arts: StageArtifacts,
    seed: int = 0,
    max_iters: int = 25,
) -> StageArtifacts:
    """Fit the semantic, codec, and prompt quantizers over a manifest."""
    if not manifest:
        raise StageError("cannot fit quantizers on an empty manifest")
    profile = arts.profile
    sem_enc = arts.semantic_encoder()
    prompt_enc = arts.prompt_encoder()
    waves: list[Waveform] = []
    sem_embs: list[np.ndarray] = []
    for entry in manifest:
        vocal, accomp = _read_stems(entry)
        waves += [vocal, accomp]
        sem_embs += [sem_enc.encode(vocal), sem_enc.encode(accomp)]
    arts.sem_quantizer = rvq_fit(
        np.vstack(sem_embs),
        n_stages=profile.sem_levels,
        k=profile.sem_codebook,
        max_iters=max_iters,
        seed=derive_seed(seed, "sem-quantizer"),
    )
    arts.codec = fit_synth_codec(
        waves,
        n_stages=profile.codec_stages,
        k=profile.codec_codebook,
        seed=derive_seed(seed, "codec"),
        max_iters=max_iters,
    )
    texts = prompt_fit_texts(extra=[e.prompt for e in manifest])
    prompt_vecs = np.stack([prompt_enc.encode_text(t) for t in texts])
    arts.prompt_quantizer = rvq_fit(
        prompt_vecs,
        n_stages=profile.prompt_stages,
        k=profile.prompt_codebook,
        max_iters=max_iters,
        seed=derive_seed(seed, "prompt-quantizer"),
    )
    return arts


@dataclass(frozen=True)
class EncodedEntry:
    """All token views of one manifest entry."""

    entry_id: str
    prompt: PromptTokens
    vocal_sem: CodeGrid
    accomp_sem: CodeGrid
    vocal_coarse: CodeGrid
    accomp_coarse: CodeGrid


def encode_prompt_text(text: str, arts: StageArtifacts) -> PromptTokens:
    arts.require("prompt_quantizer")
    vec = arts.prompt_encoder().encode_text(text)
    codes = rvq_encode(vec, arts.prompt_quantizer)
    return PromptTokens(codes, codebook_size=arts.profile.prompt_codebook)


def encode_semantic_grid(w: Waveform, arts: StageArtifacts) -> CodeGrid:
    arts.require("sem_quantizer")
    emb = arts.semantic_encoder().encode(w)
    codes = rvq_encode(emb, arts.sem_quantizer)
    return CodeGrid(codes, float(arts.profile.sem_frame_rate), arts.profile.sem_codebook)


def encode_manifest_entry(entry: ManifestEntry, arts: StageArtifacts) -> EncodedEntry:
    arts.require("sem_quantizer", "codec", "prompt_quantizer")
    profile = arts.profile
    vocal, accomp = _read_stems(entry)
    vocal_coarse = synth_acoustic_encode(vocal, arts.codec)
    accomp_coarse = synth_acoustic_encode(accomp, arts.codec)
    return EncodedEntry(
        entry_id=entry.id,
        prompt=encode_prompt_text(entry.prompt, arts),
        vocal_sem=encode_semantic_grid(vocal, arts),
        accomp_sem=encode_semantic_grid(accomp, arts),
        vocal_coarse=vocal_coarse.level_prefix(profile.vocal_cond_levels),
        accomp_coarse=accomp_coarse.level_prefix(profile.coarse_target_levels),
    )


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def assemble_for_training(spec: StageSpec, encoded: EncodedEntry) -> AssembledExample:
    if spec.kind == "semantic":
        return assemble_semantic(spec, encoded.prompt, encoded.vocal_sem, encoded.accomp_sem)
    return assemble_coarse(spec, encoded.accomp_sem, encoded.vocal_coarse, encoded.accomp_coarse)


def default_model_config(spec: StageSpec, settings: dict | None = None) -> TransformerConfig:
    s = dict(settings or {})
    return TransformerConfig(
        vocab_size=spec.layout.total_size,
        d_model=int(s.get("d_model", 64)),
        n_layers=int(s.get("n_layers", 2)),
        n_heads=int(s.get("n_heads", 4)),
        d_ff=int(s.get("d_ff", 256)),
        max_seq_len=spec.max_seq_len,
    )


def train_stage(
    spec: StageSpec,
    manifest: list[ManifestEntry],
    arts: StageArtifacts,
    tc: TrainConfig,
    model_settings: dict | None = None,
    log_path: str | Path | None = None,
) -> Checkpoint:
    """Encode, assemble, and train one stage; the model lands in `arts`."""
    if not manifest:
        raise StageError("cannot train on an empty manifest")
    encoded = [encode_manifest_entry(e, arts) for e in manifest]
    dataset = []
    for enc in encoded:
        ex = assemble_for_training(spec, enc)
        dataset.append((torch.as_tensor(ex.tokens), ex.prefix_len, len(ex.tokens)))
    config = default_model_config(spec, model_settings)
    model = build_model(config, seed=derive_seed(tc.seed, f"{spec.kind}-init"))
    history, optimizer = train(model, dataset, tc, log_path=log_path)
    fp = stage_fingerprint(spec.kind, config, spec.layout)
    ckpt = checkpoint_from(model, optimizer, step=tc.max_steps, fingerprint=fp)
    setattr(arts, f"{spec.kind}_config", config)
    setattr(arts, f"{spec.kind}_model", model)
    setattr(arts, f"{spec.kind}_step", tc.max_steps)
    setattr(arts, f"{spec.kind}_ckpt", ckpt)
    setattr(arts, f"{spec.kind}_history", history)
    return ckpt


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------


def _sample_exact(
    model: CausalTransformer,
    spec: StageSpec,
    prefix: np.ndarray,
    n_frames: int,
    temperature: float,
    top_k: int,
    seed: int,
) -> tuple[np.ndarray, float]:
    """Sample exactly n_frames x target_levels ids, level-masked per step."""
    layout = spec.layout
    fam = spec.target_family
    levels = spec.target_levels
    level_ids = [layout.family_level_ids(fam, lvl) for lvl in range(levels)]
    n_new = n_frames * levels
    tokens, logprobs = sample(
        model,
        prefix,
        max_new=n_new,
        temperature=temperature,
        top_k=top_k,
        seed=seed,
        stop_id=None,
        allowed_ids=lambda step: level_ids[step % levels],
        return_logprobs=True,
    )
    new_ids = tokens.numpy()
    if len(new_ids) != n_new:
        raise StageError(f"generation stopped early: {len(new_ids)} of {n_new} ids")
    return new_ids, float(np.sum(logprobs))


def generate_semantic(
    model: CausalTransformer,
    spec: StageSpec,
    arts: StageArtifacts,
    prompt_text: str,
    vocal: Waveform,
    temperature: float = 0.9,
    top_k: int = 50,
    seed: int = 0,
) -> tuple[CodeGrid, float]:
    """Sample the accompaniment semantic grid for a vocal and prompt."""
    prompt = encode_prompt_text(prompt_text, arts)
    vocal_sem = encode_semantic_grid(vocal, arts)
    ex = assemble_semantic(spec, prompt, vocal_sem, None)
    _check_len(spec, ex.prefix_len + vocal_sem.n_frames * spec.target_levels)
    new_ids, logprob = _sample_exact(
        model, spec, ex.tokens, vocal_sem.n_frames, temperature, top_k, seed
    )
    grid = unflatten(new_ids, spec.layout, "semantic", frame_rate=float(arts.profile.sem_frame_rate))
    return grid, logprob


def generate_coarse(
    model: CausalTransformer,
    spec: StageSpec,
    arts: StageArtifacts,
    accomp_sem: CodeGrid,
    vocal: Waveform,
    temperature: float = 0.9,
    top_k: int = 50,
    seed: int = 0,
) -> tuple[CodeGrid, float]:
    """Sample the 3-level coarse grid for an accompaniment's semantics."""
    arts.require("codec")
    profile = arts.profile
    if accomp_sem.frame_rate != profile.sem_frame_rate:
        raise StageError(
            f"semantic grid at {accomp_sem.frame_rate} Hz, expected {profile.sem_frame_rate}"
        )
    sem_dur = accomp_sem.duration
    if abs(sem_dur - vocal.duration) > 1.0 / profile.sem_frame_rate + 1e-9:
        raise StageError(
            f"semantic grid spans {sem_dur:.3f} s but vocal spans {vocal.duration:.3f} s"
        )
    vocal_coarse = synth_acoustic_encode(vocal, arts.codec)
    ex = assemble_coarse(spec, accomp_sem, vocal_coarse, None)
    n_frames = vocal_coarse.n_frames
    _check_len(spec, ex.prefix_len + n_frames * spec.target_levels)
    new_ids, logprob = _sample_exact(model, spec, ex.tokens, n_frames, temperature, top_k, seed)
    grid = unflatten(new_ids, spec.layout, "coarse", frame_rate=float(profile.codec_frame_rate))
    return grid, logprob


@dataclass(frozen=True)
class GenerationResult:
    """One generated accompaniment with its factorized score."""

    waveform: Waveform
    semantic_grid: CodeGrid
    coarse_grid: CodeGrid
    semantic_logprob: float
    coarse_logprob: float
    joint_logprob: float

    def report(self) -> dict:
        return {
            "semantic_logprob": self.semantic_logprob,
            "coarse_logprob": self.coarse_logprob,
            "joint_logprob": self.joint_logprob,
            "token_counts": {
                "semantic": int(self.semantic_grid.codes.size),
                "coarse": int(self.coarse_grid.codes.size),
            },
            "duration": self.waveform.duration,
        }


def generate_accompaniment(
    arts: StageArtifacts,
    prompt_text: str,
    vocal: Waveform,
    temperature: float = 0.9,
    top_k: int = 50,
    seed: int = 0,
) -> GenerationResult:
    """Run both stages and decode; joint score is their exact sum."""
    arts.require("semantic_model", "coarse_model", "sem_quantizer", "codec", "prompt_quantizer")
    profile = arts.profile
    sem_spec = semantic_stage_spec(profile)
    crs_spec = coarse_stage_spec(profile)
    sem_grid, sem_lp = generate_semantic(
        arts.semantic_model,
        sem_spec,
        arts,
        prompt_text,
        vocal,
        temperature=temperature,
        top_k=top_k,
        seed=derive_seed(seed, "semantic"),
    )
    coarse_grid, coarse_lp = generate_coarse(
        arts.coarse_model,
        crs_spec,
        arts,
        sem_grid,
        vocal,
        temperature=temperature,
        top_k=top_k,
        seed=derive_seed(seed, "coarse"),
    )
    wave = synth_acoustic_decode(
        coarse_grid, arts.codec, use_levels=profile.coarse_target_levels,
        sample_rate=profile.sample_rate,
    )
    return GenerationResult(
        waveform=wave,
        semantic_grid=sem_grid,
        coarse_grid=coarse_grid,
        semantic_logprob=sem_lp,
        coarse_logprob=coarse_lp,
        joint_logprob=sem_lp + coarse_lp,
    )
