"""Distribution distance, prompt-audio similarity, and judge-score protocol.

Frechet distance runs over Gaussians fit to audio-embedding sets, with a
fixed covariance shrinkage and an eigendecomposition-based matrix square
root. Prompt-audio similarity is a cosine in the shared prompt space. The
judge protocol renders one fixed question template, collects three runs,
parses each response's stated score, and reports the mean.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from .core import Waveform
from .encoders import SynthPromptEncoder, SynthSemanticEncoder
from .fixtures import FixtureStore

COV_SHRINKAGE = 1e-6
EIG_FLOOR = -1e-10


class EvalError(ValueError):
    """Metric precondition or numeric failure."""


# ---------------------------------------------------------------------------
# Gaussian fitting and Frechet distance
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianStats:
    """Mean and shrunk sample covariance of an embedding set."""

    mean: np.ndarray
    cov: np.ndarray
    n_samples: int

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.cov, dtype=np.float64)
        if mean.ndim != 1 or cov.shape != (len(mean), len(mean)):
            raise EvalError(f"bad stats shapes: mean {mean.shape}, cov {cov.shape}")
        if not (np.isfinite(mean).all() and np.isfinite(cov).all()):
            raise EvalError("non-finite Gaussian stats")
        if np.abs(cov - cov.T).max(initial=0.0) > 1e-12:
            raise EvalError("covariance is not symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return len(self.mean)


def fit_gaussian(embeddings: np.ndarray) -> GaussianStats:
    """Sample mean and (N-1)-divisor covariance plus 1e-6 ridge."""
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise EvalError(f"need at least 2 embedding rows, got shape {x.shape}")
    if not np.isfinite(x).all():
        raise EvalError("non-finite embedding rows")
    mean = x.mean(axis=0)
    centered = x - mean
    cov = centered.T @ centered / (x.shape[0] - 1)
    cov = (cov + cov.T) / 2.0 + COV_SHRINKAGE * np.eye(x.shape[1])
    return GaussianStats(mean, cov, x.shape[0])


def _psd_eigvals(matrix: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecompose a symmetric matrix; clamp tiny negative eigenvalues."""
    vals, vecs = np.linalg.eigh(matrix)
    if vals.min(initial=0.0) < EIG_FLOOR:
        raise EvalError(f"{what} has eigenvalue {vals.min():.3e} < {EIG_FLOOR}")
    return np.clip(vals, 0.0, None), vecs


def _stats_sort_key(s: GaussianStats) -> bytes:
    return s.mean.tobytes() + s.cov.tobytes() + s.n_samples.to_bytes(8, "little")


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)).

    Arguments are put in a canonical order first so the two call orders run
    the identical float program and the result is exactly symmetric.
    """
    if a.dim != b.dim:
        raise EvalError(f"dimension mismatch: {a.dim} vs {b.dim}")
    if _stats_sort_key(a) > _stats_sort_key(b):
        a, b = b, a
    vals_a, vecs_a = _psd_eigvals(a.cov, "covariance")
    root_a = (vecs_a * np.sqrt(vals_a)) @ vecs_a.T
    inner = root_a @ b.cov @ root_a
    inner = (inner + inner.T) / 2.0
    vals_in, _ = _psd_eigvals(inner, "product matrix")
    trace_root = float(np.sqrt(vals_in).sum())
    mean_term = float(np.square(a.mean - b.mean).sum())
    dist = mean_term + float(np.trace(a.cov) + np.trace(b.cov)) - 2.0 * trace_root
    return max(dist, 0.0)


# ---------------------------------------------------------------------------
# audio embedders and FAD
# ---------------------------------------------------------------------------


@runtime_checkable
class AudioEmbedder(Protocol):
    name: str

    def embed(self, w: Waveform) -> np.ndarray: ...


@dataclass(frozen=True)
class SemanticMeanEmbedder:
    """Time-averaged semantic embedding, unit-normalized then scaled."""

    embed_dim: int = 32
    scale: float = 0.5
    name: str = "sem-mean"

    def embed(self, w: Waveform) -> np.ndarray:
        frames = SynthSemanticEncoder(embed_dim=self.embed_dim).encode(w)
        vec = frames.mean(axis=0)
        norm = float(np.linalg.norm(vec))
        if norm <= 0.0:
            raise EvalError("zero-norm semantic embedding")
        return vec * (self.scale / norm)


@dataclass(frozen=True)
class PromptSpaceEmbedder:
    """The prompt encoder's audio branch (already unit-norm)."""

    embed_dim: int = 64
    name: str = "prompt-space"

    def embed(self, w: Waveform) -> np.ndarray:
        return SynthPromptEncoder(embed_dim=self.embed_dim).encode_audio(w)


def desk_embedders() -> list[AudioEmbedder]:
    return [SemanticMeanEmbedder(), PromptSpaceEmbedder()]


def _embed_set(waves: list[Waveform], embedder: AudioEmbedder) -> np.ndarray:
    if len(waves) < 2:
        raise EvalError(f"need at least 2 waveforms per set, got {len(waves)}")
    rows = np.stack([embedder.embed(w) for w in waves])
    # lexicographic row order makes the fit independent of list order
    return rows[np.lexsort(rows.T[::-1])]


def fad(reference: list[Waveform], candidate: list[Waveform], embedder: AudioEmbedder) -> float:
    """Frechet distance between embedding Gaussians of two waveform sets."""
    ref_stats = fit_gaussian(_embed_set(reference, embedder))
    cand_stats = fit_gaussian(_embed_set(candidate, embedder))
    return frechet_distance(ref_stats, cand_stats)


@dataclass(frozen=True)
class FadReport:
    mean: float
    per_embedder: dict

    def to_dict(self) -> dict:
        return {"fad_mean": self.mean, "per_embedder": dict(self.per_embedder)}


def fad_mean(
    reference: list[Waveform], candidate: list[Waveform], embedders: list[AudioEmbedder]
) -> FadReport:
    """Arithmetic mean of per-embedder FADs, with the parts retained."""
    if not embedders:
        raise EvalError("need at least one embedder")
    values = {e.name: fad(reference, candidate, e) for e in embedders}
    return FadReport(mean=float(sum(values.values())) / len(values), per_embedder=values)


# ---------------------------------------------------------------------------
# prompt-audio similarity
# ---------------------------------------------------------------------------


def cosine_similarity(u: np.ndarray, v: np.ndarray) -> float:
    u = np.asarray(u, dtype=np.float64).reshape(-1)
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    nu, nv = float(np.linalg.norm(u)), float(np.linalg.norm(v))
    if nu <= 0.0 or nv <= 0.0:
        raise EvalError("zero-norm vector in cosine similarity")
    return float(u @ v / (nu * nv))


def prompt_audio_score(prompt: str, audio: Waveform, enc: SynthPromptEncoder) -> float:
    """Cosine between the prompt's text embedding and the audio embedding."""
    if not prompt.strip():
        raise EvalError("empty prompt")
    return cosine_similarity(enc.encode_text(prompt), enc.encode_audio(audio))


# ---------------------------------------------------------------------------
# judge protocol
# ---------------------------------------------------------------------------

JUDGE_CRITERIA = ("genre", "instruments")

JUDGE_QUESTION_TEMPLATE = (
    "Given the <audio input>, with prompt {prompt}, as a producer, can you "
    "give the score for the alignment between the {criterion} of the song "
    "with prompt input on a scale from 0 to 100?"
)

_SCORE_RE = re.compile(r"\bis\b(.*)$", re.DOTALL)
_NUMBER_RE = re.compile(r"(\d+(?:\.\d+)?)")


@runtime_checkable
class JudgeClient(Protocol):
    def ask(self, audio_path: str, question: str, run: int) -> str: ...


def render_judge_question(prompt: str, criterion: str) -> str:
    if criterion not in JUDGE_CRITERIA:
        raise EvalError(f"criterion must be one of {JUDGE_CRITERIA}, got {criterion!r}")
    return JUDGE_QUESTION_TEMPLATE.format(prompt=prompt, criterion=criterion)


def parse_judge_score(response: str) -> float:
    """First number after the answer's 'is', required to sit in [0, 100]."""
    tail = _SCORE_RE.search(response)
    number = _NUMBER_RE.search(tail.group(1)) if tail else None
    if number is None:
        raise EvalError(f"cannot parse a score from judge response {response!r}")
    score = float(number.group(1))
    if not 0.0 <= score <= 100.0:
        raise EvalError(f"judge score {score} outside [0, 100]")
    return score


@dataclass(frozen=True)
class JudgeResult:
    question: str
    scores: tuple[float, ...]
    responses: tuple[str, ...]

    @property
    def mean(self) -> float:
        return float(sum(self.scores)) / len(self.scores)

    def to_dict(self) -> dict:
        return {
            "question": self.question,
            "scores": list(self.scores),
            "responses": list(self.responses),
            "mean": self.mean,
        }


def judge_alignment(
    audio_path: str | Path,
    prompt: str,
    criterion: str,
    client: JudgeClient,
    runs: int = 3,
) -> JudgeResult:
    """Ask the judge `runs` times with the fixed template; mean the scores."""
    if runs < 1:
        raise EvalError(f"runs must be >= 1, got {runs}")
    question = render_judge_question(prompt, criterion)
    responses = []
    scores = []
    for run in range(runs):
        response = client.ask(str(audio_path), question, run)
        responses.append(response)
        scores.append(parse_judge_score(response))
    return JudgeResult(question=question, scores=tuple(scores), responses=tuple(responses))


def audio_file_digest(path: str | Path) -> str:
    """Content digest used to key judge fixtures to a specific audio file."""
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def judge_request(audio_path: str | Path, question: str, run: int) -> dict:
    return {
        "kind": "judge",
        "audio_sha256": audio_file_digest(audio_path),
        "question": question,
        "run": run,
    }


class FixtureJudge:
    """Replays recorded judge responses keyed by (audio content, question, run)."""

    def __init__(self, path: str | Path):
        self.store = FixtureStore(path)

    def ask(self, audio_path: str, question: str, run: int) -> str:
        return self.store.lookup(judge_request(audio_path, question, run))
