"""Synthetic joint text/audio prompt space.

Text side: each lowercase tag hashes to a fixed Gaussian vector; a prompt
embeds as the L2-normalized sum of its tag vectors, so word order never
matters. Audio side: a small DSP descriptor (band energies for the
instrument set, onset autocorrelation for tempo) produces tags that embed
through the same hash, putting both modalities in one comparable space.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from ..core import CoreError, Waveform
from ..seeds import tag_seed

# disjoint bands (Hz) the corpus instruments live in
INSTRUMENT_BANDS = {
    "bass": (40.0, 130.0),
    "guitar": (180.0, 350.0),
    "piano": (400.0, 800.0),
    "organ": (880.0, 1500.0),
    "drum": (2200.0, 3800.0),
}
INSTRUMENT_SHARE_MIN = 0.08

TEMPO_GRID_BPM = range(60, 185, 5)
_TAG_SPLIT = re.compile(r"[^a-z0-9]+")


def split_tags(text: str) -> list[str]:
    """Lowercased alphanumeric tags, deduplicated, order-free (sorted)."""
    return sorted({t for t in _TAG_SPLIT.split(text.lower()) if t})


def _tag_vector(tag: str, embed_dim: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(tag_seed(seed, tag))
    return rng.standard_normal(embed_dim)


def _embed_tags(tags: list[str], embed_dim: int, seed: int) -> np.ndarray:
    total = np.zeros(embed_dim)
    for tag in tags:
        total += _tag_vector(tag, embed_dim, seed)
    norm = np.linalg.norm(total)
    if norm == 0.0:
        raise CoreError("degenerate prompt embedding (zero vector)")
    return total / norm


def hashed_prompt_encode(text: str, embed_dim: int = 64, seed: int = 0) -> np.ndarray:
    """Unit-norm embedding of a text prompt."""
    tags = split_tags(text)
    if not tags:
        raise CoreError("prompt text has no usable tags")
    return _embed_tags(tags, embed_dim, seed)


def detect_tempo(w: Waveform) -> int:
    """Tempo in bpm from onset-envelope autocorrelation over a 5 bpm grid.

    Among candidates within 10% of the best score the highest bpm wins: a
    tempo's half also aligns perfectly with the onset train, its double
    does not. Onset magnitudes are square-root compressed so uneven beat
    accents cannot promote the half tempo.
    """
    hop = max(1, w.sample_rate // 200)
    n = len(w.samples) // hop
    if n < 16:
        raise CoreError("waveform too short for tempo detection")
    frames = w.samples[: n * hop].reshape(n, hop)
    energy = np.sum(frames**2, axis=1)
    onset = np.sqrt(np.maximum(np.diff(energy), 0.0))
    onset = np.convolve(onset, np.hanning(5), mode="same")
    onset = onset - onset.mean()

    scores = {}
    for bpm in TEMPO_GRID_BPM:
        period = 60.0 / bpm * 200.0
        lags = {int(np.floor(period)), int(np.ceil(period))}
        lags = [l for l in lags if 0 < l < len(onset)]
        if lags:
            scores[bpm] = max(
                float(np.mean(onset[l:] * onset[:-l])) for l in lags
            )
    if not scores:
        raise CoreError("waveform too short for tempo detection")
    best = max(scores.values())
    if best <= 0.0:
        return max(scores)
    near = [bpm for bpm, s in scores.items() if s >= 0.90 * best]
    return max(near)


def detect_instruments(w: Waveform) -> list[str]:
    """Instruments whose band holds a meaningful share of in-band energy."""
    spectrum = np.abs(np.fft.rfft(w.samples)) ** 2
    freqs = np.fft.rfftfreq(len(w.samples), d=1.0 / w.sample_rate)
    energies = {
        name: float(spectrum[(freqs >= lo) & (freqs < hi)].sum())
        for name, (lo, hi) in INSTRUMENT_BANDS.items()
    }
    total = sum(energies.values())
    if total <= 0.0:
        return []
    return sorted(name for name, e in energies.items() if e / total >= INSTRUMENT_SHARE_MIN)


def describe_audio(w: Waveform) -> list[str]:
    """Descriptor tags (instruments + tempo) recoverable from audio alone."""
    tags = detect_instruments(w)
    tags += [str(detect_tempo(w)), "bpm"]
    return tags


@dataclass(frozen=True)
class SynthPromptEncoder:
    """Text and audio embeddings in one seeded tag space."""

    embed_dim: int = 64
    seed: int = 0

    def encode_text(self, text: str) -> np.ndarray:
        return hashed_prompt_encode(text, self.embed_dim, self.seed)

    def encode_audio(self, w: Waveform) -> np.ndarray:
        tags = describe_audio(w)
        if not tags:
            raise CoreError("no descriptor tags found in audio")
        return _embed_tags(tags, self.embed_dim, self.seed)
