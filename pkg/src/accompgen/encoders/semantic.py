"""Synthetic 50 Hz semantic embedding front-end.

Stands in for a pretrained self-supervised music encoder: frames the
waveform at 20 ms hop, measures log-compressed energy in a fixed bank of
triangular frequency bands, and projects with a seeded random matrix.
Pure function of (waveform, config); no learned state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..core import CoreError, Waveform
from ..seeds import derive_seed

FRAME_RATE = 50
N_BANDS = 16
BAND_LO_HZ = 50.0
BAND_HI_HZ = 4000.0


def _band_filters(sample_rate: int, n_fft: int) -> np.ndarray:
    """Triangular filters on log-spaced edges, [N_BANDS x n_bins]."""
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    edges = np.geomspace(BAND_LO_HZ, BAND_HI_HZ, N_BANDS + 2)
    filters = np.zeros((N_BANDS, len(freqs)))
    for i in range(N_BANDS):
        lo, mid, hi = edges[i], edges[i + 1], edges[i + 2]
        up = (freqs - lo) / (mid - lo)
        down = (hi - freqs) / (hi - mid)
        filters[i] = np.clip(np.minimum(up, down), 0.0, None)
    return filters


@dataclass(frozen=True)
class SynthSemanticEncoder:
    """Deterministic spectral-band embedder at 50 frames per second."""

    embed_dim: int = 32
    seed: int = 0
    frame_rate: int = field(default=FRAME_RATE, init=False)

    def projection(self) -> np.ndarray:
        rng = np.random.default_rng(derive_seed(self.seed, "semantic-proj"))
        return rng.standard_normal((N_BANDS, self.embed_dim)) / np.sqrt(N_BANDS)

    def encode(self, w: Waveform) -> np.ndarray:
        """Embed as [n_frames x embed_dim]; n_frames = floor(duration * 50)."""
        if w.sample_rate < 8000:
            raise CoreError(f"sample rate {w.sample_rate} below 8 kHz minimum")
        n_frames = len(w.samples) * FRAME_RATE // w.sample_rate
        if n_frames < 1:
            raise CoreError("waveform shorter than one 20 ms frame")
        win = int(round(0.04 * w.sample_rate))
        window = np.hanning(win)
        padded = np.concatenate([w.samples, np.zeros(win)])
        frames = np.empty((n_frames, win))
        for t in range(n_frames):
            start = t * w.sample_rate // FRAME_RATE
            frames[t] = padded[start : start + win]
        spectra = np.abs(np.fft.rfft(frames * window, axis=1))
        bands = np.log1p(spectra @ _band_filters(w.sample_rate, win).T)
        return bands @ self.projection()


def synth_semantic_encode(w: Waveform, embed_dim: int = 32, seed: int = 0) -> np.ndarray:
    return SynthSemanticEncoder(embed_dim=embed_dim, seed=seed).encode(w)
