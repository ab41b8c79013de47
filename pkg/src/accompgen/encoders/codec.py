"""Synthetic 75 Hz acoustic codec: windowed frame features + RVQ + overlap-add.

Encode slices the waveform into 256-sample hann-windowed frames at 75 Hz,
average-pools each by 2 into a 128-dim feature, and RVQ-encodes the
features. Decode sums centroid prefixes back into frame features and
weighted-overlap-adds them, then hard-clips to [-1, 1].
"""

from __future__ import annotations

import numpy as np

from ..core import CodeGrid, CoreError, Waveform
from ..quantize import QuantizeError, RVQCodebooks, rvq_decode, rvq_encode, rvq_fit

FRAME_RATE = 75
FRAME_LEN = 256
FEATURE_DIM = FRAME_LEN // 2


def frame_features(w: Waveform) -> np.ndarray:
    """Per-frame codec features, [n_frames x 128]; n_frames = floor(duration * 75)."""
    n_frames = len(w.samples) * FRAME_RATE // w.sample_rate
    window = np.hanning(FRAME_LEN)
    padded = np.concatenate([w.samples, np.zeros(FRAME_LEN)])
    out = np.empty((n_frames, FEATURE_DIM))
    for t in range(n_frames):
        start = t * w.sample_rate // FRAME_RATE
        frame = padded[start : start + FRAME_LEN] * window
        out[t] = frame.reshape(FEATURE_DIM, 2).mean(axis=1)
    return out


def fit_synth_codec(corpus: list[Waveform], n_stages: int = 8, k: int = 64, seed: int = 0, max_iters: int = 25) -> RVQCodebooks:
    """Fit the codec's RVQ over every 75 Hz frame of the corpus."""
    if not corpus:
        raise CoreError("empty corpus")
    feats = np.vstack([frame_features(w) for w in corpus])
    if feats.shape[0] < k:
        raise QuantizeError(f"corpus has {feats.shape[0]} frames, need at least K={k}")
    return rvq_fit(feats, n_stages, k, max_iters=max_iters, seed=seed)


def synth_acoustic_encode(w: Waveform, books: RVQCodebooks) -> CodeGrid:
    """Quantize to a [n_frames x n_stages] grid at 75 Hz."""
    if books.dim != FEATURE_DIM:
        raise QuantizeError(f"codec quantizer dim {books.dim} != feature dim {FEATURE_DIM}")
    feats = frame_features(w)
    codes = rvq_encode(feats, books) if len(feats) else np.zeros((0, books.n_stages), dtype=np.int64)
    return CodeGrid(codes, float(FRAME_RATE), books.k)


def synth_acoustic_decode(
    grid: CodeGrid, books: RVQCodebooks, use_levels: int | None = None, sample_rate: int = 16000
) -> Waveform:
    """Overlap-add the first use_levels centroid sums back to audio.

    Output length is floor(n_frames * sample_rate / 75) samples.
    """
    if use_levels is None:
        use_levels = grid.n_levels
    if not 1 <= use_levels <= books.n_stages:
        raise QuantizeError(f"use_levels {use_levels} outside [1, {books.n_stages}]")
    if grid.n_levels < use_levels:
        raise CoreError(f"grid has {grid.n_levels} levels, asked for {use_levels}")
    n_out = grid.n_frames * sample_rate // FRAME_RATE
    if grid.n_frames == 0:
        return Waveform(np.zeros(0), sample_rate)
    feats = rvq_decode(grid.codes[:, :use_levels], books)
    window = np.hanning(FRAME_LEN)
    acc = np.zeros(n_out + FRAME_LEN)
    norm = np.zeros(n_out + FRAME_LEN)
    for t in range(grid.n_frames):
        start = t * sample_rate // FRAME_RATE
        frame = np.repeat(feats[t], 2) * window
        acc[start : start + FRAME_LEN] += frame
        norm[start : start + FRAME_LEN] += window**2
    out = np.where(norm > 1e-8, acc / np.maximum(norm, 1e-8), 0.0)[:n_out]
    return Waveform(np.clip(out, -1.0, 1.0), sample_rate)
