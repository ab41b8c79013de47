"""Paired synthetic vocal/accompaniment corpus.

Every track shares one tempo grid: the vocal sings scale tones with
vibrato on the beats, and each accompaniment instrument plays a seeded
deterministic pattern confined to its own frequency band (see
prompt.INSTRUMENT_BANDS), so prompts are recoverable from the audio.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..core import CoreError, ManifestEntry, Waveform, write_manifest
from ..seeds import derive_seed
from .wav import write_wav

GENRE_SCALES = {
    "pop": (0, 2, 4, 5, 7, 9, 11),
    "rock": (0, 3, 5, 7, 10),
    "jazz": (0, 2, 3, 5, 7, 9, 10),
    "ballad": (0, 2, 4, 7, 9),
}
FALLBACK_SCALE = (0, 2, 4, 5, 7, 9, 11)

# per-instrument (base frequency Hz, static gain); tones stay in the
# instrument's band for every scale degree within one octave
INSTRUMENT_VOICING = {
    "bass": (55.0, 1.0),
    "guitar": (196.0, 1.2),
    "piano": (440.0, 1.2),
    "organ": (880.0, 0.8),
    "drum": (0.0, 3.0),
}


@dataclass(frozen=True)
class CorpusSpec:
    """Recipe for one deterministic corpus."""

    n_tracks: int
    duration: float = 2.0
    genres: tuple[str, ...] = ("pop", "rock", "jazz", "ballad")
    instruments: tuple[str, ...] = ("drum", "bass", "guitar", "piano", "organ")
    tempo_range: tuple[int, int] = (80, 160)
    sample_rate: int = 16000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_tracks < 1:
            raise CoreError("n_tracks must be >= 1")
        if self.duration <= 0:
            raise CoreError("duration must be positive")
        if not self.genres or not self.instruments:
            raise CoreError("genres and instruments must be nonempty")
        lo, hi = self.tempo_range
        if not 0 < lo <= hi:
            raise CoreError(f"bad tempo range {self.tempo_range}")


def _note_env(tau: np.ndarray, decay: float) -> np.ndarray:
    """5 ms attack ramp then exponential decay."""
    attack = np.clip(tau / 0.005, 0.0, 1.0)
    return attack * np.exp(-tau / decay)


def _beat_times(t: np.ndarray, tempo: int) -> tuple[np.ndarray, np.ndarray]:
    beat = 60.0 / tempo
    idx = np.floor(t / beat).astype(np.int64)
    return idx, t - idx * beat


def _scale_tone(base: float, scale: tuple[int, ...], rng: np.random.Generator) -> float:
    return base * 2.0 ** (scale[rng.integers(len(scale))] / 12.0)


def _synth_vocal(t: np.ndarray, tempo: int, scale: tuple[int, ...], rng: np.random.Generator) -> np.ndarray:
    idx, tau = _beat_times(t, tempo)
    freqs = np.array([_scale_tone(220.0, scale, rng) * rng.choice([1.0, 2.0]) for _ in range(idx.max() + 1)])
    f = freqs[idx]
    vibrato = 1.5 * np.sin(2 * np.pi * 5.0 * t)
    phase = 2 * np.pi * f * tau + vibrato
    tone = np.sin(phase) + 0.4 * np.sin(2 * phase) + 0.2 * np.sin(3 * phase)
    return tone * _note_env(tau, 0.3)


def _synth_drum(t: np.ndarray, tempo: int, sample_rate: int, rng: np.random.Generator) -> np.ndarray:
    _, tau = _beat_times(t, tempo)
    burst = rng.standard_normal(len(t)) * np.exp(-tau / 0.04) * (tau < 0.12)
    spectrum = np.fft.rfft(burst)
    freqs = np.fft.rfftfreq(len(t), d=1.0 / sample_rate)
    spectrum[(freqs < 2200.0) | (freqs >= 3800.0)] = 0.0
    out = np.fft.irfft(spectrum, n=len(t))
    peak = np.abs(out).max()
    return out / peak if peak > 0 else out


def _synth_tonal(
    t: np.ndarray,
    tempo: int,
    base: float,
    scale: tuple[int, ...],
    decay: float,
    retrigger_beats: int,
    rng: np.random.Generator,
) -> np.ndarray:
    idx, tau = _beat_times(t, tempo)
    group = idx // retrigger_beats
    # degrees above 9 semitones would leave the instrument's band
    in_band = tuple(d for d in scale if d <= 9)
    freqs = np.array([_scale_tone(base, in_band, rng) for _ in range(group.max() + 1)])
    beat = 60.0 / tempo
    tau_group = tau + (idx % retrigger_beats) * beat
    return np.sin(2 * np.pi * freqs[group] * tau_group) * _note_env(tau_group, decay)


def _synth_instrument(
    name: str, t: np.ndarray, tempo: int, scale: tuple[int, ...], sample_rate: int, rng: np.random.Generator
) -> np.ndarray:
    base, gain = INSTRUMENT_VOICING[name]
    if name == "drum":
        return gain * _synth_drum(t, tempo, sample_rate, rng)
    if name == "organ":
        # held across the bar, pumped in time with the beat
        wave = _synth_tonal(t, tempo, base, scale, 10.0, 4, rng)
        _, tau = _beat_times(t, tempo)
        return gain * wave * (0.6 + 0.4 * np.exp(-tau / 0.1))
    decay = {"bass": 0.18, "guitar": 0.15, "piano": 0.25}[name]
    return gain * _synth_tonal(t, tempo, base, scale, decay, 1, rng)


def synthesize_track(
    genre: str,
    instruments: list[str],
    tempo: int,
    duration: float,
    sample_rate: int = 16000,
    seed: int = 0,
) -> tuple[Waveform, Waveform]:
    """Render one (vocal, accompaniment) pair on a shared tempo grid."""
    unknown = [i for i in instruments if i not in INSTRUMENT_VOICING]
    if unknown:
        raise CoreError(f"no voicing for instruments {unknown}")
    scale = GENRE_SCALES.get(genre, FALLBACK_SCALE)
    n = int(duration * sample_rate)
    t = np.arange(n) / sample_rate

    vocal_rng = np.random.default_rng(derive_seed(seed, "vocal"))
    vocal = _synth_vocal(t, tempo, scale, vocal_rng)
    vocal *= 0.5 / max(np.abs(vocal).max(), 1e-9)

    accomp = np.zeros(n)
    for name in instruments:
        rng = np.random.default_rng(derive_seed(seed, "inst", name))
        accomp += _synth_instrument(name, t, tempo, scale, sample_rate, rng)
    accomp *= 0.5 / max(np.abs(accomp).max(), 1e-9)
    return Waveform(vocal, sample_rate), Waveform(accomp, sample_rate)


def _instrument_phrase(instruments: list[str]) -> str:
    if len(instruments) == 1:
        return instruments[0]
    return ", ".join(instruments[:-1]) + " and " + instruments[-1]


def generate_corpus(spec: CorpusSpec, out_dir: str | Path) -> list[ManifestEntry]:
    """Write n_tracks WAV pairs plus manifest.jsonl; returns the entries."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lo, hi = spec.tempo_range
    tempo_choices = [b for b in range(lo, hi + 1) if b % 5 == 0] or [lo]
    entries = []
    for i in range(spec.n_tracks):
        track_id = f"track{i:03d}"
        track_seed = derive_seed(spec.seed, track_id)
        rng = np.random.default_rng(derive_seed(track_seed, "cast"))
        genre = str(rng.choice(list(spec.genres)))
        n_inst = int(rng.integers(2, min(3, len(spec.instruments)) + 1))
        instruments = sorted(str(s) for s in rng.choice(list(spec.instruments), size=n_inst, replace=False))
        tempo = int(rng.choice(tempo_choices))
        vocal, accomp = synthesize_track(
            genre, instruments, tempo, spec.duration, spec.sample_rate, track_seed
        )
        write_wav(out / f"{track_id}.vocal.wav", vocal)
        write_wav(out / f"{track_id}.accomp.wav", accomp)
        entries.append(
            ManifestEntry(
                id=track_id,
                vocal_path=f"{track_id}.vocal.wav",
                accomp_path=f"{track_id}.accomp.wav",
                prompt=f"A {genre} song with {_instrument_phrase(instruments)} at {tempo} bpm",
                tags={"genre": genre, "instruments": instruments, "rhythm": f"{tempo} bpm"},
                duration=spec.duration,
            )
        )
    write_manifest(out / "manifest.jsonl", entries)
    return entries
