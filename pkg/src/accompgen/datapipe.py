"""Manifest building from raw songs: segmentation, captioning, tag extraction.

Songs arrive as pre-separated stem pairs ({id}.vocal.wav + {id}.accomp.wav)
or as mixes ({id}.wav) routed through a source-separation client. Both stems
are cut on identical boundaries; the accompaniment segment is captioned,
tags are extracted, and a prompt is formatted per entry. Songs that fail any
step are skipped and logged, never silently dropped.
"""

from __future__ import annotations

import json
import re
import unicodedata
from pathlib import Path
from typing import Protocol, runtime_checkable

from .core import CoreError, ManifestEntry, Waveform, write_manifest
from .encoders import read_wav, write_wav
from .encoders.prompt import detect_instruments, detect_tempo
from .fixtures import FixtureError, FixtureStore, audio_payload

GENRE_TAGS = ("ballad", "jazz", "pop", "rock", "romantic")
INSTRUMENT_TAGS = ("bass", "drum", "guitar", "organ", "piano")
TEMPO_WORDS = ("slow", "mid", "fast")

_RHYTHM_RE = re.compile(r"\b(\d+)\s*bpm\b|\b(slow|mid|fast)\b")


class DatapipeError(RuntimeError):
    """Manifest-building failure."""


class ClientFailure(RuntimeError):
    """An external client declined or failed a request."""


# ---------------------------------------------------------------------------
# segmentation
# ---------------------------------------------------------------------------


def segment(w: Waveform, seg_len: float) -> list[Waveform]:
    """Non-overlapping seg_len windows; a trailing remainder is dropped."""
    if seg_len <= 0:
        raise DatapipeError(f"seg_len must be positive, got {seg_len}")
    step = round(seg_len * w.sample_rate)
    if step < 1:
        raise DatapipeError(f"seg_len {seg_len} shorter than one sample")
    n = len(w.samples) // step
    return [Waveform(w.samples[k * step : (k + 1) * step], w.sample_rate) for k in range(n)]


# ---------------------------------------------------------------------------
# tag extraction and prompt formatting
# ---------------------------------------------------------------------------


def fallback_extract_tags(caption: str) -> dict:
    """Whitelist keyword scan; pure function of the caption string."""
    low = caption.lower()
    genres = sorted(g for g in GENRE_TAGS if re.search(rf"\b{g}s?\b", low))
    instruments = sorted(i for i in INSTRUMENT_TAGS if re.search(rf"\b{i}s?\b", low))
    rhythm = ""
    m = _RHYTHM_RE.search(low)
    if m:
        rhythm = f"{m.group(1)} bpm" if m.group(1) else m.group(2)
    return {"genre": genres, "instruments": instruments, "rhythm": rhythm}


def format_prompt(tags: dict) -> str:
    """'A {genre} song with {instruments} at {rhythm}', empty clauses omitted."""
    genre = tags.get("genre", "")
    if isinstance(genre, (list, tuple)):
        genre = ", ".join(genre)
    instruments = list(tags.get("instruments", []))
    rhythm = str(tags.get("rhythm", ""))
    if not (genre or instruments or rhythm):
        raise DatapipeError("cannot format a prompt from all-empty tags")
    text = f"A {genre} song" if genre else "A song"
    if instruments:
        text += " with " + ", ".join(instruments)
    if rhythm:
        text += f" at {rhythm}"
    return text


def normalize_prompt(text: str) -> str:
    """Lowercase ASCII with collapsed whitespace."""
    out = unicodedata.normalize("NFKD", text).encode("ascii", "ignore").decode("ascii")
    return " ".join(out.split()).lower()


# ---------------------------------------------------------------------------
# external clients
# ---------------------------------------------------------------------------


@runtime_checkable
class SourceSeparatorClient(Protocol):
    def separate(self, mixed: Waveform) -> tuple[Waveform, Waveform]: ...


@runtime_checkable
class CaptionerClient(Protocol):
    def caption(self, w: Waveform) -> str: ...


@runtime_checkable
class TagExtractorClient(Protocol):
    def extract(self, caption: str) -> dict: ...


class DescriptorCaptioner:
    """Network-free captioner built on the audio descriptors."""

    def caption(self, w: Waveform) -> str:
        instruments = detect_instruments(w)
        bpm = detect_tempo(w)
        if instruments:
            return f"a song with {', '.join(instruments)} at {bpm} bpm"
        return f"a song at {bpm} bpm"


class FallbackTagExtractor:
    """The deterministic whitelist scan as a client."""

    def extract(self, caption: str) -> dict:
        return fallback_extract_tags(caption)


class FixtureCaptioner:
    """Replays recorded captions keyed by audio content."""

    def __init__(self, path: str | Path):
        self.store = FixtureStore(path)

    def caption(self, w: Waveform) -> str:
        return self.store.lookup({"kind": "caption", **audio_payload(w)})


class FixtureTagExtractor:
    """Replays recorded tag extractions keyed by caption text."""

    def __init__(self, path: str | Path):
        self.store = FixtureStore(path)

    def extract(self, caption: str) -> dict:
        raw = self.store.lookup({"kind": "tags", "caption": caption})
        try:
            tags = json.loads(raw)
        except json.JSONDecodeError as e:
            raise ClientFailure(f"recorded tag response is not JSON: {e}")
        for fld in ("genre", "instruments", "rhythm"):
            if fld not in tags:
                raise ClientFailure(f"recorded tag response missing field {fld!r}")
        return tags


# ---------------------------------------------------------------------------
# manifest building
# ---------------------------------------------------------------------------


def _discover_songs(input_dir: Path) -> tuple[dict[str, dict], list[dict]]:
    """Map song id -> stem/mix paths; orphan stems become skip records."""
    songs: dict[str, dict] = {}
    skips: list[dict] = []
    stems: dict[str, dict] = {}
    for path in sorted(input_dir.iterdir()):
        if path.suffix != ".wav":
            continue
        name = path.name[: -len(".wav")]
        if name.endswith(".vocal"):
            stems.setdefault(name[: -len(".vocal")], {})["vocal"] = path
        elif name.endswith(".accomp"):
            stems.setdefault(name[: -len(".accomp")], {})["accomp"] = path
        else:
            songs[name] = {"mixed": path}
    for song_id, pair in sorted(stems.items()):
        if "vocal" in pair and "accomp" in pair:
            songs[song_id] = pair
        else:
            have = next(iter(pair))
            skips.append(
                {"id": song_id, "stage": "load", "reason": f"{have} stem without its partner"}
            )
    return dict(sorted(songs.items())), skips


def build_manifest(
    input_dir: str | Path,
    out_dir: str | Path,
    captioner: CaptionerClient,
    tag_extractor: TagExtractorClient,
    separator: SourceSeparatorClient | None = None,
    seg_len: float = 2.0,
) -> list[ManifestEntry]:
    """Segment, caption, and tag every song; write manifest and skip log."""
    input_dir = Path(input_dir)
    if not input_dir.is_dir():
        raise DatapipeError(f"input dir {input_dir} is not a readable directory")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    songs, skips = _discover_songs(input_dir)
    entries: list[ManifestEntry] = []
    for song_id, paths in songs.items():
        stage = "load"
        try:
            if "mixed" in paths:
                mixed = read_wav(paths["mixed"])
                stage = "separate"
                if separator is None:
                    raise ClientFailure("no source-separation client configured")
                vocal, accomp = separator.separate(mixed)
                if (
                    vocal.sample_rate != mixed.sample_rate
                    or accomp.sample_rate != mixed.sample_rate
                    or len(vocal) != len(mixed)
                    or len(accomp) != len(mixed)
                ):
                    raise ClientFailure("separated stems do not match the mix")
            else:
                vocal = read_wav(paths["vocal"])
                accomp = read_wav(paths["accomp"])
                if vocal.sample_rate != accomp.sample_rate or len(vocal) != len(accomp):
                    raise DatapipeError("vocal and accompaniment stems disagree in length")
            stage = "segment"
            vocal_segs = segment(vocal, seg_len)
            accomp_segs = segment(accomp, seg_len)
            if not vocal_segs:
                raise DatapipeError(f"shorter than one {seg_len} s segment")
            song_entries = []
            for k, (vs, as_) in enumerate(zip(vocal_segs, accomp_segs)):
                stage = "caption"
                caption = captioner.caption(as_)
                if not caption.strip():
                    raise ClientFailure("captioner returned empty text")
                stage = "tags"
                tags = tag_extractor.extract(caption)
                stage = "prompt"
                prompt = normalize_prompt(format_prompt(tags))
                seg_id = f"{song_id}.seg{k:02d}"
                genre = tags.get("genre", "")
                song_entries.append(
                    (
                        seg_id,
                        vs,
                        as_,
                        ManifestEntry(
                            id=seg_id,
                            vocal_path=f"{seg_id}.vocal.wav",
                            accomp_path=f"{seg_id}.accomp.wav",
                            prompt=prompt,
                            tags={
                                "genre": ", ".join(genre) if isinstance(genre, list) else genre,
                                "instruments": tags.get("instruments", []),
                                "rhythm": tags.get("rhythm", ""),
                            },
                            duration=seg_len,
                        ),
                    )
                )
        except (ClientFailure, FixtureError, DatapipeError, CoreError, OSError) as e:
            skips.append({"id": song_id, "stage": stage, "reason": str(e)})
            continue
        for seg_id, vs, as_, entry in song_entries:
            write_wav(out / f"{seg_id}.vocal.wav", vs)
            write_wav(out / f"{seg_id}.accomp.wav", as_)
            entries.append(entry)

    skips.sort(key=lambda r: r["id"])
    with open(out / "skipped.jsonl", "w") as fh:
        for rec in skips:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    if not entries:
        raise DatapipeError(f"no song under {input_dir} produced a manifest entry")
    write_manifest(out / "manifest.jsonl", entries)
    return entries
