"""Core data model: waveforms, token grids, vocabulary layout, manifests.

The vocabulary maps every (family, level, code) triple to a unique flat
token id. Families occupy disjoint contiguous ranges; the four special
tokens (BOS, EOS, SEP, PAD) sit above all families.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SPECIAL_NAMES = ("BOS", "EOS", "SEP", "PAD")


class CoreError(ValueError):
    """Invalid core-type construction or token arithmetic."""


# ---------------------------------------------------------------------------
# audio / token containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Waveform:
    """Mono audio: float samples (nominal [-1, 1]) at a fixed sample rate.

    Zero-length waveforms are allowed so that decoding an empty token grid
    has a well-defined result; encoders reject inputs shorter than a frame.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise CoreError(f"waveform must be mono 1-D, got shape {samples.shape}")
        if self.sample_rate <= 0:
            raise CoreError(f"sample_rate must be positive, got {self.sample_rate}")
        if samples.size and not np.all(np.isfinite(samples)):
            raise CoreError("waveform contains non-finite samples")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class CodeGrid:
    """Discrete token grid: [n_frames x n_levels] codes at a frame rate."""

    codes: np.ndarray
    frame_rate: float
    codebook_size: int

    def __post_init__(self) -> None:
        codes = np.asarray(self.codes, dtype=np.int64)
        if codes.ndim != 2:
            raise CoreError(f"code grid must be 2-D, got shape {codes.shape}")
        if self.frame_rate <= 0:
            raise CoreError(f"frame_rate must be positive, got {self.frame_rate}")
        if self.codebook_size < 1:
            raise CoreError(f"codebook_size must be >= 1, got {self.codebook_size}")
        if codes.size and (codes.min() < 0 or codes.max() >= self.codebook_size):
            raise CoreError(
                f"codes out of range [0, {self.codebook_size}): "
                f"min {codes.min()}, max {codes.max()}"
            )
        object.__setattr__(self, "codes", codes)

    @property
    def n_frames(self) -> int:
        return self.codes.shape[0]

    @property
    def n_levels(self) -> int:
        return self.codes.shape[1]

    @property
    def duration(self) -> float:
        return self.n_frames / self.frame_rate

    def level_prefix(self, n_levels: int) -> "CodeGrid":
        """Grid restricted to its first `n_levels` quantizer levels."""
        if not 1 <= n_levels <= self.n_levels:
            raise CoreError(f"level prefix {n_levels} outside [1, {self.n_levels}]")
        return CodeGrid(self.codes[:, :n_levels], self.frame_rate, self.codebook_size)


@dataclass(frozen=True)
class PromptTokens:
    """Quantized text-prompt code vector, one code per quantizer stage."""

    codes: np.ndarray
    codebook_size: int = 1024

    def __post_init__(self) -> None:
        codes = np.asarray(self.codes, dtype=np.int64)
        if codes.ndim != 1 or codes.size == 0:
            raise CoreError(f"prompt codes must be a nonempty vector, got shape {codes.shape}")
        if codes.min() < 0 or codes.max() >= self.codebook_size:
            raise CoreError(f"prompt codes out of range [0, {self.codebook_size})")
        object.__setattr__(self, "codes", codes)

    @property
    def n_stages(self) -> int:
        return len(self.codes)


# ---------------------------------------------------------------------------
# vocabulary layout
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Family:
    name: str
    n_levels: int
    codebook_size: int
    base_offset: int

    @property
    def size(self) -> int:
        return self.n_levels * self.codebook_size

    @property
    def end(self) -> int:
        return self.base_offset + self.size


@dataclass(frozen=True)
class VocabLayout:
    """Flat token-id space: disjoint per-(family, level) ranges plus specials."""

    families: tuple[Family, ...]
    total_size: int

    def family(self, name: str) -> Family:
        for fam in self.families:
            if fam.name == name:
                return fam
        raise CoreError(f"unknown token family {name!r}")

    @property
    def bos(self) -> int:
        return self.total_size - 4

    @property
    def eos(self) -> int:
        return self.total_size - 3

    @property
    def sep(self) -> int:
        return self.total_size - 2

    @property
    def pad(self) -> int:
        return self.total_size - 1

    def special_name(self, token_id: int) -> str | None:
        offset = token_id - (self.total_size - 4)
        if 0 <= offset < 4:
            return SPECIAL_NAMES[offset]
        return None

    def token_id(self, family: str, level: int, code: int) -> int:
        fam = self.family(family)
        if not 0 <= level < fam.n_levels:
            raise CoreError(f"level {level} outside family {family!r} ({fam.n_levels} levels)")
        if not 0 <= code < fam.codebook_size:
            raise CoreError(f"code {code} outside codebook of size {fam.codebook_size}")
        return fam.base_offset + level * fam.codebook_size + code

    def decode_token(self, token_id: int) -> tuple[str, int, int]:
        """Map a flat id back to its unique (family, level, code) triple."""
        special = self.special_name(token_id)
        if special is not None:
            raise CoreError(f"token {token_id} is special {special}, not a family token")
        for fam in self.families:
            if fam.base_offset <= token_id < fam.end:
                rel = token_id - fam.base_offset
                return fam.name, rel // fam.codebook_size, rel % fam.codebook_size
        raise CoreError(f"token id {token_id} outside every family range")

    def family_level_ids(self, family: str, level: int) -> np.ndarray:
        """All valid ids for one level slot of a family."""
        fam = self.family(family)
        if not 0 <= level < fam.n_levels:
            raise CoreError(f"level {level} outside family {family!r}")
        start = fam.base_offset + level * fam.codebook_size
        return np.arange(start, start + fam.codebook_size, dtype=np.int64)

    def to_dict(self) -> dict:
        return {
            "families": [
                {
                    "name": f.name,
                    "n_levels": f.n_levels,
                    "codebook_size": f.codebook_size,
                    "base_offset": f.base_offset,
                }
                for f in self.families
            ],
            "specials": {"BOS": self.bos, "EOS": self.eos, "SEP": self.sep, "PAD": self.pad},
            "total_size": self.total_size,
        }

    @staticmethod
    def from_dict(data: dict) -> "VocabLayout":
        profile = [(f["name"], f["n_levels"], f["codebook_size"]) for f in data["families"]]
        layout = build_vocab_layout(profile)
        if layout.total_size != data["total_size"]:
            raise CoreError("layout file inconsistent: total_size mismatch")
        return layout


def build_vocab_layout(profile: Sequence[tuple[str, int, int]]) -> VocabLayout:
    """Build a layout from ordered (name, n_levels, codebook_size) families."""
    if not profile:
        raise CoreError("layout profile has no families")
    families: list[Family] = []
    seen: set[str] = set()
    offset = 0
    for name, n_levels, codebook_size in profile:
        if name in seen:
            raise CoreError(f"duplicate family name {name!r}")
        if n_levels < 1 or codebook_size < 1:
            raise CoreError(f"family {name!r} has non-positive sizes")
        seen.add(name)
        families.append(Family(name, int(n_levels), int(codebook_size), offset))
        offset += n_levels * codebook_size
    return VocabLayout(tuple(families), offset + 4)


# ---------------------------------------------------------------------------
# grid <-> flat sequence
# ---------------------------------------------------------------------------


def flatten(grid: CodeGrid, layout: VocabLayout, family: str) -> np.ndarray:
    """Flatten a grid frame-major: frame t emits its levels 0..L-1 in a row."""
    fam = layout.family(family)
    if grid.n_levels != fam.n_levels:
        raise CoreError(
            f"grid has {grid.n_levels} levels but family {family!r} has {fam.n_levels}"
        )
    if grid.codebook_size != fam.codebook_size:
        raise CoreError(
            f"grid codebook {grid.codebook_size} != family codebook {fam.codebook_size}"
        )
    level_offsets = fam.base_offset + np.arange(fam.n_levels, dtype=np.int64) * fam.codebook_size
    return (grid.codes + level_offsets[None, :]).reshape(-1)


def unflatten(
    tokens: Sequence[int] | np.ndarray,
    layout: VocabLayout,
    family: str,
    frame_rate: float = 1.0,
) -> CodeGrid:
    """Exact inverse of :func:`flatten`; validates range and level position."""
    fam = layout.family(family)
    ids = np.asarray(tokens, dtype=np.int64).reshape(-1)
    if len(ids) % fam.n_levels != 0:
        raise CoreError(
            f"sequence length {len(ids)} not divisible by {fam.n_levels} levels"
        )
    codes = np.empty((len(ids) // fam.n_levels, fam.n_levels), dtype=np.int64)
    if len(ids):
        if ids.min() < fam.base_offset or ids.max() >= fam.end:
            raise CoreError(f"token id outside family {family!r} range")
        rel = (ids - fam.base_offset).reshape(-1, fam.n_levels)
        levels = rel // fam.codebook_size
        expected = np.arange(fam.n_levels, dtype=np.int64)
        if not np.array_equal(levels, np.broadcast_to(expected, levels.shape)):
            bad = int(np.argwhere(levels != expected)[0][0])
            raise CoreError(f"token at frame {bad} sits at the wrong level position")
        codes = rel % fam.codebook_size
    return CodeGrid(codes, frame_rate, fam.codebook_size)


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

MANIFEST_FIELDS = ("id", "vocal_path", "accomp_path", "prompt", "tags", "duration")


@dataclass(frozen=True)
class ManifestEntry:
    """One training/eval example: a vocal/accompaniment pair plus its prompt."""

    id: str
    vocal_path: str
    accomp_path: str
    prompt: str
    tags: dict = field(default_factory=dict)
    duration: float = 0.0

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise CoreError(f"entry {self.id!r}: duration must be positive")
        if not self.prompt.strip():
            raise CoreError(f"entry {self.id!r}: prompt is empty")
        if self.vocal_path == self.accomp_path:
            raise CoreError(f"entry {self.id!r}: vocal and accompaniment paths coincide")
        tags = {
            "genre": str(self.tags.get("genre", "")),
            "instruments": [str(x) for x in self.tags.get("instruments", [])],
            "rhythm": str(self.tags.get("rhythm", "")),
        }
        object.__setattr__(self, "tags", tags)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "vocal_path": self.vocal_path,
            "accomp_path": self.accomp_path,
            "prompt": self.prompt,
            "tags": self.tags,
            "duration": self.duration,
        }


def write_manifest(path: str | Path, entries: Iterable[ManifestEntry]) -> None:
    """Write JSON Lines, one entry per line, exactly the typed fields."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for entry in entries:
            fh.write(json.dumps(entry.to_dict(), sort_keys=True) + "\n")


def read_manifest(path: str | Path) -> list[ManifestEntry]:
    """Read JSON Lines; unknown fields are ignored, paths resolve against the file."""
    path = Path(path)
    base = path.parent
    entries = []
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            entries.append(
                ManifestEntry(
                    id=raw["id"],
                    vocal_path=str(_resolve(base, raw["vocal_path"])),
                    accomp_path=str(_resolve(base, raw["accomp_path"])),
                    prompt=raw["prompt"],
                    tags=raw.get("tags", {}),
                    duration=float(raw["duration"]),
                )
            )
    return entries


def _resolve(base: Path, p: str) -> Path:
    path = Path(p)
    return path if path.is_absolute() else base / path
