"""Segmentation, tag extraction, prompt formatting, and manifest building."""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from accompgen.core import Waveform, read_manifest
from accompgen.datapipe import (
    ClientFailure,
    DatapipeError,
    DescriptorCaptioner,
    FallbackTagExtractor,
    FixtureCaptioner,
    FixtureTagExtractor,
    build_manifest,
    fallback_extract_tags,
    format_prompt,
    normalize_prompt,
    segment,
)
from accompgen.encoders import CorpusSpec, generate_corpus, read_wav, write_wav
from accompgen.fixtures import FixtureError, audio_payload, write_fixtures


def _tone(duration, sr=16000, freq=220.0):
    t = np.arange(int(duration * sr)) / sr
    return Waveform(0.3 * np.sin(2 * np.pi * freq * t), sr)


# ---------------------------------------------------------------------------
# segmentation
# ---------------------------------------------------------------------------


def test_segment_drops_trailing_remainder():
    segs = segment(_tone(35.0), 10.0)
    assert len(segs) == 3
    assert all(len(s) == 160000 for s in segs)


def test_segment_identity_on_exact_fit():
    w = _tone(10.0)
    segs = segment(w, 10.0)
    assert len(segs) == 1
    np.testing.assert_array_equal(segs[0].samples, w.samples)


def test_segment_partition_covers_prefix():
    w = _tone(30.0)
    segs = segment(w, 10.0)
    np.testing.assert_array_equal(
        np.concatenate([s.samples for s in segs]), w.samples[: 3 * 160000]
    )


def test_segment_short_input_yields_empty_list():
    assert segment(_tone(0.5), 2.0) == []


def test_segment_rejects_nonpositive_length():
    with pytest.raises(DatapipeError, match="positive"):
        segment(_tone(1.0), 0.0)


@settings(max_examples=40, deadline=None)
@given(
    n_samples=st.integers(min_value=0, max_value=40000),
    sr=st.sampled_from([8000, 16000, 22050]),
    seg_len=st.floats(min_value=0.05, max_value=3.0),
)
def test_segment_partition_property(n_samples, sr, seg_len):
    w = Waveform(np.linspace(-0.5, 0.5, n_samples), sr)
    step = round(seg_len * sr)
    segs = segment(w, seg_len)
    assert len(segs) == n_samples // step
    assert all(len(s) == step for s in segs)
    if segs:
        np.testing.assert_array_equal(
            np.concatenate([s.samples for s in segs]), w.samples[: len(segs) * step]
        )


# ---------------------------------------------------------------------------
# tag extraction
# ---------------------------------------------------------------------------


def test_extract_tags_matches_hand_derivation():
    got = fallback_extract_tags("An upbeat rock song with loud drum and bass at 120 bpm")
    assert got == {"genre": ["rock"], "instruments": ["bass", "drum"], "rhythm": "120 bpm"}


def test_extract_tags_no_hits_yields_empty_fields():
    assert fallback_extract_tags("quiet ambient texture") == {
        "genre": [],
        "instruments": [],
        "rhythm": "",
    }


def test_extract_tags_is_deterministic_and_sorted():
    cap = "romantic ballad with piano, organ, guitars and drums, slow"
    first = fallback_extract_tags(cap)
    assert first == fallback_extract_tags(cap)
    assert first["genre"] == ["ballad", "romantic"]
    assert first["instruments"] == ["drum", "guitar", "organ", "piano"]
    assert first["rhythm"] == "slow"


def test_extract_tags_first_rhythm_mention_wins():
    assert fallback_extract_tags("slow song at 90 bpm")["rhythm"] == "slow"
    assert fallback_extract_tags("90 bpm, then slow")["rhythm"] == "90 bpm"
    assert fallback_extract_tags("about 128bpm groove")["rhythm"] == "128 bpm"


def test_extract_tags_respects_word_boundaries():
    got = fallback_extract_tags("rocking bassline amid organza")
    assert got["genre"] == [] and got["instruments"] == [] and got["rhythm"] == ""


# ---------------------------------------------------------------------------
# prompt formatting
# ---------------------------------------------------------------------------


def test_format_prompt_full_template():
    tags = {"genre": ["rock"], "instruments": ["bass", "drum"], "rhythm": "120 bpm"}
    assert format_prompt(tags) == "A rock song with bass, drum at 120 bpm"


def test_format_prompt_omits_empty_clauses():
    assert format_prompt({"genre": ["pop"], "instruments": [], "rhythm": ""}) == "A pop song"
    assert format_prompt({"genre": [], "instruments": ["piano"], "rhythm": ""}) == "A song with piano"
    assert format_prompt({"genre": [], "instruments": [], "rhythm": "slow"}) == "A song at slow"


def test_format_prompt_accepts_string_genre():
    assert format_prompt({"genre": "jazz", "instruments": [], "rhythm": ""}) == "A jazz song"


def test_format_prompt_all_empty_errors():
    with pytest.raises(DatapipeError, match="all-empty"):
        format_prompt({"genre": [], "instruments": [], "rhythm": ""})


def test_normalize_prompt_lowercases_ascii():
    assert normalize_prompt("A  Rock\tSong é") == "a rock song e"


# ---------------------------------------------------------------------------
# manifest building
# ---------------------------------------------------------------------------


@pytest.fixture()
def stem_dir(tmp_path):
    """Two 25 s stem pairs with band-limited accompaniments."""
    src = tmp_path / "songs"
    src.mkdir()
    sr = 16000
    t = np.arange(25 * sr) / sr
    for i, freq in enumerate([100.0, 300.0]):
        vocal = Waveform(0.3 * np.sin(2 * np.pi * 220.0 * t), sr)
        beat = (np.sin(2 * np.pi * 2.0 * t) > 0.99).astype(float)
        accomp = Waveform(0.4 * np.sin(2 * np.pi * freq * t) * (0.2 + beat), sr)
        write_wav(src / f"song{i}.vocal.wav", vocal)
        write_wav(src / f"song{i}.accomp.wav", accomp)
    return src


class _FixedCaptioner:
    def __init__(self, text="rock with drum and bass at 120 bpm", fail_ids=()):
        self.text = text
        self.fail = set(fail_ids)
        self.calls = 0

    def caption(self, w):
        self.calls += 1
        if len(self.fail) and self.calls in self.fail:
            raise ClientFailure("caption backend unavailable")
        return self.text


def test_build_manifest_two_songs_four_segments(stem_dir, tmp_path):
    out = tmp_path / "data"
    entries = build_manifest(
        stem_dir, out, _FixedCaptioner(), FallbackTagExtractor(), seg_len=10.0
    )
    assert [e.id for e in entries] == [
        "song0.seg00", "song0.seg01", "song1.seg00", "song1.seg01",
    ]
    assert (out / "skipped.jsonl").read_text() == ""
    loaded = read_manifest(out / "manifest.jsonl")
    for entry in loaded:
        assert entry.prompt == "a rock song with bass, drum at 120 bpm"
        assert entry.tags == {"genre": "rock", "instruments": ["bass", "drum"], "rhythm": "120 bpm"}
        assert entry.duration == 10.0
        vocal = read_wav(entry.vocal_path)
        accomp = read_wav(entry.accomp_path)
        assert len(vocal) == len(accomp) == 160000


def test_build_manifest_segments_slice_the_stems(stem_dir, tmp_path):
    out = tmp_path / "data"
    build_manifest(stem_dir, out, _FixedCaptioner(), FallbackTagExtractor(), seg_len=10.0)
    full = read_wav(stem_dir / "song0.vocal.wav")
    seg1 = read_wav(out / "song0.seg01.vocal.wav")
    np.testing.assert_array_equal(seg1.samples, full.samples[160000:320000])


def test_build_manifest_is_byte_identical_on_rerun(stem_dir, tmp_path):
    out_a, out_b = tmp_path / "a", tmp_path / "b"
    for out in (out_a, out_b):
        build_manifest(stem_dir, out, _FixedCaptioner(), FallbackTagExtractor(), seg_len=10.0)
    for name in sorted(p.name for p in out_a.iterdir()):
        assert (out_a / name).read_bytes() == (out_b / name).read_bytes(), name


def test_build_manifest_skips_and_logs_failing_song(stem_dir, tmp_path):
    out = tmp_path / "data"
    # calls 3+ fail: song0's two segments caption fine, song1 fails
    entries = build_manifest(
        stem_dir, out, _FixedCaptioner(fail_ids={3}), FallbackTagExtractor(), seg_len=10.0
    )
    assert [e.id for e in entries] == ["song0.seg00", "song0.seg01"]
    skips = [json.loads(l) for l in (out / "skipped.jsonl").read_text().splitlines()]
    assert skips == [
        {"id": "song1", "stage": "caption", "reason": "caption backend unavailable"}
    ]
    # the failed song leaves no audio behind
    assert not list(out.glob("song1.*.wav"))


def test_build_manifest_orphan_stem_is_logged(stem_dir, tmp_path):
    (stem_dir / "song2.vocal.wav").write_bytes((stem_dir / "song0.vocal.wav").read_bytes())
    out = tmp_path / "data"
    build_manifest(stem_dir, out, _FixedCaptioner(), FallbackTagExtractor(), seg_len=10.0)
    skips = [json.loads(l) for l in (out / "skipped.jsonl").read_text().splitlines()]
    assert skips == [{"id": "song2", "stage": "load", "reason": "vocal stem without its partner"}]


def test_build_manifest_mixed_input_needs_separator(stem_dir, tmp_path):
    mix = read_wav(stem_dir / "song0.accomp.wav")
    write_wav(stem_dir / "song9.wav", mix)
    out = tmp_path / "data"
    build_manifest(stem_dir, out, _FixedCaptioner(), FallbackTagExtractor(), seg_len=10.0)
    skips = [json.loads(l) for l in (out / "skipped.jsonl").read_text().splitlines()]
    assert skips == [
        {"id": "song9", "stage": "separate", "reason": "no source-separation client configured"}
    ]


class _HalvingSeparator:
    def separate(self, mixed):
        return (
            Waveform(mixed.samples * 0.5, mixed.sample_rate),
            Waveform(mixed.samples * 0.5, mixed.sample_rate),
        )


def test_build_manifest_separates_mixed_songs(tmp_path):
    src = tmp_path / "songs"
    src.mkdir()
    sr = 16000
    t = np.arange(20 * sr) / sr
    write_wav(src / "mix0.wav", Waveform(0.5 * np.sin(2 * np.pi * 100.0 * t), sr))
    out = tmp_path / "data"
    entries = build_manifest(
        src, out, _FixedCaptioner(), FallbackTagExtractor(),
        separator=_HalvingSeparator(), seg_len=10.0,
    )
    assert [e.id for e in entries] == ["mix0.seg00", "mix0.seg01"]


def test_build_manifest_zero_successes_errors(tmp_path):
    src = tmp_path / "songs"
    src.mkdir()
    write_wav(src / "tiny.vocal.wav", _tone(0.5))
    write_wav(src / "tiny.accomp.wav", _tone(0.5, freq=110.0))
    out = tmp_path / "data"
    with pytest.raises(DatapipeError, match="no song"):
        build_manifest(src, out, _FixedCaptioner(), FallbackTagExtractor(), seg_len=10.0)
    # the skip log still records why
    skips = [json.loads(l) for l in (out / "skipped.jsonl").read_text().splitlines()]
    assert skips[0]["id"] == "tiny" and skips[0]["stage"] == "segment"


def test_build_manifest_missing_input_dir_errors(tmp_path):
    with pytest.raises(DatapipeError, match="not a readable directory"):
        build_manifest(tmp_path / "absent", tmp_path / "out", _FixedCaptioner(), FallbackTagExtractor())


def test_descriptor_captioner_names_instruments_and_tempo(tmp_path):
    generate_corpus(CorpusSpec(n_tracks=1, duration=2.0, seed=3), tmp_path)
    entry = read_manifest(tmp_path / "manifest.jsonl")[0]
    accomp = read_wav(entry.accomp_path)
    caption = DescriptorCaptioner().caption(accomp)
    tags = fallback_extract_tags(caption)
    assert tags["instruments"] == entry.tags["instruments"]
    assert tags["rhythm"] == entry.tags["rhythm"]


def test_fixture_clients_replay_recorded_responses(tmp_path):
    w = _tone(1.0)
    cap_path = tmp_path / "captions.jsonl"
    write_fixtures(cap_path, [({"kind": "caption", **audio_payload(w)}, "jazz piano at 90 bpm")])
    assert FixtureCaptioner(cap_path).caption(w) == "jazz piano at 90 bpm"

    tag_path = tmp_path / "tags.jsonl"
    recorded = json.dumps({"genre": ["jazz"], "instruments": ["piano"], "rhythm": "90 bpm"})
    write_fixtures(tag_path, [({"kind": "tags", "caption": "jazz piano at 90 bpm"}, recorded)])
    got = FixtureTagExtractor(tag_path).extract("jazz piano at 90 bpm")
    assert got == {"genre": ["jazz"], "instruments": ["piano"], "rhythm": "90 bpm"}


def test_fixture_clients_fail_on_unrecorded_requests(tmp_path):
    cap_path = tmp_path / "captions.jsonl"
    write_fixtures(cap_path, [])
    with pytest.raises(FixtureError, match="no recorded response"):
        FixtureCaptioner(cap_path).caption(_tone(1.0))
