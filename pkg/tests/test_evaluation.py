"""Metric oracles: Gaussian fits, Frechet distance, FAD, prompt scores, judge."""

import numpy as np
import pytest

from accompgen.encoders import SynthPromptEncoder, synthesize_track
from accompgen.evaluation import (
    EvalError,
    FixtureJudge,
    GaussianStats,
    PromptSpaceEmbedder,
    SemanticMeanEmbedder,
    cosine_similarity,
    desk_embedders,
    fad,
    fad_mean,
    fit_gaussian,
    frechet_distance,
    judge_alignment,
    judge_request,
    parse_judge_score,
    prompt_audio_score,
    render_judge_question,
)
from accompgen.fixtures import FixtureError, write_fixtures

GENRES = ("pop", "rock", "jazz", "ballad")
INSTRUMENTS = ("drum", "bass", "guitar", "piano", "organ")


def sample_clips(n, seed, duration=2.0):
    """Draw accompaniment clips from one fixed recipe distribution."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        genre = GENRES[rng.integers(len(GENRES))]
        chosen = sorted(rng.choice(len(INSTRUMENTS), size=int(rng.integers(2, 4)), replace=False))
        tempo = int(rng.integers(80, 161))
        _, accomp = synthesize_track(
            genre, [INSTRUMENTS[j] for j in chosen], tempo, duration, seed=int(rng.integers(1 << 31))
        )
        out.append(accomp)
    return out


# ---------------------------------------------------------------------------
# fit_gaussian
# ---------------------------------------------------------------------------


def test_fit_gaussian_equal_rows_leaves_only_ridge():
    rows = np.tile([0.3, -1.7, 2.2], (6, 1))
    stats = fit_gaussian(rows)
    assert stats.n_samples == 6
    assert np.allclose(stats.mean, rows[0], atol=1e-15)
    assert np.allclose(stats.cov, 1e-6 * np.eye(3), atol=1e-16)


def test_fit_gaussian_two_point_variance_exact():
    stats = fit_gaussian(np.array([[-1.0], [1.0]]))
    assert stats.mean[0] == 0.0
    assert stats.cov[0, 0] == 2.0 + 1e-6


def test_fit_gaussian_matches_population_within_5pct():
    rng = np.random.default_rng(0)
    true_mean = np.array([1.0, -2.0, 0.5])
    true_std = np.array([1.0, 2.0, 0.7])
    draws = rng.standard_normal((10_000, 3)) * true_std + true_mean
    stats = fit_gaussian(draws)
    assert np.abs(stats.mean - true_mean).max() < 0.05 * true_std.max()
    assert np.abs(np.diag(stats.cov) - true_std**2).max() < 0.05 * (true_std.max() ** 2)


def test_fit_gaussian_rejects_small_or_bad_input():
    with pytest.raises(EvalError, match="at least 2"):
        fit_gaussian(np.ones((1, 4)))
    with pytest.raises(EvalError, match="at least 2"):
        fit_gaussian(np.ones(4))
    bad = np.ones((3, 2))
    bad[1, 1] = np.nan
    with pytest.raises(EvalError, match="non-finite"):
        fit_gaussian(bad)


def test_gaussian_stats_validation():
    with pytest.raises(EvalError, match="symmetric"):
        GaussianStats(np.zeros(2), np.array([[1.0, 0.5], [0.0, 1.0]]), 3)
    with pytest.raises(EvalError, match="shapes"):
        GaussianStats(np.zeros(3), np.eye(2), 3)
    with pytest.raises(EvalError, match="non-finite"):
        GaussianStats(np.array([np.inf, 0.0]), np.eye(2), 3)


# ---------------------------------------------------------------------------
# frechet_distance
# ---------------------------------------------------------------------------


def test_frechet_identical_stats_is_zero():
    stats = GaussianStats(np.arange(4.0), np.eye(4) + 0.1, 10)
    assert abs(frechet_distance(stats, stats)) < 1e-9
    fitted = fit_gaussian(np.random.default_rng(3).standard_normal((40, 6)))
    assert abs(frechet_distance(fitted, fitted)) < 1e-9


def test_frechet_mean_shift_equals_squared_distance():
    a = GaussianStats(np.zeros(4), np.eye(4), 10)
    b = GaussianStats(np.full(4, 1.5), np.eye(4), 10)
    assert frechet_distance(a, b) == pytest.approx(9.0, abs=1e-6)


def test_frechet_commuting_covariances():
    a = GaussianStats(np.zeros(2), 4.0 * np.eye(2), 10)
    b = GaussianStats(np.zeros(2), np.eye(2), 10)
    assert frechet_distance(a, b) == pytest.approx(2.0, abs=1e-6)


def test_frechet_diagonal_closed_form():
    rng = np.random.default_rng(7)
    da, db = rng.uniform(0.1, 3.0, size=8), rng.uniform(0.1, 3.0, size=8)
    mu_a, mu_b = rng.standard_normal(8), rng.standard_normal(8)
    expected = float(np.square(mu_a - mu_b).sum() + np.sum(da + db - 2 * np.sqrt(da * db)))
    got = frechet_distance(GaussianStats(mu_a, np.diag(da), 10), GaussianStats(mu_b, np.diag(db), 10))
    assert got == pytest.approx(expected, abs=1e-8)


def test_frechet_exactly_symmetric():
    rng = np.random.default_rng(11)
    a = fit_gaussian(rng.standard_normal((30, 5)) @ rng.standard_normal((5, 5)))
    b = fit_gaussian(rng.standard_normal((30, 5)) + 0.5)
    assert frechet_distance(a, b) == frechet_distance(b, a)


def test_frechet_rejects_bad_inputs():
    a = GaussianStats(np.zeros(2), np.eye(2), 5)
    with pytest.raises(EvalError, match="dimension mismatch"):
        frechet_distance(a, GaussianStats(np.zeros(3), np.eye(3), 5))
    negative = GaussianStats(np.zeros(2), -np.eye(2), 5)
    with pytest.raises(EvalError, match="eigenvalue"):
        frechet_distance(negative, a)


# ---------------------------------------------------------------------------
# fad over waveform sets
# ---------------------------------------------------------------------------


def test_fad_identical_sets_near_zero():
    clips = sample_clips(8, seed=1)
    for emb in desk_embedders():
        assert abs(fad(clips, list(clips), emb)) < 1e-9


def test_fad_symmetric_and_order_invariant():
    ref, cand = sample_clips(8, seed=2), sample_clips(8, seed=3)
    emb = SemanticMeanEmbedder()
    forward = fad(ref, cand, emb)
    assert forward == fad(cand, ref, emb)
    rng = np.random.default_rng(0)
    shuffled = [cand[i] for i in rng.permutation(len(cand))]
    assert forward == fad(ref, shuffled, emb)


def test_fad_needs_two_waveforms_per_set():
    clips = sample_clips(3, seed=4)
    with pytest.raises(EvalError, match="at least 2 waveforms"):
        fad(clips[:1], clips, SemanticMeanEmbedder())
    with pytest.raises(EvalError, match="at least 2 waveforms"):
        fad(clips, [], SemanticMeanEmbedder())


def test_fad_same_distribution_500_draws_under_bound():
    # observed: sem-mean ~0.004, prompt-space ~0.010 on disjoint 500-draws
    set_a = sample_clips(500, seed=101)
    set_b = sample_clips(500, seed=202)
    for emb in desk_embedders():
        assert fad(set_a, set_b, emb) < 0.05


def test_fad_separates_distinct_distributions():
    band = sample_clips(40, seed=5)
    rng = np.random.default_rng(33)
    drums = [
        synthesize_track("pop", ["drum"], int(rng.integers(80, 161)), 2.0, seed=int(rng.integers(1 << 31)))[1]
        for _ in range(40)
    ]
    for emb in desk_embedders():
        assert fad(band, drums, emb) > 0.1


def test_fad_mean_aggregation():
    ref, cand = sample_clips(6, seed=6), sample_clips(6, seed=7)
    embs = desk_embedders()
    report = fad_mean(ref, cand, embs)
    assert set(report.per_embedder) == {"sem-mean", "prompt-space"}
    assert report.mean == sum(report.per_embedder.values()) / 2
    single = fad_mean(ref, cand, embs[:1])
    assert single.mean == fad(ref, cand, embs[0])
    assert float(np.mean([3.156, 0.679])) == pytest.approx(1.9175, abs=1e-12)
    with pytest.raises(EvalError, match="at least one embedder"):
        fad_mean(ref, cand, [])


# ---------------------------------------------------------------------------
# prompt-audio similarity
# ---------------------------------------------------------------------------


def test_cosine_similarity_reference_points():
    assert cosine_similarity([1.0, 0.0], [0.0, 2.0]) == 0.0
    assert cosine_similarity([1.0, 2.0], [2.0, 4.0]) == pytest.approx(1.0, abs=1e-12)
    assert cosine_similarity([1.0, 0.0], [-3.0, 0.0]) == pytest.approx(-1.0, abs=1e-12)
    with pytest.raises(EvalError, match="zero-norm"):
        cosine_similarity([0.0, 0.0], [1.0, 0.0])


def test_prompt_audio_score_prefers_matching_prompt():
    enc = SynthPromptEncoder()
    _, accomp = synthesize_track("rock", ["bass", "drum"], 120, 2.0, seed=5)
    matched = prompt_audio_score("a rock song with bass, drum at 120 bpm", accomp, enc)
    mismatched = prompt_audio_score("a jazz song with organ, piano at 60 bpm", accomp, enc)
    assert -1.0 <= mismatched < matched <= 1.0
    with pytest.raises(EvalError, match="empty prompt"):
        prompt_audio_score("   ", accomp, enc)


# ---------------------------------------------------------------------------
# judge protocol
# ---------------------------------------------------------------------------

ANSWER = "As a producer the score in the alignment between the song and the prompt in {criterion} is {score}."


def test_render_judge_question_template():
    question = render_judge_question("a rock song with bass at 120 bpm", "genre")
    assert question == (
        "Given the <audio input>, with prompt a rock song with bass at 120 bpm, "
        "as a producer, can you give the score for the alignment between the "
        "genre of the song with prompt input on a scale from 0 to 100?"
    )
    assert "instruments of the song" in render_judge_question("x", "instruments")
    with pytest.raises(EvalError, match="criterion"):
        render_judge_question("x", "mood")


def test_parse_judge_score_cases():
    assert parse_judge_score(ANSWER.format(criterion="genre", score=85)) == 85.0
    assert parse_judge_score("the score is approximately 72.5 overall") == 72.5
    assert parse_judge_score("it is, I think, 100") == 100.0
    for bad in ("great song!", "the tempo is fast", "90 out of 100"):
        with pytest.raises(EvalError, match="cannot parse"):
            parse_judge_score(bad)
    with pytest.raises(EvalError, match="outside"):
        parse_judge_score("the score is 120")


def _judge_fixture(tmp_path, audio_name, question, scores):
    audio = tmp_path / audio_name
    audio.write_bytes(b"fake-wav:" + audio_name.encode())
    records = [
        (judge_request(audio, question, run), ANSWER.format(criterion="genre", score=score))
        for run, score in enumerate(scores)
    ]
    path = tmp_path / "judge.jsonl"
    write_fixtures(path, records)
    return audio, FixtureJudge(path)


def test_judge_alignment_three_run_mean(tmp_path):
    prompt = "a rock song with bass at 120 bpm"
    question = render_judge_question(prompt, "genre")
    audio, judge = _judge_fixture(tmp_path, "out.wav", question, [80, 82, 84])
    result = judge_alignment(audio, prompt, "genre", judge)
    assert result.scores == (80.0, 82.0, 84.0)
    assert result.mean == 82.0
    assert result.question == question
    assert result.responses[1].endswith("is 82.")
    assert result.to_dict()["mean"] == 82.0


def test_judge_alignment_constant_scores(tmp_path):
    prompt = "a pop song with piano at 90 bpm"
    question = render_judge_question(prompt, "genre")
    audio, judge = _judge_fixture(tmp_path, "a.wav", question, [85, 85, 85])
    assert judge_alignment(audio, prompt, "genre", judge).mean == 85.0


def test_judge_alignment_error_paths(tmp_path):
    prompt = "a pop song at 90 bpm"
    question = render_judge_question(prompt, "genre")
    audio = tmp_path / "a.wav"
    audio.write_bytes(b"fake-wav")
    path = tmp_path / "judge.jsonl"
    write_fixtures(path, [(judge_request(audio, question, 0), "no score here")])
    with pytest.raises(EvalError, match="cannot parse"):
        judge_alignment(audio, prompt, "genre", FixtureJudge(path), runs=1)
    other = tmp_path / "other.wav"
    other.write_bytes(b"different bytes")
    with pytest.raises(FixtureError, match="no recorded response"):
        judge_alignment(other, prompt, "genre", FixtureJudge(path), runs=1)
    with pytest.raises(EvalError, match="runs"):
        judge_alignment(audio, prompt, "genre", FixtureJudge(path), runs=0)
