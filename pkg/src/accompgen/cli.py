"""Command-line entry point: corpus, dataset, train, generate, eval, ablate.

One tool drives the whole pipeline from a flat-key JSON config; flags
override config values. Exit codes are a stable contract: 0 success,
2 usage or config error, 3 I/O error, 4 missing prerequisite, 5 numeric
failure. Writer commands take a `.lock` in their output directory; logs go
to stderr and machine-readable results only to files.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import os
import sys
import time
from pathlib import Path

import torch

from .config import ConfigError, RunConfig
from .core import CoreError, read_manifest
from .datapipe import (
    DatapipeError,
    DescriptorCaptioner,
    FallbackTagExtractor,
    FixtureCaptioner,
    FixtureTagExtractor,
    build_manifest,
)
from .encoders import CorpusSpec, generate_corpus, read_wav, write_wav
from .evaluation import (
    EvalError,
    FixtureJudge,
    desk_embedders,
    fad_mean,
    judge_alignment,
    prompt_audio_score,
)
from .fixtures import FixtureError
from .seqmodel import CheckpointError, ModelError, NonFiniteLossError, TrainConfig
from .stages import (
    StageError,
    coarse_stage_spec,
    fit_stage_quantizers,
    generate_accompaniment,
    load_stage_artifacts,
    new_artifacts,
    save_stage_artifacts,
    semantic_stage_spec,
    train_stage,
)

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_IO = 3
EXIT_MISSING = 4
EXIT_NUMERIC = 5

JUDGE_RUNS = 3
# generation prompt used for the prompt-ablated condition: every tag omitted
ABLATION_PROMPT = "a song"


class CliError(Exception):
    """Failure with an explicit exit code."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def log(message: str) -> None:
    print(message, file=sys.stderr)


def _pid_alive(pid: int) -> bool:
    try:
        os.kill(pid, 0)
    except ProcessLookupError:
        return False
    except PermissionError:
        return True
    return True


@contextlib.contextmanager
def directory_lock(dirpath: Path):
    """Guard a writer command's output directory against concurrent writers."""
    dirpath.mkdir(parents=True, exist_ok=True)
    lock = dirpath / ".lock"
    if lock.exists():
        try:
            pid = int(json.loads(lock.read_text()).get("pid", -1))
        except (json.JSONDecodeError, ValueError):
            pid = -1
        if pid > 0 and _pid_alive(pid):
            raise CliError(EXIT_IO, f"lock file {lock} is held by running pid {pid}")
        log(f"removing stale lock {lock}")
        lock.unlink()
    lock.write_text(
        json.dumps({"pid": os.getpid(), "started": time.strftime("%Y-%m-%dT%H:%M:%S")}) + "\n"
    )
    try:
        yield
    finally:
        lock.unlink(missing_ok=True)


def _load_config(args: argparse.Namespace, extra: dict | None = None) -> RunConfig:
    overrides: dict[str, object] = {}
    for item in args.overrides:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        overrides[key.strip()] = val
    if extra:
        overrides.update({k: v for k, v in extra.items() if v is not None})
    return RunConfig.load(args.config, overrides)


def _write_report(path: Path, report: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")


def _read_manifest_file(path: Path) -> list:
    if not path.exists():
        raise CliError(EXIT_IO, f"manifest not found: {path}")
    return read_manifest(path)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_corpus_synth(args: argparse.Namespace) -> int:
    cfg = _load_config(
        args,
        {
            "corpus.n_tracks": args.n_tracks,
            "corpus.duration": args.duration,
            "seed": args.seed,
            "paths.corpus": args.out,
        },
    )
    out = cfg.path("corpus")
    try:
        spec = CorpusSpec(
            n_tracks=int(cfg.get("corpus.n_tracks")),
            duration=float(cfg.get("corpus.duration")),
            tempo_range=(int(cfg.get("corpus.tempo_lo")), int(cfg.get("corpus.tempo_hi"))),
            sample_rate=cfg.profile().sample_rate,
            seed=cfg.seed,
        )
    except CoreError as e:
        raise ConfigError(str(e))
    with directory_lock(out):
        entries = generate_corpus(spec, out)
    print(f"wrote {len(entries)} tracks under {out}")
    return EXIT_OK


def cmd_dataset_build(args: argparse.Namespace) -> int:
    cfg = _load_config(
        args,
        {"paths.corpus": args.out, "dataset.segment_seconds": args.segment_seconds},
    )
    out = cfg.path("corpus")
    seg_len = float(cfg.get("dataset.segment_seconds"))
    if seg_len <= 0:
        raise ConfigError(f"dataset.segment_seconds must be positive, got {seg_len}")
    if args.fixtures:
        captioner, extractor = FixtureCaptioner(args.fixtures), FixtureTagExtractor(args.fixtures)
    else:
        captioner, extractor = DescriptorCaptioner(), FallbackTagExtractor()
    with directory_lock(out):
        entries = build_manifest(args.input, out, captioner, extractor, seg_len=seg_len)
    print(f"wrote {len(entries)} segments under {out}")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    stage = args.stage
    cfg = _load_config(
        args,
        {
            "paths.corpus": args.corpus,
            "paths.artifacts": args.artifacts,
            "seed": args.seed,
            f"train.{stage}.max_steps": args.max_steps,
            f"train.{stage}.learning_rate": args.learning_rate,
            f"train.{stage}.batch_size": args.batch_size,
        },
    )
    manifest_path = cfg.path("corpus") / "manifest.jsonl"
    if not manifest_path.exists():
        raise CliError(
            EXIT_MISSING,
            f"no manifest at {manifest_path}; run `corpus synth` or `dataset build` first",
        )
    manifest = read_manifest(manifest_path)
    artifacts_dir = cfg.path("artifacts")
    with directory_lock(artifacts_dir):
        try:
            arts = load_stage_artifacts(artifacts_dir)
        except StageError:
            arts = new_artifacts(cfg.profile())
        if stage == "coarse" and arts.semantic_model is None:
            raise CliError(
                EXIT_MISSING,
                f"no semantic stage under {artifacts_dir}; run `train semantic` first",
            )
        if arts.sem_quantizer is None or arts.codec is None or arts.prompt_quantizer is None:
            log(f"fitting quantizers on {len(manifest)} manifest entries")
            fit_stage_quantizers(manifest, arts, seed=cfg.seed)
        profile = arts.profile
        spec = semantic_stage_spec(profile) if stage == "semantic" else coarse_stage_spec(profile)
        tc = TrainConfig(seed=cfg.seed, **cfg.train_settings(stage))
        log(f"training {stage} stage: {tc.max_steps} steps on {len(manifest)} entries")
        train_stage(
            spec,
            manifest,
            arts,
            tc,
            model_settings=cfg.model_settings(stage),
            log_path=artifacts_dir / f"train-{stage}-metrics.log",
        )
        save_stage_artifacts(artifacts_dir, arts)
        final_loss = getattr(arts, f"{stage}_history")[-1][1]
    print(f"trained {stage} stage for {tc.max_steps} steps; final loss {final_loss:.6f}")
    return EXIT_OK


def cmd_generate(args: argparse.Namespace) -> int:
    cfg = _load_config(
        args,
        {
            "paths.artifacts": args.artifacts,
            "seed": args.seed,
            "sampling.temperature": args.temperature,
            "sampling.top_k": args.top_k,
        },
    )
    arts = load_stage_artifacts(cfg.path("artifacts"))
    vocal = read_wav(args.vocal)
    sampling = cfg.sampling_settings()
    result = generate_accompaniment(
        arts,
        args.prompt,
        vocal,
        temperature=sampling["temperature"],
        top_k=sampling["top_k"],
        seed=cfg.seed,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_wav(out / "accomp.wav", result.waveform)
    _write_report(
        out / "generation.json",
        {
            "prompt": args.prompt,
            "vocal": str(args.vocal),
            "seed": cfg.seed,
            "temperature": sampling["temperature"],
            "top_k": sampling["top_k"],
            **result.report(),
        },
    )
    print(f"wrote {out / 'accomp.wav'} ({result.waveform.duration:.2f} s)")
    return EXIT_OK


def _wavs_in(dirpath: str) -> list:
    d = Path(dirpath)
    if not d.is_dir():
        raise CliError(EXIT_IO, f"{d} is not a readable directory")
    return [read_wav(p) for p in sorted(d.glob("*.wav"))]


def cmd_eval_fad(args: argparse.Namespace) -> int:
    cfg = _load_config(args, {"paths.reports": args.reports})
    reference, candidate = _wavs_in(args.reference), _wavs_in(args.candidate)
    if len(reference) < 2 or len(candidate) < 2:
        raise CliError(
            EXIT_USAGE,
            f"eval fad needs at least 2 WAV files per side, got {len(reference)} reference "
            f"and {len(candidate)} candidate",
        )
    report = fad_mean(reference, candidate, desk_embedders())
    out = Path(args.out) if args.out else cfg.path("reports") / "fad.json"
    _write_report(
        out,
        {
            "kind": "fad",
            "reference": str(args.reference),
            "candidate": str(args.candidate),
            "n_reference": len(reference),
            "n_candidate": len(candidate),
            **report.to_dict(),
        },
    )
    parts = ", ".join(f"{k} {v:.6f}" for k, v in sorted(report.per_embedder.items()))
    print(f"FAD mean {report.mean:.6f} ({parts})")
    return EXIT_OK


def cmd_eval_clap(args: argparse.Namespace) -> int:
    cfg = _load_config(args, {"paths.reports": args.reports})
    manifest = _read_manifest_file(Path(args.manifest))
    if not manifest:
        raise CliError(EXIT_USAGE, f"manifest {args.manifest} has no entries")
    enc = new_artifacts(cfg.profile()).prompt_encoder()
    items = [
        {"id": e.id, "score": prompt_audio_score(e.prompt, read_wav(e.accomp_path), enc)}
        for e in manifest
    ]
    mean = sum(i["score"] for i in items) / len(items)
    out = Path(args.out) if args.out else cfg.path("reports") / "clap.json"
    _write_report(out, {"kind": "clap", "items": items, "mean": mean})
    print(f"prompt-audio score mean {mean:.6f} over {len(items)} items")
    return EXIT_OK


def _criteria(choice: str) -> tuple[str, ...]:
    return ("genre", "instruments") if choice == "both" else (choice,)


def cmd_eval_judge(args: argparse.Namespace) -> int:
    cfg = _load_config(args, {"paths.reports": args.reports})
    manifest = _read_manifest_file(Path(args.manifest))
    if not manifest:
        raise CliError(EXIT_USAGE, f"manifest {args.manifest} has no entries")
    if not args.fixtures:
        raise CliError(EXIT_USAGE, "eval judge needs --fixtures; no network judge is configured")
    judge = FixtureJudge(args.fixtures)
    items = []
    for entry in manifest:
        for criterion in _criteria(args.criterion):
            result = judge_alignment(entry.accomp_path, entry.prompt, criterion, judge, runs=args.runs)
            items.append({"id": entry.id, "criterion": criterion, **result.to_dict()})
    means = {
        c: sum(i["mean"] for i in items if i["criterion"] == c)
        / max(sum(1 for i in items if i["criterion"] == c), 1)
        for c in _criteria(args.criterion)
    }
    out = Path(args.out) if args.out else cfg.path("reports") / "judge.json"
    _write_report(out, {"kind": "judge", "runs": args.runs, "items": items, "means": means})
    for criterion, value in sorted(means.items()):
        print(f"judge {criterion} mean {value:.3f}")
    return EXIT_OK


def cmd_ablate(args: argparse.Namespace) -> int:
    cfg = _load_config(args, {"paths.reports": args.reports})
    manifest = _read_manifest_file(Path(args.manifest))
    if not manifest:
        raise CliError(EXIT_USAGE, f"manifest {args.manifest} has no entries")
    if not args.fixtures:
        raise CliError(EXIT_USAGE, "ablate needs --fixtures; no network judge is configured")
    judge = FixtureJudge(args.fixtures)
    conditions = (("with-prompt", Path(args.with_dir)), ("prompt-ablated", Path(args.ablated_dir)))
    for _, d in conditions:
        for entry in manifest:
            if not (d / f"{entry.id}.wav").exists():
                raise CliError(EXIT_MISSING, f"missing generated output {d / f'{entry.id}.wav'}")
    rows = []
    for criterion in ("genre", "instruments"):
        for condition, d in conditions:
            scores: list[float] = []
            for entry in manifest:
                result = judge_alignment(
                    d / f"{entry.id}.wav", entry.prompt, criterion, judge, runs=args.runs
                )
                scores.extend(result.scores)
            rows.append(
                {
                    "criterion": criterion,
                    "condition": condition,
                    "mean": sum(scores) / len(scores),
                    "runs": scores,
                }
            )
    out = Path(args.out) if args.out else cfg.path("reports") / "ablation.json"
    _write_report(
        out,
        {"kind": "ablation", "n_items": len(manifest), "runs_per_item": args.runs, "rows": rows},
    )
    for row in rows:
        print(f"{row['criterion']:<12} {row['condition']:<15} {row['mean']:.3f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser and dispatch
# ---------------------------------------------------------------------------


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", default=None, help="JSON config file with flat dotted keys")
    p.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one config key (repeatable)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="accompgen",
        description="Text-controllable vocal-to-accompaniment pipeline.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    corpus = sub.add_parser("corpus", help="synthetic corpus commands")
    corpus_sub = corpus.add_subparsers(dest="subcommand", required=True)
    synth = corpus_sub.add_parser("synth", help="write a deterministic synthetic corpus")
    _add_common(synth)
    synth.add_argument("--n-tracks", type=int, default=None, help="tracks to synthesize (default 8)")
    synth.add_argument("--duration", type=float, default=None, help="track seconds (default 2.0)")
    synth.add_argument("--seed", type=int, default=None, help="top-level seed (default 0)")
    synth.add_argument("--out", default=None, help="output directory (default: paths.corpus)")
    synth.set_defaults(func=cmd_corpus_synth)

    dataset = sub.add_parser("dataset", help="dataset pipeline commands")
    dataset_sub = dataset.add_subparsers(dest="subcommand", required=True)
    build = dataset_sub.add_parser("build", help="segment, caption, and tag raw songs")
    _add_common(build)
    build.add_argument("--input", required=True, help="directory of raw songs or stem pairs")
    build.add_argument("--out", default=None, help="output directory (default: paths.corpus)")
    build.add_argument(
        "--segment-seconds", type=float, default=None, help="segment length (default 2.0)"
    )
    build.add_argument(
        "--fixtures", default=None, help="recorded caption/tag responses; offline clients if omitted"
    )
    build.set_defaults(func=cmd_dataset_build)

    train = sub.add_parser("train", help="fit quantizers and train one stage")
    _add_common(train)
    train.add_argument("stage", choices=("semantic", "coarse"), help="which stage to train")
    train.add_argument("--corpus", default=None, help="corpus directory (default: paths.corpus)")
    train.add_argument(
        "--artifacts", default=None, help="artifact directory (default: paths.artifacts)"
    )
    train.add_argument("--seed", type=int, default=None, help="top-level seed (default 0)")
    train.add_argument("--max-steps", type=int, default=None, help="optimizer steps")
    train.add_argument("--learning-rate", type=float, default=None, help="AdamW learning rate")
    train.add_argument("--batch-size", type=int, default=None, help="sequences per step")
    train.set_defaults(func=cmd_train)

    generate = sub.add_parser("generate", help="generate an accompaniment for a vocal")
    _add_common(generate)
    generate.add_argument("--prompt", required=True, help="text prompt")
    generate.add_argument("--vocal", required=True, help="input vocal WAV")
    generate.add_argument("--out", default="generated", help="output directory (default: generated)")
    generate.add_argument(
        "--artifacts", default=None, help="artifact directory (default: paths.artifacts)"
    )
    generate.add_argument("--seed", type=int, default=None, help="top-level seed (default 0)")
    generate.add_argument(
        "--temperature", type=float, default=None, help="sampling temperature (default 0.9)"
    )
    generate.add_argument("--top-k", type=int, default=None, help="top-k cutoff (default 50)")
    generate.set_defaults(func=cmd_generate)

    evalp = sub.add_parser("eval", help="evaluation reports")
    eval_sub = evalp.add_subparsers(dest="subcommand", required=True)

    fadp = eval_sub.add_parser("fad", help="Frechet audio distance between two WAV directories")
    _add_common(fadp)
    fadp.add_argument("reference", help="directory of reference WAVs")
    fadp.add_argument("candidate", help="directory of candidate WAVs")
    fadp.add_argument("--out", default=None, help="report path (default: <reports>/fad.json)")
    fadp.add_argument("--reports", default=None, help="reports directory (default: paths.reports)")
    fadp.set_defaults(func=cmd_eval_fad)

    clapp = eval_sub.add_parser("clap", help="prompt-audio similarity over a manifest")
    _add_common(clapp)
    clapp.add_argument("manifest", help="manifest.jsonl of prompt + audio items")
    clapp.add_argument("--out", default=None, help="report path (default: <reports>/clap.json)")
    clapp.add_argument("--reports", default=None, help="reports directory (default: paths.reports)")
    clapp.set_defaults(func=cmd_eval_clap)

    judgep = eval_sub.add_parser("judge", help="alignment scores from recorded judge responses")
    _add_common(judgep)
    judgep.add_argument("manifest", help="manifest.jsonl of prompt + audio items")
    judgep.add_argument("--fixtures", default=None, help="recorded judge responses (required)")
    judgep.add_argument(
        "--criterion",
        choices=("genre", "instruments", "both"),
        default="both",
        help="alignment criterion (default both)",
    )
    judgep.add_argument("--runs", type=int, default=JUDGE_RUNS, help="judge runs per item (default 3)")
    judgep.add_argument("--out", default=None, help="report path (default: <reports>/judge.json)")
    judgep.add_argument("--reports", default=None, help="reports directory (default: paths.reports)")
    judgep.set_defaults(func=cmd_eval_judge)

    ablate = sub.add_parser(
        "ablate", help="judge with-prompt vs prompt-ablated generations per criterion"
    )
    _add_common(ablate)
    ablate.add_argument("--manifest", required=True, help="manifest.jsonl naming items and prompts")
    ablate.add_argument(
        "--with-dir", required=True, help="directory of {id}.wav generated with each item's prompt"
    )
    ablate.add_argument(
        "--ablated-dir",
        required=True,
        help=f"directory of {{id}}.wav generated with the fixed prompt {ABLATION_PROMPT!r}",
    )
    ablate.add_argument("--fixtures", default=None, help="recorded judge responses (required)")
    ablate.add_argument("--runs", type=int, default=JUDGE_RUNS, help="judge runs per item (default 3)")
    ablate.add_argument("--out", default=None, help="report path (default: <reports>/ablation.json)")
    ablate.add_argument("--reports", default=None, help="reports directory (default: paths.reports)")
    ablate.set_defaults(func=cmd_ablate)

    return parser


def main(argv: list[str] | None = None) -> int:
    torch.set_num_threads(1)
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "runs", 1) < 1:
        log("--runs must be >= 1")
        return EXIT_USAGE
    try:
        return args.func(args)
    except CliError as e:
        log(str(e))
        return e.code
    except ConfigError as e:
        log(f"config error: {e}")
        return EXIT_USAGE
    except ModelError as e:
        log(f"bad model or training settings: {e}")
        return EXIT_USAGE
    except NonFiniteLossError as e:
        log(f"numeric failure: {e}")
        return EXIT_NUMERIC
    except EvalError as e:
        log(f"numeric failure: {e}")
        return EXIT_NUMERIC
    except (CheckpointError, StageError, FixtureError) as e:
        log(f"missing or unusable prerequisite: {e}")
        return EXIT_MISSING
    except (DatapipeError, CoreError, OSError) as e:
        log(f"I/O error: {e}")
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
