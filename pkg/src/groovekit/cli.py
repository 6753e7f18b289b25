"""Command-line interface: ingest, stats, train, eval, task inference, gradcheck.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import baselines, checkpoint, metrics, neural, pipeline, representation, transforms
from .errors import (
    DataError,
    DegenerateStd,
    GrooveKitError,
    InsufficientGroup,
    NonFiniteLoss,
)
from .midi_io import MidiSequence, parse_smf, tick_to_seconds, write_smf
from .representation import (
    CATEGORY_NAMES,
    STEPS_PER_BAR,
    GrooveTensor,
    load_corpus,
    save_corpus,
    timed_notes_from_midi,
    windows,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

MODEL_CHOICES = ("quantized", "linear", "knn", "mlp", "seq2seq", "seq2seq-vib", "transfer")


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; this tool reserves 2 for data errors
    def error(self, message: str):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _parse_dims(text: str) -> tuple[int, int, int]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("dims must be E,Z,D (e.g. 64,32,64)")
    try:
        e, z, d = (int(p) for p in parts)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc
    return e, z, d


def _parse_category(text: str) -> tuple[int, ...]:
    if text == "hihat":
        return representation.HIHAT_CATEGORIES
    if text in CATEGORY_NAMES:
        return (CATEGORY_NAMES.index(text),)
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"unknown category {text!r}; use 0-8, a name like 'snare', or 'hihat'"
        )
    if not 0 <= value < representation.NUM_CATEGORIES:
        raise argparse.ArgumentTypeError(f"category index {value} outside 0-8")
    return (value,)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="groovekit", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="preprocess a directory of MIDI files into a corpus")
    p.add_argument("directory")
    p.add_argument("--out", required=True, help="corpus output path (sidecar manifest in .csv)")
    p.add_argument("--metadata", help="dataset metadata sheet (CSV) with split assignments")
    p.add_argument("--bars", type=int, default=2)
    p.add_argument("--hop", type=int, default=1)

    p = sub.add_parser("stats", help="offset/velocity statistics of an ingested corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default="train", choices=("train", "validation", "test", "all"))
    p.add_argument("--report", default="text", choices=("text", "json"))

    p = sub.add_parser("train", help="fit a model and write a checkpoint")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", required=True, choices=MODEL_CHOICES)
    p.add_argument("--task", default="humanize", choices=neural.TASKS)
    p.add_argument("--split", default="train", choices=("train", "validation", "test", "all"))
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--beta", type=float, help="KL weight (default 0; 0.2 for seq2seq-vib)")
    p.add_argument("--k", type=int, default=20, help="neighbors for the knn model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dims", type=_parse_dims, default=(64, 32, 64), help="encoder,latent,decoder dims")
    p.add_argument("--mlp-hidden", type=int, default=256)
    p.add_argument("--ridge-lambda", type=float, default=1e-3)
    p.add_argument("--category", type=_parse_category, default=None, help="drum voice for infill")

    p = sub.add_parser("eval", help="score a checkpoint on a corpus split")
    p.add_argument("--corpus", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", default="test", choices=("train", "validation", "test", "all"))
    p.add_argument("--report", default="text", choices=("text", "json"))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resamples", type=int, default=1000)
    p.add_argument("--no-baselines", action="store_true", help="skip the reference model rows")
    p.add_argument("--kl-direction", default="pred_vs_truth", choices=("pred_vs_truth", "truth_vs_pred"))

    for task in ("humanize", "infill", "tap2drum"):
        p = sub.add_parser(task, help=f"run {task} on a MIDI file")
        p.add_argument("input")
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--tempo", type=float, help="override the input file tempo")
        p.add_argument("--bars", type=int, default=2, help="window length the model processes")
        p.add_argument("--temperature", type=float, default=0.0, help="latent sampling temperature")
        if task == "humanize":
            p.add_argument("--corpus", help="ingested corpus (needed by groove-transfer checkpoints)")
        if task == "infill":
            p.add_argument("--category", type=_parse_category, default=None)
            p.add_argument(
                "--regenerate",
                action="store_true",
                help="strip the category from the input before infilling",
            )

    p = sub.add_parser("gradcheck", help="finite-difference validation of the training gradients")
    p.add_argument("--dims", type=_parse_dims, default=(6, 6, 6))
    p.add_argument("--timesteps", type=int, default=8)
    p.add_argument("--epsilon", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float, default=1e-4)

    return parser


# --- shared helpers -----------------------------------------------------------


def _load_corpus_with_manifest(path: str) -> tuple[list[GrooveTensor], list[pipeline.ManifestRow]]:
    grooves = load_corpus(path)
    manifest_path = path + ".csv"
    if Path(manifest_path).exists():
        rows = pipeline.load_manifest(manifest_path)
        if len(rows) != len(grooves):
            raise DataError(f"manifest rows ({len(rows)}) do not match corpus windows ({len(grooves)})")
    else:
        rows = [
            pipeline.ManifestRow(source="", window_index=i, split="train", tempo_bpm=g.tempo_bpm)
            for i, g in enumerate(grooves)
        ]
    return grooves, rows


def _select_split(
    grooves: list[GrooveTensor], rows: list[pipeline.ManifestRow], split: str
) -> list[GrooveTensor]:
    if split == "all":
        return grooves
    return [grooves[i] for i in pipeline.split_indices(rows, split)]


def _stitch_windows(grooves: list[GrooveTensor], ppq: int = 480) -> MidiSequence:
    """Concatenate consecutive windows into one sequence on a shared timeline."""
    if not grooves:
        raise DataError("nothing to write")
    ticks_per_step = ppq // 4
    merged = representation.to_midi(grooves[0], ppq)
    notes = list(merged.notes)
    offset_ticks = 0
    for g in grooves[1:]:
        offset_ticks += grooves[0].timesteps * ticks_per_step
        for note in representation.to_midi(g, ppq).notes:
            notes.append(dataclasses.replace(note, tick=note.tick + offset_ticks))
    notes.sort(key=lambda n: (n.tick, n.channel, n.pitch, n.velocity))
    return MidiSequence(
        ppq=ppq,
        tempo_events=merged.tempo_events,
        time_signature_events=merged.time_signature_events,
        notes=notes,
    )


def _read_performance(path: str, bars: int, tempo_override: float | None) -> tuple[list[GrooveTensor], float]:
    try:
        seq = parse_smf(Path(path).read_bytes())
    except FileNotFoundError as exc:
        raise DataError(f"{path}: {exc}") from exc
    tempo = tempo_override or seq.initial_bpm
    notes, unmapped = timed_notes_from_midi(seq)
    if unmapped:
        logger.warning("%s: dropped %d unmapped notes", path, unmapped)
    if not notes:
        raise DataError(f"{path}: no mappable drum notes")
    grooves = windows(notes, tempo, bars=bars, hop_bars=bars, drop_empty=False)
    return grooves, tempo


def _predict_humanization(
    ckpt: checkpoint.Checkpoint,
    score_hits: np.ndarray,
    tempo: float,
    train_windows: list[GrooveTensor],
    temperature: float = 0.0,
    rng: np.random.Generator | None = None,
) -> GrooveTensor:
    model = ckpt.model
    if isinstance(model, baselines.TrainStats):
        return baselines.quantized_baseline(score_hits, model, tempo)
    if isinstance(model, baselines.LinearParams):
        return baselines.linear_humanize(score_hits, model, tempo)
    if isinstance(model, checkpoint.KnnParams):
        return baselines.knn_humanize(score_hits, model.trainset, model.k, tempo)
    if isinstance(model, neural.MLPParams):
        return neural.mlp_humanize(score_hits, model, tempo)
    if isinstance(model, neural.Seq2SeqParams):
        if model.conditioned:
            return neural.groove_transfer_humanize(score_hits, train_windows, model, tempo_bpm=tempo)
        return neural.humanize(score_hits, model, tempo, z_temperature=temperature, rng=rng)
    raise DataError(f"checkpoint family {ckpt.family} cannot humanize")


# --- subcommands ---------------------------------------------------------------


def cmd_ingest(args) -> int:
    grooves, rows, stats = pipeline.ingest_directory(
        args.directory, metadata_path=args.metadata, bars=args.bars, hop_bars=args.hop
    )
    if not grooves:
        raise DataError("ingest produced an empty corpus")
    save_corpus(grooves, args.out)
    pipeline.save_manifest(rows, args.out + ".csv")
    print(stats.summary())
    print(f"corpus: {args.out} ({len(grooves)} windows); manifest: {args.out}.csv")
    return EXIT_OK


def cmd_stats(args) -> int:
    grooves, rows = _load_corpus_with_manifest(args.corpus)
    selected = _select_split(grooves, rows, args.split)
    if not selected:
        raise DataError(f"split {args.split!r} is empty")
    beat = metrics.onbeat_offbeat_stats(selected)
    groups = metrics.position_group_stats(selected)
    if args.report == "json":
        payload = {
            "split": args.split,
            "windows": len(selected),
            "onbeat_mean_offset": beat.onbeat_mean,
            "offbeat_mean_offset": beat.offbeat_mean,
            "onbeat_notes": beat.onbeat_count,
            "offbeat_notes": beat.offbeat_count,
            "position_groups": dataclasses.asdict(groups),
        }
        print(json.dumps(payload, indent=2))
        return EXIT_OK
    print(f"windows: {len(selected)} ({args.split})")
    print(
        f"on-beat notes:  {beat.onbeat_count:7d}  mean offset {beat.onbeat_mean:+.4f} "
        f"({'late' if beat.onbeat_mean > 0 else 'early'})"
    )
    print(
        f"off-beat notes: {beat.offbeat_count:7d}  mean offset {beat.offbeat_mean:+.4f} "
        f"({'late' if beat.offbeat_mean > 0 else 'early'})"
    )
    print("per 16th position (timestep mod 4):")
    for i in range(4):
        print(
            f"  pos {i}: offset {groups.offset_mean[i]:+.4f} ± {groups.offset_std[i]:.4f}, "
            f"velocity {groups.velocity_mean[i]:.4f} ± {groups.velocity_std[i]:.4f} "
            f"({groups.counts[i]} notes)"
        )
    return EXIT_OK


def _train_config(args) -> neural.TrainConfig:
    beta = args.beta
    if beta is None:
        beta = 0.2 if args.model == "seq2seq-vib" else 0.0
    e, z, d = args.dims
    return neural.TrainConfig(
        task=args.task,
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        beta_vib=beta,
        seed=args.seed,
        transfer_conditioning=(args.model == "transfer"),
        enc_dim=e,
        z_dim=z,
        dec_dim=d,
        mlp_hidden=args.mlp_hidden,
        infill_categories=args.category or representation.HIHAT_CATEGORIES,
    )


def cmd_train(args) -> int:
    grooves, rows = _load_corpus_with_manifest(args.corpus)
    train_set = _select_split(grooves, rows, args.split)
    if not train_set:
        raise DataError(f"split {args.split!r} is empty")
    if args.model in ("quantized", "linear", "knn", "mlp", "transfer") and args.task != "humanize":
        raise DataError(f"model {args.model} only supports the humanize task")

    cfg = _train_config(args)
    if args.model == "quantized":
        model = baselines.compute_train_stats(train_set)
    elif args.model == "linear":
        model = baselines.linear_fit(train_set, ridge_lambda=args.ridge_lambda)
    elif args.model == "knn":
        if args.k > len(train_set):
            raise DataError(f"k={args.k} exceeds training set size {len(train_set)}")
        model = checkpoint.KnnParams(trainset=train_set, k=args.k)
    elif args.model == "mlp":
        model = neural.train_mlp(train_set, cfg)
    else:
        model = neural.train_seq2seq(train_set, cfg)

    checkpoint.save_checkpoint(args.out, model, task=args.task)
    record = {
        "model": args.model,
        "task": args.task,
        "split": args.split,
        "seed": args.seed,
        "config": dataclasses.asdict(cfg),
        "corpus": args.corpus,
        "corpus_fingerprint": pipeline.corpus_fingerprint(args.corpus),
        "ridge_lambda": args.ridge_lambda if args.model == "linear" else None,
        "k": args.k if args.model == "knn" else None,
    }
    with open(args.out + ".json", "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2)
    history = getattr(model, "loss_history", None)
    if history:
        print(f"final training loss: {history[-1]:.6f} ({len(history)} steps)")
    print(f"checkpoint: {args.out}; record: {args.out}.json")
    return EXIT_OK


def _eval_one(
    name: str,
    ckpt: checkpoint.Checkpoint,
    truth: list[GrooveTensor],
    train_windows: list[GrooveTensor],
    args,
) -> metrics.MetricsReport:
    rng = np.random.default_rng(args.seed)
    preds = []
    for g in truth:
        if isinstance(ckpt.model, neural.Seq2SeqParams) and ckpt.task == "infill":
            stripped, _ = transforms.remove_voice(g, ckpt.model.infill_categories)
            preds.append(neural.infill(stripped, ckpt.model))
        elif isinstance(ckpt.model, neural.Seq2SeqParams) and ckpt.task == "tap2drum":
            taps = transforms.flatten_to_taps(g)
            preds.append(neural.tap2drum(taps, ckpt.model, g.tempo_bpm))
        else:
            preds.append(_predict_humanization(ckpt, g.hits, g.tempo_bpm, train_windows, rng=rng))
    with_kl = not isinstance(ckpt.model, baselines.TrainStats)
    try:
        return metrics.evaluate_pairs(
            preds,
            truth,
            num_resamples=args.resamples,
            seed=args.seed,
            direction=args.kl_direction,
            with_kl=with_kl,
        )
    except (DegenerateStd, InsufficientGroup) as exc:
        logger.warning("%s: KL unavailable (%s); reporting timing metrics only", name, exc)
        return metrics.evaluate_pairs(
            preds, truth, num_resamples=args.resamples, seed=args.seed, with_kl=False
        )


def _format_metric(value: metrics.MetricValue | None, scale: float = 1.0) -> str:
    if value is None:
        return "N/A"
    return f"{value.value * scale:.4g} [{value.ci_low * scale:.4g}-{value.ci_high * scale:.4g}]"


def cmd_eval(args) -> int:
    grooves, rows = _load_corpus_with_manifest(args.corpus)
    truth = _select_split(grooves, rows, args.split)
    if not truth:
        raise DataError(f"split {args.split!r} is empty")
    train_windows = _select_split(grooves, rows, "train")
    ckpt = checkpoint.load_checkpoint(args.checkpoint)

    reports: dict[str, metrics.MetricsReport] = {}
    main_name = f"{ckpt.family}:{ckpt.task}"
    reports[main_name] = _eval_one(main_name, ckpt, truth, train_windows, args)

    if not args.no_baselines and train_windows and ckpt.task == "humanize":
        stats_model = baselines.compute_train_stats(train_windows)
        reports["baseline:quantized"] = _eval_one(
            "baseline:quantized",
            checkpoint.Checkpoint("quantized", "humanize", stats_model),
            truth,
            train_windows,
            args,
        )
        linear_model = baselines.linear_fit(train_windows)
        reports["baseline:linear"] = _eval_one(
            "baseline:linear",
            checkpoint.Checkpoint("linear", "humanize", linear_model),
            truth,
            train_windows,
            args,
        )
        k = min(20, len(train_windows))
        knn_model = checkpoint.KnnParams(trainset=train_windows, k=k)
        reports[f"baseline:knn-k{k}"] = _eval_one(
            "baseline:knn",
            checkpoint.Checkpoint("knn", "humanize", knn_model),
            truth,
            train_windows,
            args,
        )

    if args.report == "json":
        payload = {
            "split": args.split,
            "windows": len(truth),
            "seed": args.seed,
            "models": {name: report.as_dict() for name, report in reports.items()},
        }
        print(json.dumps(payload, indent=2))
        return EXIT_OK

    print(f"split: {args.split} ({len(truth)} windows, {reports[main_name].note_count} notes)")
    header = f"{'model':<24} {'MAE ms':<22} {'MSE 16th':<22} {'timing KL':<22} {'velocity KL':<22}"
    print(header)
    print("-" * len(header))
    for name, report in reports.items():
        print(
            f"{name:<24} {_format_metric(report.mae_ms):<22} {_format_metric(report.mse_16th):<22} "
            f"{_format_metric(report.timing_kl):<22} {_format_metric(report.velocity_kl):<22}"
        )
    return EXIT_OK


def cmd_humanize(args) -> int:
    ckpt = checkpoint.load_checkpoint(args.checkpoint)
    bars = args.bars
    if isinstance(ckpt.model, neural.MLPParams):
        bars = ckpt.model.timesteps // STEPS_PER_BAR  # the MLP input width is fixed
    grooves, tempo = _read_performance(args.input, bars, args.tempo)
    train_windows: list[GrooveTensor] = []
    if isinstance(ckpt.model, checkpoint.KnnParams):
        train_windows = ckpt.model.trainset
    elif isinstance(ckpt.model, neural.Seq2SeqParams) and ckpt.model.conditioned:
        if not args.corpus:
            raise DataError("groove-transfer humanization needs --corpus for neighbor retrieval")
        corpus, rows = _load_corpus_with_manifest(args.corpus)
        train_windows = _select_split(corpus, rows, "train")
        if not train_windows:
            raise DataError("corpus has no train windows to retrieve grooves from")
    rng = np.random.default_rng(0)
    out = []
    for g in grooves:
        score = transforms.to_score(g)
        out.append(
            _predict_humanization(ckpt, score.hits, tempo, train_windows, args.temperature, rng)
        )
    Path(args.out).write_bytes(write_smf(_stitch_windows(out)))
    print(f"wrote {args.out} ({sum(g.hit_count() for g in out)} notes)")
    return EXIT_OK


def cmd_infill(args) -> int:
    ckpt = checkpoint.load_checkpoint(args.checkpoint)
    if not isinstance(ckpt.model, neural.Seq2SeqParams) or ckpt.task != "infill":
        raise DataError("infill needs a seq2seq checkpoint trained for the infill task")
    grooves, _ = _read_performance(args.input, args.bars, args.tempo)
    categories = args.category or ckpt.model.infill_categories
    out = []
    for g in grooves:
        source = transforms.remove_voice(g, categories)[0] if args.regenerate else g
        out.append(neural.infill(source, ckpt.model, categories))
    Path(args.out).write_bytes(write_smf(_stitch_windows(out)))
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_tap2drum(args) -> int:
    ckpt = checkpoint.load_checkpoint(args.checkpoint)
    if not isinstance(ckpt.model, neural.Seq2SeqParams) or ckpt.task != "tap2drum":
        raise DataError("tap2drum needs a seq2seq checkpoint trained for the tap2drum task")
    try:
        seq = parse_smf(Path(args.input).read_bytes())
    except FileNotFoundError as exc:
        raise DataError(f"{args.input}: {exc}") from exc
    tempo = args.tempo or seq.initial_bpm
    if not seq.notes:
        raise DataError(f"{args.input}: no notes to read taps from")
    last_onset = max(tick_to_seconds(seq, n.tick) for n in seq.notes)
    step = representation.step_seconds(tempo)
    span = args.bars * STEPS_PER_BAR
    needed = int(last_onset / step) + 1
    total = max(1, (needed + span - 1) // span) * span
    taps = transforms.taps_from_midi(seq, timesteps=total, tempo_bpm=tempo)
    out = []
    for lo in range(0, total, span):
        chunk = transforms.TapTensor(taps.taps[lo : lo + span], taps.tap_offsets[lo : lo + span])
        out.append(neural.tap2drum(chunk, ckpt.model, tempo))
    Path(args.out).write_bytes(write_smf(_stitch_windows(out)))
    print(f"wrote {args.out} ({sum(g.hit_count() for g in out)} notes)")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    e, z, d = args.dims
    rng = np.random.default_rng(args.seed)
    steps, m = args.timesteps, representation.NUM_CATEGORIES
    batch = 2
    hits = (rng.random((batch, steps, m)) < 0.4).astype(np.float64)
    vels = rng.random((batch, steps, m)) * hits
    offs = (rng.random((batch, steps, m)) - 0.5) * 0.9 * hits
    targets = tuple(a.transpose(1, 0, 2) for a in (hits, vels, offs))

    worst = 0.0
    failed = False
    for label, task, conditioned, beta in (
        ("mlp", "humanize", False, 0.0),
        ("seq2seq", "humanize", False, 0.0),
        ("seq2seq+vib", "humanize", False, 0.2),
        ("transfer", "humanize", True, 0.0),
    ):
        cfg = neural.TrainConfig(
            task=task,
            enc_dim=e,
            z_dim=z,
            dec_dim=d,
            mlp_hidden=8,
            beta_vib=beta,
            transfer_conditioning=conditioned,
            seed=args.seed,
        )
        if label == "mlp":
            params = neural.init_mlp(cfg, steps, np.random.default_rng(args.seed))
            X = hits.reshape(batch, -1)
            Y = np.concatenate([hits, vels, offs], axis=2).reshape(batch, -1)
            sample = (X, Y)
        else:
            params = neural.init_seq2seq(cfg, np.random.default_rng(args.seed))
            if conditioned:
                inputs = np.concatenate([hits, vels, offs], axis=2).transpose(1, 0, 2)
                condition = hits.transpose(1, 0, 2)
            else:
                inputs = hits.transpose(1, 0, 2)
                condition = None
            sample = (inputs, targets, condition)
        error = neural.gradient_check(params, sample, cfg, epsilon=args.epsilon)
        status = "ok" if error < args.threshold else "FAIL"
        failed = failed or error >= args.threshold
        worst = max(worst, error)
        print(f"{label:<14} max relative error {error:.3e}  [{status}]")
    print(f"worst: {worst:.3e} (threshold {args.threshold:g})")
    return EXIT_NUMERIC if failed else EXIT_OK


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "ingest": cmd_ingest,
        "stats": cmd_stats,
        "train": cmd_train,
        "eval": cmd_eval,
        "humanize": cmd_humanize,
        "infill": cmd_infill,
        "tap2drum": cmd_tap2drum,
        "gradcheck": cmd_gradcheck,
    }
    try:
        return handlers[args.command](args)
    except (NonFiniteLoss, DegenerateStd) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except GrooveKitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
