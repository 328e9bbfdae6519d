"""Batch command-line front end.

Subcommands chain into the full workflow: gen-synthetic or an external
extractor produces a manifest plus KEB1 embeddings; sample-pairs draws
validation pairs; finetune trains the adapter; apply transforms embeddings;
calibrate picks thresholds; verify and retrieve score the two tasks.

Every command takes its randomness from an explicit seed and overwrites its
outputs deterministically. Exit codes: 0 success, 1 usage error, 2 data or
validation error, 3 internal error; any failure prints a single
``error: <kind>: <message>`` line to stderr.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from . import (
    calibration,
    embedding_store,
    finetune,
    pair_sampler,
    retrieval,
    similarity,
    synthetic,
)
from .errors import KinsearchError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports bad flags through the exit-code contract."""

    def error(self, message):
        raise UsageError(message)


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def _nonneg_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("cannot be negative")
    return value


def _load_dataset(manifest_path, embeddings_path):
    records = embedding_store.load_manifest(manifest_path)
    matrix = embedding_store.load_embeddings(embeddings_path)
    index = embedding_store.build_index(records, matrix)
    return records, matrix, index


def _print_table(rows, header) -> None:
    widths = [
        max(len(str(row[i])) for row in [header, *rows])
        for i in range(len(header))
    ]
    for row in [header, *rows]:
        line = "  ".join(str(cell).ljust(w) for cell, w in zip(row, widths))
        print(line.rstrip())


# -- subcommand handlers -----------------------------------------------------

def _cmd_gen_synthetic(args) -> int:
    config = synthetic.SyntheticConfig(
        families=args.families,
        persons_per_family=tuple(args.persons),
        images_per_person=tuple(args.images),
        dim=args.dim,
        signal_dims=args.signal_dims,
        family_spread=args.family_spread,
        person_spread=args.person_spread,
        image_noise=args.image_noise,
        distractor_noise=args.distractor_noise,
        seed=args.seed,
    )
    records, matrix = synthetic.generate(config)
    embedding_store.write_manifest(records, args.out_manifest)
    embedding_store.write_embeddings(matrix, args.out_embeddings)
    if args.out_truth:
        synthetic.write_ground_truth(config, records, args.out_truth)
    print(f"wrote {len(records)} images, {config.families} families")
    return EXIT_OK


def _cmd_sample_pairs(args) -> int:
    _, _, index = _load_dataset(args.manifest, args.embeddings)
    pair_set = pair_sampler.sample_validation_pairs(index, args.k, args.seed)
    pair_sampler.write_pairs(pair_set, args.out)
    print(f"wrote {len(pair_set)} pairs")
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    if (args.target_fpr is None) == (args.target_tpr is None):
        raise UsageError("exactly one of --target-fpr or --target-tpr is required")
    if args.per_type and args.target_fpr is None:
        raise UsageError("--per-type requires --target-fpr")
    _, matrix, index = _load_dataset(args.manifest, args.embeddings)
    pair_set = pair_sampler.load_pairs(args.pairs)
    scored = similarity.score_pairs(pair_set, index, matrix)
    labelled = [(score, pair.is_kin) for pair, score in scored]

    curve = calibration.compute_roc(labelled)
    auc = calibration.compute_auc(labelled)
    if args.target_fpr is not None:
        if args.per_type:
            policy = calibration.per_type_thresholds(
                [(score, pair.is_kin, pair.kin_type) for pair, score in scored],
                args.target_fpr,
                min_count=args.min_count,
            )
        else:
            negatives = [score for pair, score in scored if not pair.is_kin]
            policy = calibration.ThresholdPolicy(
                calibration.threshold_at_fpr(negatives, args.target_fpr)
            )
    else:
        positives = [score for pair, score in scored if pair.is_kin]
        policy = calibration.ThresholdPolicy(
            calibration.threshold_at_tpr(positives, args.target_tpr)
        )
    calibration.write_policy(policy, args.out_policy)
    calibration.write_roc_csv(curve, args.out_roc)
    print(f"auc {auc!r}")
    print(f"default threshold {policy.default_threshold!r}")
    return EXIT_OK


def _cmd_verify(args) -> int:
    _, matrix, index = _load_dataset(args.manifest, args.embeddings)
    pair_set = pair_sampler.load_pairs(args.pairs)
    policy = calibration.load_policy(args.policy)
    scored = similarity.score_pairs(pair_set, index, matrix)
    scores = [score for _, score in scored]
    report = calibration.evaluate_verification(pair_set, scores, policy)
    calibration.write_verification_report(report, args.out_report)
    with open(args.out_predictions, "w", encoding="utf-8") as fh:
        fh.write("image_a,image_b,kin_type,label,score,decision\n")
        for pair, score in scored:
            decision = score >= policy.threshold_for(pair.kin_type)
            kin_token = pair.kin_type.value if pair.kin_type else ""
            fh.write(
                f"{pair.image_a},{pair.image_b},{kin_token},"
                f"{1 if pair.is_kin else 0},{score!r},{1 if decision else 0}\n"
            )
    rows = [
        (key, f"{report.accuracy_by_type[key]:.4f}", report.counts_by_type[key])
        for key in report.accuracy_by_type
    ]
    rows.append(("average", f"{report.average_accuracy:.4f}", len(pair_set)))
    _print_table(rows, header=("type", "accuracy", "pairs"))
    return EXIT_OK


def _default_train_config_json() -> str:
    config = dataclasses.asdict(finetune.TrainConfig())
    config["milestone_epochs"] = list(config["milestone_epochs"])
    return json.dumps(config, indent=2)


def _cmd_finetune(args) -> int:
    if args.print_default_config:
        print(_default_train_config_json())
        return EXIT_OK
    for name in ("manifest", "embeddings", "out"):
        if getattr(args, name) is None:
            raise UsageError(f"--{name} is required")
    overrides = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            overrides.update(json.load(fh))
    for field, flag in (
        ("base_lr", "base_lr"),
        ("momentum", "momentum"),
        ("batch_size", "batch_size"),
        ("epochs", "epochs"),
        ("warmup_batches", "warmup_batches"),
        ("cooldown_batches", "cooldown_batches"),
        ("milestone_factor", "milestone_factor"),
        ("clip_norm", "clip_norm"),
        ("seed", "seed"),
    ):
        value = getattr(args, flag)
        if value is not None:
            overrides[field] = value
    if args.milestone_epochs is not None:
        overrides["milestone_epochs"] = [
            int(tok) for tok in args.milestone_epochs.split(",") if tok
        ]
    if args.normalize is not None:
        overrides["normalize_embeddings"] = args.normalize
    if "milestone_epochs" in overrides:
        overrides["milestone_epochs"] = tuple(overrides["milestone_epochs"])
    unknown = set(overrides) - {f.name for f in dataclasses.fields(finetune.TrainConfig)}
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    config = finetune.TrainConfig(**overrides)

    _, matrix, index = _load_dataset(args.manifest, args.embeddings)
    validation = pair_sampler.load_pairs(args.val_pairs) if args.val_pairs else None
    model, log = finetune.train(
        index, matrix, config, validation=validation,
        select_best=not args.select_last,
    )
    finetune.write_model(model, args.out)
    if args.log:
        finetune.write_train_log(log, args.log)
    if log.val_auc:
        print(f"best epoch {log.best_epoch}, val auc {max(log.val_auc)!r}")
    print(f"final mean loss {log.epoch_mean_loss[-1]!r}")
    return EXIT_OK


def _cmd_apply(args) -> int:
    model = finetune.load_model(args.model)
    matrix = embedding_store.load_embeddings(args.embeddings)
    transformed = finetune.apply_adapter(model, matrix)
    embedding_store.write_embeddings(transformed, args.out)
    print(f"wrote {transformed.n} x {transformed.dim} embeddings")
    return EXIT_OK


def _cmd_retrieve(args) -> int:
    gallery_records = embedding_store.load_manifest(args.gallery)
    matrix = embedding_store.load_embeddings(args.embeddings)
    gallery = retrieval.gallery_from_records(gallery_records)
    probe_manifest = args.probe_manifest or args.gallery
    probe_records = embedding_store.load_manifest(probe_manifest)
    probe_index = embedding_store.build_index(probe_records, matrix)
    probes = retrieval.load_probes(args.probes, probe_index)
    report = retrieval.run_retrieval(probes, gallery, matrix, args.policy, k=args.k)
    if args.out_report:
        retrieval.write_retrieval_report(report, args.out_report)
    if args.rankings_dir:
        rankings_dir = Path(args.rankings_dir)
        rankings_dir.mkdir(parents=True, exist_ok=True)
        for run in report.runs:
            retrieval.write_ranking_csv(
                run, gallery, rankings_dir / f"{run.person_id}.csv"
            )
    _print_table(
        [
            (
                report.policy,
                f"{report.mean_average_precision:.4f}",
                f"{report.rank_at_k:.4f}",
                report.k,
            )
        ],
        header=("policy", "mAP", f"rank@{report.k}", "K"),
    )
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="kinsearch", description=__doc__.strip().splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser(
        "gen-synthetic", parents=[], help="generate a synthetic labelled dataset"
    )
    p.add_argument("--out-manifest", required=True, help="manifest JSONL to write")
    p.add_argument("--out-embeddings", required=True, help="KEB1 file to write")
    p.add_argument("--out-truth", help="optional ground-truth JSON to write")
    p.add_argument("--seed", type=int, required=True, help="generator seed")
    p.add_argument("--families", type=int, default=50, help="family count (default 50)")
    p.add_argument(
        "--persons", type=_positive_int, nargs=2, default=[2, 6],
        metavar=("MIN", "MAX"), help="persons per family range (default 2 6)",
    )
    p.add_argument(
        "--images", type=_positive_int, nargs=2, default=[1, 4],
        metavar=("MIN", "MAX"), help="images per person range (default 1 4)",
    )
    p.add_argument("--dim", type=_positive_int, default=64, help="embedding dimension")
    p.add_argument("--signal-dims", type=_positive_int, default=8)
    p.add_argument("--family-spread", type=float, default=1.0)
    p.add_argument("--person-spread", type=float, default=0.3)
    p.add_argument("--image-noise", type=float, default=0.2)
    p.add_argument("--distractor-noise", type=float, default=1.5)
    p.set_defaults(handler=_cmd_gen_synthetic)

    p = sub.add_parser("sample-pairs", help="draw balanced validation pairs")
    p.add_argument("--manifest", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--k", type=_nonneg_int, default=5000,
                   help="positive pair count, negatives match (default 5000)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True, help="pairs CSV to write")
    p.set_defaults(handler=_cmd_sample_pairs)

    p = sub.add_parser("calibrate", help="pick thresholds and export the ROC curve")
    p.add_argument("--pairs", required=True, help="labelled pairs CSV")
    p.add_argument("--manifest", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--target-fpr", type=float)
    p.add_argument("--target-tpr", type=float)
    p.add_argument("--per-type", action="store_true",
                   help="also derive per-kin-type thresholds (needs --target-fpr)")
    p.add_argument("--min-count", type=_positive_int, default=30,
                   help="negatives needed before a type gets its own threshold")
    p.add_argument("--out-policy", required=True, help="threshold policy JSON")
    p.add_argument("--out-roc", required=True, help="ROC CSV")
    p.set_defaults(handler=_cmd_calibrate)

    p = sub.add_parser("verify", help="apply a threshold policy to labelled pairs")
    p.add_argument("--pairs", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--policy", required=True, help="threshold policy JSON")
    p.add_argument("--out-predictions", required=True, help="per-pair decisions CSV")
    p.add_argument("--out-report", required=True, help="accuracy report JSON")
    p.set_defaults(handler=_cmd_verify)

    p = sub.add_parser("finetune", help="train the adapter on family labels")
    p.add_argument("--manifest")
    p.add_argument("--embeddings")
    p.add_argument("--config", help="JSON file of training settings")
    p.add_argument("--val-pairs", help="pairs CSV scored after each epoch")
    p.add_argument("--out", help="model file to write")
    p.add_argument("--log", help="per-epoch training log CSV")
    p.add_argument("--base-lr", type=float, dest="base_lr")
    p.add_argument("--momentum", type=float)
    p.add_argument("--batch-size", type=_positive_int, dest="batch_size")
    p.add_argument("--epochs", type=_positive_int)
    p.add_argument("--warmup-batches", type=_nonneg_int, dest="warmup_batches")
    p.add_argument("--cooldown-batches", type=_nonneg_int, dest="cooldown_batches")
    p.add_argument("--milestone-epochs", dest="milestone_epochs",
                   help="comma-separated epoch numbers")
    p.add_argument("--milestone-factor", type=float, dest="milestone_factor")
    p.add_argument("--clip-norm", type=float, dest="clip_norm")
    p.add_argument("--seed", type=int)
    normalize = p.add_mutually_exclusive_group()
    normalize.add_argument("--normalize", dest="normalize", action="store_true",
                           default=None)
    normalize.add_argument("--no-normalize", dest="normalize", action="store_false")
    p.add_argument("--select-last", action="store_true",
                   help="keep the last epoch instead of the best validation AUC")
    p.add_argument("--print-default-config", action="store_true",
                   help="print the default training settings and exit")
    p.set_defaults(handler=_cmd_finetune)

    p = sub.add_parser("apply", help="transform embeddings through a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True, help="KEB1 file to write")
    p.set_defaults(handler=_cmd_apply)

    p = sub.add_parser("retrieve", help="rank the gallery for each probe subject")
    p.add_argument("--probes", required=True, help="probe subjects JSONL")
    p.add_argument("--gallery", required=True, help="gallery manifest JSONL")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--policy", required=True,
                   choices=list(retrieval.POLICIES))
    p.add_argument("--k", type=_positive_int, default=5,
                   help="cutoff for the rank@K metric (default 5)")
    p.add_argument("--probe-manifest",
                   help="manifest resolving probe image ids (default: --gallery)")
    p.add_argument("--out-report", help="retrieval report JSON")
    p.add_argument("--rankings-dir", help="write one ranking CSV per probe here")
    p.set_defaults(handler=_cmd_retrieve)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "handler", None):
            raise UsageError("a command is required (see --help)")
        return args.handler(args)
    except UsageError as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KinsearchError, OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: data: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SystemExit:
        raise
    except Exception as exc:  # pragma: no cover - defensive
        print(f"error: internal: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
