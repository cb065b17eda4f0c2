"""Command-line pipeline: synth / split / plan / augment / embed / train / eval.

Stage ordering is enforced mechanically: files written by `split` carry a
split tag, and `augment` refuses anything tagged val or test so synthetic
data can never leak into evaluation.

Exit codes: 0 success, 1 usage, 2 data/format error, 3 provider error,
4 numeric error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys

from abexrat import __version__, abex, embedder, metrics, mlp, synthbench, trainer
from abexrat.dataset import (
    AugmentationPlan,
    load_dataset,
    plan_for_dataset,
    save_dataset,
    stratified_split,
)
from abexrat.errors import AbexRatError, DataError


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _parse_counts(text: str) -> tuple[int, ...]:
    try:
        counts = tuple(int(p) for p in text.split(","))
    except ValueError:
        raise DataError(f"invalid counts {text!r}; expected comma-separated integers")
    return counts


def _parse_ratios(text: str) -> tuple[int, int, int]:
    parts = text.split(":")
    if len(parts) != 3:
        raise DataError(f"invalid ratios {text!r}; expected TRAIN:VAL:TEST")
    try:
        return tuple(int(p) for p in parts)
    except ValueError:
        raise DataError(f"invalid ratios {text!r}; expected integers")


def _cmd_synth(args) -> int:
    spec = synthbench.SynthSpec(
        class_counts=_parse_counts(args.counts),
        dim=args.dim,
        separation=args.sep,
        noise=args.noise,
        seed=args.seed,
    )
    ds = synthbench.generate_synthetic(spec)
    save_dataset(ds, args.out)
    print(f"wrote {len(ds)} samples over {len(spec.class_counts)} classes to {args.out}")
    return 0


def _cmd_split(args) -> int:
    ds = load_dataset(args.data)
    train, val, test = stratified_split(ds, _parse_ratios(args.ratios), args.seed)
    import os

    os.makedirs(args.out_dir, exist_ok=True)
    for part in (train, val, test):
        path = os.path.join(args.out_dir, f"{part.split}.jsonl")
        save_dataset(part, path)
        print(f"{part.split}: {len(part)} samples -> {path}")
    return 0


def _cmd_plan(args) -> int:
    ds = load_dataset(args.data)
    plan = plan_for_dataset(ds, args.multiplier)
    plan.save(args.out)
    total = sum(plan.per_class.values())
    print(f"plan: {total} synthetic samples across {len(plan.per_class)} classes -> {args.out}")
    return 0


def _cmd_augment(args) -> int:
    ds = load_dataset(args.data)
    if ds.split in ("val", "test"):
        raise DataError(
            f"refusing to augment a {ds.split!r} split; only training data may be augmented"
        )
    plan = AugmentationPlan.load(args.plan)
    if args.jitter is not None:
        out = synthbench.jitter_augment(ds, plan, sigma=args.jitter, seed=args.seed)
    else:
        if args.mock:
            provider = abex.MockTextGenProvider()
        else:
            provider = abex.HttpTextGenProvider(args.provider_url)
        if args.prompt_file:
            with open(args.prompt_file, "r", encoding="utf-8") as fh:
                prompt = abex.PromptTemplate(fh.read().strip())
        else:
            prompt = abex.PromptTemplate()
        out = abex.augment_dataset(ds, plan, provider, prompt, base_seed=args.seed)
    save_dataset(out, args.out)
    print(f"augmented {len(ds)} -> {len(out)} samples -> {args.out}")
    return 0


def _cmd_embed(args) -> int:
    ds = load_dataset(args.data)
    if args.mock:
        provider = embedder.MockEmbeddingProvider(args.dim)
    else:
        provider = embedder.HttpEmbeddingProvider(args.provider_url, args.dim)
    cache = embedder.EmbeddingCache(args.cache, args.dim)
    out = embedder.embed_dataset(ds, provider, cache, normalize=not args.no_normalize)
    save_dataset(out, args.out)
    print(f"embedded {len(out)} samples at dimension {args.dim} -> {args.out}")
    return 0


def _cmd_train(args) -> int:
    train_ds = load_dataset(args.train)
    val_ds = load_dataset(args.val)
    cfg = trainer.load_train_config(args.config)
    if args.no_rat:
        cfg = dataclasses.replace(cfg, enable_rat=False)
    if args.gamma is not None:
        cfg = dataclasses.replace(cfg, focal=dataclasses.replace(cfg.focal, gamma=args.gamma))
    if args.p_rat is not None:
        cfg = dataclasses.replace(cfg, rat=dataclasses.replace(cfg.rat, p_rat=args.p_rat))
    if args.epsilon is not None:
        cfg = dataclasses.replace(cfg, rat=dataclasses.replace(cfg.rat, epsilon=args.epsilon))
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    params, history = trainer.train_run(train_ds, val_ds, cfg)
    mlp.save_params(params, args.out, labels=train_ds.label_vocab())
    history.save(args.history)
    print(
        f"best epoch {history.best_epoch}/{cfg.epochs} "
        f"(val macro-F1 {history.best_val_macro_f1:.4f}) -> {args.out}"
    )
    return 0


def _cmd_eval(args) -> int:
    params, labels = mlp.load_params(args.model)
    ds = load_dataset(args.data)
    if ds.dim is None:
        raise DataError(f"dataset {args.data} carries no embeddings")
    if ds.dim != params.d:
        raise DataError(
            f"dimension mismatch: model expects d={params.d}, data has d={ds.dim}"
        )
    vocab = labels if labels is not None else ds.label_vocab()
    if len(vocab) != params.n_classes:
        raise DataError(
            f"dimension mismatch: model has {params.n_classes} classes, "
            f"vocabulary has {len(vocab)}"
        )
    X, y = ds.to_matrices(vocab)
    pred = mlp.predict_batch(params, X)
    report = metrics.evaluate(y, pred, vocab)
    report.save(args.report)
    if args.confusion:
        report.save_confusion_csv(args.confusion)
    print(
        f"macro-F1 {report.macro.f1:.4f}  weighted-F1 {report.weighted.f1:.4f} "
        f"over {len(ds)} samples -> {args.report}"
    )
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="abexrat", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a seeded synthetic benchmark dataset")
    p.add_argument("--counts", required=True, help="per-class counts, e.g. 1000,500,15")
    p.add_argument("--dim", type=int, default=synthbench.DEFAULT_DIM)
    p.add_argument("--sep", type=float, default=synthbench.DEFAULT_SEPARATION)
    p.add_argument("--noise", type=float, default=synthbench.DEFAULT_NOISE)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("split", help="stratified train/val/test split")
    p.add_argument("--data", required=True)
    p.add_argument("--ratios", default="8:1:1")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("plan", help="class-inverse augmentation budget")
    p.add_argument("--data", required=True)
    p.add_argument("--multiplier", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_plan)

    p = sub.add_parser("augment", help="expand the training split per a plan")
    p.add_argument("--data", required=True)
    p.add_argument("--plan", required=True)
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--provider-url", help="text-generation endpoint base URL")
    source.add_argument("--mock", action="store_true", help="offline deterministic provider")
    source.add_argument(
        "--jitter",
        type=float,
        help="embedding-space augmentation with this noise sigma (no provider)",
    )
    p.add_argument("--prompt-file", help="abstraction prompt template with one {text} slot")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("embed", help="attach embeddings via a provider")
    p.add_argument("--data", required=True)
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--provider-url", help="embedding endpoint base URL")
    source.add_argument("--mock", action="store_true")
    p.add_argument("--dim", type=int, required=True)
    p.add_argument("--cache", required=True)
    p.add_argument("--no-normalize", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("train", help="train the classifier")
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--history", required=True)
    p.add_argument("--no-rat", action="store_true", help="disable adversarial batches")
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--p-rat", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a model file on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--confusion", default=None, help="also write a counts CSV")
    p.set_defaults(func=_cmd_eval)
    return parser


def run_command(argv: list[str] | None = None) -> int:
    """Parse and run one subcommand, mapping errors to exit codes."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except AbexRatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


def main() -> None:
    sys.exit(run_command())
