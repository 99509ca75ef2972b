"""Command line entry point: ``ctm train|eval|ablate|sweep|gradcheck|synth``."""

import argparse
import logging
import sys
from pathlib import Path

from .config import CtmConfig
from .data import SynthSpec, parse_dream, parse_race, synth_dataset, write_race
from .errors import CtmError
from .harness import (
    Checkpoint,
    ablate,
    evaluate,
    format_gradcheck,
    gradcheck_cmd,
    split_examples,
    sweep_lambda,
    table_csv,
    train,
)

log = logging.getLogger("ctm")


def _u64(text):
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed must fit in an unsigned 64-bit integer: {v}")
    return v


def _config(args):
    config = CtmConfig.load(args.config) if args.config else CtmConfig()
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    return config


def synth_spec(config):
    return SynthSpec(questions=config.synth_questions, n_options=config.n_options, vocab=config.synth_vocab,
                     sentences=config.synth_sentences, sentence_len=config.synth_sentence_len,
                     option_len=config.synth_option_len, seed=config.seed)


def load_splits(args, config):
    """``(train, held_out)`` for the chosen format.

    Synthetic data is generated from the config and split by ``eval_fraction``.
    RACE/DREAM read ``--data`` for training and ``--eval-data`` (if given) for evaluation.
    """
    if args.format == "synth":
        if args.data:
            return split_examples(config, parse_race(args.data, config.n_options))
        return split_examples(config, synth_dataset(synth_spec(config)))
    if not args.data:
        raise CtmError(f"--data is required for --format {args.format}")
    parse = parse_race if args.format == "race" else parse_dream
    n = config.n_options if args.format == "race" else 3
    train_set = parse(args.data, n)
    held = parse(args.eval_data, n) if getattr(args, "eval_data", None) else []
    return train_set, held


def _emit(text, out):
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_train(args):
    config = _config(args)
    train_set, held = load_splits(args, config)
    ckpt, metrics = train(config, train_set, eval_sets={"eval": held} if held else None)
    out = Path(args.out or "model.ctm")
    out.parent.mkdir(parents=True, exist_ok=True)
    ckpt.save(out)
    metrics_path = out.with_suffix(".metrics.csv")
    metrics_path.write_text(metrics.to_csv(), encoding="utf-8")
    print(f"checkpoint {out}; metrics {metrics_path}")
    return 0


def cmd_eval(args):
    ckpt = Checkpoint.load(args.checkpoint)
    config = _config(args) if args.config else ckpt.config
    if args.seed is not None and not args.config:
        config = config.replace(seed=args.seed)
    train_set, held = load_splits(args, config)
    examples = held if args.format == "synth" else (held or train_set)
    metrics = evaluate(ckpt, examples, config=config)
    _emit(metrics.to_csv(), args.out)
    return 0


def _seeds(args, config):
    if args.seeds:
        return [_u64(s) for s in args.seeds.split(",")]
    return [config.seed]


def cmd_ablate(args):
    config = _config(args)
    train_set, held = load_splits(args, config)
    sets = [s for s in args.sets.split(",") if s]
    rows = ablate(config, train_set, held or train_set, branch_sets=sets, seeds=_seeds(args, config))
    _emit(table_csv(rows), args.out)
    return 0


def cmd_sweep(args):
    config = _config(args)
    train_set, held = load_splits(args, config)
    values = [float(v) for v in args.values.split(",")]
    rows = sweep_lambda(config, train_set, held or train_set, values=values, seeds=_seeds(args, config))
    _emit(table_csv(rows), args.out)
    return 0


def cmd_gradcheck(args):
    config = _config(args)
    passed, report = gradcheck_cmd(config, config.seed, tol=args.tol)
    _emit(format_gradcheck(report, args.tol) + "\n", args.out)
    return 0 if passed else 1


def cmd_synth(args):
    config = _config(args)
    examples = synth_dataset(synth_spec(config))
    out = Path(args.out or "synth.json")
    write_race(examples, out, article_id=f"synth{config.seed}")
    print(f"{len(examples)} questions -> {out}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="ctm", description="Context-guided triple matching for MCQA.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True):
        p.add_argument("--config", help="flat JSON file of config fields")
        p.add_argument("--seed", type=_u64, help="overrides the config seed")
        p.add_argument("--out", help="output path")
        if data:
            p.add_argument("--data", help="dataset file or directory")
            p.add_argument("--format", choices=("race", "dream", "synth"), default="synth")
            p.add_argument("--eval-data", help="held-out dataset (race/dream)")
        return p

    common(sub.add_parser("train", help="train and write a checkpoint plus metrics CSV")).set_defaults(fn=cmd_train)
    p = common(sub.add_parser("eval", help="evaluate a checkpoint"))
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(fn=cmd_eval)
    p = common(sub.add_parser("ablate", help="compare branch sets and baselines"))
    p.add_argument("--sets", default="a,q,p,a+q+p", help="comma separated; branches joined by '+', or dcmn/co/cnn")
    p.add_argument("--seeds", help="comma separated seeds (default: the config seed)")
    p.set_defaults(fn=cmd_ablate)
    p = common(sub.add_parser("sweep", help="vary the contrastive weight"))
    p.add_argument("--values", default="0,0.5,1,1.5")
    p.add_argument("--seeds", help="comma separated seeds (default: the config seed)")
    p.set_defaults(fn=cmd_sweep)
    p = common(sub.add_parser("gradcheck", help="finite-difference check of the joint objective"), data=False)
    p.add_argument("--tol", type=float, default=1e-5)
    p.set_defaults(fn=cmd_gradcheck)
    common(sub.add_parser("synth", help="write a synthetic corpus in RACE format"), data=False).set_defaults(fn=cmd_synth)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except CtmError as exc:
        print(f"ctm {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
