"""Command-line entry point: ``canonseg <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 internal invariant
violation. Every flag can also be set through an environment variable named
``CANONSEG_<FLAG>`` (``--n-samples`` reads ``CANONSEG_N_SAMPLES``); flags given
on the command line win.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import platform
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__, checks, data, evaluation, training
from .baseline import FlatSegmentation
from .core import AlignmentError, Alphabet, BudgetError, GuardError, ModelParameters, SparseVector, TreeError
from .joint import Proposal, TrainingDataError, normalize_log_weights

logger = logging.getLogger("canonseg")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3
ENV_PREFIX = "CANONSEG_"
FLAT_TAG = "Flat"


class UsageError(Exception):
    pass


# --------------------------------------------------------------------------
# Argument parsing
# --------------------------------------------------------------------------


def _int_list(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(x) for x in text.split(",") if x.strip())
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from err


def _float_list(text: str) -> tuple[float, ...]:
    try:
        values = tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from err
    if not values:
        raise argparse.ArgumentTypeError("expected at least one value")
    return values


def _split_arg(text: str):
    if text.lower() == "none":
        return None
    try:
        value = int(text)
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"split must be an index in [0,{data.N_SPLITS}) or 'none'") from err
    if not 0 <= value < data.N_SPLITS:
        raise argparse.ArgumentTypeError(f"split must be an index in [0,{data.N_SPLITS}) or 'none'")
    return value


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _train_flags(p: argparse.ArgumentParser, defaults: training.TrainConfig) -> None:
    g = p.add_argument_group("training (mirrors TrainConfig)")
    g.add_argument("--epochs", type=int, default=defaults.epochs)
    g.add_argument("--learning-rate", type=float, default=defaults.learning_rate)
    g.add_argument("--lambda-grid", type=_float_list, default=defaults.lambda_grid, help="comma-separated L2 strengths")
    g.add_argument("--n-samples", type=int, default=defaults.n_samples, help="importance samples per gradient")
    g.add_argument("--n-decode-samples", type=int, default=defaults.n_decode_samples)
    g.add_argument("--patience", type=int, default=defaults.patience)
    g.add_argument("--dev-metric", choices=training.DEV_METRICS, default=defaults.dev_metric)
    g.add_argument("--seed", type=int, default=defaults.seed)
    g.add_argument("--workers", type=int, default=defaults.workers)


def _model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alphabet", default=None, help="symbols of the canonical alphabet, or 'infer' from the data")
    p.add_argument("--k", type=int, default=5, help="insertion budget: |u| <= |w| + k")


def _split_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--split", type=_split_arg, default=None, help="split index, or 'none' to use the whole treebank")
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--sizes", type=_int_list, default=data.DEFAULT_SIZES, help="train,dev,test sizes")


def build_parser() -> argparse.ArgumentParser:
    defaults = training.TrainConfig()
    parser = _Parser(prog="canonseg", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"canonseg {__version__}")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a hierarchical or flat model")
    p.add_argument("--model", choices=["hier", "flat"], default="hier")
    p.add_argument("--treebank", required=True, help="treebank file, or bundled:<name>")
    p.add_argument("--lexicon", default=None)
    p.add_argument("--dev", default=None, help="dev treebank when --split is none (defaults to the training set)")
    p.add_argument("--out", required=True, help="model file; the log and manifest are written beside it")
    _split_flags(p)
    _model_flags(p)
    _train_flags(p, defaults)

    p = sub.add_parser("predict", help="decode surface words with a trained model")
    p.add_argument("--model", required=True)
    p.add_argument("--words", required=True, help="one word per line, '-' for stdin")
    p.add_argument("--out", default=None, help="output file (stdout if omitted)")
    p.add_argument("--n-decode-samples", type=int, default=None, help="defaults to the value used in training")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)

    p = sub.add_parser("evaluate", help="score predictions against a gold treebank")
    p.add_argument("--pred", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--out", default=None)

    p = sub.add_parser("sample", help="emit weighted proposal samples for one word")
    p.add_argument("--word", required=True)
    p.add_argument("--model", default=None, help="trained model; zero weights if omitted")
    p.add_argument("--lexicon", default=None)
    p.add_argument("--kind", choices=["hier", "flat"], default="hier", help="structure factor when no model is given")
    p.add_argument("--n-samples", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    _model_flags(p)

    p = sub.add_parser("oracle", help="run guarded exact checks against the dynamic programs")
    p.add_argument("check", choices=sorted(checks.CHECKS) + ["all"])
    p.add_argument("--draws", type=int, default=None, help="random weight draws (per-check default)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-len", type=int, default=checks.MAX_PARSER_LENGTH, help="parser: longest |u|")
    p.add_argument("--alphabet", default="ab", help="transducer: alphabet")
    p.add_argument("--max-w", type=int, default=3, help="transducer: longest |w|")
    p.add_argument("--max-k", type=int, default=2, help="transducer: largest k")
    p.add_argument("--out", default=None)

    p = sub.add_parser("splits", help="materialize train/dev/test index files")
    p.add_argument("--treebank", required=True)
    p.add_argument("--out", required=True, help="directory; one sub-directory per split")
    _split_flags(p)

    p = sub.add_parser("compare", help="train and test both models on several splits")
    p.add_argument("--treebank", required=True)
    p.add_argument("--lexicon", default=None)
    p.add_argument("--splits", type=_int_list, default=(0, 1, 2))
    p.add_argument("--split-seed", type=int, default=0)
    p.add_argument("--sizes", type=_int_list, default=data.DEFAULT_SIZES)
    p.add_argument("--out", default=None, help="report file (stdout if omitted)")
    _model_flags(p)
    _train_flags(p, defaults)
    return parser


def _subparsers(parser: argparse.ArgumentParser):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices
    return {}


def apply_env_overrides(parser: argparse.ArgumentParser, environ=None) -> None:
    """Turn ``CANONSEG_<FLAG>`` variables into flag defaults."""
    environ = os.environ if environ is None else environ
    for sp in [parser, *_subparsers(parser).values()]:
        for action in sp._actions:
            longs = [s for s in action.option_strings if s.startswith("--")]
            if not longs or action.dest in ("help", "version"):
                continue
            name = ENV_PREFIX + longs[0][2:].replace("-", "_").upper()
            if name not in environ:
                continue
            raw = environ[name]
            try:
                value = action.type(raw) if action.type else raw
            except (argparse.ArgumentTypeError, ValueError) as err:
                raise UsageError(f"{name}={raw!r}: {err}") from err
            if action.choices is not None and value not in action.choices:
                raise UsageError(f"{name}={raw!r}: choose from {', '.join(map(str, action.choices))}")
            action.default = value
            action.required = False


# --------------------------------------------------------------------------
# Helpers
# --------------------------------------------------------------------------


def resolve(path: str | None) -> Path | None:
    if path is None:
        return None
    if path.startswith("bundled:"):
        return data.bundled(path[len("bundled:"):])
    return Path(path)


def _jsonable(value):
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, tuple):
        return list(value)
    return value


def write_manifest(path: Path, args: argparse.Namespace, inputs: dict, outputs: dict) -> Path:
    manifest = {
        "subcommand": args.command,
        "config": {k: _jsonable(v) for k, v in sorted(vars(args).items())},
        "inputs": {k: _jsonable(v) for k, v in inputs.items()},
        "outputs": {k: _jsonable(v) for k, v in outputs.items()},
        "seed": getattr(args, "seed", None),
        "version": f"canonseg {__version__}; python {platform.python_version()}; numpy {np.__version__}",
    }
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def _manifest_path(out: Path) -> Path:
    return out.with_name(out.name + ".manifest.json")


def _emit(text: str, out: str | None) -> Path | None:
    if out is None:
        sys.stdout.write(text)
        return None
    path = Path(out)
    path.write_text(text, encoding="utf-8")
    return path


def _config_from_args(args) -> training.TrainConfig:
    return training.TrainConfig(
        epochs=args.epochs,
        learning_rate=args.learning_rate,
        lambda_grid=args.lambda_grid,
        n_samples=args.n_samples,
        n_decode_samples=args.n_decode_samples,
        patience=args.patience,
        dev_metric=args.dev_metric,
        seed=args.seed,
        workers=args.workers,
    )


def _alphabet(arg: str | None, entries) -> Alphabet:
    if arg is None:
        return Alphabet()
    if arg == "infer":
        from .estimator import infer_alphabet

        return infer_alphabet(entries)
    return Alphabet(arg)


def render_prediction(analysis) -> str:
    """``w<TAB>u<TAB>tree``; flat analyses render as ``(Flat seg1 seg2 ...)``."""
    if isinstance(analysis.t, FlatSegmentation):
        tree = f"({FLAT_TAG} {' '.join(analysis.segments)})"
    else:
        tree = analysis.t.to_sexpr(analysis.u)
    return f"{analysis.w}\t{analysis.u}\t{tree}"


def read_predictions(path: Path):
    """Parse a prediction file; returns ``(word, u, tree-or-None, segments)`` rows."""
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise data.FormatError("expected <word>\\t<canonical>\\t<tree>", lineno)
            w, u, sexpr = parts
            flat_prefix = f"({FLAT_TAG} "
            if sexpr.startswith(flat_prefix) and sexpr.endswith(")"):
                segments = sexpr[len(flat_prefix):-1].split()
                tree = None
            else:
                tree, parsed_u = data.parse_tree(sexpr, lineno)
                segments = [parsed_u[leaf.start:leaf.end] for leaf in tree.leaves()]
            if "".join(segments) != u:
                raise data.FormatError(f"segments spell {''.join(segments)!r}, not {u!r}", lineno)
            rows.append((w, u, tree, segments))
    return rows


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------


def cmd_train(args) -> int:
    treebank = resolve(args.treebank)
    entries = data.load_treebank(treebank)
    lexicon = data.load_lexicon(resolve(args.lexicon))
    if args.split is not None:
        spec = data.SplitSpec(args.split_seed, tuple(args.sizes), args.split)
        train_set, dev_set, _ = data.make_splits(entries, spec)
    else:
        train_set = entries
        dev_set = data.load_treebank(resolve(args.dev)) if args.dev else entries
    config = _config_from_args(args)
    alphabet = _alphabet(args.alphabet, train_set + dev_set)
    theta, log = training.train(train_set, dev_set, args.model, config, alphabet, args.k, lexicon)
    out = Path(args.out)
    extra = asdict(config)
    extra["selected_lambda"] = log.selected_lambda
    extra["selected_epoch"] = log.selected_epoch
    training.save_model(out, theta, extra)
    log_path = out.with_name(out.name + ".log")
    log_path.write_text(log.to_text(), encoding="utf-8")
    write_manifest(
        _manifest_path(out), args,
        {"treebank": treebank, "lexicon": resolve(args.lexicon), "dev": resolve(args.dev)},
        {"model": out, "log": log_path},
    )
    print(
        f"trained {args.model} on {len(train_set)} words; dev {config.dev_metric}={log.best_metric:.4f} "
        f"(lambda={log.selected_lambda}, epoch={log.selected_epoch}); model -> {out}"
    )
    return EXIT_OK


def _read_words(spec: str) -> list[str]:
    if spec == "-":
        lines = sys.stdin.read().splitlines()
    else:
        lines = Path(spec).read_text(encoding="utf-8").splitlines()
    words = [line.strip() for line in lines if line.strip() and not line.startswith("#")]
    if not words:
        raise data.FormatError(f"no words found in {spec}")
    return words


def cmd_predict(args) -> int:
    theta, header = training.load_model(args.model)
    words = _read_words(args.words)
    n = args.n_decode_samples or header.get("config", {}).get("n_decode_samples", 100)
    bad = [w for w in words if not theta.alphabet.covers(w)]
    if bad:
        raise data.FormatError(f"words with symbols outside the model alphabet: {', '.join(bad[:10])}")
    pred = training.predict_words(words, theta, n, args.seed, args.workers)
    path = _emit("".join(render_prediction(a) + "\n" for a in pred), args.out)
    if path is not None:
        write_manifest(
            _manifest_path(path), args, {"model": args.model, "words": args.words},
            {"predictions": path, "n_decode_samples": n},
        )
    return EXIT_OK


def cmd_evaluate(args) -> int:
    pred = read_predictions(Path(args.pred))
    gold = data.load_treebank(args.gold)
    if len(pred) != len(gold):
        raise data.FormatError(f"{len(pred)} predictions but {len(gold)} gold entries")
    for i, (row, entry) in enumerate(zip(pred, gold), 1):
        if row[0] != entry.surface:
            raise data.FormatError(f"item {i}: predicted word {row[0]!r} but gold word {entry.surface!r}")
    seg = evaluation.segmentation_metrics([r[3] for r in pred], [e.segments for e in gold])
    tree = None
    if all(r[2] is not None for r in pred):
        tree = evaluation.tree_metrics([(r[2], r[1]) for r in pred], [(e.tree, e.canonical) for e in gold])
    path = _emit(evaluation.format_report(seg, tree), args.out)
    if path is not None:
        write_manifest(_manifest_path(path), args, {"pred": args.pred, "gold": args.gold}, {"report": path})
    return EXIT_OK


def cmd_sample(args) -> int:
    if args.model:
        theta, _ = training.load_model(args.model)
    else:
        vec = SparseVector()
        theta = ModelParameters(
            vec, vec, _alphabet(args.alphabet, []), args.k, data.load_lexicon(resolve(args.lexicon)),
            structure=args.kind,
        )
    if not theta.alphabet.covers(args.word):
        raise data.FormatError(f"{args.word!r} has symbols outside the alphabet {theta.alphabet}")
    proposal = Proposal(args.word, theta)
    rng = np.random.default_rng(args.seed)
    samples = [proposal.draw(rng) for _ in range(args.n_samples)]
    weights = normalize_log_weights([s.log_ratio for s in samples])
    lines = ["# u\tstructure\tlog_target\tlog_proposal\tnormalized_weight"]
    for s, wt in zip(samples, weights):
        rendered = render_prediction(s.analysis).split("\t")[2]
        lines.append(f"{s.analysis.u}\t{rendered}\t{s.log_target:.6f}\t{s.log_proposal:.6f}\t{wt:.6f}")
    path = _emit("\n".join(lines) + "\n", args.out)
    if path is not None:
        write_manifest(_manifest_path(path), args, {"model": args.model}, {"samples": path})
    return EXIT_OK


def cmd_oracle(args) -> int:
    names = sorted(checks.CHECKS) if args.check == "all" else [args.check]
    results = []
    for name in names:
        kwargs = {"seed": args.seed}
        if args.draws is not None:
            kwargs["draws"] = args.draws
        if name == "parser":
            kwargs["max_len"] = args.max_len
        elif name == "transducer":
            kwargs.update(alphabet=args.alphabet, max_w=args.max_w, max_k=args.max_k)
        results.append(checks.CHECKS[name](**kwargs))
    text = "".join(r.line() + "\n" + "".join(f"#\t{d}\n" for d in r.details) for r in results)
    path = _emit(text, args.out)
    if path is not None:
        write_manifest(_manifest_path(path), args, {}, {"report": path})
    return EXIT_OK if all(r.passed for r in results) else EXIT_INTERNAL


def cmd_splits(args) -> int:
    entries = data.load_treebank(resolve(args.treebank))
    out = Path(args.out)
    indices = range(data.N_SPLITS) if args.split is None else [args.split]
    written = {}
    for i in indices:
        spec = data.SplitSpec(args.split_seed, tuple(args.sizes), i)
        paths = data.write_split_manifest(out / f"split-{i}", data.split_indices(len(entries), spec))
        written[f"split-{i}"] = [str(p) for p in paths]
    write_manifest(out / "manifest.json", args, {"treebank": resolve(args.treebank)}, written)
    print(f"wrote {len(written)} split(s) of {len(entries)} entries under {out}")
    return EXIT_OK


COMPARE_METRICS = ("morpheme_f1", "edit_distance", "accuracy", "constituent_f1")


def cmd_compare(args) -> int:
    entries = data.load_treebank(resolve(args.treebank))
    lexicon = data.load_lexicon(resolve(args.lexicon))
    config = _config_from_args(args)
    rows = []
    for index in args.splits:
        spec = data.SplitSpec(args.split_seed, tuple(args.sizes), index)
        train_set, dev_set, test_set = data.make_splits(entries, spec)
        alphabet = _alphabet(args.alphabet, entries)
        for kind in ("hier", "flat"):
            theta, _ = training.train(train_set, dev_set, kind, config, alphabet, args.k, lexicon)
            pred = training.predict_words(
                [e.surface for e in test_set], theta, config.n_decode_samples, config.seed, config.workers
            )
            rows.append((index, kind, training.score_predictions(pred, test_set, kind)))
    lines = ["split\tmodel\t" + "\t".join(COMPARE_METRICS)]
    for index, kind, m in rows:
        vals = [f"{m[k]:.4f}" if k in m else "N/A" for k in COMPARE_METRICS]
        lines.append(f"{index}\t{kind}\t" + "\t".join(vals))
    for kind in ("hier", "flat"):
        ms = [m for _, k, m in rows if k == kind]
        vals = [f"{np.mean([m[k] for m in ms]):.4f}" if k in ms[0] else "N/A" for k in COMPARE_METRICS]
        lines.append(f"mean\t{kind}\t" + "\t".join(vals))
    path = _emit("\n".join(lines) + "\n", args.out)
    if path is not None:
        write_manifest(_manifest_path(path), args, {"treebank": resolve(args.treebank)}, {"report": path})
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "predict": cmd_predict,
    "evaluate": cmd_evaluate,
    "sample": cmd_sample,
    "oracle": cmd_oracle,
    "splits": cmd_splits,
    "compare": cmd_compare,
}

DATA_ERRORS = (data.FormatError, TrainingDataError, GuardError, TreeError, AlignmentError, BudgetError, FileNotFoundError, IsADirectoryError, PermissionError)


def run(argv=None, environ=None) -> int:
    parser = build_parser()
    try:
        apply_env_overrides(parser, environ)
        args = parser.parse_args(argv)
    except UsageError as err:
        print(err, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exit_:
        # --help and --version
        return EXIT_OK if exit_.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except DATA_ERRORS as err:
        print(f"canonseg {args.command}: data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (FloatingPointError, AssertionError) as err:
        print(f"canonseg {args.command}: internal error: {err}", file=sys.stderr)
        return EXIT_INTERNAL
    except ValueError as err:
        # invalid configuration values that passed argparse (e.g. epochs=0)
        print(f"canonseg {args.command}: {err}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
