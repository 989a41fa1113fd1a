"""AdaGrad training with L2 grid search and dev-based early stopping."""
from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from . import evaluation
from .baseline import FlatSegmentation
from .core import Alphabet, ModelParameters, SparseVector, tree_to_segments
from .joint import TrainingDataError, check_entry, decode, log_likelihood_and_gradient
from .parser import ParserFeatureConfig
from .transducer import TransducerFeatureConfig

logger = logging.getLogger(__name__)

EPS = 1e-8
DEV_METRICS = ("morpheme_f1", "accuracy", "edit_distance", "constituent_f1")


@dataclass
class TrainConfig:
    epochs: int = 100
    learning_rate: float = 0.1
    lambda_grid: tuple = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
    n_samples: int = 100
    n_decode_samples: int = 100
    patience: int = 10
    dev_metric: str = "morpheme_f1"
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        self.lambda_grid = tuple(float(x) for x in self.lambda_grid)
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.lambda_grid:
            raise ValueError("lambda grid must be non-empty")
        if self.patience < 1:
            raise ValueError("patience must be >= 1")
        if self.n_samples < 1 or self.n_decode_samples < 1:
            raise ValueError("sample counts must be >= 1")
        if self.dev_metric not in DEV_METRICS:
            raise ValueError(f"dev metric must be one of {DEV_METRICS}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


# --------------------------------------------------------------------------
# AdaGrad
# --------------------------------------------------------------------------


@dataclass
class OptimizerState:
    """Per-feature squared-gradient sums and the step at which each was last synced."""

    sumsq: dict = field(default_factory=dict)
    synced: dict = field(default_factory=dict)
    step: int = 0


def _shrink(theta, state: OptimizerState, key: str, upto: int, lr: float, lam: float) -> None:
    """Apply the L2 shrink a coordinate missed between its last sync and ``upto``."""
    missed = upto - state.synced.get(key, upto)
    if missed > 0 and lam > 0.0:
        value = theta.get(key)
        if value:
            factor = (1.0 + lr * lam / math.sqrt(state.sumsq.get(key, 0.0) + EPS)) ** -missed
            theta[key] = value * factor
    state.synced[key] = upto


def adagrad_step(theta: dict, grad, state: OptimizerState, lr: float, lam: float):
    """One ascent step on the touched coordinates of ``grad``.

    L2 enters as a proximal shrink ``theta_j / (1 + lr * lam / sqrt(G_j + eps))``
    per step; coordinates that ``grad`` does not touch catch up on their missed
    shrinks the next time they are touched (or at :func:`flush`).
    """
    for key, g in grad.items():
        if not math.isfinite(g):
            raise FloatingPointError(f"non-finite gradient {g!r} for feature {key!r} at step {state.step + 1}")
    state.step += 1
    t = state.step
    for key, g in grad.items():
        _shrink(theta, state, key, t - 1, lr, lam)
        s = state.sumsq.get(key, 0.0) + g * g
        state.sumsq[key] = s
        denom = math.sqrt(s + EPS)
        value = theta.get(key, 0.0) + lr * g / denom
        if lam > 0.0:
            value /= 1.0 + lr * lam / denom
        if value == 0.0:
            theta.pop(key, None)
        else:
            theta[key] = value
        state.synced[key] = t
    return theta, state


def flush(theta: dict, state: OptimizerState, lr: float, lam: float) -> None:
    """Bring every coordinate up to date with the pending L2 shrinks."""
    for key in list(state.synced):
        _shrink(theta, state, key, state.step, lr, lam)


# --------------------------------------------------------------------------
# Training loop
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FlatEntry:
    surface: str
    canonical: str
    tree: FlatSegmentation


def as_model_entries(entries, kind: str):
    if kind == "hier":
        return list(entries)
    return [
        FlatEntry(e.surface, e.canonical, FlatSegmentation.from_segments(tree_to_segments(e.tree, e.canonical)))
        for e in entries
    ]


@dataclass
class TrainingLog:
    rows: list = field(default_factory=list)
    selected_lambda: float | None = None
    selected_epoch: int | None = None
    best_metric: float | None = None

    def add(self, epoch: int, lam: float, metric: float) -> None:
        self.rows.append((epoch, lam, metric))

    def to_text(self) -> str:
        lines = [f"{epoch}\t{lam}\t{metric:.6f}" for epoch, lam, metric in self.rows]
        lines.append(f"# selected\tlambda={self.selected_lambda}\tepoch={self.selected_epoch}\tmetric={self.best_metric:.6f}")
        return "\n".join(lines) + "\n"


def _decode_one(args):
    w, theta, n, seed = args
    return decode(w, theta, n, seed)


def predict_words(words: Sequence[str], theta: ModelParameters, n_samples: int, seed: int, workers: int = 1):
    """Decode each word with its own seed stream; output is independent of ``workers``."""
    jobs = [(w, theta, n_samples, [seed, i]) for i, w in enumerate(words)]
    if workers <= 1 or len(jobs) < 2:
        return [_decode_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_decode_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))


def score_predictions(pred, gold, kind: str) -> dict:
    pred_segs = [a.segments for a in pred]
    gold_segs = [e.segments if hasattr(e, "segments") else e.tree.segments(e.canonical) for e in gold]
    seg = evaluation.segmentation_metrics(pred_segs, gold_segs)
    out = {
        "morpheme_f1": seg.morpheme_f1,
        "accuracy": seg.accuracy,
        "edit_distance": seg.avg_edit_distance,
    }
    if kind == "hier":
        out["constituent_f1"] = evaluation.constituent_f1(
            [(a.t, a.u) for a in pred], [(e.tree, e.canonical) for e in gold]
        )[2]
    return out


def dev_score(metrics: dict, name: str) -> float:
    """Higher is better; edit distance is negated."""
    if name == "edit_distance":
        return -metrics[name]
    if name not in metrics:
        raise ValueError(f"dev metric {name!r} is not available for this model")
    return metrics[name]


def _perfect(score: float, name: str) -> bool:
    return score >= (0.0 if name == "edit_distance" else 1.0)


def check_training_data(entries, theta: ModelParameters) -> None:
    offenders = []
    for e in entries:
        try:
            check_entry(e, theta)
        except TrainingDataError as err:
            offenders.append(str(err))
    if offenders:
        raise TrainingDataError("training data violates model constraints:\n  " + "\n  ".join(offenders))


def train(
    train_entries,
    dev_entries,
    kind: str = "hier",
    config: TrainConfig | None = None,
    alphabet: Alphabet | None = None,
    k: int = 5,
    lexicon=frozenset(),
    transducer_config: TransducerFeatureConfig | None = None,
    parser_config: ParserFeatureConfig | None = None,
) -> tuple[ModelParameters, TrainingLog]:
    """Grid-search L2 strength; for each value run AdaGrad epochs with early stopping.

    Returns the best dev checkpoint across the grid and the per-epoch log.
    """
    config = config or TrainConfig()
    if kind not in ("hier", "flat"):
        raise ValueError(f"model kind must be 'hier' or 'flat', got {kind!r}")
    if not train_entries or not dev_entries:
        raise ValueError("training and dev sets must be non-empty")
    template = ModelParameters(
        SparseVector(), SparseVector(), alphabet or Alphabet(), k, frozenset(w.lower() for w in lexicon),
        transducer_config, parser_config, kind,
    )
    check_training_data(train_entries, template)
    train_set = as_model_entries(train_entries, kind)
    log = TrainingLog()
    best = None  # (score, lambda, epoch, weights)
    for li, lam in enumerate(config.lambda_grid):
        weights, epoch, score = _run(train_set, dev_entries, kind, config, template, li, lam, log)
        logger.info("lambda=%s best dev %s=%.4f at epoch %d", lam, config.dev_metric, score, epoch)
        if best is None or score > best[0]:
            best = (score, lam, epoch, weights)
        if _perfect(best[0], config.dev_metric):
            # later grid points could only tie, and ties keep the earlier lambda
            logger.info("dev metric is perfect; skipping the rest of the lambda grid")
            break
    score, lam, epoch, weights = best
    log.selected_lambda, log.selected_epoch, log.best_metric = lam, epoch, score
    return _params(template, weights), log


def _params(template: ModelParameters, weights: dict) -> ModelParameters:
    vec = weights if isinstance(weights, SparseVector) else SparseVector(weights)
    return ModelParameters(
        vec, vec, template.alphabet, template.k, template.lexicon,
        template.transducer_config, template.parser_config, template.structure,
    )


def _run(train_set, dev_entries, kind, config, template, li, lam, log):
    weights = SparseVector()
    theta = _params(template, weights)
    state = OptimizerState()
    dev_words = [e.surface for e in dev_entries]

    def evaluate(epoch):
        pred = predict_words(dev_words, theta, config.n_decode_samples, config.seed, config.workers)
        return dev_score(score_predictions(pred, dev_entries, kind), config.dev_metric)

    score = evaluate(0)
    log.add(0, lam, score)
    best = (score, 0, SparseVector(weights))
    stale = 0
    for epoch in range(1, config.epochs + 1):
        order = np.random.default_rng([config.seed, li, epoch]).permutation(len(train_set))
        for idx in order:
            _, grad = log_likelihood_and_gradient(
                train_set[idx], theta, config.n_samples, [config.seed, li, epoch, int(idx)]
            )
            adagrad_step(weights, grad, state, config.learning_rate, lam)
        flush(weights, state, config.learning_rate, lam)
        score = evaluate(epoch)
        log.add(epoch, lam, score)
        logger.debug("lambda=%s epoch=%d dev=%.4f features=%d", lam, epoch, score, len(weights))
        if score > best[0]:
            best = (score, epoch, SparseVector(weights))
            stale = 0
        else:
            stale += 1
        if stale >= config.patience or _perfect(best[0], config.dev_metric):
            break
    return best[2], best[1], best[0]


# --------------------------------------------------------------------------
# Model files
# --------------------------------------------------------------------------

MODEL_MAGIC = "# canonseg-model 1"


def save_model(path, theta: ModelParameters, extra: dict | None = None) -> None:
    """Write header, then ``[omega]``/``[eta]`` (or ``[psi]``) and ``[lexicon]`` sections."""
    header = {
        "kind": theta.structure,
        "alphabet": str(theta.alphabet),
        "k": theta.k,
        "transducer_config": asdict(theta.transducer_config),
        "parser_config": asdict(theta.parser_config),
    }
    if extra:
        header["config"] = extra
    struct_tag = "psi" if theta.structure == "flat" else "omega"
    omega = {f: v for f, v in theta.omega.items() if not f.startswith("t|")}
    eta = {f: v for f, v in theta.eta.items() if f.startswith("t|")}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(MODEL_MAGIC + "\n")
        for key, value in header.items():
            fh.write(f"# {key}\t{json.dumps(value, sort_keys=True)}\n")
        for tag, vec in ((struct_tag, omega), ("eta", eta)):
            fh.write(f"[{tag}]\n")
            for f in sorted(vec):
                fh.write(f"{f}\t{float(vec[f])!r}\n")
        fh.write("[lexicon]\n")
        for word in sorted(theta.lexicon):
            fh.write(word + "\n")


def load_model(path) -> tuple[ModelParameters, dict]:
    header: dict = {}
    sections: dict[str, list[str]] = {}
    current = None
    with open(path, encoding="utf-8") as fh:
        first = fh.readline().rstrip("\n")
        if first != MODEL_MAGIC:
            raise ValueError(f"{path}: not a canonseg model file")
        for line in fh:
            line = line.rstrip("\n")
            if current is None and line.startswith("# "):
                key, value = line[2:].split("\t", 1)
                header[key] = json.loads(value)
            elif line.startswith("[") and line.endswith("]"):
                current = line[1:-1]
                sections[current] = []
            elif current is not None and line:
                sections[current].append(line)
    weights = SparseVector()
    for tag in ("omega", "psi", "eta"):
        for line in sections.get(tag, []):
            f, v = line.rsplit("\t", 1)
            weights[f] = float(v)
    theta = ModelParameters(
        weights, weights, Alphabet(header["alphabet"]), int(header["k"]),
        frozenset(sections.get("lexicon", [])),
        TransducerFeatureConfig(**header["transducer_config"]),
        ParserFeatureConfig(**header["parser_config"]),
        header["kind"],
    )
    return theta, header
