"""Training, evaluation, ablation and sweep runners, checkpoints and gradient checks."""

import csv
import io
import logging
import math
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from . import codec
from .config import CtmConfig
from .data import window_examples
from .encoder import EncodedTriple, Vocab
from .errors import ConfigError, FormatError, NumericError
from .matching import BASELINES, BRANCHES
from .model import Model, build_model
from .objectives import (
    ContrastiveViews,
    QuestionBatch,
    contrastive_loss,
    selection_loss,
    strategy_schedule,
)
from .optim import Adam, clip_grad_norm
from .tensor import RngState, Tensor, fresh_graph, kernels, mean, no_grad, scale
from .tensor.gradcheck import finite_diff_check

log = logging.getLogger(__name__)

METRICS_HEADER = ("epoch", "split", "loss_tm", "loss_cr", "accuracy", "seconds")


@dataclass
class MetricsRow:
    epoch: int
    split: str
    loss_tm: float
    loss_cr: float
    accuracy: float
    seconds: float


@dataclass
class Metrics:
    rows: list = field(default_factory=list)
    step_kinds: list = field(default_factory=list)
    step_losses: list = field(default_factory=list)

    def add(self, *args):
        row = MetricsRow(*args)
        if not 0.0 <= row.accuracy <= 1.0:
            raise ValueError(f"accuracy {row.accuracy} outside [0, 1]")
        self.rows.append(row)
        return row

    def last(self, split):
        for r in reversed(self.rows):
            if r.split == split:
                return r
        return None

    def to_csv(self, timing=True):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for r in self.rows:
            w.writerow([r.epoch, r.split, repr(r.loss_tm), repr(r.loss_cr), repr(r.accuracy),
                        f"{r.seconds:.3f}" if timing else "0"])
        return buf.getvalue()


@dataclass
class Checkpoint:
    config: CtmConfig
    model: Model

    @property
    def vocab(self):
        return getattr(self.model.encoder, "vocab", None)

    def to_bytes(self):
        meta = self.config.to_dict()
        if self.vocab is not None:
            meta["vocab"] = list(self.vocab.itos)
        meta["format"] = "ctm-checkpoint"
        return codec.encode({k: t.data for k, t in self.model.named_parameters().items()}, meta)

    def save(self, path):
        data = self.to_bytes()
        with open(path, "wb") as fh:
            fh.write(data)
        return data

    @classmethod
    def from_bytes(cls, buf):
        tensors, meta = codec.decode(buf)
        if meta.pop("format", None) != "ctm-checkpoint":
            raise FormatError("not a model checkpoint", 0)
        vocab = meta.pop("vocab", None)
        config = CtmConfig.from_dict(meta)
        model = build_model(config, vocab=Vocab(vocab) if vocab is not None else None)
        params = model.named_parameters()
        if set(params) != set(tensors):
            raise FormatError(f"parameter names differ: stored {sorted(tensors)}, expected {sorted(params)}", 0)
        for name, t in params.items():
            if t.shape != tensors[name].shape:
                raise FormatError(f"{name}: stored shape {tensors[name].shape} != {t.shape}", 0)
            t.data[...] = tensors[name]
        return cls(config, model)

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


# Fields that must agree between a checkpoint and an evaluation request.
_EVAL_FIELDS = ("hidden_dim", "branches", "model", "share_branch_weights", "max_len", "n_options")


def check_compatible(ckpt_config, config):
    bad = [f for f in _EVAL_FIELDS if getattr(ckpt_config, f) != getattr(config, f)]
    if bad:
        detail = ", ".join(f"{f}: checkpoint {getattr(ckpt_config, f)!r} vs {getattr(config, f)!r}" for f in bad)
        raise ConfigError(f"checkpoint incompatible with config ({detail})")


def param_digest(model):
    """Byte string of all parameter values, for bitwise comparisons."""
    return b"".join(t.data.tobytes() for t in model.parameters())


def _finite(value, what, step):
    if not math.isfinite(value):
        raise NumericError(f"non-finite {what} ({value}) at step {step}")
    return value


def _question_losses(model, ex, rng1, rng2, tau, need_cr):
    """Selection loss, contrastive loss (or None) and the draw-one scores of one question."""
    encoded = model.encode(ex, rng1, True)
    reps = model.candidate_reps(ex, rng1, True, encoded=encoded)
    l_tm = selection_loss(QuestionBatch().add(reps, ex.gold), model.head)
    scores = model.score(reps).data
    h_p, h_q, h_a = encoded
    with _maybe_no_grad(not need_cr):
        positive = model.represent(EncodedTriple(h_p, h_q, h_a[ex.gold]), rng2, True)
        negatives = [r for i, r in enumerate(reps) if i != ex.gold]
        l_cr = contrastive_loss(ContrastiveViews(reps[ex.gold], positive, negatives, tau, allow_zero=True))
    return l_tm, l_cr, scores


@contextmanager
def _maybe_no_grad(flag):
    if flag:
        with no_grad():
            yield
    else:
        yield


def _batch_loss(model, windows, batch, root, epoch, step, kind, config):
    """Scheduled loss of one mini-batch plus its logged values and correct count."""
    tm_losses, cr_losses, hits = [], [], 0
    for qi in batch:
        ex = windows[qi]
        q_rng = root.fork(epoch, qi)
        l_tm, l_cr, scores = _question_losses(model, ex, q_rng.fork(1), q_rng.fork(2),
                                              config.tau, kind in ("joint", "cr"))
        tm_losses.append(l_tm)
        cr_losses.append(l_cr)
        hits += int(np.argmax(scores) == ex.gold)
    l_tm = tm_losses[0] if len(tm_losses) == 1 else mean(tm_losses)
    l_cr = cr_losses[0] if len(cr_losses) == 1 else mean(cr_losses)
    v_tm = _finite(l_tm.item(), "selection loss", step)
    v_cr = _finite(l_cr.item(), "contrastive loss", step)
    if kind == "joint":
        loss = l_tm + scale(l_cr, config.lambda_cr)
    elif kind == "tm":
        loss = l_tm
    else:
        loss = l_cr
    _finite(loss.item(), "loss", step)
    return loss, v_tm, v_cr, hits


def train(config, examples, eval_sets=None, model=None, vocab=None, target=None, on_epoch=None):
    """Train a model; returns ``(Checkpoint, Metrics)``.

    ``eval_sets`` maps split names to example lists evaluated after every
    epoch. ``target=(split, accuracy)`` stops early once that split reaches
    the accuracy.
    """
    if not examples:
        raise ConfigError("training set is empty")
    windows = window_examples(examples, config.max_len, config.window_stride)
    if model is None:
        model = build_model(config, examples, vocab=vocab)
    params = model.parameters()
    opt = Adam(params, config.lr)
    metrics = Metrics()
    root = RngState(config.seed).fork(0x545241494E)
    step = 0
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        order = root.fork(epoch).permutation(len(windows))
        sum_tm = sum_cr = 0.0
        correct = 0
        for b0 in range(0, len(order), config.batch_size):
            kind = strategy_schedule(config.strategy, step, config.n_t, config.pretrain_steps)
            batch = order[b0:b0 + config.batch_size]
            try:
                with fresh_graph():
                    loss, v_tm, v_cr, hits = _batch_loss(model, windows, batch, root, epoch, step, kind, config)
                    opt.zero_grad()
                    loss.backward()
            except NumericError as exc:
                if "at step" in str(exc):
                    raise
                raise NumericError(f"{exc} at step {step} (epoch {epoch})") from None
            clip_grad_norm(params, config.clip_norm)
            opt.step()
            sum_tm += v_tm * len(batch)
            sum_cr += v_cr * len(batch)
            correct += hits
            metrics.step_kinds.append(kind)
            metrics.step_losses.append((v_tm, v_cr))
            step += 1
        seconds = time.perf_counter() - t0
        metrics.add(epoch, "train", sum_tm / len(windows), sum_cr / len(windows), correct / len(windows), seconds)
        log.info("epoch %d train loss_tm=%.4f loss_cr=%.4f acc=%.3f (%.1fs)", epoch,
                 sum_tm / len(windows), sum_cr / len(windows), correct / len(windows), seconds)
        stop = False
        for split, exs in (eval_sets or {}).items():
            row = _eval_row(model, exs, epoch, split)
            metrics.rows.append(row)
            if target is not None and split == target[0] and row.accuracy >= target[1]:
                stop = True
        if on_epoch is not None:
            on_epoch(epoch, model, metrics)
        if stop:
            break
    return Checkpoint(config, model), metrics


def _window_pass(model, examples):
    """Scores pooled per question (max over windows) and the inference-mode contrastive
    value of each question's first window."""
    windows = window_examples(examples, model.config.max_len, model.config.window_stride)
    pooled, l_cr = {}, {}
    with no_grad():
        for w in windows:
            reps = model.candidate_reps(w)
            s = model.score(reps).data.astype(np.float64)
            pooled[w.parent] = s if w.parent not in pooled else np.maximum(pooled[w.parent], s)
            if w.window == 0:
                # no dropout at inference, so the positive view equals the anchor
                negs = [r for i, r in enumerate(reps) if i != w.gold]
                l_cr[w.parent] = contrastive_loss(
                    ContrastiveViews(reps[w.gold], reps[w.gold], negs, model.config.tau, allow_zero=True)).item()
    return pooled, l_cr


def predict(model, examples):
    """Per question: predicted index (ties to the lowest index) and pooled candidate scores."""
    pooled, _ = _window_pass(model, examples)
    return [(int(np.argmax(pooled[ex.id])), pooled[ex.id]) for ex in examples]


def _eval_row(model, examples, epoch, split):
    t0 = time.perf_counter()
    acc, l_tm, l_cr = _evaluate_model(model, examples)
    return MetricsRow(epoch, split, l_tm, l_cr, acc, time.perf_counter() - t0)


def _evaluate_model(model, examples):
    if not examples:
        raise ConfigError("evaluation set is empty")
    pooled, cr = _window_pass(model, examples)
    correct, loss = 0, 0.0
    for ex in examples:
        s = pooled[ex.id]
        correct += int(np.argmax(s) == ex.gold)
        z = s - s.max()
        loss += float(np.log(np.exp(z).sum()) - z[ex.gold])
    n = len(examples)
    return correct / n, loss / n, sum(cr[ex.id] for ex in examples) / n


def evaluate(checkpoint, examples, config=None, split="eval"):
    """Accuracy (``correct / questions``) and mean losses in inference mode."""
    if config is not None:
        check_compatible(checkpoint.config, config)
    metrics = Metrics()
    metrics.rows.append(_eval_row(checkpoint.model, examples, 0, split))
    return metrics


def split_examples(config, examples):
    """Deterministic train/eval split of one example list."""
    perm = RngState(config.seed).fork(0x53504C4954).permutation(len(examples))
    n_eval = max(1, int(round(len(examples) * config.eval_fraction)))
    return [examples[i] for i in perm[n_eval:]], [examples[i] for i in perm[:n_eval]]


def _variant(config, name):
    if name in BASELINES:
        return config.replace(model=name)
    parts = [p for p in name.replace(",", "+").split("+") if p]
    if not parts or any(p not in BRANCHES for p in parts):
        raise ConfigError(f"unknown branch set {name!r}: use branches from {BRANCHES} or one of {BASELINES}")
    return config.replace(model="ctm", branches=parts)


def run_table(variants, train_set, test_set, seeds):
    """Train and test every ``(label, config)`` for every seed; returns ``[(label, mean_acc, per_seed)]``."""
    rows = []
    for label, cfg in variants:
        accs = []
        for s in seeds:
            ckpt, _ = train(cfg.replace(seed=s), train_set)
            accs.append(evaluate(ckpt, test_set).rows[0].accuracy)
        rows.append((label, float(np.mean(accs)), accs))
        log.info("%s: %.4f %s", label, rows[-1][1], accs)
    return rows


def ablate(config, train_set, test_set, branch_sets=("a", "q", "p", "a+q+p"), seeds=None):
    """Branch-combination / baseline comparison under identical seeds and budget."""
    variants = []
    for name in branch_sets:
        cfg = _variant(config, name)
        variants.append((cfg.label, cfg))
    return run_table(variants, train_set, test_set, seeds or [config.seed])


def sweep_lambda(config, train_set, test_set, values=(0.0, 0.5, 1.0, 1.5), seeds=None):
    """Vary only the contrastive weight. Reports observations; asserts no trend."""
    for v in values:
        if v < 0:
            raise ConfigError(f"lambda_cr values must be non-negative, got {v}")
    variants = [(f"lambda={v:g}", config.replace(lambda_cr=float(v))) for v in values]
    return run_table(variants, train_set, test_set, seeds or [config.seed])


def table_csv(rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("config", "accuracy"))
    for label, acc, _ in rows:
        w.writerow((label, repr(acc)))
    return buf.getvalue()


# Gradient check ------------------------------------------------------------

@contextmanager
def corrupt_backward(factor=1.01):
    """Test hook: perturb the fused attention backward so gradient checks must fail."""
    orig = kernels.attend_backward

    def broken(*args):
        gq, gw, gk, gv = orig(*args)
        return gq, gw * factor, gk, gv

    kernels.attend_backward = broken
    try:
        yield
    finally:
        kernels.attend_backward = orig


def gradcheck_instance(config, seed):
    """Tiny float64 model and one random 3-option question for gradient checking."""
    from .data import McqaExample

    l = min(config.hidden_dim, 6)
    cfg = config.replace(hidden_dim=l, max_len=8, stride=None, n_options=3, seed=seed,
                         lambda_cr=config.lambda_cr if config.lambda_cr > 0 else 0.5)
    rng = RngState(seed).fork(0x4752414443)
    words = [f"t{i}" for i in range(10)]

    def seq(n):
        return [words[i] for i in rng.integers(len(words), n)]

    lens = 2 + rng.integers(4, 5)
    ex = McqaExample("gradcheck", seq(int(lens[0])), seq(int(lens[1])),
                     [seq(int(lens[2])), seq(int(lens[3])), seq(int(lens[4]))], int(rng.integers(3, 1)[0]))
    vocab = Vocab(["<pad>", "<unk>", "<turn>"] + words)
    model = Model(cfg, vocab=vocab, dtype=np.float64)
    # scale up from the small embedding init so gradients are well above roundoff
    for t in model.encoder.parameters():
        t.data *= 5.0
    return cfg, model, ex


def gradcheck_cmd(config, seed, eps=1e-4, tol=1e-5):
    """Finite-difference check of the joint objective; returns ``(passed, report)``."""
    cfg, model, ex = gradcheck_instance(config, seed)
    q_rng = RngState(seed).fork(0x4643)

    def objective():
        with fresh_graph():
            l_tm, l_cr, _ = _question_losses(model, ex, q_rng.fork(1), q_rng.fork(2), cfg.tau, True)
            return l_tm + scale(l_cr, cfg.lambda_cr)

    named = model.named_parameters()
    report = finite_diff_check(objective, list(named.values()), eps=eps, names=list(named))
    return report.worst <= tol, report


def format_gradcheck(report, tol=1e-5):
    lines = [f"{'parameter':<24} worst_rel_error"]
    for name, err in report.per_param.items():
        lines.append(f"{name:<24} {err:.3e}")
    verdict = "PASS" if report.worst <= tol else "FAIL"
    if report.kinks:
        lines.append(f"{report.kinks} coordinates straddle a kink and were excluded")
    lines.append(f"overall worst {report.worst:.3e} over {report.coords} coordinates (tol {tol:g}): {verdict}")
    return "\n".join(lines)
