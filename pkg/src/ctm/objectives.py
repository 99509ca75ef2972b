"""Answer-selection loss, contrastive regularizer, and their combination."""

from dataclasses import dataclass, field

from .errors import ConfigError, ContractError
from .tensor import Tensor, cosine, dot, log_softmax, mean, neg, scale, stack, take

STRATEGIES = ("joint", "pretrain", "alternate")


@dataclass
class QuestionBatch:
    """Per question: the candidate representations and the gold index."""

    candidates: list = field(default_factory=list)
    gold: list = field(default_factory=list)

    def add(self, reps, gold):
        if len(reps) < 2:
            raise ContractError(f"a question needs at least 2 candidates, got {len(reps)}")
        if not 0 <= gold < len(reps):
            raise ContractError(f"gold index {gold} out of range for {len(reps)} candidates")
        self.candidates.append(list(reps))
        self.gold.append(int(gold))
        return self

    def __len__(self):
        return len(self.gold)


@dataclass
class ContrastiveViews:
    """Gold representation under two dropout draws plus the distractors of draw one."""

    anchor: Tensor
    positive: Tensor
    negatives: list
    tau: float = 0.07
    # treat a zero vector as orthogonal to everything instead of raising
    allow_zero: bool = False

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigError(f"temperature must be positive, got {self.tau}")


def candidate_scores(reps, head):
    """Scores ``C_i . w`` stacked into a vector."""
    return stack([dot(c, head) for c in reps])


def selection_loss(batch, head):
    """Mean over questions of ``-log softmax(scores)[gold]``."""
    if len(batch) == 0:
        raise ContractError("empty question batch")
    losses = []
    for reps, gold in zip(batch.candidates, batch.gold):
        if not 0 <= gold < len(reps):
            raise ContractError(f"gold index {gold} out of range for {len(reps)} candidates")
        losses.append(neg(take(log_softmax(candidate_scores(reps, head)), gold)))
    return losses[0] if len(losses) == 1 else mean(losses)


def contrastive_loss(views):
    """InfoNCE over cosine similarities: the positive against the distractors.

    The anchor is excluded from its own denominator. With no distractors the
    ratio is 1 and the loss is exactly 0. Zero-norm vectors raise
    :class:`~ctm.errors.NumericError` unless ``views.allow_zero``.
    """
    if isinstance(views, (list, tuple)):
        return mean([contrastive_loss(v) for v in views])
    z = views.allow_zero
    sims = [cosine(views.anchor, views.positive, z)]
    sims += [cosine(views.anchor, neg_, z) for neg_ in views.negatives]
    logits = scale(stack(sims), 1.0 / views.tau)
    return neg(take(log_softmax(logits), 0))


def joint_loss(batch, views, head, lambda_cr):
    """``L_TM + lambda_cr * L_CR``."""
    if lambda_cr < 0:
        raise ConfigError(f"lambda_cr must be non-negative, got {lambda_cr}")
    return selection_loss(batch, head) + scale(contrastive_loss(views), lambda_cr)


def strategy_schedule(strategy, step, n_t=2, pretrain_steps=0):
    """Which objective step ``step`` (0-based) optimises: ``"joint"``, ``"tm"`` or ``"cr"``.

    * joint: always the combined loss.
    * pretrain: ``cr`` for the first ``pretrain_steps`` steps, then ``tm``.
    * alternate: ``tm`` for ``n_t - 1`` steps, then ``cr`` once, repeating.
    """
    if strategy == "joint":
        return "joint"
    if strategy == "pretrain":
        return "cr" if step < pretrain_steps else "tm"
    if strategy == "alternate":
        if n_t < 2:
            raise ConfigError(f"alternate strategy needs n_t >= 2, got {n_t}")
        return "cr" if step % n_t == n_t - 1 else "tm"
    raise ConfigError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
