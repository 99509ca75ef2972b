"""Run configuration."""

import json
from dataclasses import asdict, dataclass, field, fields

from .errors import ConfigError
from .matching import BASELINES, BRANCHES
from .objectives import STRATEGIES


@dataclass
class CtmConfig:
    hidden_dim: int = 32
    dropout: float = 0.1
    tau: float = 0.07
    lambda_cr: float = 0.5
    lr: float = 1e-3
    batch_size: int = 4
    epochs: int = 3
    max_len: int = 360
    stride: int | None = None
    strategy: str = "joint"
    n_t: int = 2
    pretrain_steps: int = 0
    share_branch_weights: bool = False
    branches: list = field(default_factory=lambda: list(BRANCHES))
    model: str = "ctm"
    seed: int = 0
    clip_norm: float = 1.0
    n_options: int = 4
    embeddings: str | None = None
    # synthetic corpus shape, used with --format synth
    synth_questions: int = 1000
    synth_vocab: int = 64
    synth_sentences: int = 3
    synth_sentence_len: int = 4
    synth_option_len: int = 1
    eval_fraction: float = 0.2

    def __post_init__(self):
        self.branches = [b for b in BRANCHES if b in set(self.branches)] if all(
            b in BRANCHES for b in self.branches) else list(self.branches)
        self.validate()

    def validate(self):
        for name in ("hidden_dim", "batch_size", "epochs", "max_len", "n_options",
                     "synth_questions", "synth_vocab", "synth_sentences", "synth_sentence_len",
                     "synth_option_len"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0 <= self.dropout < 1:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if not self.tau > 0:
            raise ConfigError(f"tau must be positive, got {self.tau}")
        if not self.lr > 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.lambda_cr < 0:
            raise ConfigError(f"lambda_cr must be non-negative, got {self.lambda_cr}")
        if self.clip_norm < 0:
            raise ConfigError(f"clip_norm must be non-negative, got {self.clip_norm}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.strategy == "alternate" and self.n_t < 2:
            raise ConfigError("alternate strategy needs n_t >= 2")
        if self.pretrain_steps < 0:
            raise ConfigError("pretrain_steps must be non-negative")
        if self.stride is not None and not 1 <= self.stride <= self.max_len:
            raise ConfigError(f"stride must lie in [1, max_len], got {self.stride}")
        if self.model not in ("ctm",) + BASELINES:
            raise ConfigError(f"unknown model {self.model!r}")
        if not self.branches:
            raise ConfigError("enabled branches must be non-empty")
        bad = [b for b in self.branches if b not in BRANCHES]
        if bad:
            raise ConfigError(f"unknown branch names {bad}; expected a subset of {list(BRANCHES)}")
        if not 0 < self.eval_fraction < 1:
            raise ConfigError("eval_fraction must lie in (0, 1)")
        if not 0 <= self.seed < 2 ** 64:
            raise ConfigError("seed must be an unsigned 64-bit integer")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            try:
                return cls.from_dict(json.load(fh))
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON: {exc}") from None

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        return CtmConfig.from_dict(d)

    @property
    def window_stride(self):
        return self.stride if self.stride is not None else max(1, self.max_len // 2)

    @property
    def label(self):
        if self.model != "ctm":
            return self.model
        return "+".join(self.branches)
