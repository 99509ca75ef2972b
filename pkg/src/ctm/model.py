"""Model assembly: encoder + matching representation + linear selection head."""

import numpy as np

from .encoder import EncodedTriple, PrecomputedEncoder, TokenEncoder, ToyEncoder, Vocab
from .errors import ConfigError
from .matching import (
    BRANCHES,
    BranchParams,
    GateParams,
    SimParams,
    cnn_match,
    co_match,
    dcmn_dual_match,
    init_matrix,
    match_triple,
)
from .objectives import candidate_scores
from .tensor import Tensor, dot


class Model:
    """Scores every candidate of a question.

    Parameter creation order is fixed, so the same config and seed always
    give the same initial weights.
    """

    def __init__(self, config, vocab=None, encoder=None, dtype=np.float32):
        self.config = config
        self.dtype = dtype
        l = config.hidden_dim
        root = _root_rng(config.seed)
        if encoder is None:
            if vocab is None:
                raise ConfigError("a vocabulary is needed to build the toy encoder")
            toy = ToyEncoder(len(vocab), l, config.max_len, config.dropout, root.fork(1), dtype=dtype)
            encoder = TokenEncoder(vocab, toy)
        if encoder.hidden_dim != l:
            raise ConfigError(f"encoder width {encoder.hidden_dim} != hidden_dim {l}")
        self.encoder = encoder
        rng = root.fork(2)
        self.kind = config.model
        if self.kind == "ctm":
            if config.share_branch_weights:
                shared = BranchParams.init(rng, l, dtype, "branch.shared")
                self.branch_params = {b: shared for b in BRANCHES}
            else:
                self.branch_params = {b: BranchParams.init(rng, l, dtype, f"branch.{b}") for b in BRANCHES}
            self.rep_dim = 2 * l * len(config.branches)
        else:
            self.W = init_matrix(rng, l, l, dtype, f"{self.kind}.W")
            if self.kind == "dcmn":
                self.gates = [GateParams.init(rng, l, dtype, f"dcmn.gate{i}") for i in range(3)]
                self.rep_dim = 3 * l
            elif self.kind == "co":
                self.sims = [SimParams.init(rng, l, dtype, f"co.sim{i}") for i in range(2)]
                self.rep_dim = 2 * l
            else:
                self.sim = SimParams.init(rng, l, dtype, "cnn.sim")
                self.rep_dim = l
        bound = np.sqrt(6.0 / (self.rep_dim + 1))
        self.head = Tensor(root.fork(3).uniform(self.rep_dim, -bound, bound),
                           requires_grad=True, dtype=dtype, name="head.w")

    def named_parameters(self):
        """Ordered ``{name: Tensor}`` of every trainable tensor (shared tensors once)."""
        out = {}
        for t in self.encoder.parameters():
            out[t.name] = t
        if self.kind == "ctm":
            for b in BRANCHES:
                if b in self.config.branches or self.config.share_branch_weights:
                    for t in self.branch_params[b].tensors():
                        out.setdefault(t.name, t)
        else:
            out[self.W.name] = self.W
            extra = {"dcmn": lambda: self.gates, "co": lambda: self.sims, "cnn": lambda: [self.sim]}[self.kind]()
            for group in extra:
                for t in group.tensors():
                    out[t.name] = t
        out[self.head.name] = self.head
        return out

    def parameters(self):
        return list(self.named_parameters().values())

    def represent(self, enc, rng=None, training=False):
        """Matching vector ``C`` of one encoded triple."""
        rate = self.config.dropout
        if self.kind == "ctm":
            return match_triple(enc, self.branch_params, rng, training, rate, self.config.branches).C
        if self.kind == "dcmn":
            return dcmn_dual_match(enc, self.W, self.gates, rng, training, rate)
        if self.kind == "co":
            return co_match(enc, self.W, self.sims, rng, training, rate)
        return cnn_match(enc, self.W, self.sim, rng, training, rate)

    def encode(self, ex, rng=None, training=False):
        return self.encoder.encode_example(ex, rng, training)

    def candidate_reps(self, ex, rng=None, training=False, encoded=None):
        h_p, h_q, h_a = encoded if encoded is not None else self.encode(ex, rng, training)
        return [self.represent(EncodedTriple(h_p, h_q, a), rng, training) for a in h_a]

    def score(self, reps):
        return candidate_scores(reps, self.head)

    def score_one(self, rep):
        return dot(rep, self.head)


def _root_rng(seed):
    from .tensor import RngState
    return RngState(seed).fork(0x4D4F44454C)


def build_vocab(examples):
    return Vocab.build(t for ex in examples
                       for t in [ex.passage_tokens, ex.question_tokens, *ex.options])


def build_model(config, train_examples=None, vocab=None, dtype=np.float32):
    if config.embeddings:
        enc = PrecomputedEncoder.load(config.embeddings, dtype=dtype)
        return Model(config, encoder=enc, dtype=dtype)
    if vocab is None:
        vocab = build_vocab(train_examples or [])
    return Model(config, vocab=vocab, dtype=dtype)
