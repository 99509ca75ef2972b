"""Token encoders producing the per-word matrices fed to the matching stack.

Two encoders share one interface (``encode_example`` + ``parameters``):

* :class:`TokenEncoder` -- trainable token + position embeddings.
* :class:`PrecomputedEncoder` -- looks up externally produced matrices.
"""

import string
from collections import Counter
from dataclasses import dataclass

import numpy as np

from . import codec
from .errors import ConfigError, ContractError, DimensionError
from .tensor import RngState, Tensor, dropout, embedding

PAD, UNK, TURN = "<pad>", "<unk>", "<turn>"
RESERVED = (PAD, UNK, TURN)

_PUNCT = set(string.punctuation) - {"'"}


def _runs(s):
    """Split a punctuation string into runs of identical characters."""
    out = []
    for ch in s:
        if out and out[-1][0] == ch:
            out[-1] += ch
        else:
            out.append(ch)
    return out


def tokenize(text):
    """Lowercase, split on whitespace, peel leading/trailing punctuation into tokens.

    Internal punctuation (``don't``, ``e-mail``) stays attached. A run of one
    repeated punctuation character (``_____``, ``...``) is a single token.
    """
    if not text:
        return []
    tokens = []
    for chunk in text.lower().split():
        i, j = 0, len(chunk)
        while i < j and chunk[i] in _PUNCT:
            i += 1
        while j > i and chunk[j - 1] in _PUNCT:
            j -= 1
        tokens.extend(_runs(chunk[:i]))
        if i < j:
            tokens.append(chunk[i:j])
        tokens.extend(_runs(chunk[j:]))
    return tokens or [UNK]


class Vocab:
    """Token to id map. Ids 0, 1, 2 are padding, unknown and the dialogue-turn separator."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if tuple(tokens[:len(RESERVED)]) != RESERVED:
            tokens = list(RESERVED) + [t for t in tokens if t not in RESERVED]
        if len(set(tokens)) != len(tokens):
            raise ConfigError("vocabulary contains duplicate tokens")
        self.itos = tokens
        self.stoi = {t: i for i, t in enumerate(tokens)}

    @classmethod
    def build(cls, token_lists, min_freq=1):
        """Most frequent first, ties broken lexicographically."""
        counts = Counter()
        for toks in token_lists:
            counts.update(t for t in toks if t not in RESERVED)
        ordered = sorted((t for t, c in counts.items() if c >= min_freq), key=lambda t: (-counts[t], t))
        return cls(list(RESERVED) + ordered)

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def id(self, token):
        return self.stoi.get(token, 1)

    def ids(self, tokens):
        return [self.stoi.get(t, 1) for t in tokens]

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.itos == other.itos


@dataclass
class EncodedTriple:
    """Word matrices of one (passage, question, candidate) triple, each ``len x l``."""

    p: Tensor
    q: Tensor
    a: Tensor


class ToyEncoder:
    """Sum of token and position embeddings, followed by dropout."""

    def __init__(self, vocab_size, hidden_dim, max_len=360, dropout=0.1, rng=None,
                 dtype=np.float32, use_positions=True, init_scale=0.1):
        if vocab_size < 1 or hidden_dim < 1 or max_len < 1:
            raise ConfigError("vocab_size, hidden_dim and max_len must be positive")
        rng = rng if rng is not None else RngState(0)
        self.hidden_dim = hidden_dim
        self.max_len = max_len
        self.dropout = dropout
        self.use_positions = use_positions
        self.token_emb = Tensor(
            rng.uniform(vocab_size * hidden_dim, -init_scale, init_scale).reshape(vocab_size, hidden_dim),
            requires_grad=True, dtype=dtype, name="encoder.token_emb")
        self.pos_emb = Tensor(
            rng.uniform(max_len * hidden_dim, -init_scale, init_scale).reshape(max_len, hidden_dim),
            requires_grad=True, dtype=dtype, name="encoder.pos_emb")

    def parameters(self):
        if self.use_positions:
            return [self.token_emb, self.pos_emb]
        return [self.token_emb]


def encode(tokens, vocab, enc, rng, training):
    """Encode a token list to a ``min(len, max_len) x l`` matrix."""
    if len(tokens) == 0:
        raise ContractError("cannot encode an empty token sequence")
    ids = vocab.ids(tokens[:enc.max_len])
    h = embedding(enc.token_emb, ids)
    if enc.use_positions:
        h = h + embedding(enc.pos_emb, np.arange(len(ids)))
    return dropout(h, enc.dropout, rng, training)


class TokenEncoder:
    """Encodes examples with a :class:`ToyEncoder` over a fixed :class:`Vocab`.

    Passage, question and each option are encoded in separate passes.
    """

    def __init__(self, vocab, toy):
        self.vocab = vocab
        self.toy = toy

    @property
    def hidden_dim(self):
        return self.toy.hidden_dim

    def parameters(self):
        return self.toy.parameters()

    def encode_example(self, ex, rng, training):
        h_p = encode(ex.passage_tokens, self.vocab, self.toy, rng, training)
        h_q = encode(ex.question_tokens, self.vocab, self.toy, rng, training)
        h_a = [encode(opt, self.vocab, self.toy, rng, training) for opt in ex.options]
        return h_p, h_q, h_a


class PrecomputedEncoder:
    """Serves stored matrices keyed by ``(example id, field)``; field is ``p``, ``q`` or ``a<i>``."""

    def __init__(self, hidden_dim, table=None, dtype=np.float32):
        self.hidden_dim = hidden_dim
        self.dtype = dtype
        self.table = {}
        for key, arr in (table or {}).items():
            self.add(*key, arr)

    def add(self, example_id, field, matrix):
        matrix = np.asarray(matrix, dtype=self.dtype)
        if matrix.ndim != 2 or matrix.shape[1] != self.hidden_dim:
            raise DimensionError(
                f"embedding for {example_id}/{field} has shape {matrix.shape}, "
                f"expected (*, {self.hidden_dim})")
        self.table[(example_id, field)] = matrix

    def parameters(self):
        return []

    def lookup(self, example_id, field):
        try:
            return Tensor(self.table[(example_id, field)], dtype=self.dtype)
        except KeyError:
            raise ContractError(f"no stored embedding for {example_id}/{field}") from None

    def encode_example(self, ex, rng, training):
        h_a = [self.lookup(ex.id, f"a{i}") for i in range(len(ex.options))]
        return self.lookup(ex.id, "p"), self.lookup(ex.id, "q"), h_a

    def save(self, path):
        tensors = {f"{eid}/{field}": m for (eid, field), m in self.table.items()}
        return codec.save(path, tensors, {"kind": "embeddings", "hidden_dim": self.hidden_dim})

    @classmethod
    def load(cls, path, dtype=np.float32):
        tensors, config = codec.load(path)
        if config.get("kind") != "embeddings":
            raise ConfigError(f"{path} is not an embeddings file")
        enc = cls(int(config["hidden_dim"]), dtype=dtype)
        for name, arr in tensors.items():
            eid, _, field = name.rpartition("/")
            enc.add(eid, field, arr)
        return enc
