import numpy as np
import pytest

from ctm.config import CtmConfig
from ctm.data import McqaExample
from ctm.encoder import EncodedTriple
from ctm.matching import BRANCHES, BranchParams
from ctm.tensor import RngState, Tensor

# acceptance lines collected during the run, echoed in the terminal summary
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)


def rand_matrix(rng, m, l, dtype=np.float64, scale=1.0):
    return Tensor(rng.normal(0.0, scale, (m, l)), dtype=dtype)


def rand_triple(rng, l, lens=(4, 3, 2), dtype=np.float64, scale=1.0, requires_grad=False):
    p, q, a = (Tensor(rng.normal(0.0, scale, (n, l)), dtype=dtype, requires_grad=requires_grad) for n in lens)
    return EncodedTriple(p, q, a)


def branch_params(seed, l, dtype=np.float64):
    rng = RngState(seed)
    return {b: BranchParams.init(rng.fork(i), l, dtype, f"branch.{b}") for i, b in enumerate(BRANCHES)}


def tiny_question(rng, n=4, words=12, lens=(6, 4, 2)):
    vocab = [f"t{i}" for i in range(words)]

    def seq(k):
        return [vocab[i] for i in rng.integers(0, words, k)]

    return McqaExample("q", seq(lens[0]), seq(lens[1]), [seq(lens[2]) for _ in range(n)], int(rng.integers(0, n)))


@pytest.fixture
def np_rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_config():
    return CtmConfig(hidden_dim=8, epochs=1, batch_size=2, max_len=32, dropout=0.1)
