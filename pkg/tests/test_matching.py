import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ctm.config import CtmConfig
from ctm.encoder import EncodedTriple
from ctm.errors import ConfigError, ContractError
from ctm.matching import (
    BRANCHES,
    BranchParams,
    GateParams,
    SimParams,
    branch,
    cnn_match,
    co_match,
    context_attend,
    dcmn_dual_match,
    gated_fusion,
    match_triple,
    nested_attention_form,
)
from ctm.model import Model
from ctm.tensor import RngState, Tensor
from conftest import branch_params, rand_triple


# loop oracle: plain python lists and math only ------------------------------

def L(t):
    return t.data.tolist() if isinstance(t, Tensor) else t


def mm(a, b):
    return [[sum(a[i][k] * b[k][j] for k in range(len(b))) for j in range(len(b[0]))] for i in range(len(a))]


def tr(a):
    return [list(r) for r in zip(*a)]


def softmax(a):
    out = []
    for row in a:
        m = max(row)
        e = [math.exp(x - m) for x in row]
        s = sum(e)
        out.append([x / s for x in e])
    return out


def att(ctx, W, key, value):
    return mm(softmax(mm(mm(ctx, W), tr(key))), value)


def pool(a):
    return [max(col) for col in zip(*a)]


def relu(a):
    return [[max(x, 0.0) for x in r] for r in a]


def branch_oracle(ctx, u, v, W, W1, W2):
    ctx, u, v, W, W1, W2 = map(L, (ctx, u, v, W, W1, W2))
    E_u, E_v = att(ctx, W, u, u), att(ctx, W, v, v)
    E_uvc, E_vuc = att(E_u, W1, E_v, ctx), att(E_v, W1, E_u, ctx)
    return [pool(relu(mm(E_uvc, W2))), pool(relu(mm(E_vuc, W2)))]


def sim_oracle(u, v, P_mul, P_diff):
    prod = [[a * b for a, b in zip(ru, rv)] for ru, rv in zip(u, v)]
    diff = [[abs(a - b) for a, b in zip(ru, rv)] for ru, rv in zip(u, v)]
    a, b = mm(prod, L(P_mul)), mm(diff, L(P_diff))
    return relu([[x + y for x, y in zip(ra, rb)] for ra, rb in zip(a, b)])


def gate_oracle(u, v, g):
    Wu, Wv, b = L(g.Wu), L(g.Wv), L(g.b)
    z = [sum(Wu[i][k] * u[k] for k in range(len(u))) + sum(Wv[i][k] * v[k] for k in range(len(v))) + b[i]
         for i in range(len(u))]
    s = [1 / (1 + math.exp(-x)) for x in z]
    return [si * ui + (1 - si) * vi for si, ui, vi in zip(s, u, v)]


# ---------------------------------------------------------------------------

class TestContextAttend:
    def test_zero_weight_gives_column_mean(self):
        x = Tensor(np.arange(6.0).reshape(3, 2))
        G, E = context_attend(Tensor(np.ones((2, 2))), x, Tensor(np.zeros((2, 2))))
        np.testing.assert_allclose(G.data, 1 / 3)
        np.testing.assert_allclose(E.data, [[2, 3], [2, 3]])

    def test_scalar_oracle(self):
        G, E = context_attend(Tensor([[1.0, 0.0]]), Tensor([[1.0, 0.0], [0.0, 1.0]]), Tensor(np.eye(2)))
        np.testing.assert_allclose(G.data, [[0.73106, 0.26894]], atol=1e-5)
        np.testing.assert_allclose(E.data, [[0.73106, 0.26894]], atol=1e-5)

    def test_single_row_x(self):
        G, E = context_attend(Tensor(np.ones((3, 2))), Tensor([[4.0, 5.0]]), Tensor(np.eye(2)))
        np.testing.assert_array_equal(G.data, np.ones((3, 1)))
        np.testing.assert_array_equal(E.data, [[4, 5]] * 3)


class TestBranch:
    def test_zero_inputs(self):
        z = Tensor(np.zeros((3, 4)))
        out = branch(z, z, z, branch_params(0, 4)["a"])
        assert out.shape == (2, 4) and not np.any(out.data)

    def test_shape_independent_of_lengths(self):
        rng = np.random.default_rng(0)
        ctx, u, v = (Tensor(rng.normal(size=(n, 4))) for n in (3, 7, 5))
        assert branch(ctx, u, v, branch_params(1, 4)["q"]).shape == (2, 4)

    @pytest.mark.parametrize("seed", range(10))
    def test_loop_oracle(self, seed):
        rng = np.random.default_rng(seed)
        ctx, u, v = (Tensor(rng.normal(size=(n, 3))) for n in (2, 3, 2))
        p = branch_params(seed, 3)["a"]
        got = branch(ctx, u, v, p).data
        np.testing.assert_allclose(got, branch_oracle(ctx, u, v, p.W, p.W1, p.W2), atol=1e-6)

    def test_zero_weights_are_neutral(self):
        enc = rand_triple(np.random.default_rng(3), 4)
        p = BranchParams(*(Tensor(np.zeros((4, 4))) for _ in range(3)))
        np.testing.assert_array_equal(branch(enc.a, enc.p, enc.q, p).data, 0)

    def test_empty_entity(self):
        with pytest.raises(ContractError):
            branch(None, Tensor(np.ones((1, 2))), Tensor(np.ones((1, 2))), branch_params(0, 2)["a"])

    def test_attention_rows_sum_to_one(self):
        enc = rand_triple(np.random.default_rng(5), 6, (9, 4, 3), scale=3.0)
        inter = {}
        branch(enc.a, enc.p, enc.q, branch_params(5, 6)["a"], intermediates=inter)
        for key in ("G_cu", "G_cv", "G_uv", "G_vu"):
            np.testing.assert_allclose(inter[key].data.sum(axis=1), 1.0, atol=1e-6)

    def test_dropout_draws_differ_in_training_only(self):
        enc = rand_triple(np.random.default_rng(6), 8)
        p = branch_params(6, 8)["p"]
        a = branch(enc.p, enc.a, enc.q, p, RngState(1), True, 0.3).data
        b = branch(enc.p, enc.a, enc.q, p, RngState(2), True, 0.3).data
        c = branch(enc.p, enc.a, enc.q, p, RngState(1), False, 0.3).data
        d = branch(enc.p, enc.a, enc.q, p, RngState(2), False, 0.3).data
        assert not np.array_equal(a, b)
        np.testing.assert_array_equal(c, d)


class TestMatchTriple:
    def test_zero_encodings(self):
        z = Tensor(np.zeros((2, 3)))
        out = match_triple(EncodedTriple(z, z, z), branch_params(0, 3))
        assert out.C.shape == (18,) and not np.any(out.C.data)

    @pytest.mark.parametrize("seed", range(5))
    def test_loop_oracle_composed_three_ways(self, seed):
        enc = rand_triple(np.random.default_rng(seed), 3, (3, 2, 2))
        ps = branch_params(seed, 3)
        out = match_triple(enc, ps)
        roles = {"a": (enc.a, enc.p, enc.q), "q": (enc.q, enc.a, enc.p), "p": (enc.p, enc.a, enc.q)}
        expect = []
        for b in BRANCHES:
            p = ps[b]
            expect += [x for row in branch_oracle(*roles[b], p.W, p.W1, p.W2) for x in row]
        np.testing.assert_allclose(out.C.data, expect, atol=1e-6)
        np.testing.assert_array_equal(out.C.data, np.concatenate([out.M_a.data, out.M_q.data, out.M_p.data]).ravel())

    def test_ablated_branches_are_omitted(self):
        enc = rand_triple(np.random.default_rng(0), 4)
        out = match_triple(enc, branch_params(0, 4), branches=("a",))
        assert out.C.shape == (8,) and out.M_q is None and out.M_p is None
        full = match_triple(enc, branch_params(0, 4))
        np.testing.assert_array_equal(out.C.data, full.C.data[:8])

    def test_no_branch(self):
        with pytest.raises(ConfigError):
            match_triple(rand_triple(np.random.default_rng(0), 2), branch_params(0, 2), branches=())

    @settings(max_examples=25, deadline=None)
    @given(st.integers(2, 5), st.permutations(range(4)))
    def test_candidates_are_independent(self, l, perm):
        rng = np.random.default_rng(l)
        p, q = (Tensor(rng.normal(size=(n, l))) for n in (5, 3))
        answers = [Tensor(rng.normal(size=(int(rng.integers(1, 4)), l))) for _ in range(4)]
        ps = branch_params(l, l)
        reps = [match_triple(EncodedTriple(p, q, a), ps).C.data for a in answers]
        permuted = [match_triple(EncodedTriple(p, q, answers[i]), ps).C.data for i in perm]
        for k, i in enumerate(perm):
            np.testing.assert_array_equal(permuted[k], reps[i])


class TestNestedForm:
    def test_zero_weights_give_answer_mean(self):
        enc = rand_triple(np.random.default_rng(1), 3, (4, 3, 2))
        z = BranchParams(*(Tensor(np.zeros((3, 3))) for _ in range(3)))
        e1, e2 = nested_attention_form(enc, z)
        mean = enc.a.data.mean(axis=0)
        np.testing.assert_allclose(e1.data, np.tile(mean, (2, 1)))
        np.testing.assert_allclose(e2.data, np.tile(mean, (2, 1)))

    def test_single_token_answer(self):
        enc = rand_triple(np.random.default_rng(2), 3, (4, 3, 1))
        e1, _ = nested_attention_form(enc, branch_params(2, 3)["a"])
        np.testing.assert_allclose(e1.data, enc.a.data)

    @pytest.mark.parametrize("dtype,tol", [(np.float32, 1e-6), (np.float64, 1e-12)])
    def test_equals_branch_intermediates(self, dtype, tol):
        for seed in range(20):
            enc = rand_triple(np.random.default_rng(seed), 5, (6, 4, 3), dtype=dtype)
            p = branch_params(seed, 5, dtype)["a"]
            inter = {}
            branch(enc.a, enc.p, enc.q, p, intermediates=inter)
            e1, e2 = nested_attention_form(enc, p)
            np.testing.assert_allclose(e1.data, inter["E_uvc"].data, atol=tol, rtol=0)
            np.testing.assert_allclose(e2.data, inter["E_vuc"].data, atol=tol, rtol=0)


class TestBaselines:
    def _setup(self, seed=0, l=3):
        rng = RngState(seed)
        enc = rand_triple(np.random.default_rng(seed), l, (4, 3, 2))
        W = Tensor(np.random.default_rng(seed + 100).normal(size=(l, l)))
        return enc, W, rng, l

    def test_gate_saturation_and_equal_inputs(self):
        l = 3
        g = GateParams.init(RngState(0), l, np.float64)
        g.b.data[...] = 1e3
        u, v = Tensor([1.0, 2.0, 3.0]), Tensor([-1.0, 0.5, 0.0])
        np.testing.assert_allclose(gated_fusion(u, v, g).data, u.data)
        np.testing.assert_allclose(gated_fusion(u, u, GateParams.init(RngState(1), l, np.float64)).data, u.data)

    @pytest.mark.parametrize("seed", range(3))
    def test_dcmn_loop_oracle(self, seed):
        enc, W, rng, l = self._setup(seed)
        gates = [GateParams.init(rng.fork(i), l, np.float64) for i in range(3)]
        got = dcmn_dual_match(enc, W, gates).data
        P, Q, A, Wl = L(enc.p), L(enc.q), L(enc.a), L(W)
        m_qa, m_qp, m_ap = pool(att(Q, Wl, A, A)), pool(att(Q, Wl, P, P)), pool(att(A, Wl, P, P))
        expect = gate_oracle(m_qa, m_ap, gates[0]) + gate_oracle(m_qp, m_ap, gates[1]) + gate_oracle(m_qa, m_qp, gates[2])
        assert got.shape == (3 * l,)
        np.testing.assert_allclose(got, expect, atol=1e-6)

    @pytest.mark.parametrize("seed", range(3))
    def test_co_match_loop_oracle(self, seed):
        enc, W, rng, l = self._setup(seed)
        sims = [SimParams.init(rng.fork(i), l, np.float64) for i in range(2)]
        got = co_match(enc, W, sims).data
        P, Q, A, Wl = L(enc.p), L(enc.q), L(enc.a), L(W)
        expect = pool(sim_oracle(att(P, Wl, Q, Q), P, sims[0].P_mul, sims[0].P_diff)) + \
            pool(sim_oracle(att(P, Wl, A, A), P, sims[1].P_mul, sims[1].P_diff))
        assert got.shape == (2 * l,)
        np.testing.assert_allclose(got, expect, atol=1e-6)

    @pytest.mark.parametrize("seed", range(3))
    def test_cnn_match_loop_oracle(self, seed):
        enc, W, rng, l = self._setup(seed)
        s = SimParams.init(rng, l, np.float64)
        got = cnn_match(enc, W, s).data
        P, QA, Wl = L(enc.p), L(enc.q) + L(enc.a), L(W)
        expect = pool(sim_oracle(QA, att(QA, Wl, P, P), s.P_mul, s.P_diff))
        assert got.shape == (l,)
        np.testing.assert_allclose(got, expect, atol=1e-6)

    def test_zero_encodings(self):
        z = Tensor(np.zeros((2, 3)))
        enc = EncodedTriple(z, z, z)
        W = Tensor(np.ones((3, 3)))
        sims = [SimParams.init(RngState(i), 3, np.float64) for i in range(2)]
        assert not np.any(co_match(enc, W, sims).data)
        assert not np.any(cnn_match(enc, W, sims[0]).data)


class TestModelWiring:
    def test_branch_sharing_flag(self):
        from ctm.encoder import Vocab
        vocab = Vocab(["<pad>", "<unk>", "<turn>", "x"])
        shared = Model(CtmConfig(hidden_dim=4, share_branch_weights=True), vocab=vocab)
        separate = Model(CtmConfig(hidden_dim=4), vocab=vocab)
        assert shared.branch_params["a"] is shared.branch_params["p"]
        assert len(shared.parameters()) == len(separate.parameters()) - 6

    def test_ablated_model_keeps_paired_weights(self):
        from ctm.encoder import Vocab
        vocab = Vocab(["<pad>", "<unk>", "<turn>", "x"])
        full = Model(CtmConfig(hidden_dim=4), vocab=vocab)
        only_q = Model(CtmConfig(hidden_dim=4, branches=["q"]), vocab=vocab)
        np.testing.assert_array_equal(full.branch_params["q"].W.data, only_q.branch_params["q"].W.data)
        assert only_q.head.shape == (8,)
