import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ctm.errors import ConfigError, ContractError, NumericError
from ctm.objectives import (
    ContrastiveViews,
    QuestionBatch,
    contrastive_loss,
    joint_loss,
    selection_loss,
    strategy_schedule,
)
from ctm.tensor import Tensor

mpmath.mp.dps = 40


def _one_hot_batch(scores, gold):
    # with head = ones(1), the 1-vector C_i = [s_i] scores exactly s_i
    return QuestionBatch().add([Tensor([s]) for s in scores], gold), Tensor([1.0])


def _mp_selection(scores, gold):
    return mpmath.log(sum(mpmath.e ** mpmath.mpf(s) for s in scores)) - scores[gold]


class TestSelectionLoss:
    @pytest.mark.parametrize("scores,gold,expect", [
        ([0.0, 0.0, 0.0, 0.0], 2, math.log(4)),
        ([2.0, 0.0, 0.0, 0.0], 0, math.log(math.e ** 2 + 3) - 2),
        ([0.0, 0.0], 1, math.log(2)),
    ])
    def test_examples(self, scores, gold, expect):
        batch, head = _one_hot_batch(scores, gold)
        assert selection_loss(batch, head).item() == pytest.approx(expect, abs=1e-12)

    def test_reference_values(self):
        assert math.log(4) == pytest.approx(1.38629, abs=1e-5)
        assert math.log(math.e ** 2 + 3) - 2 == pytest.approx(0.34076, abs=1e-5)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-30, 30), min_size=2, max_size=6), st.data())
    def test_matches_high_precision(self, scores, data):
        gold = data.draw(st.integers(0, len(scores) - 1))
        batch, head = _one_hot_batch(scores, gold)
        got = selection_loss(batch, head).item()
        assert got >= 0
        assert abs(got - float(_mp_selection(scores, gold))) <= 1e-9

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(-20, 20), min_size=2, max_size=6), st.floats(-100, 100))
    def test_shift_invariance(self, scores, c):
        a, h = _one_hot_batch(scores, 0)
        b, _ = _one_hot_batch([s + c for s in scores], 0)
        assert abs(selection_loss(a, h).item() - selection_loss(b, h).item()) <= 1e-6

    def test_batch_mean(self):
        batch = QuestionBatch()
        for scores, gold in [([2.0, 0.0, 0.0, 0.0], 0), ([0.0, 0.0], 1)]:
            batch.add([Tensor([s]) for s in scores], gold)
        expect = (math.log(math.e ** 2 + 3) - 2 + math.log(2)) / 2
        assert selection_loss(batch, Tensor([1.0])).item() == pytest.approx(expect, abs=1e-12)

    def test_gold_out_of_range(self):
        with pytest.raises(ContractError):
            QuestionBatch().add([Tensor([0.0]), Tensor([1.0])], 2)
        batch = QuestionBatch().add([Tensor([0.0]), Tensor([1.0])], 1)
        batch.gold[0] = 5
        with pytest.raises(ContractError):
            selection_loss(batch, Tensor([1.0]))

    def test_needs_two_candidates(self):
        with pytest.raises(ContractError):
            QuestionBatch().add([Tensor([0.0])], 0)


def _views(anchor, positive, negatives, tau):
    return ContrastiveViews(Tensor(anchor), Tensor(positive), [Tensor(n) for n in negatives], tau)


class TestContrastiveLoss:
    def test_tau_one_example(self):
        v = _views([1.0, 0.0, 0.0], [3.0, 0.0, 0.0], [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], 1.0)
        assert contrastive_loss(v).item() == pytest.approx(math.log(1 + 2 / math.e), abs=1e-12)
        assert math.log(1 + 2 / math.e) == pytest.approx(0.55144, abs=1e-5)

    def test_no_negatives_is_exactly_zero(self):
        assert contrastive_loss(_views([1.0, 2.0], [0.5, 0.1], [], 0.07)).item() == 0.0

    def test_opposite_negatives_vanish(self):
        a = [0.3, -1.0, 2.0]
        neg = [-x for x in a]
        loss = contrastive_loss(_views(a, a, [neg, neg], 0.07)).item()
        ref = mpmath.log(1 + 2 * mpmath.e ** (-2 / mpmath.mpf("0.07")))
        assert loss < 1e-10 and abs(loss - float(ref)) < 1e-15

    def test_zero_norm(self):
        with pytest.raises(NumericError):
            contrastive_loss(_views([0.0, 0.0], [1.0, 0.0], [], 0.07))

    def test_zero_norm_allowed_counts_as_orthogonal(self):
        v = ContrastiveViews(Tensor([1.0, 0.0]), Tensor([1.0, 0.0]), [Tensor([0.0, 0.0])], tau=1.0,
                             allow_zero=True)
        assert contrastive_loss(v).item() == pytest.approx(math.log(1 + math.exp(-1)), abs=1e-12)

    def test_bad_tau(self):
        with pytest.raises(ConfigError):
            _views([1.0], [1.0], [], 0.0)

    def test_decreases_with_positive_alignment(self):
        a = np.array([1.0, 0.0])
        negs = [[0.0, 1.0], [-1.0, 0.2]]
        angles = np.linspace(1.5, 0.0, 20)
        losses = [contrastive_loss(_views(a, [math.cos(t), math.sin(t)], negs, 0.5)).item() for t in angles]
        assert all(x > y for x, y in zip(losses, losses[1:]))

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (4, 5), elements=st.floats(-3, 3)), st.floats(0.01, 100), st.integers(0, 3))
    def test_scale_invariance(self, vecs, c, which):
        if np.any(np.linalg.norm(vecs, axis=1) < 1e-3):
            return
        scaled = vecs.copy()
        scaled[which] *= c
        a = contrastive_loss(_views(vecs[0], vecs[1], vecs[2:], 0.2)).item()
        b = contrastive_loss(_views(scaled[0], scaled[1], scaled[2:], 0.2)).item()
        assert abs(a - b) <= 1e-6

    def test_gradient_reaches_every_view(self):
        rng = np.random.default_rng(0)
        a, p, n = (Tensor(rng.normal(size=4), requires_grad=True) for _ in range(3))
        contrastive_loss(ContrastiveViews(a, p, [n], 0.5)).backward()
        assert all(np.any(t.grad) for t in (a, p, n))


class TestJointLoss:
    def _parts(self):
        batch, head = _one_hot_batch([2.0, 0.0, 0.0, 0.0], 0)
        views = _views([1.0, 0.0, 0.0], [3.0, 0.0, 0.0], [[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], 1.0)
        return batch, views, head

    def test_lambda_zero_is_selection_loss(self):
        batch, views, head = self._parts()
        assert joint_loss(batch, views, head, 0.0).item() == selection_loss(batch, head).item()

    def test_lambda_one_is_sum(self):
        batch, views, head = self._parts()
        expect = math.log(math.e ** 2 + 3) - 2 + math.log(1 + 2 / math.e)
        assert joint_loss(batch, views, head, 1.0).item() == pytest.approx(expect, abs=1e-12)

    def test_negative_lambda(self):
        batch, views, head = self._parts()
        with pytest.raises(ConfigError):
            joint_loss(batch, views, head, -0.5)


class TestSchedule:
    def test_alternate(self):
        assert [strategy_schedule("alternate", s, 3) for s in range(7)] == \
            ["tm", "tm", "cr", "tm", "tm", "cr", "tm"]
        assert [strategy_schedule("alternate", s, 2) for s in range(4)] == ["tm", "cr", "tm", "cr"]

    def test_joint_and_pretrain(self):
        assert {strategy_schedule("joint", s) for s in range(10)} == {"joint"}
        assert [strategy_schedule("pretrain", s, pretrain_steps=2) for s in range(4)] == ["cr", "cr", "tm", "tm"]
        assert {strategy_schedule("pretrain", s, pretrain_steps=0) for s in range(5)} == {"tm"}

    def test_errors(self):
        with pytest.raises(ConfigError):
            strategy_schedule("sometimes", 0)
        with pytest.raises(ConfigError):
            strategy_schedule("alternate", 0, n_t=1)
