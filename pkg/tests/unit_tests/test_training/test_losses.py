import math

import numpy as np
import pytest
from geotrack.core import Tensor, gradcheck
from geotrack.errors import ShapeError, UsageError
from geotrack.training import TripletBatchPlan, batch_triplet_loss, plan_epoch, soft_margin_triplet
from geotrack.training.losses import pairwise_distances


@pytest.mark.parametrize(
    "d_pos, d_neg, alpha, expected",
    [
        (0.3, 0.3, 10.0, math.log(2.0)),
        (0.1, 2.0, 0.0, math.log(2.0)),
        (0.5, 1.0, 10.0, math.log1p(math.exp(-5.0))),
    ],
)
def test_soft_margin_values(d_pos, d_neg, alpha, expected):
    assert soft_margin_triplet(d_pos, d_neg, alpha) == pytest.approx(expected, rel=1e-9)


def test_soft_margin_does_not_overflow():
    assert soft_margin_triplet(100.0, 0.0, 10.0) == pytest.approx(1000.0)
    assert soft_margin_triplet(0.0, 100.0, 10.0) == pytest.approx(0.0, abs=1e-12)


def test_soft_margin_on_tensors_matches_floats():
    d_pos = Tensor([0.5, 0.2], requires_grad=True, dtype=np.float64)
    out = soft_margin_triplet(d_pos, np.array([1.0, 0.2]), 10.0)
    np.testing.assert_allclose(out.data, [math.log1p(math.exp(-5.0)), math.log(2.0)], rtol=1e-9)


def test_identical_aerials_give_log_two(rng):
    street = Tensor(rng.normal(size=(4, 6)))
    aerial = Tensor(np.tile(rng.normal(size=(1, 6)), (4, 1)))
    loss = batch_triplet_loss(street, aerial, alpha=10.0, symmetric=False)
    assert loss.item() == pytest.approx(math.log(2.0), abs=1e-5)


def test_matched_batch_has_lower_loss_than_shuffled(rng):
    aerial = rng.normal(size=(5, 8))
    street = aerial + rng.normal(0, 0.01, size=(5, 8))
    matched = batch_triplet_loss(Tensor(street), Tensor(aerial)).item()
    shuffled = batch_triplet_loss(Tensor(street[::-1].copy()), Tensor(aerial)).item()
    assert matched < math.log(2.0) < shuffled


def test_batch_loss_gradcheck(rng):
    result = gradcheck(lambda s, a: batch_triplet_loss(s, a, alpha=2.0), [rng.normal(size=(3, 4)), rng.normal(size=(3, 4))])
    assert result.ok()


def test_batch_loss_needs_two_pairs(rng):
    one = Tensor(rng.normal(size=(1, 4)))
    with pytest.raises(UsageError):
        batch_triplet_loss(one, one)
    with pytest.raises(ShapeError):
        pairwise_distances(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 4))))


def test_plan_validation():
    with pytest.raises(UsageError, match="different aerial"):
        TripletBatchPlan(np.array([0, 1]), ("L00_00", "L00_00"))
    with pytest.raises(UsageError, match="repeat"):
        TripletBatchPlan(np.array([3, 3]))
    plan = TripletBatchPlan(np.array([0, 1, 2]))
    assert plan.negative_mask().sum() == 6


def test_plan_epoch_keeps_groups_distinct(rng):
    groups = ["a", "a", "a", "b", "b", "c", "d", "e"]
    plans = plan_epoch(groups, 3, rng)
    used = np.concatenate([p.indices for p in plans])
    assert len(set(used.tolist())) == len(used)
    for plan in plans:
        assert len(set(plan.groups)) == plan.size <= 3
    with pytest.raises(UsageError):
        plan_epoch(groups, 1, rng)


def test_plan_epoch_is_seeded():
    groups = [str(i) for i in range(10)]
    a = plan_epoch(groups, 4, np.random.default_rng(5))
    b = plan_epoch(groups, 4, np.random.default_rng(5))
    assert [p.indices.tolist() for p in a] == [p.indices.tolist() for p in b]
