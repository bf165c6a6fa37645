import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hamur import tensor as T
from hamur.experiment import load_splits
from hamur.metrics import UndefinedMetric, auc, evaluate, logloss, summarize, tied_rank
from hamur.model import HamurModel, bce_loss

from oracles import auc_pairwise


def test_small_example():
    assert auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1]) == 0.75


def test_ties_and_perfect():
    assert auc([0.5] * 6, [0, 1, 0, 1, 1, 0]) == 0.5
    assert auc([0.1, 0.2, 0.9, 0.95], [0, 0, 1, 1]) == 1.0
    assert auc([0.9, 0.95, 0.1, 0.2], [0, 0, 1, 1]) == 0.0


def test_single_class_undefined():
    with pytest.raises(UndefinedMetric):
        auc([0.1, 0.2], [1, 1])


def test_tied_rank():
    np.testing.assert_array_equal(tied_rank([3.0, 1.0, 3.0, 2.0]), [3.5, 1, 3.5, 2])


@pytest.mark.parametrize("n", [2, 17, 300, 1000])
def test_matches_pairwise_count(n):
    rng = np.random.default_rng(n)
    # coarse scores so ties occur
    s = np.round(rng.uniform(size=n), 2)
    y = rng.integers(0, 2, n)
    y[:2] = [0, 1]
    assert abs(auc(s, y) - auc_pairwise(s, y)) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(-50, 50), min_size=4, max_size=40), st.integers(0, 1000))
def test_invariant_under_monotone_map(scores, seed):
    y = np.random.default_rng(seed).integers(0, 2, len(scores))
    y[:2] = [0, 1]
    s = np.array(scores, dtype=float)
    # cubic is exact on these integers, so order and ties survive the map
    assert auc(s, y) == auc(s ** 3 * 2 + 7, y)


def test_logloss_equals_training_loss():
    rng = np.random.default_rng(0)
    p, y = rng.uniform(0.01, 0.99, 50), rng.integers(0, 2, 50)
    assert abs(logloss(p, y) - bce_loss(T.Tensor(p), y).item()) <= 1e-12
    assert math.isclose(logloss([0.5, 0.5], [0, 1]), math.log(2))
    assert np.isfinite(logloss([0.0, 1.0], [1, 0]))


def test_pooled_and_macro_totals():
    s = np.array([0.1, 0.9, 0.2, 0.8, 0.7, 0.3])
    y = np.array([0, 1, 0, 1, 0, 1])
    d = np.array([1, 1, 1, 2, 2, 2])
    res = summarize(s, y, d, 2)
    assert res[1]["auc"] == 1.0 and res[2]["auc"] == 0.5
    assert res["total"]["auc"] == auc(s, y)
    assert summarize(s, y, d, 2, total="macro")["total"]["auc"] == 0.75
    assert [res[k]["n"] for k in (1, 2, "total")] == [3, 3, 6]


def test_single_class_domain_reports_none():
    res = summarize([0.2, 0.4, 0.6], [1, 1, 0], [1, 1, 2], 2)
    assert res[1]["auc"] is None and res[2]["auc"] is None
    assert res["total"]["auc"] == 0.0


def test_evaluate_counts_sum_to_dataset(small_cfg):
    _, _, te = load_splits(small_cfg)
    res = evaluate(HamurModel(te.spec, small_cfg.model), te, batch_size=37)
    assert sum(res[d]["n"] for d in (1, 2, 3)) == res["total"]["n"] == len(te)
