from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from matchsrnn.metrics import RankList, accuracy, build_ranklists, metric_report, mrr, p_at_1, pearson


def test_rank_examples():
    rl = RankList("q", [("a", 0.1, 0), ("b", 0.9, 1), ("c", 0.5, 0)])
    assert rl.positive_rank() == 1
    rl = RankList("q", [("a", 0.9, 0), ("b", 0.5, 1), ("c", 0.7, 0)])
    assert rl.positive_rank() == 3
    assert p_at_1([rl]) == 0.0
    assert mrr([rl]) == pytest.approx(1 / 3)


def test_ties_keep_input_order():
    assert RankList("q", [("p", 0.5, 1), ("n", 0.5, 0)]).positive_rank() == 1
    assert RankList("q", [("n", 0.5, 0), ("p", 0.5, 1)]).positive_rank() == 2


def test_invalid_lists():
    with pytest.raises(ValueError):
        RankList("q", [])
    with pytest.raises(ValueError):
        RankList("q", [("a", 1.0, 0)])
    with pytest.raises(ValueError):
        p_at_1([])
    with pytest.raises(ValueError):
        build_ranklists([("q", 0, 1.0, 1), ("q", 1, 2.0, 1)])
    with pytest.raises(ValueError):
        build_ranklists([("q", 0, 1.0, 1), ("q", 1, 2.0, 0)], negatives=4)


def test_build_ranklists_groups_in_order():
    rows = [("b", 0, 0.2, 1), ("a", 0, 0.3, 0), ("b", 1, 0.1, 0), ("a", 1, 0.4, 1)]
    lists = build_ranklists(rows)
    assert [rl.query_id for rl in lists] == ["b", "a"]
    assert p_at_1(lists) == 1.0


def test_accuracy():
    assert accuracy([1, 0, 1, 1], [1, 1, 1, 0]) == 0.5
    with pytest.raises(ValueError):
        accuracy([1], [1, 0])
    with pytest.raises(ValueError):
        accuracy([], [])


def test_random_guess_rates():
    # analytic: P@1 = 1/5, MRR = H_5 / 5
    rng = np.random.default_rng(0)
    lists = [RankList(k, [(c, float(s), int(c == 0)) for c, s in enumerate(rng.uniform(size=5))]) for k in range(10000)]
    h5 = float(sum(Fraction(1, k) for k in range(1, 6)) / 5)
    assert abs(p_at_1(lists) - 0.2) <= 0.02
    assert abs(mrr(lists) - h5) <= 0.02
    assert abs(accuracy(rng.integers(0, 2, 10000), rng.integers(0, 2, 10000)) - 0.5) <= 0.03


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=8), st.data())
def test_mrr_bounds_and_p1_relation(scores, data):
    pos = data.draw(st.integers(0, len(scores) - 1))
    rl = RankList("q", [(k, s, int(k == pos)) for k, s in enumerate(scores)])
    r = rl.positive_rank()
    assert 1 <= r <= len(scores)
    assert p_at_1([rl]) <= mrr([rl]) <= 1.0
    assert (p_at_1([rl]) == 1.0) == (mrr([rl]) == 1.0)


def test_metric_report_formats():
    vals = {"P@1": (0.25, 4), "MRR": (0.5, 4)}
    assert metric_report(vals, "csv").splitlines() == ["metric,value,N", "P@1,0.250000,4", "MRR,0.500000,4"]
    assert "N=4" in metric_report(vals)


def test_pearson():
    assert pearson([1, 2, 3], [2, 4, 6]) == pytest.approx(1.0)
    assert pearson([1, 2, 3], [3, 2, 1]) == pytest.approx(-1.0)
    assert pearson([1, 1, 1], [1, 2, 3]) == 0.0
