import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import reference
from matchsrnn.lcs import (
    DPTable,
    MatchPath,
    decode,
    dp_backtrace,
    encode,
    gate_backtrace,
    gen_dataset,
    lcs_table,
    normalized_lcs,
    path_agreement,
    random_monotone_path,
)
from matchsrnn.model import exact_lcs_mode

seqs = st.lists(st.integers(0, 9), min_size=0, max_size=30)


def test_textbook_examples():
    assert lcs_table(encode("ABCDE"), encode("FACGD")).length == 3
    assert lcs_table(encode("ABCBDAB"), encode("BDCABA")).length == 4
    assert lcs_table((), (1, 2)).length == 0
    assert lcs_table((1, 2, 3), (1, 2, 3)).length == 3


def test_encode_roundtrip():
    assert decode(encode("JABBA")) == "JABBA"
    assert encode("AJ") == (0, 9)


@settings(max_examples=200, deadline=None)
@given(seqs, seqs)
def test_table_matches_memoized_recursion(x, y):
    assert lcs_table(x, y).length == reference.lcs_memo(tuple(x), tuple(y))


@settings(max_examples=150, deadline=None)
@given(seqs, seqs)
def test_table_invariants(x, y):
    c = lcs_table(x, y).c
    assert not c[0].any() and not c[:, 0].any()
    assert (np.diff(c, axis=0) >= 0).all() and (np.diff(c, axis=1) >= 0).all()
    assert (np.diff(c, axis=0) <= 1).all() and (np.diff(c, axis=1) <= 1).all()
    assert c[-1, -1] <= min(len(x), len(y))
    assert c[-1, -1] == lcs_table(y, x).c[-1, -1]


def test_dp_backtrace_example():
    x, y = encode("ABCDE"), encode("FACGD")
    path = dp_backtrace(lcs_table(x, y), x, y)
    assert path.positions[0] == (5, 5)
    assert path.positions[-1][0] == 0 or path.positions[-1][1] == 0
    assert [(decode([x[i - 1]])) for i, _ in path.matched_cells(x, y)] == ["D", "C", "A"]


@settings(max_examples=150, deadline=None)
@given(seqs.filter(bool), seqs.filter(bool))
def test_dp_backtrace_recovers_lcs(x, y):
    path = dp_backtrace(lcs_table(x, y), x, y)
    matched = path.matched_cells(x, y)
    assert len(matched) == lcs_table(x, y).length
    assert len(matched) == len(path.diagonal_cells())
    # matched pairs form a common subsequence
    sub = [x[i - 1] for i, _ in reversed(matched)]
    assert sub == [y[j - 1] for _, j in reversed(matched)]


def test_dp_backtrace_rejects_bad_table():
    x, y = (1, 2), (1, 2)
    with pytest.raises(RuntimeError):
        dp_backtrace(DPTable(np.zeros((2, 2), dtype=int)), x, y)
    bad = lcs_table(x, y)
    bad.c[2, 2] = 7
    with pytest.raises(RuntimeError):
        dp_backtrace(bad, x, y)


@settings(max_examples=150, deadline=None)
@given(seqs.filter(bool), seqs.filter(bool))
def test_gate_backtrace_on_exact_lattice_equals_dp(x, y):
    a = gate_backtrace(exact_lcs_mode(x, y))
    b = dp_backtrace(lcs_table(x, y), x, y)
    assert a.matched_cells(x, y) == b.matched_cells(x, y)
    assert a.positions == b.positions


def test_gate_backtrace_ignores_input_gate():
    class S:
        z = np.zeros((1, 1, 4, 1))

    S.z[0, 0, :, 0] = [0.7, 0.1, 0.15, 0.05]
    assert gate_backtrace(S).moves == ["top"]


def test_match_path_validates_moves():
    MatchPath([(2, 2), (1, 1)], ["diagonal"])
    with pytest.raises(ValueError):
        MatchPath([(2, 2), (1, 2)], ["left"])


def test_path_agreement():
    p = MatchPath([(2, 2), (1, 1), (0, 0)], ["diagonal", "diagonal"])
    q = MatchPath([(2, 2), (1, 2), (0, 1)], ["top", "diagonal"])
    assert path_agreement(p, p) == 1.0
    assert path_agreement(p, q) == pytest.approx(1 / 5)
    r = MatchPath([(2, 2), (2, 1), (1, 0)], ["left", "diagonal"])
    s = MatchPath([(2, 2), (2, 1), (1, 1), (0, 0)], ["left", "top", "diagonal"])
    assert path_agreement(r, s) == pytest.approx(2 / 5)
    with pytest.raises(ValueError):
        path_agreement(p, MatchPath([(3, 2), (2, 1)], ["diagonal"]))


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 20), st.integers(1, 20), st.integers(0, 10**6))
def test_random_path_is_monotone(m, n, seed):
    path = random_monotone_path(m, n, np.random.default_rng(seed))
    assert path.positions[0] == (m, n)
    i, j = path.positions[-1]
    assert i == 0 or j == 0
    assert len(path.moves) == len(path.positions) - 1


def test_dataset_determinism_and_labels():
    a = gen_dataset(n_train=50, n_test=10, seed=3)
    b = gen_dataset(n_train=50, n_test=10, seed=3)
    assert a.train == b.train and a.test == b.test
    assert a.train != gen_dataset(n_train=50, n_test=10, seed=4).train
    for x, y, lab in a.train:
        assert 5 <= len(x) <= 20 and 5 <= len(y) <= 20
        assert max(x + y) <= 9
        assert lab == reference.lcs_memo(x, y) / max(len(x), len(y))
    with pytest.raises(ValueError):
        gen_dataset(n_train=0)


def test_normalized_lcs():
    assert normalized_lcs(encode("ABCDE"), encode("FACGD")) == 0.6
    assert normalized_lcs((1,), (1, 2, 3, 4)) == 0.25
