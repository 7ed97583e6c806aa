"""Synthetic ranking and classification tasks with a planted common subsequence.

A query is a random token string.  Its positive partner contains an ordered
subsequence of the query's tokens embedded in filler; negatives are drawn
from the vocabulary with those planted tokens removed, so they share no
part of it.
"""

import numpy as np

from .train import TrainInstance


def _plant(query, k, rng, vocab_size, min_len, max_len):
    keep = np.sort(rng.choice(len(query), size=k, replace=False))
    planted = [query[p] for p in keep]
    length = int(rng.integers(max(min_len, k), max_len + 1))
    filler_pool = np.setdiff1d(np.arange(vocab_size), planted)
    seq = list(rng.choice(filler_pool, size=length - k))
    slots = np.sort(rng.choice(length, size=k, replace=False))
    out, it = [], iter(planted)
    fill = iter(seq)
    for pos in range(length):
        out.append(next(it) if pos in slots else next(fill))
    return tuple(int(t) for t in out), planted


def _negative(planted, rng, vocab_size, min_len, max_len):
    pool = np.setdiff1d(np.arange(vocab_size), planted)
    length = int(rng.integers(min_len, max_len + 1))
    return tuple(int(t) for t in rng.choice(pool, size=length))


def gen_ranking(n_queries, vocab_size=30, planted=4, negatives=4, min_len=8, max_len=12, seed=0):
    """Ranking triples ``(query, positive, negative)``, ``negatives`` per query."""
    rng = np.random.default_rng(seed)
    out = []
    for q in range(n_queries):
        query = tuple(int(t) for t in rng.integers(0, vocab_size, size=int(rng.integers(min_len, max_len + 1))))
        pos, kept = _plant(query, planted, rng, vocab_size, min_len, max_len)
        for _ in range(negatives):
            neg = _negative(kept, rng, vocab_size, min_len, max_len)
            out.append(TrainInstance.ranking(query, pos, neg, qid=q))
    return out


def gen_classification(n_pairs, vocab_size=30, planted=4, min_len=8, max_len=12, seed=0):
    """Balanced labelled pairs: label 1 iff the right text carries a planted subsequence."""
    rng = np.random.default_rng(seed)
    out = []
    for n in range(n_pairs):
        query = tuple(int(t) for t in rng.integers(0, vocab_size, size=int(rng.integers(min_len, max_len + 1))))
        pos, kept = _plant(query, planted, rng, vocab_size, min_len, max_len)
        if n % 2 == 0:
            out.append(TrainInstance.classification(query, pos, 1))
        else:
            out.append(TrainInstance.classification(query, _negative(kept, rng, vocab_size, min_len, max_len), 0))
    return out
