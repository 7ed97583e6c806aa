"""Ranking and classification metrics: P@1, MRR and accuracy."""

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np


@dataclass
class RankList:
    """Candidates for one query as ``(instance_id, score, relevance)`` triples."""

    query_id: object
    candidates: list

    def __post_init__(self):
        if not self.candidates:
            raise ValueError(f"rank list {self.query_id!r} is empty")
        if not any(rel for _, _, rel in self.candidates):
            raise ValueError(f"rank list {self.query_id!r} has no positive candidate")

    def positive_rank(self):
        """1-based rank of the first positive; equal scores keep input order."""
        scores = [sc for _, sc, _ in self.candidates]
        pos = next(k for k, (_, _, rel) in enumerate(self.candidates) if rel)
        target = scores[pos]
        higher = sum(1 for sc in scores if sc > target)
        tied_before = sum(1 for sc in scores[:pos] if sc == target)
        return 1 + higher + tied_before


def _check_lists(lists):
    lists = list(lists)
    if not lists:
        raise ValueError("need at least one rank list")
    return lists


def p_at_1(lists):
    lists = _check_lists(lists)
    return sum(rl.positive_rank() == 1 for rl in lists) / len(lists)


def mrr(lists):
    lists = _check_lists(lists)
    return sum(1.0 / rl.positive_rank() for rl in lists) / len(lists)


def accuracy(preds, labels):
    preds, labels = list(preds), list(labels)
    if len(preds) != len(labels):
        raise ValueError(f"accuracy: {len(preds)} predictions vs {len(labels)} labels")
    if not preds:
        raise ValueError("accuracy: empty input")
    return sum(int(p) == int(y) for p, y in zip(preds, labels)) / len(preds)


def build_ranklists(scored, negatives=None):
    """Group ``(query_id, instance_id, score, relevance)`` rows into rank lists.

    Lists appear in first-seen query order and keep candidate input order.
    Every group needs exactly one positive; with ``negatives`` set it must
    also hold exactly that many negatives.
    """
    groups = OrderedDict()
    for qid, iid, sc, rel in scored:
        groups.setdefault(qid, []).append((iid, float(sc), int(rel)))
    lists = []
    for qid, cands in groups.items():
        n_pos = sum(rel for _, _, rel in cands)
        if n_pos != 1:
            raise ValueError(f"query {qid!r} has {n_pos} positives; exactly one is required")
        if negatives is not None and len(cands) - 1 != negatives:
            raise ValueError(f"query {qid!r} has {len(cands) - 1} negatives, expected {negatives}")
        lists.append(RankList(qid, cands))
    return lists


def metric_report(values, fmt="text"):
    """Render ``{metric: (value, N)}`` as aligned text or CSV."""
    if fmt == "csv":
        rows = ["metric,value,N"] + [f"{k},{v:.6f},{n}" for k, (v, n) in values.items()]
    else:
        rows = [f"{k:<8} {v:.4f}  (N={n})" for k, (v, n) in values.items()]
    return "\n".join(rows) + "\n"


def pearson(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.std() == 0 or y.std() == 0:
        return 0.0
    return float(np.corrcoef(x, y)[0, 1])
