"""Monte Carlo check of the random-guess rows: P@1, MRR on 1+4 lists, accuracy."""

import numpy as np

from matchsrnn.metrics import RankList, accuracy, mrr, p_at_1


def random_guess(n_lists=10000, n_cands=5, seed=0):
    rng = np.random.default_rng(seed)
    lists = [
        RankList(q, [(c, float(s), int(c == 0)) for c, s in enumerate(rng.uniform(size=n_cands))])
        for q in range(n_lists)
    ]
    acc = accuracy(rng.integers(0, 2, n_lists), rng.integers(0, 2, n_lists))
    return {"P@1": p_at_1(lists), "MRR": mrr(lists), "Acc": acc}


if __name__ == "__main__":
    for k, v in random_guess().items():
        print(f"{k:<4} {v:.4f}")
