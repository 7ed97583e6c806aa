import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from matchsrnn.train import TrainConfig, init_params  # noqa: E402


def small_params(vocab=7, d_e=3, c=3, d=3, n_out=1, bidirectional=False, scale=0.5, seed=0):
    cfg = TrainConfig(d_e=d_e, c=c, d=d, init_scale=scale, bidirectional=bidirectional,
                      loss="xent" if n_out == 2 else "square")
    return init_params(cfg, vocab, seed=seed)


def random_seq(rng, vocab, lo=1, hi=6):
    return tuple(int(t) for t in rng.integers(0, vocab, size=int(rng.integers(lo, hi + 1))))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
