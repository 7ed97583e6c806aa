"""LCS dynamic programming, simulation data and gate backtracing.

The DP table is the oracle for the exact-match lattice; paths recovered from
learned gates are compared against DP paths with :func:`path_agreement`.
"""

from dataclasses import dataclass, field

import numpy as np

ALPHABET = "ABCDEFGHIJ"
MOVES = {"left": (0, -1), "top": (-1, 0), "diagonal": (-1, -1)}


@dataclass
class DPTable:
    c: np.ndarray  # (m+1, n+1) integers

    @property
    def length(self):
        return int(self.c[-1, -1])


@dataclass
class MatchPath:
    """Lattice positions from ``(m, n)`` back to the first boundary cell.

    ``moves[k]`` leads from ``positions[k]`` to ``positions[k+1]``.
    """

    positions: list
    moves: list = field(default_factory=list)

    def __post_init__(self):
        for (a, b), mv, (c, d) in zip(self.positions, self.moves, self.positions[1:]):
            if (c - a, d - b) != MOVES[mv]:
                raise ValueError(f"move {mv!r} does not lead from {(a, b)} to {(c, d)}")

    def cells(self):
        return set(self.positions)

    def diagonal_cells(self):
        return [p for p, mv in zip(self.positions, self.moves) if mv == "diagonal"]

    def matched_cells(self, x, y):
        """Cells left by a diagonal move whose tokens are equal."""
        return [(i, j) for i, j in self.diagonal_cells() if x[i - 1] == y[j - 1]]

    def to_csv(self):
        rows = ["step,i,j,move"]
        for k, (i, j) in enumerate(self.positions):
            mv = self.moves[k] if k < len(self.moves) else ""
            rows.append(f"{k},{i},{j},{mv}")
        return "\n".join(rows) + "\n"


def lcs_table(x, y):
    m, n = len(x), len(y)
    c = np.zeros((m + 1, n + 1), dtype=np.int64)
    for i in range(1, m + 1):
        xi = x[i - 1]
        for j in range(1, n + 1):
            if xi == y[j - 1]:
                c[i, j] = c[i - 1, j - 1] + 1
            else:
                c[i, j] = max(c[i, j - 1], c[i - 1, j])
    return DPTable(c)


def _walk(start, choose):
    i, j = start
    positions, moves = [(i, j)], []
    while i > 0 and j > 0:
        mv = choose(i, j)
        di, dj = MOVES[mv]
        i, j = i + di, j + dj
        positions.append((i, j))
        moves.append(mv)
    return MatchPath(positions, moves)


def dp_backtrace(table, x, y):
    """Provenance path of the DP; top wins ties between top and left."""
    c = table.c
    if c.shape != (len(x) + 1, len(y) + 1):
        raise RuntimeError(f"table shape {c.shape} does not fit sequences of length {len(x)}, {len(y)}")

    def choose(i, j):
        match = int(x[i - 1] == y[j - 1])
        if c[i, j] != max(c[i, j - 1], c[i - 1, j], c[i - 1, j - 1] + match):
            raise RuntimeError(f"DP table inconsistent with the sequences at cell ({i}, {j})")
        if match and c[i, j] == c[i - 1, j - 1] + 1:
            return "diagonal"
        return "top" if c[i - 1, j] >= c[i, j - 1] else "left"

    return _walk((len(x), len(y)), choose)


def gate_backtrace(state, dim="mean"):
    """Follow the largest of the left/top/diagonal update gates from ``(m, n)``.

    ``state`` is anything with a ``z`` array of shape (m, n, 4, d) in gate
    order i, l, t, d (a lattice from the model or from exact LCS mode).
    ``dim`` selects one hidden dimension, or ``"mean"`` averages them.  The
    input gate ``z_i`` is not a direction and is ignored.  Ties prefer the
    diagonal, then top, then left.
    """
    z = np.asarray(state.z)
    m, n = z.shape[:2]
    g = z.mean(axis=-1) if dim == "mean" else z[..., dim]

    def choose(i, j):
        _, zl, zt, zd = g[i - 1, j - 1]
        if zd >= zt and zd >= zl:
            return "diagonal"
        return "top" if zt >= zl else "left"

    return _walk((m, n), choose)


def path_agreement(p1, p2):
    """Jaccard overlap of the cell sets of two paths on the same grid."""
    if p1.positions[0] != p2.positions[0]:
        raise ValueError(f"paths start at {p1.positions[0]} and {p2.positions[0]}: different grids")
    a, b = p1.cells(), p2.cells()
    return len(a & b) / len(a | b)


def random_monotone_path(m, n, rng):
    """Baseline path: uniform choice among the three moves at every cell."""
    names = list(MOVES)
    return _walk((m, n), lambda i, j: names[rng.integers(3)])


# ---------------------------------------------------------------------------
# simulation data


@dataclass
class SimDataset:
    """Sequence pairs over ``alphabet_size`` symbols labelled with normalized LCS.

    ``train`` and ``test`` hold ``(x, y, label)`` with ``label = LCS / max(m, n)``.
    """

    train: list
    test: list
    meta: dict


def normalized_lcs(x, y):
    return lcs_table(x, y).length / max(len(x), len(y))


def gen_pairs(count, rng, alphabet_size=10, min_len=5, max_len=20):
    pairs = []
    for _ in range(count):
        m, n = rng.integers(min_len, max_len + 1, size=2)
        x = tuple(int(t) for t in rng.integers(0, alphabet_size, size=m))
        y = tuple(int(t) for t in rng.integers(0, alphabet_size, size=n))
        pairs.append((x, y, normalized_lcs(x, y)))
    return pairs


def gen_dataset(n_train=10000, n_test=1000, alphabet_size=10, min_len=5, max_len=20, seed=0):
    if n_train <= 0 or n_test <= 0:
        raise ValueError("split sizes must be positive")
    if not 1 <= min_len <= max_len:
        raise ValueError("need 1 <= min_len <= max_len")
    rng = np.random.default_rng(seed)
    train = gen_pairs(n_train, rng, alphabet_size, min_len, max_len)
    test = gen_pairs(n_test, rng, alphabet_size, min_len, max_len)
    meta = {
        "alphabet_size": alphabet_size,
        "min_len": min_len,
        "max_len": max_len,
        "seed": seed,
        "normalization": "max_len",
    }
    return SimDataset(train, test, meta)


def encode(text, alphabet=ALPHABET):
    return tuple(alphabet.index(ch) for ch in text)


def decode(ids, alphabet=ALPHABET):
    return "".join(alphabet[t] for t in ids)
