"""Match-SRNN forward pass.

Pipeline: word embeddings -> neural tensor network interactions ``s_ij`` ->
spatial GRU over the (m+1) x (n+1) lattice -> linear score of ``h_mn``.

Parameters live in a plain ``dict`` of float64 arrays (a *ParamSet*).  The
dict is self-describing: dimensions and the bidirectional flag are read back
from the array shapes, see :func:`dims`.

The lattice recurrence is evaluated by anti-diagonal wavefronts over a padded
batch.  Cells on one anti-diagonal only depend on the two previous diagonals,
so each wavefront is a handful of vectorized numpy calls.  Padding is exact:
a cell only reads cells above/left of it, so ``h[m_b, n_b]`` of a short item
never sees padded positions.
"""

from dataclasses import dataclass, field

import numpy as np

from .linalg import DTYPE, NumericError, ShapeError, as_float, sigmoid, softmax_gates

# gate axis order in every stacked array
GATES = ("i", "l", "t", "d")
RESETS = ("l", "t", "d")
DIRECTIONS = ("fwd", "bwd")

GRU_NAMES = (
    [f"gru_Wr_{g}" for g in RESETS]
    + [f"gru_br_{g}" for g in RESETS]
    + [f"gru_Wz_{g}" for g in GATES]
    + [f"gru_bz_{g}" for g in GATES]
    + ["gru_W", "gru_U", "gru_b"]
)


@dataclass(frozen=True)
class Dims:
    vocab_size: int
    d_e: int
    c: int
    d: int
    n_out: int
    bidirectional: bool


def param_shapes(vocab_size, d_e, c, d, n_out=1, bidirectional=False):
    """Ordered ``{name: shape}`` for a ParamSet with the given dimensions."""
    q = 3 * d + c
    shapes = {
        "embed": (vocab_size, d_e),
        "ntn_T": (c, d_e, d_e),
        "ntn_W": (c, 2 * d_e),
        "ntn_b": (c,),
    }
    for direction in DIRECTIONS if bidirectional else DIRECTIONS[:1]:
        for g in RESETS:
            shapes[f"{direction}.gru_Wr_{g}"] = (d, q)
        for g in RESETS:
            shapes[f"{direction}.gru_br_{g}"] = (d,)
        for g in GATES:
            shapes[f"{direction}.gru_Wz_{g}"] = (d, q)
        for g in GATES:
            shapes[f"{direction}.gru_bz_{g}"] = (d,)
        shapes[f"{direction}.gru_W"] = (d, c)
        shapes[f"{direction}.gru_U"] = (d, 3 * d)
        shapes[f"{direction}.gru_b"] = (d,)
    shapes["score_W"] = (n_out, 2 * d if bidirectional else d)
    shapes["score_b"] = (n_out,)
    return shapes


def dims(params):
    vocab_size, d_e = params["embed"].shape
    c = params["ntn_b"].shape[0]
    d = params["fwd.gru_b"].shape[0]
    bidirectional = "bwd.gru_b" in params
    n_out = params["score_b"].shape[0]
    return Dims(vocab_size, d_e, c, d, n_out, bidirectional)


def check_params(params):
    """Raise :class:`ShapeError` unless every array has its expected shape."""
    dm = dims(params)
    expected = param_shapes(dm.vocab_size, dm.d_e, dm.c, dm.d, dm.n_out, dm.bidirectional)
    missing = set(expected) - set(params)
    extra = set(params) - set(expected)
    if missing or extra:
        raise ShapeError(f"parameter names: missing {sorted(missing)}, unexpected {sorted(extra)}")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise ShapeError(f"{name}: expected shape {shape}, got {params[name].shape}")
    return dm


def zero_params(vocab_size, d_e, c, d, n_out=1, bidirectional=False):
    return {
        name: np.zeros(shape, dtype=DTYPE)
        for name, shape in param_shapes(vocab_size, d_e, c, d, n_out, bidirectional).items()
    }


def check_ids(seq, vocab_size):
    ids = np.asarray(seq, dtype=np.int64)
    if ids.ndim != 1 or ids.size == 0:
        raise ValueError("token sequence must be a non-empty 1-D sequence of ids")
    bad = ids[(ids < 0) | (ids >= vocab_size)]
    if bad.size:
        raise ValueError(f"token ids out of range [0, {vocab_size}): {sorted(set(bad.tolist()))}")
    return ids


# ---------------------------------------------------------------------------
# batched machinery


def stack_gru(params, direction):
    """Concatenate one direction's per-gate matrices for vectorized use."""
    p = f"{direction}."
    return {
        "Wr": np.concatenate([params[p + f"gru_Wr_{g}"] for g in RESETS]),
        "br": np.concatenate([params[p + f"gru_br_{g}"] for g in RESETS]),
        "Wz": np.concatenate([params[p + f"gru_Wz_{g}"] for g in GATES]),
        "bz": np.concatenate([params[p + f"gru_bz_{g}"] for g in GATES]),
        "W": params[p + "gru_W"],
        "U": params[p + "gru_U"],
        "b": params[p + "gru_b"],
    }


def diagonal(k, M, N):
    """Cell indices (1-based) on anti-diagonal ``i + j = k`` of an M x N grid."""
    ii = np.arange(max(1, k - N), min(M, k - 1) + 1)
    return ii, k - ii


@dataclass
class Scan:
    """Everything one spatial-GRU pass stores for its backward pass.

    Grid arrays are indexed ``[b, i-1, j-1]`` for cell ``(i, j)``; ``h`` is
    indexed ``[b, i, j]`` and includes the zero boundary.
    """

    h: np.ndarray  # (B, M+1, N+1, d)
    q: np.ndarray  # (B, M, N, 3d+c)
    r: np.ndarray  # (B, M, N, 3d), order l, t, d
    z: np.ndarray  # (B, M, N, 4, d), order i, l, t, d
    hp: np.ndarray  # (B, M, N, d), candidate state
    s: np.ndarray  # (B, M, N, c), the input grid as scanned


def scan(S, gru):
    """Run the spatial GRU over a padded batch of interaction grids."""
    B, M, N, c = S.shape
    d = gru["b"].shape[0]
    dt = S.dtype
    h = np.zeros((B, M + 1, N + 1, d), dtype=dt)
    q = np.zeros((B, M, N, 3 * d + c), dtype=dt)
    r = np.zeros((B, M, N, 3 * d), dtype=dt)
    z = np.zeros((B, M, N, 4, d), dtype=dt)
    hp = np.zeros((B, M, N, d), dtype=dt)
    Wr_T, Wz_T, W_T, U_T = gru["Wr"].T, gru["Wz"].T, gru["W"].T, gru["U"].T
    for k in range(2, M + N + 1):
        ii, jj = diagonal(k, M, N)
        top = h[:, ii - 1, jj]
        left = h[:, ii, jj - 1]
        diag = h[:, ii - 1, jj - 1]
        s = S[:, ii - 1, jj - 1]
        qk = np.concatenate([top, left, diag, s], axis=-1)
        rk = sigmoid(qk @ Wr_T + gru["br"])
        zk = softmax_gates((qk @ Wz_T + gru["bz"]).reshape(B, len(ii), 4, d))
        hcat = np.concatenate([left, top, diag], axis=-1)
        hpk = np.tanh(s @ W_T + (rk * hcat) @ U_T + gru["b"])
        hk = zk[..., 1, :] * left + zk[..., 2, :] * top + zk[..., 3, :] * diag + zk[..., 0, :] * hpk
        if not np.isfinite(hk).all():
            b, cell = np.argwhere(~np.isfinite(hk))[0][:2]
            raise NumericError(
                f"non-finite lattice state at cell ({ii[cell]}, {jj[cell]}) of item {b}",
                cell=(int(ii[cell]), int(jj[cell])),
            )
        h[:, ii, jj] = hk
        q[:, ii - 1, jj - 1] = qk
        r[:, ii - 1, jj - 1] = rk
        z[:, ii - 1, jj - 1] = zk
        hp[:, ii - 1, jj - 1] = hpk
    return Scan(h, q, r, z, hp, S)


def pad_batch(seqs):
    lengths = np.array([len(s) for s in seqs], dtype=np.int64)
    ids = np.zeros((len(seqs), lengths.max()), dtype=np.int64)
    for b, s in enumerate(seqs):
        ids[b, : len(s)] = s
    return ids, lengths


def reverse_index(lengths, size):
    """Per-item index that reverses the first ``length`` positions."""
    pos = np.arange(size)[None, :]
    ln = lengths[:, None]
    return np.where(pos < ln, ln - 1 - pos, pos)


@dataclass
class Forward:
    """Cached batched forward evaluation; input to :func:`grad.backward`."""

    ids1: np.ndarray
    ids2: np.ndarray
    len1: np.ndarray
    len2: np.ndarray
    E1: np.ndarray
    E2: np.ndarray
    pre: np.ndarray  # NTN pre-activation (B, M, N, c)
    S: np.ndarray
    scans: dict
    rev1: np.ndarray
    rev2: np.ndarray
    features: np.ndarray  # (B, d) or (B, 2d)
    out: np.ndarray  # (B, n_out)


def ntn_preactivation(E1, E2, params):
    """``u(w_i)^T T^[1:c] u(v_j) + W [u(w_i); u(v_j)] + b`` for every pair, (B, M, N, c)."""
    B, M, d_e = E1.shape
    N = E2.shape[1]
    c = params["ntn_b"].shape[0]
    A = np.tensordot(E1, params["ntn_T"], axes=([2], [1]))  # (B, M, c, d_e)
    bil = np.matmul(A.reshape(B, M * c, d_e), E2.transpose(0, 2, 1))
    bil = bil.reshape(B, M, c, N).transpose(0, 1, 3, 2)
    lin1 = E1 @ params["ntn_W"][:, :d_e].T
    lin2 = E2 @ params["ntn_W"][:, d_e:].T
    return bil + lin1[:, :, None, :] + lin2[:, None, :, :] + params["ntn_b"]


def forward_batch(seqs1, seqs2, params):
    """Score a batch of pairs, keeping every cache needed for backprop."""
    dm = dims(params)
    if len(seqs1) != len(seqs2) or not seqs1:
        raise ValueError("need equally many (and at least one) left and right sequences")
    seqs1 = [check_ids(s, dm.vocab_size) for s in seqs1]
    seqs2 = [check_ids(s, dm.vocab_size) for s in seqs2]
    ids1, len1 = pad_batch(seqs1)
    ids2, len2 = pad_batch(seqs2)
    B, M = ids1.shape
    N = ids2.shape[1]
    bidx = np.arange(B)

    E1 = params["embed"][ids1]
    E2 = params["embed"][ids2]
    pre = ntn_preactivation(E1, E2, params)
    S = np.maximum(pre, 0.0)

    scans = {"fwd": scan(S, stack_gru(params, "fwd"))}
    feats = [scans["fwd"].h[bidx, len1, len2]]
    rev1 = reverse_index(len1, M)
    rev2 = reverse_index(len2, N)
    if dm.bidirectional:
        S_rev = S[bidx[:, None, None], rev1[:, :, None], rev2[:, None, :]]
        scans["bwd"] = scan(S_rev, stack_gru(params, "bwd"))
        feats.append(scans["bwd"].h[bidx, len1, len2])
    features = np.concatenate(feats, axis=-1)
    out = features @ params["score_W"].T + params["score_b"]
    return Forward(ids1, ids2, len1, len2, E1, E2, pre, S, scans, rev1, rev2, features, out)


def predict(pairs, params, batch_size=256):
    """Scores for many ``(s1, s2)`` pairs, shape ``(len(pairs), n_out)``."""
    outs = []
    for start in range(0, len(pairs), batch_size):
        chunk = pairs[start : start + batch_size]
        fw = forward_batch([p[0] for p in chunk], [p[1] for p in chunk], params)
        outs.append(fw.out)
    return np.concatenate(outs) if outs else np.zeros((0, dims(params).n_out))


# ---------------------------------------------------------------------------
# single-instance API


@dataclass
class GateRecord:
    z_i: np.ndarray
    z_l: np.ndarray
    z_t: np.ndarray
    z_d: np.ndarray
    r_l: np.ndarray
    r_t: np.ndarray
    r_d: np.ndarray


@dataclass
class LatticeState:
    """One lattice: ``h`` is (m+1, n+1, d) with zero first row and column.

    ``z`` is (m, n, 4, d) in gate order i, l, t, d and ``r`` is (m, n, 3, d)
    in order l, t, d; cell ``(i, j)`` lives at ``[i-1, j-1]``.
    """

    h: np.ndarray
    z: np.ndarray
    r: np.ndarray
    direction: str = "forward"
    cache: dict = field(default_factory=dict, repr=False)

    @property
    def shape(self):
        return self.h.shape[0] - 1, self.h.shape[1] - 1

    @property
    def final(self):
        return self.h[-1, -1]

    def gates(self, i, j):
        z, r = self.z[i - 1, j - 1], self.r[i - 1, j - 1]
        return GateRecord(z[0], z[1], z[2], z[3], r[0], r[1], r[2])


def embed(seq, params):
    ids = check_ids(seq, params["embed"].shape[0])
    return params["embed"][ids]


def interaction_tensor(s1, s2, params):
    """Word-pair interaction grid ``s_ij``, shape (m, n, c)."""
    E1 = embed(s1, params)[None]
    E2 = embed(s2, params)[None]
    return np.maximum(ntn_preactivation(E1, E2, params)[0], 0.0)


def spatial_gru_forward(s, params, direction="forward"):
    """Scan an (m, n, c) interaction grid with the spatial GRU.

    ``direction="backward"`` reverses the grid along both axes and scans it
    with the ``bwd.`` parameter group, i.e. from the bottom-right corner.
    """
    s = as_float(s)
    if s.ndim != 3 or s.shape[0] == 0 or s.shape[1] == 0:
        raise ShapeError(f"interaction grid must be (m, n, c) with m, n >= 1, got {s.shape}")
    group = {"forward": "fwd", "backward": "bwd"}[direction]
    gru = stack_gru(params, group)
    if s.shape[2] != gru["W"].shape[1]:
        raise ShapeError(f"interaction dim {s.shape[2]} != gru_W columns {gru['W'].shape[1]}")
    if not np.isfinite(s).all():
        raise NumericError("non-finite interaction grid")
    if group == "bwd":
        s = s[::-1, ::-1]
    sc = scan(s[None], gru)
    m, n = s.shape[:2]
    d = gru["b"].shape[0]
    return LatticeState(
        h=sc.h[0],
        z=sc.z[0],
        r=sc.r[0].reshape(m, n, 3, d),
        direction=direction,
        cache={"q": sc.q[0], "hp": sc.hp[0], "s": sc.s[0]},
    )


def score(state, params):
    """Linear score of the final state(s); pass ``(fwd, bwd)`` when bidirectional."""
    states = state if isinstance(state, (tuple, list)) else (state,)
    feat = np.concatenate([st.final for st in states])
    W = params["score_W"]
    if W.shape[1] != feat.shape[0]:
        raise ShapeError(f"score_W {W.shape} vs final state of length {feat.shape[0]}")
    return W @ feat + params["score_b"]


def match_score(s1, s2, params, bidirectional=None):
    """Matching score vector (length n_out) for one pair of texts."""
    dm = dims(params)
    if bidirectional is None:
        bidirectional = dm.bidirectional
    if bidirectional and not dm.bidirectional:
        raise ShapeError("bidirectional scoring requested but params have no bwd group")
    if not bidirectional and dm.bidirectional:
        raise ShapeError("params are bidirectional; unidirectional scoring is undefined")
    return forward_batch([s1], [s2], params).out[0]


# ---------------------------------------------------------------------------
# exact-match (LCS) degenerate mode


@dataclass
class ExactLattice:
    """Result of :func:`exact_lcs_mode`.

    ``h`` is the (m+1, n+1) scalar lattice.  ``z`` is (m, n, 4, 1) in gate
    order i, l, t, d and records which branch won the max at each cell; a
    diagonal win splits its unit mass between ``z_d`` and ``z_i``.
    """

    h: np.ndarray
    z: np.ndarray
    hp: np.ndarray
    s: np.ndarray

    @property
    def shape(self):
        return self.h.shape[0] - 1, self.h.shape[1] - 1


def exact_lcs_mode(x, y):
    """Spatial GRU with d=1, indicator interactions and hard-max gates.

    Per cell: ``s = [x_i == y_j]``, ``h' = h_diag + s`` and
    ``h = max(h_left, h_top, h')``.  Branch preference on ties: the diagonal
    only wins on a match, then top, then left.
    """
    m, n = len(x), len(y)
    h = np.zeros((m + 1, n + 1), dtype=DTYPE)
    z = np.zeros((m, n, 4, 1), dtype=DTYPE)
    hp = np.zeros((m, n), dtype=DTYPE)
    s = np.zeros((m, n), dtype=DTYPE)
    for i in range(1, m + 1):
        for j in range(1, n + 1):
            match = 1.0 if x[i - 1] == y[j - 1] else 0.0
            cand = h[i - 1, j - 1] + match
            left, top = h[i, j - 1], h[i - 1, j]
            s[i - 1, j - 1] = match
            hp[i - 1, j - 1] = cand
            if match and cand >= top and cand >= left:
                h[i, j] = cand
                z[i - 1, j - 1, 0] = z[i - 1, j - 1, 3] = 0.5
            elif top >= left:
                h[i, j] = top
                z[i - 1, j - 1, 2] = 1.0
            else:
                h[i, j] = left
                z[i - 1, j - 1, 1] = 1.0
    return ExactLattice(h, z, hp, s)
