"""Hand-derived reverse-mode gradients of the Match-SRNN pipeline.

:func:`backward` consumes the caches of :func:`model.forward_batch` and walks
the lattice anti-diagonals in reverse.  Each cell pushes its state adjoint
into the three predecessor states, its interaction input ``s_ij`` and the GRU
parameters; the interaction adjoints then flow through the rectifier into the
NTN parameters and embedding rows.

:func:`fd_check` is the independent oracle: central finite differences of a
scalar loss, compared entry by entry against an analytic gradient.
"""

from dataclasses import dataclass, field

import numpy as np

from .linalg import NumericError
from .model import GATES, RESETS, diagonal, dims, forward_batch, stack_gru


def zeros_like(params):
    return {name: np.zeros_like(a) for name, a in params.items()}


def _scan_backward(sc, dh, gru, d):
    """Back-propagate state adjoints ``dh`` (B, M+1, N+1, d) through one scan.

    ``dh`` is consumed in place.  Returns (dS, stacked parameter grads).
    """
    B, M, N, c = sc.s.shape
    gWr = np.zeros_like(gru["Wr"])
    gbr = np.zeros_like(gru["br"])
    gWz = np.zeros_like(gru["Wz"])
    gbz = np.zeros_like(gru["bz"])
    gW = np.zeros_like(gru["W"])
    gU = np.zeros_like(gru["U"])
    gb = np.zeros_like(gru["b"])
    dS = np.zeros_like(sc.s)
    h = sc.h
    for k in range(M + N, 1, -1):
        ii, jj = diagonal(k, M, N)
        g = dh[:, ii, jj]
        if not np.isfinite(g).all():
            b, cell = np.argwhere(~np.isfinite(g))[0][:2]
            raise NumericError(
                f"non-finite adjoint at cell ({ii[cell]}, {jj[cell]}) of item {b}",
                cell=(int(ii[cell]), int(jj[cell])),
            )
        top = h[:, ii - 1, jj]
        left = h[:, ii, jj - 1]
        diag = h[:, ii - 1, jj - 1]
        s = sc.s[:, ii - 1, jj - 1]
        qk = sc.q[:, ii - 1, jj - 1]
        rk = sc.r[:, ii - 1, jj - 1]
        zk = sc.z[:, ii - 1, jj - 1]
        hpk = sc.hp[:, ii - 1, jj - 1]
        L = len(ii)

        # h = z_l*left + z_t*top + z_d*diag + z_i*h'
        dz = np.stack([g * hpk, g * left, g * top, g * diag], axis=-2)
        dleft = g * zk[..., 1, :]
        dtop = g * zk[..., 2, :]
        ddiag = g * zk[..., 3, :]

        # h' = tanh(W s + U (r * [left, top, diag]) + b)
        da = g * zk[..., 0, :] * (1.0 - hpk * hpk)
        hcat = np.concatenate([left, top, diag], axis=-1)
        rh = rk * hcat
        gW += np.tensordot(da, s, axes=([0, 1], [0, 1]))
        gU += np.tensordot(da, rh, axes=([0, 1], [0, 1]))
        gb += da.sum(axis=(0, 1))
        ds = da @ gru["W"]
        drh = da @ gru["U"]
        dr = drh * hcat
        dhcat = drh * rk
        dleft += dhcat[..., :d]
        dtop += dhcat[..., d : 2 * d]
        ddiag += dhcat[..., 2 * d :]

        # gate pre-activations
        dzp = (zk * (dz - (zk * dz).sum(axis=-2, keepdims=True))).reshape(B, L, 4 * d)
        dra = dr * rk * (1.0 - rk)
        gWr += np.tensordot(dra, qk, axes=([0, 1], [0, 1]))
        gbr += dra.sum(axis=(0, 1))
        gWz += np.tensordot(dzp, qk, axes=([0, 1], [0, 1]))
        gbz += dzp.sum(axis=(0, 1))
        dq = dra @ gru["Wr"] + dzp @ gru["Wz"]
        # q = [top, left, diag, s]
        dtop += dq[..., :d]
        dleft += dq[..., d : 2 * d]
        ddiag += dq[..., 2 * d : 3 * d]
        ds += dq[..., 3 * d :]

        dh[:, ii - 1, jj] += dtop
        dh[:, ii, jj - 1] += dleft
        dh[:, ii - 1, jj - 1] += ddiag
        dS[:, ii - 1, jj - 1] = ds
    return dS, dict(Wr=gWr, br=gbr, Wz=gWz, bz=gbz, W=gW, U=gU, b=gb)


def _unstack_gru(stacked, direction, d, grads):
    p = f"{direction}."
    for n, g in enumerate(RESETS):
        grads[p + f"gru_Wr_{g}"] += stacked["Wr"][n * d : (n + 1) * d]
        grads[p + f"gru_br_{g}"] += stacked["br"][n * d : (n + 1) * d]
    for n, g in enumerate(GATES):
        grads[p + f"gru_Wz_{g}"] += stacked["Wz"][n * d : (n + 1) * d]
        grads[p + f"gru_bz_{g}"] += stacked["bz"][n * d : (n + 1) * d]
    grads[p + "gru_W"] += stacked["W"]
    grads[p + "gru_U"] += stacked["U"]
    grads[p + "gru_b"] += stacked["b"]


def backward(fw, upstream, params):
    """Gradient of ``sum_b upstream[b] . out[b]`` w.r.t. every parameter.

    ``fw`` must be the :class:`model.Forward` produced from ``params``;
    ``upstream`` has shape (B, n_out).  Returns a GradSet (dict of arrays
    shaped like ``params``).  ``params`` is not modified.
    """
    if fw is None or not fw.scans:
        raise RuntimeError("backward needs the caches of the matching forward pass")
    dm = dims(params)
    upstream = np.asarray(upstream, dtype=fw.out.dtype).reshape(fw.out.shape)
    grads = zeros_like(params)
    B = fw.out.shape[0]
    bidx = np.arange(B)
    d = dm.d

    grads["score_W"] += upstream.T @ fw.features
    grads["score_b"] += upstream.sum(axis=0)
    dfeat = upstream @ params["score_W"]

    dS = np.zeros_like(fw.S)
    for n, direction in enumerate(fw.scans):
        sc = fw.scans[direction]
        dh = np.zeros_like(sc.h)
        dh[bidx, fw.len1, fw.len2] = dfeat[:, n * d : (n + 1) * d]
        dS_dir, stacked = _scan_backward(sc, dh, stack_gru(params, direction), d)
        _unstack_gru(stacked, direction, d, grads)
        if direction == "bwd":
            # the reversal is a per-item permutation of cells
            dS[bidx[:, None, None], fw.rev1[:, :, None], fw.rev2[:, None, :]] += dS_dir
        else:
            dS += dS_dir

    dpre = dS * (fw.pre > 0)  # (B, M, N, c)
    B, M, N, c = dpre.shape
    d_e = dm.d_e
    T = params["ntn_T"]
    W1, W2 = params["ntn_W"][:, :d_e], params["ntn_W"][:, d_e:]
    # X[b, m, k, f] = sum_n dpre[b, m, n, k] E2[b, n, f]
    X = np.matmul(dpre.transpose(0, 1, 3, 2).reshape(B, M * c, N), fw.E2).reshape(B, M, c, d_e)
    grads["ntn_T"] += np.tensordot(fw.E1, X, axes=([0, 1], [0, 1])).transpose(1, 0, 2)
    grads["ntn_b"] += dpre.sum(axis=(0, 1, 2))
    d1 = dpre.sum(axis=2)  # (B, M, c)
    d2 = dpre.sum(axis=1)  # (B, N, c)
    grads["ntn_W"][:, :d_e] += np.tensordot(d1, fw.E1, axes=([0, 1], [0, 1]))
    grads["ntn_W"][:, d_e:] += np.tensordot(d2, fw.E2, axes=([0, 1], [0, 1]))
    dE1 = np.tensordot(X, T, axes=([2, 3], [0, 2])) + d1 @ W1
    A = np.tensordot(fw.E1, T, axes=([2], [1]))  # (B, M, c, d_e)
    dE2 = np.matmul(
        dpre.transpose(0, 2, 1, 3).reshape(B, N, M * c), A.reshape(B, M * c, d_e)
    ) + d2 @ W2
    # padded positions carry exactly zero adjoint, so they add nothing here
    np.add.at(grads["embed"], fw.ids1, dE1)
    np.add.at(grads["embed"], fw.ids2, dE2)
    return grads


def instance_gradient(s1, s2, params, upstream):
    """Single-pair convenience wrapper: forward then backward."""
    fw = forward_batch([s1], [s2], params)
    return backward(fw, np.asarray(upstream)[None], params)


# ---------------------------------------------------------------------------
# finite-difference oracle


@dataclass
class ArrayCheck:
    name: str
    checked: int
    max_rel_error: float
    flagged: int = 0
    worst_index: tuple = ()
    entries: list = field(default_factory=list, repr=False)


@dataclass
class FDReport:
    arrays: list

    @property
    def max_rel_error(self):
        return max((a.max_rel_error for a in self.arrays), default=0.0)

    def passed(self, tol=1e-5):
        return all(a.max_rel_error <= tol for a in self.arrays)

    def merge(self, other):
        """Combine two reports, keeping the worst error per array name."""
        by_name = {a.name: a for a in self.arrays}
        for a in other.arrays:
            mine = by_name.get(a.name)
            if mine is None:
                by_name[a.name] = ArrayCheck(a.name, a.checked, a.max_rel_error, a.flagged, a.worst_index)
                continue
            mine.checked += a.checked
            mine.flagged += a.flagged
            if a.max_rel_error > mine.max_rel_error:
                mine.max_rel_error, mine.worst_index = a.max_rel_error, a.worst_index
        return FDReport(list(by_name.values()))

    def table(self):
        lines = [f"{'array':<22} {'checked':>8} {'flagged':>8} {'max_rel_err':>12}"]
        for a in self.arrays:
            lines.append(f"{a.name:<22} {a.checked:>8d} {a.flagged:>8d} {a.max_rel_error:>12.3e}")
        return "\n".join(lines)


def relative_error(analytic, numeric):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), 1e-8)


def _sample_indices(shape, max_entries, rng):
    size = int(np.prod(shape))
    if size <= max_entries:
        flat = np.arange(size)
    else:
        flat = np.sort(rng.choice(size, size=max_entries, replace=False))
    return [np.unravel_index(f, shape) for f in flat]


def _split(result):
    if isinstance(result, tuple):
        return result
    return result, None


def fd_check(
    params, loss_fn, analytic, eps=1e-5, max_entries=40, seed=0, names=None, precision=np.longdouble,
):
    """Compare analytic gradients against central differences of ``loss_fn``.

    ``loss_fn(params)`` returns the loss, or ``(loss, signature)`` where
    the signature array records the active piece of every piecewise-linear
    unit (relu masks, hinge activity).  ``analytic`` is a GradSet for the
    same point.  Arrays with at most ``max_entries`` entries are checked fully,
    larger ones on a seeded sample.

    The differences are taken on a copy of ``params`` cast to ``precision``
    (extended precision by default), so cancellation in ``L(+eps) - L(-eps)``
    does not swamp gradient entries of order 1e-7.  ``params`` itself is
    never modified.

    Entries whose +eps and -eps evaluations see different signatures sit on
    a kink; they are flagged and excluded from the error maximum.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    rng = np.random.default_rng(seed)
    work = {k: np.array(v, dtype=precision) for k, v in params.items()}
    report = []
    for name in names or list(params):
        arr = work[name]
        check = ArrayCheck(name, 0, 0.0)
        for idx in _sample_indices(arr.shape, max_entries, rng):
            orig = arr[idx]
            arr[idx] = orig + eps
            lp, kp = _split(loss_fn(work))
            arr[idx] = orig - eps
            lm, km = _split(loss_fn(work))
            arr[idx] = orig
            numeric = float((lp - lm) / (2 * precision(eps)))
            a = float(analytic[name][idx])
            err = relative_error(a, numeric)
            kink = kp is not None and not np.array_equal(kp, km)
            check.entries.append((tuple(int(i) for i in idx), a, numeric, err, kink))
            check.checked += 1
            if kink:
                check.flagged += 1
            elif err > check.max_rel_error:
                check.max_rel_error = err
                check.worst_index = tuple(int(i) for i in idx)
        report.append(check)
    return FDReport(report)
