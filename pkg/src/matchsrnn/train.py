"""Losses, AdaGrad, initialization and the training loop."""

import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import metrics
from .grad import backward
from .linalg import DTYPE, NumericError, ShapeError, as_float
from .model import forward_batch, param_shapes, predict

log = logging.getLogger(__name__)

# loss name -> instance kind it trains on
LOSS_KINDS = {"square": "regression", "hinge": "ranking", "xent": "classification"}


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainInstance:
    kind: str
    s1: tuple
    s2: tuple
    y: float = None
    label: int = None
    s2_neg: tuple = None
    qid: object = None

    def __post_init__(self):
        if self.kind not in LOSS_KINDS.values():
            raise ValueError(f"unknown instance kind {self.kind!r}")
        if not self.s1 or not self.s2 or (self.kind == "ranking" and not self.s2_neg):
            raise ValueError("instance sequences must be non-empty")
        if self.kind == "regression" and not math.isfinite(self.y):
            raise ValueError("regression target must be finite")
        if self.kind == "classification" and self.label not in (0, 1):
            raise ValueError("classification label must be 0 or 1")

    @classmethod
    def regression(cls, s1, s2, y):
        return cls("regression", tuple(s1), tuple(s2), y=float(y))

    @classmethod
    def classification(cls, s1, s2, label):
        return cls("classification", tuple(s1), tuple(s2), label=int(label))

    @classmethod
    def ranking(cls, s1, s2_pos, s2_neg, qid=None):
        return cls("ranking", tuple(s1), tuple(s2_pos), s2_neg=tuple(s2_neg), qid=qid)


@dataclass
class TrainConfig:
    d_e: int = 50
    c: int = 10
    d: int = 10
    batch_size: int = 128
    lr: float = 0.05
    eps: float = 1e-8
    init_scale: float = 0.1
    max_epochs: int = 30
    patience: int = 10
    seed: int = 0
    bidirectional: bool = False
    loss: str = "square"
    freeze_embeddings: bool = False

    def __post_init__(self):
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"loss must be one of {sorted(LOSS_KINDS)}, got {self.loss!r}")
        for name in ("d_e", "c", "d", "batch_size", "max_epochs", "patience"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.lr < 0 or self.init_scale < 0 or self.eps < 0:
            raise ValueError("lr, init_scale and eps must be non-negative")

    @property
    def n_out(self):
        return 2 if self.loss == "xent" else 1

    @property
    def kind(self):
        return LOSS_KINDS[self.loss]

    def to_dict(self):
        return asdict(self)


# ---------------------------------------------------------------------------
# losses


def square_loss(pred, y):
    diff = y - pred
    return diff * diff, -2.0 * diff


def hinge_loss(pred_pos, pred_neg):
    margin = 1.0 - pred_pos + pred_neg
    if margin <= 0.0:
        return 0.0, 0.0, 0.0
    return margin, -1.0, 1.0


def cross_entropy_2(logits, label):
    logits = as_float(logits)
    shift = logits.max()
    lse = shift + np.log(np.exp(logits - shift).sum())
    probs = np.exp(logits - lse)
    grad = probs.copy()
    grad[label] -= 1.0
    return lse - logits[label], grad


# ---------------------------------------------------------------------------
# parameters and optimizer


def init_params(config, vocab_size, seed=None, embeddings=None):
    """Uniform(-init_scale, init_scale) for every array, drawn in name order."""
    rng = np.random.default_rng(config.seed if seed is None else seed)
    shapes = param_shapes(vocab_size, config.d_e, config.c, config.d, config.n_out, config.bidirectional)
    a = config.init_scale
    params = {name: rng.uniform(-a, a, size=shape) for name, shape in shapes.items()}
    if embeddings is not None:
        embeddings = np.asarray(embeddings, dtype=DTYPE)
        if embeddings.shape != shapes["embed"]:
            raise ShapeError(f"embeddings {embeddings.shape} vs expected {shapes['embed']}")
        params["embed"] = embeddings.copy()
    return params


@dataclass
class AdaGradState:
    accum: dict
    lr: float = 0.05
    eps: float = 1e-8
    steps: int = 0

    @classmethod
    def for_params(cls, params, lr=0.05, eps=1e-8):
        return cls({k: np.zeros_like(v) for k, v in params.items()}, lr, eps)


def adagrad_step(params, grads, state, frozen=()):
    """``accum += g**2; theta -= lr * g / (sqrt(accum) + eps)`` in place.

    Coordinates whose denominator is zero (never saw a gradient, eps = 0)
    are left untouched.  Returns ``(params, state)``.
    """
    for name, g in grads.items():
        if name in frozen:
            continue
        theta, acc = params[name], state.accum[name]
        if g.shape != theta.shape or acc.shape != theta.shape:
            raise ShapeError(f"{name}: grad {g.shape}, param {theta.shape}, accum {acc.shape}")
        acc += g * g
        denom = np.sqrt(acc) + state.eps
        step = np.divide(g, denom, out=np.zeros_like(g), where=denom > 0)
        theta -= state.lr * step
    state.steps += 1
    return params, state


# ---------------------------------------------------------------------------
# batch objective


def batch_pairs(instances):
    """Pairs to score for a batch; ranking puts all positives before negatives."""
    if instances[0].kind == "ranking":
        return [(x.s1, x.s2) for x in instances] + [(x.s1, x.s2_neg) for x in instances]
    return [(x.s1, x.s2) for x in instances]


def loss_and_upstream(out, instances):
    """Per-item losses and d(mean loss)/d(out) for a forward batch."""
    B = len(instances)
    up = np.zeros_like(out)
    losses = np.zeros(B, dtype=out.dtype)
    kind = instances[0].kind
    for b, x in enumerate(instances):
        if x.kind != kind:
            raise ValueError("a batch must hold one instance kind")
        if kind == "regression":
            losses[b], up[b, 0] = square_loss(out[b, 0], x.y)
        elif kind == "classification":
            losses[b], up[b] = cross_entropy_2(out[b], x.label)
        else:
            losses[b], up[b, 0], up[B + b, 0] = hinge_loss(out[b, 0], out[B + b, 0])
    return losses, up / B


def batch_objective(instances, params, with_grad=True):
    """Mean loss over ``instances`` and (optionally) its GradSet.

    Returns ``(loss, grads, forward)``; the forward cache is handed back so
    callers can inspect rectifier masks and outputs.
    """
    pairs = batch_pairs(instances)
    fw = forward_batch([p[0] for p in pairs], [p[1] for p in pairs], params)
    losses, up = loss_and_upstream(fw.out, instances)
    grads = backward(fw, up, params) if with_grad else None
    return losses.mean(), grads, fw


def loss_with_signature(instances, params):
    """Mean loss plus the active piece of every relu and hinge unit.

    This is the ``loss_fn`` shape :func:`grad.fd_check` uses to flag
    evaluations that straddle a kink.
    """
    loss, _, fw = batch_objective(instances, params, with_grad=False)
    parts = [(fw.pre > 0).ravel()]
    if instances[0].kind == "ranking":
        B = len(instances)
        parts.append(1.0 - fw.out[:B, 0] + fw.out[B:, 0] > 0)
    return loss, np.concatenate(parts)


# ---------------------------------------------------------------------------
# evaluation


def validation_metric(params, instances, kind):
    """Returns ``(value, higher_is_better)``: MSE, accuracy or P@1."""
    if kind == "regression":
        pred = predict([(x.s1, x.s2) for x in instances], params)[:, 0]
        y = np.array([x.y for x in instances])
        return float(((pred - y) ** 2).mean()), False
    if kind == "classification":
        out = predict([(x.s1, x.s2) for x in instances], params)
        return metrics.accuracy(out.argmax(axis=1), [x.label for x in instances]), True
    return metrics.p_at_1(ranklists_from_triples(instances, params)), True


def ranklists_from_triples(instances, params):
    """One rank list per query: its positive followed by every distinct negative."""
    groups = {}
    for n, x in enumerate(instances):
        key = x.qid if x.qid is not None else ("_", n)
        g = groups.setdefault(key, {"s1": x.s1, "pos": x.s2, "negs": []})
        if x.s2_neg not in g["negs"]:
            g["negs"].append(x.s2_neg)
    pairs, rows = [], []
    for key, g in groups.items():
        for k, cand in enumerate([g["pos"]] + g["negs"]):
            pairs.append((g["s1"], cand))
            rows.append((key, k, int(k == 0)))
    scores = predict(pairs, params)[:, 0]
    return metrics.build_ranklists((q, i, sc, rel) for (q, i, rel), sc in zip(rows, scores))


# ---------------------------------------------------------------------------
# loop


@dataclass
class TrainState:
    """Everything needed to continue a run exactly where it stopped."""

    epoch: int
    params: dict
    optimizer: AdaGradState
    best_params: dict
    best_metric: float = None
    best_epoch: int = 0
    bad_epochs: int = 0
    history: list = field(default_factory=list)
    done: bool = False


def epoch_order(seed, epoch, n):
    return np.random.default_rng([seed, epoch]).permutation(n)


def _better(value, best, higher):
    if best is None:
        return True
    return value > best if higher else value < best


def train_loop(train, valid, config, params=None, resume=None, on_epoch=None, vocab_size=None):
    """Mini-batch AdaGrad with per-epoch validation and early stopping.

    Each epoch shuffles with a generator seeded by ``(seed, epoch)``, so a
    run resumed from a :class:`TrainState` replays the uninterrupted one.
    ``on_epoch(state)`` is called after every epoch (checkpoint hook).
    Returns ``(best_params, history)``; history rows are dicts with epoch,
    train_loss, validation_metric and wall_seconds.
    """
    if not train:
        raise ValueError("empty training set")
    kinds = {x.kind for x in train} | {x.kind for x in valid}
    if kinds != {config.kind}:
        raise ValueError(f"loss {config.loss!r} trains on {config.kind} data, got {sorted(kinds)}")
    if resume is None:
        if params is None:
            if vocab_size is None:
                raise ValueError("need params or vocab_size to initialize")
            params = init_params(config, vocab_size)
        params = {k: v.copy() for k, v in params.items()}
        state = TrainState(
            0, params, AdaGradState.for_params(params, config.lr, config.eps),
            {k: v.copy() for k, v in params.items()},
        )
    else:
        state = resume
    frozen = ("embed",) if config.freeze_embeddings else ()
    eval_set = valid or train
    start = time.perf_counter()

    while not state.done and state.epoch < config.max_epochs:
        epoch = state.epoch + 1
        order = epoch_order(config.seed, epoch, len(train))
        total, count = 0.0, 0
        for step, lo in enumerate(range(0, len(train), config.batch_size)):
            batch = [train[k] for k in order[lo : lo + config.batch_size]]
            try:
                loss, grads, _ = batch_objective(batch, state.params)
            except NumericError as exc:
                raise TrainingError(f"epoch {epoch} step {step}: {exc}") from exc
            loss = float(loss)
            if not math.isfinite(loss):
                raise TrainingError(f"epoch {epoch} step {step}: non-finite loss {loss}")
            adagrad_step(state.params, grads, state.optimizer, frozen)
            total += loss * len(batch)
            count += len(batch)
        value, higher = validation_metric(state.params, eval_set, config.kind)
        row = {
            "epoch": epoch,
            "train_loss": total / count,
            "validation_metric": value,
            "wall_seconds": time.perf_counter() - start,
        }
        state.history.append(row)
        state.epoch = epoch
        if _better(value, state.best_metric, higher):
            state.best_metric, state.best_epoch, state.bad_epochs = value, epoch, 0
            state.best_params = {k: v.copy() for k, v in state.params.items()}
        else:
            state.bad_epochs += 1
            if state.bad_epochs >= config.patience:
                state.done = True
        log.info("epoch %d loss %.6f valid %.6f", epoch, row["train_loss"], value)
        if on_epoch is not None:
            on_epoch(state)
    return state.best_params, state.history


def with_overrides(config, **kw):
    return replace(config, **{k: v for k, v in kw.items() if v is not None})
