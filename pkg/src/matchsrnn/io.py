"""Files: datasets, vocabularies, embeddings, checkpoints, heatmaps, paths.

Checkpoint byte layout (all integers little-endian)::

    8 bytes   magic  b"MSRNNCKP"
    4 bytes   uint32 format version (currently 1)
    8 bytes   uint64 length H of the JSON header
    H bytes   UTF-8 JSON: {"config": ..., "arrays": [{"name", "group", "shape"}, ...],
                           "optimizer": {...} | null, "extra": {...}}
    rest      every array in header order as raw '<f8' values, C order

Dataset files are JSON lines.  The first line is a header object with
``"type": "header"``, the vocabulary size and generator metadata; each
following line is one instance.
"""

import csv
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .lcs import ALPHABET
from .train import AdaGradState, TrainInstance

log = logging.getLogger(__name__)

MAGIC = b"MSRNNCKP"
VERSION = 1
DATASET_FORMAT = "matchsrnn-dataset"


class ParseError(ValueError):
    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


class UnsupportedVersionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# vocabulary


def default_vocab(size=10):
    return list(ALPHABET[:size]) if size <= len(ALPHABET) else [f"t{k}" for k in range(size)]


def save_vocab(path, vocab):
    Path(path).write_text("".join(f"{tok}\n" for tok in vocab), encoding="utf-8")


def load_vocab(path):
    toks = Path(path).read_text(encoding="utf-8").split("\n")
    vocab = [t for t in toks if t]
    if len(set(vocab)) != len(vocab):
        raise ParseError(f"duplicate tokens in vocabulary {path}")
    return vocab


# ---------------------------------------------------------------------------
# datasets


def _record(x):
    rec = {"kind": x.kind, "s1": list(x.s1), "s2": list(x.s2)}
    if x.kind == "regression":
        rec["y"] = x.y
    elif x.kind == "classification":
        rec["label"] = x.label
    else:
        rec["s2_neg"] = list(x.s2_neg)
        if x.qid is not None:
            rec["qid"] = x.qid
    return rec


def _instance(rec, lineno):
    try:
        kind = rec["kind"]
        if kind == "regression":
            return TrainInstance.regression(rec["s1"], rec["s2"], rec["y"])
        if kind == "classification":
            return TrainInstance.classification(rec["s1"], rec["s2"], rec["label"])
        if kind == "ranking":
            return TrainInstance.ranking(rec["s1"], rec["s2"], rec["s2_neg"], rec.get("qid"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad record: {exc}", lineno) from exc
    raise ParseError(f"unknown kind {kind!r}", lineno)


def write_dataset(path, splits, vocab_size, **meta):
    """Write ``{split_name: [TrainInstance, ...]}`` to one JSON-lines file."""
    header = {"type": "header", "format": DATASET_FORMAT, "version": VERSION, "vocab_size": vocab_size}
    header.update(meta)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for split, instances in splits.items():
            for x in instances:
                rec = _record(x)
                rec["split"] = split
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


def read_dataset(path, vocab_size=None):
    """Return ``(header, {split: [TrainInstance, ...]})``.

    Token ids are validated against the header's vocabulary size, and that
    size against ``vocab_size`` when given.
    """
    splits = {}
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ParseError(f"{path} is empty")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise ParseError(f"header is not JSON: {exc}", 1) from exc
    if header.get("type") != "header" or header.get("format") != DATASET_FORMAT:
        raise ParseError("first record must be a dataset header", 1)
    if header.get("version") != VERSION:
        raise UnsupportedVersionError(f"dataset version {header.get('version')} (supported: {VERSION})")
    size = header["vocab_size"]
    if vocab_size is not None and vocab_size != size:
        raise ValueError(f"dataset was built for a vocabulary of {size} tokens, model has {vocab_size}")
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"not JSON: {exc}", lineno) from exc
        x = _instance(rec, lineno)
        for seq in (x.s1, x.s2, x.s2_neg or ()):
            if any(not isinstance(t, int) or not 0 <= t < size for t in seq):
                raise ParseError(f"token id outside [0, {size})", lineno)
        splits.setdefault(rec.get("split", "train"), []).append(x)
    return header, splits


# ---------------------------------------------------------------------------
# embeddings


@dataclass
class EmbeddingLoad:
    matrix: np.ndarray
    missing: int
    duplicates: list = field(default_factory=list)


def load_embeddings(path, vocab, init_scale=0.1, seed=0):
    """Read word2vec text vectors into rows aligned with ``vocab``.

    A leading ``count dim`` line is optional.  Vocabulary tokens absent from
    the file get Uniform(-init_scale, init_scale) rows; the number of such
    rows is returned as ``missing``.  A token listed twice keeps its last
    vector and is reported in ``duplicates``.
    """
    index = {tok: k for k, tok in enumerate(vocab)}
    found = {}
    dim = None
    seen = set()
    duplicates = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                dim = int(parts[1])
                continue
            tok, vals = parts[0], parts[1:]
            try:
                vec = np.array([float(v) for v in vals], dtype=np.float64)
            except ValueError as exc:
                raise ParseError(f"non-numeric vector entry for {tok!r}", lineno) from exc
            if vec.size == 0:
                raise ParseError(f"token {tok!r} has no vector", lineno)
            if dim is None:
                dim = vec.size
            elif vec.size != dim:
                raise ValueError(f"line {lineno}: vector of length {vec.size}, expected {dim}")
            if tok in seen:
                duplicates.append(tok)
                log.warning("embedding for %r appears more than once; keeping line %d", tok, lineno)
            seen.add(tok)
            if tok in index:
                found[index[tok]] = vec
    if dim is None:
        raise ParseError(f"{path} holds no vectors")
    rng = np.random.default_rng(seed)
    matrix = rng.uniform(-init_scale, init_scale, size=(len(vocab), dim))
    for row, vec in found.items():
        matrix[row] = vec
    missing = len(vocab) - len(found)
    if missing:
        log.warning("%d of %d vocabulary tokens had no pre-trained vector", missing, len(vocab))
    return EmbeddingLoad(matrix, missing, duplicates)


# ---------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    params: dict
    config: dict = field(default_factory=dict)
    optimizer: AdaGradState = None
    best_params: dict = None
    extra: dict = field(default_factory=dict)
    version: int = VERSION


def save_checkpoint(path, params, config=None, optimizer=None, best_params=None, extra=None):
    groups = [("params", params)]
    if optimizer is not None:
        groups.append(("adagrad", optimizer.accum))
    if best_params is not None:
        groups.append(("best", best_params))
    arrays, blobs = [], []
    for group, named in groups:
        for name, arr in named.items():
            arr = np.ascontiguousarray(arr, dtype="<f8")
            arrays.append({"name": name, "group": group, "shape": list(arr.shape)})
            blobs.append(arr.tobytes())
    header = {
        "config": config or {},
        "arrays": arrays,
        "optimizer": None
        if optimizer is None
        else {"lr": optimizer.lr, "eps": optimizer.eps, "steps": optimizer.steps},
        "extra": extra or {},
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<IQ", VERSION, len(hbytes)) + hbytes)
        for blob in blobs:
            fh.write(blob)


def load_checkpoint(path):
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ParseError(f"{path}: not a checkpoint (bad magic bytes)")
    if len(data) < 20:
        raise ParseError(f"{path}: truncated header")
    version, hlen = struct.unpack("<IQ", data[8:20])
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: checkpoint version {version} (supported: {VERSION})")
    if len(data) < 20 + hlen:
        raise ParseError(f"{path}: truncated header")
    try:
        header = json.loads(data[20 : 20 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"{path}: corrupt header: {exc}") from exc
    offset = 20 + hlen
    groups = {}
    for spec in header["arrays"]:
        shape = tuple(spec["shape"])
        nbytes = 8 * int(np.prod(shape, dtype=np.int64))
        if offset + nbytes > len(data):
            raise ParseError(f"{path}: truncated at array {spec['name']!r}")
        arr = np.frombuffer(data, dtype="<f8", count=nbytes // 8, offset=offset).reshape(shape)
        groups.setdefault(spec["group"], {})[spec["name"]] = arr.astype(np.float64)
        offset += nbytes
    if offset != len(data):
        raise ParseError(f"{path}: {len(data) - offset} trailing bytes")
    opt = None
    if header["optimizer"] is not None:
        o = header["optimizer"]
        opt = AdaGradState(groups.get("adagrad", {}), o["lr"], o["eps"], o["steps"])
    return Checkpoint(
        params=groups.get("params", {}),
        config=header["config"],
        optimizer=opt,
        best_params=groups.get("best"),
        extra=header["extra"],
        version=version,
    )


# ---------------------------------------------------------------------------
# heatmaps, paths and tables


def emit_heatmap(grid, path, fmt="csv"):
    """Write a 2-D grid as CSV (raw values) or plain PGM (min-max to 0..255)."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2:
        raise ValueError(f"heatmap needs a 2-D grid, got shape {grid.shape}")
    if not np.isfinite(grid).all():
        raise ValueError("heatmap grid has non-finite values")
    if fmt == "csv":
        with open(path, "w", encoding="utf-8") as fh:
            for row in grid:
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
    elif fmt == "pgm":
        pixels = heatmap_pixels(grid)
        rows = [" ".join(str(int(v)) for v in row) for row in pixels]
        text = f"P2\n{grid.shape[1]} {grid.shape[0]}\n255\n" + "\n".join(rows) + "\n"
        Path(path).write_text(text, encoding="ascii")
    else:
        raise ValueError(f"unknown heatmap format {fmt!r}")


def heatmap_pixels(grid):
    lo, hi = grid.min(), grid.max()
    if hi == lo:
        return np.full(grid.shape, 128, dtype=np.int64)
    return np.rint((grid - lo) / (hi - lo) * 255).astype(np.int64)


def read_heatmap_csv(path):
    with open(path, encoding="utf-8") as fh:
        return np.array([[float(v) for v in row] for row in csv.reader(fh) if row])


def read_pgm(path):
    tokens = Path(path).read_text(encoding="ascii").split()
    if tokens[0] != "P2":
        raise ParseError(f"{path}: not a plain PGM file")
    width, height, _ = (int(t) for t in tokens[1:4])
    return np.array([int(t) for t in tokens[4:]], dtype=np.int64).reshape(height, width)


def select_viz_dimension(params):
    """Hidden dimension (0-based) with the largest |weight| in the first score row.

    Only the forward lattice's columns are considered, so the index is
    always valid for that lattice.  Ties go to the lowest index.
    """
    W = params["score_W"]
    d = params["fwd.gru_b"].shape[0]
    return int(np.argmax(np.abs(W[0, :d])))


def write_path_csv(path, match_path):
    Path(path).write_text(match_path.to_csv(), encoding="utf-8")


def read_path_csv(path):
    from .lcs import MatchPath

    with open(path, encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    positions = [(int(r["i"]), int(r["j"])) for r in rows]
    moves = [r["move"] for r in rows[:-1]]
    return MatchPath(positions, moves)


def write_history_csv(path, history):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "validation_metric", "wall_seconds"])
        w.writeheader()
        for row in history:
            w.writerow(row)


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
