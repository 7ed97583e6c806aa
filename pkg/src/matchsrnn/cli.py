"""Command-line driver: ``matchsrnn <command> [--config FILE] [flags]``.

Settings resolve as built-in defaults < ``--config`` file (flat
``key = value`` lines) < explicit flags.  The fully resolved settings are
written to ``manifest.json`` in the output directory before any heavy work.

Exit codes: 0 success, 1 contract/input error, 2 numeric/training failure.
"""

import argparse
import json
import logging
import subprocess
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__
from . import io as mio
from . import lcs, metrics, synthetic
from .grad import fd_check
from .linalg import NumericError, ShapeError
from .model import check_params, dims, exact_lcs_mode, forward_batch, predict, spatial_gru_forward
from .train import (
    LOSS_KINDS,
    TrainConfig,
    TrainingError,
    TrainInstance,
    TrainState,
    batch_objective,
    init_params,
    loss_with_signature,
    ranklists_from_triples,
    train_loop,
)

log = logging.getLogger("matchsrnn")

TRAIN_KEYS = [f.name for f in fields(TrainConfig)]

COMMAND_DEFAULTS = {
    "gradcheck": {
        "instances": 20,
        "max_entries": 12,
        "fd_eps": 1e-5,
        "tol": 1e-5,
        "init_scale": 0.5,
        "vocab_size": 8,
        "corrupt": "",
    },
    "simulate-lcs": {
        "n_train": 10000,
        "n_valid": 1000,
        "n_test": 1000,
        "alphabet": 10,
        "min_len": 5,
        "max_len": 20,
        "path_pairs": 200,
        "example": "ABCDE,FACGD",
        "exact_mode": False,
        "max_epochs": 30,
        "patience": 10,
        "lr": 0.05,
    },
    "gen-data": {
        "task": "lcs",
        "n_train": 10000,
        "n_valid": 1000,
        "n_test": 1000,
        "alphabet": 10,
        "min_len": 5,
        "max_len": 20,
        "vocab_size": 30,
        "planted": 4,
        "negatives": 4,
    },
    "train": {"data": "", "resume": "", "embeddings": "", "vocab": "", "valid_split": "valid"},
    "eval": {"checkpoint": "", "data": "", "split": "test"},
    "visualize": {"checkpoint": "", "pair": "ABCDE,FACGD", "vocab": "", "exact_mode": False},
}


class InputError(ValueError):
    pass


# ---------------------------------------------------------------------------
# settings


def _coerce(value, default):
    if isinstance(default, bool):
        low = str(value).strip().lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise InputError(f"not a boolean: {value!r}")
    if isinstance(default, int):
        return int(value)
    if isinstance(default, float):
        return float(value)
    return str(value)


def read_config_file(path):
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise mio.ParseError(f"{path}: expected 'key = value'", lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def resolve_settings(command, args):
    base = TrainConfig().to_dict()
    base.update(COMMAND_DEFAULTS[command])
    if args.config:
        for key, value in read_config_file(args.config).items():
            if key not in base:
                raise InputError(f"unknown setting {key!r} for {command}")
            base[key] = _coerce(value, base[key])
    for key, value in vars(args).items():
        if value is None or key in ("command", "config", "func", "verbose"):
            continue
        if key == "dims":
            try:
                base["d_e"], base["c"], base["d"] = (int(v) for v in value.split(","))
            except ValueError as exc:
                raise InputError(f"--dims expects d_e,c,d, got {value!r}") from exc
            continue
        if key in base:
            base[key] = _coerce(value, base[key]) if not isinstance(value, bool) else value
    return base


def train_config(settings):
    return TrainConfig(**{k: settings[k] for k in TRAIN_KEYS})


def version_string():
    try:
        res = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if res.returncode == 0 and res.stdout.strip():
            return f"{__version__}+{res.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


class Run:
    """Output directory plus the manifest that describes the run."""

    def __init__(self, command, settings, argv):
        self.out = Path(settings["out_dir"])
        self.out.mkdir(parents=True, exist_ok=True)
        self.started = time.time()
        self.manifest = {
            "command": command,
            "argv": list(argv),
            "settings": settings,
            "seed": settings["seed"],
            "version": version_string(),
            "started_at": time.strftime("%Y-%m-%dT%H:%M:%S", time.localtime(self.started)),
            "outputs": [],
        }
        self.write_manifest()

    def path(self, name):
        self.manifest["outputs"].append(name)
        return self.out / name

    def write_manifest(self, **extra):
        self.manifest.update(extra)
        mio.write_json(self.out / "manifest.json", self.manifest)

    def finish(self, status):
        self.write_manifest(status=status, wall_seconds=time.time() - self.started)


def _tokens(text, vocab):
    parts = text.split() if any(ch.isspace() for ch in text) else list(text)
    index = {tok: k for k, tok in enumerate(vocab)}
    unknown = [p for p in parts if p not in index]
    if unknown:
        raise InputError(f"tokens not in vocabulary: {sorted(set(unknown))}")
    if not parts:
        raise InputError("empty text")
    return tuple(index[p] for p in parts)


def _split_pair(pair):
    if "," not in pair:
        raise InputError(f"--pair expects 'TEXT1,TEXT2', got {pair!r}")
    a, b = pair.split(",", 1)
    return a.strip(), b.strip()


def gate_rows(z):
    """CSV text for a (m, n, 4, d) gate array, averaged over dimensions."""
    g = np.asarray(z).mean(axis=-1)
    rows = ["i,j,z_i,z_l,z_t,z_d"]
    for i in range(g.shape[0]):
        for j in range(g.shape[1]):
            rows.append(f"{i + 1},{j + 1}," + ",".join(repr(float(v)) for v in g[i, j]))
    return "\n".join(rows) + "\n"


# ---------------------------------------------------------------------------
# gradcheck


def gradcheck_instance(k, settings):
    """Seeded random instance number ``k``: dims, loss, params and data."""
    rng = np.random.default_rng([settings["seed"], k])
    loss = ("square", "hinge", "xent")[k % 3]
    bidirectional = settings["bidirectional"] or k % 2 == 1
    d_e, c, d = (int(v) for v in rng.integers(2, 5, size=3))
    cfg = TrainConfig(d_e=d_e, c=c, d=d, loss=loss, bidirectional=bidirectional, init_scale=settings["init_scale"])
    V = settings["vocab_size"]
    params = init_params(cfg, V, seed=int(rng.integers(2**31)))

    def seq():
        return tuple(int(t) for t in rng.integers(0, V, size=int(rng.integers(2, 7))))

    if loss == "square":
        inst = [TrainInstance.regression(seq(), seq(), rng.uniform())]
    elif loss == "hinge":
        inst = [TrainInstance.ranking(seq(), seq(), seq())]
    else:
        inst = [TrainInstance.classification(seq(), seq(), int(rng.integers(2)))]
    return cfg, params, inst


def run_gradcheck(settings, corrupt=""):
    report = None
    for k in range(settings["instances"]):
        _, params, inst = gradcheck_instance(k, settings)
        _, grads, _ = batch_objective(inst, params)
        if corrupt and corrupt in grads:
            grads[corrupt] = grads[corrupt] * 1.01 + 1e-3
        rep = fd_check(
            params,
            lambda p, inst=inst: loss_with_signature(inst, p),
            grads,
            eps=settings["fd_eps"],
            max_entries=settings["max_entries"],
            seed=k,
        )
        report = rep if report is None else report.merge(rep)
    return report


def cmd_gradcheck(settings, run):
    report = run_gradcheck(settings, settings["corrupt"])
    ok = report.passed(settings["tol"])
    text = report.table() + f"\nmax relative error {report.max_rel_error:.3e} (tol {settings['tol']:g}): {'PASS' if ok else 'FAIL'}\n"
    run.path("gradcheck.txt").write_text(text, encoding="utf-8")
    print(text, end="")
    run.write_manifest(max_rel_error=report.max_rel_error, passed=ok)
    return 0 if ok else 2


# ---------------------------------------------------------------------------
# LCS simulation


def simulation_data(settings):
    ds = lcs.gen_dataset(
        settings["n_train"], settings["n_test"], settings["alphabet"],
        settings["min_len"], settings["max_len"], settings["seed"],
    )
    rng = np.random.default_rng([settings["seed"], 1])
    valid = lcs.gen_pairs(settings["n_valid"], rng, settings["alphabet"], settings["min_len"], settings["max_len"])
    return ds, valid


def path_study(pairs, lattice_fn, seed):
    """Mean gate-vs-DP path agreement, and the same for random monotone paths."""
    rng = np.random.default_rng([seed, 2])
    rows = []
    for n, (x, y) in enumerate(pairs):
        dp = lcs.dp_backtrace(lcs.lcs_table(x, y), x, y)
        gate = lcs.gate_backtrace(lattice_fn(x, y))
        rand = lcs.random_monotone_path(len(x), len(y), rng)
        rows.append((n, lcs.path_agreement(gate, dp), lcs.path_agreement(rand, dp)))
    return rows


def cmd_simulate_lcs(settings, run):
    ds, valid = simulation_data(settings)
    run.write_manifest(dataset=ds.meta)
    cfg = train_config(settings)
    xs, ys = lcs.encode(_split_pair(settings["example"])[0]), lcs.encode(_split_pair(settings["example"])[1])
    test_pairs = [(x, y) for x, y, _ in ds.test]
    labels = np.array([l for *_, l in ds.test])
    history = []

    if settings["exact_mode"]:
        preds = np.array([exact_lcs_mode(x, y).h[-1, -1] / max(len(x), len(y)) for x, y in test_pairs])
        lattice_fn = exact_lcs_mode
        example = exact_lcs_mode(xs, ys)
        example_grid, example_z = example.h, example.z
        params = None
    else:
        train = [TrainInstance.regression(x, y, l) for x, y, l in ds.train]
        val = [TrainInstance.regression(x, y, l) for x, y, l in valid]
        params, history = train_loop(train, val, cfg, vocab_size=settings["alphabet"])
        mio.save_checkpoint(run.path("model.ckpt"), params, config=cfg.to_dict())
        mio.write_history_csv(run.path("history.csv"), history)
        preds = predict(test_pairs, params)[:, 0]

        def lattice_fn(x, y):
            return spatial_gru_forward(forward_batch([x], [y], params).S[0], params)

        example = lattice_fn(xs, ys)
        dim = mio.select_viz_dimension(params)
        example_grid, example_z = example.h[..., dim], example.z
        run.write_manifest(viz_dimension=dim)

    with open(run.path("predictions.csv"), "w", encoding="utf-8") as fh:
        fh.write("index,s1,s2,label,prediction\n")
        for n, ((x, y), lab, pr) in enumerate(zip(test_pairs, labels, preds)):
            fh.write(f"{n},{lcs.decode(x)},{lcs.decode(y)},{lab!r},{float(pr)!r}\n")

    rows = path_study(test_pairs[: settings["path_pairs"]], lattice_fn, settings["seed"])
    with open(run.path("paths.csv"), "w", encoding="utf-8") as fh:
        fh.write("index,gate_vs_dp,random_vs_dp\n")
        for n, a, b in rows:
            fh.write(f"{n},{a!r},{b!r}\n")

    dp_table = lcs.lcs_table(xs, ys)
    dp_path = lcs.dp_backtrace(dp_table, xs, ys)
    gate_path = lcs.gate_backtrace(example)
    mio.emit_heatmap(example_grid, run.path("example_lattice.csv"), "csv")
    mio.emit_heatmap(example_grid, run.path("example_lattice.pgm"), "pgm")
    mio.emit_heatmap(dp_table.c, run.path("example_dp.csv"), "csv")
    run.path("example_gates.csv").write_text(gate_rows(example_z), encoding="utf-8")
    mio.write_path_csv(run.path("example_path_gate.csv"), gate_path)
    mio.write_path_csv(run.path("example_path_dp.csv"), dp_path)

    example_pred = (
        float(example.h[-1, -1]) / max(len(xs), len(ys))
        if settings["exact_mode"]
        else float(predict([(xs, ys)], params)[0, 0])
    )
    result = {
        "test_mse": float(((preds - labels) ** 2).mean()),
        "test_mae": float(np.abs(preds - labels).mean()),
        "test_pearson": metrics.pearson(preds, labels),
        "n_test": len(labels),
        "path_agreement_gate": float(np.mean([r[1] for r in rows])),
        "path_agreement_random": float(np.mean([r[2] for r in rows])),
        "path_pairs": len(rows),
        "example_prediction": example_pred,
        "example_lcs": dp_table.length,
        "example_rounded_lcs": int(round(example_pred * max(len(xs), len(ys)))),
        "example_path_agreement": lcs.path_agreement(gate_path, dp_path),
        "epochs_run": len(history),
    }
    mio.write_json(run.path("metrics.json"), result)
    for k, v in result.items():
        print(f"{k:<24} {v}")
    return 0


# ---------------------------------------------------------------------------
# data generation, training, evaluation


def cmd_gen_data(settings, run):
    task, seed = settings["task"], settings["seed"]
    if task == "lcs":
        ds, valid = simulation_data(settings)
        mk = lambda rows: [TrainInstance.regression(x, y, l) for x, y, l in rows]  # noqa: E731
        splits = {"train": mk(ds.train), "valid": mk(valid), "test": mk(ds.test)}
        vocab_size, meta = settings["alphabet"], ds.meta
    elif task in ("ranking", "classification"):
        vocab_size = settings["vocab_size"]
        common = dict(vocab_size=vocab_size, planted=settings["planted"])
        sizes = {"train": settings["n_train"], "valid": settings["n_valid"], "test": settings["n_test"]}
        splits = {}
        for k, (name, size) in enumerate(sizes.items()):
            if task == "ranking":
                splits[name] = synthetic.gen_ranking(size, negatives=settings["negatives"], seed=seed * 10 + k, **common)
            else:
                splits[name] = synthetic.gen_classification(size, seed=seed * 10 + k, **common)
        meta = {"seed": seed, "planted": settings["planted"], "normalization": "none"}
    else:
        raise InputError(f"unknown task {task!r} (lcs, ranking, classification)")
    mio.write_dataset(run.path("data.jsonl"), splits, vocab_size, task=task, **meta)
    mio.save_vocab(run.path("vocab.txt"), mio.default_vocab(vocab_size))
    print(f"wrote {sum(len(v) for v in splits.values())} instances to {run.out / 'data.jsonl'}")
    return 0


def _state_from_checkpoint(ck):
    ex = ck.extra
    return TrainState(
        epoch=ex["epoch"],
        params={k: v.copy() for k, v in ck.params.items()},
        optimizer=ck.optimizer,
        best_params=ck.best_params,
        best_metric=ex["best_metric"],
        best_epoch=ex["best_epoch"],
        bad_epochs=ex["bad_epochs"],
        history=ex["history"],
        done=ex["done"],
    )


def cmd_train(settings, run):
    if not settings["data"]:
        raise InputError("train needs --data")
    header, splits = mio.read_dataset(settings["data"])
    cfg = train_config(settings)
    train = splits.get("train", [])
    valid = splits.get(settings["valid_split"], [])
    kinds = {x.kind for x in train + valid}
    if kinds != {cfg.kind}:
        raise InputError(f"loss {cfg.loss!r} needs {cfg.kind} data; dataset holds {sorted(kinds)}")
    vocab_size = header["vocab_size"]
    resume = None
    if settings["resume"]:
        ck = mio.load_checkpoint(settings["resume"])
        if "epoch" not in ck.extra or ck.optimizer is None:
            raise InputError(f"{settings['resume']} carries no training state to resume from")
        check_params(ck.params)
        if dims(ck.params).vocab_size != vocab_size:
            raise InputError("checkpoint vocabulary size differs from the dataset's")
        resume = _state_from_checkpoint(ck)
    params = None
    if settings["embeddings"]:
        vocab = mio.load_vocab(settings["vocab"]) if settings["vocab"] else mio.default_vocab(vocab_size)
        loaded = mio.load_embeddings(settings["embeddings"], vocab, cfg.init_scale, cfg.seed)
        if loaded.matrix.shape[1] != cfg.d_e:
            raise InputError(f"embedding file has dimension {loaded.matrix.shape[1]}, config d_e = {cfg.d_e}")
        params = init_params(cfg, vocab_size, embeddings=loaded.matrix)
        run.write_manifest(embeddings_missing=loaded.missing)

    ckpt = run.path("checkpoint.ckpt")

    def on_epoch(state):
        extra = {
            "epoch": state.epoch, "best_metric": state.best_metric, "best_epoch": state.best_epoch,
            "bad_epochs": state.bad_epochs, "history": state.history, "done": state.done,
        }
        mio.save_checkpoint(ckpt, state.params, cfg.to_dict(), state.optimizer, state.best_params, extra)

    best, history = train_loop(
        train, valid, cfg, params=params, resume=resume, on_epoch=on_epoch, vocab_size=vocab_size
    )
    mio.save_checkpoint(run.path("best.ckpt"), best, config=cfg.to_dict())
    mio.write_history_csv(run.path("history.csv"), history)
    for row in history:
        print(f"epoch {row['epoch']:>3}  loss {row['train_loss']:.6f}  valid {row['validation_metric']:.6f}")
    return 0


def evaluate(params, instances):
    kind = instances[0].kind
    if kind == "ranking":
        lists = ranklists_from_triples(instances, params)
        return {"P@1": (metrics.p_at_1(lists), len(lists)), "MRR": (metrics.mrr(lists), len(lists))}
    out = predict([(x.s1, x.s2) for x in instances], params)
    if kind == "classification":
        acc = metrics.accuracy(out.argmax(axis=1), [x.label for x in instances])
        return {"Acc": (acc, len(instances))}
    y = np.array([x.y for x in instances])
    pred = out[:, 0]
    return {
        "MSE": (float(((pred - y) ** 2).mean()), len(y)),
        "MAE": (float(np.abs(pred - y).mean()), len(y)),
        "Pearson": (metrics.pearson(pred, y), len(y)),
    }


def cmd_eval(settings, run):
    if not settings["checkpoint"] or not settings["data"]:
        raise InputError("eval needs --checkpoint and --data")
    ck = mio.load_checkpoint(settings["checkpoint"])
    try:
        dm = check_params(ck.params)
    except (ShapeError, KeyError) as exc:
        raise InputError(f"checkpoint parameters are inconsistent: {exc}") from exc
    want = ck.config or {}
    for key, have in (("d_e", dm.d_e), ("c", dm.c), ("d", dm.d), ("bidirectional", dm.bidirectional)):
        if key in want and want[key] != have:
            raise InputError(f"checkpoint config {key}={want[key]} but arrays have {key}={have}")
    _, splits = mio.read_dataset(settings["data"], vocab_size=dm.vocab_size)
    if settings["split"] not in splits:
        raise InputError(f"dataset has no split {settings['split']!r} (has {sorted(splits)})")
    instances = splits[settings["split"]]
    if instances[0].kind == "classification" and dm.n_out != 2:
        raise InputError("classification data needs a two-output (xent) model")
    report = evaluate(ck.params, instances)
    run.path("metrics.txt").write_text(metrics.metric_report(report), encoding="utf-8")
    run.path("metrics.csv").write_text(metrics.metric_report(report, "csv"), encoding="utf-8")
    print(metrics.metric_report(report), end="")
    return 0


def cmd_visualize(settings, run):
    a, b = _split_pair(settings["pair"])
    if settings["exact_mode"]:
        vocab = mio.load_vocab(settings["vocab"]) if settings["vocab"] else mio.default_vocab(10)
        x, y = _tokens(a, vocab), _tokens(b, vocab)
        lat = exact_lcs_mode(x, y)
        grid, dim = lat.h, 0
    else:
        if not settings["checkpoint"]:
            raise InputError("visualize needs --checkpoint (or --exact-mode)")
        ck = mio.load_checkpoint(settings["checkpoint"])
        dm = check_params(ck.params)
        vocab = mio.load_vocab(settings["vocab"]) if settings["vocab"] else mio.default_vocab(dm.vocab_size)
        x, y = _tokens(a, vocab), _tokens(b, vocab)
        lat = spatial_gru_forward(forward_batch([x], [y], ck.params).S[0], ck.params)
        dim = mio.select_viz_dimension(ck.params)
        grid = lat.h[..., dim]
    path = lcs.gate_backtrace(lat)
    mio.emit_heatmap(grid, run.path("lattice.csv"), "csv")
    mio.emit_heatmap(grid, run.path("lattice.pgm"), "pgm")
    mio.write_path_csv(run.path("path.csv"), path)
    run.path("gates.csv").write_text(gate_rows(lat.z), encoding="utf-8")
    run.write_manifest(viz_dimension=dim)
    print(f"dimension {dim}; path {' '.join(f'({i},{j})' for i, j in path.positions)}")
    return 0


COMMANDS = {
    "gradcheck": cmd_gradcheck,
    "simulate-lcs": cmd_simulate_lcs,
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "eval": cmd_eval,
    "visualize": cmd_visualize,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="matchsrnn", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key = value settings file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out-dir", dest="out_dir", default=f"runs/{name}")
        p.add_argument("--bidirectional", action="store_true", default=None)
        p.add_argument("--exact-mode", dest="exact_mode", action="store_true", default=None)
        p.add_argument("--dims", help="d_e,c,d")
        p.add_argument("--loss", choices=sorted(LOSS_KINDS))
        p.add_argument("--lr", type=float)
        p.add_argument("--max-epochs", dest="max_epochs", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("-v", "--verbose", action="store_true")
        if name == "gradcheck":
            p.add_argument("--instances", type=int)
            p.add_argument("--corrupt", help="test hook: perturb the analytic gradient of this array")
        if name == "simulate-lcs":
            p.add_argument("--n-train", dest="n_train", type=int)
            p.add_argument("--n-test", dest="n_test", type=int)
        if name == "gen-data":
            p.add_argument("--task", choices=["lcs", "ranking", "classification"])
            p.add_argument("--n-train", dest="n_train", type=int)
            p.add_argument("--n-test", dest="n_test", type=int)
        if name in ("train", "eval"):
            p.add_argument("--data")
        if name == "train":
            p.add_argument("--resume")
            p.add_argument("--embeddings")
            p.add_argument("--vocab")
        if name in ("eval", "visualize"):
            p.add_argument("--checkpoint")
        if name == "eval":
            p.add_argument("--split")
        if name == "visualize":
            p.add_argument("--pair")
            p.add_argument("--vocab")
    return parser


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        settings = resolve_settings(args.command, args)
        settings["out_dir"] = args.out_dir
        run = Run(args.command, settings, argv)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        code = COMMANDS[args.command](settings, run)
    except (NumericError, TrainingError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        run.finish("numeric-failure")
        return 2
    except (ValueError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        run.finish("input-error")
        return 1
    run.finish("ok" if code == 0 else "failed")
    return code


if __name__ == "__main__":
    sys.exit(main())
