"""Acceptance suite: one PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v`` or directly as a script.
Criteria 3 and 4 share one full-size LCS training run (several minutes on a
single core); criterion 6 trains two ranking models (a few minutes).
"""

import json
import sys
from pathlib import Path

import numpy as np
import pytest

HERE = Path(__file__).parent
sys.path.insert(0, str(HERE))
sys.path.insert(0, str(HERE.parent / "scripts"))

from random_baselines import random_guess  # noqa: E402
from ranking_demo import RankingDemoConfig  # noqa: E402
from ranking_demo import run as ranking_run  # noqa: E402
from test_lcs import test_table_invariants as dp_monotone  # noqa: E402
from test_linalg import test_softmax_by_row_shift_invariance as softmax_shift  # noqa: E402
from test_model import test_gate_simplex_and_reset_range as gate_simplex  # noqa: E402
from test_model import test_lattice_state_is_bounded as lattice_bounded  # noqa: E402
from test_train import test_adagrad_accumulators_never_decrease as adagrad_monotone  # noqa: E402

from matchsrnn import io as mio  # noqa: E402
from matchsrnn.cli import main  # noqa: E402
from matchsrnn.lcs import dp_backtrace, gate_backtrace, lcs_table  # noqa: E402
from matchsrnn.model import exact_lcs_mode  # noqa: E402

RESULTS = {}


def report(n, ok, detail, out=None):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    RESULTS[n] = line
    if out is not None:
        with out.disabled():
            print("\n" + line)
    else:
        print(line)
    return ok


def cli(*argv):
    return main([str(a) for a in argv])


# --- 1 -------------------------------------------------------------------


def check_gradients(tmp):
    code = cli("gradcheck", "--instances", 24, "--out-dir", tmp / "gc")
    man = json.loads((tmp / "gc" / "manifest.json").read_text())
    err = man["max_rel_error"]
    return code == 0 and err <= 1e-5, f"24 instances, 3 losses, max rel error {err:.2e} (tol 1e-5)"


def test_criterion_1_gradients(tmp_path, capsys):
    ok, detail = check_gradients(tmp_path)
    assert report(1, ok, detail, capsys), detail


# --- 2 -------------------------------------------------------------------


def check_lcs_oracle(n_pairs=1000, seed=0):
    rng = np.random.default_rng(seed)
    grid_bad = path_bad = 0
    for _ in range(n_pairs):
        x = tuple(int(t) for t in rng.integers(0, 10, size=int(rng.integers(1, 31))))
        y = tuple(int(t) for t in rng.integers(0, 10, size=int(rng.integers(1, 31))))
        lat = exact_lcs_mode(x, y)
        table = lcs_table(x, y)
        grid_bad += not np.array_equal(lat.h, table.c)
        gate = gate_backtrace(lat).matched_cells(x, y)
        path_bad += gate != dp_backtrace(table, x, y).matched_cells(x, y)
    ok = grid_bad == 0 and path_bad == 0
    return ok, f"{n_pairs} pairs, grid mismatches {grid_bad}, matched-cell path mismatches {path_bad}"


def test_criterion_2_lcs_oracle(capsys):
    ok, detail = check_lcs_oracle()
    assert report(2, ok, detail, capsys), detail


# --- 3 and 4 ---------------------------------------------------------------


@pytest.fixture(scope="module")
def lcs_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("lcs")
    code = cli("simulate-lcs", "--out-dir", out)
    assert code == 0
    return json.loads((out / "metrics.json").read_text())


def judge_lcs_fit(m):
    ok = m["test_pearson"] >= 0.90 and m["test_mae"] <= 0.08
    detail = (
        f"Pearson {m['test_pearson']:.4f} (>= 0.90), MAE {m['test_mae']:.4f} (<= 0.08); "
        f"ABCDE/FACGD rounds to {m['example_rounded_lcs']} (LCS {m['example_lcs']})"
    )
    return ok, detail


def judge_paths(m):
    gap = m["path_agreement_gate"] - m["path_agreement_random"]
    detail = (
        f"gate {m['path_agreement_gate']:.3f} vs random {m['path_agreement_random']:.3f} "
        f"over {m['path_pairs']} pairs, gap {gap:.3f} (>= 0.2)"
    )
    return gap >= 0.2, detail


def test_criterion_3_lcs_simulation(lcs_run, capsys):
    ok, detail = judge_lcs_fit(lcs_run)
    assert report(3, ok, detail, capsys), detail


def test_criterion_3_example_rounding_soft(lcs_run):
    # soft check: reported in criterion 3's line, asserted separately
    assert lcs_run["example_rounded_lcs"] == lcs_run["example_lcs"] == 3


def test_criterion_4_path_recovery(lcs_run, capsys):
    ok, detail = judge_paths(lcs_run)
    assert report(4, ok, detail, capsys), detail


# --- 5 -------------------------------------------------------------------


def check_random_guess():
    r = random_guess(n_lists=10000, seed=0)
    ok = abs(r["P@1"] - 0.2) <= 0.02 and abs(r["MRR"] - 0.457) <= 0.02 and abs(r["Acc"] - 0.5) <= 0.03
    return ok, f"P@1 {r['P@1']:.4f}, MRR {r['MRR']:.4f}, Acc {r['Acc']:.4f} on 10000 random lists"


def test_criterion_5_metric_sanity(capsys):
    ok, detail = check_random_guess()
    assert report(5, ok, detail, capsys), detail


# --- 6 -------------------------------------------------------------------


def check_ranking():
    r = ranking_run(RankingDemoConfig())
    uni, bi = r["uni"]["p_at_1"], r["bi"]["p_at_1"]
    ok = uni >= 0.9 and bi >= uni
    return ok, f"P@1 uni {uni:.3f}, bi {bi:.3f} on {r['uni']['n_lists']} test lists (random {r['random_p_at_1']:.2f})"


def test_criterion_6_ranking(capsys):
    ok, detail = check_ranking()
    assert report(6, ok, detail, capsys), detail


# --- 7 -------------------------------------------------------------------


def _files(d, skip=("manifest.json", "history.csv")):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name not in skip}


def check_determinism(tmp):
    problems = []
    valid = tmp / "valid.txt"
    valid.write_text("n_valid = 50\n")
    sim = ["simulate-lcs", "--n-train", 200, "--n-test", 50, "--max-epochs", 2, "--dims", "8,4,4", "--config", valid]
    for name in ("a", "b"):
        cli(*sim, "--out-dir", tmp / name)
    a, b = _files(tmp / "a"), _files(tmp / "b")
    if a != b:
        problems.append("simulate-lcs reruns differ: " + ",".join(k for k in a if a[k] != b.get(k)))

    ck = mio.load_checkpoint(tmp / "a" / "model.ckpt")
    mio.save_checkpoint(tmp / "again.ckpt", ck.params, ck.config)
    if (tmp / "again.ckpt").read_bytes() != (tmp / "a" / "model.ckpt").read_bytes():
        problems.append("checkpoint save/load is not bitwise")

    cli("gen-data", "--task", "ranking", "--n-train", 40, "--n-test", 10, "--config", valid, "--out-dir", tmp / "d")
    data = tmp / "d" / "data.jsonl"
    common = ["train", "--data", data, "--loss", "hinge", "--dims", "6,3,3", "--batch-size", 16]
    cli(*common, "--max-epochs", 5, "--out-dir", tmp / "full")
    cli(*common, "--max-epochs", 2, "--out-dir", tmp / "part")
    cli(*common, "--max-epochs", 5, "--resume", tmp / "part" / "checkpoint.ckpt", "--out-dir", tmp / "res")
    f = mio.load_checkpoint(tmp / "full" / "checkpoint.ckpt")
    r = mio.load_checkpoint(tmp / "res" / "checkpoint.ckpt")
    same = all(f.params[k].tobytes() == r.params[k].tobytes() for k in f.params)
    same &= all(f.optimizer.accum[k].tobytes() == r.optimizer.accum[k].tobytes() for k in f.params)
    same &= [h["train_loss"] for h in f.extra["history"]] == [h["train_loss"] for h in r.extra["history"]]
    if not same:
        problems.append("resumed run diverges from the uninterrupted one")
    return not problems, "; ".join(problems) or "reruns, checkpoint round trip and resume are bitwise identical"


def test_criterion_7_determinism(tmp_path, capsys):
    ok, detail = check_determinism(tmp_path)
    assert report(7, ok, detail, capsys), detail


# --- 8 -------------------------------------------------------------------

PROPERTIES = {
    "gate simplex": gate_simplex,
    "lattice boundedness": lattice_bounded,
    "DP table monotonicity": dp_monotone,
    "softmax shift invariance": softmax_shift,
    "AdaGrad monotone accumulators": adagrad_monotone,
}


def check_properties():
    failed = []
    for name, prop in PROPERTIES.items():
        try:
            prop()  # each runs >= 100 hypothesis examples
        except Exception as exc:  # noqa: BLE001
            failed.append(f"{name}: {type(exc).__name__}")
    return not failed, ("failed " + "; ".join(failed)) if failed else f"{len(PROPERTIES)} suites, >= 100 cases each, 0 failures"


def test_criterion_8_invariants(capsys):
    ok, detail = check_properties()
    assert report(8, ok, detail, capsys), detail


if __name__ == "__main__":
    import tempfile

    with tempfile.TemporaryDirectory() as d:
        tmp = Path(d)
        report(1, *check_gradients(tmp))
        report(2, *check_lcs_oracle())
        cli("simulate-lcs", "--out-dir", tmp / "lcs")
        m = json.loads((tmp / "lcs" / "metrics.json").read_text())
        report(3, *judge_lcs_fit(m))
        report(4, *judge_paths(m))
        report(5, *check_random_guess())
        report(6, *check_ranking())
        (tmp / "det").mkdir()
        report(7, *check_determinism(tmp / "det"))
        report(8, *check_properties())
    sys.exit(0 if all(v.startswith("PASS") for v in RESULTS.values()) else 1)
