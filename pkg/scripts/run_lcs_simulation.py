"""Train the spatial GRU to regress normalized LCS, then compare paths.

Thin wrapper over ``matchsrnn simulate-lcs``; the config below is the
default protocol (10k/1k pairs over A..J, square loss, AdaGrad, d = 10).

    python scripts/run_lcs_simulation.py --out-dir runs/lcs
"""

import argparse
import json
import sys
from dataclasses import dataclass, fields
from pathlib import Path

from matchsrnn.cli import main


@dataclass
class LCSConfig:
    n_train: int = 10000
    n_test: int = 1000
    max_epochs: int = 30
    lr: float = 0.05
    seed: int = 0
    exact_mode: bool = False


def argv_for(cfg, out_dir):
    argv = ["simulate-lcs", "--out-dir", str(out_dir)]
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        flag = "--" + f.name.replace("_", "-")
        if isinstance(v, bool):
            argv += [flag] if v else []
        else:
            argv += [flag, str(v)]
    return argv


def run(cfg, out_dir):
    code = main(argv_for(cfg, out_dir))
    if code != 0:
        raise SystemExit(code)
    return json.loads((Path(out_dir) / "metrics.json").read_text())


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out-dir", default="runs/lcs")
    ap.add_argument("--max-epochs", type=int, default=LCSConfig.max_epochs)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--exact-mode", action="store_true")
    a = ap.parse_args()
    run(LCSConfig(max_epochs=a.max_epochs, seed=a.seed, exact_mode=a.exact_mode), a.out_dir)
    sys.exit(0)
