"""Grid sweep over one architecture on a synthetic two-input rule, then rank trials.

    python scripts/architecture_sweep.py --arch TCN --workers 2
"""

import argparse
from pathlib import Path

from tsinterp import experiment as ex

GRIDS = {
    "MLP": {"arch.widths": [[8], [32], [32, 16]], "train.lr": [0.001, 0.003]},
    "TCN": {"arch.channels": [[8, 8], [16, 16]], "arch.kernel_size": [2, 3]},
    "CNN": {"arch.channels": [[8], [16]], "arch.kernel_size": [2, 3]},
    "LSTM": {"arch.hidden_size": [8, 16], "train.lr": [0.003, 0.01]},
    "LSTMv2": {"arch.hidden_size": [8, 16], "arch.depth": [1, 2]},
}


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="sweep_run")
    p.add_argument("--arch", default="MLP", choices=sorted(GRIDS))
    p.add_argument("--epochs", type=int, default=40)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args()

    out = Path(args.out)
    exp = ex.ExperimentDir(out / "exp").ensure()
    spec = ex.SyntheticSpec(
        name="two_inputs", n=3000, inputs=["u", {"name": "v", "kind": "sinusoid", "periods": [24]}],
        rule=[{"component": "u", "lag": 2, "coef": 0.8}, {"component": "v", "lag": 5, "coef": 0.5}],
        noise_std=0.05, seed=3)
    csv, meta, _ = ex.cmd_synth(spec, out, force=True)
    ex.cmd_import(exp, csv, meta, force=True)
    config = {
        "name": f"sweep_{args.arch.lower()}",
        "dataset": "two_inputs",
        "task": {"in_delays": [-7, 0], "in_components": ["u", "v"], "out_delays": [0, 0], "out_components": ["y"]},
        "arch": {"name": args.arch},
        "train": {"lr": 0.003, "batch_size": 64, "max_epochs": args.epochs, "patience": 8},
        "sweep": {"grid": GRIDS[args.arch], "consolidate": True},
    }
    d, res = ex.cmd_sweep(exp, config, viz=True, force=True, workers=args.workers)
    for t in sorted(res.trials, key=lambda t: (t["status"] != "ok", t["best_val"] or 0.0)):
        mark = "*" if t["trial_id"] == res.best_index else " "
        print(f"{mark} trial {t['trial_id']:2d} val {t['best_val']:.5f}  {t['config']}")
    print(f"best trial consolidated into {d}")


if __name__ == "__main__":
    main()
