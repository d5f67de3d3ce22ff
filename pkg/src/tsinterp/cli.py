"""``tk`` command line interface.

Exit codes: 0 success, 2 usage/config, 3 conflict, 4 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import experiment as ex
from . import timebase as tb
from .errors import ConfigError, TsInterpError

log = logging.getLogger("tsinterp")


def _read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def build_parser():
    p = argparse.ArgumentParser(prog="tk", description="Time-series modeling and interpretation toolkit.")
    p.add_argument("--root", default=os.environ.get("TK_ROOT", "."),
                   help="experiment directory (default: $TK_ROOT or .)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("import", help="import a CSV + metadata JSON as a dataset")
    s.add_argument("csv")
    s.add_argument("meta")
    s.add_argument("--force", action="store_true")

    s = sub.add_parser("synth", help="generate a synthetic dataset from a lag rule")
    s.add_argument("--config", required=True)
    s.add_argument("--out", default=".")
    s.add_argument("--force", action="store_true")

    for name in ("train", "sweep"):
        s = sub.add_parser(name, help=f"{name} from a JSON config")
        s.add_argument("--config", required=True)
        s.add_argument("--viz", action="store_true", help="write training-curve SVG")
        s.add_argument("--force", action="store_true")
        if name == "sweep":
            s.add_argument("--workers", type=int, default=1)

    s = sub.add_parser("evaluate", help="metrics for a trained model on one split")
    s.add_argument("model", help="model name or model directory")
    s.add_argument("--split", default="val")
    s.add_argument("--plot-fit", action="store_true")
    s.add_argument("--components", nargs="*")
    s.add_argument("--force", action="store_true")

    s = sub.add_parser("interpret", help="feature attribution for a trained model")
    s.add_argument("model", help="model name or model directory")
    s.add_argument("--config", required=True)
    s.add_argument("--force", action="store_true")

    sub.add_parser("verify", help="check digests of every artifact in the experiment")
    return p


def run(args) -> int:
    exp = ex.ExperimentDir(args.root)
    cmd = args.command
    if cmd == "synth":
        try:
            spec = ex.SyntheticSpec.from_dict(_read_json(args.config))
        except TypeError as exc:
            raise ConfigError(f"invalid synthetic spec: {exc}") from None
        paths = ex.cmd_synth(spec, args.out, args.force)
        print("wrote " + " ".join(str(p) for p in paths))
        return 0
    if cmd == "verify":
        problems = ex.verify(exp)
        for line in problems:
            print(line)
        print(f"verify: {len(problems)} problem(s)")
        return 4 if problems else 0
    with exp.lock():
        if cmd == "import":
            ds, digest = ex.cmd_import(exp, args.csv, args.meta, args.force)
            print(tb.describe(ds))
            print(f"dataset {ds.name} digest {digest}")
        elif cmd == "train":
            d, ckpt = ex.cmd_train(exp, _read_json(args.config), args.viz, args.force)
            print(f"model {d} best_epoch {ckpt.best_epoch} val_loss {ckpt.best_val:.6g}")
        elif cmd == "sweep":
            d, res = ex.cmd_sweep(exp, _read_json(args.config), args.viz, args.force, args.workers)
            for t in res.trials:
                print(json.dumps(t, sort_keys=True))
            kept = "consolidated into " + str(d) if res.checkpoint is not None else "no checkpoint kept"
            print(f"best trial {res.best_index}; {kept}")
        elif cmd == "evaluate":
            metrics, outputs = ex.cmd_evaluate(exp, args.model, args.split, args.plot_fit,
                                               args.components, args.force)
            summary = {k: v for k, v in metrics.items() if k not in ("per_point_loss", "points")}
            print(json.dumps(summary, sort_keys=True))
        elif cmd == "interpret":
            out, result, _ = ex.cmd_interpret(exp, args.model, _read_json(args.config), args.force)
            print(f"{len(result.points)} attributions written to {out}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except TsInterpError as exc:
        print(f"error: {type(exc).__name__}: {' '.join(str(exc).split())}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError, KeyError) as exc:
        code = 2 if isinstance(exc, (ValueError, KeyError)) else 4
        print(f"error: {type(exc).__name__}: {' '.join(str(exc).split())}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
