"""Command line entry point: ``simba-bench run|verify|plot``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

import yaml

from . import bench


def _parser():
    p = argparse.ArgumentParser(prog="simba-bench", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    for name, help_ in (("run", "train every optimizer on every seed"),
                        ("verify", "check the linear-rate certificate on a quadratic")):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("config")
        sp.add_argument("--seed", type=int, help="run this single seed instead of the config list")
        sp.add_argument("--out", help="output directory (relative paths use $%s)" % bench.OUTPUT_ROOT_ENV)
        sp.add_argument("--iters", type=int, help="override the iteration budget")
    sub.choices["verify"].add_argument("--factor", type=float,
                                       help="fixed contraction factor replacing the certificate")
    pp = sub.add_parser("plot", help="render loss curves from a run directory")
    pp.add_argument("dir")
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "plot":
            for path in bench.plot(args.dir):
                print(path)
            return bench.EXIT_OK
        cfg = bench.apply_overrides(bench.load_config(args.config), args.seed, args.out, args.iters)
        if args.command == "run":
            out, summary, _ = bench.run(cfg)
            for r in summary:
                print(f"{r['optimizer']:>16s}  {r['mean_final_loss']:.6g} +- {r['std_final_loss']:.2g}"
                      f"  ({r['runs']} runs)")
            print(out)
            return bench.EXIT_OK
        out, report, code = bench.verify(cfg, factor=args.factor)
        print(json.dumps({"out": str(out), "violations": report["violations"],
                          "ok": [s["ok"] for s in report["seeds"]]}))
        return code
    except (bench.ConfigError, yaml.YAMLError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return bench.EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return bench.EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
