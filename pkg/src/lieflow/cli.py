"""Command line entry point: ``lieflow run | list | check``."""

import argparse
import os
import subprocess
import sys

from .runner import ConfigError, ExperimentConfig, list_experiments, run


def _cmd_run(args):
    try:
        cfg = ExperimentConfig.from_file(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
            cfg.validate()
    except (ConfigError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    out = args.out if args.out is not None else cfg.out
    report = run(cfg, out_dir=out)
    for c in report.checks:
        status = "PASS" if c.passed else "FAIL"
        print(f"{status}  {c.name}: {c.value:.6g} {c.relation} {c.tolerance:.6g}")
    print(f"run {report.run_id}: {'passed' if report.passed else 'FAILED'} "
          f"({report.wall_time:.1f} s) -> {out}")
    return 0 if report.passed else 1


def _cmd_list(args):
    for name, desc in list_experiments():
        print(f"{name:15s} {desc}")
    return 0


def _find_acceptance():
    here = os.path.dirname(os.path.abspath(__file__))
    for root in (os.getcwd(), os.path.join(here, "..", "..")):
        path = os.path.join(root, "tests", "test_acceptance.py")
        if os.path.exists(path):
            return os.path.abspath(path)
    return None


def _cmd_check(args):
    path = _find_acceptance()
    if path is None:
        print("error: tests/test_acceptance.py not found", file=sys.stderr)
        return 2
    return subprocess.call([sys.executable, "-m", "pytest", "-s", "-q", path])


def build_parser():
    ap = argparse.ArgumentParser(prog="lieflow", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run one experiment from a key=value config file")
    r.add_argument("--config", required=True)
    r.add_argument("--seed", type=int, default=None, help="override the master seed")
    r.add_argument("--out", default=None, help="output directory")
    r.set_defaults(func=_cmd_run)
    ls = sub.add_parser("list", help="list the named experiments")
    ls.set_defaults(func=_cmd_list)
    ck = sub.add_parser("check", help="run the acceptance suite")
    ck.add_argument("--all", action="store_true", required=True)
    ck.set_defaults(func=_cmd_check)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
