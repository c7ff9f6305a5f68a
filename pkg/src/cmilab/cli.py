"""``cmi-lab`` command line.

Exit codes: 0 when every audited bound holds, 1 when any verdict fails,
2 on configuration errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from itertools import combinations
from pathlib import Path

from .combinatorics import growth_count, star_number, vc_dimension
from .core import load_class
from .harness import ConfigError, ExperimentConfig, run_estimate, run_lowerbound_pointfunctions
from .oig import build_graph, orient_deterministic, orient_fractional


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_estimate(args) -> int:
    record = run_estimate(ExperimentConfig.from_json(args.config))
    _write(record.to_csv(), args.out)
    if args.json:
        Path(args.json).write_text(json.dumps(record.to_json(), indent=2) + "\n")
    return 0 if record.passed else 1


def _cmd_audit(args) -> int:
    record = run_estimate(ExperimentConfig.from_json(args.config))
    _write(record.reports_csv(), args.out)
    if args.json:
        Path(args.json).write_text(json.dumps(record.to_json(), indent=2) + "\n")
    return 0 if record.passed else 1


def _cmd_lowerbound(args) -> int:
    record = run_lowerbound_pointfunctions(args.n, args.draws, args.seed)
    sys.stdout.write(json.dumps(record.extras) + "\n")
    sys.stdout.write(record.reports_csv())
    return 0 if record.passed else 1


def _load_class(path: str):
    try:
        return load_class(path)
    except (OSError, ValueError, KeyError) as exc:
        raise ConfigError(f"bad class file: {exc}") from exc


def _max_growth(cls, k: int, limit: int = 20000) -> int:
    k = min(k, cls.domain_size)
    best = 0
    for i, c in enumerate(combinations(range(cls.domain_size), k)):
        if i >= limit:
            raise ConfigError("too many input subsets for the growth function")
        best = max(best, growth_count(cls, c))
    return best


def _cmd_combinatorics(args) -> int:
    cls = _load_class(args.cls)
    star = star_number(cls, args.cap)
    doc = {"vc": vc_dimension(cls), "star": str(star), f"growth({2 * args.n})": _max_growth(cls, 2 * args.n)}
    sys.stdout.write(json.dumps(doc) + "\n")
    return 0


def _cmd_oig(args) -> int:
    cls = _load_class(args.cls)
    inputs = [int(v) for v in args.inputs.split(",")] if args.inputs else list(range(min(args.n + 1, cls.domain_size)))
    g = build_graph(cls, inputs)
    d = vc_dimension(cls)
    det = orient_deterministic(g, d)
    frac = orient_fractional(g)
    doc = {
        "graph": g.to_json(),
        "d": d,
        "deterministic": None if det is None else {"weights": list(det.weights), "max_load": det.max_load},
        "fractional": {"weights": [str(w) for w in frac.weights], "max_load": str(frac.max_load)},
    }
    sys.stdout.write(json.dumps(doc) + "\n")
    return 0 if det is not None else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cmi-lab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate CMI / eCMI over an n sweep (CSV)")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--json")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("audit", help="estimate and print bound reports (CSV)")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--json")
    p.set_defaults(func=_cmd_audit)

    p = sub.add_parser("lowerbound", help="version-space lower bound on point functions")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--draws", type=int, default=300)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_lowerbound)

    p = sub.add_parser("oig", help="one-inclusion graph and its assignments (JSON)")
    p.add_argument("--class", dest="cls", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--inputs", help="comma-separated input indices (default: the first n+1)")
    p.set_defaults(func=_cmd_oig)

    p = sub.add_parser("combinatorics", help="VC dimension, star number and growth function (JSON)")
    p.add_argument("--class", dest="cls", required=True)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--cap", type=int, default=12)
    p.set_defaults(func=_cmd_combinatorics)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
