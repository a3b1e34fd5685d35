"""Command-line interface: run experiments, compare algorithms, inspect geometry.

Exit codes: 0 on success, 2 on configuration errors, 3 on runtime failures.
"""

import argparse
import json
import sys

from .design import d_optimal_design
from .geometry import john_distribution, welfare_floor_check
from .harness import ConfigError, compare, load_config, parse_compare_config, run_experiment
from .instances import BanditInstance


def _load_instance(path: str) -> BanditInstance:
    with open(path, "r", encoding="utf-8") as fh:
        return BanditInstance.from_json(fh.read())


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = args.out if args.out is not None else cfg.out
    result = run_experiment(cfg, out_dir=out)
    if out is None:
        from .harness import report_csv_lines

        print("\n".join(report_csv_lines(result.report)))
    else:
        print(f"wrote report.csv, diagnostics.json, timings.json, instance.json to {out}")
    return 0


def _cmd_compare(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        cfgs = parse_compare_config(json.load(fh))
    results = compare(cfgs, out_dir=args.out)
    if args.out is None:
        from .harness import report_csv_lines

        lines = []
        for label, res in results.items():
            entry = report_csv_lines(res.report, label=label)
            if not lines:
                lines.append(entry[0])
            lines.extend(entry[1:])
        print("\n".join(lines))
    else:
        print(f"wrote compare.csv and per-entry outputs to {args.out}")
    return 0


def _cmd_design(args) -> int:
    inst = _load_instance(args.instance)
    dw = d_optimal_design(inst.arm_set, eps=args.eps)
    doc = {
        "weights": dw.weights.tolist(),
        "g_value": dw.g_value,
        "support_size": int(dw.support.size),
        "iterations_used": dw.iterations_used,
        "converged": dw.converged,
    }
    print(json.dumps(doc, sort_keys=True))
    return 0


def _cmd_geometry(args) -> int:
    inst = _load_instance(args.instance)
    john = john_distribution(inst.arm_set)
    doc = {
        "c": john.center.tolist(),
        "r": john.radius,
        "rho": john.rho.tolist(),
        "floor_ratio": welfare_floor_check(john, inst),
    }
    print(json.dumps(doc, sort_keys=True))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fairlin",
        description="Fairness-aware linear bandit experiments (Nash / p-mean regret).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment config")
    p_run.add_argument("--config", required=True, help="experiment config JSON")
    p_run.add_argument("--out", default=None, help="output directory (default: config 'out' or stdout)")
    p_run.set_defaults(fn=_cmd_run)

    p_cmp = sub.add_parser("compare", help="run several configs on one instance")
    p_cmp.add_argument("--config", required=True, help="JSON with an 'experiments' list")
    p_cmp.add_argument("--out", default=None, help="output directory (default: stdout)")
    p_cmp.set_defaults(fn=_cmd_compare)

    p_des = sub.add_parser("design", help="print the D-optimal design of an instance")
    p_des.add_argument("--instance", required=True, help="instance JSON file")
    p_des.add_argument("--eps", type=float, default=0.01, help="relative G-value tolerance")
    p_des.set_defaults(fn=_cmd_design)

    p_geo = sub.add_parser("geometry", help="print the inscribed-ball geometry of an instance")
    p_geo.add_argument("--instance", required=True, help="instance JSON file")
    p_geo.set_defaults(fn=_cmd_geometry)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (OSError, json.JSONDecodeError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - CLI boundary
        print(f"runtime failure: {type(e).__name__}: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
