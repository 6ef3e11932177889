"""Command line interface: ``sisei run | matrix | check``."""
import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from .driver import ScenarioConfig, load_config, matrix_configs, run_scenario, write_outputs
from .errors import ConfigError

log = logging.getLogger("sisei")

EXIT_OK = 0
EXIT_ABORTED = 2
EXIT_CONFIG = 3
EXIT_CHECK_FAILED = 4


def _base_config(args):
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    if args.profile:
        cfg = cfg.with_profile(args.profile)
    return cfg


def _summary(outputs):
    return {
        "name": outputs.config.name,
        "status": outputs.status,
        "abort_soc": outputs.abort_soc,
        "n_dof": outputs.n_dof,
        "accepted_steps": outputs.n_accepted,
        "rejected_steps": outputs.n_rejected,
        "max_lithium_deviation": outputs.max_lithium_deviation,
        "wall_time_s": outputs.wall_time_s,
    }


def _run_one(cfg, out_dir):
    outputs = run_scenario(cfg)
    write_outputs(outputs, out_dir)
    return _summary(outputs)


def cmd_run(args):
    cfg = _base_config(args)
    out = Path(args.out or cfg.output_dir or "out")
    summary = _run_one(cfg, out)
    print(json.dumps(summary))
    if summary["status"] == "aborted" and not args.expect_abort:
        log.error("run aborted at SOC %.4f", summary["abort_soc"])
        return EXIT_ABORTED
    return EXIT_OK


def cmd_matrix(args):
    base = _base_config(args)
    out = Path(args.out or "out")
    configs = matrix_configs(base)
    dirs = [out / cfg.name for cfg in configs]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            summaries = list(pool.map(_run_one, configs, dirs))
    else:
        summaries = [_run_one(cfg, d) for cfg, d in zip(configs, dirs)]
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.json").write_text(json.dumps(summaries, indent=2) + "\n")
    status = EXIT_OK
    for s in summaries:
        print(json.dumps(s))
        expected = "aborted" if s["name"].startswith("gsv") else "completed"
        if s["status"] != expected:
            log.error("%s: expected %s, got %s", s["name"], expected, s["status"])
            status = EXIT_ABORTED
    return status


def cmd_check(args):
    from . import checks

    results = checks.run_all(seed=args.seed)
    failed = 0
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
        failed += not r.passed
    return EXIT_CHECK_FAILED if failed else EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="sisei", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="scenario JSON file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--profile", choices=("ci", "paper"), help="mesh resolution profile")
        p.add_argument("--seed", type=int, default=0, help="seed for randomised checks")

    p_run = sub.add_parser("run", help="run one scenario")
    common(p_run)
    p_run.add_argument("--expect-abort", action="store_true",
                       help="exit 0 also when the run aborts")
    p_run.set_defaults(func=cmd_run)

    p_matrix = sub.add_parser("matrix", help="run the five-scenario comparison")
    common(p_matrix)
    p_matrix.add_argument("--jobs", type=int, default=1, help="concurrent scenarios")
    p_matrix.set_defaults(func=cmd_matrix)

    p_check = sub.add_parser("check", help="run the oracle and property checks")
    common(p_check)
    p_check.set_defaults(func=cmd_check)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
