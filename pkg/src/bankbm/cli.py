"""bankbm command line: stage subcommands plus a one-shot pipeline.

Exit codes: 0 success, 2 configuration/validation problem, 3 compute
failure. Every flag overrides its config-file key.
"""

import argparse
import sys

from .components import LETTER_SIZE
from .pipeline import (
    ComputeError,
    ConfigError,
    apply_thread_cap,
    config_from_sources,
    run_pipeline,
    stage_characterize,
    stage_cluster,
    stage_decompose,
    stage_fit,
    stage_report,
    stage_simulate,
    stage_validate,
    validate_config,
)

COMMANDS = {
    "validate": ("parse the panel, apply filters, report rejections and "
                 "size counts", stage_validate),
    "simulate": ("generate a synthetic panel with planted business models",
                 stage_simulate),
    "fit": ("fit (optionally tune) the per-size forests", stage_fit),
    "decompose": ("write per-observation contribution matrices",
                  stage_decompose),
    "cluster": ("scan k, pick the majority-rule winner, write assignments",
                stage_cluster),
    "characterize": ("profile, order, and characterize the clusters",
                     stage_characterize),
    "report": ("render the report bundle from stage artifacts", stage_report),
    "pipeline": ("run every stage and write the run manifest", run_pipeline),
}


def _parse_k_range(raw):
    for sep in (":", "-"):
        if sep in raw:
            lo, _, hi = raw.partition(sep)
            try:
                return int(lo), int(hi)
            except ValueError:
                break
    raise argparse.ArgumentTypeError(
        f"expected K_MIN:K_MAX (e.g. 2:8), got {raw!r}")


def _parse_size_group(raw):
    if raw in LETTER_SIZE:
        return LETTER_SIZE[raw]
    if raw in ("all",) + tuple(LETTER_SIZE.values()):
        return raw
    raise argparse.ArgumentTypeError(
        f"expected one of L, M, S, all, got {raw!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bankbm",
        description="Identify bank business models from profitability "
                    "contributions.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="stage")
    for name, (help_text, _) in COMMANDS.items():
        sp = sub.add_parser(name, help=help_text)
        sp.add_argument("--config", help="key=value config file")
        sp.add_argument("--input", help="panel CSV path")
        sp.add_argument("--out-dir", help="artifact directory")
        sp.add_argument("--seed", type=int, help="base RNG seed (mandatory, "
                        "here or in the config)")
        sp.add_argument("--threads", type=int,
                        help="cap worker threads (results do not depend on it)")
        sp.add_argument("--size-group", type=_parse_size_group,
                        help="restrict per-size stages: L, M, S, or all")
        sp.add_argument("--k-range", type=_parse_k_range, metavar="MIN:MAX",
                        help="cluster-count scan range, e.g. 2:8")
        sp.add_argument("--skip-tuning", action="store_true", default=None,
                        help="skip hyperparameter tuning, use configured "
                             "forest.* parameters")
    return parser


def _overrides(args) -> dict:
    over = {
        "input": args.input,
        "out_dir": args.out_dir,
        "seed": args.seed,
        "threads": args.threads,
        "size_group": args.size_group,
    }
    if args.k_range is not None:
        over["cluster.k_min"], over["cluster.k_max"] = args.k_range
    if args.skip_tuning:
        over["forest.tune"] = False
    return over


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    command = args.command
    try:
        cfg = config_from_sources(args.config, _overrides(args))
        validate_config(cfg, command)
    except ConfigError as exc:
        print(f"bankbm {command}: validation error: {exc}", file=sys.stderr)
        return 2
    try:
        import os
        os.makedirs(cfg.out_dir, exist_ok=True)
        apply_thread_cap(cfg.threads)
        COMMANDS[command][1](cfg)
    except ConfigError as exc:
        print(f"bankbm {command}: validation error: {exc}", file=sys.stderr)
        return 2
    except ComputeError as exc:
        print(f"bankbm {command}: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # unexpected stage failure
        print(f"bankbm {command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
