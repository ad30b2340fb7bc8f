"""Command-line entry point: `contrel run|ablation|sweep`.

Exit codes: 0 success, 1 runtime failure, 2 config or usage error.
"""

from __future__ import annotations

import argparse
import sys

from .experiment import (SWEEP_DEFAULT_VALUES, ConfigError, cmd_ablation, cmd_run,
                         cmd_sweep, resolve_config)


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--config", metavar="PATH", default=None,
                     help="flat key=value config file")
    sub.add_argument("--set", metavar="K=V", action="append", default=[],
                     dest="overrides", help="override one config key (repeatable)")
    sub.add_argument("--out", metavar="DIR", default=None, help="output directory")
    sub.add_argument("--seeds", metavar="S1,S2,...", default=None,
                     help="comma-separated sampling seeds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="contrel",
                                     description="continual relation classification benchmark runner")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, blurb in (("run", "multi-seed task-sequence run"),
                        ("ablation", "all four strategy combinations"),
                        ("sweep", "previous-classifier learning-rate sweep")):
        p = sub.add_parser(name, help=blurb)
        _add_common(p)
        if name == "sweep":
            p.add_argument("--values", metavar="V1,V2,...", default=None,
                           help="alpha_prev values to sweep")
    return parser


def _parse_seeds(raw: str | None):
    if raw is None:
        return None
    try:
        return [int(p) for p in raw.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"--seeds expects integers, got {raw!r}") from None


def _parse_values(raw: str | None):
    if raw is None:
        return list(SWEEP_DEFAULT_VALUES)
    try:
        return [float(p) for p in raw.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"--values expects numbers, got {raw!r}") from None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(config_path=args.config, overrides=args.overrides,
                             seeds=_parse_seeds(args.seeds), out_dir=args.out)
        if args.command == "run":
            cmd_run(cfg)
        elif args.command == "ablation":
            cmd_ablation(cfg)
        else:
            cmd_sweep(cfg, _parse_values(args.values))
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
