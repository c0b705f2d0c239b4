"""Command-line entry point: ``rkde {density,attention,equiv,sweep} --config PATH``.

Exit codes: 0 success, 1 configuration error, 2 numerical error,
3 failed equivalence check (``equiv`` only).
"""

from __future__ import annotations

import argparse
import dataclasses
import re
import sys
from pathlib import Path

from .errors import ConfigError, InputError, NumericalError
from .harness import ExperimentConfig, run_experiment, write_json

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_CHECK_FAILED = 0, 1, 2, 3

COMMAND_EXPERIMENT = {
    "density": "density_contamination",
    "attention": "attention_contamination",
    "equiv": "equivalence_check",
}


def parse_seed_range(text: str) -> range:
    """``"a..b"`` (inclusive) or a single seed."""
    m = re.fullmatch(r"\s*(\d+)\s*(?:\.\.\s*(\d+)\s*)?", text)
    if not m:
        raise ConfigError(f"seed range must look like 'a..b', got {text!r}")
    lo = int(m.group(1))
    hi = int(m.group(2)) if m.group(2) is not None else lo
    if hi < lo:
        raise ConfigError(f"empty seed range {text!r}")
    return range(lo, hi + 1)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rkde", description="Robust KDE experiments")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("density", "contaminated 2-D density estimation (KDE vs robust KDE)"),
        ("attention", "attention outputs under value/key row contamination"),
        ("equiv", "softmax = KDE = robust KDE (least squares) equivalence check"),
        ("sweep", "run the config's experiment for a range of seeds"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON config file")
        p.add_argument("--output", help="override output_path from the config")
        p.add_argument("--quiet", action="store_true", help="suppress progress lines")
        if name == "sweep":
            p.add_argument("--seeds", required=True, help="inclusive seed range a..b")
    return parser


def _summary(result) -> str:
    fields = {k: v for k, v in dataclasses.asdict(result).items() if k != "contaminated_rows"}
    return " ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in fields.items())


def _run(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    if args.command in COMMAND_EXPERIMENT:
        cfg = dataclasses.replace(cfg, experiment=COMMAND_EXPERIMENT[args.command])
    if args.output:
        cfg = dataclasses.replace(cfg, output_path=args.output)

    def progress(msg: str) -> None:
        if not args.quiet:
            print(msg, file=sys.stderr)

    if args.command != "sweep":
        result = run_experiment(cfg)
        progress(f"[{cfg.experiment} seed={cfg.seed}] {_summary(result)}")
        if cfg.experiment == "equivalence_check" and not result.passed:
            return EXIT_CHECK_FAILED
        return EXIT_OK

    root = Path(cfg.output_path)
    runs = []
    for seed in parse_seed_range(args.seeds):
        seed_cfg = dataclasses.replace(cfg, seed=seed, output_path=str(root / f"seed_{seed:04d}"))
        result = run_experiment(seed_cfg)
        progress(f"[{cfg.experiment} seed={seed}] {_summary(result)}")
        record = result.to_dict()
        record["seed"] = seed
        runs.append(record)
    write_json(root / "sweep.json", {"experiment": cfg.experiment, "runs": runs})
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except InputError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
