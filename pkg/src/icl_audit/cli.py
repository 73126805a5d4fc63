"""``audit`` command line: run, calibrate and report."""

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from .calibration import calibrate_threshold
from .config import expand_sweep, is_sweep, load_config
from .exceptions import (
    AuditError,
    CalibrationError,
    ConfigurationError,
    ExperimentError,
    SchemaVersionError,
    TrainingError,
)
from .harness import (
    ExperimentSetup,
    collect_shadow,
    run_experiment,
    shadow_scores,
    train_hybrid_from_shadow,
    write_artifacts,
)
from .report import write_report

EXIT_OK, EXIT_EXPERIMENT, EXIT_CONFIG = 0, 2, 3

logger = logging.getLogger("icl_audit")


def _parser():
    p = argparse.ArgumentParser(prog="audit", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("-c", "--config", required=True, help="experiment TOML file")
        sp.add_argument("--parallelism", type=int, help="concurrent trials")
        sp.add_argument("--provider", choices=("http", "simulated"))

    run = sub.add_parser("run", help="run an audit experiment")
    common(run)
    run.add_argument("-o", "--output", required=True, help="run directory")
    run.add_argument("--force", action="store_true", help="overwrite an existing run")
    run.add_argument("--attacks", help="comma-separated attack list")

    cal = sub.add_parser("calibrate", help="fit a threshold or hybrid model on shadow trials")
    common(cal)
    cal.add_argument("--attack", required=True, choices=("repeat", "brainwash", "hybrid"))
    cal.add_argument("-o", "--output", default=".", help="directory for the fitted file")
    cal.add_argument("--shadow-trials", type=int,
                     help="shadow trials (two targets each); defaults to hybrid.shadow_trials")

    rep = sub.add_parser("report", help="summarize run directories")
    rep.add_argument("runs", nargs="+", help="run directories")
    rep.add_argument("-o", "--output", required=True, help="report directory")
    return p


def load_overridden(args):
    """Load the config file and apply command-line overrides."""
    config = load_config(args.config)
    changes = {}
    if getattr(args, "parallelism", None):
        changes["parallelism"] = args.parallelism
    if getattr(args, "attacks", None):
        changes["attacks"] = tuple(a.strip() for a in args.attacks.split(",") if a.strip())
    if getattr(args, "provider", None):
        changes["provider"] = dataclasses.replace(config.provider, kind=args.provider)
    return config.replace(**changes) if changes else config


def cmd_run(args) -> int:
    config = load_overridden(args)
    out = Path(args.output)
    arms = expand_sweep(config) if is_sweep(config) else [(None, config)]
    for label, arm in arms:
        target = out / label if label else out
        if (target / "manifest.json").exists() and not args.force:
            raise FileExistsError(f"{target} already holds a run; pass --force to overwrite")
    for label, arm in arms:
        target = out / label if label else out
        result = run_experiment(arm)
        write_artifacts(result, target, config_path=args.config, force=args.force)
        for attack, m in result.metrics.items():
            auc = f" auc={m.auc:.3f}" if m.auc is not None else ""
            print(f"{label or arm.name}: {attack} adv={m.advantage:.3f}{auc}")
        if result.n_failed:
            print(f"{label or arm.name}: {result.n_failed} failed trials", file=sys.stderr)
    return EXIT_OK


def calibrate(config, attack, n_trials=None):
    """Fit the threshold (repeat/brainwash) or hybrid model; returns ``(name, payload)``."""
    setup = ExperimentSetup.from_config(config)
    n = n_trials or config.hybrid.shadow_trials
    if attack == "hybrid":
        model, loss = train_hybrid_from_shadow(setup, n)
        return "hybrid_model.json", model.to_dict(), loss
    records = collect_shadow(setup, (attack,), n)
    threshold = calibrate_threshold(shadow_scores(records, attack))
    payload = {"attack": attack, "threshold": threshold, "n_shadow_targets": 2 * len(records)}
    return f"threshold_{attack}.json", payload, threshold


def cmd_calibrate(args) -> int:
    config = load_overridden(args)
    name, payload, value = calibrate(config, args.attack, args.shadow_trials)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
    if args.attack == "hybrid":
        print(f"hybrid model written to {out / name} (training loss {value:.4f})")
    else:
        print(f"{args.attack} threshold {value!r} written to {out / name}")
    return EXIT_OK


def cmd_report(args) -> int:
    info = write_report(args.runs, args.output)
    print(f"summarized {info['runs']} run(s); plots: {', '.join(info['plots']) or 'none'}")
    if info["warnings"]:
        print(f"{info['warnings']} corrupt trial line(s) skipped", file=sys.stderr)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "calibrate": cmd_calibrate, "report": cmd_report}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (ExperimentError, CalibrationError, TrainingError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXPERIMENT
    except (ConfigurationError, SchemaVersionError, FileExistsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AuditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EXPERIMENT


if __name__ == "__main__":
    sys.exit(main())
