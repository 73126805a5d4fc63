"""Cross-run summaries and log-log ROC plots from run directories."""

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .exceptions import ConfigurationError, SchemaVersionError  # noqa: E402
from .harness import SCHEMA_VERSION, TrialRecord, compute_metrics  # noqa: E402

logger = logging.getLogger(__name__)


@dataclass
class RunSummary:
    run_dir: Path
    manifest: dict
    records: list
    metrics: dict
    n_failed: int
    warnings: list = field(default_factory=list)

    @property
    def label(self) -> str:
        return self.run_dir.name


def read_trials(path) -> tuple:
    """Parse ``trials.jsonl``; corrupt lines are skipped and reported.

    Returns ``(records, warnings)``. A well-formed record with another schema
    version raises :class:`SchemaVersionError`.
    """
    records, warnings = [], []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                if not isinstance(obj, dict):
                    raise ValueError("not an object")
            except ValueError as exc:
                msg = f"{path}:{line_no}: skipped corrupt line ({exc})"
                logger.warning(msg)
                warnings.append(msg)
                continue
            try:
                records.append(TrialRecord.from_dict(obj))
            except SchemaVersionError:
                raise
            except (KeyError, TypeError, ValueError) as exc:
                msg = f"{path}:{line_no}: skipped malformed record ({exc})"
                logger.warning(msg)
                warnings.append(msg)
    return records, warnings


def load_run(run_dir) -> RunSummary:
    run_dir = Path(run_dir)
    manifest_path = run_dir / "manifest.json"
    trials_path = run_dir / "trials.jsonl"
    if not manifest_path.is_file() or not trials_path.is_file():
        raise ConfigurationError(f"{run_dir} is not a run directory")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    version = manifest.get("schema_version")
    if version != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"{manifest_path}: schema {version!r} != supported {SCHEMA_VERSION}")
    records, warnings = read_trials(trials_path)
    resolved = manifest.get("resolved_config", {})
    attacks = resolved.get("attacks") or sorted({a for r in records for a in r.outcomes})
    fpr_targets = resolved.get("fpr_targets") or (0.01, 0.05, 0.1)
    metrics = compute_metrics(records, attacks, fpr_targets)
    n_failed = sum(r.failed for r in records)
    return RunSummary(run_dir, manifest, records, metrics, n_failed, warnings)


def summary_csv(runs) -> str:
    """One row per run: sweep coordinates then per-attack advantage/AUC."""
    attacks = []
    for run in runs:
        for a in run.metrics:
            if a not in attacks:
                attacks.append(a)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["run", "k", "target_position", "model", "n_trials", "n_failed", "warnings"]
    for a in attacks:
        header += [f"{a}_advantage", f"{a}_auc"]
    writer.writerow(header)
    for run in runs:
        cfg = run.manifest.get("resolved_config", {})
        row = [run.label, cfg.get("k"), cfg.get("target_position"),
               (cfg.get("provider") or {}).get("model_name") or "", len(run.records),
               run.n_failed, len(run.warnings)]
        for a in attacks:
            m = run.metrics.get(a)
            row += [repr(m.advantage) if m else "", repr(m.auc) if m and m.auc is not None else ""]
        writer.writerow(row)
    return buf.getvalue()


def plot_roc(runs, attack, path):
    """Log-log ROC plot for one attack across runs (SVG)."""
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    floor = 1e-3
    for run in runs:
        m = run.metrics.get(attack)
        if m is None or m.roc is None:
            continue
        pts = [(max(f, floor), max(t, floor)) for f, t in m.roc]
        ax.plot([p[0] for p in pts], [p[1] for p in pts], drawstyle="steps-post",
                label=f"{run.label} (AUC {m.auc:.3f})")
    ax.plot([floor, 1], [floor, 1], "k--", linewidth=0.8)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlim(floor, 1)
    ax.set_ylim(floor, 1)
    ax.set_xlabel("False positive rate")
    ax.set_ylabel("True positive rate")
    ax.set_title(attack)
    ax.legend(fontsize="small", loc="lower right")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def write_report(run_dirs, output_dir) -> dict:
    """Write ``summary.csv`` and ``roc_<attack>.svg``; return counts for the CLI."""
    runs = [load_run(d) for d in run_dirs]
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "summary.csv").write_text(summary_csv(runs), encoding="utf-8")
    plotted = []
    attacks = {a for run in runs for a, m in run.metrics.items() if m.roc is not None}
    for attack in sorted(attacks):
        plot_roc(runs, attack, out / f"roc_{attack}.svg")
        plotted.append(attack)
    return {
        "runs": len(runs),
        "warnings": sum(len(r.warnings) for r in runs),
        "plots": plotted,
    }
