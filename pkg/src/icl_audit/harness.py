"""Evaluation protocol: repeated trials, scoring, shadow training and artifacts.

Each trial builds a prompt from ``k`` demonstrations, then runs every
configured attack on one member (a demonstration) and one non-member (a
test-pool sample). Per-trial seeds derive from ``(master_seed, index)``, so
every trial is reproducible on its own and results do not depend on
execution order or parallelism.
"""

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

from . import __version__
from .attacks import (
    AttackOutcome,
    brainwash_attack,
    extract_features,
    gap_attack,
    inquiry_attack,
    repeat_attack_with_fallback,
)
from .client import HTTPProvider
from .config import ExperimentConfig
from .data import TrialInputs, LabeledSample, load_dataset, sample_trial_inputs, split_dataset
from .data import trial_seed as make_trial_seed
from .defenses import (
    DefendedProvider,
    PassThroughParaphraser,
    SimulatedParaphraser,
    apply_instruction_defense,
    load_synthetic_demos,
    substitute_demonstrations,
)
from .embedding import HTTPEncoder, TrigramEncoder
from .exceptions import (
    AttackError,
    ConfigurationError,
    ExperimentError,
    ProviderError,
    SchemaVersionError,
)
from .hybrid import HybridModel, hybrid_predict, train_hybrid
from .metrics import attack_metrics
from .prompts import get_template, render_prompt
from .simulator import SimulatedProvider

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
TARGETS = ("member", "nonmember")


@dataclass
class TrialRecord:
    trial_index: int
    inputs: TrialInputs
    outcomes: dict = field(default_factory=dict)  # attack -> {"member": o, "nonmember": o}
    failed: bool = False
    error: Optional[str] = None
    queries_used: int = 0
    prompt_demonstrations: Optional[tuple] = None

    def to_dict(self):
        out = {
            "schema_version": SCHEMA_VERSION,
            "trial_index": self.trial_index,
            "inputs": self.inputs.to_dict(),
            "failed": self.failed,
            "error": self.error,
            "queries_used": self.queries_used,
            "outcomes": {
                attack: {t: o.to_dict() for t, o in per_target.items()}
                for attack, per_target in self.outcomes.items()
            },
        }
        if self.prompt_demonstrations is not None:
            out["prompt_demonstrations"] = [d.to_dict() for d in self.prompt_demonstrations]
        return out

    @classmethod
    def from_dict(cls, obj):
        version = obj.get("schema_version")
        if version != SCHEMA_VERSION:
            raise SchemaVersionError(
                f"trial record schema {version!r} != supported {SCHEMA_VERSION}; "
                "migrate the run directory before reporting"
            )
        inp = obj["inputs"]
        inputs = TrialInputs(
            tuple(LabeledSample(**d) for d in inp["demonstrations"]),
            int(inp["target_position"]),
            LabeledSample(**inp["nonmember_target"]),
            int(inp["trial_seed"]),
        )
        outcomes = {
            attack: {t: AttackOutcome.from_dict(o) for t, o in per_target.items()}
            for attack, per_target in obj.get("outcomes", {}).items()
        }
        demos = obj.get("prompt_demonstrations")
        return cls(
            int(obj["trial_index"]), inputs, outcomes, bool(obj.get("failed", False)),
            obj.get("error"), int(obj.get("queries_used", 0)),
            tuple(LabeledSample(**d) for d in demos) if demos is not None else None,
        )


@dataclass
class ExperimentSetup:
    """Resolved resources for one experiment arm."""

    config: ExperimentConfig
    dataset: object
    split: object
    template: object
    target: object  # provider with output defenses applied
    shadow_target: object  # the undefended provider
    encoder: object
    synthetic: Optional[list] = None
    hybrid_model: Optional[HybridModel] = None

    @classmethod
    def from_config(cls, config: ExperimentConfig, provider=None, encoder=None,
                    paraphraser=None):
        """Build datasets, template and providers from ``config``.

        ``provider``, ``encoder`` and ``paraphraser`` override the configured
        ones (tests inject stubs this way).
        """
        ds_cfg = config.dataset
        dataset = load_dataset(config.resolve_path(ds_cfg.path), ds_cfg.format,
                               manifest=config.resolve_path(ds_cfg.manifest),
                               header=ds_cfg.header)
        if dataset.duplicates_removed:
            logger.info("dropped %d duplicate samples from %s",
                        dataset.duplicates_removed, dataset.name)
        template = get_template(_template_ref(config))
        for s in dataset.samples:
            if s.label not in template.label_names:
                raise ConfigurationError(
                    f"dataset label {s.label!r} not in template {template.id!r}")
        split_seed = ds_cfg.split_seed if ds_cfg.split_seed is not None else config.master_seed
        split = split_dataset(dataset, ds_cfg.demo_fraction, split_seed)

        if provider is None:
            provider = build_provider(config, template, dataset)
        if encoder is None:
            encoder = build_encoder(config)

        defense = config.defense
        target = provider
        if defense.filter_defense or defense.label_whitelist:
            if defense.filter_defense and paraphraser is None:
                paraphraser = build_paraphraser(config)
            target = DefendedProvider(
                provider, template,
                paraphraser=paraphraser if defense.filter_defense else None,
                label_whitelist=defense.label_whitelist, fallback=defense.filter_fallback,
            )
        synthetic = None
        if defense.synthetic_demos_path:
            synthetic = load_synthetic_demos(config.resolve_path(defense.synthetic_demos_path),
                                             template.label_names)
        hybrid_model = None
        if config.hybrid.model_path:
            hybrid_model = HybridModel.load(config.resolve_path(config.hybrid.model_path))
        return cls(config, dataset, split, template, target, provider, encoder, synthetic,
                   hybrid_model)


def _template_ref(config):
    ref = config.template
    if ref.endswith(".json"):
        return str(config.resolve_path(ref))
    return ref


def build_provider(config: ExperimentConfig, template, dataset):
    if config.provider.kind == "http":
        return HTTPProvider(config.provider)
    return SimulatedProvider(config.simulator, template=template, corpus=dataset.samples)


def build_encoder(config: ExperimentConfig):
    emb = config.embedding
    if emb.kind == "http":
        return HTTPEncoder(emb.endpoint_url, emb.model_name, emb.auth_token_env)
    return TrigramEncoder(emb.n_buckets)


def build_paraphraser(config: ExperimentConfig):
    pc = config.paraphraser
    if pc.kind == "passthrough":
        return PassThroughParaphraser()
    if pc.kind == "http":
        return HTTPProvider(pc.provider)
    return SimulatedParaphraser(pc.seed)


def _needed_attacks(attacks):
    needed = [a for a in ("gap", "inquiry", "repeat", "brainwash") if a in attacks]
    if "hybrid" in attacks:
        needed += [a for a in ("repeat", "brainwash") if a not in needed]
    return needed


def _run_attacks(setup, provider, prompt, sample, attacks, hybrid_model):
    cfg = setup.config
    out = {}
    for attack in _needed_attacks(attacks):
        if attack == "gap":
            out["gap"] = gap_attack(provider, setup.template, prompt, sample.text, sample.label)
        elif attack == "inquiry":
            out["inquiry"] = inquiry_attack(provider, prompt, sample.text)
        elif attack == "repeat":
            out["repeat"] = repeat_attack_with_fallback(provider, setup.encoder, prompt,
                                                        sample.text, cfg.repeat)
        elif attack == "brainwash":
            out["brainwash"] = brainwash_attack(provider, setup.template, prompt, sample.text,
                                                sample.label, cfg.brainwash)
    if "hybrid" in attacks and hybrid_model is not None:
        rep, bw = out["repeat"], out["brainwash"]
        feats = extract_features(rep, bw)
        h = hybrid_predict(hybrid_model, feats)
        out["hybrid"] = AttackOutcome("hybrid", h.raw_score, h.decision,
                                      rep.queries_used + bw.queries_used,
                                      {"features": list(feats)})
    return out


def run_trial(setup, trial_index: int, shadow: bool = False, attacks=None) -> TrialRecord:
    """Run one trial; provider failures mark the record as failed."""
    if isinstance(setup, ExperimentConfig):
        setup = ExperimentSetup.from_config(setup)
    cfg = setup.config
    attacks = tuple(attacks or cfg.attacks)
    seed = make_trial_seed(cfg.master_seed, trial_index, "shadow" if shadow else "trial")
    inputs = sample_trial_inputs(setup.split, cfg.k, cfg.position_index, seed)
    record = TrialRecord(trial_index, inputs)

    demos = inputs.demonstrations
    if setup.synthetic is not None and not shadow:
        demos = substitute_demonstrations(demos, setup.synthetic, seed)
        record.prompt_demonstrations = demos
    prompt = replace(render_prompt(setup.template, demos), nonce=seed)
    if cfg.defense.instruction_defense and not shadow:
        prompt = apply_instruction_defense(prompt)
    provider = setup.shadow_target if shadow else setup.target

    try:
        per_target = {
            "member": _run_attacks(setup, provider, prompt, inputs.member_target, attacks,
                                   setup.hybrid_model),
            "nonmember": _run_attacks(setup, provider, prompt, inputs.nonmember_target,
                                      attacks, setup.hybrid_model),
        }
    except (ProviderError, AttackError) as exc:
        record.failed = True
        record.error = f"{type(exc).__name__}: {exc}"
        logger.warning("trial %d failed: %s", trial_index, record.error)
        return record

    keep = attacks if not shadow else tuple(per_target["member"])
    for attack in keep:
        if attack in per_target["member"]:
            record.outcomes[attack] = {t: per_target[t][attack] for t in TARGETS}
    record.queries_used = sum(o.queries_used for t in TARGETS for a, o in per_target[t].items()
                              if a != "hybrid")
    return record


def _map_trials(setup, indices, shadow=False, attacks=None):
    indices = list(indices)
    par = setup.config.parallelism
    if par == 1:
        return [run_trial(setup, i, shadow, attacks) for i in indices]
    with ThreadPoolExecutor(max_workers=par) as pool:
        records = list(pool.map(lambda i: run_trial(setup, i, shadow, attacks), indices))
    return sorted(records, key=lambda r: r.trial_index)


def collect_shadow(setup, attacks, n_trials: int) -> list:
    """Shadow trials against the undefended target, in their own seed space."""
    return [r for r in _map_trials(setup, range(n_trials), shadow=True, attacks=attacks)
            if not r.failed]


def shadow_scores(records, attack) -> list:
    """``[(raw_score, is_member), ...]`` for one attack from trial records."""
    out = []
    for r in records:
        if attack in r.outcomes:
            out.append((r.outcomes[attack]["member"].raw_score, True))
            out.append((r.outcomes[attack]["nonmember"].raw_score, False))
    return out


def shadow_features(records) -> list:
    out = []
    for r in records:
        if "repeat" in r.outcomes and "brainwash" in r.outcomes:
            for t in TARGETS:
                feats = extract_features(r.outcomes["repeat"][t], r.outcomes["brainwash"][t])
                out.append((feats, t == "member"))
    return out


def train_hybrid_from_shadow(setup, n_trials=None):
    """Run shadow trials and fit the hybrid model (``n_trials`` 50 -> 100 targets)."""
    hc = setup.config.hybrid
    records = collect_shadow(setup, ("repeat", "brainwash"), n_trials or hc.shadow_trials)
    model, loss = train_hybrid(shadow_features(records), hc.hidden_units, hc.epochs,
                               hc.learning_rate, hc.seed)
    return model, loss


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list
    metrics: dict  # attack -> AttackMetrics
    n_failed: int
    hybrid_model: Optional[HybridModel] = None
    hybrid_loss: Optional[float] = None


def compute_metrics(records, attacks, fpr_targets=(0.01, 0.05, 0.1)) -> dict:
    """Per-attack metrics over the non-failed records (order-insensitive)."""
    ok = sorted((r for r in records if not r.failed), key=lambda r: r.trial_index)
    out = {}
    for attack in attacks:
        pairs = []
        for r in ok:
            if attack in r.outcomes:
                pairs.append((r.outcomes[attack]["member"], True))
                pairs.append((r.outcomes[attack]["nonmember"], False))
        if pairs:
            out[attack] = attack_metrics(attack, pairs, fpr_targets)
    return out


def run_experiment(config: ExperimentConfig, setup: Optional[ExperimentSetup] = None
                   ) -> ExperimentResult:
    """Run ``config.n_trials`` trials and compute per-attack metrics.

    When the hybrid attack is requested without a stored model, one is trained
    first on shadow trials.
    """
    if setup is None:
        setup = ExperimentSetup.from_config(config)
    loss = None
    if "hybrid" in config.attacks and setup.hybrid_model is None:
        setup.hybrid_model, loss = train_hybrid_from_shadow(setup)
    records = _map_trials(setup, range(config.n_trials))
    n_failed = sum(r.failed for r in records)
    if n_failed > config.max_failed_fraction * config.n_trials:
        raise ExperimentError(f"{n_failed} of {config.n_trials} trials failed")
    metrics = compute_metrics(records, config.attacks, config.fpr_targets)
    return ExperimentResult(config, records, metrics, n_failed, setup.hybrid_model, loss)


# -- artifacts -------------------------------------------------------------


def _fmt(v):
    if v is None:
        return ""
    return repr(float(v)) if isinstance(v, float) else str(v)


def metrics_csv(metrics: dict, fpr_targets, n_failed: int = 0) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    tpr_cols = [f"tpr@{f:g}" for f in fpr_targets]
    writer.writerow(["attack", "n_members", "n_nonmembers", "n_failed_trials", "accuracy",
                     "advantage", "abstain_rate", "auc"] + tpr_cols)
    for attack, m in metrics.items():
        tprs = [m.tpr_at_fpr.get(float(f)) if m.roc is not None else None for f in fpr_targets]
        writer.writerow([attack, m.n_members, m.n_nonmembers, n_failed, _fmt(m.accuracy),
                         _fmt(m.advantage), _fmt(m.abstain_rate), _fmt(m.auc)]
                        + [_fmt(t) for t in tprs])
    return buf.getvalue()


def roc_csv(roc) -> str:
    lines = ["fpr,tpr"] + [f"{f!r},{t!r}" for f, t in roc]
    return "\n".join(lines) + "\n"


def trials_jsonl(records) -> str:
    return "".join(json.dumps(r.to_dict(), ensure_ascii=False) + "\n"
                   for r in sorted(records, key=lambda r: r.trial_index))


def write_artifacts(result: ExperimentResult, output_dir, config_path=None, force=False,
                    created_at=None):
    """Write manifest, trials.jsonl, metrics.csv/json and roc_<attack>.csv."""
    from datetime import datetime, timezone

    out = Path(output_dir)
    manifest_path = out / "manifest.json"
    if manifest_path.exists() and not force:
        raise FileExistsError(f"{manifest_path} exists; pass --force to overwrite")
    out.mkdir(parents=True, exist_ok=True)
    for stale in out.glob("roc_*.csv"):
        stale.unlink()
    cfg = result.config
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "config_path": str(config_path) if config_path else None,
        "output_dir": str(out),
        "created_at": created_at or datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "toolkit_version": __version__,
        "resolved_config": cfg.to_dict(),
    }
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    (out / "trials.jsonl").write_text(trials_jsonl(result.records), encoding="utf-8")
    (out / "metrics.csv").write_text(metrics_csv(result.metrics, cfg.fpr_targets,
                                                 result.n_failed), encoding="utf-8")
    report = {
        "schema_version": SCHEMA_VERSION,
        "n_trials": cfg.n_trials,
        "n_failed": result.n_failed,
        "attacks": {a: m.to_dict() for a, m in result.metrics.items()},
    }
    (out / "metrics.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    for attack, m in result.metrics.items():
        if m.roc is not None:
            (out / f"roc_{attack}.csv").write_text(roc_csv(m.roc), encoding="utf-8")
    if result.hybrid_model is not None and "hybrid" in cfg.attacks:
        result.hybrid_model.save(out / "hybrid_model.json")
    return out
