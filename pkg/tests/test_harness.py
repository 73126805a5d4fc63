import json
import random

import pytest

from icl_audit._rng import derive_seed
from icl_audit.client import Provider
from icl_audit.config import ExperimentConfig, HybridConfig
from icl_audit.exceptions import ExperimentError, PermanentProviderError, SchemaVersionError
from icl_audit.harness import (
    ExperimentSetup,
    TrialRecord,
    compute_metrics,
    metrics_csv,
    run_experiment,
    run_trial,
    trials_jsonl,
    write_artifacts,
)
from icl_audit.simulator import SimulatedProvider, SimulatedTargetParams

ALL = ("gap", "inquiry", "repeat", "brainwash", "hybrid")


def cfg(**kw):
    kw.setdefault("n_trials", 40)
    kw.setdefault("hybrid", HybridConfig(shadow_trials=20, epochs=300))
    return ExperimentConfig(**kw)


class FailSome(Provider):
    """Permanent failure for a deterministic subset of prompts."""

    def __init__(self, inner, every):
        super().__init__()
        self.inner, self.every = inner, every

    def generate(self, request, attack=None):
        if derive_seed(request.context.rendered_context) % self.every == 0:
            raise PermanentProviderError("HTTP 400")
        return self.inner.generate(request, attack)


def test_k1_trial_targets():
    rec = run_trial(cfg(attacks=("gap",)), 0)
    assert rec.inputs.demonstrations == (rec.inputs.member_target,)
    assert set(rec.outcomes["gap"]) == {"member", "nonmember"}


def test_k6_last_position():
    rec = run_trial(cfg(k=6, target_position="last", attacks=("gap",)), 3)
    assert rec.inputs.target_position == 5
    assert rec.inputs.member_target == rec.inputs.demonstrations[-1]


def test_trial_is_reproducible():
    c = cfg(attacks=ALL)
    setup = ExperimentSetup.from_config(c)
    from icl_audit.harness import train_hybrid_from_shadow

    setup.hybrid_model, _ = train_hybrid_from_shadow(setup)
    a = json.dumps(run_trial(setup, 7).to_dict())
    b = json.dumps(run_trial(setup, 7).to_dict())
    assert a == b


def test_every_attack_scores_both_targets():
    result = run_experiment(cfg(attacks=ALL))
    for r in result.records:
        assert set(r.outcomes) == set(ALL)
        for per_target in r.outcomes.values():
            assert set(per_target) == {"member", "nonmember"}
    assert set(result.metrics) == set(ALL)
    for attack in ("repeat", "brainwash", "hybrid"):
        assert result.metrics[attack].roc is not None
    for attack in ("gap", "inquiry"):
        assert result.metrics[attack].roc is None


def test_parallelism_does_not_change_results():
    a = run_experiment(cfg(attacks=ALL))
    b = run_experiment(cfg(attacks=ALL, parallelism=4))
    assert trials_jsonl(a.records) == trials_jsonl(b.records)
    assert metrics_csv(a.metrics, a.config.fpr_targets) == metrics_csv(b.metrics,
                                                                      b.config.fpr_targets)


def test_metrics_are_order_insensitive():
    result = run_experiment(cfg(attacks=("repeat", "brainwash")))
    shuffled = list(result.records)
    random.Random(1).shuffle(shuffled)
    again = compute_metrics(shuffled, ("repeat", "brainwash"))
    for attack, m in result.metrics.items():
        assert again[attack].to_dict() == m.to_dict()


def test_all_correct_oracle_gives_gap_advantage_one():
    sim = SimulatedTargetParams(p_correct_member=1.0, p_correct_nonmember=0.0)
    result = run_experiment(cfg(attacks=("gap",), simulator=sim))
    assert result.metrics["gap"].advantage == 1.0


def test_null_oracle_advantage_near_zero():
    # Binomial null: with 1000 decisions, sd(adv) = 2 * sqrt(0.25 / 1000) ~= 0.032,
    # so +-0.09 is a ~2.8 sigma band.
    sim = SimulatedTargetParams(p_correct_member=0.7, p_correct_nonmember=0.7,
                                p_yes_member=0.5, p_yes_nonmember=0.5,
                                repeat_fidelity_member=0.5, repeat_fidelity_nonmember=0.5,
                                mean_firmness_member=3.0, mean_firmness_nonmember=3.0)
    result = run_experiment(cfg(n_trials=500, attacks=("gap", "inquiry", "repeat", "brainwash"),
                                simulator=sim))
    for attack, m in result.metrics.items():
        assert abs(m.advantage) <= 0.09, attack


def test_brainwash_beats_repeat_when_firmness_gap_dominates():
    # Analytic: repeat fidelity 0.6/0.5 gives adv ~= 0.1; firmness 8/1.2 separates strongly.
    sim = SimulatedTargetParams(repeat_fidelity_member=0.6, repeat_fidelity_nonmember=0.5,
                                mean_firmness_member=8.0, mean_firmness_nonmember=1.2)
    result = run_experiment(cfg(n_trials=300, attacks=("repeat", "brainwash"), simulator=sim))
    assert result.metrics["brainwash"].advantage > result.metrics["repeat"].advantage


def test_failed_trials_are_excluded_and_counted():
    c = cfg(attacks=("gap",), n_trials=60, max_failed_fraction=0.5)
    setup = ExperimentSetup.from_config(c)
    setup.target = FailSome(setup.target, every=8)
    result = run_experiment(c, setup)
    failed = [r for r in result.records if r.failed]
    assert 0 < result.n_failed == len(failed)
    assert all("PermanentProviderError" in r.error for r in failed)
    assert result.metrics["gap"].n_members == 60 - result.n_failed


def test_too_many_failures_is_an_experiment_error():
    c = cfg(attacks=("gap",), n_trials=30)
    setup = ExperimentSetup.from_config(c)
    setup.target = FailSome(setup.target, every=1)
    with pytest.raises(ExperimentError):
        run_experiment(c, setup)


def test_record_round_trip_and_schema():
    rec = run_trial(cfg(attacks=("gap", "brainwash")), 2)
    again = TrialRecord.from_dict(json.loads(json.dumps(rec.to_dict())))
    assert again.to_dict() == rec.to_dict()
    bad = dict(rec.to_dict(), schema_version=99)
    with pytest.raises(SchemaVersionError):
        TrialRecord.from_dict(bad)


def test_synthetic_substitution_is_recorded():
    from icl_audit.defenses import DefenseConfig

    c = cfg(attacks=("gap",), defense=DefenseConfig(synthetic_demos_path="builtin:trec_synthetic"))
    rec = run_trial(c, 0)
    assert rec.prompt_demonstrations is not None
    assert rec.inputs.member_target not in rec.prompt_demonstrations


def test_write_artifacts(tmp_path):
    result = run_experiment(cfg(attacks=("gap", "repeat", "hybrid")))
    out = write_artifacts(result, tmp_path / "run")
    names = sorted(p.name for p in out.iterdir())
    assert names == ["hybrid_model.json", "manifest.json", "metrics.csv", "metrics.json",
                     "roc_hybrid.csv", "roc_repeat.csv", "trials.jsonl"]
    manifest = json.loads((out / "manifest.json").read_text())
    assert set(manifest) >= {"config_path", "output_dir", "created_at", "toolkit_version",
                             "resolved_config"}
    header = (out / "metrics.csv").read_text().splitlines()[0]
    assert header.startswith("attack,n_members,n_nonmembers")
    assert (out / "roc_repeat.csv").read_text().startswith("fpr,tpr\n0.0,0.0\n")
    with pytest.raises(FileExistsError):
        write_artifacts(result, out)
    write_artifacts(result, out, force=True)


def test_custom_provider_injection():
    c = cfg(attacks=("gap",), n_trials=5)
    base = ExperimentSetup.from_config(c)
    prov = SimulatedProvider(SimulatedTargetParams(p_correct_member=1.0, p_correct_nonmember=1.0),
                             base.template, base.dataset.samples)
    setup = ExperimentSetup.from_config(c, provider=prov)
    result = run_experiment(c, setup)
    assert result.metrics["gap"].advantage == 0.0
