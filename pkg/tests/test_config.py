import pytest

from icl_audit.config import ExperimentConfig, config_from_dict, expand_sweep, is_sweep, load_config
from icl_audit.exceptions import ConfigurationError


def test_defaults():
    c = ExperimentConfig()
    assert c.n_trials == 500
    assert c.fpr_targets == (0.01, 0.05, 0.1)
    assert c.repeat.theta_sim == 0.85 and c.brainwash.theta_iter == 3.5
    assert c.hybrid.hidden_units == 8 and c.hybrid.epochs == 2000
    assert c.hybrid.learning_rate == 0.1


def test_load_toml(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("""
name = "t"
n_trials = 20
k = 3
target_position = "last"
attacks = ["gap", "repeat"]
[simulator]
p_correct_member = 1.0
[defense]
instruction_defense = true
""")
    c = load_config(p)
    assert c.k == 3 and c.position_index == 2
    assert c.attacks == ("gap", "repeat")
    assert c.simulator.p_correct_member == 1.0
    assert c.defense.instruction_defense
    assert c.base_dir == str(tmp_path)


@pytest.mark.parametrize("obj", [
    {"n_trials": 0}, {"k": 2, "target_position": 2}, {"attacks": ["magic"]},
    {"bogus": 1}, {"simulator": {"nope": 1}}, {"fpr_targets": [1.5]},
    {"provider": {"kind": "http"}}, {"target_position": "middle"},
])
def test_invalid_configs(obj):
    with pytest.raises(ConfigurationError):
        config_from_dict(obj)


def test_bad_toml(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text("n_trials = = 3")
    with pytest.raises(ConfigurationError):
        load_config(p)
    with pytest.raises(ConfigurationError):
        load_config(tmp_path / "missing.toml")


def test_builtin_paths():
    c = ExperimentConfig()
    assert c.resolve_path("builtin:trec_sample").name == "trec_sample.jsonl"
    with pytest.raises(ConfigurationError):
        c.resolve_path("builtin:nothing")


def test_sweep_expansion():
    c = config_from_dict({"sweep": {"k": [1, 2, 6]}, "target_position": "last"})
    arms = expand_sweep(c)
    assert [lab for lab, _ in arms] == ["k1_pos0", "k2_pos1", "k6_pos5"]
    assert all(a.master_seed == c.master_seed for _, a in arms)
    pos = expand_sweep(config_from_dict({"k": 6, "target_position": "sweep"}))
    assert [a.position_index for _, a in pos] == list(range(6))
    assert is_sweep(config_from_dict({"k": 6, "target_position": "sweep"}))
    models = expand_sweep(config_from_dict({"sweep": {"models": ["a", "b"]}}))
    assert [a.provider.model_name for _, a in models] == ["a", "b"]
    assert not is_sweep(ExperimentConfig())


def test_to_dict_is_json_ready():
    import json

    json.dumps(ExperimentConfig().to_dict())
