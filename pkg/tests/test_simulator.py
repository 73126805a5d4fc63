import pytest

from icl_audit.client import ChatTurn
from icl_audit.data import LabeledSample
from icl_audit.exceptions import ConfigurationError
from icl_audit.prompts import TREC, inquiry_query, render_prompt, render_query
from icl_audit.simulator import (
    NO_REPLY,
    YES_REPLY,
    SimulatedProvider,
    SimulatedTargetParams,
    simulate_response,
)

MEMBER = LabeledSample("How many legs does a spider have today?", "Number")
OTHER = LabeledSample("Where do kangaroos live in the wild?", "Location")
PROMPT = render_prompt(TREC, [MEMBER])


def ask(params, text, corpus=(OTHER,)):
    return simulate_response(params, PROMPT, [ChatTurn("user", text)], TREC, corpus)


def test_params_validation():
    with pytest.raises(ConfigurationError):
        SimulatedTargetParams(p_correct_member=1.2)
    with pytest.raises(ConfigurationError):
        SimulatedTargetParams(mean_firmness_member=0.5)
    with pytest.raises(ConfigurationError):
        SimulatedTargetParams.from_dict({"bogus": 1})


def test_forced_classification():
    p = SimulatedTargetParams(p_correct_member=1.0, p_correct_nonmember=0.0)
    assert ask(p, render_query(TREC, MEMBER.text)) == "Number"
    assert ask(p, render_query(TREC, OTHER.text)) != "Location"


def test_forced_inquiry():
    p = SimulatedTargetParams(p_yes_member=1.0, p_yes_nonmember=0.0)
    assert ask(p, inquiry_query(MEMBER.text)) == YES_REPLY
    assert ask(p, inquiry_query(OTHER.text)) == NO_REPLY


def test_completion_fidelity_extremes():
    p = SimulatedTargetParams(repeat_fidelity_member=1.0, repeat_fidelity_nonmember=0.0)
    assert ask(p, "How many legs") == "does a spider have today?"
    out = ask(p, "Where do kangaroos")
    assert out != "live in the wild?"
    assert len(out.split()) == 4


def test_unknown_prefix_gets_filler():
    out = ask(SimulatedTargetParams(), "Zebra quantum")
    assert len(out.split()) == 8


def test_brainwash_flip_at_firmness():
    p = SimulatedTargetParams(mean_firmness_member=1.0)
    block = TREC.demo_block(MEMBER.text, "Person")
    msg = block + "\n" + render_query(TREC, MEMBER.text)
    assert simulate_response(p, PROMPT, [ChatTurn("user", msg)], TREC) == "Person"


def test_response_is_deterministic():
    p = SimulatedTargetParams(p_correct_member=0.5)
    q = render_query(TREC, MEMBER.text)
    assert len({ask(p, q) for _ in range(10)}) == 1


def test_seed_changes_stream():
    q = render_query(TREC, MEMBER.text)
    answers = {ask(SimulatedTargetParams(p_correct_member=0.5, seed=s), q) for s in range(40)}
    assert len(answers) > 1


def test_provider_counts_queries():
    prov = SimulatedProvider(SimulatedTargetParams(), TREC, [OTHER])
    prov.generate(prov.request(PROMPT, [ChatTurn("user", render_query(TREC, OTHER.text))]),
                  attack="gap")
    assert prov.ledger.total_requests == 1
    assert prov.ledger.per_attack_requests == {"gap": 1}


def test_gap_rate_matches_parameter():
    # Mean correctness over independent contexts approaches p_correct_member.
    p = SimulatedTargetParams(p_correct_member=0.7)
    hits = 0
    n = 2000
    for i in range(n):
        demo = LabeledSample(f"Question number {i} about spiders?", "Number")
        prompt = render_prompt(TREC, [demo])
        out = simulate_response(p, prompt, [ChatTurn("user", render_query(TREC, demo.text))], TREC)
        hits += out == "Number"
    assert abs(hits / n - 0.7) < 0.035
