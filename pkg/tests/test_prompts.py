import pytest
from hypothesis import given, strategies as st

from icl_audit.data import LabeledSample, LabelSet
from icl_audit.exceptions import ConfigurationError, TemplateError
from icl_audit.prompts import (
    AGNEWS,
    DBPEDIA,
    TREC,
    PromptTemplate,
    classify_query,
    count_demo_blocks,
    get_template,
    inquiry_query,
    load_template,
    render_prompt,
    render_query,
    with_defense_suffix,
)


def test_trec_rendering_layout():
    demos = [LabeledSample("What is a biosphere?", "Description"),
             LabeledSample("When was Ozzy Osbourne born?", "Number")]
    p = render_prompt(TREC, demos)
    assert p.rendered_context == (
        "Classify the questions based on whether their answer type is a Number, Location, "
        "Person, Description, Entity, or Abbreviation.\n\n"
        "Question: What is a biosphere?\nAnswer Type: Description\n"
        "Question: When was Ozzy Osbourne born?\nAnswer Type: Number"
    )
    assert p.demonstrations == tuple(demos)


def test_template_without_instruction():
    p = render_prompt(AGNEWS, [LabeledSample("Markets rally", "Business")])
    assert p.rendered_context == "Article: Markets rally\nAnswer: Business"


def test_builtin_label_sets():
    assert len(TREC.label_names) == 6
    assert len(AGNEWS.label_names) == 4
    assert len(DBPEDIA.label_names) == 14


def test_query_and_inquiry_strings():
    assert render_query(TREC, "Who is Bob?") == "Question: Who is Bob?\nAnswer Type:"
    assert inquiry_query("Who is Bob?") == "Have you seen this sentence before: Who is Bob??"


def test_braces_in_text_are_not_reinterpreted():
    block = TREC.demo_block("What is {y} in {x}?", "Entity")
    assert block == "Question: What is {y} in {x}?\nAnswer Type: Entity"


def test_invalid_templates():
    labels = LabelSet(("a", "b"))
    with pytest.raises(TemplateError):
        PromptTemplate("t", "", "Q: {x}", "Q: {x}", labels)
    with pytest.raises(TemplateError):
        PromptTemplate("t", "", "Q: {x} A: {y}", "Q: A:", labels)
    with pytest.raises(TemplateError):
        PromptTemplate("t", "", "Q: {x} A: {y}", "Q: {x} A: {y}", labels)


def test_render_rejects_foreign_label_and_empty():
    with pytest.raises(ConfigurationError):
        render_prompt(TREC, [LabeledSample("x", "Sports")])
    with pytest.raises(ConfigurationError):
        render_prompt(TREC, [])
    with pytest.raises(ConfigurationError):
        render_query(TREC, "  ")


def test_defense_suffix_rendering():
    p = render_prompt(TREC, [LabeledSample("Who is Bob?", "Person")])
    q = with_defense_suffix(TREC, p, "Be careful.")
    assert q.rendered_context == p.rendered_context + "\n\nBe careful."
    assert q.defense_suffix == "Be careful."


def test_template_manifest_round_trip(tmp_path):
    import json

    path = tmp_path / "t.json"
    path.write_text(json.dumps(TREC.to_dict()))
    assert load_template(path) == TREC
    assert get_template(str(path)) == TREC
    with pytest.raises(ConfigurationError):
        get_template("nope")


def test_query_recognition():
    x = "Who is Bob?"
    assert classify_query(TREC, inquiry_query(x)).kind == "inquiry"
    assert classify_query(TREC, inquiry_query(x)).text == x
    q = classify_query(TREC, render_query(TREC, x))
    assert (q.kind, q.text) == ("classify", x)
    pushed = TREC.demo_block(x, "Number") + "\n" + render_query(TREC, x)
    assert classify_query(TREC, pushed).text == x
    assert classify_query(TREC, "Who is").kind == "complete"


def test_count_demo_blocks():
    block = TREC.demo_block("Who?", "Number")
    msgs = [block + "\n" + render_query(TREC, "Who?"), block]
    assert count_demo_blocks(TREC, msgs, "Who?", "Number") == 2
    assert count_demo_blocks(TREC, msgs, "Who?", "Person") == 0


@given(st.text(alphabet=st.characters(blacklist_categories=("Cs",)), min_size=1)
       .filter(lambda s: s.strip()))
def test_classification_query_recovers_text(x):
    assert classify_query(TREC, render_query(TREC, x)).text == x
