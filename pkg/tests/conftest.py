import pytest

from icl_audit.data import Dataset, LabeledSample, LabelSet, split_dataset
from icl_audit.prompts import TREC, render_prompt


@pytest.fixture
def trec_labels():
    return LabelSet(TREC.label_names)


@pytest.fixture
def small_dataset(trec_labels):
    rows = [
        ("How far is the moon from the earth?", "Number"),
        ("Where is the Eiffel Tower located?", "Location"),
        ("Who painted the ceiling of the Sistine Chapel?", "Person"),
        ("What is the meaning of photosynthesis?", "Description"),
        ("What kind of animal is a dingo?", "Entity"),
        ("What does NASA stand for?", "Abbreviation"),
        ("How many legs does a spider have?", "Number"),
        ("Where do kangaroos live in the wild?", "Location"),
    ]
    return Dataset.from_samples("small", [LabeledSample(t, y) for t, y in rows], trec_labels)


@pytest.fixture
def small_split(small_dataset):
    return split_dataset(small_dataset, 0.5, seed=3)


@pytest.fixture
def one_demo_prompt(small_dataset):
    return render_prompt(TREC, [small_dataset.samples[0]])


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for criterion in sorted(results):
        terminalreporter.write_line(results[criterion])
