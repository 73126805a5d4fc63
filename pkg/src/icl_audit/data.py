"""Datasets, deduplication, demo/test splitting and per-trial sampling."""

import csv
import json
import re
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from ._rng import CounterRNG, derive_seed
from .exceptions import ConfigurationError, DataValidationError, RecordParseError

_WS = re.compile(r"\s+")


def normalize_text(text: str) -> str:
    """Dedup key: NFC, trimmed, internal whitespace collapsed. Case is kept."""
    return _WS.sub(" ", unicodedata.normalize("NFC", text)).strip()


@dataclass(frozen=True)
class LabelSet:
    names: tuple

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if len(names) < 2:
            raise DataValidationError("a label set needs at least two labels")
        if len(set(names)) != len(names):
            raise DataValidationError(f"duplicate labels in {list(names)}")

    def __contains__(self, label):
        return label in self.names

    def __iter__(self):
        return iter(self.names)

    def __len__(self):
        return len(self.names)


@dataclass(frozen=True)
class LabeledSample:
    text: str
    label: str

    def __post_init__(self):
        if not isinstance(self.text, str) or not self.text.strip():
            raise DataValidationError("sample text must be non-empty")
        if not isinstance(self.label, str) or not self.label:
            raise DataValidationError("sample label must be a non-empty string")

    @property
    def key(self) -> str:
        return normalize_text(self.text)

    def to_dict(self):
        return {"text": self.text, "label": self.label}


@dataclass(frozen=True)
class Dataset:
    name: str
    samples: tuple
    label_set: LabelSet
    duplicates_removed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        for s in self.samples:
            if s.label not in self.label_set:
                raise DataValidationError(
                    f"label {s.label!r} not in label set {list(self.label_set)}"
                )

    def __len__(self):
        return len(self.samples)

    @classmethod
    def from_samples(cls, name, samples, label_set):
        """Build a dataset, dropping later duplicates by normalized text."""
        seen = set()
        kept = []
        for s in samples:
            if s.key in seen:
                continue
            seen.add(s.key)
            kept.append(s)
        return cls(name, tuple(kept), label_set, len(samples) - len(kept))


@dataclass(frozen=True)
class DatasetSplit:
    demo_pool: tuple
    test_pool: tuple
    seed: int


@dataclass(frozen=True)
class TrialInputs:
    demonstrations: tuple
    target_position: int
    nonmember_target: LabeledSample
    trial_seed: int

    @property
    def member_target(self) -> LabeledSample:
        return self.demonstrations[self.target_position]

    def to_dict(self):
        return {
            "demonstrations": [d.to_dict() for d in self.demonstrations],
            "target_position": self.target_position,
            "member_target": self.member_target.to_dict(),
            "nonmember_target": self.nonmember_target.to_dict(),
            "trial_seed": self.trial_seed,
        }


def load_label_manifest(path) -> tuple:
    """Read a ``{"name": ..., "labels": [...]}`` sidecar manifest."""
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    if not isinstance(obj, dict) or "labels" not in obj:
        raise ConfigurationError(f"{path}: manifest needs a 'labels' list")
    return obj.get("name"), LabelSet(tuple(obj["labels"]))


def sidecar_manifest_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".manifest.json")


def _infer_format(path: Path) -> str:
    suffix = path.suffix.lower()
    if suffix in (".jsonl", ".ndjson"):
        return "jsonl"
    if suffix in (".tsv", ".txt"):
        return "tsv"
    raise ConfigurationError(f"cannot infer dataset format from {path.name!r}")


def _read_records(path: Path, fmt: str, header: bool):
    if fmt == "jsonl":
        with open(path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise RecordParseError(path, line_no, f"invalid JSON ({exc.msg})")
                if not isinstance(obj, dict):
                    raise RecordParseError(path, line_no, "record is not an object")
                text, label = obj.get("text"), obj.get("label")
                if not isinstance(text, str) or not isinstance(label, str):
                    raise RecordParseError(path, line_no, "missing 'text' or 'label'")
                yield line_no, text, label
    elif fmt == "tsv":
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh, delimiter="\t", quoting=csv.QUOTE_NONE)
            for line_no, row in enumerate(reader, 1):
                if header and line_no == 1:
                    continue
                if not row or (len(row) == 1 and not row[0].strip()):
                    continue
                if len(row) != 2:
                    raise RecordParseError(
                        path, line_no, f"expected 2 tab-separated columns, got {len(row)}"
                    )
                yield line_no, row[0], row[1]
    else:
        raise ConfigurationError(f"unknown dataset format {fmt!r}")


def load_dataset(
    path,
    format: Optional[str] = None,
    label_set: Optional[LabelSet] = None,
    manifest=None,
    header: bool = False,
    name: Optional[str] = None,
) -> Dataset:
    """Load and deduplicate a TSV or JSON-Lines dataset.

    The label set comes from ``label_set``, an explicit ``manifest`` path, or
    the sidecar ``<stem>.manifest.json`` next to the data file, in that order.
    Without any of these the labels are inferred in first-seen order.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"dataset file not found: {path}")
    fmt = format or _infer_format(path)
    manifest_name = None
    if label_set is None:
        manifest = Path(manifest) if manifest else sidecar_manifest_path(path)
        if manifest.is_file():
            manifest_name, label_set = load_label_manifest(manifest)

    records = list(_read_records(path, fmt, header))
    samples = []
    for line_no, text, label in records:
        if label_set is not None and label not in label_set:
            raise DataValidationError(
                f"{path}:{line_no}: label {label!r} not in {list(label_set)}"
            )
        try:
            samples.append(LabeledSample(text, label))
        except DataValidationError as exc:
            raise DataValidationError(f"{path}:{line_no}: {exc}") from None
    if label_set is None:
        label_set = LabelSet(tuple(dict.fromkeys(s.label for s in samples)))
    return Dataset.from_samples(name or manifest_name or path.stem, samples, label_set)


def load_samples(path, expected_labels: LabelSet, format=None, header=False) -> list:
    """Load samples without deduplication against another dataset's labels."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"file not found: {path}")
    out = []
    for line_no, text, label in _read_records(path, format or _infer_format(path), header):
        if label not in expected_labels:
            raise DataValidationError(
                f"{path}:{line_no}: label {label!r} not in {list(expected_labels)}"
            )
        out.append(LabeledSample(text, label))
    return out


def split_dataset(dataset: Dataset, demo_fraction: float = 0.5, seed: int = 0) -> DatasetSplit:
    """Seeded random partition into a demo pool and a test pool.

    The demo pool gets ``floor(n * demo_fraction)`` samples, clamped so both
    pools hold at least one sample.
    """
    n = len(dataset.samples)
    if not 0.0 < demo_fraction < 1.0:
        raise ConfigurationError(f"demo_fraction must be in (0, 1), got {demo_fraction}")
    if n < 2:
        raise ConfigurationError("need at least two samples to split")
    n_demo = min(max(int(n * demo_fraction), 1), n - 1)
    order = CounterRNG.from_parts("split", seed).shuffle(range(n))
    demo = tuple(dataset.samples[i] for i in sorted(order[:n_demo]))
    test = tuple(dataset.samples[i] for i in sorted(order[n_demo:]))
    return DatasetSplit(demo, test, seed)


def trial_seed(master_seed: int, trial_index: int, namespace: str = "trial") -> int:
    return derive_seed(namespace, master_seed, trial_index)


def sample_trial_inputs(
    split: DatasetSplit, k: int, target_position: int, trial_seed: int
) -> TrialInputs:
    """Draw ``k`` distinct demonstrations and one non-member for a trial."""
    if k < 1:
        raise ConfigurationError("k must be at least 1")
    if k > len(split.demo_pool):
        raise ConfigurationError(
            f"k={k} exceeds the demo pool ({len(split.demo_pool)} samples)"
        )
    if not split.test_pool:
        raise ConfigurationError("test pool is empty")
    if not 0 <= target_position < k:
        raise ConfigurationError(f"target_position {target_position} not in [0, {k})")
    rng = CounterRNG(trial_seed)
    demos = tuple(rng.sample(split.demo_pool, k))
    nonmember = rng.choice(split.test_pool)
    return TrialInputs(demos, target_position, nonmember, trial_seed)
