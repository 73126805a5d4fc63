"""ICL prompt templates and rendering.

A prompt is the optional instruction followed by the demonstrations, each
serialized with the template's demo pattern. Queries use the same layout with
the answer slot left empty.
"""

import json
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from .data import LabelSet
from .exceptions import ConfigurationError, TemplateError

INQUIRY_PREFIX = "Have you seen this sentence before: "
INQUIRY_SUFFIX = "?"

_PLACEHOLDER = re.compile(r"\{x\}|\{y\}")


def _fill(pattern: str, x: str, y: str = "") -> str:
    # Single pass so braces inside x never get substituted again.
    return _PLACEHOLDER.sub(lambda m: x if m.group(0) == "{x}" else y, pattern)


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    instruction: str
    demo_pattern: str
    query_pattern: str
    label_names: LabelSet
    separator: str = "\n"

    def __post_init__(self):
        if "{x}" not in self.demo_pattern or "{y}" not in self.demo_pattern:
            raise TemplateError(f"{self.id}: demo_pattern needs {{x}} and {{y}}")
        if "{x}" not in self.query_pattern:
            raise TemplateError(f"{self.id}: query_pattern needs {{x}}")
        if "{y}" in self.query_pattern:
            raise TemplateError(f"{self.id}: query_pattern must not contain {{y}}")
        if self.query_pattern.count("{x}") != 1:
            raise TemplateError(f"{self.id}: query_pattern needs exactly one {{x}}")

    def demo_block(self, x: str, y: str) -> str:
        return _fill(self.demo_pattern, x, y)

    def query(self, x: str) -> str:
        return _fill(self.query_pattern, x)

    def to_dict(self):
        return {
            "id": self.id,
            "instruction": self.instruction,
            "demo_pattern": self.demo_pattern,
            "query_pattern": self.query_pattern,
            "separator": self.separator,
            "labels": list(self.label_names),
        }

    @classmethod
    def from_dict(cls, obj):
        missing = {"id", "demo_pattern", "query_pattern", "labels"} - set(obj)
        if missing:
            raise TemplateError(f"template manifest missing fields: {sorted(missing)}")
        return cls(
            id=obj["id"],
            instruction=obj.get("instruction", ""),
            demo_pattern=obj["demo_pattern"],
            query_pattern=obj["query_pattern"],
            label_names=LabelSet(tuple(obj["labels"])),
            separator=obj.get("separator", "\n"),
        )


@dataclass(frozen=True)
class BuiltPrompt:
    template_id: str
    demonstrations: tuple
    rendered_context: str
    defense_suffix: Optional[str] = None
    # Per-trial sampling key for simulated targets; never sent over the wire.
    nonce: Optional[int] = None


TREC = PromptTemplate(
    id="trec",
    instruction=(
        "Classify the questions based on whether their answer type is a Number, "
        "Location, Person, Description, Entity, or Abbreviation."
    ),
    demo_pattern="Question: {x}\nAnswer Type: {y}",
    query_pattern="Question: {x}\nAnswer Type:",
    label_names=LabelSet(
        ("Number", "Location", "Person", "Description", "Entity", "Abbreviation")
    ),
)

AGNEWS = PromptTemplate(
    id="agnews",
    instruction="",
    demo_pattern="Article: {x}\nAnswer: {y}",
    query_pattern="Article: {x}\nAnswer:",
    label_names=LabelSet(("World", "Sports", "Business", "Technology")),
)

DBPEDIA = PromptTemplate(
    id="dbpedia",
    instruction=(
        "Classify the documents based on whether they are about a Company, School, "
        "Artist, Athlete, Politician, Transportation, Building, Nature, Village, "
        "Animal, Plant, Album, Film, or Book."
    ),
    demo_pattern="Article: {x}\nAnswer: {y}",
    query_pattern="Article: {x}\nAnswer:",
    label_names=LabelSet(
        (
            "Company", "School", "Artist", "Athlete", "Politician", "Transportation",
            "Building", "Nature", "Village", "Animal", "Plant", "Album", "Film", "Book",
        )
    ),
)

BUILTIN_TEMPLATES = {t.id: t for t in (TREC, AGNEWS, DBPEDIA)}


def load_template(path) -> PromptTemplate:
    with open(path, encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise TemplateError(f"{path}: invalid JSON ({exc.msg})") from None
    return PromptTemplate.from_dict(obj)


def get_template(id_or_path) -> PromptTemplate:
    if id_or_path in BUILTIN_TEMPLATES:
        return BUILTIN_TEMPLATES[id_or_path]
    if Path(str(id_or_path)).is_file():
        return load_template(id_or_path)
    raise ConfigurationError(
        f"unknown template {id_or_path!r}; built-ins: {sorted(BUILTIN_TEMPLATES)}"
    )


def _join_context(template: PromptTemplate, demo_blocks, suffix: Optional[str]) -> str:
    body = template.separator.join(demo_blocks)
    context = f"{template.instruction}\n\n{body}" if template.instruction else body
    if suffix:
        context = f"{context}\n\n{suffix}"
    return context


def render_prompt(
    template: PromptTemplate, demos, defense_suffix: Optional[str] = None
) -> BuiltPrompt:
    demos = tuple(demos)
    if not demos:
        raise ConfigurationError("a prompt needs at least one demonstration")
    for d in demos:
        if d.label not in template.label_names:
            raise ConfigurationError(
                f"demonstration label {d.label!r} not in template {template.id!r}"
            )
    blocks = [template.demo_block(d.text, d.label) for d in demos]
    return BuiltPrompt(
        template.id, demos, _join_context(template, blocks, defense_suffix), defense_suffix
    )


def with_defense_suffix(
    template: PromptTemplate, prompt: BuiltPrompt, suffix: Optional[str]
) -> BuiltPrompt:
    rebuilt = render_prompt(template, prompt.demonstrations, suffix)
    return replace(rebuilt, template_id=prompt.template_id)


def render_query(template: PromptTemplate, x: str) -> str:
    if not x or not x.strip():
        raise ConfigurationError("query text must be non-empty")
    return template.query(x)


def inquiry_query(x: str) -> str:
    return f"{INQUIRY_PREFIX}{x}{INQUIRY_SUFFIX}"


# -- query recognition -----------------------------------------------------
# The simulated target and the server-side defense wrappers need to know what
# kind of request they are looking at. They rely on the exact structural
# markers emitted by the attacks, never on fuzzy matching.


@dataclass(frozen=True)
class QueryKind:
    kind: str  # "inquiry" | "classify" | "complete"
    text: str


def parse_inquiry(message: str) -> Optional[str]:
    if message.startswith(INQUIRY_PREFIX) and message.endswith(INQUIRY_SUFFIX):
        x = message[len(INQUIRY_PREFIX):len(message) - len(INQUIRY_SUFFIX)]
        if x:
            return x
    return None


def parse_classification(template: PromptTemplate, message: str) -> Optional[str]:
    """Return x when ``message`` ends with the template's query for x.

    The message may carry earlier blocks (brainwash exchanges); the query is
    located at the last position where the pattern prefix fits.
    """
    head, tail = template.query_pattern.split("{x}")
    if not message.endswith(tail):
        return None
    end = len(message) - len(tail)
    if not head:
        x = message[:end]
        return x or None
    starts = [m.start() for m in re.finditer(re.escape(head), message)]
    for start in reversed(starts):
        if start > 0 and not message[:start].endswith(template.separator):
            continue
        x = message[start + len(head):end]
        if x:
            return x
    return None


def classify_query(template: Optional[PromptTemplate], message: str) -> QueryKind:
    x = parse_inquiry(message)
    if x is not None:
        return QueryKind("inquiry", x)
    if template is not None:
        x = parse_classification(template, message)
        if x is not None:
            return QueryKind("classify", x)
    return QueryKind("complete", message)


def count_demo_blocks(template: PromptTemplate, messages, x: str, label: str) -> int:
    block = template.demo_block(x, label)
    return sum(m.count(block) for m in messages)
