"""The four text-only membership inference attacks.

Each attack maps one target sample to an :class:`AttackOutcome` using only
generated text. The hybrid combiner lives in :mod:`icl_audit.hybrid`.
"""

import re
from dataclasses import dataclass, field

from .client import ChatTurn
from .embedding import cosine_similarity
from .exceptions import AttackError, ConfigurationError, ProviderError, ShortSampleError
from .prompts import inquiry_query, render_query

ATTACKS = ("gap", "inquiry", "repeat", "brainwash", "hybrid")
SCORE_ATTACKS = ("repeat", "brainwash", "hybrid")

MEMBER, NONMEMBER, ABSTAIN = "member", "nonmember", "abstain"


@dataclass(frozen=True)
class AttackOutcome:
    attack: str
    raw_score: float
    decision: str
    queries_used: int
    details: dict = field(default_factory=dict, compare=False)

    def to_dict(self):
        out = {
            "attack": self.attack,
            "raw_score": self.raw_score,
            "decision": self.decision,
            "queries_used": self.queries_used,
        }
        if self.details:
            out["details"] = self.details
        return out

    @classmethod
    def from_dict(cls, obj):
        return cls(obj["attack"], float(obj["raw_score"]), obj["decision"],
                   int(obj["queries_used"]), dict(obj.get("details", {})))


@dataclass(frozen=True)
class RepeatConfig:
    prefix_words: int = 3
    theta_sim: float = 0.85

    def __post_init__(self):
        if self.prefix_words < 1:
            raise ConfigurationError("prefix_words must be >= 1")
        if not -1.0 <= self.theta_sim <= 1.0:
            raise ConfigurationError("theta_sim must be in [-1, 1]")


@dataclass(frozen=True)
class BrainwashConfig:
    max_iterations: int = 10
    wrong_label_count: int = 3
    theta_iter: float = 3.5
    fresh_session: bool = False

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ConfigurationError("max_iterations must be >= 1")
        if self.wrong_label_count < 1:
            raise ConfigurationError("wrong_label_count must be >= 1")

    def n_wrong(self, labels) -> int:
        if len(labels) < 2:
            raise ConfigurationError("brainwash needs at least two labels")
        return min(self.wrong_label_count, len(labels) - 1)


def decide(attack: str, score: float, threshold: float) -> str:
    """Threshold rule shared by every score-based attack: member iff score >= threshold."""
    return MEMBER if score >= threshold else NONMEMBER


# -- output parsing ------------------------------------------------------

_YES = ("yes", "yeah", "i have seen")
_NO = ("no", "not", "haven't", "have not")


def _earliest(text, tokens):
    best = None
    for tok in tokens:
        m = re.search(r"(?<!\w)" + re.escape(tok) + r"(?!\w)", text)
        if m and (best is None or m.start() < best):
            best = m.start()
    return best


def parse_yes_no(text: str) -> str:
    """``"yes"``, ``"no"`` or ``"unknown"``; whichever token class appears first wins."""
    low = re.sub(r"\s+", " ", text.lower()).replace("’", "'")
    yes, no = _earliest(low, _YES), _earliest(low, _NO)
    if yes is None and no is None:
        return "unknown"
    if no is None or (yes is not None and yes < no):
        return "yes"
    return "no"


def parse_label(text: str, labels):
    """Label whose name occurs first in ``text`` (case-insensitive, whole words).

    Ties at the same offset go to the longer name; None if no label occurs.
    """
    low = re.sub(r"\s+", " ", text).lower()
    best = None
    for name in labels:
        m = re.search(r"(?<!\w)" + re.escape(name.lower()) + r"(?!\w)", low)
        if m is None:
            continue
        key = (m.start(), -len(name))
        if best is None or key < best[0]:
            best = (key, name)
    return None if best is None else best[1]


# -- attacks ---------------------------------------------------------------


def _ask(provider, prompt, turns, attack):
    return provider.generate(provider.request(prompt, turns), attack=attack)


def gap_attack(provider, template, prompt, x: str, y: str) -> AttackOutcome:
    """Member iff the model classifies ``x`` correctly."""
    if y not in template.label_names:
        raise ConfigurationError(f"label {y!r} not in template {template.id!r}")
    reply = _ask(provider, prompt, [ChatTurn("user", render_query(template, x))], "gap")
    predicted = parse_label(reply, template.label_names)
    if predicted is None:
        return AttackOutcome("gap", 0.0, ABSTAIN, 1, {"response": reply})
    score = 1.0 if predicted == y else 0.0
    return AttackOutcome("gap", score, decide("gap", score, 1.0), 1, {"predicted": predicted})


def inquiry_attack(provider, prompt, x: str) -> AttackOutcome:
    if not x:
        raise ConfigurationError("inquiry target must be non-empty")
    reply = _ask(provider, prompt, [ChatTurn("user", inquiry_query(x))], "inquiry")
    answer = parse_yes_no(reply)
    if answer == "unknown":
        return AttackOutcome("inquiry", 0.0, ABSTAIN, 1, {"response": reply})
    score = 1.0 if answer == "yes" else 0.0
    return AttackOutcome("inquiry", score, decide("inquiry", score, 1.0), 1)


def repeat_attack(provider, embedder, prompt, x: str, cfg: RepeatConfig = RepeatConfig()
                  ) -> AttackOutcome:
    """Feed the first words of ``x``; score the completion by similarity to ``x``.

    ``x`` needs more words than ``cfg.prefix_words`` so something is left to
    complete; otherwise :class:`ShortSampleError` is raised.
    """
    words = x.split()
    if len(words) <= cfg.prefix_words:
        raise ShortSampleError(len(words), cfg.prefix_words)
    prefix = " ".join(words[:cfg.prefix_words])
    completion = _ask(provider, prompt, [ChatTurn("user", prefix)], "repeat")
    regenerated = f"{prefix} {completion.strip()}"
    score = cosine_similarity(embedder.embed(x), embedder.embed(regenerated))
    return AttackOutcome("repeat", score, decide("repeat", score, cfg.theta_sim), 1,
                         {"prefix_words": cfg.prefix_words, "completion": completion})


def repeat_attack_with_fallback(provider, embedder, prompt, x, cfg=RepeatConfig()):
    """:func:`repeat_attack`, shortening the prefix to ``len(words) - 1`` when
    the sample is too short; abstains when even one word cannot be held out."""
    try:
        return repeat_attack(provider, embedder, prompt, x, cfg)
    except ShortSampleError as exc:
        if exc.n_words < 2:
            return AttackOutcome("repeat", -1.0, ABSTAIN, 0, {"short_sample": True})
        shorter = RepeatConfig(exc.n_words - 1, cfg.theta_sim)
        out = repeat_attack(provider, embedder, prompt, x, shorter)
        return AttackOutcome(out.attack, out.raw_score, out.decision, out.queries_used,
                             dict(out.details, fallback=True))


def wrong_labels(labels, y, count):
    """First ``count`` labels in label-set order, skipping ``y``."""
    return [lab for lab in labels if lab != y][:count]


def brainwash_attack(provider, template, prompt, x: str, y: str,
                     cfg: BrainwashConfig = BrainwashConfig()) -> AttackOutcome:
    """Repeatedly assert a wrong label for ``x`` and count queries until the model adopts it.

    Each wrong label runs its own conversation. The score is the mean
    iteration count; hitting the cap counts as ``cfg.max_iterations``.
    """
    labels = template.label_names
    if y not in labels:
        raise ConfigurationError(f"label {y!r} not in template {template.id!r}")
    query = render_query(template, x)
    counts = {}
    queries = 0
    for wrong in wrong_labels(labels, y, cfg.n_wrong(labels)):
        block = template.demo_block(x, wrong)
        turns = []
        count = cfg.max_iterations
        for i in range(1, cfg.max_iterations + 1):
            if cfg.fresh_session:
                turns = [ChatTurn("user", template.separator.join([block] * i + [query]))]
            else:
                turns.append(ChatTurn("user", f"{block}{template.separator}{query}"))
            try:
                reply = _ask(provider, prompt, turns, "brainwash")
            except ProviderError as exc:
                raise AttackError(f"brainwash interrupted: {exc}",
                                  {"counts": counts, "queries_used": queries}) from exc
            queries += 1
            if not cfg.fresh_session:
                turns.append(ChatTurn("assistant", reply))
            if parse_label(reply, labels) == wrong:
                count = i
                break
        counts[wrong] = count
    score = sum(counts.values()) / len(counts)
    return AttackOutcome("brainwash", score, decide("brainwash", score, cfg.theta_iter), queries,
                         {"counts": counts, "max_iterations": cfg.max_iterations})


def extract_features(repeat_outcome: AttackOutcome, brainwash_outcome: AttackOutcome):
    """Hybrid input: (similarity, mean iterations / iteration cap)."""
    if repeat_outcome.attack != "repeat" or brainwash_outcome.attack != "brainwash":
        raise ConfigurationError("extract_features needs a repeat and a brainwash outcome")
    cap = brainwash_outcome.details.get("max_iterations")
    if not cap:
        raise ConfigurationError("brainwash outcome does not record max_iterations")
    return (float(repeat_outcome.raw_score), float(brainwash_outcome.raw_score) / cap)
