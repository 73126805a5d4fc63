"""Deterministic simulated target model with plantable memorization.

The simulator answers exactly the request shapes the attacks emit and
behaves differently for texts that appear among the prompt's
demonstrations. All randomness comes from :class:`~icl_audit._rng.CounterRNG`
streams keyed by the seed, the rendered prompt, the queried text and the
query kind, so responses are a pure function of the request.
"""

from dataclasses import dataclass
from typing import Optional

from ._rng import CounterRNG
from .client import Provider
from .exceptions import ConfigurationError
from .prompts import BUILTIN_TEMPLATES, PromptTemplate, classify_query, count_demo_blocks

FIRMNESS_CAP = 1000

# Neutral filler vocabulary for failed reproductions.
FILLER_WORDS = (
    "river", "lantern", "quietly", "orange", "market", "seven", "cloud", "paper",
    "window", "garden", "silver", "motion", "harbor", "pencil", "winter", "signal",
    "bridge", "copper", "forest", "engine", "yellow", "planet", "basket", "mirror",
    "thunder", "velvet", "candle", "marble", "saddle", "tunnel", "meadow", "rocket",
)

YES_REPLY = "Yes, I have seen this sentence before."
NO_REPLY = "No, I have not seen this sentence before."


@dataclass(frozen=True)
class SimulatedTargetParams:
    p_correct_member: float = 0.9
    p_correct_nonmember: float = 0.6
    p_yes_member: float = 0.5
    p_yes_nonmember: float = 0.5
    repeat_fidelity_member: float = 0.9
    repeat_fidelity_nonmember: float = 0.1
    mean_firmness_member: float = 6.0
    mean_firmness_nonmember: float = 1.5
    seed: int = 0

    def __post_init__(self):
        for name in ("p_correct_member", "p_correct_nonmember", "p_yes_member",
                     "p_yes_nonmember", "repeat_fidelity_member", "repeat_fidelity_nonmember"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigurationError(f"{name} must be in [0, 1], got {v}")
        for name in ("mean_firmness_member", "mean_firmness_nonmember"):
            if getattr(self, name) < 1.0:
                raise ConfigurationError(f"{name} must be >= 1")

    @classmethod
    def from_dict(cls, obj):
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigurationError(f"unknown simulator parameters: {sorted(unknown)}")
        return cls(**obj)


def _filler(rng: CounterRNG, n_words: int) -> str:
    return " ".join(rng.choice(FILLER_WORDS) for _ in range(max(n_words, 1)))


def _wrong_label(rng, labels, correct):
    wrong = [lab for lab in labels if lab != correct]
    return rng.choice(wrong)


def _lookup(samples, text):
    for s in samples:
        if s.text == text:
            return s
    return None


def _prefix_match(samples, words):
    n = len(words)
    for s in samples:
        sw = s.text.split()
        if len(sw) >= n and sw[:n] == words:
            return s
    return None


def simulate_response(
    params: SimulatedTargetParams,
    prompt,
    turns,
    template: Optional[PromptTemplate] = None,
    corpus=(),
) -> str:
    """Answer one request as the simulated target.

    ``corpus`` plays the role of the model's world knowledge: it supplies true
    labels and true continuations for texts that are not in the prompt.
    """
    if not turns or turns[-1].role != "user":
        raise ValueError("turns must end with a user turn")
    if template is None:
        template = BUILTIN_TEMPLATES.get(prompt.template_id)
    labels = tuple(template.label_names) if template is not None else ()
    demos = prompt.demonstrations
    context = prompt.rendered_context
    nonce = "" if prompt.nonce is None else prompt.nonce
    message = turns[-1].content
    query = classify_query(template, message)

    def rng_for(kind, *extra):
        return CounterRNG.from_parts(params.seed, nonce, context, query.text, kind, *extra)

    if query.kind == "inquiry":
        member = _lookup(demos, query.text) is not None
        p = params.p_yes_member if member else params.p_yes_nonmember
        return YES_REPLY if rng_for("inquiry").bernoulli(p) else NO_REPLY

    if query.kind == "classify":
        sample = _lookup(demos, query.text)
        member = sample is not None
        if sample is None:
            sample = _lookup(corpus, query.text)
        if sample is None:
            return rng_for("unknown-label").choice(labels)
        truth = sample.label
        user_messages = [t.content for t in turns if t.role == "user"]
        # Brainwash: the latest wrong label asserted for this text, if any.
        pushed = None
        for m in reversed(user_messages):
            for lab in labels:
                if lab != truth and template.demo_block(query.text, lab) in m:
                    pushed = lab
                    break
            if pushed:
                break
        if pushed is not None:
            n_pushed = count_demo_blocks(template, user_messages, query.text, pushed)
            mean = params.mean_firmness_member if member else params.mean_firmness_nonmember
            firmness = rng_for("brainwash", pushed).geometric(mean, cap=FIRMNESS_CAP)
            return pushed if n_pushed >= firmness else truth
        rng = rng_for("classify")
        p = params.p_correct_member if member else params.p_correct_nonmember
        return truth if rng.bernoulli(p) else _wrong_label(rng, labels, truth)

    # Free-form completion of a word prefix.
    words = message.split()
    rng = rng_for("complete")
    sample = _prefix_match(demos, words)
    fidelity = params.repeat_fidelity_member
    if sample is None:
        sample = _prefix_match(corpus, words)
        fidelity = params.repeat_fidelity_nonmember
    if sample is None:
        return _filler(rng, 8)
    suffix = sample.text.split()[len(words):]
    if suffix and rng.bernoulli(fidelity):
        return " ".join(suffix)
    return _filler(rng, len(suffix))


class SimulatedProvider(Provider):
    """Provider backed by :func:`simulate_response`."""

    def __init__(self, params: SimulatedTargetParams, template: Optional[PromptTemplate] = None,
                 corpus=()):
        super().__init__()
        self.params = params
        self.template = template
        self.corpus = tuple(corpus)

    def _generate(self, request):
        return simulate_response(self.params, request.context, request.turns,
                                 template=self.template, corpus=self.corpus)
