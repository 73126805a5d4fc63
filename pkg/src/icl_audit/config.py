"""Experiment configuration and its TOML schema.

A config file looks like::

    name = "trec-sim"
    n_trials = 500
    k = 1
    target_position = 0            # integer, "first", "last" or "sweep"
    attacks = ["gap", "inquiry", "repeat", "brainwash", "hybrid"]
    master_seed = 7
    template = "trec"              # built-in id or path to a template manifest

    [dataset]
    path = "builtin:trec_sample"   # or a .jsonl / .tsv path relative to this file
    demo_fraction = 0.5

    [provider]
    kind = "simulated"             # or "http" with endpoint_url / model_name

    [simulator]
    p_correct_member = 0.9

    [repeat]      # prefix_words, theta_sim
    [brainwash]   # max_iterations, wrong_label_count, theta_iter, fresh_session
    [hybrid]      # model_path, shadow_trials, hidden_units, epochs, learning_rate, seed
    [embedding]   # kind = "local" | "http"
    [defense]     # instruction_defense, filter_defense, synthetic_demos_path, label_whitelist
    [paraphraser] # kind = "simulated" | "passthrough" | "http", seed
    [sweep]       # k = [...], positions = true, models = [...]
"""

import copy
import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .attacks import ATTACKS, BrainwashConfig, RepeatConfig
from .client import DEFAULT_AUTH_ENV, ProviderConfig
from .defenses import DefenseConfig
from .exceptions import ConfigurationError
from .simulator import SimulatedTargetParams

BUILTIN_PREFIX = "builtin:"
DATA_DIR = Path(__file__).parent / "data"


@dataclass(frozen=True)
class DatasetConfig:
    path: str = "builtin:trec_sample"
    format: Optional[str] = None
    manifest: Optional[str] = None
    header: bool = False
    demo_fraction: float = 0.5
    split_seed: Optional[int] = None


@dataclass(frozen=True)
class EmbeddingConfig:
    kind: str = "local"
    endpoint_url: Optional[str] = None
    model_name: Optional[str] = None
    auth_token_env: Optional[str] = DEFAULT_AUTH_ENV
    n_buckets: int = 4096

    def __post_init__(self):
        if self.kind not in ("local", "http"):
            raise ConfigurationError(f"unknown embedding kind {self.kind!r}")


@dataclass(frozen=True)
class HybridConfig:
    model_path: Optional[str] = None
    shadow_trials: int = 50
    hidden_units: int = 8
    epochs: int = 2000
    learning_rate: float = 0.1
    seed: int = 0


@dataclass(frozen=True)
class ParaphraserConfig:
    kind: str = "simulated"
    seed: int = 0
    provider: Optional[ProviderConfig] = None

    def __post_init__(self):
        if self.kind not in ("simulated", "passthrough", "http"):
            raise ConfigurationError(f"unknown paraphraser kind {self.kind!r}")
        if self.kind == "http" and self.provider is None:
            raise ConfigurationError("http paraphraser needs a [paraphraser.provider] table")


@dataclass(frozen=True)
class SweepConfig:
    k: Optional[tuple] = None
    positions: bool = False
    models: Optional[tuple] = None


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    name: str = "experiment"
    n_trials: int = 500
    k: int = 1
    target_position: Union[int, str] = 0
    attacks: tuple = ("gap", "inquiry", "repeat", "brainwash")
    template: str = "trec"
    master_seed: int = 0
    fpr_targets: tuple = (0.01, 0.05, 0.1)
    parallelism: int = 1
    max_failed_fraction: float = 0.1
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    simulator: SimulatedTargetParams = field(default_factory=SimulatedTargetParams)
    repeat: RepeatConfig = field(default_factory=RepeatConfig)
    brainwash: BrainwashConfig = field(default_factory=BrainwashConfig)
    hybrid: HybridConfig = field(default_factory=HybridConfig)
    embedding: EmbeddingConfig = field(default_factory=EmbeddingConfig)
    defense: DefenseConfig = field(default_factory=DefenseConfig)
    paraphraser: ParaphraserConfig = field(default_factory=ParaphraserConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    base_dir: str = "."

    def __post_init__(self):
        object.__setattr__(self, "attacks", tuple(self.attacks))
        object.__setattr__(self, "fpr_targets", tuple(float(f) for f in self.fpr_targets))
        if self.n_trials < 1:
            raise ConfigurationError("n_trials must be >= 1")
        if self.k < 1:
            raise ConfigurationError("k must be >= 1")
        if self.parallelism < 1:
            raise ConfigurationError("parallelism must be >= 1")
        unknown = set(self.attacks) - set(ATTACKS)
        if unknown or not self.attacks:
            raise ConfigurationError(f"unknown or empty attack list: {sorted(unknown)}")
        pos = self.target_position
        if isinstance(pos, str):
            if pos not in ("first", "last", "sweep"):
                raise ConfigurationError(f"target_position {pos!r} not understood")
        elif not 0 <= pos < self.k:
            raise ConfigurationError(f"target_position {pos} must be < k={self.k}")
        if any(not 0 < f < 1 for f in self.fpr_targets):
            raise ConfigurationError("fpr_targets must lie in (0, 1)")

    @property
    def position_index(self) -> int:
        pos = self.target_position
        if pos == "first":
            return 0
        if pos == "last":
            return self.k - 1
        if pos == "sweep":
            raise ConfigurationError("expand the position sweep before running")
        return int(pos)

    def resolve_path(self, path: Optional[str]) -> Optional[Path]:
        if path is None:
            return None
        if path.startswith(BUILTIN_PREFIX):
            name = path[len(BUILTIN_PREFIX):]
            candidate = DATA_DIR / (name if Path(name).suffix else name + ".jsonl")
            if not candidate.is_file():
                raise ConfigurationError(f"no built-in data file {name!r}")
            return candidate
        p = Path(path)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out.pop("base_dir")
        return _jsonable(out)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


def _build(cls, table, where):
    if table is None:
        return cls()
    if not isinstance(table, dict):
        raise ConfigurationError(f"[{where}] must be a table")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(table) - names
    if unknown:
        raise ConfigurationError(f"unknown keys in [{where}]: {sorted(unknown)}")
    try:
        return cls(**table)
    except TypeError as exc:
        raise ConfigurationError(f"[{where}]: {exc}") from None


_SECTIONS = {
    "dataset": DatasetConfig,
    "provider": ProviderConfig,
    "simulator": SimulatedTargetParams,
    "repeat": RepeatConfig,
    "brainwash": BrainwashConfig,
    "hybrid": HybridConfig,
    "embedding": EmbeddingConfig,
    "defense": DefenseConfig,
}


def config_from_dict(obj: dict, base_dir=".") -> ExperimentConfig:
    obj = copy.deepcopy(obj)
    kwargs = {}
    for section, cls in _SECTIONS.items():
        if section in obj:
            kwargs[section] = _build(cls, obj.pop(section), section)
    if "paraphraser" in obj:
        table = dict(obj.pop("paraphraser"))
        if "provider" in table:
            table["provider"] = _build(ProviderConfig, table["provider"], "paraphraser.provider")
        kwargs["paraphraser"] = _build(ParaphraserConfig, table, "paraphraser")
    if "sweep" in obj:
        table = dict(obj.pop("sweep"))
        for key in ("k", "models"):
            if key in table:
                table[key] = tuple(table[key])
        kwargs["sweep"] = _build(SweepConfig, table, "sweep")
    top = {f.name for f in dataclasses.fields(ExperimentConfig)} - set(_SECTIONS) - {
        "paraphraser", "sweep", "base_dir"}
    unknown = set(obj) - top
    if unknown:
        raise ConfigurationError(f"unknown top-level config keys: {sorted(unknown)}")
    kwargs.update(obj)
    try:
        return ExperimentConfig(base_dir=str(base_dir), **kwargs)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            obj = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    return config_from_dict(obj, base_dir=path.parent)


def expand_sweep(config: ExperimentConfig) -> list:
    """Concrete ``(label, config)`` pairs for every arm of the configured sweep.

    Sweeps combine demonstration counts (``sweep.k``), target positions
    (``sweep.positions`` or ``target_position = "sweep"``) and provider model
    names (``sweep.models``). All arms share the master seed.
    """
    ks = config.sweep.k or (config.k,)
    models = config.sweep.models or (None,)
    arms = []
    for model in models:
        for k in ks:
            if config.sweep.positions or config.target_position == "sweep":
                positions = range(k)
            elif config.target_position == "last":
                positions = [k - 1]
            elif config.target_position == "first":
                positions = [0]
            else:
                positions = [config.target_position]
            for pos in positions:
                if pos >= k:
                    raise ConfigurationError(f"target_position {pos} must be < k={k}")
                provider = config.provider
                if model is not None:
                    provider = dataclasses.replace(provider, model_name=model)
                label = f"k{k}_pos{pos}" + (f"_{model}" if model else "")
                arms.append((label, config.replace(k=k, target_position=pos,
                                                   provider=provider, sweep=SweepConfig())))
    return arms


def is_sweep(config: ExperimentConfig) -> bool:
    return bool(config.sweep.k or config.sweep.models or config.sweep.positions
                or config.target_position == "sweep")
