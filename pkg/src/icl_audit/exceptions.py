"""Exception hierarchy.

Everything raised on purpose by the toolkit derives from :class:`AuditError`
so callers (and the CLI) can map failures to exit codes.
"""


class AuditError(Exception):
    """Base class for all toolkit errors."""


class ConfigurationError(AuditError, ValueError):
    """Invalid experiment, dataset or provider configuration."""


class AuthError(ConfigurationError):
    """An auth token environment variable is missing."""

    def __init__(self, env_var):
        super().__init__(f"environment variable {env_var!r} is not set")
        self.env_var = env_var


class DataValidationError(AuditError, ValueError):
    """A record violates the declared label set or sample invariants."""


class RecordParseError(AuditError, ValueError):
    def __init__(self, path, line_no, reason):
        super().__init__(f"{path}:{line_no}: {reason}")
        self.path = path
        self.line_no = line_no


class TemplateError(AuditError, ValueError):
    """A prompt template is missing a required placeholder."""


class ProviderError(AuditError):
    """Base class for failures talking to a target model or encoder."""


class TransientProviderError(ProviderError):
    """Timeouts, connection resets, 429 and 5xx responses."""


class PermanentProviderError(ProviderError):
    """4xx responses and exhausted retries."""


class EmptyResponseError(ProviderError):
    """The provider returned an empty completion."""


class SimilarityError(AuditError, ValueError):
    """Cosine similarity is undefined (zero vector or shape mismatch)."""


class ShortSampleError(AuditError, ValueError):
    """A sample is too short for the requested Repeat prefix."""

    def __init__(self, n_words, prefix_words):
        super().__init__(
            f"sample has {n_words} words; repeat needs more than {prefix_words}"
        )
        self.n_words = n_words
        self.prefix_words = prefix_words


class AttackError(AuditError):
    """A provider failed part-way through a multi-query attack."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial or {}


class TrainingError(AuditError, ValueError):
    """The hybrid attack model cannot be trained on the given shadow set."""


class MetricError(AuditError, ValueError):
    """A metric is undefined for the given inputs."""


class CalibrationError(AuditError, ValueError):
    """A threshold cannot be calibrated on the given shadow scores."""


class ExperimentError(AuditError):
    """Too many trials failed for the experiment to be meaningful."""


class SchemaVersionError(AuditError):
    """A persisted artifact uses a schema version this toolkit cannot read."""
