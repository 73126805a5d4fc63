"""Text encoders and cosine similarity for the Repeat attack."""

import time
from dataclasses import dataclass
from typing import Optional

import httpx
import numpy as np

from ._rng import fnv1a64
from .client import post_json, resolve_token, DEFAULT_AUTH_ENV
from .exceptions import ConfigurationError, PermanentProviderError, SimilarityError


@dataclass(frozen=True, eq=False)
class EmbeddingVector:
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise ValueError("embedding must be a non-empty 1-d vector")
        if not np.all(np.isfinite(values)):
            raise ValueError("embedding has non-finite entries")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def dimension(self) -> int:
        return self.values.size


def cosine_similarity(u: EmbeddingVector, v: EmbeddingVector) -> float:
    a = u.values if isinstance(u, EmbeddingVector) else np.asarray(u, dtype=np.float64)
    b = v.values if isinstance(v, EmbeddingVector) else np.asarray(v, dtype=np.float64)
    if a.shape != b.shape:
        raise SimilarityError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise SimilarityError("cosine similarity is undefined for a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def char_ngrams(text: str, n: int = 3):
    """Overlapping character n-grams; texts shorter than n form one gram."""
    if len(text) < n:
        return [text]
    return [text[i:i + n] for i in range(len(text) - n + 1)]


class Encoder:
    def embed(self, text: str) -> EmbeddingVector:
        raise NotImplementedError


class TrigramEncoder(Encoder):
    """Hashed character-trigram counts, L2-normalized."""

    def __init__(self, n_buckets: int = 4096, n: int = 3):
        self.n_buckets = n_buckets
        self.n = n

    def embed(self, text: str) -> EmbeddingVector:
        if not text:
            raise ValueError("cannot embed empty text")
        vec = np.zeros(self.n_buckets)
        for gram in char_ngrams(text, self.n):
            vec[fnv1a64(gram.encode("utf-8")) % self.n_buckets] += 1.0
        return EmbeddingVector(vec / np.linalg.norm(vec))


class HTTPEncoder(Encoder):
    """OpenAI-compatible ``/embeddings`` client."""

    def __init__(self, endpoint_url: str, model_name: str,
                 auth_token_env: Optional[str] = DEFAULT_AUTH_ENV, timeout: float = 30.0,
                 max_retries: int = 3, transport=None, sleep=time.sleep):
        if not endpoint_url or not model_name:
            raise ConfigurationError("http encoder needs endpoint_url and model_name")
        self.url = endpoint_url.rstrip("/") + "/embeddings"
        self.model_name = model_name
        self.max_retries = max_retries
        self._token = resolve_token(auth_token_env)
        self._client = httpx.Client(timeout=timeout, transport=transport)
        self._sleep = sleep

    def embed(self, text: str) -> EmbeddingVector:
        if not text:
            raise ValueError("cannot embed empty text")
        headers = {"Content-Type": "application/json"}
        if self._token:
            headers["Authorization"] = f"Bearer {self._token}"
        data = post_json(self._client, self.url, {"model": self.model_name, "input": text},
                         headers, self.max_retries, sleep=self._sleep)
        try:
            return EmbeddingVector(data["data"][0]["embedding"])
        except (KeyError, IndexError, TypeError, ValueError):
            raise PermanentProviderError("malformed embeddings response") from None


def embed(encoder: Encoder, text: str) -> EmbeddingVector:
    return encoder.embed(text)
