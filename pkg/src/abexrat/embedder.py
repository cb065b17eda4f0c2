"""Feature extraction through a fixed embedding provider, plus caching.

Embeddings are content-addressed by a 64-bit hash of the text, so reruns
touch the provider only for texts it has never seen. The cache stores raw
provider vectors; L2 normalization (on by default, which makes the
adversarial epsilon a fraction of the input norm) is applied downstream.
"""

from __future__ import annotations

import os
import struct
import time
from typing import Protocol

import numpy as np
import requests

from abexrat.dataset import Dataset, Sample
from abexrat.errors import DataError, NumericError, ProviderError
from abexrat.rngs import fnv1a64

CACHE_MAGIC = b"ABXE"
CACHE_VERSION = 1
_HEADER = struct.Struct("<4sHHIQ")  # magic, version, reserved, dim, count

TOKEN_ENV_VAR = "ABEXRAT_PROVIDER_TOKEN"

DEFAULT_BATCH_LIMIT = 32


def mock_embed(text: str, dim: int) -> np.ndarray:
    """Deterministic unit vector derived from the text content.

    The 64-bit FNV-1a hash of the UTF-8 text seeds a PCG64 stream whose
    standard-normal draws are L2-normalized; identical text gives a
    bit-identical vector on every platform.
    """
    if dim < 1:
        raise DataError(f"embedding dimension must be >= 1, got {dim}")
    gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(fnv1a64(text))))
    v = gen.standard_normal(dim)
    return v / np.linalg.norm(v)


class EmbeddingProvider(Protocol):
    dim: int
    batch_limit: int

    def embed(self, texts: list[str]) -> np.ndarray: ...


class MockEmbeddingProvider:
    """Offline provider around mock_embed; counts requests for tests."""

    def __init__(self, dim: int, batch_limit: int = DEFAULT_BATCH_LIMIT):
        self.dim = dim
        self.batch_limit = batch_limit
        self.calls = 0

    def embed(self, texts: list[str]) -> np.ndarray:
        self.calls += 1
        return np.stack([mock_embed(t, self.dim) for t in texts]).astype(np.float32)


class HttpEmbeddingProvider:
    """Client for POST <base>/v1/embed with retries and backoff."""

    def __init__(
        self,
        base_url: str,
        dim: int,
        batch_limit: int = DEFAULT_BATCH_LIMIT,
        timeout: float = 30.0,
        attempts: int = 3,
        backoff: float = 0.5,
        session=None,
    ):
        self.base_url = base_url.rstrip("/")
        self.dim = dim
        self.batch_limit = batch_limit
        self.timeout = timeout
        self.attempts = attempts
        self.backoff = backoff
        self._session = session if session is not None else requests.Session()
        self._sleep = time.sleep

    def embed(self, texts: list[str]) -> np.ndarray:
        url = f"{self.base_url}/v1/embed"
        token = os.environ.get(TOKEN_ENV_VAR)
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        last_error = "no attempts made"
        for attempt in range(self.attempts):
            if attempt:
                self._sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                resp = self._session.post(
                    url, json={"texts": texts}, timeout=self.timeout, headers=headers
                )
            except requests.RequestException as exc:
                last_error = f"request failed: {exc}"
                continue
            if not 200 <= resp.status_code < 300:
                last_error = f"status {resp.status_code}"
                continue
            try:
                rows = resp.json().get("embeddings")
            except ValueError:
                last_error = "response is not JSON"
                continue
            if not isinstance(rows, list) or len(rows) != len(texts):
                last_error = "response 'embeddings' count mismatch"
                continue
            try:
                out = np.asarray(rows, dtype=np.float32)
            except (TypeError, ValueError):
                last_error = "response 'embeddings' is not numeric"
                continue
            if out.ndim != 2 or out.shape[1] != self.dim:
                last_error = f"provider returned dimension {out.shape}, expected {self.dim}"
                continue
            return out
        raise ProviderError(
            f"embedding request failed after {self.attempts} attempts ({last_error})"
        )


class EmbeddingCache:
    """Append-friendly binary map: text content hash -> float32 vector."""

    def __init__(self, path, dim: int):
        self.path = path
        self.dim = int(dim)
        self._entries: dict[int, np.ndarray] = {}
        self._pending: list[int] = []
        if os.path.exists(path) and os.path.getsize(path) > 0:
            self._read()

    def _read(self):
        with open(self.path, "rb") as fh:
            head = fh.read(_HEADER.size)
            if len(head) < _HEADER.size:
                raise DataError(f"cache file {self.path} is truncated")
            magic, version, _, dim, count = _HEADER.unpack(head)
            if magic != CACHE_MAGIC or version != CACHE_VERSION:
                raise DataError(f"{self.path} is not a version-{CACHE_VERSION} cache file")
            if dim != self.dim:
                raise DataError(
                    f"cache dimension {dim} does not match requested {self.dim}"
                )
            rec = struct.Struct(f"<Q{dim}f")
            blob = fh.read()
            if len(blob) != count * rec.size:
                raise DataError(f"cache file {self.path} is truncated")
            for i in range(count):
                fields = rec.unpack_from(blob, i * rec.size)
                self._entries[fields[0]] = np.asarray(fields[1:], dtype=np.float32)

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, text: str) -> np.ndarray | None:
        return self._entries.get(fnv1a64(text))

    def put(self, text: str, vector: np.ndarray) -> None:
        vector = np.asarray(vector, dtype=np.float32)
        if vector.shape != (self.dim,):
            raise DataError(
                f"cache stores vectors of dimension {self.dim}, got {vector.shape}"
            )
        key = fnv1a64(text)
        if key not in self._entries:
            self._entries[key] = vector
            self._pending.append(key)

    def flush(self) -> None:
        """Append pending records and update the header count."""
        if not self._pending and os.path.exists(self.path):
            return
        rec = struct.Struct(f"<Q{self.dim}f")
        fresh = not os.path.exists(self.path) or os.path.getsize(self.path) == 0
        mode = "wb" if fresh else "r+b"
        with open(self.path, mode) as fh:
            if fresh:
                fh.write(_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, 0, self.dim, 0))
            fh.seek(0, os.SEEK_END)
            for key in self._pending:
                fh.write(rec.pack(key, *self._entries[key].tolist()))
            fh.seek(0)
            fh.write(
                _HEADER.pack(CACHE_MAGIC, CACHE_VERSION, 0, self.dim, len(self._entries))
            )
        self._pending = []


def embed_dataset(
    ds: Dataset,
    provider: EmbeddingProvider,
    cache: EmbeddingCache | None = None,
    normalize: bool = True,
) -> Dataset:
    """Attach an embedding to every sample; cache first, provider for misses.

    Idempotent: running twice changes nothing and the second run issues
    zero provider calls when a cache is used.
    """
    for s in ds:
        if not s.text:
            raise DataError(f"sample {s.id!r} has no text to embed")
    if cache is not None and cache.dim != provider.dim:
        raise DataError(
            f"cache dimension {cache.dim} does not match provider {provider.dim}"
        )

    vectors: dict[str, np.ndarray] = {}
    missing: list[str] = []
    for s in ds:
        if s.text in vectors:
            continue
        hit = cache.get(s.text) if cache is not None else None
        if hit is not None:
            vectors[s.text] = hit
        else:
            vectors[s.text] = None  # placeholder, fetched below
            missing.append(s.text)

    for start in range(0, len(missing), provider.batch_limit):
        chunk = missing[start : start + provider.batch_limit]
        rows = np.asarray(provider.embed(chunk), dtype=np.float32)
        if rows.shape != (len(chunk), provider.dim):
            raise ProviderError(
                f"provider returned shape {rows.shape}, expected "
                f"({len(chunk)}, {provider.dim})"
            )
        for text, row in zip(chunk, rows):
            vectors[text] = row
            if cache is not None:
                cache.put(text, row)
    if cache is not None:
        cache.flush()

    out: list[Sample] = []
    for s in ds:
        vec = vectors[s.text]
        if normalize:
            wide = vec.astype(np.float64)
            norm = np.linalg.norm(wide)
            if norm == 0:
                raise NumericError(f"sample {s.id!r}: zero embedding cannot be normalized")
            vec = (wide / norm).astype(np.float32)
        out.append(
            Sample(
                id=s.id,
                label=s.label,
                text=s.text,
                abstract=s.abstract,
                embedding=vec,
                origin=s.origin,
                parent_id=s.parent_id,
            )
        )
    return Dataset(out, split=ds.split)
