import struct

import numpy as np
import pytest

from abexrat.dataset import Dataset, Sample
from abexrat.embedder import (
    EmbeddingCache,
    HttpEmbeddingProvider,
    MockEmbeddingProvider,
    embed_dataset,
    mock_embed,
)
from abexrat.errors import DataError, ProviderError
from provider_server import ProviderServer


def _text_dataset(n, prefix="report"):
    return Dataset(
        [
            Sample(id=f"s{i:03d}", label="a" if i % 2 else "b", text=f"{prefix} {i}")
            for i in range(n)
        ]
    )


class TestMockEmbed:
    def test_deterministic(self):
        a, b = mock_embed("same text", 16), mock_embed("same text", 16)
        assert np.array_equal(a, b)

    def test_unit_norm(self):
        for text in ("x", "a longer text with more entropy", "ünïcode"):
            assert abs(np.linalg.norm(mock_embed(text, 64)) - 1.0) <= 1e-9

    def test_distinct_texts_nearly_orthogonal(self):
        # random unit vectors in d=64: |cos| < 0.5 is a ~32 sigma event
        vecs = [mock_embed(f"text number {i}", 64) for i in range(200)]
        for i in range(0, 200, 2):
            cos = float(vecs[i] @ vecs[i + 1])
            assert abs(cos) < 0.5

    def test_rejects_bad_dim(self):
        with pytest.raises(DataError):
            mock_embed("x", 0)


class TestCache:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "cache.bin"
        cache = EmbeddingCache(path, dim=4)
        v = np.array([1.5, -2.25, 0.1, 3e-8], dtype=np.float32)
        cache.put("hello", v)
        cache.flush()
        back = EmbeddingCache(path, dim=4)
        assert len(back) == 1
        assert np.array_equal(back.get("hello"), v)
        assert back.get("other") is None

    def test_binary_layout(self, tmp_path):
        path = tmp_path / "cache.bin"
        cache = EmbeddingCache(path, dim=2)
        cache.put("t", np.array([1.0, 2.0], dtype=np.float32))
        cache.flush()
        blob = path.read_bytes()
        magic, version, reserved, dim, count = struct.unpack("<4sHHIQ", blob[:20])
        assert magic == b"ABXE" and version == 1 and reserved == 0
        assert dim == 2 and count == 1
        assert len(blob) == 20 + (8 + 2 * 4)

    def test_append_preserves_existing(self, tmp_path):
        path = tmp_path / "cache.bin"
        first = EmbeddingCache(path, dim=3)
        first.put("one", np.ones(3, dtype=np.float32))
        first.flush()
        second = EmbeddingCache(path, dim=3)
        second.put("two", np.full(3, 2.0, dtype=np.float32))
        second.flush()
        final = EmbeddingCache(path, dim=3)
        assert len(final) == 2
        assert np.array_equal(final.get("one"), np.ones(3, dtype=np.float32))

    def test_dimension_mismatch(self, tmp_path):
        path = tmp_path / "cache.bin"
        cache = EmbeddingCache(path, dim=3)
        cache.put("x", np.zeros(3, dtype=np.float32))
        cache.flush()
        with pytest.raises(DataError):
            EmbeddingCache(path, dim=4)

    def test_truncated_file_rejected(self, tmp_path):
        path = tmp_path / "cache.bin"
        cache = EmbeddingCache(path, dim=3)
        cache.put("x", np.zeros(3, dtype=np.float32))
        cache.flush()
        path.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(DataError, match="truncated"):
            EmbeddingCache(path, dim=3)

    def test_not_a_cache_file(self, tmp_path):
        path = tmp_path / "cache.bin"
        path.write_bytes(b"definitely not a cache file at all")
        with pytest.raises(DataError):
            EmbeddingCache(path, dim=3)


class TestEmbedDataset:
    def test_attaches_unit_vectors(self, tmp_path):
        ds = _text_dataset(7)
        out = embed_dataset(ds, MockEmbeddingProvider(dim=16))
        for s in out:
            assert s.embedding.shape == (16,)
            assert abs(np.linalg.norm(s.embedding.astype(np.float64)) - 1.0) <= 1e-6

    def test_raw_when_not_normalizing(self):
        ds = _text_dataset(3)
        provider = MockEmbeddingProvider(dim=8)
        out = embed_dataset(ds, provider, normalize=False)
        want = mock_embed(ds[0].text, 8).astype(np.float32)
        assert np.array_equal(out[0].embedding, want)

    def test_duplicate_texts_share_embeddings(self):
        ds = Dataset(
            [
                Sample(id="a", label="x", text="identical"),
                Sample(id="b", label="y", text="identical"),
            ]
        )
        out = embed_dataset(ds, MockEmbeddingProvider(dim=8))
        assert np.array_equal(out[0].embedding, out[1].embedding)

    def test_cached_run_issues_zero_provider_calls(self, tmp_path):
        ds = _text_dataset(10)
        path = tmp_path / "cache.bin"
        provider = MockEmbeddingProvider(dim=8, batch_limit=4)
        first = embed_dataset(ds, provider, EmbeddingCache(path, dim=8))
        assert provider.calls == 3  # 10 unique texts in chunks of 4
        again = MockEmbeddingProvider(dim=8, batch_limit=4)
        second = embed_dataset(ds, again, EmbeddingCache(path, dim=8))
        assert again.calls == 0
        for a, b in zip(first, second):
            assert np.array_equal(a.embedding, b.embedding)

    def test_idempotent(self, tmp_path):
        ds = _text_dataset(5)
        path = tmp_path / "cache.bin"
        once = embed_dataset(ds, MockEmbeddingProvider(dim=8), EmbeddingCache(path, 8))
        twice = embed_dataset(once, MockEmbeddingProvider(dim=8), EmbeddingCache(path, 8))
        for a, b in zip(once, twice):
            assert np.array_equal(a.embedding, b.embedding)

    def test_missing_text_rejected(self):
        ds = Dataset([Sample(id="a", label="x")])
        with pytest.raises(DataError, match="'a'"):
            embed_dataset(ds, MockEmbeddingProvider(dim=8))

    def test_cache_provider_dim_mismatch(self, tmp_path):
        ds = _text_dataset(2)
        cache = EmbeddingCache(tmp_path / "c.bin", dim=4)
        with pytest.raises(DataError):
            embed_dataset(ds, MockEmbeddingProvider(dim=8), cache)

    def test_preserves_split_tag(self):
        ds = Dataset([Sample(id="a", label="x", text="t")], split="train")
        assert embed_dataset(ds, MockEmbeddingProvider(dim=4)).split == "train"


class TestHttpProvider:
    def test_round_trip_against_local_server(self):
        with ProviderServer(dim=8) as srv:
            provider = HttpEmbeddingProvider(srv.url, dim=8, batch_limit=3)
            ds = _text_dataset(7)
            out = embed_dataset(ds, provider)
            assert len(srv.requests) == 3  # ceil(7/3) batches
            want = mock_embed(ds[0].text, 8)
            got = out[0].embedding.astype(np.float64)
            assert np.allclose(got, want / np.linalg.norm(want), atol=1e-6)

    def test_retries_then_succeeds(self):
        with ProviderServer(dim=4, fail_first=1) as srv:
            provider = HttpEmbeddingProvider(srv.url, dim=4, attempts=3)
            provider._sleep = lambda s: None
            rows = provider.embed(["a", "b"])
            assert rows.shape == (2, 4)

    def test_dimension_mismatch_is_provider_error(self):
        with ProviderServer(dim=6) as srv:
            provider = HttpEmbeddingProvider(srv.url, dim=8, attempts=2)
            provider._sleep = lambda s: None
            with pytest.raises(ProviderError):
                provider.embed(["a"])

    def test_missing_field_is_provider_error(self):
        with ProviderServer(dim=4, omit_field=True) as srv:
            provider = HttpEmbeddingProvider(srv.url, dim=4, attempts=2)
            provider._sleep = lambda s: None
            with pytest.raises(ProviderError):
                provider.embed(["a"])

    def test_bearer_token_header(self, monkeypatch):
        monkeypatch.setenv("ABEXRAT_PROVIDER_TOKEN", "tok123")
        with ProviderServer(dim=4) as srv:
            HttpEmbeddingProvider(srv.url, dim=4).embed(["x"])
            assert srv.requests[0][2] == "Bearer tok123"
