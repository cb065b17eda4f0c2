"""Two-step generative augmentation: abstract each report, then expand.

Generation runs through pluggable providers. The HTTP provider speaks a
small provider-agnostic wire protocol; the mock provider is offline and
fully deterministic so every pipeline path is testable without model
weights. Only the training split should ever pass through here; the CLI
enforces that ordering.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Protocol

import numpy as np
import requests

from abexrat.dataset import AugmentationPlan, Dataset, Sample
from abexrat.errors import ConfigError, DataError, ProviderError
from abexrat.rngs import fnv1a64

DEFAULT_PROMPT_TEXT = (
    "Summarize the following accident report in one sentence, "
    "keeping the accident type explicit: {text}"
)

TOKEN_ENV_VAR = "ABEXRAT_PROVIDER_TOKEN"

_MOCK_ABSTRACT_TOKENS = 12
_SEED_MASK = 0x7FFFFFFFFFFFFFFF


@dataclass(frozen=True)
class PromptTemplate:
    """Template with exactly one {text} slot for the report body."""

    template: str = DEFAULT_PROMPT_TEXT

    def __post_init__(self):
        if self.template.count("{text}") != 1:
            raise ConfigError("prompt template must contain exactly one {text} slot")

    def fill(self, raw: str) -> str:
        return self.template.replace("{text}", raw)


class TextGenProvider(Protocol):
    def abstract(self, prompt: PromptTemplate, raw: str) -> str: ...

    def expand(self, abstract: str, seed: int, variant: int) -> str: ...


class MockTextGenProvider:
    """Offline provider: truncating abstraction, shuffling expansion.

    Abstraction keeps the first 12 whitespace tokens of the raw text.
    Expansion permutes the abstract's tokens with the request seed and
    appends a variant marker, so outputs are pairwise distinct and
    identical calls return identical text.
    """

    def __init__(self):
        self.calls = 0

    def abstract(self, prompt: PromptTemplate, raw: str) -> str:
        self.calls += 1
        tokens = raw.split()
        return " ".join(tokens[:_MOCK_ABSTRACT_TOKENS])

    def expand(self, abstract: str, seed: int, variant: int) -> str:
        self.calls += 1
        tokens = abstract.split()
        gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))
        order = gen.permutation(len(tokens))
        return " ".join(tokens[i] for i in order) + f" [variant {variant}]"


def _bearer_headers() -> dict[str, str]:
    token = os.environ.get(TOKEN_ENV_VAR)
    return {"Authorization": f"Bearer {token}"} if token else {}


class HttpTextGenProvider:
    """Client for POST <base>/v1/generate with retries and backoff."""

    def __init__(
        self,
        base_url: str,
        timeout: float = 30.0,
        attempts: int = 3,
        backoff: float = 0.5,
        max_tokens: int = 256,
        temperature: float = 1.0,
        session=None,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.attempts = attempts
        self.backoff = backoff
        self.max_tokens = max_tokens
        self.temperature = temperature
        self._session = session if session is not None else requests.Session()
        self._sleep = time.sleep

    def _generate(self, prompt: str, seed: int) -> str:
        body = {
            "prompt": prompt,
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
            "seed": int(seed),
        }
        url = f"{self.base_url}/v1/generate"
        last_error = "no attempts made"
        for attempt in range(self.attempts):
            if attempt:
                self._sleep(self.backoff * (2 ** (attempt - 1)))
            try:
                resp = self._session.post(
                    url, json=body, timeout=self.timeout, headers=_bearer_headers()
                )
            except requests.RequestException as exc:
                last_error = f"request failed: {exc}"
                continue
            if not 200 <= resp.status_code < 300:
                last_error = f"status {resp.status_code}"
                continue
            try:
                text = resp.json().get("text")
            except ValueError:
                last_error = "response is not JSON"
                continue
            if not isinstance(text, str) or not text.strip():
                last_error = "response has no usable 'text' field"
                continue
            return text
        raise ProviderError(
            f"text generation failed after {self.attempts} attempts ({last_error})"
        )

    def abstract(self, prompt: PromptTemplate, raw: str) -> str:
        return self._generate(prompt.fill(raw), seed=0)

    def expand(self, abstract: str, seed: int, variant: int) -> str:
        return self._generate(abstract, seed=seed)


def abstract_text(provider: TextGenProvider, prompt: PromptTemplate, raw: str) -> str:
    """Condense a raw report to its abstract; empty output is an error."""
    if not raw:
        raise DataError("cannot abstract empty text")
    out = provider.abstract(prompt, raw).strip()
    if not out:
        raise ProviderError("provider returned an empty abstract")
    return out


def expand_abstract(
    provider: TextGenProvider, abstract: str, r: int, base_seed: int
) -> list[str]:
    """r full-text variants of an abstract, variant i seeded base_seed+i."""
    if r < 1:
        raise DataError(f"expansion count must be >= 1, got {r}")
    variants = []
    for i in range(r):
        out = provider.expand(abstract, seed=base_seed + i, variant=i).strip()
        if not out:
            raise ProviderError(f"provider returned an empty expansion (variant {i})")
        variants.append(out)
    return variants


def _sample_seed(base_seed: int, sample_id: str) -> int:
    return (int(base_seed) + fnv1a64(sample_id)) & _SEED_MASK


def augment_dataset(
    train: Dataset,
    plan: AugmentationPlan,
    provider: TextGenProvider,
    prompt: PromptTemplate | None = None,
    base_seed: int = 0,
    max_workers: int = 4,
) -> Dataset:
    """Originals plus plan-mandated synthetic samples.

    Each budgeted sample is abstracted once and expanded into its planned
    number of variants. Generation may run on several provider requests
    in flight; outputs are reassembled in (sample order, variant index)
    order regardless of completion order.
    """
    prompt = prompt if prompt is not None else PromptTemplate()
    ids = {s.id for s in train}
    if set(plan.per_sample) != ids:
        raise DataError("plan does not match dataset (sample ids differ)")
    budgeted = [s for s in train if plan.per_sample[s.id] > 0]
    for s in budgeted:
        if not s.text:
            raise DataError(f"sample {s.id!r} has no text to augment")

    def expand_one(sample: Sample) -> list[Sample]:
        r = plan.per_sample[sample.id]
        try:
            abstract = abstract_text(provider, prompt, sample.text)
            variants = expand_abstract(
                provider, abstract, r, _sample_seed(base_seed, sample.id)
            )
        except ProviderError as exc:
            raise ProviderError(f"sample {sample.id!r}: {exc}") from exc
        return [
            Sample(
                id=f"{sample.id}-aug-{i}",
                label=sample.label,
                text=variant,
                abstract=abstract,
                origin="synthetic",
                parent_id=sample.id,
            )
            for i, variant in enumerate(variants)
        ]

    synthetic: list[Sample] = []
    if budgeted:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            futures = [pool.submit(expand_one, s) for s in budgeted]
            for future in futures:
                synthetic.extend(future.result())
    return Dataset(list(train) + synthetic, split=train.split)
