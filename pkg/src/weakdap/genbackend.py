"""Pluggable text-generation backends and completion parsing.

Two backends implement the same interface:
  - MockBackend: a deterministic template generator with a planted label-noise
    rate, pure in (prompt text, seed, config). Each completion carries the
    hidden label of the template it was drawn from, so tests can measure noise
    retention exactly.
  - HttpBackend: a client for a minimal completion-style HTTP API with retries
    and bounded request parallelism.
"""
from __future__ import annotations

import hashlib
import os
import random
import threading
import time
from dataclasses import dataclass, field

import requests

from .prompt import RenderedPrompt


class BackendError(RuntimeError):
    """Transport or protocol failure after retries."""

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


@dataclass
class GenParams:
    mode: str = "top_p_sampling"  # top_p_sampling | beam
    top_p: float = 0.92
    num_return: int = 1
    max_new_tokens: int = 48
    stop_markers: tuple[str, ...] = ()
    seed: int = 0

    def __post_init__(self):
        if self.mode == "top_p_sampling" and not (0 < self.top_p <= 1):
            raise ValueError(f"top_p must be in (0, 1], got {self.top_p}")
        if self.num_return < 1:
            raise ValueError("num_return must be >= 1")
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be >= 1")


@dataclass
class Completion:
    raw: str
    parsed: str | None
    backend_id: str
    hidden_label: str | None = None  # mock backend only; template's true label


@dataclass
class MockGenConfig:
    templates: dict[str, list[str]]
    noise_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for label, tpls in self.templates.items():
            if not tpls:
                raise ValueError(f"label {label!r} has no templates")
        if not (0 <= self.noise_rate <= 1):
            raise ValueError("noise_rate must be in [0, 1]")


def _stable_seed(*parts) -> int:
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


class MockBackend:
    """Deterministic seeded generator drawing utterances from per-label templates.

    With probability noise_rate the template comes from a uniformly chosen
    wrong label, planting measurable label noise in the generated data.
    """

    backend_id = "mock"

    def __init__(self, config: MockGenConfig):
        self.config = config

    def complete(self, prompt: RenderedPrompt, params: GenParams) -> list[Completion]:
        labels = sorted(self.config.templates)
        if prompt.prescribed_label not in self.config.templates:
            raise BackendError(f"mock has no templates for label {prompt.prescribed_label!r}")
        out = []
        for i in range(params.num_return):
            rng = random.Random(_stable_seed(prompt.text, params.seed, self.config.seed, i))
            label = prompt.prescribed_label
            if rng.random() < self.config.noise_rate:
                wrong = [l for l in labels if l != label]
                if wrong:
                    label = rng.choice(wrong)
            raw = rng.choice(self.config.templates[label])
            out.append(Completion(raw=raw, parsed=None, backend_id=self.backend_id,
                                  hidden_label=label))
        return out


class HttpBackend:
    """Client for the POST <endpoint>/complete wire protocol.

    Retries transient failures 3 times with exponential backoff starting at
    500 ms, then raises BackendError. In-flight requests are capped by a
    semaphore so concurrent augmentation cannot overload the server.
    """

    backend_id = "http"

    def __init__(self, endpoint: str | None = None, max_parallel: int = 4,
                 max_attempts: int = 3, backoff: float = 0.5, timeout: float = 60.0):
        self.endpoint = os.environ.get("WEAKDAP_ENDPOINT", endpoint)
        if not self.endpoint:
            raise BackendError("no endpoint configured (set WEAKDAP_ENDPOINT or pass endpoint)")
        self.max_attempts = max_attempts
        self.backoff = backoff
        self.timeout = timeout
        self._slots = threading.Semaphore(max_parallel)

    def complete(self, prompt: RenderedPrompt, params: GenParams) -> list[Completion]:
        payload = {
            "prompt": prompt.text,
            "mode": "beam" if params.mode == "beam" else "top_p",
            "top_p": params.top_p,
            "n": params.num_return,
            "max_new_tokens": params.max_new_tokens,
            "stop": list(params.stop_markers),
            "seed": params.seed,
        }
        last_err = None
        for attempt in range(1, self.max_attempts + 1):
            try:
                with self._slots:
                    resp = requests.post(f"{self.endpoint}/complete", json=payload,
                                         timeout=self.timeout)
                resp.raise_for_status()
                completions = resp.json()["completions"]
                return [Completion(raw=c, parsed=None, backend_id=self.backend_id)
                        for c in completions]
            except (requests.RequestException, KeyError, ValueError) as e:
                last_err = e
                if attempt < self.max_attempts:
                    time.sleep(self.backoff * (2 ** (attempt - 1)))
        raise BackendError(f"backend unreachable after {self.max_attempts} attempts: {last_err}",
                           attempts=self.max_attempts)


def parse_completion(raw: str, speaker_names=(), stop_markers=()) -> str | None:
    """Clean utterance from a raw model continuation.

    Cuts at the first newline, then at the first occurrence of any stop marker
    (speaker-name cue prefixes are added automatically), trims whitespace, and
    returns None if nothing usable remains.
    """
    markers = list(stop_markers) + [f"{name} " for name in speaker_names]
    text = raw.split("\n", 1)[0]
    cut = len(text)
    for marker in markers:
        if not marker:
            continue
        idx = text.find(marker)
        if idx != -1:
            cut = min(cut, idx)
    text = text[:cut].strip()
    return text or None


def generate(prompt: RenderedPrompt, params: GenParams, backend) -> list[Completion]:
    """Run the backend and attach parsed utterances to each completion."""
    completions = backend.complete(prompt, params)
    speaker_names = ()
    for c in completions:
        c.parsed = parse_completion(c.raw, speaker_names, params.stop_markers)
    return completions
