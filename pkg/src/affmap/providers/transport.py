"""Shared HTTP transport: retries with jittered exponential backoff and a
bounded in-flight limit per provider."""

from __future__ import annotations

import logging
import random
import threading
import time
from dataclasses import dataclass

import requests

from ..errors import AuthError, ProviderTimeout, RateLimited, TransportError

log = logging.getLogger(__name__)

RETRYABLE_STATUS = {429, 500, 502, 503, 504}


@dataclass(frozen=True)
class RetryPolicy:
    max_retries: int = 3
    backoff_base_s: float = 1.0  # 1s, 2s, 4s
    jitter_frac: float = 0.2
    timeout_s: float = 60.0

    def delay(self, attempt: int, rng: random.Random) -> float:
        base = self.backoff_base_s * (2 ** attempt)
        return base * (1.0 + rng.uniform(-self.jitter_frac, self.jitter_frac))


class Transport:
    """POST JSON with retry/backoff; bounded concurrent in-flight requests."""

    def __init__(self, policy: RetryPolicy = RetryPolicy(), max_in_flight: int = 4,
                 seed: int = 0, session=None):
        self.policy = policy
        self._sem = threading.BoundedSemaphore(max_in_flight)
        self._rng = random.Random(seed)
        self._session = session or requests.Session()
        self.retry_count = 0  # cumulative, observable in tests

    def post_json(self, url: str, body: dict, headers: dict | None = None) -> dict:
        last_exc: Exception | None = None
        for attempt in range(self.policy.max_retries + 1):
            if attempt > 0:
                time.sleep(self.policy.delay(attempt - 1, self._rng))
                self.retry_count += 1
            try:
                with self._sem:
                    resp = self._session.post(url, json=body, headers=headers or {},
                                              timeout=self.policy.timeout_s)
            except requests.Timeout as exc:
                raise ProviderTimeout(f"{url}: {exc}") from exc
            except requests.RequestException as exc:
                last_exc = TransportError(f"{url}: {exc}")
                continue
            if resp.status_code in (401, 403):
                raise AuthError(f"{url}: HTTP {resp.status_code}")
            if resp.status_code in RETRYABLE_STATUS:
                last_exc = RateLimited(f"{url}: HTTP 429") if resp.status_code == 429 \
                    else TransportError(f"{url}: HTTP {resp.status_code}")
                log.debug("retryable failure from %s: HTTP %s", url, resp.status_code)
                continue
            if resp.status_code >= 400:
                raise TransportError(f"{url}: HTTP {resp.status_code}")
            try:
                return resp.json()
            except ValueError as exc:
                raise TransportError(f"{url}: non-JSON response") from exc
        assert last_exc is not None
        raise last_exc
