"""
Chat-completion client for scheduling decisions.

Two backends: `live` talks to an OpenAI-compatible endpoint, `mock` answers
offline by reading the observation back out of the prompt and applying the
greedy queue-aware rule.
"""

import logging
import os
import time
from dataclasses import dataclass

import openai

from policy.baselines import NoAliveSensorError, greedy_queue_aware_policy
from policy.decision import MalformedResponseError, serialize_decisions
from policy.prompt import ObservationFormatError, parse_observation

logger = logging.getLogger(__name__)

BACKENDS = ("live", "mock")


class LlmError(Exception):
    """Base class for failed completions."""


class LlmTimeoutError(LlmError):
    pass


class LlmTransportError(LlmError):
    pass


class LlmStatusError(LlmError):
    pass


class ResponseTooLargeError(LlmError):
    pass


class MalformedPromptError(LlmError):
    pass


RETRYABLE = (LlmTimeoutError, LlmTransportError, LlmStatusError)


@dataclass(frozen=True)
class EndpointConfig:
    backend: str
    base_url: str
    model_name: str
    timeout: float
    max_retries: int
    temperature: float
    backoff_base: float
    mock_latency: float
    max_response_chars: int
    api_key_env: str

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"Unknown LLM backend {self.backend!r}, expected one of {BACKENDS}")
        if not self.timeout > 0:
            raise ValueError("LLM timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.backoff_base < 0 or self.mock_latency < 0:
            raise ValueError("Backoff and mock latency must be non-negative")
        if self.max_response_chars < 1:
            raise ValueError("max_response_chars must be positive")

    @classmethod
    def from_config(cls, section):
        return cls(
            backend=section["backend"],
            base_url=section["base_url"],
            model_name=section["model_name"],
            timeout=float(section["timeout_s"]),
            max_retries=int(section["max_retries"]),
            temperature=float(section["temperature"]),
            backoff_base=float(section["backoff_base_s"]),
            mock_latency=float(section["mock_latency_s"]),
            max_response_chars=int(section["max_response_chars"]),
            api_key_env=section["api_key_env"],
        )


@dataclass(frozen=True)
class CompletionRecord:
    prompt_chars: int
    response_chars: int
    latency: float
    attempt: int
    backend: str
    ok: bool = True


def mock_complete(prompt):
    """
    Offline stand-in for the model

    Args:
        prompt: Prompt text containing an observation section

    Returns:
        DECISIONS block with the greedy queue-aware choice for the querying UAV
    """
    try:
        obs = parse_observation(prompt)
        decision = greedy_queue_aware_policy(obs)
    except (ObservationFormatError, NoAliveSensorError) as e:
        raise MalformedPromptError(f"Mock backend cannot read the prompt: {e}") from e
    return serialize_decisions([decision])


class LlmClient:
    """
    Completion client with retry, backoff and per-attempt latency records

    Args:
        cfg: EndpointConfig
        transport: Optional callable(prompt) -> text replacing the backend call
        sleep: Sleep function used between retries
        http_client: Optional httpx.Client handed to the OpenAI SDK
    """

    def __init__(self, cfg, transport=None, sleep=time.sleep, http_client=None):
        self.cfg = cfg
        self.records = []
        self.sleep = sleep
        self.http_client = http_client
        self.client = None
        if transport is not None:
            self.transport = transport
        elif cfg.backend == "mock":
            self.transport = mock_complete
        else:
            self.transport = self._live_complete

    def load_client(self):
        """Create the OpenAI client on first use."""
        if self.client is None:
            api_key = os.getenv(self.cfg.api_key_env, "")
            if not api_key:
                logger.warning("⚠️ %s is not set, live requests will likely be rejected", self.cfg.api_key_env)
            self.client = openai.OpenAI(
                api_key=api_key,
                base_url=self.cfg.base_url,
                timeout=self.cfg.timeout,
                max_retries=0,
                http_client=self.http_client,
            )
            logger.info("🔌 LLM client ready: %s @ %s", self.cfg.model_name, self.cfg.base_url)
        return self.client

    def _live_complete(self, prompt):
        client = self.load_client()
        try:
            response = client.chat.completions.create(
                model=self.cfg.model_name,
                messages=[{"role": "user", "content": prompt}],
                temperature=self.cfg.temperature,
            )
        except openai.APITimeoutError as e:
            raise LlmTimeoutError(f"Request timed out after {self.cfg.timeout}s") from e
        except openai.APIConnectionError as e:
            raise LlmTransportError(f"Cannot reach {self.cfg.base_url}: {e}") from e
        except openai.APIStatusError as e:
            raise LlmStatusError(f"Endpoint answered HTTP {e.status_code}") from e
        except openai.APIError as e:
            raise LlmStatusError(f"Endpoint returned an unusable response: {e}") from e
        if not response.choices:
            raise MalformedResponseError("Endpoint returned no choices")
        return response.choices[0].message.content or ""

    def complete(self, prompt):
        """
        Send one prompt, retrying transient failures

        Returns:
            (response text, CompletionRecord of the successful attempt)
        """
        if not prompt:
            raise ValueError("Prompt must be non-empty")
        attempts = self.cfg.max_retries + 1

        for attempt in range(1, attempts + 1):
            started = time.perf_counter()
            try:
                text = self.transport(prompt)
            except RETRYABLE as e:
                self.records.append(self._record(prompt, 0, started, attempt, ok=False))
                if attempt == attempts:
                    logger.warning("❌ LLM request failed after %d attempts: %s", attempts, e)
                    raise
                delay = self.cfg.backoff_base * 2 ** (attempt - 1)
                logger.info("🔁 LLM attempt %d/%d failed (%s), retrying in %.2fs", attempt, attempts, e, delay)
                self.sleep(delay)
                continue

            if len(text) > self.cfg.max_response_chars:
                self.records.append(self._record(prompt, len(text), started, attempt, ok=False))
                raise ResponseTooLargeError(
                    f"Response of {len(text)} chars exceeds cap {self.cfg.max_response_chars}"
                )
            record = self._record(prompt, len(text), started, attempt)
            self.records.append(record)
            return text, record

    def _record(self, prompt, response_chars, started, attempt, ok=True):
        if self.cfg.backend == "mock":
            latency = self.cfg.mock_latency
        else:
            latency = max(0.0, time.perf_counter() - started)
        return CompletionRecord(
            prompt_chars=len(prompt),
            response_chars=response_chars,
            latency=latency,
            attempt=attempt,
            backend=self.cfg.backend,
            ok=ok,
        )


def complete(prompt, cfg):
    return LlmClient(cfg).complete(prompt)
