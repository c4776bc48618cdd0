"""Text-generation backends: a deterministic rule table and a remote API.

Simulations run against the Backend protocol only, so scripted and remote
modes are interchangeable everywhere a backend is accepted.
"""

from __future__ import annotations

import json
import os
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Protocol, Sequence

import httpx

from .domain import PhaseId, RoleId
from .errors import BackendFailure

RULES_FORMAT = "rules/1"

ENV_API_BASE = "ORSIM_API_BASE"
ENV_API_KEY = "ORSIM_API_KEY"
ENV_MODEL = "ORSIM_MODEL"


class Backend(Protocol):
    def generate(
        self,
        role: RoleId,
        phase: PhaseId,
        prompt: str,
        context: Mapping[str, str],
    ) -> str: ...


class _SafeDict(dict):
    # leave unknown placeholders intact rather than raising
    def __missing__(self, key: str) -> str:
        return "{" + key + "}"


def fill_template(template: str, context: Mapping[str, str]) -> str:
    return template.format_map(_SafeDict(context))


@dataclass(frozen=True)
class Rule:
    """One row of the scripted table; 'any' wildcards role or phase."""

    role: str
    phase: str
    pattern: str
    reply: str

    def matches(self, role: RoleId, phase: PhaseId, prompt: str) -> bool:
        if self.role not in ("any", role.value):
            return False
        if self.phase not in ("any", phase.value):
            return False
        return re.search(self.pattern, prompt, re.IGNORECASE) is not None


class ScriptedBackend:
    """Pure-function replies from an ordered rule table.

    The first matching row wins. A per-role fallback template answers when
    nothing matches, so every role always says something.
    """

    def __init__(
        self,
        rules: Sequence[Rule] = (),
        fallbacks: Mapping[str, str] | None = None,
    ):
        self.rules = tuple(rules)
        self.fallbacks = dict(fallbacks or {})

    def generate(
        self,
        role: RoleId,
        phase: PhaseId,
        prompt: str,
        context: Mapping[str, str],
    ) -> str:
        ctx = dict(context)
        ctx.setdefault("role", role.value)
        ctx.setdefault("phase", phase.value)
        for rule in self.rules:
            if rule.matches(role, phase, prompt):
                return fill_template(rule.reply, ctx)
        template = self.fallbacks.get(role.value) or self.fallbacks.get(
            "any", "Acknowledged."
        )
        return fill_template(template, ctx)

    @classmethod
    def from_dict(cls, payload: Mapping[str, object]) -> "ScriptedBackend":
        version = payload.get("format_version")
        if version != RULES_FORMAT:
            raise BackendFailure(f"unsupported rule table format: {version!r}")
        rules = [
            Rule(
                role=str(r.get("role", "any")),
                phase=str(r.get("phase", "any")),
                pattern=str(r.get("pattern", "")),
                reply=str(r.get("reply", "")),
            )
            for r in payload.get("rules", [])  # type: ignore[union-attr]
        ]
        fallbacks = {
            str(k): str(v)
            for k, v in dict(payload.get("fallbacks", {})).items()  # type: ignore[arg-type]
        }
        return cls(rules, fallbacks)

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


# --- remote chat-completions backend ---

RETRYABLE_STATUS = {429, 500, 502, 503, 504}


@dataclass
class RemoteConfig:
    api_base: str
    api_key: str = ""
    model: str = "gpt-4"
    timeout: float = 60.0
    max_retries: int = 2
    backoff: float = 0.5
    extra_headers: Mapping[str, str] = field(default_factory=dict)

    @classmethod
    def from_env(cls) -> "RemoteConfig":
        base = os.environ.get(ENV_API_BASE, "")
        if not base:
            raise BackendFailure(f"{ENV_API_BASE} is not set")
        return cls(
            api_base=base,
            api_key=os.environ.get(ENV_API_KEY, ""),
            model=os.environ.get(ENV_MODEL, "gpt-4"),
        )


def remote_configured() -> bool:
    return bool(os.environ.get(ENV_API_BASE))


class RemoteBackend:
    """Chat-completions client with bounded retries and zero temperature.

    Transport errors and retryable statuses back off exponentially; after
    max_retries the failure surfaces as BackendFailure so a simulation
    never half-completes silently.
    """

    def __init__(
        self,
        config: RemoteConfig,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self._sleep = sleep
        headers = {"Content-Type": "application/json"}
        if config.api_key:
            headers["Authorization"] = f"Bearer {config.api_key}"
        headers.update(config.extra_headers)
        self._client = httpx.Client(
            base_url=config.api_base,
            headers=headers,
            timeout=config.timeout,
            transport=transport,
        )

    def close(self) -> None:
        self._client.close()

    def generate(
        self,
        role: RoleId,
        phase: PhaseId,
        prompt: str,
        context: Mapping[str, str],
    ) -> str:
        system = context.get(
            "system_prompt", f"You are the {role.value} in an operating room."
        )
        body = {
            "model": self.config.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": prompt},
            ],
        }
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                self._sleep(self.config.backoff * (2 ** (attempt - 1)))
            try:
                resp = self._client.post("/chat/completions", json=body)
            except httpx.TransportError as exc:
                last_error = exc
                continue
            if resp.status_code in RETRYABLE_STATUS:
                last_error = BackendFailure(f"status {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise BackendFailure(
                    f"remote returned {resp.status_code}: {resp.text[:200]}"
                )
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError, json.JSONDecodeError) as exc:
                raise BackendFailure(f"malformed completion payload: {exc}") from exc
        raise BackendFailure(
            f"remote failed after {self.config.max_retries + 1} attempts: {last_error}"
        )
