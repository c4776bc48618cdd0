from __future__ import annotations

from pathlib import Path
from typing import Mapping

import pytest

from orsim.domain import PhaseId, RoleId

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"


class StubBackend:
    """Returns queued replies in order, then a default; records prompts."""

    def __init__(self, replies: list[str] | None = None, default: str = "Noted."):
        self.replies = list(replies or [])
        self.default = default
        self.calls: list[tuple[RoleId, PhaseId, str]] = []

    def generate(
        self,
        role: RoleId,
        phase: PhaseId,
        prompt: str,
        context: Mapping[str, str],
    ) -> str:
        self.calls.append((role, phase, prompt))
        if self.replies:
            return self.replies.pop(0)
        return self.default


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES
