"""Exception hierarchy shared across the package.

Every error carries a stable machine-readable ``code`` (its class name) so the
HTTP service and the CLI can surface failures uniformly.
"""

from __future__ import annotations


class OrsimError(Exception):
    """Base class for all domain errors."""

    @property
    def code(self) -> str:
        return type(self).__name__


# --- core domain ---

class EmptyRoute(OrsimError):
    pass


# --- workflow engine ---

class InvalidCase(OrsimError):
    pass


class IncompleteRoster(OrsimError):
    pass


class SimulationNotRunning(OrsimError):
    pass


class DuplicateEvent(OrsimError):
    pass


class AlreadyFinalized(OrsimError):
    pass


# --- agent runtime ---

class BackendFailure(OrsimError):
    """Generation backend failed (transport, timeout, or refusal)."""


# --- knowledge bank ---

class BankSealed(OrsimError):
    pass


class EmptyDocument(OrsimError):
    pass


class BankNotBuilt(OrsimError):
    pass


# --- copilot ---

class NoRouteEmitted(OrsimError):
    pass


class EmptyPlan(OrsimError):
    pass


class AppendAfterFinalize(OrsimError):
    pass


class DuplicateRecord(OrsimError):
    pass


# --- evaluation ---

class EmptyGold(OrsimError):
    pass


class NoCases(OrsimError):
    pass


# --- records io ---

class ParseError(OrsimError):
    pass


class ValidationError(OrsimError):
    pass


class InvalidMix(OrsimError):
    pass


# --- service ---

class UnknownCase(OrsimError):
    pass


class InvalidConfig(OrsimError):
    pass


class UnknownSession(OrsimError):
    pass


class NotTrainingMode(OrsimError):
    pass


class RoleUnavailable(OrsimError):
    pass


class NotYourTurn(OrsimError):
    pass
