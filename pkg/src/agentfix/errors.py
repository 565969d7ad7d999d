"""Exception hierarchy shared across the package."""

from __future__ import annotations


class AgentFixError(Exception):
    """Base class for every error raised by agentfix."""


class TransportError(AgentFixError):
    """Network failure that persisted after all retries."""


class IoError(AgentFixError):
    """Filesystem failure while persisting or loading artifacts."""
