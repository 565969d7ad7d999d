"""Dual-agent repair of bugs in LLM agent programs, with its evaluation harness."""

from .errors import AgentFixError, IoError, TransportError

__version__ = "0.1.0"

__all__ = ["AgentFixError", "IoError", "TransportError", "__version__"]
