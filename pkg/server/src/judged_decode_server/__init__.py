"""Logits wire-protocol server for the judged-decode engine."""

from .app import create_app
from .backends import HFBackend, ModelBackend, ServerConfig, TableBackend, build_backend

__version__ = "0.1.0"
