from .app import DEFAULT_PALETTE, create_app, load_palette
from .store import ConflictError, QueueItem, StoreError, TriageStore, UnknownItemError

__all__ = [
    "create_app",
    "load_palette",
    "DEFAULT_PALETTE",
    "TriageStore",
    "QueueItem",
    "StoreError",
    "ConflictError",
    "UnknownItemError",
]
