"""In-memory session store with LRU eviction.

A session pins one inversion: the processed source image, the latent/feature
results, and the exact PNG bytes served at invert time (so an alpha=0 edit
returns the reconstruction byte-for-byte). History appends are serialized by
a per-session lock; the store itself locks only its bookkeeping.
"""

from __future__ import annotations

import threading
import uuid
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Optional

from torch import Tensor

from ..encoder import InversionResult


@dataclass
class Session:
    session_id: str
    source: Tensor
    result: InversionResult
    reconstruction_png: dict[str, str]  # mode -> base64 PNG served at invert time
    history: list[dict] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)


class SessionStore:
    def __init__(self, capacity: int = 256):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._sessions: OrderedDict[str, Session] = OrderedDict()
        self._lock = threading.Lock()

    def create(self, source: Tensor, result: InversionResult, reconstruction_png: dict[str, str]) -> Session:
        session = Session(
            session_id=uuid.uuid4().hex,
            source=source,
            result=result,
            reconstruction_png=reconstruction_png,
        )
        with self._lock:
            self._sessions[session.session_id] = session
            while len(self._sessions) > self.capacity:
                self._sessions.popitem(last=False)
        return session

    def get(self, session_id: str) -> Optional[Session]:
        with self._lock:
            session = self._sessions.get(session_id)
            if session is not None:
                self._sessions.move_to_end(session_id)
            return session

    def __len__(self) -> int:
        with self._lock:
            return len(self._sessions)
