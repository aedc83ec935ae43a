"""On-disk cache of output bound estimates.

One JSON file per key. Floats are stored as ``float.hex`` strings so values
round-trip exactly. Writes go to a temporary file that is renamed into place,
which keeps concurrent writers from exposing half-written entries.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import struct
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

__all__ = ["FORMAT_VERSION", "cache_key", "BoundsCache"]

FORMAT_VERSION = 1

log = logging.getLogger(__name__)


def _bits(values) -> str:
    return "".join(struct.pack("<d", float(v)).hex() for v in values)


def cache_key(model_digest: str, box, seed: int, cfg_fingerprint: str, n_samples: int) -> str:
    h = hashlib.sha256()
    for part in (model_digest, _bits(box.lo), _bits(box.hi), str(int(seed)),
                 cfg_fingerprint, str(int(n_samples))):
        h.update(part.encode())
        h.update(b"\0")
    return h.hexdigest()


def _hex(v) -> list[str] | str:
    if np.ndim(v):
        return [float(a).hex() for a in v]
    return float(v).hex()


def _unhex(v):
    if isinstance(v, list):
        return np.array([float.fromhex(a) for a in v])
    return float.fromhex(v)


class BoundsCache:
    def __init__(self, directory):
        self.directory = Path(directory)

    def path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def load(self, key: str) -> dict | None:
        """Return the stored record, or None on a miss or unreadable entry."""
        p = self.path(key)
        if not p.exists():
            return None
        try:
            with open(p, encoding="utf-8") as fh:
                raw = json.load(fh)
            if raw["format_version"] != FORMAT_VERSION or raw["key"] != key:
                raise ValueError("version or key mismatch")
            outputs = [
                {name: _unhex(o[name]) for name in ("lo", "hi", "lo_witness", "hi_witness")}
                for o in raw["outputs"]
            ]
        except (OSError, ValueError, KeyError, TypeError) as exc:
            log.warning("ignoring corrupt cache entry %s: %s", p, exc)
            return None
        raw["outputs"] = outputs
        return raw

    def store(self, key: str, fields: dict, outputs: list[dict]) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        record = {
            "format_version": FORMAT_VERSION,
            "key": key,
            "fields": fields,
            "created": datetime.now(timezone.utc).isoformat(),
            "outputs": [{k: _hex(v) for k, v in o.items()} for o in outputs],
        }
        fd, tmp = tempfile.mkstemp(dir=self.directory, prefix=".tmp-", suffix=".json")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(record, fh, indent=1)
            os.replace(tmp, self.path(key))
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        return self.path(key)
