"""Small shared helpers: atomic writes, seed derivation, canonical JSON."""

import hashlib
import json
import os
import tempfile

import numpy as np

from .errors import IoError


def atomic_write(path: str, data) -> None:
    """Write text or bytes to `path` via a temp file + rename in one directory."""
    directory = os.path.dirname(os.path.abspath(path))
    mode = "wb" if isinstance(data, (bytes, bytearray)) else "w"
    try:
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
        try:
            with os.fdopen(fd, mode) as fh:
                fh.write(data)
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def derive_seeds(root_seed: int, n: int) -> list[int]:
    """Derive `n` decorrelated stage seeds from one root seed."""
    state = np.random.SeedSequence(root_seed).generate_state(n, dtype=np.uint64)
    return [int(s) for s in state]


def canonical_json(obj) -> str:
    """Deterministic JSON text: sorted keys, fixed separators, no ASCII escaping."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()
