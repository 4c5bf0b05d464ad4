"""Small file helpers: atomic writes and content hashing for manifests."""

from __future__ import annotations

import hashlib
import os


def atomic_write_bytes(path, payload: bytes):
    """Write via temp file + rename so readers never see partial content."""
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def atomic_write_text(path, text: str):
    atomic_write_bytes(path, text.encode("utf-8"))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_dir(path) -> str:
    """Hash of (relative name, file hash) pairs, sorted; recomputable."""
    h = hashlib.sha256()
    for root, _, files in sorted(os.walk(path)):
        for name in sorted(files):
            full = os.path.join(root, name)
            rel = os.path.relpath(full, path)
            h.update(rel.encode())
            h.update(bytes.fromhex(sha256_file(full)))
    return h.hexdigest()
