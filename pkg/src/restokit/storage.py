"""Content-addressed image blob store (sha256 of canonical PNG bytes).

Backed by a flat directory when given a root path, otherwise in-memory.
Reads verify integrity by re-hashing.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

from .domain import DomainError, ImageState


class BlobMissing(DomainError):
    pass


class BlobCorrupt(DomainError):
    pass


class BlobStore:
    def __init__(self, root: str | Path | None = None):
        self.root = Path(root) if root is not None else None
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
        self._memory: dict[str, bytes] = {}

    def _path(self, ref: str) -> Path:
        assert self.root is not None
        return self.root / f"{ref}.png"

    def put_bytes(self, data: bytes) -> str:
        ref = hashlib.sha256(data).hexdigest()
        if self.root is not None:
            path = self._path(ref)
            if not path.exists():
                tmp = path.with_suffix(".tmp")
                tmp.write_bytes(data)
                tmp.rename(path)
        else:
            self._memory[ref] = data
        return ref

    def put(self, image: ImageState) -> str:
        data = image.png_bytes()
        ref = self.put_bytes(data)
        return ref

    def exists(self, ref: str) -> bool:
        if self.root is not None:
            return self._path(ref).exists()
        return ref in self._memory

    def get_bytes(self, ref: str) -> bytes:
        if self.root is not None:
            path = self._path(ref)
            if not path.exists():
                raise BlobMissing(f"no blob {ref}")
            data = path.read_bytes()
        else:
            if ref not in self._memory:
                raise BlobMissing(f"no blob {ref}")
            data = self._memory[ref]
        if hashlib.sha256(data).hexdigest() != ref:
            raise BlobCorrupt(f"blob {ref} fails its integrity re-hash")
        return data

    def get_image(self, ref: str) -> ImageState:
        return ImageState.from_png_bytes(self.get_bytes(ref))
