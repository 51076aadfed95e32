"""Binary artifact encoding shared by all model files.

Every binary artifact starts with the same header: a 4-byte ASCII magic,
a little-endian u32 version, a 16-byte hex vocabulary hash and a 16-byte
hex config hash.  The two hashes let downstream stages refuse inputs that
were produced from a different vocabulary or pipeline configuration.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .errors import FormatError

HASH_LEN = 16

# Sentinel used where a hash is not applicable (e.g. ingested datasets).
NO_HASH = "0" * HASH_LEN


def vocab_hash(vocab: dict[int, str]) -> str:
    """16-hex-char digest of an id<->label table, order independent."""
    h = hashlib.sha256()
    for attr_id in sorted(vocab):
        h.update(f"{attr_id}:{vocab[attr_id]}\n".encode())
    return h.hexdigest()[:HASH_LEN]


def config_hash(canonical_text: str) -> str:
    return hashlib.sha256(canonical_text.encode()).hexdigest()[:HASH_LEN]


def derive_seed(master_seed: int, module: str) -> int:
    """Stable per-module seed so each stage is independently reproducible."""
    digest = hashlib.sha256(f"{master_seed}:{module}".encode()).digest()
    return int.from_bytes(digest[:4], "little")


class ArtifactWriter:
    """Little-endian struct writer with the common header."""

    def __init__(self, fh: BinaryIO, magic: str, version: int,
                 vhash: str, chash: str):
        if len(magic) != 4:
            raise ValueError("magic must be 4 bytes")
        self.fh = fh
        fh.write(magic.encode("ascii"))
        fh.write(struct.pack("<I", version))
        fh.write(vhash.encode("ascii"))
        fh.write(chash.encode("ascii"))

    def u32(self, value: int) -> None:
        self.fh.write(struct.pack("<I", value))

    def f32(self, value: float) -> None:
        self.fh.write(struct.pack("<f", value))

    def u32s(self, values) -> None:
        arr = np.asarray(values, dtype="<u4")
        self.fh.write(arr.tobytes())

    def f32s(self, array: np.ndarray) -> None:
        self.fh.write(np.ascontiguousarray(array, dtype="<f4").tobytes())


class ArtifactReader:
    """Counterpart to :class:`ArtifactWriter`; validates magic/version."""

    def __init__(self, fh: BinaryIO, magic: str, version: int, path: str = ""):
        self.fh = fh
        self.path = path or getattr(fh, "name", "<stream>")
        got = self._read(4)
        if got != magic.encode("ascii"):
            raise FormatError(f"{self.path}: bad magic {got!r}, expected {magic!r}")
        got_version = struct.unpack("<I", self._read(4))[0]
        if got_version != version:
            raise FormatError(
                f"{self.path}: unsupported version {got_version}, expected {version}")
        self.vocab_hash = self._read(HASH_LEN).decode("ascii")
        self.config_hash = self._read(HASH_LEN).decode("ascii")

    def _read(self, n: int) -> bytes:
        data = self.fh.read(n)
        if len(data) != n:
            raise FormatError(f"{self.path}: truncated (wanted {n} bytes, got {len(data)})")
        return data

    def u32(self) -> int:
        return struct.unpack("<I", self._read(4))[0]

    def f32(self) -> float:
        return struct.unpack("<f", self._read(4))[0]

    def u32s(self, count: int) -> np.ndarray:
        return np.frombuffer(self._read(4 * count), dtype="<u4").astype(np.int64)

    def f32s(self, shape: tuple[int, ...]) -> np.ndarray:
        count = int(np.prod(shape))
        arr = np.frombuffer(self._read(4 * count), dtype="<f4")
        return arr.reshape(shape).astype(np.float64)

    def expect_eof(self) -> None:
        if self.fh.read(1):
            raise FormatError(f"{self.path}: trailing bytes after payload")


def check_hashes(path: Path, reader: ArtifactReader, vhash: str,
                 chash: str | None) -> None:
    from .errors import HashMismatchError

    if reader.vocab_hash != vhash:
        raise HashMismatchError(
            f"{path}: vocab hash {reader.vocab_hash} does not match dataset {vhash}")
    if chash is not None and reader.config_hash != chash:
        raise HashMismatchError(
            f"{path}: config hash {reader.config_hash} does not match expected {chash}")
