"""Sample batches with provenance, and their CSV / binary encodings."""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, SchemaError

MAGIC = b"PGN1"
HEADER = struct.Struct("<4sIQQ32s")


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """
    ``values`` has shape ``(n,)`` or ``(n, d)``; ``spec_hash`` is the hex
    SHA-256 of the generating spec, ``seed`` the master seed.
    """

    values: np.ndarray
    spec_hash: str
    seed: int
    namespace: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise DomainError("sample batch contains non-finite values")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return 1 if self.values.ndim == 1 else self.values.shape[1]

    def __len__(self):
        return self.n

    def to_csv(self, path_or_buf) -> None:
        """RFC-4180 rows of ``d`` comma-separated values, LF endings, no header."""
        arr = self.values.reshape(self.n, self.d)
        if hasattr(path_or_buf, "write"):
            np.savetxt(path_or_buf, arr, fmt="%.17g", delimiter=",", newline="\n")
        else:
            with open(path_or_buf, "w", newline="") as fh:
                np.savetxt(fh, arr, fmt="%.17g", delimiter=",", newline="\n")

    def to_bytes(self) -> bytes:
        head = HEADER.pack(MAGIC, self.d, self.n, self.seed, bytes.fromhex(self.spec_hash))
        return head + np.ascontiguousarray(self.values, dtype="<f8").tobytes()

    def to_binary(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "SampleBatch":
        if len(data) < HEADER.size:
            raise SchemaError("truncated batch header")
        magic, d, n, seed, h = HEADER.unpack_from(data)
        if magic != MAGIC:
            raise SchemaError("bad magic: not a PGN1 batch")
        body = data[HEADER.size:]
        if len(body) != 8 * n * d:
            raise SchemaError(f"expected {n * d} values, found {len(body) // 8}")
        vals = np.frombuffer(body, dtype="<f8").astype(float)
        return cls(vals if d == 1 else vals.reshape(n, d), h.hex(), seed)

    @classmethod
    def from_binary(cls, path) -> "SampleBatch":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())

    def csv_text(self) -> str:
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()
