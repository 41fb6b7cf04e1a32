"""CSEQ1 binary sequence files.

Layout (little-endian)::

    b"CSEQ1\\0" | u32 M | u32 N | u8 dtype | M*N (re, im) pairs, row-major | u32 len | JSON

dtype 0 stores float32 pairs, 1 stores float64 pairs. The trailing JSON
blob carries metadata, notably the ``condition`` fields.
"""

import json
import logging
import struct
from pathlib import Path
from typing import Any, Literal

import numpy as np

from tfdiff.constants import Cseq
from tfdiff.errors import FormatError, InvalidSignalError
from tfdiff.signal.sequence import ComplexSequence

logger = logging.getLogger(__name__)

_HEADER = struct.Struct("<IIB")
_LENGTH = struct.Struct("<I")
_PAIR_DTYPES = {Cseq.DTYPE_FLOAT32: np.dtype("<f4"), Cseq.DTYPE_FLOAT64: np.dtype("<f8")}


def encode_cseq(
    seq: ComplexSequence,
    metadata: dict[str, Any] | None = None,
    precision: Literal["float32", "float64"] = "float64",
) -> bytes:
    """Serialize a sequence and its metadata to CSEQ1 bytes."""
    tag = Cseq.DTYPE_FLOAT64 if precision == "float64" else Cseq.DTYPE_FLOAT32
    pairs = np.empty((seq.M, seq.N, 2), dtype=_PAIR_DTYPES[tag])
    pairs[..., 0] = seq.data.real
    pairs[..., 1] = seq.data.imag
    blob = json.dumps(metadata or {}, sort_keys=True).encode("utf-8")
    return b"".join(
        [
            Cseq.MAGIC,
            _HEADER.pack(seq.M, seq.N, tag),
            pairs.tobytes(),
            _LENGTH.pack(len(blob)),
            blob,
        ]
    )


def decode_cseq(raw: bytes) -> tuple[ComplexSequence, dict[str, Any]]:
    """Parse CSEQ1 bytes.

    Raises:
        FormatError: On bad magic, unknown dtype, truncation or invalid metadata
    """
    magic_len = len(Cseq.MAGIC)
    if raw[:magic_len] != Cseq.MAGIC:
        raise FormatError("Not a CSEQ1 file (bad magic)")
    offset = magic_len
    if len(raw) < offset + _HEADER.size:
        raise FormatError("Truncated CSEQ1 header")
    m, n, tag = _HEADER.unpack_from(raw, offset)
    offset += _HEADER.size
    if tag not in _PAIR_DTYPES:
        raise FormatError(f"Unknown CSEQ1 dtype tag {tag}")
    dtype = _PAIR_DTYPES[tag]
    payload = m * n * 2 * dtype.itemsize
    if len(raw) < offset + payload + _LENGTH.size:
        raise FormatError(f"Truncated CSEQ1 payload: expected {payload} data bytes")
    pairs = np.frombuffer(raw, dtype=dtype, count=m * n * 2, offset=offset).reshape(m, n, 2)
    offset += payload
    (blob_len,) = _LENGTH.unpack_from(raw, offset)
    offset += _LENGTH.size
    if len(raw) < offset + blob_len:
        raise FormatError("Truncated CSEQ1 metadata")
    try:
        metadata = json.loads(raw[offset : offset + blob_len].decode("utf-8")) if blob_len else {}
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"Invalid CSEQ1 metadata: {e}") from e
    if not isinstance(metadata, dict):
        raise FormatError("CSEQ1 metadata must be a JSON object")

    data = pairs[..., 0].astype(np.float64) + 1j * pairs[..., 1].astype(np.float64)
    try:
        seq = ComplexSequence(data=data)
    except InvalidSignalError as e:
        raise FormatError(f"Invalid CSEQ1 samples: {e}") from e
    return seq, metadata


def write_cseq(
    path: str | Path,
    seq: ComplexSequence,
    metadata: dict[str, Any] | None = None,
    precision: Literal["float32", "float64"] = "float64",
) -> Path:
    """Write a CSEQ1 file, creating parent directories."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_bytes(encode_cseq(seq, metadata, precision))
    logger.debug(f"Wrote {seq.M}x{seq.N} sequence to {target}")
    return target


def read_cseq(path: str | Path) -> tuple[ComplexSequence, dict[str, Any]]:
    """Read a CSEQ1 file.

    Raises:
        FileNotFoundError: If the file is missing
        FormatError: If the content is malformed
    """
    return decode_cseq(Path(path).read_bytes())
