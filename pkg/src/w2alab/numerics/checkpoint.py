"""Binary checkpoint format shared artifact-wide.

Layout: 8-byte magic ``W2ALAB01``, 4-byte little-endian header length, a
UTF-8 header of tab-separated lines ``name\\tshape\\tdtype\\toffset`` in
lexicographic name order, then the concatenated little-endian float32
payloads. Offsets are relative to the payload start. Training arrays are
float64; persistence is float32, so save->load->save round-trips bit-exactly.
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError
from .tensor import ParameterRecord, Tensor

MAGIC = b"W2ALAB01"
_DTYPE = "float32"


def serialize_record(record: ParameterRecord) -> bytes:
    header_lines = []
    payload = bytearray()
    for name, tensor in record.items():
        if "\t" in name or "\n" in name:
            raise FormatError(f"parameter name {name!r} contains reserved characters")
        shape_s = "x".join(str(d) for d in tensor.shape)
        header_lines.append(f"{name}\t{shape_s}\t{_DTYPE}\t{len(payload)}")
        payload += tensor.array.astype("<f4").tobytes()
    header = ("\n".join(header_lines) + "\n").encode("utf-8")
    return MAGIC + struct.pack("<I", len(header)) + header + bytes(payload)


def deserialize_record(blob: bytes) -> ParameterRecord:
    if blob[:8] != MAGIC:
        raise FormatError(f"bad checkpoint magic {blob[:8]!r}")
    (header_len,) = struct.unpack("<I", blob[8:12])
    header = blob[12:12 + header_len].decode("utf-8")
    payload = blob[12 + header_len:]
    record = ParameterRecord()
    for line in header.splitlines():
        if not line:
            continue
        try:
            name, shape_s, dtype, offset_s = line.split("\t")
        except ValueError as exc:
            raise FormatError(f"malformed checkpoint header line {line!r}") from exc
        if dtype != _DTYPE:
            raise FormatError(f"unsupported checkpoint dtype {dtype!r}")
        shape = tuple(int(d) for d in shape_s.split("x")) if shape_s else ()
        count = int(np.prod(shape)) if shape else 1
        offset = int(offset_s)
        raw = payload[offset:offset + 4 * count]
        if len(raw) != 4 * count:
            raise FormatError(f"checkpoint payload truncated for {name!r}")
        values = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(shape)
        record.add(name, Tensor(values))
    return record


def save_record(path, record: ParameterRecord) -> None:
    Path(path).write_bytes(serialize_record(record))


def load_record(path) -> ParameterRecord:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(str(p))
    return deserialize_record(p.read_bytes())


def record_digest(record: ParameterRecord) -> str:
    """sha256 of the serialized bytes; used for frozen-component checks."""
    return hashlib.sha256(serialize_record(record)).hexdigest()
