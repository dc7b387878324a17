"""Binary checkpoint format.

Layout: magic "QECD", format version (u32), JSON metadata length (u32),
JSON metadata, then named parameter records: name length (u32), UTF-8 name,
rank (u32), dims (u32 each), raw little-endian float32 data. EMA weights are
stored as a parallel record set under an "ema/" name prefix. All integers are
little-endian.
"""

from __future__ import annotations

import json
import struct
from typing import Dict, Optional, Tuple

import numpy as np

from .errors import CheckpointError

MAGIC = b"QECD"
FORMAT_VERSION = 1

EMA_PREFIX = "ema/"


def save_checkpoint(path, metadata: Dict, params: Dict[str, np.ndarray],
                    ema: Optional[Dict[str, np.ndarray]] = None) -> None:
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<I", FORMAT_VERSION))
        blob = json.dumps(metadata, sort_keys=True).encode("utf-8")
        f.write(struct.pack("<I", len(blob)))
        f.write(blob)

        def write_record(name: str, arr: np.ndarray):
            nm = name.encode("utf-8")
            f.write(struct.pack("<I", len(nm)))
            f.write(nm)
            f.write(struct.pack("<I", arr.ndim))
            for dim in arr.shape:
                f.write(struct.pack("<I", dim))
            f.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())

        for name, arr in params.items():
            write_record(name, arr)
        for name, arr in (ema or {}).items():
            write_record(EMA_PREFIX + name, arr)


def load_checkpoint(path) -> Tuple[Dict, Dict[str, np.ndarray], Dict[str, np.ndarray]]:
    """Returns (metadata, params, ema). ema is empty if none was stored."""
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:4]!r}, not a checkpoint")
    version = struct.unpack_from("<I", raw, 4)[0]
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    meta_len = struct.unpack_from("<I", raw, 8)[0]
    off = 12
    metadata = json.loads(raw[off:off + meta_len].decode("utf-8"))
    off += meta_len
    params: Dict[str, np.ndarray] = {}
    ema: Dict[str, np.ndarray] = {}
    while off < len(raw):
        (name_len,) = struct.unpack_from("<I", raw, off)
        off += 4
        name = raw[off:off + name_len].decode("utf-8")
        off += name_len
        (rank,) = struct.unpack_from("<I", raw, off)
        off += 4
        dims = struct.unpack_from(f"<{rank}I", raw, off) if rank else ()
        off += 4 * rank
        count = int(np.prod(dims)) if dims else 1
        arr = np.frombuffer(raw, dtype="<f4", count=count, offset=off).reshape(dims).copy()
        off += 4 * count
        if name.startswith(EMA_PREFIX):
            ema[name[len(EMA_PREFIX):]] = arr
        else:
            params[name] = arr
    return metadata, params, ema
