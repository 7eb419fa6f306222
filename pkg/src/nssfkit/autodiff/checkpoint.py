"""Binary checkpoint files.

Layout::

    b"NSSFCKPT" | uint32 header length | JSON header | float64 payload

The JSON header holds ``manifest`` (architecture hyperparameters) and a
``params`` list of ``{name, shape, offset}`` entries; offsets are byte
positions into the little-endian float64 payload.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"NSSFCKPT"


def save_checkpoint(path, params: dict, manifest: dict) -> None:
    entries, chunks, offset = [], [], 0
    for name in sorted(params):
        arr = np.asarray(getattr(params[name], "data", params[name]), dtype="<f8")
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(arr.tobytes(order="C"))
        offset += arr.nbytes
    header = json.dumps({"manifest": manifest, "params": entries}, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        for c in chunks:
            fh.write(c)


def load_checkpoint(path) -> tuple[dict, dict]:
    """Return (params as numpy arrays, manifest)."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path} is not a checkpoint file")
    (n,) = struct.unpack("<I", raw[8:12])
    header = json.loads(raw[12:12 + n])
    payload = memoryview(raw)[12 + n:]
    params = {}
    for e in header["params"]:
        count = int(np.prod(e["shape"])) if e["shape"] else 1
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=e["offset"])
        params[e["name"]] = arr.reshape(e["shape"]).astype(np.float64)
    return params, header["manifest"]
