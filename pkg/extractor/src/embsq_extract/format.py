"""EMBSQ1 writer: the binary interchange format consumed by the detector CLI.

Layout (little-endian): magic bytes "EMBSQ1\\0", u32 dim, u64 count, then
per sequence a u32 length followed by length*dim float32 values,
token-major. Values are downcast to 32-bit floats at write time.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"EMBSQ1\x00"


def write_embsq(sequences: list[np.ndarray], path) -> None:
    """Write (S_i, D) float arrays; all must share D and contain finite values."""
    if sequences:
        dim = int(sequences[0].shape[1])
    else:
        raise ValueError("refusing to write an empty corpus")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQ", dim, len(sequences)))
        for i, seq in enumerate(sequences):
            arr = np.ascontiguousarray(seq, dtype="<f4")
            if arr.ndim != 2 or arr.shape[1] != dim:
                raise ValueError(f"sequence {i}: expected (S, {dim}), got {arr.shape}")
            if arr.shape[0] < 1:
                raise ValueError(f"sequence {i}: empty")
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"sequence {i}: non-finite values")
            f.write(struct.pack("<I", arr.shape[0]))
            f.write(arr.tobytes())
