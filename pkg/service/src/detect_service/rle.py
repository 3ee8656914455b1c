"""Run-length codec for binary masks.

Masks flatten row-major; counts alternate zero-runs and one-runs, starting
with the zero run (0 when the mask begins with ones). Compact, byte-stable,
and language-neutral.
"""

from __future__ import annotations

import numpy as np


def encode(mask: np.ndarray) -> dict:
    flat = np.asarray(mask, dtype=bool).ravel(order="C")
    counts: list[int] = []
    if flat.size and flat[0]:
        counts.append(0)
    changes = np.nonzero(np.diff(flat))[0]
    prev = 0
    for c in changes:
        counts.append(int(c + 1 - prev))
        prev = c + 1
    if flat.size:
        counts.append(int(flat.size - prev))
    return {"size": [int(mask.shape[0]), int(mask.shape[1])], "counts": counts}


def decode(rle: dict) -> np.ndarray:
    h, w = rle["size"]
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    value = False
    for count in rle["counts"]:
        if value:
            flat[pos:pos + count] = True
        pos += count
        value = not value
    if pos != h * w:
        raise ValueError(f"RLE covers {pos} pixels, image has {h * w}")
    return flat.reshape(h, w)
