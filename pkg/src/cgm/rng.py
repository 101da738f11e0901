"""Cell-keyed uniform streams on top of numpy's Philox counter generator.

Every lattice cell ``(x, y)`` of stream ``tag`` under key ``(seed, replicate)``
owns one fixed 64-bit Philox output. Any window of the plane can therefore
be sampled independently, and overlapping windows agree cell for cell.
"""

from __future__ import annotations

import numpy as np

# stream tags; one per kind of randomness so draws never collide
BULK = 0
HORIZONTAL = 1
VERTICAL = 2
ARRIVALS = 3
SERVICE = 4

_OFFSET = 1 << 62  # keeps negative coordinates inside the unsigned counter
_MASK = (1 << 64) - 1
_LANES = 4  # Philox4x64 emits four words per counter value


def _check_key(seed: int, replicate: int) -> None:
    for name, value in (("seed", seed), ("replicate", replicate)):
        if not 0 <= int(value) <= _MASK:
            raise ValueError(f"{name} must be an unsigned 64-bit integer, got {value}")


def cell_bits(seed: int, tag: int, origin: tuple[int, int], width: int, height: int,
              replicate: int = 0) -> np.ndarray:
    """Raw 64-bit words, shape (width, height); entry [i, j] belongs to origin + (i, j)."""
    _check_key(seed, replicate)
    if width < 0 or height < 0:
        raise ValueError("window dimensions must be nonnegative")
    out = np.empty((width, height), dtype=np.uint64)
    if width == 0 or height == 0:
        return out
    key = np.array([seed, replicate], dtype=np.uint64)
    x0, y0 = int(origin[0]), int(origin[1])
    start = _OFFSET + x0
    block, lane = divmod(start, _LANES)
    nblocks = -(-(lane + width) // _LANES)
    for j in range(height):
        counter = np.array([block & _MASK, (_OFFSET + y0 + j) & _MASK, tag, 0], dtype=np.uint64)
        gen = np.random.Philox(key=key, counter=counter)
        out[:, j] = gen.random_raw(nblocks * _LANES)[lane:lane + width]
    return out


def cell_uniforms(seed: int, tag: int, origin: tuple[int, int], width: int, height: int,
                  replicate: int = 0) -> np.ndarray:
    """Uniforms in [0, 1) with 53-bit resolution, same layout as :func:`cell_bits`."""
    bits = cell_bits(seed, tag, origin, width, height, replicate)
    return (bits >> np.uint64(11)).astype(np.float64) * 2.0**-53


def sequence_uniforms(seed: int, tag: int, start: int, length: int,
                      replicate: int = 0, lane: int = 0) -> np.ndarray:
    """A one-dimensional stream: the cells (start..start+length-1, lane)."""
    return cell_uniforms(seed, tag, (start, lane), length, 1, replicate)[:, 0]
