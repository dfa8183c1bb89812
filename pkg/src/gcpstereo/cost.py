"""Matching-cost volumes (SAD and Census) over square support windows.

Volumes are ``(height, width, d_max + 1)`` arrays: ``cost[y, x, d]`` compares
the window around ``(x, y)`` in the left image with the window around
``(x - d, y)`` in the right image.  Window reads replicate the border pixel.
A disparity that moves the center off the left edge of the right image gets
the largest cost of its kind.
"""

import os
import struct
from dataclasses import dataclass

import numpy as np

from ._validation import check_d_max, check_pair, check_radius, check_volume, check_image

__all__ = [
    "CostVolume",
    "SAD_MAX",
    "sad_cost",
    "census_transform",
    "census_cost",
    "census_max",
    "save_cost_volume",
    "load_cost_volume",
]

SAD_MAX = 3.2
COST_KINDS = ("sad", "census", "refined")


@dataclass(frozen=True)
class CostVolume:
    """A matching-cost volume plus the cost function that produced it.

    ``base_kind`` remembers the original kind after refinement, so the SGM
    penalties can still be picked per cost function.
    """

    cost: np.ndarray
    kind: str
    base_kind: str = None

    def __post_init__(self):
        cost = check_volume(self.cost, "cost")
        if self.kind not in COST_KINDS:
            raise ValueError(f"unknown cost kind {self.kind!r}")
        base = self.base_kind or self.kind
        if base not in COST_KINDS:
            raise ValueError(f"unknown base cost kind {base!r}")
        cost.setflags(write=False)
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "base_kind", base)

    @property
    def shape(self):
        return self.cost.shape

    @property
    def d_max(self):
        return self.cost.shape[2] - 1


def _box_sum(arr, radius):
    """Sum over (2r+1)x(2r+1) windows of an array already padded by ``radius``."""
    k = 2 * radius + 1
    c = np.cumsum(np.cumsum(arr, axis=0), axis=1)
    c = np.pad(c, ((1, 0), (1, 0)))
    return c[k:, k:] - c[:-k, k:] - c[k:, :-k] + c[:-k, :-k]


def sad_cost(left, right, d_max, radius=4):
    """SAD volume with per-pixel differences clipped at 1 and scaled into [0, 3.2].

    ``cost = 3.2 / n * sum(min(|L(q) - R(q - d)|, 1))`` over the ``n`` window
    pixels, so a full-window mismatch reaches exactly :data:`SAD_MAX`.
    """
    left, right = check_pair(left, right)
    d_max = check_d_max(d_max)
    r = check_radius(radius)
    h, w = left.shape
    n = (2 * r + 1) ** 2
    rows = np.clip(np.arange(-r, h + r), 0, h - 1)
    cols = np.arange(-r, w + r)
    lpad = left[rows][:, np.clip(cols, 0, w - 1)]
    out = np.empty((h, w, d_max + 1))
    for d in range(d_max + 1):
        rpad = right[rows][:, np.clip(cols - d, 0, w - 1)]
        diff = np.minimum(np.abs(lpad - rpad), 1.0)
        out[:, :, d] = _box_sum(diff, r) * (SAD_MAX / n)
        out[:, : min(d, w), d] = SAD_MAX
    np.clip(out, 0.0, SAD_MAX, out=out)
    return CostVolume(out, "sad")


def _window_offsets(radius):
    return [(dy, dx) for dy in range(-radius, radius + 1) for dx in range(-radius, radius + 1)
            if (dy, dx) != (0, 0)]


def census_max(radius=4):
    """Number of descriptor bits, i.e. the largest Census cost (80 for 9x9)."""
    return (2 * radius + 1) ** 2 - 1


def census_transform(img, radius=4):
    """Per-pixel Census bits, shape ``(height, width, (2r+1)**2 - 1)``, dtype bool.

    Bit ``k`` is set iff the center is strictly brighter than the k-th window
    neighbour (row-major over the window, center skipped).
    """
    img = check_image(img)
    r = check_radius(radius)
    h, w = img.shape
    padded = np.pad(img, r, mode="edge")
    offsets = _window_offsets(r)
    bits = np.empty((h, w, len(offsets)), dtype=bool)
    for k, (dy, dx) in enumerate(offsets):
        bits[:, :, k] = img > padded[r + dy:r + dy + h, r + dx:r + dx + w]
    return bits


def census_cost(left, right, d_max, radius=4):
    """Hamming distance between Census descriptors of ``(x, y)`` and ``(x - d, y)``."""
    left, right = check_pair(left, right)
    d_max = check_d_max(d_max)
    r = check_radius(radius)
    h, w = left.shape
    nbits = census_max(r)
    packed_l = np.packbits(census_transform(left, r), axis=-1)
    packed_r = np.packbits(census_transform(right, r), axis=-1)
    out = np.full((h, w, d_max + 1), float(nbits))
    for d in range(min(d_max, w - 1) + 1):
        x = np.bitwise_xor(packed_l[:, d:], packed_r[:, : w - d])
        out[:, d:, d] = np.bitwise_count(x).sum(axis=-1, dtype=np.int64)
    return CostVolume(out, "census")


_DUMP_HEADER = struct.Struct("<III")


def save_cost_volume(vol, path):
    """Binary dump: ``<u32 width, u32 height, u32 d_max>`` then float32 LE costs.

    Costs are ordered pixel-major (row by row) with disparity innermost.
    """
    cost = vol.cost if isinstance(vol, CostVolume) else check_volume(vol)
    h, w, nd = cost.shape
    with open(os.fspath(path), "wb") as fh:
        fh.write(_DUMP_HEADER.pack(w, h, nd - 1))
        fh.write(np.ascontiguousarray(cost, dtype="<f4").tobytes())


def load_cost_volume(path, kind="sad"):
    with open(os.fspath(path), "rb") as fh:
        header = fh.read(_DUMP_HEADER.size)
        if len(header) != _DUMP_HEADER.size:
            raise ValueError(f"{path}: truncated cost-volume header")
        w, h, d_max = _DUMP_HEADER.unpack(header)
        data = np.frombuffer(fh.read(), dtype="<f4")
    if data.size != w * h * (d_max + 1):
        raise ValueError(f"{path}: expected {w * h * (d_max + 1)} costs, found {data.size}")
    return CostVolume(data.reshape(h, w, d_max + 1).astype(np.float64), kind)
