"""Semi-global matching: 1-D path costs, 16-direction averaging and WTA.

Directions are ``(dx, dy)`` integer steps in image coordinates.  The path
cost at ``p`` looks back to the pixel ``p - r`` only, so knight-move
directions such as ``(2, 1)`` skip over intermediate pixels.  Path values
are the literal recursion; no per-step minimum is subtracted.
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_volume
from .cost import CostVolume

__all__ = [
    "DIRECTIONS_8",
    "DIRECTIONS_16",
    "SGM_DEFAULTS",
    "SgmConfig",
    "path_cost",
    "aggregate",
    "wta",
    "energy",
    "sgm",
]

DIRECTIONS_8 = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (1, -1), (-1, 1))
DIRECTIONS_16 = DIRECTIONS_8 + (
    (1, 2), (2, 1), (2, -1), (1, -2), (-1, -2), (-2, -1), (-2, 1), (-1, 2),
)
# float64 integers stay exact below this
_EXACT_LIMIT = 2.0 ** 53


def _check_directions(directions):
    dirs = tuple((int(dx), int(dy)) for dx, dy in directions)
    if not dirs:
        raise ValueError("at least one aggregation direction is required")
    if any(d == (0, 0) for d in dirs):
        raise ValueError("zero direction vector")
    if len(set(dirs)) != len(dirs):
        raise ValueError("direction vectors must be pairwise distinct")
    return dirs


@dataclass(frozen=True)
class SgmConfig:
    p1: float
    p2: float
    directions: tuple = field(default=DIRECTIONS_16)

    def __post_init__(self):
        if not 0 <= self.p1 <= self.p2:
            raise ValueError(f"need 0 <= p1 <= p2, got p1={self.p1}, p2={self.p2}")
        object.__setattr__(self, "directions", _check_directions(self.directions))


SGM_DEFAULTS = {
    "sad": SgmConfig(p1=1.0, p2=14.0),
    "census": SgmConfig(p1=4.0, p2=128.0),
}


def _as_array(cost):
    if isinstance(cost, CostVolume):
        return cost.cost
    return check_volume(cost, "cost")


def _step(prev, p1, p2):
    """Best predecessor term for every disparity; ``prev`` is ``(n, ndisp)``."""
    best = prev.min(axis=1, keepdims=True)
    out = np.minimum(prev, best + p2)
    # d-1 / d+1 neighbours; off-range ones are simply absent
    np.minimum(out[:, 1:], prev[:, :-1] + p1, out=out[:, 1:])
    np.minimum(out[:, :-1], prev[:, 1:] + p1, out=out[:, :-1])
    return out


def path_cost(cost, direction, p1, p2):
    """``L_r(p, d) = C(p, d) + min(L_r(p-r, d), L_r(p-r, d+-1) + p1, min_k L_r(p-r, k) + p2)``.

    Pixels whose predecessor ``p - r`` lies off the image start the path with
    ``L_r = C``.
    """
    c = _as_array(cost)
    (dx, dy), = _check_directions([direction])
    h, w, _ = c.shape
    out = np.empty_like(c)
    if dy != 0:
        order = range(h) if dy > 0 else range(h - 1, -1, -1)
        cols = np.arange(w)
        prev_cols = cols - dx
        ok = (prev_cols >= 0) & (prev_cols < w)
        for y in order:
            py = y - dy
            out[y] = c[y]
            if 0 <= py < h and ok.any():
                out[y, ok] += _step(out[py, prev_cols[ok]], p1, p2)
    else:
        order = range(w) if dx > 0 else range(w - 1, -1, -1)
        for x in order:
            px = x - dx
            out[:, x] = c[:, x]
            if 0 <= px < w:
                out[:, x] += _step(out[:, px], p1, p2)
    return out


def _check_range(c, cfg):
    h, w, nd = c.shape
    longest = max(h, w)
    bound = longest * (float(c.max()) + cfg.p2) if c.size else 0.0
    if bound >= _EXACT_LIMIT:
        raise OverflowError(f"path costs could reach {bound:.3g}; accumulator precision would be lost")


def aggregate(cost, cfg):
    """Average of the path volumes over ``cfg.directions``."""
    c = _as_array(cost)
    _check_range(c, cfg)
    total = np.zeros_like(c)
    for r in cfg.directions:
        total += path_cost(c, r, cfg.p1, cfg.p2)
    return total / len(cfg.directions)


def wta(volume):
    """Per-pixel argmin over disparity; ties go to the smallest disparity."""
    return np.argmin(_as_array(volume), axis=2)


def sgm(cost, cfg):
    return wta(aggregate(cost, cfg))


_NEIGHBOURS = {
    4: ((1, 0), (-1, 0), (0, 1), (0, -1)),
    8: ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (1, -1), (-1, 1)),
}


def energy(disp, cost, p1, p2, neighborhood=8):
    """Data term plus smoothness penalties summed over ordered neighbour pairs.

    Every unordered neighbour pair is counted twice, once from each side.
    """
    c = _as_array(cost)
    disp = np.asarray(disp)
    if disp.shape != c.shape[:2]:
        raise ValueError(f"disparity map {disp.shape} does not match cost volume {c.shape[:2]}")
    if neighborhood not in _NEIGHBOURS:
        raise ValueError("neighborhood must be 4 or 8")
    if np.any((disp < 0) | (disp >= c.shape[2])):
        raise ValueError("disparity outside the cost volume's range")
    disp = disp.astype(np.int64)
    h, w = disp.shape
    data = np.take_along_axis(c, disp[..., np.newaxis], axis=2).sum()
    smooth = 0.0
    for dx, dy in _NEIGHBOURS[neighborhood]:
        y0, y1 = max(0, -dy), h - max(0, dy)
        x0, x1 = max(0, -dx), w - max(0, dx)
        if y1 <= y0 or x1 <= x0:
            continue
        a = disp[y0:y1, x0:x1]
        b = disp[y0 + dy:y1 + dy, x0 + dx:x1 + dx]
        jump = np.abs(a - b)
        smooth += p1 * np.count_nonzero(jump == 1) + p2 * np.count_nonzero(jump > 1)
    return float(data + smooth)
