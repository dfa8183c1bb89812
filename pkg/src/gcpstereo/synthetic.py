"""Random-dot stereograms with exact ground truth, for tests and demos."""

import os

import numpy as np

from .imageio import save_gray_png, save_gt_png

__all__ = ["random_dot_pair", "random_dot_dataset", "write_dataset"]


def random_dot_pair(shape=(32, 32), background=2, foreground=6, noise=0.0, rng=None):
    """Build a left/right pair from a random texture and a two-layer disparity field.

    The right image is i.i.d. uniform texture.  A rectangle of random size and
    position sits at disparity ``foreground`` over a ``background`` plane, and
    the left image samples the right one at ``x - d``.  Pixels with
    ``x - d < 0`` have no correspondence and are left unknown (NaN) in the
    returned ground truth; they get fresh texture.

    Returns ``(left, right, gt)`` with intensities in [0, 1].
    """
    rng = np.random.default_rng(rng)
    h, w = shape
    right = rng.random((h, w))
    disp = np.full((h, w), int(background), dtype=np.int64)
    rh = rng.integers(h // 4, h // 2 + 1)
    rw = rng.integers(w // 4, w // 2 + 1)
    top = rng.integers(0, h - rh + 1)
    lft = rng.integers(0, w - rw + 1)
    disp[top:top + rh, lft:lft + rw] = int(foreground)

    ys, xs = np.mgrid[0:h, 0:w]
    src = xs - disp
    valid = src >= 0
    left = rng.random((h, w))
    left[valid] = right[ys[valid], src[valid]]
    if noise:
        left = np.clip(left + rng.normal(0.0, noise, left.shape), 0.0, 1.0)
        right = np.clip(right + rng.normal(0.0, noise, right.shape), 0.0, 1.0)
    gt = disp.astype(np.float64)
    gt[~valid] = np.nan
    return left, right, gt


def random_dot_dataset(n, shape=(32, 32), max_disparity=8, noise=0.0, seed=0):
    """``n`` stereograms with random background/foreground disparities in [0, max_disparity]."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        bg, fg = sorted(rng.choice(max_disparity + 1, size=2, replace=False))
        out.append(random_dot_pair(shape, background=bg, foreground=fg, noise=noise, rng=rng))
    return out


def write_dataset(frames, directory):
    """Write frames using the ``NNNNNN_left.png`` / ``_right.png`` / ``_gt.png`` naming."""
    os.makedirs(directory, exist_ok=True)
    for i, (left, right, gt) in enumerate(frames):
        stem = os.path.join(directory, f"{i:06d}")
        save_gray_png(left, stem + "_left.png")
        save_gray_png(right, stem + "_right.png")
        save_gt_png(gt, stem + "_gt.png")
