"""Ground control point selection and matching-cost refinement.

A pixel is a ground control point (GCP) when the best confidence it reaches
over all disparities is strictly above ``theta``.  Refinement then flattens
the costs of every non-GCP pixel to ``c_hi`` and pins each GCP's most
confident disparity to ``c_low``, leaving its other costs untouched.
"""

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from ._validation import check_unit_interval, check_volume
from .cost import CostVolume

__all__ = [
    "GcpMask",
    "RefineConfig",
    "REFINE_DEFAULTS",
    "max_confidence",
    "select_gcps",
    "refine_costs",
    "save_gcp_mask",
]


@dataclass(frozen=True)
class RefineConfig:
    theta: float
    c_hi: float
    c_low: float

    def __post_init__(self):
        check_unit_interval(self.theta, "theta")
        if not self.c_low < self.c_hi:
            raise ValueError(f"need c_low < c_hi, got c_low={self.c_low}, c_hi={self.c_hi}")


REFINE_DEFAULTS = {
    "sad": RefineConfig(theta=0.55, c_hi=5.0, c_low=0.001),
    "census": RefineConfig(theta=0.60, c_hi=200.0, c_low=1.3),
}


@dataclass(frozen=True)
class GcpMask:
    cof_c: np.ndarray
    cof_d: np.ndarray
    is_gcp: np.ndarray
    theta: float

    @property
    def shape(self):
        return self.is_gcp.shape

    @property
    def density(self):
        return float(self.is_gcp.mean())


def max_confidence(vol):
    """Per-pixel best confidence and the smallest disparity that reaches it."""
    vol = check_volume(vol, "confidence volume")
    cof_d = np.argmax(vol, axis=2)
    cof_c = np.take_along_axis(vol, cof_d[..., np.newaxis], axis=2)[..., 0]
    return cof_c, cof_d


def select_gcps(cof_c, theta, cof_d=None):
    """Mark pixels with ``cof_c > theta`` (strict) as GCPs."""
    theta = check_unit_interval(theta, "theta")
    cof_c = np.asarray(cof_c, dtype=np.float64)
    if cof_d is None:
        cof_d = np.zeros(cof_c.shape, dtype=np.int64)
    cof_d = np.asarray(cof_d)
    if cof_d.shape != cof_c.shape:
        raise ValueError(f"cof_c {cof_c.shape} and cof_d {cof_d.shape} differ in shape")
    return GcpMask(cof_c, cof_d, cof_c > theta, theta)


def refine_costs(cost, mask, cfg):
    """Apply the two-step GCP refinement and return a volume tagged ``refined``.

    Non-GCP pixels get ``c_hi`` at every disparity, off-image disparities
    included.  GCP pixels get ``c_low`` at ``cof_d`` only.
    """
    vol = cost.cost if isinstance(cost, CostVolume) else check_volume(cost, "cost")
    base_kind = cost.base_kind if isinstance(cost, CostVolume) else "refined"
    if mask.shape != vol.shape[:2]:
        raise ValueError(f"mask shape {mask.shape} does not match cost volume {vol.shape[:2]}")
    if np.any((mask.cof_d < 0) | (mask.cof_d > vol.shape[2] - 1)):
        raise ValueError("cof_d outside the cost volume's disparity range")
    out = np.array(vol, dtype=np.float64)
    out[~mask.is_gcp] = cfg.c_hi
    ys, xs = np.nonzero(mask.is_gcp)
    out[ys, xs, mask.cof_d[ys, xs]] = cfg.c_low
    return CostVolume(out, "refined", base_kind=base_kind)


def save_gcp_mask(mask, path):
    """8-bit PNG with 255 at GCPs and 0 elsewhere."""
    img = np.where(mask.is_gcp, 255, 0).astype(np.uint8)
    Image.fromarray(img, mode="L").save(os.fspath(path))
