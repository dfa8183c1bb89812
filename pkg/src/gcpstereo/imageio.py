"""Image and ground-truth I/O.

Images are handled as plain 2-D ``float64`` arrays (height, width).  Ground
truth is a float array with ``NaN`` marking pixels of unknown disparity, and
disparity maps are integer arrays.

KITTI disparity PNGs are 16-bit single channel; a stored value ``v > 0``
decodes to ``v / 256`` and ``v == 0`` means "no ground truth".
"""

import os

import numpy as np
from PIL import Image, UnidentifiedImageError

from ._validation import DegenerateInputError, check_image

__all__ = [
    "ImageFormatError",
    "load_gray",
    "normalize",
    "load_kitti_gt",
    "save_disparity_png",
    "load_disparity_png",
    "save_gray_png",
    "save_gt_png",
    "colorize",
]

KITTI_SCALE = 256.0
_SIXTEEN_BIT_MODES = ("I;16", "I;16L", "I;16B", "I;16N")
# ITU-R BT.601 luma weights
_LUMA = np.array([0.299, 0.587, 0.114])


class ImageFormatError(ValueError):
    """The file exists but is not a supported grayscale/RGB raster."""


def _open(path):
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise FileNotFoundError(f"no such image file: {path}")
    try:
        img = Image.open(path)
        img.load()
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise ImageFormatError(f"cannot decode {path}: {exc}") from exc
    if img.width == 0 or img.height == 0:
        raise ImageFormatError(f"{path} has a zero dimension")
    return img


def _raw_array(img, path):
    """Return (array, full-scale value) for a decoded PIL image."""
    mode = img.mode
    if mode == "L":
        return np.asarray(img, dtype=np.float64), 255.0
    if mode in _SIXTEEN_BIT_MODES or mode == "I":
        arr = np.asarray(img).astype(np.float64)
        if arr.min(initial=0) < 0 or arr.max(initial=0) > 65535:
            raise ImageFormatError(f"{path}: integer image outside the 16-bit range")
        return arr, 65535.0
    if mode in ("RGB", "RGBA", "P", "LA", "1"):
        if mode == "1":
            img = img.convert("L")
            return np.asarray(img, dtype=np.float64), 255.0
        rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
        return rgb @ _LUMA, 255.0
    raise ImageFormatError(f"{path}: unsupported image mode {mode!r}")


def load_gray(path):
    """Load a PNG/PGM image as grayscale intensities scaled to [0, 1].

    8-bit inputs are divided by 255, 16-bit inputs by 65535.  RGB inputs are
    reduced with BT.601 luma first.
    """
    img = _open(path)
    arr, full_scale = _raw_array(img, path)
    return check_image(arr / full_scale, name=os.fspath(path))


def normalize(img):
    """Shift to zero mean and scale to unit (population) standard deviation."""
    arr = check_image(img)
    if arr.size < 2:
        raise DegenerateInputError("normalize needs at least two pixels")
    std = arr.std()
    if not std > 1e-12 * max(1.0, float(np.abs(arr).max())):
        raise DegenerateInputError("cannot normalize a constant image (zero variance)")
    return (arr - arr.mean()) / std


def load_kitti_gt(path, shape=None):
    """Read a KITTI disparity PNG into a float array with NaN for unknown pixels.

    ``shape`` optionally pins the expected (height, width).
    """
    img = _open(path)
    if img.mode not in _SIXTEEN_BIT_MODES and img.mode != "I":
        raise ImageFormatError(f"{path}: ground truth must be a 16-bit PNG, got mode {img.mode!r}")
    raw, _ = _raw_array(img, path)
    if shape is not None and tuple(raw.shape) != tuple(shape):
        raise ValueError(f"{path}: ground truth shape {raw.shape} does not match {tuple(shape)}")
    gt = raw / KITTI_SCALE
    gt[raw == 0] = np.nan
    return gt


def _encode_disparity(disp):
    disp = np.asarray(disp, dtype=np.float64)
    if disp.ndim != 2:
        raise ValueError(f"disparity map must be 2-D, got shape {disp.shape}")
    encoded = np.zeros(disp.shape, dtype=np.uint16)
    known = np.isfinite(disp)
    values = np.rint(disp[known] * KITTI_SCALE)
    if values.size and (values.min() < 0 or values.max() > 65535):
        raise ValueError("disparities outside the encodable range [0, 255.99]")
    encoded[known] = values.astype(np.uint16)
    return encoded


def save_disparity_png(disp, path, preview_path=None):
    """Write a disparity map as a KITTI-style 16-bit PNG (value = round(d*256)).

    A stored 0 doubles as "invalid", so an estimated disparity of exactly 0
    cannot be told apart from a missing one after reloading.  ``NaN`` entries
    are written as 0.  If ``preview_path`` is given an 8-bit color-mapped
    rendering is written there too.
    """
    encoded = _encode_disparity(disp)
    Image.fromarray(encoded).save(os.fspath(path), format="PNG")
    if preview_path is not None:
        Image.fromarray(colorize(disp)).save(os.fspath(preview_path), format="PNG")


def load_disparity_png(path):
    """Inverse of :func:`save_disparity_png`; same decoding as ground truth."""
    return load_kitti_gt(path)


save_gt_png = save_disparity_png


def save_gray_png(img, path):
    """Write intensities in [0, 1] as an 8-bit grayscale PNG (values are clipped)."""
    arr = np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0)
    Image.fromarray(np.rint(arr * 255).astype(np.uint8), mode="L").save(os.fspath(path))


def colorize(disp, vmax=None):
    """Map a disparity image to an RGB uint8 array with a blue-to-red ramp.

    Unknown (NaN) pixels are black.
    """
    disp = np.asarray(disp, dtype=np.float64)
    known = np.isfinite(disp)
    if vmax is None:
        vmax = disp[known].max() if known.any() else 1.0
    t = np.zeros(disp.shape)
    if vmax > 0:
        t[known] = np.clip(disp[known] / vmax, 0.0, 1.0)
    # piecewise-linear "jet"-like ramp
    r = np.clip(1.5 - np.abs(4 * t - 3), 0, 1)
    g = np.clip(1.5 - np.abs(4 * t - 2), 0, 1)
    b = np.clip(1.5 - np.abs(4 * t - 1), 0, 1)
    rgb = np.rint(np.stack([r, g, b], axis=-1) * 255).astype(np.uint8)
    rgb[~known] = 0
    return rgb
