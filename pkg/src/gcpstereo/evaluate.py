"""Error metrics, per-frame baseline/refined reports and the theta sweep."""

import csv
import glob
import os
import re
from dataclasses import dataclass

import numpy as np

from ._validation import DegenerateInputError, check_unit_interval
from .gcp import max_confidence, refine_costs, select_gcps
from .imageio import load_gray, load_kitti_gt, normalize
from .net import confidence_volume
from .pipeline import compute_cost, match
from .sgm import aggregate, wta

__all__ = [
    "Frame",
    "FrameReport",
    "ThetaSweepPoint",
    "FrameError",
    "error_rate",
    "load_frames",
    "per_frame_report",
    "mean_errors",
    "sweep_theta",
    "best_theta",
    "write_frames_csv",
    "write_sweep_csv",
]

DEFAULT_TAU = 3.0


class FrameError(RuntimeError):
    def __init__(self, frame_id, cause):
        super().__init__(f"frame {frame_id}: {cause}")
        self.frame_id = frame_id
        self.cause = cause


@dataclass
class Frame:
    frame_id: str
    left: np.ndarray
    right: np.ndarray
    gt: np.ndarray


@dataclass(frozen=True)
class FrameReport:
    frame_id: str
    error_baseline: float
    error_refined: float

    @property
    def improvement(self):
        return self.error_baseline - self.error_refined


@dataclass(frozen=True)
class ThetaSweepPoint:
    theta: float
    mean_error: float


def error_rate(disp, gt, tau=DEFAULT_TAU):
    """Fraction of known-GT pixels where ``|disp - gt| > tau``."""
    disp = np.asarray(disp, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if disp.shape != gt.shape:
        raise ValueError(f"disparity {disp.shape} and ground truth {gt.shape} differ in shape")
    known = np.isfinite(gt)
    if not known.any():
        raise DegenerateInputError("ground truth has no known pixels")
    return float(np.count_nonzero(np.abs(disp[known] - gt[known]) > tau) / np.count_nonzero(known))


_STEM = re.compile(r"^(\d+)_left\.(png|pgm)$", re.IGNORECASE)


def load_frames(directory):
    """Frames named ``NNNNNN_left``/``_right``/``_gt`` (PNG or PGM), sorted by id."""
    directory = os.fspath(directory)
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"data directory not found: {directory}")
    frames = []
    for path in sorted(glob.glob(os.path.join(directory, "*_left.*"))):
        m = _STEM.match(os.path.basename(path))
        if not m:
            continue
        fid, ext = m.group(1), m.group(2)
        base = os.path.join(directory, fid)
        left = load_gray(path)
        right = load_gray(f"{base}_right.{ext}")
        gt = load_kitti_gt(f"{base}_gt.png", shape=left.shape)
        frames.append(Frame(fid, left, right, gt))
    return frames


def _run(frame_id, func, *args):
    try:
        return func(*args)
    except Exception as exc:  # reported with the frame id
        raise FrameError(frame_id, exc) from exc


def per_frame_report(frames, baseline, refined, tau=DEFAULT_TAU):
    """Run two pipelines on every frame; each is ``f(left, right) -> disparity``."""
    reports = []
    for fr in frames:
        eb = error_rate(_run(fr.frame_id, baseline, fr.left, fr.right), fr.gt, tau)
        er = error_rate(_run(fr.frame_id, refined, fr.left, fr.right), fr.gt, tau)
        reports.append(FrameReport(fr.frame_id, eb, er))
    return sorted(reports, key=lambda r: r.frame_id)


def mean_errors(reports):
    """``(mean baseline error, mean refined error, mean improvement)``."""
    if not reports:
        raise DegenerateInputError("no frame reports")
    eb = float(np.mean([r.error_baseline for r in reports]))
    er = float(np.mean([r.error_refined for r in reports]))
    return eb, er, float(np.mean([r.improvement for r in reports]))


def sweep_theta(frames, thetas, params, config, tau=DEFAULT_TAU):
    """Mean refined error over ``frames`` for each theta.

    Cost and confidence volumes are computed once per frame; only GCP
    selection, refinement and SGM are repeated per theta.  The c_hi/c_low
    constants come from ``config``.
    """
    thetas = [check_unit_interval(t, "theta") for t in thetas]
    if not thetas:
        raise ValueError("thetas must be non-empty")
    rcfg = config.refine_config()
    sgm_cfg = config.sgm_config()
    errors = np.zeros((len(thetas), len(frames)))
    for j, fr in enumerate(frames):
        def volumes(fr=fr):
            left, right = normalize(fr.left), normalize(fr.right)
            c = compute_cost(left, right, config.cost_kind, config.d_max, config.window_radius)
            return c, max_confidence(confidence_volume(params, left, right, config.d_max))

        cost, (cof_c, cof_d) = _run(fr.frame_id, volumes)
        for i, theta in enumerate(thetas):
            mask = select_gcps(cof_c, theta, cof_d)
            refined = refine_costs(cost, mask, type(rcfg)(theta, rcfg.c_hi, rcfg.c_low))
            errors[i, j] = error_rate(wta(aggregate(refined, sgm_cfg)), fr.gt, tau)
    return [ThetaSweepPoint(t, float(errors[i].mean())) for i, t in enumerate(thetas)]


def best_theta(points):
    """Sweep point with the lowest mean error (first one on ties)."""
    return min(points, key=lambda p: p.mean_error)


def write_frames_csv(reports, path):
    with open(os.fspath(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame_id", "error_baseline", "error_refined", "improvement"])
        for r in reports:
            w.writerow([r.frame_id, repr(r.error_baseline), repr(r.error_refined), repr(r.improvement)])


def write_sweep_csv(points, path):
    with open(os.fspath(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["theta", "mean_error"])
        for p in points:
            w.writerow([repr(p.theta), repr(p.mean_error)])


def pipelines(config, params):
    """Baseline and refined ``f(left, right) -> disparity`` callables for a config."""
    baseline = lambda l, r: match(l, r, config).disparity  # noqa: E731
    refined = lambda l, r: match(l, r, config, params).disparity  # noqa: E731
    return baseline, refined
