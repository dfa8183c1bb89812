"""Stereo matching with CNN-detected ground control points and 16-path SGM."""

from .cost import CostVolume, census_cost, census_transform, sad_cost
from .estimators import SGMStereo, SiameseConfidenceNet
from .evaluate import error_rate, per_frame_report, sweep_theta
from .gcp import GcpMask, RefineConfig, max_confidence, refine_costs, select_gcps
from .imageio import load_gray, load_kitti_gt, normalize, save_disparity_png
from .net import NetworkParams, TrainConfig, confidence_volume, init_params, train
from .pipeline import PipelineConfig, match
from .sgm import DIRECTIONS_16, SgmConfig, aggregate, path_cost, wta

__version__ = "0.1.0"

__all__ = [
    "CostVolume", "census_cost", "census_transform", "sad_cost",
    "SGMStereo", "SiameseConfidenceNet",
    "error_rate", "per_frame_report", "sweep_theta",
    "GcpMask", "RefineConfig", "max_confidence", "refine_costs", "select_gcps",
    "load_gray", "load_kitti_gt", "normalize", "save_disparity_png",
    "NetworkParams", "TrainConfig", "confidence_volume", "init_params", "train",
    "PipelineConfig", "match",
    "DIRECTIONS_16", "SgmConfig", "aggregate", "path_cost", "wta",
]
