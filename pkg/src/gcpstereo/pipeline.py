"""End-to-end stereo pipeline and its flat key=value configuration.

Baseline: cost volume -> SGM -> WTA.  With network parameters the cost
volume is refined with ground control points before SGM.
"""

import os
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import cost as costmod
from .gcp import REFINE_DEFAULTS, RefineConfig, max_confidence, refine_costs, select_gcps
from .imageio import normalize
from .net import TrainConfig, confidence_volume
from .sgm import SGM_DEFAULTS, SgmConfig, aggregate, wta

__all__ = ["PipelineConfig", "ConfigError", "compute_cost", "match", "MatchResult"]


class ConfigError(ValueError):
    pass


_TRAIN_KEYS = tuple(f.name for f in fields(TrainConfig))
_COST_FUNCS = {"sad": costmod.sad_cost, "census": costmod.census_cost}


@dataclass
class PipelineConfig:
    """Everything one run needs.

    Penalties and refinement constants left as ``None`` resolve to the
    per-cost defaults: SAD ``p1=1, p2=14, theta=0.55, c_hi=5, c_low=0.001``;
    Census ``p1=4, p2=128, theta=0.60, c_hi=200, c_low=1.3``.
    """

    cost_kind: str = "census"
    window_radius: int = 4
    d_max: int = 228
    p1: float = None
    p2: float = None
    theta: float = None
    c_hi: float = None
    c_low: float = None
    train: TrainConfig = field(default_factory=TrainConfig)
    model: str = None

    def __post_init__(self):
        self.cost_kind = str(self.cost_kind).lower()
        if self.cost_kind not in _COST_FUNCS:
            raise ConfigError(f"cost_kind must be 'sad' or 'census', got {self.cost_kind!r}")
        if int(self.window_radius) < 0 or int(self.d_max) < 0:
            raise ConfigError("window_radius and d_max must be non-negative")
        try:
            self.sgm_config()
            self.refine_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def sgm_config(self):
        base = SGM_DEFAULTS[self.cost_kind]
        return SgmConfig(p1=base.p1 if self.p1 is None else float(self.p1),
                         p2=base.p2 if self.p2 is None else float(self.p2))

    def refine_config(self):
        base = REFINE_DEFAULTS[self.cost_kind]
        pick = lambda v, d: d if v is None else float(v)  # noqa: E731
        return RefineConfig(theta=pick(self.theta, base.theta), c_hi=pick(self.c_hi, base.c_hi),
                            c_low=pick(self.c_low, base.c_low))

    def resolved(self):
        """Copy with every per-cost default filled in."""
        s, r = self.sgm_config(), self.refine_config()
        return replace(self, p1=s.p1, p2=s.p2, theta=r.theta, c_hi=r.c_hi, c_low=r.c_low)

    def to_text(self):
        cfg = self.resolved()
        lines = [f"cost_kind = {cfg.cost_kind}", f"window_radius = {cfg.window_radius}",
                 f"d_max = {cfg.d_max}"]
        lines += [f"{k} = {_fmt(getattr(cfg, k))}" for k in ("p1", "p2", "theta", "c_hi", "c_low")]
        lines += [f"{k} = {_fmt(getattr(cfg.train, k))}" for k in _TRAIN_KEYS]
        if cfg.model is not None:
            lines.append(f"model = {cfg.model}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text, overrides=None):
        values = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key] = value
        values.update({k: v for k, v in (overrides or {}).items() if v is not None})
        return cls.from_mapping(values)

    @classmethod
    def from_mapping(cls, values):
        top, train = {}, {}
        known = {f.name for f in fields(cls)} - {"train"}
        for key, value in values.items():
            if key in _TRAIN_KEYS:
                train[key] = value
            elif key in known:
                top[key] = value
            else:
                raise ConfigError(f"unknown config key {key!r}")
        try:
            for key in ("window_radius", "d_max"):
                if key in top:
                    top[key] = int(top[key])
            for key in ("p1", "p2", "theta", "c_hi", "c_low"):
                if key in top and top[key] is not None:
                    top[key] = float(top[key])
            for f in fields(TrainConfig):
                if f.name in train:
                    train[f.name] = type(f.default)(train[f.name])
            return cls(train=TrainConfig(**train), **top)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_file(cls, path, overrides=None):
        path = os.fspath(path)
        if not os.path.isfile(path):
            raise ConfigError(f"config file not found: {path}")
        with open(path) as fh:
            return cls.from_text(fh.read(), overrides)


def _fmt(v):
    return repr(v) if isinstance(v, float) else str(v)


def compute_cost(left, right, kind, d_max, radius=4):
    try:
        func = _COST_FUNCS[kind]
    except KeyError:
        raise ValueError(f"unknown cost kind {kind!r}") from None
    return func(left, right, d_max, radius)


@dataclass
class MatchResult:
    disparity: np.ndarray
    cost: object
    refined: object = None
    confidence: np.ndarray = None
    mask: object = None


def match(left, right, config, params=None, normalized=False):
    """Disparity map for one pair; GCP refinement is used when ``params`` is given.

    Images are normalized to zero mean / unit variance first unless
    ``normalized`` says they already are.
    """
    if not normalized:
        left, right = normalize(left), normalize(right)
    cost = compute_cost(left, right, config.cost_kind, config.d_max, config.window_radius)
    sgm_cfg = config.sgm_config()
    if params is None:
        return MatchResult(wta(aggregate(cost, sgm_cfg)), cost)
    vol = confidence_volume(params, left, right, config.d_max)
    cof_c, cof_d = max_confidence(vol)
    rcfg = config.refine_config()
    mask = select_gcps(cof_c, rcfg.theta, cof_d)
    refined = refine_costs(cost, mask, rcfg)
    return MatchResult(wta(aggregate(refined, sgm_cfg)), cost, refined, vol, mask)
