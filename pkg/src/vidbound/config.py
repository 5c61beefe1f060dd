"""Pipeline configuration stored as a flat ``key = value`` text file.

Recognised keys (defaults in parentheses)::

    cues                  comma list of name:weight
                          (spb:1, flow_spb:1, temporal_smooth:1,
                           op_proposals:1, flow_op_proposals:1)
    detector.scales       (1,2,4)
    detector.orientations (8)
    detector.nms          (true)
    spectral.radius       (5)
    spectral.rho          (0.1)
    spectral.eigvecs      (16)
    spectral.downsample   (2)
    proposals.thresholds  (10)
    proposals.seeds       (8)
    proposals.depth       (10)
    flow.levels           (3)
    flow.iters            (100)
    flow.alpha            (0.05)
    smooth.window         (1)
    spx.threshold         (0.3)
    spx.count             (unset; overrides spx.threshold per frame)
    propagate.overlap     (0.3)
    propagate.new_labels  (true)
    eval.thresholds       (25)
    eval.tol              (auto: ceil(0.0075 * diagonal))
    eval.granularities    (0.05,0.1,...,0.95)
    output.svg            (false)

Cue names: detector, op_proposals, spb, flow_boundaries, flow_spb,
flow_op_proposals, temporal_smooth. Lines starting with ``#`` are comments.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field, fields, replace

from .detect import DetectorConfig
from .flowtools import SmoothingConfig
from .globalize import SpectralConfig
from .raster import RasterError
from .videoseg import PropagationConfig

CUE_NAMES = ("detector", "op_proposals", "spb", "flow_boundaries", "flow_spb",
             "flow_op_proposals", "temporal_smooth")

DEFAULT_CUES = (("spb", 1.0), ("flow_spb", 1.0), ("temporal_smooth", 1.0),
                ("op_proposals", 1.0), ("flow_op_proposals", 1.0))


class ConfigError(RasterError):
    pass


def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {s!r}")


def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(x) for x in s.split(",") if x.strip())


@dataclass(frozen=True)
class PipelineConfig:
    cues: tuple[tuple[str, float], ...] = DEFAULT_CUES
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    spectral: SpectralConfig = field(default_factory=SpectralConfig)
    proposal_thresholds: int = 10
    proposal_seeds: int = 8
    proposal_depth: int = 10
    flow_levels: int = 3
    flow_iters: int = 100
    flow_alpha: float = 0.05
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    spx_threshold: float = 0.3
    spx_count: int | None = None
    propagation: PropagationConfig = field(default_factory=PropagationConfig)
    eval_thresholds: int = 25
    eval_tol: float | None = None
    granularities: tuple[float, ...] = tuple(round(0.05 * k, 2) for k in range(1, 20))
    svg: bool = False

    def __post_init__(self):
        if not self.cues:
            raise ConfigError("empty cue list")
        for name, w in self.cues:
            if name not in CUE_NAMES:
                raise ConfigError(f"unknown cue {name!r}")
            if w <= 0:
                raise ConfigError(f"cue weight must be positive: {name}")
        if not 0 <= self.spx_threshold <= 1:
            raise ConfigError("spx.threshold must lie in [0, 1]")

    def dumps(self) -> str:
        d, s, p = self.detector, self.spectral, self.propagation
        lines = [
            "cues = " + ", ".join(f"{n}:{w!r}" for n, w in self.cues),
            "detector.scales = " + ",".join(repr(float(x)) for x in d.scales),
            f"detector.orientations = {d.n_orientations}",
            f"detector.nms = {str(d.nonmax_suppress).lower()}",
            f"spectral.radius = {s.radius}",
            f"spectral.rho = {s.rho!r}",
            f"spectral.eigvecs = {s.n_eigvecs}",
            f"spectral.downsample = {s.downsample}",
            f"proposals.thresholds = {self.proposal_thresholds}",
            f"proposals.seeds = {self.proposal_seeds}",
            f"proposals.depth = {self.proposal_depth}",
            f"flow.levels = {self.flow_levels}",
            f"flow.iters = {self.flow_iters}",
            f"flow.alpha = {self.flow_alpha!r}",
            f"smooth.window = {self.smoothing.window}",
            f"spx.threshold = {self.spx_threshold!r}",
            f"spx.count = {'' if self.spx_count is None else self.spx_count}",
            f"propagate.overlap = {p.overlap_threshold!r}",
            f"propagate.new_labels = {str(p.allow_new_labels).lower()}",
            f"eval.thresholds = {self.eval_thresholds}",
            f"eval.tol = {'auto' if self.eval_tol is None else repr(self.eval_tol)}",
            "eval.granularities = " + ",".join(repr(float(x)) for x in self.granularities),
            f"output.svg = {str(self.svg).lower()}",
        ]
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode()).hexdigest()


def parse_cues(text: str) -> tuple[tuple[str, float], ...]:
    out = []
    for item in text.split(","):
        item = item.strip()
        if not item:
            continue
        name, _, w = item.partition(":")
        out.append((name.strip(), float(w) if w else 1.0))
    return tuple(out)


def loads(text: str) -> PipelineConfig:
    kv: dict[str, str] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected key = value")
        k, v = (x.strip() for x in line.split("=", 1))
        kv[k] = v
    return from_mapping(kv)


def from_mapping(kv: dict[str, str]) -> PipelineConfig:
    cfg = PipelineConfig()
    det = {f.name: getattr(cfg.detector, f.name) for f in fields(cfg.detector)}
    spec = {f.name: getattr(cfg.spectral, f.name) for f in fields(cfg.spectral)}
    prop = {f.name: getattr(cfg.propagation, f.name) for f in fields(cfg.propagation)}
    top: dict = {}
    smooth_window = cfg.smoothing.window
    handlers = {
        "cues": lambda v: top.__setitem__("cues", parse_cues(v)),
        "detector.scales": lambda v: det.__setitem__("scales", _floats(v)),
        "detector.orientations": lambda v: det.__setitem__("n_orientations", int(v)),
        "detector.nms": lambda v: det.__setitem__("nonmax_suppress", _bool(v)),
        "spectral.radius": lambda v: spec.__setitem__("radius", int(v)),
        "spectral.rho": lambda v: spec.__setitem__("rho", float(v)),
        "spectral.eigvecs": lambda v: spec.__setitem__("n_eigvecs", int(v)),
        "spectral.downsample": lambda v: spec.__setitem__("downsample", int(v)),
        "proposals.thresholds": lambda v: top.__setitem__("proposal_thresholds", int(v)),
        "proposals.seeds": lambda v: top.__setitem__("proposal_seeds", int(v)),
        "proposals.depth": lambda v: top.__setitem__("proposal_depth", int(v)),
        "flow.levels": lambda v: top.__setitem__("flow_levels", int(v)),
        "flow.iters": lambda v: top.__setitem__("flow_iters", int(v)),
        "flow.alpha": lambda v: top.__setitem__("flow_alpha", float(v)),
        "spx.threshold": lambda v: top.__setitem__("spx_threshold", float(v)),
        "spx.count": lambda v: top.__setitem__("spx_count", int(v) if v else None),
        "propagate.overlap": lambda v: prop.__setitem__("overlap_threshold", float(v)),
        "propagate.new_labels": lambda v: prop.__setitem__("allow_new_labels", _bool(v)),
        "eval.thresholds": lambda v: top.__setitem__("eval_thresholds", int(v)),
        "eval.tol": lambda v: top.__setitem__("eval_tol", None if v in ("", "auto") else float(v)),
        "eval.granularities": lambda v: top.__setitem__("granularities", _floats(v)),
        "output.svg": lambda v: top.__setitem__("svg", _bool(v)),
    }
    for k, v in kv.items():
        if k == "smooth.window":
            try:
                smooth_window = int(v)
            except ValueError as exc:
                raise ConfigError(f"{k}: {exc}") from exc
            continue
        if k not in handlers:
            raise ConfigError(f"unknown key {k!r}")
        try:
            handlers[k](v)
        except ValueError as exc:
            raise ConfigError(f"{k}: {exc}") from exc
    try:
        return replace(cfg, detector=DetectorConfig(**det), spectral=SpectralConfig(**spec),
                       propagation=PropagationConfig(**prop),
                       smoothing=SmoothingConfig(window=smooth_window), **top)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> PipelineConfig:
    with open(path) as fh:
        return loads(fh.read())
