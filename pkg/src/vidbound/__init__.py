"""Boundary detection and segmentation for video.

Image and motion boundary cues are computed per frame, combined at the level
of segmentation hierarchies, and the resulting superpixels are propagated
along optical flow into a video segmentation.
"""
from .config import PipelineConfig, load_config
from .detect import DetectorConfig, detect_boundaries, detect_flow_boundaries
from .evaluation import GroundTruth, PrCurve, boundary_pr, undersegmentation_error, volume_pr
from .flowtools import FlowPair, SmoothingConfig, estimate_flow, temporal_smooth, warp_map
from .globalize import SpectralConfig, spectral_boundaries
from .hierarchy import Ucm, build_ucm, extract_superpixels, ucm_to_boundary_map
from .merge import merge_cues, merge_ucms
from .pipeline import StageError, run_pipeline
from .proposals import ProposalSet, average_contours, generate_proposals
from .raster import BoundaryMap, FlowField, FrameImage, LabelMap, RasterError, VideoSegmentation
from .videoseg import PropagationConfig, propagate_segmentation

__version__ = "0.1.0"
