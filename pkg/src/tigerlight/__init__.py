"""Low-light enhancement and COCO-style detection evaluation for wildlife camera data."""

from . import _kernels
from .annotations import GroundTruthBox, GroundTruthSet, ImageRecord, dataset_stats
from .boxes import BoundingBox, Detection
from .enhancement import EnhancerConfig, enhance
from .imagecore import RasterImage, ScalarMap, load_image
from .metrics import COCO_THRESHOLDS, EvalReport, evaluate, iou

__version__ = "0.1.0"
