"""buscad: desk-scale breast-ultrasound CAD pipeline.

Preprocessing, handcrafted (shape/GLCM/histogram) and deep features, SMO
kernel SVM and weighted KNN, a mini-CNN with anchored transfer learning,
Grad-CAM interpretability, and the full evaluation/selection stack.
"""

__version__ = "0.1.0"

from .data import BinaryMask, ClassLabel, GrayImage, LabeledSample, SplitSpec
from .features import FeatureVector, MinMaxScaler
from .metrics import DomainShiftIndicator, EvalReport
from .synth import SynthConfig

__all__ = [
    "BinaryMask",
    "ClassLabel",
    "DomainShiftIndicator",
    "EvalReport",
    "FeatureVector",
    "GrayImage",
    "LabeledSample",
    "MinMaxScaler",
    "SplitSpec",
    "SynthConfig",
    "__version__",
]
