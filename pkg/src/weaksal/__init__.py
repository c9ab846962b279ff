"""Weakly-supervised saliency detection from category labels, captions, and
unlabelled images.

The package is organised bottom-up: `tensor` provides a small reverse-mode
autodiff engine on numpy arrays, `attention` and `networks` build the three
models on top of it, `losses` implements the coupled training objectives,
`ranking` and `pseudolabels` produce supervision from unlabelled images, and
`metrics`, `data`, `train`, `cli` cover evaluation and orchestration.
"""

from . import tensor
from .tensor import Tensor

__all__ = ["tensor", "Tensor"]

__version__ = "0.1.0"
