"""Supervised canonical morphological segmentation with joint tree and edit models."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source checkout
    __version__ = "0.1.0"

from .core import Alphabet, ModelParameters, ParseTree, SparseVector
from .data import TreebankEntry, load_lexicon, load_treebank
from .estimator import FlatSegmenter, HierarchicalSegmenter

__all__ = [
    "Alphabet",
    "ModelParameters",
    "ParseTree",
    "SparseVector",
    "TreebankEntry",
    "load_lexicon",
    "load_treebank",
    "FlatSegmenter",
    "HierarchicalSegmenter",
    "__version__",
]
