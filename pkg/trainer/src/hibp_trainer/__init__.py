"""Training harness for tree-structured sequence datasets.

Trains vanilla single-head encoder transformers on datasets exported by the
`hibp` command-line tool (root classification and masked-symbol
prediction), scores them against the exact-inference reference grids, and
provides attention-map dumps and ancestor probes for inspecting what the
layers learned. All input arrives through files: grammar JSON, dataset
directories, trees.u8 node tables and grid CSVs.
"""

__version__ = "0.1.0"

from .model import Encoder, EncoderConfig
from .data import SequenceData, load_dataset_dir, load_grid_csv, load_trees_u8

__all__ = [
    "Encoder",
    "EncoderConfig",
    "SequenceData",
    "load_dataset_dir",
    "load_grid_csv",
    "load_trees_u8",
    "__version__",
]
