"""Filtered hierarchical sequence models on binary trees.

Generate sequences from a random grammar broadcast down a depth-ell binary
tree, optionally truncating the hierarchy at level k, and run exact
sum-product inference (root posterior, masked-leaf marginals) on the
matching factor graph. Includes a brute-force enumeration oracle, an exact
attention-block execution of the same message passing, and Monte-Carlo
accuracy grids over (k_data, k_bp).
"""

__version__ = "0.1.0"

from .grammar import Grammar, Partition, build_grammar, path_transition, sample_partition
from .treegen import (
    Dataset,
    Evidence,
    TreeSample,
    apply_mask,
    generate_dataset,
    sample_tree,
    sample_trees,
)
from .bp import FactorGraph, Posteriors, build_graph, infer, leaf_map, naive_bayes_root, root_map
from .oracle import enumerate_posteriors, joint_probability
from .embed import EmbeddedTransformer, attention_targets, build_embedding, encode_tokens, forward
from .evalgrid import AccuracyEstimate, embed_vs_bp_report, mc_accuracy, reference_curves

__all__ = [
    "Grammar",
    "Partition",
    "build_grammar",
    "path_transition",
    "sample_partition",
    "Dataset",
    "Evidence",
    "TreeSample",
    "apply_mask",
    "generate_dataset",
    "sample_tree",
    "sample_trees",
    "FactorGraph",
    "Posteriors",
    "build_graph",
    "infer",
    "leaf_map",
    "naive_bayes_root",
    "root_map",
    "enumerate_posteriors",
    "joint_probability",
    "EmbeddedTransformer",
    "attention_targets",
    "build_embedding",
    "encode_tokens",
    "forward",
    "AccuracyEstimate",
    "embed_vs_bp_report",
    "mc_accuracy",
    "reference_curves",
    "__version__",
]
