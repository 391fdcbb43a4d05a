"""Equivariant learnable stabilizers: folding and equivalence checks."""

from scarlet_kit.els.folding import FoldReport, fold_network, fold_pointwise, strip_stabilizers, verify_equivalence
