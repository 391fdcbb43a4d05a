"""Feature similarity, rank correlation and instability diagnostics."""

from scarlet_kit.diagnostics.instability import accuracy_spread, instability_report, write_histogram_csv
from scarlet_kit.diagnostics.ranking import kendall_tau, ranking_pair_agreement
from scarlet_kit.diagnostics.similarity import SimilarityMatrix, channel_cosine, layer_similarity, write_similarity_csv
