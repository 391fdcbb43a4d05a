"""Cross-choice feature similarity at one supernet layer."""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np
import pandas as pd

from scarlet_kit.engine.tensor import as_tensor
from scarlet_kit.errors import DimensionError, InputError
from scarlet_kit.search_space.spec import Architecture
from scarlet_kit.search_space.supernet import Supernet

logger = logging.getLogger(__name__)

NORM_EPS = 1e-12


@dataclass
class SimilarityMatrix:
    layer: int
    labels: List[str]
    values: np.ndarray
    prefix: str

    @property
    def row_means(self) -> np.ndarray:
        """Mean similarity of each choice to the others (diagonal excluded)."""
        m = len(self.labels)
        if m < 2:
            return np.zeros(m)
        return (self.values.sum(axis=1) - np.diag(self.values)) / (m - 1)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, index=self.labels, columns=self.labels)


def channel_cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of each (sample, channel) feature map of `a` against `b`, averaged over samples and channels.

    Maps with zero norm count as similarity 0.
    """
    if a.shape != b.shape or a.ndim != 4:
        raise DimensionError(f"feature tensors must share an (n, c, h, w) shape, got {a.shape} and {b.shape}")
    va = a.reshape(a.shape[0], a.shape[1], -1).astype(np.float64)
    vb = b.reshape(b.shape[0], b.shape[1], -1).astype(np.float64)
    dots = np.einsum("ncs,ncs->nc", va, vb, optimize=False)
    norms = np.linalg.norm(va, axis=2) * np.linalg.norm(vb, axis=2)
    cosines = np.where(norms > NORM_EPS, dots / np.maximum(norms, NORM_EPS), 0.0)
    return float(np.clip(cosines, -1.0, 1.0).mean())


def layer_similarity(supernet: Supernet, layer: int, probe_batch: np.ndarray,
                     prefix: Optional[Architecture] = None) -> SimilarityMatrix:
    """Pairwise channel-averaged cosine between the outputs of every choice at `layer`.

    The probe reaches `layer` through `prefix` (choice 0 at every earlier
    layer by default).
    """
    spec = supernet.spec
    if not 0 <= layer < spec.num_layers:
        raise InputError(f"layer {layer} outside [0, {spec.num_layers})")
    prefix = prefix or Architecture(tuple([0] * spec.num_layers))
    x = supernet.prefix_features(prefix, as_tensor(probe_batch), layer)
    outputs = [block.forward(x, "eval") for block in supernet.banks[layer]]
    shapes = {out.shape for out in outputs}
    if len(shapes) != 1:
        raise InputError(f"choices at layer {layer} produce different output shapes {sorted(shapes)}")

    m = len(outputs)
    values = np.eye(m)
    for i in range(m):
        for j in range(i + 1, m):
            values[i, j] = values[j, i] = channel_cosine(outputs[i], outputs[j])
    matrix = SimilarityMatrix(layer, spec.labels(layer), values, str(Architecture(prefix.genes[:layer])))
    logger.debug(f"📊 Layer {layer} similarity row means: {np.round(matrix.row_means, 3).tolist()}")
    return matrix


def write_similarity_csv(matrix: SimilarityMatrix, path) -> Path:
    """CSV with a header row of block labels; the first column repeats the labels."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    matrix.to_frame().to_csv(path, index_label="choice", float_format="%.6f")
    return path
