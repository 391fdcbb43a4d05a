"""Datasets: synthetic generation, splits and external loaders."""

from scarlet_kit.data.dataset import (
    Dataset,
    DatasetConfig,
    DatasetSplits,
    build_splits,
    generate_synthetic,
    load_external,
    require_split,
    save_dataset,
    split,
    write_dataset_csv,
)
