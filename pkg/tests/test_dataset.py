import numpy as np
import pytest

from scarlet_kit.data.dataset import (
    DatasetConfig,
    build_splits,
    generate_synthetic,
    load_external,
    require_split,
    save_dataset,
    split,
    write_dataset_csv,
)
from scarlet_kit.engine.checkpoint import save_checkpoint
from scarlet_kit.engine.tensor import Rng
from scarlet_kit.errors import InputError, ParseError
from scarlet_kit.oracle.ground_truth import OracleConfig, train_standalone
from scarlet_kit.search_space.spec import Architecture, SpaceSpec, validate_space

# stem, two inverted bottlenecks and the classifier tail
REFERENCE_NET = {
    "name": "reference", "input_resolution": 16, "classes": 4,
    "stem": {"out_channels": 8}, "tail": {"channels": 32},
    "layers": [
        {"in_channels": 8, "out_channels": 16, "stride": 2, "choices": ["E3K3", "E3K5"]},
        {"in_channels": 16, "out_channels": 16, "stride": 1, "choices": ["E3K3", "E3K5"]},
    ],
}


@pytest.fixture(scope="module")
def small():
    return generate_synthetic(seed=3, n=40, classes=4, size=8)


class TestGenerateSynthetic:
    def test_same_seed_is_bitwise_identical(self):
        a, b = generate_synthetic(5, 24), generate_synthetic(5, 24)
        assert a.images.tobytes() == b.images.tobytes()
        assert a.labels.tolist() == b.labels.tolist()

    def test_different_seed_differs(self):
        assert generate_synthetic(5, 24).images.tobytes() != generate_synthetic(6, 24).images.tobytes()

    def test_shape_range_and_balance(self, small):
        assert small.images.shape == (40, 3, 8, 8)
        assert small.images.dtype == np.float32
        assert small.images.min() >= 0.0 and small.images.max() <= 1.0
        assert small.class_histogram().tolist() == [10, 10, 10, 10]

    def test_more_classes_than_pattern_families(self):
        data = generate_synthetic(0, 24, classes=6, size=8)
        assert data.class_histogram().tolist() == [4] * 6

    def test_unbalanced_request(self):
        with pytest.raises(InputError, match="divisible"):
            generate_synthetic(0, 10, classes=4)

    def test_read_only(self, small):
        with pytest.raises(ValueError):
            small.images[0, 0, 0, 0] = 2.0


class TestSplit:
    def test_default_sizes(self):
        splits = build_splits(DatasetConfig())
        assert (len(splits.train), len(splits.val), len(splits.test)) == (4096, 512, 1024)

    def test_tiny_sizes_and_tags(self, tiny_splits):
        assert (len(tiny_splits.train), len(tiny_splits.val), len(tiny_splits.test)) == (256, 32, 64)
        assert (tiny_splits.train.split, tiny_splits.val.split, tiny_splits.test.split) == ("train", "val", "test")

    def test_disjoint_and_complete(self, small):
        splits = split(small, 0.25, seed=1, test_fraction=0.2)
        rows = np.concatenate([s.images.reshape(len(s), -1) for s in (splits.train, splits.val, splits.test)])
        assert rows.shape[0] == 40
        assert len({row.tobytes() for row in rows}) == 40

    def test_same_seed_same_split(self, small):
        a, b = split(small, 0.25, seed=4), split(small, 0.25, seed=4)
        assert a.val.labels.tolist() == b.val.labels.tolist()
        assert a.test.images.tobytes() == b.test.images.tobytes()

    def test_empty_split(self):
        with pytest.raises(InputError, match="empty"):
            split(generate_synthetic(0, 4, classes=2, size=4), 0.1, seed=0, test_fraction=0.1)

    @pytest.mark.parametrize("fraction", [0.0, 1.0, -0.5])
    def test_fraction_range(self, small, fraction):
        with pytest.raises(InputError):
            split(small, fraction, seed=0)

    def test_require_split(self, tiny_splits):
        assert require_split(tiny_splits.val, "train", "val") is tiny_splits.val
        with pytest.raises(InputError, match="test"):
            require_split(tiny_splits.test, "train", "val")


class TestBatches:
    def test_in_order_with_remainder(self, small):
        sizes = [len(labels) for _, labels in small.batches(16)]
        assert sizes == [16, 16, 8]

    def test_small_remainder_dropped(self, small):
        sizes = [len(labels) for _, labels in small.batches(13, min_batch=2)]
        assert sizes == [13, 13, 13]

    def test_shuffle_is_seeded(self, small):
        first = [labels.tolist() for _, labels in small.batches(8, rng=Rng(2))]
        again = [labels.tolist() for _, labels in small.batches(8, rng=Rng(2))]
        assert first == again
        assert sorted(sum(first, [])) == sorted(small.labels.tolist())

    def test_bad_batch_size(self, small):
        with pytest.raises(InputError):
            next(small.batches(0))


class TestExternalData:
    def test_scnt_round_trip(self, tmp_path, small):
        loaded = load_external(save_dataset(small, tmp_path / "data.scnt"), "scnt")
        assert loaded.images.tobytes() == small.images.tobytes()
        assert loaded.labels.tolist() == small.labels.tolist()
        assert loaded.classes == 4

    def test_csv_round_trip(self, tmp_path, small):
        loaded = load_external(write_dataset_csv(small, tmp_path / "data.csv"), "csv", classes=4)
        np.testing.assert_allclose(loaded.images, small.images, atol=1e-7)
        assert loaded.labels.tolist() == small.labels.tolist()

    def test_csv_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("y,p0,p1,p2\n0,0.1,0.2,0.3\n")
        with pytest.raises(ParseError, match="line 1"):
            load_external(path, "csv", channels=3)

    def test_csv_bad_label_reports_line(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("label,p0,p1,p2\n0,0.1,0.2,0.3\n1.5,0.1,0.2,0.3\n")
        with pytest.raises(ParseError, match="line 3"):
            load_external(path, "csv", channels=3)

    def test_csv_non_square_pixels(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("label,p0,p1\n0,0.1,0.2\n")
        with pytest.raises(ParseError, match="square"):
            load_external(path, "csv", channels=1)

    def test_scnt_missing_tensors(self, tmp_path):
        path = save_checkpoint(tmp_path / "weights.scnt", {"images": np.zeros((2, 1, 2, 2), dtype=np.float32)})
        with pytest.raises(ParseError, match="labels"):
            load_external(path, "scnt")

    def test_out_of_range_images_are_rescaled(self, tmp_path):
        images = np.arange(8, dtype=np.float32).reshape(2, 1, 2, 2) * 32
        path = save_checkpoint(tmp_path / "raw.scnt", {"images": images, "labels": np.array([0, 1], dtype=np.float32)})
        loaded = load_external(path)
        assert loaded.images.min() == 0.0 and loaded.images.max() == 1.0

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_external(tmp_path / "absent.scnt")

    def test_csv_header_only(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("label,p0,p1,p2\n")
        with pytest.raises(ParseError, match="no samples"):
            load_external(path, "csv", channels=3)

    def test_scnt_without_samples(self, tmp_path):
        path = save_checkpoint(tmp_path / "empty.scnt", {
            "images": np.zeros((0, 1, 2, 2), dtype=np.float32),
            "labels": np.zeros((0,), dtype=np.float32),
        })
        with pytest.raises(ParseError, match="no samples"):
            load_external(path, "scnt")


@pytest.mark.slow
class TestLearnability:
    def test_reference_net_learns_default_task(self):
        spec = SpaceSpec.model_validate(REFERENCE_NET)
        validate_space(spec)
        result = train_standalone(spec, Architecture((0, 0)), build_splits(DatasetConfig()), OracleConfig(epochs=30))
        assert result.test_accuracy >= 0.9
