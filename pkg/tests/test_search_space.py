import numpy as np
import pytest
from pydantic import ValidationError

from scarlet_kit.engine.checkpoint import encode_checkpoint
from scarlet_kit.engine.tensor import Rng
from scarlet_kit.errors import InputError, SpecError
from scarlet_kit.search_space.blocks import SkipBlock, StabilizerBlock
from scarlet_kit.search_space.costs import count_madds, count_params, stripped_layout
from scarlet_kit.search_space.sampling import sample_fair_group, sample_uniform
from scarlet_kit.search_space.spec import (
    Architecture,
    ChoiceSpec,
    SpaceSpec,
    enumerate_architectures,
    identity_genes,
    load_space,
    max_cost_genes,
    parse_architecture,
    space_size,
    validate_architecture,
    validate_space,
)
from scarlet_kit.search_space.supernet import build_supernet, forward_path

# T1 reference costs, summed by hand per conv
STEM_MADDS, TAIL_MADDS = 13824, 16512
E3K3_MADDS, E3K5_MADDS = 38400, 62976
STEM_PARAMS, TAIL_PARAMS = 232, 452
E3K3_PARAMS, E3K5_PARAMS, ELS_PARAMS = 712, 1096, 64


def make_space(layers, stem=8):
    return SpaceSpec.model_validate({
        "name": "probe",
        "input_resolution": 16,
        "classes": 4,
        "stem": {"out_channels": stem},
        "tail": {"channels": 16},
        "layers": layers,
    })


class TestChoiceLabels:
    @pytest.mark.parametrize("label,kind,expansion,kernel,se", [
        ("E3K5", "ib", 3, 5, False),
        ("e6k7_se", "ib", 6, 7, True),
        ("skip", "skip", None, None, False),
        ("ELS", "els", None, None, False),
    ])
    def test_parse(self, label, kind, expansion, kernel, se):
        choice = ChoiceSpec.from_label(label)
        assert (choice.kind, choice.expansion, choice.kernel, choice.se) == (kind, expansion, kernel, se)

    def test_label_round_trip(self):
        assert ChoiceSpec.from_label("E6K3_SE").label == "E6K3_SE"

    def test_unknown_label(self):
        with pytest.raises(SpecError):
            ChoiceSpec.from_label("conv3x3")

    def test_unknown_label_in_space_document(self):
        with pytest.raises(ValidationError):
            make_space([{"in_channels": 8, "out_channels": 8, "choices": ["E3K3", "bogus"]}])


class TestValidateSpace:
    def test_skip_at_stride_two(self):
        spec = make_space([{"in_channels": 8, "out_channels": 8, "stride": 2, "choices": ["E3K3", "skip"]}])
        with pytest.raises(SpecError, match="layer 0"):
            validate_space(spec)

    def test_skip_cannot_change_channels(self):
        spec = make_space([{"in_channels": 8, "out_channels": 16, "choices": ["E3K3", "skip"]}])
        with pytest.raises(SpecError, match="els"):
            validate_space(spec)

    def test_stabilizer_may_change_channels(self):
        spec = make_space([{"in_channels": 8, "out_channels": 16, "choices": ["E3K3", "els"]}])
        assert validate_space(spec) is spec

    def test_channel_chain_must_connect(self):
        spec = make_space([
            {"in_channels": 8, "out_channels": 8, "choices": ["E3K3", "skip"]},
            {"in_channels": 16, "out_channels": 16, "choices": ["E3K3", "skip"]},
        ])
        with pytest.raises(SpecError, match="layer 1"):
            validate_space(spec)

    def test_single_choice_layer(self):
        with pytest.raises(SpecError):
            validate_space(make_space([{"in_channels": 8, "out_channels": 8, "choices": ["E3K3"]}]))

    def test_kernel_outside_catalogue(self):
        with pytest.raises(SpecError, match="kernel 9"):
            validate_space(make_space([{"in_channels": 8, "out_channels": 8, "choices": ["E3K9", "skip"]}]))

    def test_empty_space(self):
        with pytest.raises(SpecError):
            validate_space(make_space([]))


class TestBundledSpaces:
    def test_t1(self, t1):
        assert t1.num_layers == 4
        assert t1.labels(0) == ["E3K3", "E3K5", "skip"]
        assert space_size(t1) == 81
        assert len(list(enumerate_architectures(t1))) == 81

    def test_s1_layout(self):
        s1 = load_space("s1")
        assert s1.num_layers == 19
        assert not s1.is_rectangular()
        assert set(s1.choice_counts()) == {6, 7}

    def test_s2_has_squeeze_excite(self):
        s2 = load_space("s2")
        assert any(c.se for layer in s2.layers for c in layer.choices)
        assert max(s2.choice_counts()) == 13

    def test_with_stabilizers(self, t1, t1_els):
        assert t1_els.labels(3) == ["E3K3", "E3K5", "els"]
        assert t1_els.has_stabilizers() and not t1.has_stabilizers()

    def test_missing_space(self):
        with pytest.raises(FileNotFoundError):
            load_space("no_such_space")

    def test_extreme_genes(self, t1):
        assert identity_genes(t1) == Architecture((2, 2, 2, 2))
        assert max_cost_genes(t1) == Architecture((1, 1, 1, 1))


class TestArchitecture:
    def test_parse(self):
        assert parse_architecture("(0, 1,2,0)").genes == (0, 1, 2, 0)
        assert str(parse_architecture("[3,1]")) == "(3,1)"

    @pytest.mark.parametrize("text", ["", "()", "(0,a)"])
    def test_parse_errors(self, text):
        with pytest.raises(InputError):
            parse_architecture(text)

    def test_gene_out_of_range(self, t1):
        with pytest.raises(InputError, match="layer 2"):
            validate_architecture(t1, Architecture((0, 0, 3, 0)))

    def test_wrong_length(self, t1):
        with pytest.raises(InputError):
            validate_architecture(t1, Architecture((0, 0)))


class TestCosts:
    def test_all_skip(self, t1):
        arch = Architecture((2, 2, 2, 2))
        assert count_madds(t1, arch) == STEM_MADDS + TAIL_MADDS == 30336
        assert count_params(t1, arch) == STEM_PARAMS + TAIL_PARAMS == 684

    def test_single_block(self, t1):
        assert count_madds(t1, Architecture((0, 2, 2, 2))) == 30336 + E3K3_MADDS
        assert count_params(t1, Architecture((0, 2, 2, 2))) == 684 + E3K3_PARAMS
        assert count_params(t1, Architecture((2, 1, 2, 2))) == 684 + E3K5_PARAMS

    def test_max_architecture(self, t1):
        assert count_madds(t1, max_cost_genes(t1)) == 282240

    def test_monotone_in_choice(self, t1):
        skip, small, large = (count_madds(t1, Architecture((g, 0, 0, 0))) for g in (2, 0, 1))
        assert skip < small < large

    def test_stabilizers_vanish_when_folded(self, t1_els):
        arch = Architecture((2, 2, 2, 2))
        assert count_madds(t1_els, arch, folded=True) == 30336
        assert count_madds(t1_els, arch) == 30336 + 4 * 64 * 64
        assert count_params(t1_els, arch) == 684 + 4 * ELS_PARAMS
        assert count_params(t1_els, arch, folded=True) == 684

    def test_stripped_layout_keeps_input_width(self):
        spec = make_space([
            {"in_channels": 8, "out_channels": 16, "choices": ["E3K3", "els"]},
            {"in_channels": 16, "out_channels": 16, "choices": ["E3K3", "skip"]},
        ])
        entries, tail_in = stripped_layout(spec, Architecture((1, 0)))
        assert [(e.in_channels, e.out_channels, e.hidden_channels) for e in entries] == [(8, 16, 48)]
        assert tail_in == 16

    def test_params_match_built_paths(self, t1_els):
        supernet = build_supernet(t1_els, seed=0)
        rng = Rng(5)
        for _ in range(20):
            arch = sample_uniform(t1_els, rng)
            assert count_params(t1_els, arch) == supernet.path(arch).param_count()


class TestSupernet:
    def test_banks(self, t1):
        supernet = build_supernet(t1, seed=0)
        assert [len(bank) for bank in supernet.banks] == [3, 3, 3, 3]
        assert all(isinstance(bank[2], SkipBlock) for bank in supernet.banks)
        assert supernet.stem is not None and supernet.tail is not None

    def test_stabilizer_banks(self, t1_els):
        supernet = build_supernet(t1_els, seed=0)
        block = supernet.banks[0][2]
        assert isinstance(block, StabilizerBlock)
        np.testing.assert_allclose(block.conv.weight.value[:, :, 0, 0], np.eye(8), atol=0.1)

    def test_same_seed_same_checkpoint(self, t1):
        first = encode_checkpoint(build_supernet(t1, seed=11).state_dict())
        assert first == encode_checkpoint(build_supernet(t1, seed=11).state_dict())
        assert first != encode_checkpoint(build_supernet(t1, seed=12).state_dict())

    def test_bank_init_independent_of_other_layers(self, t1):
        shorter = t1.model_copy(update={"layers": t1.layers[:2]})
        a = build_supernet(t1, seed=3).banks[1][0].expand.weight.value
        b = build_supernet(shorter, seed=3).banks[1][0].expand.weight.value
        np.testing.assert_array_equal(a, b)

    def test_unused_banks_do_not_affect_path(self, t1, probe_batch):
        supernet = build_supernet(t1, seed=0)
        arch = Architecture((0, 1, 0, 1))
        before = forward_path(supernet, arch, probe_batch)
        supernet.banks[0][1].expand.weight.value[...] = 0
        supernet.banks[3][0].project.weight.value[...] = 7
        np.testing.assert_array_equal(forward_path(supernet, arch, probe_batch), before)

    def test_all_skip_is_stem_then_tail(self, t1, probe_batch):
        supernet = build_supernet(t1, seed=0)
        logits = forward_path(supernet, Architecture((2, 2, 2, 2)), probe_batch)
        expected, _ = supernet.tail.forward(supernet.stem.forward(probe_batch, "eval"), "eval")
        np.testing.assert_array_equal(logits, expected)

    def test_logits_shape(self, t1, probe_batch):
        logits = forward_path(build_supernet(t1, seed=0), Architecture((0, 1, 2, 0)), probe_batch)
        assert logits.shape == (4, 4) and logits.dtype == np.float32

    def test_save_and_load(self, tmp_path, t1, probe_batch):
        supernet = build_supernet(t1, seed=4)
        supernet.record_update(Architecture((0, 1, 2, 0)))
        path = supernet.save(tmp_path / "supernet.scnt")
        restored = type(supernet).load(path, t1)
        arch = Architecture((1, 0, 0, 2))
        np.testing.assert_array_equal(forward_path(restored, arch, probe_batch), forward_path(supernet, arch, probe_batch))
        assert restored.update_counts.tolist() == supernet.update_counts.tolist()

    def test_prefix_layer_out_of_range(self, t1, probe_batch):
        with pytest.raises(InputError):
            build_supernet(t1, seed=0).prefix_features(Architecture((0, 0, 0, 0)), probe_batch, 4)


class TestSampling:
    def test_uniform_is_deterministic(self, t1):
        assert sample_uniform(t1, Rng(9)) == sample_uniform(t1, Rng(9))

    def test_uniform_marginals(self, t1):
        rng = Rng(0)
        counts = np.zeros((4, 3))
        for _ in range(3000):
            for layer, gene in enumerate(sample_uniform(t1, rng).genes):
                counts[layer, gene] += 1
        np.testing.assert_allclose(counts / 3000, 1 / 3, atol=0.04)

    def test_fair_group_covers_every_choice_once(self, t1):
        rng = Rng(2)
        for _ in range(10):
            group = sample_fair_group(t1, rng)
            assert len(group) == 3
            for layer in range(4):
                assert sorted(arch.genes[layer] for arch in group) == [0, 1, 2]

    def test_fair_group_needs_rectangular_space(self):
        with pytest.raises(SpecError, match="unequal"):
            sample_fair_group(load_space("s1"), Rng(0))
