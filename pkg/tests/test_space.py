import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from accel_dse.model import Configuration, ConvLayer
from accel_dse.space import (
    ConfigSpace,
    NormStats,
    SpaceError,
    Variable,
    argmax_config,
    candidate_product,
    decode_onehot,
    dnnweaver_space,
    encode_conditioning,
    encode_onehot,
    im2col_space,
    load_norm_stats,
    load_space,
    make_space,
    save_norm_stats,
    save_space,
)

UNIT_STATS = NormStats(1, 1, 1, 1, 1, 1, 1, 1)


def tiny_space(**choices):
    """A dnnweaver-shaped space with small choice lists for exhaustive tests."""
    defaults = dict(pen=(4, 16), iss=(2048, 8192), wss=(128,), oss=(128,))
    defaults.update(choices)
    return dnnweaver_space(defaults)


class TestSpaceConstruction:
    def test_variable_counts(self):
        assert len(im2col_space().variables) == 12
        assert len(dnnweaver_space().variables) == 4

    def test_onehot_width(self):
        assert im2col_space().onehot_width == 6 * 6 + 6 * 5
        assert dnnweaver_space().onehot_width == 5 + 3 * 6

    def test_choices_must_increase(self):
        with pytest.raises(SpaceError):
            Variable("pen", (4, 4))
        with pytest.raises(SpaceError):
            Variable("pen", ())

    def test_unknown_override_rejected(self):
        with pytest.raises(SpaceError):
            dnnweaver_space({"tic": (1, 2)})

    def test_serialization_round_trip(self, tmp_path):
        space = im2col_space({"pen": (64, 128)})
        path = tmp_path / "space.txt"
        save_space(space, path)
        assert load_space(path) == space


class TestEncodeOnehot:
    def test_single_variable(self):
        space = tiny_space(pen=(4, 16), iss=(2048,), wss=(128,), oss=(128,))
        vec = encode_onehot(Configuration(pen=4, iss=2048, wss=128, oss=128), space)
        assert vec[:2].tolist() == [1.0, 0.0]

    def test_two_variable_blocks(self):
        space = tiny_space()
        vec = encode_onehot(Configuration(pen=16, iss=2048, wss=128, oss=128), space)
        assert vec[:4].tolist() == [0.0, 1.0, 1.0, 0.0]

    def test_each_block_sums_to_one(self):
        space = im2col_space()
        config = space.config_from_indices([0] * 12)
        vec = encode_onehot(config, space)
        off = 0
        for size in space.block_lengths:
            assert vec[off : off + size].sum() == 1.0
            off += size

    def test_value_not_in_choices(self):
        space = tiny_space()
        with pytest.raises(SpaceError, match="pen"):
            encode_onehot(Configuration(pen=5, iss=2048, wss=128, oss=128), space)


class TestDecodeOnehot:
    def test_both_choices_kept(self):
        space = tiny_space(pen=(4, 16), iss=(2048,), wss=(128,), oss=(128,))
        probs = np.array([0.6, 0.4, 1.0, 1.0, 1.0])
        out = decode_onehot(probs, space, 0.2)
        assert [v for v, _ in out[0]] == [4, 16]

    def test_low_probability_dropped(self):
        space = tiny_space(pen=(4, 16), iss=(2048,), wss=(128,), oss=(128,))
        probs = np.array([0.95, 0.05, 1.0, 1.0, 1.0])
        out = decode_onehot(probs, space, 0.2)
        assert [v for v, _ in out[0]] == [4]

    def test_threshold_boundary(self):
        space = tiny_space(pen=(1, 2, 3), iss=(2048,), wss=(128,), oss=(128,))
        probs = np.array([0.15, 0.15, 0.7, 1.0, 1.0, 1.0])
        assert [v for v, _ in decode_onehot(probs, space, 0.2)[0]] == [3]
        assert [v for v, _ in decode_onehot(probs, space, 0.1)[0]] == [1, 2, 3]

    def test_empty_block_falls_back_to_argmax(self):
        space = tiny_space(pen=(1, 2, 3), iss=(2048,), wss=(128,), oss=(128,))
        probs = np.array([0.4, 0.4, 0.2, 1.0, 1.0, 1.0])
        out = decode_onehot(probs, space, 0.5)
        assert [v for v, _ in out[0]] == [1]  # lowest index wins the tie

    def test_length_mismatch(self):
        with pytest.raises(SpaceError):
            decode_onehot(np.ones(3), tiny_space(), 0.2)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 10**9))
    def test_roundtrip_identity(self, seed):
        space = im2col_space()
        rng = np.random.default_rng(seed)
        indices = [int(rng.integers(len(v.choices))) for v in space.variables]
        config = space.config_from_indices(indices)
        out = decode_onehot(encode_onehot(config, space), space, 0.5)
        assert [b[0][0] for b in out] == [
            getattr(config, v.name) for v in space.variables
        ]
        assert all(len(b) == 1 for b in out)


class TestCandidateProduct:
    def test_paper_style_enumeration(self):
        space = tiny_space(pen=(4, 16), iss=(2048, 8192), wss=(128,), oss=(128,))
        choices = [
            [(4, 0.5), (16, 0.4)],
            [(2048, 0.5), (8192, 0.4)],
            [(128, 1.0)],
            [(128, 1.0)],
        ]
        cands = candidate_product(choices, space, cap=100)
        got = [(c.pen, c.iss) for c in cands]
        assert got == [(4, 2048), (4, 8192), (16, 2048), (16, 8192)]

    def test_all_singletons(self):
        space = tiny_space()
        choices = [[(4, 1.0)], [(2048, 1.0)], [(128, 1.0)], [(128, 1.0)]]
        assert len(candidate_product(choices, space, cap=10)) == 1

    def test_capped_top_k_matches_exhaustive_scoring(self):
        # 12 variables, 2 choices each: 4096 combinations, keep the top 100.
        space = im2col_space()
        rng = np.random.default_rng(42)
        choices = []
        for var in space.variables:
            p = rng.uniform(0.1, 0.9)
            choices.append([(var.choices[0], p), (var.choices[1], 1.0 - p)])
        cands = candidate_product(choices, space, cap=100)
        assert len(cands) == 100

        scored = []
        for combo in itertools.product(*[range(2)] * 12):
            score = 1.0
            vals = []
            for v, i in enumerate(combo):
                vals.append(choices[v][i][0])
                score *= choices[v][i][1]
            scored.append((-score, combo, vals))
        scored.sort()
        expected = [
            Configuration(**dict(zip(space.names, vals)))
            for _, _, vals in scored[:100]
        ]
        assert cands == expected

    def test_lazy_path_agrees_with_dense_path(self):
        space = dnnweaver_space()
        rng = np.random.default_rng(5)
        choices = []
        for var in space.variables:
            probs = rng.dirichlet(np.ones(len(var.choices)))
            choices.append(list(zip(var.choices, probs)))
        import accel_dse.space as sp

        dense = sp._top_k_dense(
            choices, [len(c) for c in choices],
            int(np.prod([len(c) for c in choices])), 50,
        )
        lazy = sp._top_k_lazy(choices, [len(c) for c in choices], 50)
        assert dense == lazy

    def test_count_formula_below_cap(self):
        space = tiny_space(pen=(1, 2, 3), iss=(2048, 8192), wss=(128,), oss=(128,))
        choices = [
            [(1, 0.4), (2, 0.3), (3, 0.3)],
            [(2048, 0.6), (8192, 0.4)],
            [(128, 1.0)],
            [(128, 1.0)],
        ]
        assert len(candidate_product(choices, space, cap=100)) == 6

    def test_empty_choice_rejected(self):
        with pytest.raises(SpaceError):
            candidate_product([[], [(1, 1.0)]], tiny_space(), cap=5)


class TestConditioning:
    def test_unit_stats_identity(self):
        layer = ConvLayer(3, 5, 7, 9, 2, 4)
        rng = np.random.default_rng(0)
        vec = encode_conditioning(layer, 11.0, 13.0, UNIT_STATS, rng, noise_len=0)
        assert vec.tolist() == [3, 5, 7, 9, 2, 4, 11, 13]

    def test_doubling_stds_halves_entries(self):
        layer = ConvLayer(3, 5, 7, 9, 2, 4)
        doubled = NormStats(2, 2, 2, 2, 2, 2, 2, 2)
        rng = np.random.default_rng(0)
        a = encode_conditioning(layer, 11.0, 13.0, UNIT_STATS, rng, noise_len=0)
        b = encode_conditioning(layer, 11.0, 13.0, doubled, rng, noise_len=0)
        assert np.allclose(b, a / 2)

    def test_hand_computed_stats(self):
        # Layer features from a 3-row toy set; population std by hand.
        rows = [(1.0, 4.0), (2.0, 5.0), (3.0, 9.0)]
        lat = np.array([r[0] for r in rows])
        pw = np.array([r[1] for r in rows])
        stats = NormStats(1, 1, 1, 1, 1, 1, float(np.std(lat)), float(np.std(pw)))
        # std(lat): mean 2, var (1+0+1)/3 -> sqrt(2/3)
        assert stats.latency == pytest.approx((2.0 / 3.0) ** 0.5)
        rng = np.random.default_rng(0)
        vec = encode_conditioning(
            ConvLayer(1, 1, 1, 1, 1, 1), 2.0, 6.0, stats, rng, noise_len=0
        )
        assert vec[6] == pytest.approx(2.0 / stats.latency)
        assert vec[7] == pytest.approx(6.0 / stats.power)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**9))
    def test_noise_bounds_and_determinism(self, seed):
        layer = ConvLayer(1, 2, 3, 4, 5, 6)
        a = encode_conditioning(
            layer, 1.0, 1.0, UNIT_STATS, np.random.default_rng(seed), noise_len=16
        )
        b = encode_conditioning(
            layer, 1.0, 1.0, UNIT_STATS, np.random.default_rng(seed), noise_len=16
        )
        assert len(a) == 24
        assert (a[8:] >= 0).all() and (a[8:] < 0.1).all()
        assert np.array_equal(a, b)

    def test_missing_stats(self):
        with pytest.raises(SpaceError):
            encode_conditioning(
                ConvLayer(1, 1, 1, 1, 1, 1), 1.0, 1.0, None, np.random.default_rng(0)
            )


class TestNormStats:
    def test_rejects_nonpositive(self):
        with pytest.raises(SpaceError):
            NormStats(1, 1, 1, 1, 1, 1, 0.0, 1)

    def test_round_trip(self, tmp_path):
        stats = NormStats(1.5, 2.5, 3.5, 4.5, 0.25, 0.125, 9.75, 0.0625)
        path = tmp_path / "stats.txt"
        save_norm_stats(stats, path, extra={"variant": "im2col", "seed": 3})
        loaded, extra = load_norm_stats(path)
        assert loaded == stats
        assert extra == {"variant": "im2col", "seed": "3"}

    def test_argmax_config(self):
        space = tiny_space(pen=(4, 16), iss=(2048, 8192), wss=(128,), oss=(128,))
        probs = np.array([0.3, 0.7, 0.5, 0.5, 1.0, 1.0])
        config = argmax_config(probs, space)
        assert config.pen == 16
        assert config.iss == 2048  # tie broken toward the lowest index
