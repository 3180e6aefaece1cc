import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from accel_dse.model import (
    Configuration,
    ConvLayer,
    InfeasibleConfigError,
    PowerCoefficients,
    check_feasible,
    design_metrics,
    dnnweaver_derive_tiling,
    im2col_latency,
    im2col_power,
    metrics_batch,
    padded_dim,
    padded_macs,
    tile_words,
)
from accel_dse.space import dnnweaver_space, im2col_space

UNIT_LAYER = ConvLayer(1, 1, 1, 1, 1, 1)


def minimal_config(**kw):
    base = dict(
        pen=1, iss=4, wss=4, oss=4, sdb=32, dsb=64,
        tic=1, toc=1, tow=1, toh=1, tkw=1, tkh=1,
    )
    base.update(kw)
    return Configuration(**base)


# ---------------------------------------------------------------------------
# Independent straight-line re-implementation of the closed forms, used as
# the oracle. Kept deliberately flat and separate from the module under test.
# ---------------------------------------------------------------------------

def oracle_latency(layer, c):
    cd = lambda a, b: -(-a // b)
    w_in = c.tow * c.toh * c.tic * c.tkw * c.tkh
    w_w = c.tic * c.tkw * c.tkh * c.toc
    w_out = c.tow * c.toh * c.toc
    n_red = cd(layer.ic, c.tic) * cd(layer.kw, c.tkw) * cd(layer.kh, c.tkh)
    n_out = cd(layer.oc, c.toc) * cd(layer.ow, c.tow) * cd(layer.oh, c.toh)
    n = n_red * n_out
    l1 = cd(2 * (w_in + w_w), c.dsb)
    l2 = cd(c.tow * c.toh * c.toc * c.tic * c.tkw * c.tkh, c.pen)
    l3 = cd(2 * w_out, c.sdb)
    return l1 + n_out * max(l1, l2, l3) + (n - n_out) * max(l1, l2) + l3


def oracle_power(layer, c, latency, k):
    cd = lambda a, b: -(-a // b)
    w_in = c.tow * c.toh * c.tic * c.tkw * c.tkh
    w_w = c.tic * c.tkw * c.tkh * c.toc
    w_out = c.tow * c.toh * c.toc
    n_red = cd(layer.ic, c.tic) * cd(layer.kw, c.tkw) * cd(layer.kh, c.tkh)
    n_out = cd(layer.oc, c.toc) * cd(layer.ow, c.tow) * cd(layer.oh, c.toh)
    n = n_red * n_out
    macs = (
        cd(layer.ic, c.tic) * c.tic
        * cd(layer.oc, c.toc) * c.toc
        * cd(layer.ow, c.tow) * c.tow
        * cd(layer.oh, c.toh) * c.toh
        * cd(layer.kw, c.tkw) * c.tkw
        * cd(layer.kh, c.tkh) * c.tkh
    )
    e = (
        k.e_mac * macs
        + k.e_sram * (2 * macs + n_out * w_out)
        + k.e_dram * (n * (w_in + w_w) + n_out * w_out)
    )
    p = k.c_base + k.c_pe * c.pen + k.c_sram * (c.iss + c.wss + c.oss)
    return p + e / latency


def random_feasible_pairs(variant, count, seed):
    """Uniform rejection sampling of feasible (layer, config) pairs."""
    from accel_dse.data import DEFAULT_LAYER_RANGES

    space = im2col_space() if variant == "im2col" else dnnweaver_space()
    rng = np.random.default_rng(seed)
    ranges = [DEFAULT_LAYER_RANGES[f] for f in ("ic", "oc", "ow", "oh", "kw", "kh")]
    out = []
    while len(out) < count:
        layer = ConvLayer(*(int(r[rng.integers(len(r))]) for r in ranges))
        values = [int(v.choices[rng.integers(len(v.choices))]) for v in space.variables]
        config = space.config_from_values(values)
        try:
            design_metrics(variant, layer, config, PowerCoefficients(), space)
        except InfeasibleConfigError:
            continue
        out.append((layer, config, space))
    return out


class TestCheckFeasible:
    def test_minimal_identity_case(self):
        assert check_feasible(UNIT_LAYER, minimal_config()) == []

    def test_output_sram_overflow(self):
        violations = check_feasible(UNIT_LAYER, minimal_config(oss=1))
        assert len(violations) == 1
        assert "OSS" in violations[0]

    def test_table_row_input_sram_overflow(self):
        layer = ConvLayer(64, 32, 64, 64, 5, 5)
        config = Configuration(
            pen=512, sdb=128, dsb=128, iss=4096, wss=2048, oss=4096,
            tic=64, toc=64, tow=16, toh=256, tkw=5, tkh=1,
        )
        violations = check_feasible(layer, config, im2col_space())
        # W_in = 16*256*64*5*1 = 1310720 words, far beyond 4096
        assert any("ISS" in v for v in violations)
        assert tile_words(config)[0] == 1_310_720

    def test_padding_allows_tile_overhang_to_next_choice(self):
        # oc=32 with toc choices (1,4,16,64,256): 64 is allowed, 256 is not
        layer = ConvLayer(64, 32, 64, 64, 1, 1)
        space = im2col_space()
        ok = minimal_config(toc=64, iss=8192, wss=8192, oss=8192, tow=4, toh=4)
        assert not [v for v in check_feasible(layer, ok, space) if "toc" in v]
        bad = minimal_config(toc=256, iss=8192, wss=8192, oss=8192, tow=4, toh=4)
        assert any("toc" in v for v in check_feasible(layer, bad, space))

    def test_padded_dim_rule(self):
        assert padded_dim(32, (1, 4, 16, 64, 256)) == 64
        assert padded_dim(300, (1, 4, 16, 64, 256)) == 300
        assert padded_dim(5, None) == 5


class TestIm2colLatency:
    def test_unit_layer(self):
        # L1 = ceil(4/64) = 1, L2 = 1, L3 = 1, T = 1 + max(1,1,1) + 1 = 3
        assert im2col_latency(UNIT_LAYER, minimal_config()) == 3

    def test_doubling_pen_helps_compute_bound(self):
        layer = ConvLayer(64, 64, 32, 32, 3, 3)
        base = dict(
            sdb=512, dsb=512, iss=8192, wss=8192, oss=8192,
            tic=16, toc=16, tow=4, toh=4, tkw=3, tkh=3,
        )
        lat = [
            im2col_latency(layer, Configuration(pen=p, **base))
            for p in (128, 256, 512)
        ]
        assert lat[0] > lat[1] > lat[2]

    def test_matches_straight_line_oracle(self):
        layer = ConvLayer(32, 32, 32, 32, 1, 1)
        config = Configuration(
            pen=2048, sdb=32, dsb=64, iss=65536, wss=65536, oss=65536,
            tic=32, toc=16, tow=16, toh=32, tkw=1, tkh=1,
        )
        assert check_feasible(layer, config) == []
        assert im2col_latency(layer, config) == oracle_latency(layer, config)


class TestIm2colPower:
    def test_zero_cost_coefficients(self):
        coeffs = PowerCoefficients(
            e_mac=0.0, e_sram=0.0, e_dram=0.0, c_pe=0.0, c_sram=0.0, c_base=1.0
        )
        assert im2col_power(UNIT_LAYER, minimal_config(), 3, coeffs) == 1.0

    def test_energy_scaling_linearity(self):
        layer = ConvLayer(8, 8, 8, 8, 3, 3)
        config = minimal_config(
            pen=4, iss=2048, wss=2048, oss=2048, tic=4, toc=4, tow=4, toh=4,
            tkw=3, tkh=3,
        )
        lat = im2col_latency(layer, config)
        base = PowerCoefficients()
        k = 3.0
        scaled = PowerCoefficients(
            e_mac=base.e_mac * k, e_sram=base.e_sram * k, e_dram=base.e_dram * k,
            c_pe=base.c_pe, c_sram=base.c_sram, c_base=base.c_base,
        )
        p_static = base.c_base + base.c_pe * config.pen + base.c_sram * (
            config.iss + config.wss + config.oss
        )
        p1 = im2col_power(layer, config, lat, base)
        p2 = im2col_power(layer, config, lat, scaled)
        assert p2 - p_static == pytest.approx(k * (p1 - p_static), rel=1e-12)

    def test_unit_layer_defaults(self):
        # E_dyn = 1 + 0.5*3 + 10*3 = 32.5; P = 1 + 0.002 + 0.0012 + 32.5/3
        p = im2col_power(UNIT_LAYER, minimal_config(), 3, PowerCoefficients())
        expected = 1.0 + 0.002 * 1 + 0.0001 * 12 + 32.5 / 3
        assert p == pytest.approx(expected, rel=1e-12)
        assert p == pytest.approx(11.8365, abs=5e-5)

    def test_rejects_zero_latency(self):
        with pytest.raises(ValueError):
            im2col_power(UNIT_LAYER, minimal_config(), 0, PowerCoefficients())


class TestDnnweaverTiling:
    def test_unit_layer_all_ones(self):
        config = Configuration(pen=8, iss=2, wss=2, oss=2)
        full = dnnweaver_derive_tiling(UNIT_LAYER, config)
        assert (full.tic, full.toc, full.tow, full.toh, full.tkw, full.tkh) == (
            1, 1, 1, 1, 1, 1,
        )
        assert full.dsb == 64 and full.sdb == 64

    def test_greedy_fixed_point_replay(self):
        layer = ConvLayer(16, 16, 16, 16, 3, 3)
        config = Configuration(pen=8, iss=128, wss=128, oss=128)
        full = dnnweaver_derive_tiling(layer, config, dnnweaver_space())

        # Independent replay of the doubling rule.
        tiles = dict(tic=1, toc=1, tow=1, toh=1, tkw=1, tkh=1)
        dims = dict(tic=16, toc=16, tow=16, toh=16, tkw=3, tkh=3)

        def fits(t):
            w_in = t["tow"] * t["toh"] * t["tic"] * t["tkw"] * t["tkh"]
            w_w = t["tic"] * t["tkw"] * t["tkh"] * t["toc"]
            w_out = t["tow"] * t["toh"] * t["toc"]
            return 2 * w_in <= 128 and 2 * w_w <= 128 and 2 * w_out <= 128

        changed = True
        while changed:
            changed = False
            for f in ("toc", "toh", "tow", "tic", "tkh", "tkw"):
                nt = min(2 * tiles[f], dims[f])
                if nt > tiles[f]:
                    trial = dict(tiles, **{f: nt})
                    if fits(trial):
                        tiles = trial
                        changed = True
        assert {k: getattr(full, k) for k in tiles} == tiles
        # Frozen expected value from replaying the rule by hand.
        assert tiles == dict(tic=2, toc=8, tow=2, toh=4, tkw=2, tkh=2)

    def test_bigger_srams_never_shrink_tiles(self):
        layer = ConvLayer(16, 16, 16, 16, 3, 3)
        small = dnnweaver_derive_tiling(layer, Configuration(pen=8, iss=128, wss=128, oss=128))
        big = dnnweaver_derive_tiling(layer, Configuration(pen=8, iss=512, wss=512, oss=512))
        for f in ("tic", "toc", "tow", "toh", "tkw", "tkh"):
            assert getattr(big, f) >= getattr(small, f)

    def test_infeasible_when_sram_below_two_words(self):
        with pytest.raises(InfeasibleConfigError):
            dnnweaver_derive_tiling(UNIT_LAYER, Configuration(pen=8, iss=1, wss=2, oss=2))


class TestDesignMetrics:
    def test_both_outputs_positive(self):
        for layer, config, space in random_feasible_pairs("im2col", 20, seed=7):
            m = design_metrics("im2col", layer, config, PowerCoefficients(), space)
            assert m.latency > 0 and m.power > 0

    def test_dnnweaver_pen_ordering(self):
        # More PEs can only help the compute stage.
        layer = ConvLayer(16, 16, 16, 16, 3, 3)
        space = dnnweaver_space()
        coeffs = PowerCoefficients()
        m8 = design_metrics(
            "dnnweaver", layer, Configuration(pen=8, iss=128, wss=128, oss=128),
            coeffs, space,
        )
        m16 = design_metrics(
            "dnnweaver", layer, Configuration(pen=16, iss=128, wss=128, oss=128),
            coeffs, space,
        )
        assert m16.latency <= m8.latency

    def test_determinism(self):
        layer = ConvLayer(64, 32, 16, 16, 3, 3)
        config = minimal_config(
            pen=128, iss=8192, wss=8192, oss=8192, tic=4, toc=4, tow=4, toh=4,
            tkw=3, tkh=3,
        )
        a = design_metrics("im2col", layer, config, PowerCoefficients())
        b = design_metrics("im2col", layer, config, PowerCoefficients())
        assert a == b

    def test_infeasible_raises_with_violations(self):
        with pytest.raises(InfeasibleConfigError) as exc:
            design_metrics("im2col", UNIT_LAYER, minimal_config(oss=1), PowerCoefficients())
        assert exc.value.violations

    def test_static_power_independent_of_layer(self):
        coeffs = PowerCoefficients(e_mac=0.0, e_sram=0.0, e_dram=0.0)
        config = minimal_config(iss=8192, wss=8192, oss=8192)
        layers = [UNIT_LAYER, ConvLayer(4, 4, 4, 4, 1, 1)]
        powers = set()
        for layer in layers:
            lat = im2col_latency(layer, config)
            powers.add(im2col_power(layer, config, lat, coeffs))
        assert len(powers) == 1


class TestOracleEquivalence:
    @pytest.mark.parametrize("variant", ["im2col", "dnnweaver"])
    def test_random_pairs_match_oracle(self, variant):
        coeffs = PowerCoefficients()
        for layer, config, space in random_feasible_pairs(variant, 40, seed=11):
            m = design_metrics(variant, layer, config, coeffs, space)
            full = (
                config
                if variant == "im2col"
                else dnnweaver_derive_tiling(layer, config, space)
            )
            assert m.latency == oracle_latency(layer, full)
            assert m.power == pytest.approx(
                oracle_power(layer, full, m.latency, coeffs), rel=1e-12
            )

    def test_batch_matches_scalar_exactly(self):
        coeffs = PowerCoefficients()
        pairs = random_feasible_pairs("im2col", 60, seed=3)
        layers = np.array([l.as_tuple() for l, _, _ in pairs], dtype=np.int64)
        configs = np.array(
            [c.as_tuple("im2col") for _, c, _ in pairs], dtype=np.int64
        )
        feas, lat, pw = metrics_batch(layers, configs, coeffs, pairs[0][2])
        assert feas.all()
        for i, (layer, config, space) in enumerate(pairs):
            m = design_metrics("im2col", layer, config, coeffs, space)
            assert int(lat[i]) == m.latency
            assert float(pw[i]) == m.power  # bit identical


class TestProperties:
    @settings(max_examples=60, deadline=None)
    @given(
        pen=st.sampled_from((128, 256, 512, 1024, 2048, 4096)),
        dsb=st.sampled_from((16, 32, 64, 128, 256, 512)),
        sdb=st.sampled_from((16, 32, 64, 128, 256, 512)),
    )
    def test_latency_monotone_in_pen_and_bandwidths(self, pen, dsb, sdb):
        layer = ConvLayer(32, 32, 16, 16, 3, 3)
        base = dict(
            iss=8192, wss=8192, oss=8192, tic=16, toc=16, tow=4, toh=4,
            tkw=3, tkh=3,
        )
        lat = im2col_latency(
            layer, Configuration(pen=pen, sdb=sdb, dsb=dsb, **base)
        )
        for bigger in (
            Configuration(pen=pen * 2, sdb=sdb, dsb=dsb, **base),
            Configuration(pen=pen, sdb=sdb * 2, dsb=dsb, **base),
            Configuration(pen=pen, sdb=sdb, dsb=dsb * 2, **base),
        ):
            assert im2col_latency(layer, bigger) <= lat

    @settings(max_examples=60, deadline=None)
    @given(
        ic=st.integers(1, 300), oc=st.integers(1, 300),
        ow=st.integers(1, 130), oh=st.integers(1, 130),
        kw=st.integers(1, 7), kh=st.integers(1, 7),
        tic=st.sampled_from((1, 4, 16, 64)), toc=st.sampled_from((1, 4, 16, 64)),
        tow=st.sampled_from((4, 16, 64)), toh=st.sampled_from((4, 16, 64)),
        tkw=st.integers(1, 5), tkh=st.integers(1, 5),
    )
    def test_tiling_completeness(self, ic, oc, ow, oh, kw, kh, tic, toc, tow, toh, tkw, tkh):
        # Summed per-tile MACs equal the padded layer's MACs exactly.
        layer = ConvLayer(ic, oc, ow, oh, kw, kh)
        config = Configuration(
            pen=1, iss=1, wss=1, oss=1, sdb=1, dsb=1,
            tic=tic, toc=toc, tow=tow, toh=toh, tkw=tkw, tkh=tkh,
        )
        cd = lambda a, b: -(-a // b)
        n_tiles = (
            cd(ic, tic) * cd(oc, toc) * cd(ow, tow) * cd(oh, toh)
            * cd(kw, tkw) * cd(kh, tkh)
        )
        per_tile = tic * toc * tow * toh * tkw * tkh
        assert n_tiles * per_tile == padded_macs(layer, config)


class TestValidation:
    def test_layer_fields_must_be_positive_ints(self):
        with pytest.raises(ValueError):
            ConvLayer(0, 1, 1, 1, 1, 1)
        with pytest.raises(ValueError):
            ConvLayer(1, 1, 1, 1, 1, -2)

    def test_config_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            Configuration(pen=0, iss=1, wss=1, oss=1)

    def test_check_feasible_needs_tiling(self):
        with pytest.raises(ValueError):
            check_feasible(UNIT_LAYER, Configuration(pen=1, iss=4, wss=4, oss=4))
