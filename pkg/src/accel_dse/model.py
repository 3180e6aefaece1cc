"""Analytical latency and power models for tiled CNN accelerator templates.

Two templates are modeled. The ``im2col`` template exposes every knob:
PE count, both DRAM-side bandwidths, three SRAM capacities, and six tile
sizes. The ``dnnweaver`` template (a systolic-array design) exposes only
PE count and SRAM capacities; bandwidths are fixed and tiling is derived
internally by a deterministic greedy rule.

Latency counts cycles of a three-stage tile pipeline (load, compute,
write back) where each tile pays the slowest stage. Power is a static
term (PE array + SRAM capacity) plus dynamic energy amortized over the
runtime. All data is 16-bit words.

Scalar functions operate on exact Python integers and are the reference
semantics. The ``*_batch`` twins evaluate many rows at once with numpy
int64/float64 and reproduce the scalar results bit for bit for in-range
inputs (the default design spaces stay far below int64 limits).
"""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:  # pragma: no cover - import cycle guard, typing only
    from .space import ConfigSpace

WORD_BYTES = 2  # 16-bit fixed point

LAYER_FIELDS = ("ic", "oc", "ow", "oh", "kw", "kh")
IM2COL_CONFIG_FIELDS = (
    "pen", "sdb", "dsb", "iss", "wss", "oss",
    "tic", "toc", "tow", "toh", "tkw", "tkh",
)
DNNWEAVER_CONFIG_FIELDS = ("pen", "iss", "wss", "oss")
TILE_FIELDS = ("tic", "toc", "tow", "toh", "tkw", "tkh")
TILE_TO_LAYER = {
    "tic": "ic", "toc": "oc", "tow": "ow",
    "toh": "oh", "tkw": "kw", "tkh": "kh",
}
VARIANTS = ("im2col", "dnnweaver")

# Fixed bandwidths (bytes/cycle) used when the template does not expose them.
DNNWEAVER_DSB = 64
DNNWEAVER_SDB = 64


def config_fields(variant: str) -> tuple[str, ...]:
    if variant == "im2col":
        return IM2COL_CONFIG_FIELDS
    if variant == "dnnweaver":
        return DNNWEAVER_CONFIG_FIELDS
    raise ValueError(f"unknown variant {variant!r}")


class InfeasibleConfigError(ValueError):
    """Raised when a (layer, configuration) pair violates a hard constraint."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


@dataclass(frozen=True)
class ConvLayer:
    """One convolution layer: channels, output extent, and kernel extent."""

    ic: int
    oc: int
    ow: int
    oh: int
    kw: int
    kh: int

    def __post_init__(self):
        for name in LAYER_FIELDS:
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ValueError(f"{name} must be an integer >= 1, got {v!r}")

    def as_tuple(self) -> tuple[int, ...]:
        return tuple(getattr(self, f) for f in LAYER_FIELDS)


@dataclass(frozen=True)
class Configuration:
    """One design point: architecture parameters plus mapping strategy.

    The dnnweaver template populates only ``pen``, ``iss``, ``wss``,
    ``oss``; the remaining fields stay None until a tiling is derived.
    """

    pen: int
    iss: int
    wss: int
    oss: int
    sdb: int | None = None
    dsb: int | None = None
    tic: int | None = None
    toc: int | None = None
    tow: int | None = None
    toh: int | None = None
    tkw: int | None = None
    tkh: int | None = None

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ValueError(f"{f.name} must be an integer >= 1, got {v!r}")

    def as_tuple(self, variant: str) -> tuple[int, ...]:
        vals = []
        for name in config_fields(variant):
            v = getattr(self, name)
            if v is None:
                raise ValueError(f"{name} not populated for variant {variant!r}")
            vals.append(v)
        return tuple(vals)

    def has_tiling(self) -> bool:
        return all(getattr(self, f) is not None for f in TILE_FIELDS)


@dataclass(frozen=True)
class DesignMetrics:
    latency: int
    power: float

    def __post_init__(self):
        if self.latency < 0 or self.power < 0:
            raise ValueError("metrics must be non-negative")


@dataclass(frozen=True)
class PowerCoefficients:
    """Calibration constants of the power model (arbitrary consistent units).

    Coefficients must be non-negative; the defaults are strictly positive.
    """

    e_mac: float = 1.0      # energy per MAC
    e_sram: float = 0.5     # energy per SRAM word access
    e_dram: float = 10.0    # energy per DRAM word transfer
    c_pe: float = 0.002     # static power per PE
    c_sram: float = 0.0001  # static power per SRAM word of capacity
    c_base: float = 1.0     # constant static power

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ValueError(f"{f.name} must be >= 0")


def _ceildiv(a: int, b: int) -> int:
    return -(-a // b)


def padded_dim(dim: int, choices: Sequence[int] | None) -> int:
    """Smallest choice-list value >= dim, or dim itself when none exists.

    Tiles may overhang a layer dimension up to the next grid value of
    their choice list; the overhang is treated as zero padding.
    """
    if choices:
        for c in choices:
            if c >= dim:
                return c
    return dim


def tile_words(config: Configuration) -> tuple[int, int, int]:
    """Words of one input, weight, and output tile (in that order)."""
    w_in = config.tow * config.toh * config.tic * config.tkw * config.tkh
    w_w = config.tic * config.tkw * config.tkh * config.toc
    w_out = config.tow * config.toh * config.toc
    return w_in, w_w, w_out


def check_feasible(
    layer: ConvLayer,
    config: Configuration,
    space: "ConfigSpace | None" = None,
) -> list[str]:
    """Return the list of violated constraints (empty when feasible).

    A fully tiled configuration is required. Tiles must fit the padded
    layer dimensions, and double-buffered tile storage must fit each
    SRAM: 2*W_in <= iss, 2*W_w <= wss, 2*W_out <= oss.
    """
    if not config.has_tiling():
        raise ValueError("configuration has no tiling; derive it first")
    violations = []
    for tf in TILE_FIELDS:
        t = getattr(config, tf)
        lf = TILE_TO_LAYER[tf]
        dim = getattr(layer, lf)
        choices = space.choices_for(tf) if space is not None else None
        cap = padded_dim(dim, choices)
        if t > cap:
            violations.append(f"{tf}={t} exceeds padded {lf}={cap}")
    w_in, w_w, w_out = tile_words(config)
    if 2 * w_in > config.iss:
        violations.append(f"input tile overflows ISS (2*{w_in} > {config.iss})")
    if 2 * w_w > config.wss:
        violations.append(f"weight tile overflows WSS (2*{w_w} > {config.wss})")
    if 2 * w_out > config.oss:
        violations.append(f"output tile overflows OSS (2*{w_out} > {config.oss})")
    return violations


def _tile_counts(layer: ConvLayer, config: Configuration) -> tuple[int, int, int]:
    n_red = (
        _ceildiv(layer.ic, config.tic)
        * _ceildiv(layer.kw, config.tkw)
        * _ceildiv(layer.kh, config.tkh)
    )
    n_out = (
        _ceildiv(layer.oc, config.toc)
        * _ceildiv(layer.ow, config.tow)
        * _ceildiv(layer.oh, config.toh)
    )
    return n_red, n_out, n_red * n_out


def im2col_latency(layer: ConvLayer, config: Configuration) -> int:
    """End-to-end cycles of the three-stage tile pipeline.

    Per tile: L1 load cycles (input + weight words over the DRAM->SRAM
    bandwidth), L2 compute cycles (tile MACs over the PE count), L3 write
    back cycles (output words over the SRAM->DRAM bandwidth, charged only
    on the tiles that finish a reduction, output-stationary dataflow).
    The pipeline overlaps stages, so each tile costs the slowest stage,
    plus one leading load and one trailing write back.
    """
    if config.dsb is None or config.sdb is None:
        raise ValueError("bandwidths not populated")
    n_red, n_out, n = _tile_counts(layer, config)
    w_in, w_w, w_out = tile_words(config)
    l1 = _ceildiv(WORD_BYTES * (w_in + w_w), config.dsb)
    l2 = _ceildiv(
        config.tow * config.toh * config.toc * config.tic * config.tkw * config.tkh,
        config.pen,
    )
    l3 = _ceildiv(WORD_BYTES * w_out, config.sdb)
    body = n_out * max(l1, l2, l3) + (n - n_out) * max(l1, l2)
    return l1 + body + l3


def padded_macs(layer: ConvLayer, config: Configuration) -> int:
    """MAC count with every dimension zero-padded up to a tile multiple."""
    macs = 1
    for tf in TILE_FIELDS:
        dim = getattr(layer, TILE_TO_LAYER[tf])
        t = getattr(config, tf)
        macs *= _ceildiv(dim, t) * t
    return macs


def im2col_power(
    layer: ConvLayer,
    config: Configuration,
    latency: int,
    coeffs: PowerCoefficients,
) -> float:
    """Average power: static part plus dynamic energy over the runtime.

    Dynamic energy charges every MAC, two SRAM accesses per MAC plus one
    per output write, and DRAM traffic for each tile load and each final
    output write back.
    """
    if latency <= 0:
        raise ValueError("latency must be > 0")
    n_red, n_out, n = _tile_counts(layer, config)
    w_in, w_w, w_out = tile_words(config)
    macs = padded_macs(layer, config)
    out_writes = n_out * w_out
    e_dyn = (
        coeffs.e_mac * macs
        + coeffs.e_sram * (2 * macs + out_writes)
        + coeffs.e_dram * (n * (w_in + w_w) + n_out * w_out)
    )
    p_static = (
        coeffs.c_base
        + coeffs.c_pe * config.pen
        + coeffs.c_sram * (config.iss + config.wss + config.oss)
    )
    return p_static + e_dyn / latency


def dnnweaver_derive_tiling(
    layer: ConvLayer,
    config: Configuration,
    space: "ConfigSpace | None" = None,
    dsb: int = DNNWEAVER_DSB,
    sdb: int = DNNWEAVER_SDB,
) -> Configuration:
    """Fill in bandwidths and tile sizes for a dnnweaver configuration.

    Tiles start at 1 and are doubled greedily in the fixed round-robin
    order toc, toh, tow, tic, tkh, tkw, each doubling capped at the
    padded layer dimension and accepted only if the configuration stays
    feasible. The loop stops when no tile can grow. The result is the
    unique fixed point of this rule, so equal inputs always derive the
    same tiling.
    """
    order = ("toc", "toh", "tow", "tic", "tkh", "tkw")
    tiles = dict.fromkeys(TILE_FIELDS, 1)
    full = replace(config, dsb=dsb, sdb=sdb, **tiles)
    violations = check_feasible(layer, full, space)
    if violations:
        raise InfeasibleConfigError(violations)
    grew = True
    while grew:
        grew = False
        for tf in order:
            dim = getattr(layer, TILE_TO_LAYER[tf])
            choices = space.choices_for(tf) if space is not None else None
            cap = padded_dim(dim, choices)
            t = tiles[tf]
            nt = min(2 * t, cap)
            if nt <= t:
                continue
            candidate = replace(full, **{tf: nt})
            if not check_feasible(layer, candidate, space):
                tiles[tf] = nt
                full = candidate
                grew = True
    return full


def design_metrics(
    variant: str,
    layer: ConvLayer,
    config: Configuration,
    coeffs: PowerCoefficients,
    space: "ConfigSpace | None" = None,
    dnnweaver_dsb: int = DNNWEAVER_DSB,
    dnnweaver_sdb: int = DNNWEAVER_SDB,
) -> DesignMetrics:
    """Latency and power of one (layer, configuration) pair.

    Raises InfeasibleConfigError with the violated constraints when the
    pair is infeasible. Pure: equal inputs give bit-identical outputs.
    """
    if variant == "dnnweaver":
        full = dnnweaver_derive_tiling(
            layer, config, space, dsb=dnnweaver_dsb, sdb=dnnweaver_sdb
        )
    elif variant == "im2col":
        full = config
    else:
        raise ValueError(f"unknown variant {variant!r}")
    violations = check_feasible(layer, full, space)
    if violations:
        raise InfeasibleConfigError(violations)
    latency = im2col_latency(layer, full)
    power = im2col_power(layer, full, latency, coeffs)
    return DesignMetrics(latency, power)


# ---------------------------------------------------------------------------
# Vectorized twins. Rows: layers (B, 6) int64 in LAYER_FIELDS order, configs
# (B, 12) int64 in IM2COL_CONFIG_FIELDS order (or (B, 4) for dnnweaver).
# ---------------------------------------------------------------------------

def _col(arr, i):
    return arr[:, i]


def _padded_dims_batch(dims: np.ndarray, choices: Sequence[int] | None) -> np.ndarray:
    if not choices:
        return dims
    ch = np.asarray(choices, dtype=np.int64)
    idx = np.searchsorted(ch, dims, side="left")
    hit = idx < len(ch)
    out = dims.copy()
    out[hit] = ch[np.minimum(idx, len(ch) - 1)][hit]
    return out


def feasible_batch(
    layers: np.ndarray,
    configs: np.ndarray,
    space: "ConfigSpace | None" = None,
) -> np.ndarray:
    """Vectorized check_feasible over fully tiled im2col-shaped rows."""
    layers = np.atleast_2d(np.asarray(layers, dtype=np.int64))
    configs = np.atleast_2d(np.asarray(configs, dtype=np.int64))
    if layers.shape[0] == 1 and configs.shape[0] > 1:
        layers = np.broadcast_to(layers, (configs.shape[0], 6))
    col = {n: i for i, n in enumerate(IM2COL_CONFIG_FIELDS)}
    lcol = {n: i for i, n in enumerate(LAYER_FIELDS)}
    ok = np.ones(configs.shape[0], dtype=bool)
    for tf in TILE_FIELDS:
        dims = layers[:, lcol[TILE_TO_LAYER[tf]]]
        choices = space.choices_for(tf) if space is not None else None
        cap = _padded_dims_batch(dims, choices)
        ok &= configs[:, col[tf]] <= cap
    tow, toh = configs[:, col["tow"]], configs[:, col["toh"]]
    tic, toc = configs[:, col["tic"]], configs[:, col["toc"]]
    tkw, tkh = configs[:, col["tkw"]], configs[:, col["tkh"]]
    w_in = tow * toh * tic * tkw * tkh
    w_w = tic * tkw * tkh * toc
    w_out = tow * toh * toc
    ok &= 2 * w_in <= configs[:, col["iss"]]
    ok &= 2 * w_w <= configs[:, col["wss"]]
    ok &= 2 * w_out <= configs[:, col["oss"]]
    return ok


def metrics_batch(
    layers: np.ndarray,
    configs: np.ndarray,
    coeffs: PowerCoefficients,
    space: "ConfigSpace | None" = None,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized (feasible, latency, power) over fully tiled rows.

    Latency/power entries of infeasible rows are 0 and must be ignored.
    Expression order mirrors the scalar functions so in-range results
    are bit-identical.
    """
    layers = np.atleast_2d(np.asarray(layers, dtype=np.int64))
    configs = np.atleast_2d(np.asarray(configs, dtype=np.int64))
    if layers.shape[0] == 1 and configs.shape[0] > 1:
        layers = np.broadcast_to(layers, (configs.shape[0], 6))
    feas = feasible_batch(layers, configs, space)

    col = {n: i for i, n in enumerate(IM2COL_CONFIG_FIELDS)}
    lcol = {n: i for i, n in enumerate(LAYER_FIELDS)}
    pen = configs[:, col["pen"]]
    sdb, dsb = configs[:, col["sdb"]], configs[:, col["dsb"]]
    iss, wss, oss = (configs[:, col[f]] for f in ("iss", "wss", "oss"))
    tow, toh = configs[:, col["tow"]], configs[:, col["toh"]]
    tic, toc = configs[:, col["tic"]], configs[:, col["toc"]]
    tkw, tkh = configs[:, col["tkw"]], configs[:, col["tkh"]]

    def cdiv(a, b):
        return -(-a // b)

    n_red = (
        cdiv(layers[:, lcol["ic"]], tic)
        * cdiv(layers[:, lcol["kw"]], tkw)
        * cdiv(layers[:, lcol["kh"]], tkh)
    )
    n_out = (
        cdiv(layers[:, lcol["oc"]], toc)
        * cdiv(layers[:, lcol["ow"]], tow)
        * cdiv(layers[:, lcol["oh"]], toh)
    )
    n = n_red * n_out
    w_in = tow * toh * tic * tkw * tkh
    w_w = tic * tkw * tkh * toc
    w_out = tow * toh * toc
    l1 = cdiv(WORD_BYTES * (w_in + w_w), dsb)
    l2 = cdiv(tow * toh * toc * tic * tkw * tkh, pen)
    l3 = cdiv(WORD_BYTES * w_out, sdb)
    body = n_out * np.maximum(np.maximum(l1, l2), l3) + (n - n_out) * np.maximum(l1, l2)
    latency = l1 + body + l3

    macs = np.ones_like(pen)
    for tf in TILE_FIELDS:
        dim = layers[:, lcol[TILE_TO_LAYER[tf]]]
        t = configs[:, col[tf]]
        macs = macs * (cdiv(dim, t) * t)
    out_writes = n_out * w_out
    e_dyn = (
        coeffs.e_mac * macs
        + coeffs.e_sram * (2 * macs + out_writes)
        + coeffs.e_dram * (n * (w_in + w_w) + n_out * w_out)
    )
    p_static = coeffs.c_base + coeffs.c_pe * pen + coeffs.c_sram * (iss + wss + oss)
    safe_latency = np.where(latency > 0, latency, 1)
    power = p_static + e_dyn / safe_latency

    latency = np.where(feas, latency, 0)
    power = np.where(feas, power, 0.0)
    return feas, latency, power
