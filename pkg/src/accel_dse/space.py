"""Discrete design space: choice lists, one-hot codecs, conditioning inputs.

Configurations are categorical per variable, so they are one-hot encoded
block by block. Conditioning inputs (layer shape and the two objectives)
are real scalars normalized by per-feature standard deviations, followed
by a short uniform noise vector.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, fields
from math import prod
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .model import (
    Configuration,
    ConvLayer,
    DNNWEAVER_CONFIG_FIELDS,
    IM2COL_CONFIG_FIELDS,
    LAYER_FIELDS,
    config_fields,
)

NOISE_LEN = 16
NOISE_HIGH = 0.1

DEFAULT_IM2COL_CHOICES: dict[str, tuple[int, ...]] = {
    "pen": (128, 256, 512, 1024, 2048, 4096),
    "sdb": (16, 32, 64, 128, 256, 512),
    "dsb": (16, 32, 64, 128, 256, 512),
    "iss": (256, 512, 1024, 2048, 4096, 8192),
    "wss": (256, 512, 1024, 2048, 4096, 8192),
    "oss": (256, 512, 1024, 2048, 4096, 8192),
    "tic": (1, 4, 16, 64, 256),
    "toc": (1, 4, 16, 64, 256),
    "tow": (4, 16, 64, 128, 256),
    "toh": (4, 16, 64, 128, 256),
    "tkw": (1, 2, 3, 4, 5),
    "tkh": (1, 2, 3, 4, 5),
}

DEFAULT_DNNWEAVER_CHOICES: dict[str, tuple[int, ...]] = {
    "pen": (8, 16, 32, 64, 128),
    "iss": (128, 256, 512, 1024, 2048, 4096),
    "wss": (128, 256, 512, 1024, 2048, 4096),
    "oss": (128, 256, 512, 1024, 2048, 4096),
}

# Above this many combinations the exact top-k switches from a vectorized
# full scoring pass to lazy best-first enumeration.
_SCORE_ALL_LIMIT = 1_000_000


class SpaceError(ValueError):
    pass


@dataclass(frozen=True)
class Variable:
    name: str
    choices: tuple[int, ...]

    def __post_init__(self):
        if not self.choices:
            raise SpaceError(f"{self.name}: empty choice list")
        if any(c < 1 for c in self.choices):
            raise SpaceError(f"{self.name}: choices must be >= 1")
        if any(b <= a for a, b in zip(self.choices, self.choices[1:])):
            raise SpaceError(f"{self.name}: choices must be strictly increasing")


@dataclass(frozen=True)
class ConfigSpace:
    """Ordered list of design variables with their discrete choice lists."""

    variant: str
    variables: tuple[Variable, ...]

    def __post_init__(self):
        expected = config_fields(self.variant)
        names = tuple(v.name for v in self.variables)
        if names != expected:
            raise SpaceError(
                f"{self.variant} space must define exactly {expected}, got {names}"
            )

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    @property
    def block_lengths(self) -> tuple[int, ...]:
        return tuple(len(v.choices) for v in self.variables)

    @property
    def onehot_width(self) -> int:
        return sum(self.block_lengths)

    def choices_for(self, name: str) -> tuple[int, ...] | None:
        for v in self.variables:
            if v.name == name:
                return v.choices
        return None

    def config_from_values(self, values: Sequence[int]) -> Configuration:
        return Configuration(**dict(zip(self.names, values)))

    def config_from_indices(self, indices: Sequence[int]) -> Configuration:
        values = [v.choices[i] for v, i in zip(self.variables, indices)]
        return self.config_from_values(values)


def im2col_space(overrides: dict[str, Sequence[int]] | None = None) -> ConfigSpace:
    return _make_space("im2col", DEFAULT_IM2COL_CHOICES, overrides)


def dnnweaver_space(overrides: dict[str, Sequence[int]] | None = None) -> ConfigSpace:
    return _make_space("dnnweaver", DEFAULT_DNNWEAVER_CHOICES, overrides)


def make_space(variant: str, overrides: dict[str, Sequence[int]] | None = None) -> ConfigSpace:
    if variant == "im2col":
        return im2col_space(overrides)
    if variant == "dnnweaver":
        return dnnweaver_space(overrides)
    raise SpaceError(f"unknown variant {variant!r}")


def _make_space(variant, defaults, overrides):
    choices = dict(defaults)
    for name, vals in (overrides or {}).items():
        if name not in choices:
            raise SpaceError(f"{name} is not a {variant} variable")
        choices[name] = tuple(int(v) for v in vals)
    variables = tuple(Variable(n, tuple(choices[n])) for n in config_fields(variant))
    return ConfigSpace(variant, variables)


@dataclass(frozen=True)
class NormStats:
    """Per-feature population standard deviations of a training set."""

    ic: float
    oc: float
    ow: float
    oh: float
    kw: float
    kh: float
    latency: float
    power: float

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise SpaceError(f"std of {f.name} must be > 0")

    def layer_stds(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in LAYER_FIELDS], dtype=float)


NORM_FEATURES = tuple(f.name for f in fields(NormStats))


def encode_onehot(config: Configuration, space: ConfigSpace) -> np.ndarray:
    """Concatenated per-variable one-hot blocks in space order."""
    out = np.zeros(space.onehot_width, dtype=float)
    off = 0
    for var in space.variables:
        value = getattr(config, var.name)
        try:
            idx = var.choices.index(value)
        except ValueError:
            raise SpaceError(
                f"{var.name}={value} is not in its choice list {var.choices}"
            ) from None
        out[off + idx] = 1.0
        off += len(var.choices)
    return out


def decode_onehot(
    probs: np.ndarray, space: ConfigSpace, threshold: float
) -> list[list[tuple[int, float]]]:
    """Per variable, the (choice, probability) pairs strictly above threshold.

    An empty block falls back to its argmax choice (lowest index on ties)
    so decoding always yields at least one choice per variable.
    """
    probs = np.asarray(probs, dtype=float).reshape(-1)
    if probs.shape[0] != space.onehot_width:
        raise SpaceError(
            f"probability vector has length {probs.shape[0]}, "
            f"expected {space.onehot_width}"
        )
    out = []
    off = 0
    for var in space.variables:
        block = probs[off : off + len(var.choices)]
        kept = [
            (var.choices[i], float(p)) for i, p in enumerate(block) if p > threshold
        ]
        if not kept:
            i = int(np.argmax(block))
            kept = [(var.choices[i], float(block[i]))]
        out.append(kept)
        off += len(var.choices)
    return out


def argmax_config(probs: np.ndarray, space: ConfigSpace) -> Configuration:
    """Most probable configuration (per-block argmax, lowest index on ties)."""
    probs = np.asarray(probs, dtype=float).reshape(-1)
    if probs.shape[0] != space.onehot_width:
        raise SpaceError("probability vector length mismatch")
    indices = []
    off = 0
    for var in space.variables:
        block = probs[off : off + len(var.choices)]
        indices.append(int(np.argmax(block)))
        off += len(var.choices)
    return space.config_from_indices(indices)


def candidate_product(
    choices: Sequence[Sequence[tuple[int, float]]],
    space: ConfigSpace,
    cap: int,
) -> list[Configuration]:
    """Cartesian product of the per-variable choices, capped at ``cap``.

    Below the cap the full product is returned in index order. Above it,
    the cap highest-probability combinations are returned (score is the
    product of member probabilities, ties broken lexicographically by
    choice indices). Deterministic either way.
    """
    if len(choices) != len(space.variables):
        raise SpaceError("choices do not match the space's variables")
    if any(len(c) == 0 for c in choices):
        raise SpaceError("every variable needs at least one choice")
    sizes = [len(c) for c in choices]
    total = prod(sizes)
    if total <= cap:
        combos = itertools.product(*[range(s) for s in sizes])
        return [
            space.config_from_values([choices[v][i][0] for v, i in enumerate(combo)])
            for combo in combos
        ]
    if total <= _SCORE_ALL_LIMIT:
        picked = _top_k_dense(choices, sizes, total, cap)
    else:
        picked = _top_k_lazy(choices, sizes, cap)
    return [
        space.config_from_values([choices[v][i][0] for v, i in enumerate(combo)])
        for combo in picked
    ]


def _top_k_dense(choices, sizes, total, cap):
    # Score all combinations in mixed-radix order; a stable argsort on the
    # negated scores breaks ties by combination ordinal, which equals the
    # lexicographic order of the index tuples.
    score = np.ones(total)
    stride = total
    for v, size in enumerate(sizes):
        stride //= size
        digit = (np.arange(total) // stride) % size
        score *= np.array([p for _, p in choices[v]])[digit]
    order = np.argsort(-score, kind="stable")[:cap]
    out = []
    for ordinal in order:
        combo = []
        rem = int(ordinal)
        for size in reversed(sizes):
            combo.append(rem % size)
            rem //= size
        out.append(tuple(reversed(combo)))
    return out


def _top_k_lazy(choices, sizes, cap):
    # Best-first enumeration over per-variable descending probability order.
    by_prob = [
        sorted(range(s), key=lambda i, v=v: (-choices[v][i][1], i))
        for v, s in enumerate(sizes)
    ]

    def to_indices(pos):
        return tuple(by_prob[v][p] for v, p in enumerate(pos))

    def score(idx):
        s = 1.0
        for v, i in enumerate(idx):
            s *= choices[v][i][1]
        return s

    start = (0,) * len(sizes)
    idx0 = to_indices(start)
    heap = [(-score(idx0), idx0, start)]
    seen = {start}
    out = []
    while heap and len(out) < cap:
        _, idx, pos = heapq.heappop(heap)
        out.append(idx)
        for v in range(len(sizes)):
            if pos[v] + 1 < sizes[v]:
                child = pos[:v] + (pos[v] + 1,) + pos[v + 1 :]
                if child not in seen:
                    seen.add(child)
                    cidx = to_indices(child)
                    heapq.heappush(heap, (-score(cidx), cidx, child))
    return out


def conditioning_base(
    layer: ConvLayer, lo_norm: float, po_norm: float, stats: NormStats
) -> np.ndarray:
    """The 8 deterministic conditioning entries, already in normalized units."""
    vals = [getattr(layer, n) / getattr(stats, n) for n in LAYER_FIELDS]
    return np.array(vals + [lo_norm, po_norm], dtype=float)


def encode_conditioning(
    layer: ConvLayer,
    lo: float,
    po: float,
    stats: NormStats | None,
    rng: np.random.Generator,
    noise_len: int = NOISE_LEN,
) -> np.ndarray:
    """Normalized [layer dims, LO, PO] followed by noise_len U[0, 0.1) draws.

    ``lo`` and ``po`` are raw-unit objectives; they are divided by the
    latency / power standard deviations like every other entry.
    """
    if stats is None:
        raise SpaceError("normalization stats are required")
    base = conditioning_base(layer, lo / stats.latency, po / stats.power, stats)
    if noise_len == 0:
        return base
    noise = rng.uniform(0.0, NOISE_HIGH, noise_len)
    return np.concatenate([base, noise])


# ---------------------------------------------------------------------------
# Plain-text serialization (key = value lines).
# ---------------------------------------------------------------------------

def save_space(space: ConfigSpace, path: str | Path) -> None:
    lines = [f"variant = {space.variant}"]
    for var in space.variables:
        lines.append(f"{var.name} = {','.join(str(c) for c in var.choices)}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_space(path: str | Path) -> ConfigSpace:
    entries = parse_kv_lines(Path(path).read_text(), path)
    if "variant" not in entries:
        raise SpaceError(f"{path}: missing variant")
    variant = entries.pop("variant")
    overrides = {
        name: tuple(int(x) for x in val.split(","))
        for name, val in entries.items()
    }
    return make_space(variant, overrides)


def save_norm_stats(stats: NormStats, path: str | Path, extra: dict | None = None) -> None:
    lines = [f"{k} = {v}" for k, v in (extra or {}).items()]
    for name in NORM_FEATURES:
        lines.append(f"std.{name} = {getattr(stats, name):.17g}")
    Path(path).write_text("\n".join(lines) + "\n")


def load_norm_stats(path: str | Path) -> tuple[NormStats, dict[str, str]]:
    entries = parse_kv_lines(Path(path).read_text(), path)
    vals = {}
    extra = {}
    for key, val in entries.items():
        if key.startswith("std."):
            vals[key[4:]] = float(val)
        else:
            extra[key] = val
    missing = [n for n in NORM_FEATURES if n not in vals]
    if missing:
        raise SpaceError(f"{path}: missing std entries for {missing}")
    return NormStats(**{n: vals[n] for n in NORM_FEATURES}), extra


def parse_kv_lines(text: str, source: str | Path = "<text>") -> dict[str, str]:
    """Parse ``key = value`` lines; '#' starts a comment, blanks are skipped."""
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SpaceError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if not key:
            raise SpaceError(f"{source}:{lineno}: empty key")
        entries[key] = val
    return entries
