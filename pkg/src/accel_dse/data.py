"""Dataset generation, normalization, persistence, and splitting.

Rows are (layer, configuration, latency, power) with latency and power
normalized by the training-set standard deviation. Sampling is uniform
over the layer-range x configuration product with rejection of
infeasible and duplicate draws, then sorted so the artifact never
depends on draw order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from math import prod
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .model import (
    Configuration,
    ConvLayer,
    InfeasibleConfigError,
    LAYER_FIELDS,
    PowerCoefficients,
    config_fields,
    design_metrics,
)
from .space import ConfigSpace, NORM_FEATURES, NormStats, parse_kv_lines

DEFAULT_LAYER_RANGES: dict[str, tuple[int, ...]] = {
    "ic": (16, 32, 64, 128, 256),
    "oc": (16, 32, 64, 128, 256),
    "ow": (8, 16, 32, 64, 128),
    "oh": (8, 16, 32, 64, 128),
    "kw": (1, 3, 5, 7),
    "kh": (1, 3, 5, 7),
}

# Spaces at most this large are enumerated exhaustively, which lets the
# generator report the exact feasible count when it cannot reach n.
_ENUM_LIMIT = 50_000


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Sample:
    """One dataset row. Raw metrics ride along but do not affect equality."""

    layer: ConvLayer
    config: Configuration
    latency_norm: float
    power_norm: float
    raw_latency: float = field(compare=False, default=0.0)
    raw_power: float = field(compare=False, default=0.0)


@dataclass(frozen=True)
class Dataset:
    samples: tuple[Sample, ...]
    variant: str
    stats: NormStats
    seed: int

    def __len__(self) -> int:
        return len(self.samples)


def _point_key(variant: str, layer: ConvLayer, config: Configuration):
    return layer.as_tuple() + config.as_tuple(variant)


def compute_norm_stats(rows: Sequence[tuple[ConvLayer, float, float]]) -> NormStats:
    """Population standard deviation of each feature over the given rows.

    Features are the six layer dimensions plus raw latency and power.
    A constant feature is an error: it cannot be normalized away.
    """
    if len(rows) < 2:
        raise DatasetError("need at least 2 rows to compute stats")
    cols = {n: [] for n in NORM_FEATURES}
    for layer, lat, pw in rows:
        for n in LAYER_FIELDS:
            cols[n].append(getattr(layer, n))
        cols["latency"].append(lat)
        cols["power"].append(pw)
    stds = {}
    for name, vals in cols.items():
        std = float(np.std(np.asarray(vals, dtype=float)))
        if std == 0.0:
            raise DatasetError(f"feature {name} is constant; cannot normalize")
        stds[name] = std
    return NormStats(**stds)


def _sample_points(
    space: ConfigSpace,
    layer_ranges: dict[str, tuple[int, ...]],
    n: int,
    rng: np.random.Generator,
    coeffs: PowerCoefficients,
) -> list[tuple[ConvLayer, Configuration]]:
    names = space.names
    range_lists = [tuple(layer_ranges[f]) for f in LAYER_FIELDS]
    choice_lists = [v.choices for v in space.variables]
    total = prod(len(r) for r in range_lists) * prod(len(c) for c in choice_lists)

    def feasible(layer, config):
        try:
            design_metrics(space.variant, layer, config, coeffs, space)
        except InfeasibleConfigError:
            return False
        return True

    if total <= _ENUM_LIMIT:
        points = []
        import itertools

        for combo in itertools.product(*range_lists, *choice_lists):
            layer = ConvLayer(*combo[:6])
            config = space.config_from_values(combo[6:])
            if feasible(layer, config):
                points.append((layer, config))
        if len(points) < n:
            raise DatasetError(
                f"requested {n} samples but only {len(points)} feasible points exist"
            )
        picked = rng.choice(len(points), size=n, replace=False)
        return [points[int(i)] for i in picked]

    seen = set()
    out = []
    attempts = 0
    budget = max(10_000, 100 * n)
    while len(out) < n:
        if attempts >= budget:
            raise DatasetError(
                f"requested {n} samples but found only {len(out)} feasible "
                f"points in {attempts} draws"
            )
        attempts += 1
        lvals = [r[rng.integers(len(r))] for r in range_lists]
        cvals = [c[rng.integers(len(c))] for c in choice_lists]
        layer = ConvLayer(*(int(v) for v in lvals))
        config = space.config_from_values([int(v) for v in cvals])
        key = _point_key(space.variant, layer, config)
        if key in seen:
            continue
        if not feasible(layer, config):
            continue
        seen.add(key)
        out.append((layer, config))
    return out


def generate_dataset(
    space: ConfigSpace,
    layer_ranges: dict[str, tuple[int, ...]] | None,
    n: int,
    seed: int,
    coeffs: PowerCoefficients | None = None,
) -> Dataset:
    """Draw n distinct feasible samples and normalize their metrics.

    Deterministic for a fixed seed: draws are made from a seeded
    generator and the result is sorted on (layer, config) so evaluation
    order can never change the artifact. With n == 1 no spread exists,
    so the stats fall back to 1.0 and the row keeps its raw metrics.
    """
    if n < 1:
        raise DatasetError("n must be >= 1")
    layer_ranges = dict(layer_ranges or DEFAULT_LAYER_RANGES)
    coeffs = coeffs or PowerCoefficients()
    rng = np.random.default_rng(seed)
    points = _sample_points(space, layer_ranges, n, rng, coeffs)
    points.sort(key=lambda p: _point_key(space.variant, *p))
    rows = []
    for layer, config in points:
        m = design_metrics(space.variant, layer, config, coeffs, space)
        rows.append((layer, config, float(m.latency), float(m.power)))
    if n == 1:
        stats = NormStats(**{f: 1.0 for f in NORM_FEATURES})
    else:
        stats = compute_norm_stats([(l, lat, pw) for l, _, lat, pw in rows])
    samples = tuple(
        Sample(
            layer=layer,
            config=config,
            latency_norm=lat / stats.latency,
            power_norm=pw / stats.power,
            raw_latency=lat,
            raw_power=pw,
        )
        for layer, config, lat, pw in rows
    )
    return Dataset(samples=samples, variant=space.variant, stats=stats, seed=seed)


def split(dataset: Dataset, n_test: int, seed: int) -> tuple[Dataset, Dataset]:
    """Disjoint train/test partition with stats recomputed on train only.

    The test rows are drawn uniformly by the seed; both parts keep the
    original dataset order internally and are renormalized by the
    training-split statistics (so the test side leaks nothing into them).
    """
    n = len(dataset)
    if n_test >= n:
        raise DatasetError(f"n_test={n_test} must be smaller than the dataset ({n})")
    rng = np.random.default_rng(seed)
    test_idx = set(int(i) for i in rng.choice(n, size=n_test, replace=False))
    train_rows = [s for i, s in enumerate(dataset.samples) if i not in test_idx]
    test_rows = [s for i, s in enumerate(dataset.samples) if i in test_idx]
    stats = compute_norm_stats(
        [(s.layer, s.raw_latency, s.raw_power) for s in train_rows]
    )

    def renorm(rows):
        return tuple(
            Sample(
                layer=s.layer,
                config=s.config,
                latency_norm=s.raw_latency / stats.latency,
                power_norm=s.raw_power / stats.power,
                raw_latency=s.raw_latency,
                raw_power=s.raw_power,
            )
            for s in rows
        )

    train = Dataset(renorm(train_rows), dataset.variant, stats, dataset.seed)
    test = Dataset(renorm(test_rows), dataset.variant, stats, dataset.seed)
    return train, test


# ---------------------------------------------------------------------------
# CSV persistence. Column layout is the layer dimensions, the variant's
# configuration fields, then normalized latency and power.
# ---------------------------------------------------------------------------

def csv_header(variant: str) -> list[str]:
    return [f.upper() for f in LAYER_FIELDS + config_fields(variant)] + ["L", "P"]


def stats_sidecar_path(path: str | Path) -> Path:
    return Path(str(path) + ".stats")


def write_csv(dataset: Dataset, path: str | Path) -> None:
    """Write the dataset plus a ``<path>.stats`` sidecar with its stats."""
    path = Path(path)
    cfields = config_fields(dataset.variant)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(csv_header(dataset.variant))
        for s in dataset.samples:
            row = [getattr(s.layer, f) for f in LAYER_FIELDS]
            row += [getattr(s.config, f) for f in cfields]
            row += [f"{s.latency_norm:.17g}", f"{s.power_norm:.17g}"]
            writer.writerow(row)
    from .space import save_norm_stats

    save_norm_stats(
        dataset.stats,
        stats_sidecar_path(path),
        extra={"variant": dataset.variant, "seed": dataset.seed},
    )


def read_csv(path: str | Path, space: ConfigSpace) -> Dataset:
    """Read a dataset written by write_csv (sidecar included).

    Raw metrics are recovered as norm * std. Every row is validated
    against the space's choice lists; violations report the row number.
    """
    from .space import load_norm_stats

    path = Path(path)
    stats, extra = load_norm_stats(stats_sidecar_path(path))
    variant = extra.get("variant", space.variant)
    if variant != space.variant:
        raise DatasetError(
            f"{path}: dataset variant {variant!r} does not match space "
            f"variant {space.variant!r}"
        )
    seed = int(extra.get("seed", 0))
    expected = csv_header(variant)
    cfields = config_fields(variant)
    samples = []
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != expected:
            unknown = [h for h in (header or []) if h not in expected]
            if unknown:
                raise DatasetError(f"{path}: unknown column(s) {unknown}")
            raise DatasetError(f"{path}: header {header} != expected {expected}")
        for rowno, row in enumerate(reader, start=2):
            if len(row) != len(expected):
                raise DatasetError(f"{path}:{rowno}: expected {len(expected)} cells")
            try:
                ints = [int(x) for x in row[: len(expected) - 2]]
                lat = float(row[-2])
                pw = float(row[-1])
            except ValueError as exc:
                raise DatasetError(f"{path}:{rowno}: non-numeric cell ({exc})") from None
            layer = ConvLayer(*ints[:6])
            values = ints[6:]
            for name, value in zip(cfields, values):
                if value not in space.choices_for(name):
                    raise DatasetError(
                        f"{path}:{rowno}: {name}={value} is not in its choice list"
                    )
            config = space.config_from_values(values)
            samples.append(
                Sample(
                    layer=layer,
                    config=config,
                    latency_norm=lat,
                    power_norm=pw,
                    raw_latency=lat * stats.latency,
                    raw_power=pw * stats.power,
                )
            )
    return Dataset(tuple(samples), variant, stats, seed)
