"""Adversarial training of the design generator, and the exploration path.

The generator G maps (layer, objectives, noise) to per-variable choice
probabilities. The discriminator D predicts whether a generated
configuration satisfies the objectives for that layer. Per sample, the
analytical design model grades G's argmax configuration: satisfied
generations incur no imitation loss and label D's target "true";
unsatisfied ones are pulled toward the dataset configuration and label
"false". D's belief also feeds back into G through a critic term
weighted by ``w_critic``. Exploration thresholds G's output
probabilities, expands the candidate product, and scans it with a
priority-ordered selection rule.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .data import Dataset
from .model import (
    Configuration,
    ConvLayer,
    DNNWEAVER_CONFIG_FIELDS,
    DNNWEAVER_DSB,
    DNNWEAVER_SDB,
    IM2COL_CONFIG_FIELDS,
    InfeasibleConfigError,
    PowerCoefficients,
    TILE_FIELDS,
    design_metrics,
    dnnweaver_derive_tiling,
    metrics_batch,
)
from .nn import (
    AdamState,
    Mlp,
    adam_step,
    backward,
    clip_gradients,
    cross_entropy,
    forward,
    softmax_backward,
)
from .space import (
    ConfigSpace,
    NormStats,
    argmax_config,
    candidate_product,
    conditioning_base,
    decode_onehot,
    encode_onehot,
)

COND_LEN = 8  # six layer dimensions + latency objective + power objective
DEFAULT_CAP = 100_000

# Satisfaction one-hot convention for D's 2-way head.
SAT_TRUE = np.array([1.0, 0.0])
SAT_FALSE = np.array([0.0, 1.0])


class GanError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 256
    w_critic: float = 0.5
    lr_g: float = 1e-3
    lr_d: float = 1e-3
    threshold: float = 0.2
    seed: int = 0
    noise_len: int = 16
    clip_norm: float = 5.0

    def __post_init__(self):
        if self.batch_size < 1:
            raise GanError("batch_size must be >= 1")
        if not 0.0 < self.threshold < 1.0:
            raise GanError("threshold must be in (0, 1)")
        if self.w_critic < 0:
            raise GanError("w_critic must be >= 0")


@dataclass(frozen=True)
class LossRecord:
    epoch: int
    loss_config: float
    loss_critic: float
    loss_dis: float


@dataclass(frozen=True)
class DseTask:
    """One exploration job: a layer plus latency/power upper bounds.

    Objectives are in the dataset's normalized units (raw metric divided
    by the training-set standard deviation).
    """

    layer: ConvLayer
    lo: float
    po: float

    def __post_init__(self):
        if self.lo <= 0 or self.po <= 0:
            raise GanError("objectives must be > 0")


@dataclass(frozen=True)
class SelectionResult:
    config_opt: Configuration
    l_opt: float
    p_opt: float
    satisfied: bool
    candidates_examined: int
    dse_seconds: float = field(compare=False, default=0.0)


@dataclass(frozen=True)
class NormalizedModel:
    """Design model whose outputs are pre-divided by the dataset stds."""

    variant: str
    coeffs: PowerCoefficients
    stats: NormStats
    space: ConfigSpace
    dnnweaver_dsb: int = DNNWEAVER_DSB
    dnnweaver_sdb: int = DNNWEAVER_SDB

    def metrics(self, layer: ConvLayer, config: Configuration) -> tuple[float, float]:
        m = design_metrics(
            self.variant, layer, config, self.coeffs, self.space,
            dnnweaver_dsb=self.dnnweaver_dsb, dnnweaver_sdb=self.dnnweaver_sdb,
        )
        return m.latency / self.stats.latency, m.power / self.stats.power

    def feasible(self, layer: ConvLayer, config: Configuration) -> bool:
        try:
            self.metrics(layer, config)
        except InfeasibleConfigError:
            return False
        return True

    def _expand_rows(
        self, layers: np.ndarray, configs: Sequence[Configuration]
    ) -> np.ndarray:
        """Rows in full im2col field order; derives dnnweaver tilings."""
        if self.variant == "im2col":
            return np.array(
                [c.as_tuple("im2col") for c in configs], dtype=np.int64
            )
        layers = np.atleast_2d(np.asarray(layers, dtype=np.int64))
        rows = np.empty((len(configs), len(IM2COL_CONFIG_FIELDS)), dtype=np.int64)
        cache: dict[tuple, tuple] = {}
        for i, c in enumerate(configs):
            lkey = tuple(int(x) for x in (layers[i] if layers.shape[0] > 1 else layers[0]))
            key = (lkey, c.pen, c.iss, c.wss, c.oss)
            row = cache.get(key)
            if row is None:
                full = dnnweaver_derive_tiling(
                    ConvLayer(*lkey), c, self.space,
                    dsb=self.dnnweaver_dsb, sdb=self.dnnweaver_sdb,
                )
                row = full.as_tuple("im2col")
                cache[key] = row
            rows[i] = row
        return rows

    def metrics_rows(
        self, layers: np.ndarray, configs: Sequence[Configuration]
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(feasible, latency_norm, power_norm) arrays for many configs.

        ``layers`` is a single 6-tuple row or one row per config.
        Infeasible rows report 0 metrics and must be masked out.
        """
        if not configs:
            return (np.zeros(0, bool), np.zeros(0), np.zeros(0))
        if self.variant == "dnnweaver":
            # All-ones tilings must fit; larger SRAMs only relax that.
            feas_pre = np.array(
                [min(c.iss, c.wss, c.oss) >= 2 for c in configs], dtype=bool
            )
            if not feas_pre.all():
                feas = np.zeros(len(configs), bool)
                lat = np.zeros(len(configs))
                pw = np.zeros(len(configs))
                idx = np.flatnonzero(feas_pre)
                if idx.size:
                    layers2 = np.atleast_2d(np.asarray(layers, dtype=np.int64))
                    sub_layers = layers2 if layers2.shape[0] == 1 else layers2[idx]
                    f, l, p = self.metrics_rows(
                        sub_layers, [configs[int(i)] for i in idx]
                    )
                    feas[idx], lat[idx], pw[idx] = f, l, p
                return feas, lat, pw
        rows = self._expand_rows(np.asarray(layers), configs)
        feas, lat, pw = metrics_batch(
            np.asarray(layers, dtype=np.int64), rows, self.coeffs, self.space
        )
        return feas, lat / self.stats.latency, pw / self.stats.power


def training_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """The (shuffle, noise) random streams used by every training loop."""
    s1, s2 = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(s1), np.random.default_rng(s2)


def _dataset_arrays(train_set: Dataset, space: ConfigSpace, stats: NormStats):
    n = len(train_set)
    layers = np.array([s.layer.as_tuple() for s in train_set.samples], dtype=np.int64)
    targets = np.array(
        [encode_onehot(s.config, space) for s in train_set.samples]
    )
    lo = np.array([s.latency_norm for s in train_set.samples])
    po = np.array([s.power_norm for s in train_set.samples])
    cond = np.array(
        [
            conditioning_base(s.layer, s.latency_norm, s.power_norm, stats)
            for s in train_set.samples
        ]
    )
    return n, layers, targets, lo, po, cond


def _argmax_rows(probs: np.ndarray, space: ConfigSpace) -> np.ndarray:
    """Per-sample argmax choice values, one column per variable."""
    rows = np.empty((probs.shape[0], len(space.variables)), dtype=np.int64)
    off = 0
    for j, var in enumerate(space.variables):
        block = probs[:, off : off + len(var.choices)]
        idx = np.argmax(block, axis=1)
        rows[:, j] = np.asarray(var.choices, dtype=np.int64)[idx]
        off += len(var.choices)
    return rows


def _grouped_ce(probs: np.ndarray, targets: np.ndarray, blocks) -> np.ndarray:
    """Per-sample cross entropy, mean over blocks, with the 1e-12 floor."""
    losses = np.zeros(probs.shape[0])
    off = 0
    for size in blocks:
        p_t = (probs[:, off : off + size] * targets[:, off : off + size]).sum(axis=1)
        losses += -np.log(np.maximum(p_t, 1e-12))
        off += size
    return losses / len(blocks)


def train_gan(
    train_set: Dataset,
    g: Mlp,
    d: Mlp,
    model: NormalizedModel,
    cfg: TrainConfig,
    batch_hook: Callable[[int, int, np.ndarray], None] | None = None,
) -> tuple[Mlp, Mlp, list[LossRecord]]:
    """Alternating G/D training over the normalized dataset.

    Per sample: G generates choice probabilities from the conditioning
    vector; the argmax configuration is graded by the design model
    against the sample's own objectives (an infeasible decode counts as
    unsatisfied, never an error). The critic loss (D called on G's
    output, target "true") accumulates for every sample. Satisfied
    samples contribute no imitation loss and set D's target "true";
    unsatisfied ones add cross entropy against the dataset configuration
    and set D's target "false". After each batch G steps on
    loss_config + w_critic * loss_critic and D steps on loss_dis.

    ``batch_hook(epoch, batch_index, satisfied_flags)`` is called per
    batch when given (used by instrumentation tests).
    """
    space, stats = model.space, model.stats
    if g.head_blocks != space.block_lengths:
        raise GanError("generator head does not match the space's blocks")
    if d.head_blocks != (2,):
        raise GanError("discriminator head must be a single 2-way block")
    if train_set.variant != space.variant:
        raise GanError("dataset variant does not match the space")
    n, layers, targets, lo, po, cond = _dataset_arrays(train_set, space, stats)
    n_blocks = len(space.variables)
    bs = cfg.batch_size

    shuffle_rng, noise_rng = training_streams(cfg.seed)
    st_g, st_d = AdamState.for_mlp(g), AdamState.for_mlp(d)
    history: list[LossRecord] = []

    for epoch in range(cfg.epochs):
        perm = shuffle_rng.permutation(n)
        sums = np.zeros(3)
        n_batches = 0
        for start in range(0, n, bs):
            batch = perm[start : start + bs]
            b = len(batch)
            noise = noise_rng.uniform(0.0, 0.1, (b, cfg.noise_len))
            xg = np.hstack([cond[batch], noise])
            probs_g, cache_g = forward(g, xg)

            cand_rows = _argmax_rows(probs_g, space)
            if space.variant == "dnnweaver":
                cands = [
                    space.config_from_values([int(x) for x in r]) for r in cand_rows
                ]
                feas, lat, pw = model.metrics_rows(layers[batch], cands)
            else:
                feas, lat, pw = metrics_batch(
                    layers[batch], cand_rows, model.coeffs, space
                )
                lat = lat / stats.latency
                pw = pw / stats.power
            sat = feas & (lat <= lo[batch]) & (pw <= po[batch])

            xd = np.hstack([cond[batch], probs_g])
            sat_p, cache_d = forward(d, xd)

            t_true = np.tile(SAT_TRUE, (b, 1))
            t_dis = np.where(sat[:, None], SAT_TRUE, SAT_FALSE)
            ce_true = _grouped_ce(sat_p, t_true, (2,))
            ce_dis = _grouped_ce(sat_p, t_dis, (2,))
            ce_cfg = _grouped_ce(probs_g, targets[batch], space.block_lengths)

            loss_critic = float(ce_true.sum()) / bs
            loss_config = float(ce_cfg[~sat].sum()) / bs
            loss_dis = float(ce_dis.sum()) / bs
            sums += (loss_config, loss_critic, loss_dis)
            n_batches += 1
            if batch_hook is not None:
                batch_hook(epoch, n_batches - 1, sat.copy())

            # G step: imitation term on unsatisfied rows plus the critic
            # term routed back through D to G's probabilities.
            dlogits_g = np.zeros_like(probs_g)
            unsat = ~sat
            if unsat.any():
                dlogits_g[unsat] = (
                    (probs_g[unsat] - targets[batch][unsat]) / n_blocks / bs
                )
            if cfg.w_critic != 0.0:
                d_sat_logits = (sat_p - t_true) / bs  # single block head
                _, dxd = backward(d, cache_d, d_sat_logits)
                dprobs = cfg.w_critic * dxd[:, COND_LEN:]
                dlogits_g += softmax_backward(probs_g, dprobs, space.block_lengths)
            grads_g, _ = backward(g, cache_g, dlogits_g)
            adam_step(g, clip_gradients(grads_g, cfg.clip_norm), st_g, cfg.lr_g)

            # D step, from the same forward pass.
            d_dis_logits = (sat_p - t_dis) / bs
            grads_d, _ = backward(d, cache_d, d_dis_logits)
            adam_step(d, clip_gradients(grads_d, cfg.clip_norm), st_d, cfg.lr_d)

        means = sums / max(n_batches, 1)
        history.append(LossRecord(epoch, means[0], means[1], means[2]))
    return g, d, history


def _min_tile_config(config: Configuration, space: ConfigSpace) -> Configuration:
    """The same architecture with every tile variable at its smallest choice."""
    values = []
    for var in space.variables:
        if var.name in TILE_FIELDS:
            values.append(var.choices[0])
        else:
            values.append(getattr(config, var.name))
    return space.config_from_values(values)


def generate_candidates(
    g: Mlp,
    task: DseTask,
    model: NormalizedModel,
    threshold: float,
    seed: int,
    cap: int = DEFAULT_CAP,
    noise_len: int = 16,
) -> list[Configuration]:
    """Threshold G's output and expand the feasible candidate product.

    Always returns at least one feasible candidate: if filtering empties
    the product, the argmax configuration is used, shrunk to minimum
    tiles when needed (minimum tiles fit any layer in the default
    spaces).
    """
    space, stats = model.space, model.stats
    rng = np.random.default_rng(seed)
    base = conditioning_base(task.layer, task.lo, task.po, stats)
    x = np.concatenate([base, rng.uniform(0.0, 0.1, noise_len)])
    probs, _ = forward(g, x)
    per_var = decode_onehot(probs, space, threshold)
    cands = candidate_product(per_var, space, cap)
    layer_row = np.array([task.layer.as_tuple()], dtype=np.int64)
    feas, _, _ = model.metrics_rows(layer_row, cands)
    kept = [c for c, ok in zip(cands, feas) if ok]
    if kept:
        return kept
    fallback = argmax_config(probs, space)
    if model.feasible(task.layer, fallback):
        return [fallback]
    fallback = _min_tile_config(fallback, space)
    if model.feasible(task.layer, fallback):
        return [fallback]
    raise GanError("no feasible candidate exists for this layer in the space")


def select_design(
    candidates: Sequence[Configuration],
    task: DseTask,
    model: NormalizedModel,
) -> SelectionResult:
    """Scan candidates in order, keeping a running optimum.

    The first candidate always replaces the (0, 0) sentinel. Afterwards,
    when the optimum either violates both objectives or satisfies both,
    a candidate must strictly improve both metrics to take over. When
    exactly one objective is violated, a candidate that strictly
    improves the violated metric while keeping the other within its
    objective takes over even if that other metric got worse: reaching
    full satisfaction outranks polishing one metric.
    """
    if not candidates:
        raise GanError("empty candidate list")
    layer_row = np.array([task.layer.as_tuple()], dtype=np.int64)
    feas, lat, pw = model.metrics_rows(layer_row, list(candidates))
    if not feas.any():
        raise GanError("all candidates are infeasible")
    lo, po = task.lo, task.po
    l_opt = p_opt = 0.0
    config_opt = None
    for c, ok, l_g, p_g in zip(candidates, feas, lat, pw):
        if not ok:
            continue
        if config_opt is None:
            update = True
        elif (l_opt > lo and p_opt > po) or (l_opt <= lo and p_opt <= po):
            update = l_g < l_opt and p_g < p_opt
        elif l_opt > lo:  # latency still violated, power already fine
            update = l_g < l_opt and p_g <= po
        else:  # power still violated, latency already fine
            update = p_g < p_opt and l_g <= lo
        if update:
            l_opt, p_opt, config_opt = float(l_g), float(p_g), c
    return SelectionResult(
        config_opt=config_opt,
        l_opt=l_opt,
        p_opt=p_opt,
        satisfied=bool(l_opt <= lo and p_opt <= po),
        candidates_examined=len(candidates),
    )


def explore(
    g: Mlp,
    task: DseTask,
    model: NormalizedModel,
    threshold: float,
    seed: int,
    cap: int = DEFAULT_CAP,
    noise_len: int = 16,
) -> SelectionResult:
    """Generate candidates for the task and select the best design."""
    t0 = time.perf_counter()
    cands = generate_candidates(
        g, task, model, threshold, seed, cap=cap, noise_len=noise_len
    )
    result = select_design(cands, task, model)
    elapsed = time.perf_counter() - t0
    return SelectionResult(
        config_opt=result.config_opt,
        l_opt=result.l_opt,
        p_opt=result.p_opt,
        satisfied=result.satisfied,
        candidates_examined=result.candidates_examined,
        dse_seconds=elapsed,
    )


def write_loss_history(history: Sequence[LossRecord], path) -> None:
    """Four aligned columns: epoch, loss_config, loss_critic, loss_dis."""
    lines = ["# epoch loss_config loss_critic loss_dis"]
    for rec in history:
        lines.append(
            f"{rec.epoch} {rec.loss_config:.17g} {rec.loss_critic:.17g} "
            f"{rec.loss_dis:.17g}"
        )
    from pathlib import Path

    Path(path).write_text("\n".join(lines) + "\n")
