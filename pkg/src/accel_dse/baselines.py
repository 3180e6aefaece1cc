"""Comparison searchers: simulated annealing and a plain supervised MLP.

SA walks the discrete space one adjacent choice at a time under a
geometric cooling schedule, stopping early the moment both objectives
are met. The MLP baseline trains the same generator architecture purely
on imitation loss (no discriminator, no satisfaction branch) and reuses
the exact same candidate extraction and selection machinery at
inference time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .data import Dataset
from .gan import (
    DseTask,
    GanError,
    NormalizedModel,
    SelectionResult,
    TrainConfig,
    _dataset_arrays,
    _grouped_ce,
    training_streams,
)
from .nn import AdamState, Mlp, adam_step, backward, clip_gradients, forward
from .space import ConfigSpace


class SearchError(ValueError):
    pass


@dataclass(frozen=True)
class SaSchedule:
    t0: float = 1.0
    alpha: float = 0.95          # geometric cooling factor
    steps_per_temp: int = 10
    stop_ratio: float = 3e-8     # stop once T < stop_ratio * t0

    def __post_init__(self):
        if self.t0 <= 0 or not 0.0 < self.alpha < 1.0 or self.steps_per_temp < 1:
            raise SearchError("invalid annealing schedule")


def _energy(l: float, p: float, lo: float, po: float) -> float:
    return max(0.0, (l - lo) / lo) + max(0.0, (p - po) / po)


def sa_search(
    task: DseTask,
    space: ConfigSpace,
    model: NormalizedModel,
    schedule: SaSchedule | None = None,
    seed: int = 0,
    on_step: Callable[[float, float, float, bool], None] | None = None,
) -> SelectionResult:
    """Simulated annealing over the discrete configuration space.

    Energy is the summed relative violation of the two objectives (zero
    when both are met, +inf when infeasible). A move changes one
    uniformly chosen variable to an adjacent choice-list entry and is
    accepted by the Metropolis rule. Terminates on energy zero or when
    the temperature falls below stop_ratio * t0. Returns the best-energy
    configuration visited, ties broken by lower latency then power.

    ``on_step(temperature, e_old, e_new, accepted)`` is invoked per move
    when given.
    """
    schedule = schedule or SaSchedule()
    rng = np.random.default_rng(seed)
    lo, po = task.lo, task.po
    evals = 0

    def measure(config):
        nonlocal evals
        evals += 1
        try:
            l, p = model.metrics(task.layer, config)
        except Exception:
            return math.inf, math.inf, math.inf
        return _energy(l, p, lo, po), l, p

    current = None
    for _ in range(1000):
        values = [
            int(v.choices[rng.integers(len(v.choices))]) for v in space.variables
        ]
        cand = space.config_from_values(values)
        e, l, p = measure(cand)
        if math.isfinite(e):
            current, cur_e, cur_l, cur_p = cand, e, l, p
            break
    else:
        raise SearchError("no feasible starting point found in 1000 draws")

    best = (cur_e, cur_l, cur_p, current)

    def maybe_best(e, l, p, config):
        nonlocal best
        if (e, l, p) < (best[0], best[1], best[2]):
            best = (e, l, p, config)

    movable = [i for i, v in enumerate(space.variables) if len(v.choices) > 1]
    t = schedule.t0
    while best[0] > 0.0 and t >= schedule.stop_ratio * schedule.t0 and movable:
        for _ in range(schedule.steps_per_temp):
            vi = movable[int(rng.integers(len(movable)))]
            var = space.variables[vi]
            idx = var.choices.index(getattr(current, var.name))
            moves = [m for m in (idx - 1, idx + 1) if 0 <= m < len(var.choices)]
            step = moves[int(rng.integers(len(moves)))]
            values = [getattr(current, v.name) for v in space.variables]
            values[vi] = var.choices[step]
            neighbor = space.config_from_values(values)
            e, l, p = measure(neighbor)
            if math.isfinite(e):
                maybe_best(e, l, p, neighbor)
            delta = e - cur_e
            accept = delta <= 0 or rng.random() < math.exp(-delta / t)
            if on_step is not None:
                on_step(t, cur_e, e, accept)
            if accept:
                current, cur_e, cur_l, cur_p = neighbor, e, l, p
            if best[0] == 0.0:
                break
        t *= schedule.alpha

    e, l, p, config = best
    return SelectionResult(
        config_opt=config,
        l_opt=l,
        p_opt=p,
        satisfied=bool(l <= lo and p <= po),
        candidates_examined=evals,
    )


def train_mlp_only(
    train_set: Dataset,
    mlp: Mlp,
    model: NormalizedModel,
    cfg: TrainConfig,
) -> tuple[Mlp, list[float]]:
    """Purely supervised generator training: imitation loss on every sample.

    Uses the identical batching, conditioning, and random streams as the
    adversarial loop so runs with equal seeds are directly comparable.
    Returns the trained network and the per-epoch mean loss.
    """
    space, stats = model.space, model.stats
    if mlp.head_blocks != space.block_lengths:
        raise GanError("network head does not match the space's blocks")
    n, layers, targets, lo, po, cond = _dataset_arrays(train_set, space, stats)
    n_blocks = len(space.variables)
    bs = cfg.batch_size
    shuffle_rng, noise_rng = training_streams(cfg.seed)
    st = AdamState.for_mlp(mlp)
    losses: list[float] = []
    for _epoch in range(cfg.epochs):
        perm = shuffle_rng.permutation(n)
        total = 0.0
        n_batches = 0
        for start in range(0, n, bs):
            batch = perm[start : start + bs]
            b = len(batch)
            noise = noise_rng.uniform(0.0, 0.1, (b, cfg.noise_len))
            x = np.hstack([cond[batch], noise])
            probs, cache = forward(mlp, x)
            total += float(_grouped_ce(probs, targets[batch], space.block_lengths).sum()) / bs
            n_batches += 1
            dlogits = (probs - targets[batch]) / n_blocks / bs
            grads, _ = backward(mlp, cache, dlogits)
            adam_step(mlp, clip_gradients(grads, cfg.clip_norm), st, cfg.lr_g)
        losses.append(total / max(n_batches, 1))
    return mlp, losses
