"""Task construction and evaluation metrics for DSE method comparisons.

Satisfaction counting allows 1% slack on each objective. The improvement
ratio is the RMS relative margin below the objectives and exists only
for strictly satisfying results. Objective difficulty is the normalized
distance to the closest Pareto-optimal dataset point: tasks close to the
frontier are hard.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .data import Dataset
from .gan import DseTask, SelectionResult

SAT_NOISE = 0.01
DIFFICULTY_STEPS = tuple(range(10, 101, 10))


class EvalError(ValueError):
    pass


def make_tasks(
    test_set: Dataset,
    mode: str = "exact",
    factor_range: tuple[float, float] | None = None,
    seed: int = 0,
) -> list[DseTask]:
    """One task per test sample.

    ``exact`` mode uses the sample's own recorded metrics as objectives,
    so the recorded configuration itself is always a witness that the
    task is satisfiable. ``relaxed`` mode scales each objective by an
    independent uniform factor from ``factor_range``.
    """
    if len(test_set) == 0:
        raise EvalError("empty test set")
    if mode == "exact":
        return [
            DseTask(s.layer, s.latency_norm, s.power_norm)
            for s in test_set.samples
        ]
    if mode == "relaxed":
        if factor_range is None:
            raise EvalError("relaxed mode needs a factor range")
        a, b = factor_range
        rng = np.random.default_rng(seed)
        tasks = []
        for s in test_set.samples:
            fl = float(rng.uniform(a, b))
            fp = float(rng.uniform(a, b))
            tasks.append(DseTask(s.layer, s.latency_norm * fl, s.power_norm * fp))
        return tasks
    raise EvalError(f"unknown task mode {mode!r}")


def is_satisfied(
    l_opt: float, p_opt: float, lo: float, po: float, noise: float = SAT_NOISE
) -> bool:
    """Both metrics within their objectives, each allowed ``noise`` slack."""
    return l_opt <= (1.0 + noise) * lo and p_opt <= (1.0 + noise) * po


def improvement_ratio(
    l_opt: float, p_opt: float, lo: float, po: float
) -> float | None:
    """RMS relative margin below the objectives; None unless both are met.

    sqrt(((L-LO)/LO)^2/2 + ((P-PO)/PO)^2/2), defined only when
    L <= LO and P <= PO (no slack here: a result satisfied only through
    the counting noise has no improvement ratio).
    """
    if not (l_opt <= lo and p_opt <= po):
        return None
    rl = (l_opt - lo) / lo
    rp = (p_opt - po) / po
    return math.sqrt(0.5 * (rl * rl + rp * rp))


def error_stats(
    results: Sequence[SelectionResult], tasks: Sequence[DseTask]
) -> tuple[float, float]:
    """Population std of the relative latency and power errors.

    Errors are (L-LO)/LO and (P-PO)/PO over all results, satisfied or not.
    """
    if len(results) != len(tasks):
        raise EvalError("results and tasks are misaligned")
    if len(results) < 2:
        raise EvalError("need at least 2 results")
    el = np.array([(r.l_opt - t.lo) / t.lo for r, t in zip(results, tasks)])
    ep = np.array([(r.p_opt - t.po) / t.po for r, t in zip(results, tasks)])
    return float(np.std(el)), float(np.std(ep))


def pareto_frontiers(points: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    """Non-dominated (latency, power) points, duplicates collapsed.

    A point is dominated when some other point is strictly better in one
    metric and not worse in the other (lower is better in both).
    """
    unique = sorted(set((float(l), float(p)) for l, p in points))
    if not unique:
        raise EvalError("empty dataset")
    out = []
    best_p = math.inf
    i = 0
    while i < len(unique):
        l = unique[i][0]
        group_min = unique[i][1]  # sorted, so the first of each L is its min P
        while i < len(unique) and unique[i][0] == l:
            i += 1
        if group_min < best_p:
            out.append((l, group_min))
            best_p = group_min
    return out


def task_difficulty(task: DseTask, frontiers: Sequence[tuple[float, float]]) -> float:
    """Distance from the objectives to the closest frontier point,
    normalized by that point's magnitude. Smaller means harder."""
    if not frontiers:
        raise EvalError("empty frontier list")
    best = None
    for f in sorted(frontiers):
        d = math.hypot(task.lo - f[0], task.po - f[1])
        if best is None or d < best[0]:
            best = (d, f)
    d, f = best
    return d / math.hypot(f[0], f[1])


@dataclass(frozen=True)
class MethodSummary:
    name: str
    satisfied: int
    total: int
    mean_improvement: float | None
    err_std_latency: float
    err_std_power: float
    mean_candidates: float
    mean_seconds: float
    difficulty_curve: tuple[tuple[int, float], ...]  # (top n%, satisfaction rate)


@dataclass(frozen=True)
class EvalReport:
    methods: tuple[MethodSummary, ...]
    n_tasks: int

    def summary(self, name: str) -> MethodSummary:
        for m in self.methods:
            if m.name == name:
                return m
        raise KeyError(name)


def build_report(
    results_by_method: Mapping[str, Sequence[SelectionResult]],
    tasks: Sequence[DseTask],
    dataset_points: Iterable[tuple[float, float]],
) -> EvalReport:
    """Aggregate every metric for each method over a shared task list.

    The difficulty curve reports, for each n in 10..100 step 10, the
    satisfaction rate over the top n% hardest tasks (hardest first).
    """
    frontiers = pareto_frontiers(dataset_points)
    n_tasks = len(tasks)
    difficulty = [task_difficulty(t, frontiers) for t in tasks]
    hardness_order = sorted(range(n_tasks), key=lambda i: (difficulty[i], i))
    summaries = []
    for name, results in results_by_method.items():
        if len(results) != n_tasks:
            raise EvalError(
                f"{name}: {len(results)} results for {n_tasks} tasks"
            )
        sat_flags = [
            is_satisfied(r.l_opt, r.p_opt, t.lo, t.po)
            for r, t in zip(results, tasks)
        ]
        ratios = [
            improvement_ratio(r.l_opt, r.p_opt, t.lo, t.po)
            for r, t in zip(results, tasks)
        ]
        ratios = [r for r in ratios if r is not None]
        curve = []
        for pct in DIFFICULTY_STEPS:
            k = max(1, (pct * n_tasks) // 100)
            top = hardness_order[:k]
            curve.append((pct, sum(sat_flags[i] for i in top) / k))
        err_l, err_p = error_stats(results, tasks)
        summaries.append(
            MethodSummary(
                name=name,
                satisfied=sum(sat_flags),
                total=n_tasks,
                mean_improvement=(sum(ratios) / len(ratios)) if ratios else None,
                err_std_latency=err_l,
                err_std_power=err_p,
                mean_candidates=float(
                    np.mean([r.candidates_examined for r in results])
                ),
                mean_seconds=float(np.mean([r.dse_seconds for r in results])),
                difficulty_curve=tuple(curve),
            )
        )
    return EvalReport(tuple(summaries), n_tasks)


def render_report(report: EvalReport) -> str:
    """Aligned text table, one row per method."""
    headers = [
        "Method", "# of Cand. Config.", "DSE Time",
        "# of Sat. Results", "Improvement Ratio",
        "Err Std (L)", "Err Std (P)",
    ]
    rows = [headers]
    for m in report.methods:
        imp = f"{m.mean_improvement:.4f}" if m.mean_improvement is not None else "-"
        rows.append(
            [
                m.name,
                f"{m.mean_candidates:.2f}",
                f"{m.mean_seconds:.4f}s",
                f"{m.satisfied}/{m.total}",
                imp,
                f"{m.err_std_latency:.4f}",
                f"{m.err_std_power:.4f}",
            ]
        )
    widths = [max(len(r[i]) for r in rows) for i in range(len(headers))]
    lines = []
    for r in rows:
        lines.append("  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip())
    return "\n".join(lines) + "\n"


def report_to_kv(report: EvalReport) -> str:
    """Machine-readable key/value rendering of the report."""
    lines = [f"n_tasks = {report.n_tasks}"]
    for m in report.methods:
        pre = f"method.{m.name}"
        lines.append(f"{pre}.satisfied = {m.satisfied}")
        lines.append(f"{pre}.total = {m.total}")
        imp = "none" if m.mean_improvement is None else f"{m.mean_improvement:.17g}"
        lines.append(f"{pre}.mean_improvement = {imp}")
        lines.append(f"{pre}.err_std_latency = {m.err_std_latency:.17g}")
        lines.append(f"{pre}.err_std_power = {m.err_std_power:.17g}")
        lines.append(f"{pre}.mean_candidates = {m.mean_candidates:.17g}")
        lines.append(f"{pre}.mean_seconds = {m.mean_seconds:.17g}")
        for pct, rate in m.difficulty_curve:
            lines.append(f"{pre}.curve.{pct} = {rate:.17g}")
    return "\n".join(lines) + "\n"


def write_difficulty_series(summary: MethodSummary, path: str | Path) -> None:
    """Two columns for external plotting: top-n-percent, satisfaction rate."""
    lines = [f"{pct} {rate:.17g}" for pct, rate in summary.difficulty_curve]
    Path(path).write_text("\n".join(lines) + "\n")
