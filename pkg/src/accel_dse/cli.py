"""Command line driver for the four pipeline phases plus evaluation.

Subcommands:

    gen-data    sample a dataset, split it, write CSVs plus stats sidecars
    train       train the adversarial generator/discriminator pair
    explore     run DSE for each layer of a network description
    implement   fill an RTL parameter template from a selection record
    evaluate    compare methods (gan, mlp, sa) over generated tasks

Exit codes: 0 success, 1 user/input error, 2 internal invariant violation.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

import numpy as np

from . import baselines, evaluate as ev
from .config import ConfigError, EngineConfig, load_engine_config, profile_settings
from .data import DatasetError, generate_dataset, read_csv, split, write_csv
from .gan import (
    COND_LEN,
    DseTask,
    GanError,
    NormalizedModel,
    SelectionResult,
    TrainConfig,
    explore as run_explore,
    train_gan,
    write_loss_history,
)
from .model import Configuration, InfeasibleConfigError, config_fields
from .netdesc import NetworkParseError, parse_network
from .nn import NnError, count_parameters, init_mlp, load_weights, mlp_width_for_params, save_weights
from .rtl import RtlError, default_rtl_params, emit_rtl_params
from .space import SpaceError, parse_kv_lines

USER_ERRORS = (
    ConfigError,
    DatasetError,
    GanError,
    NetworkParseError,
    NnError,
    RtlError,
    SpaceError,
    InfeasibleConfigError,
    baselines.SearchError,
    ev.EvalError,
    FileNotFoundError,
)


class CliError(ValueError):
    pass


def _load_config(args) -> EngineConfig:
    if args.config:
        cfg = load_engine_config(args.config)
    else:
        cfg = EngineConfig()
    overrides = {}
    if getattr(args, "variant", None):
        overrides["variant"] = args.variant
    if getattr(args, "profile", None):
        overrides["profile"] = args.profile
    if getattr(args, "seed", None) is not None:
        overrides["data_seed"] = args.seed
        overrides["train_seed"] = args.seed
        overrides["eval_seed"] = args.seed
    if getattr(args, "w_critic", None) is not None:
        overrides["w_critic"] = args.w_critic
    if getattr(args, "threshold", None) is not None:
        overrides["threshold"] = args.threshold
    if getattr(args, "epochs", None) is not None:
        overrides["epochs"] = args.epochs
    if getattr(args, "out_dir", None):
        overrides["out_dir"] = args.out_dir
    if overrides:
        from dataclasses import replace

        cfg = replace(cfg, **overrides)
    return cfg


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise CliError(f"missing prerequisite {path} ({hint})")
    return path


def _model_for(cfg: EngineConfig, stats) -> NormalizedModel:
    return NormalizedModel(
        variant=cfg.variant,
        coeffs=cfg.coeffs,
        stats=stats,
        space=cfg.build_space(),
        dnnweaver_dsb=cfg.dnnweaver_dsb,
        dnnweaver_sdb=cfg.dnnweaver_sdb,
    )


def cmd_gen_data(args) -> int:
    cfg = _load_config(args)
    space = cfg.build_space()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    total = cfg.n_train + cfg.n_test
    dataset = generate_dataset(
        space, cfg.layer_ranges, total, cfg.data_seed, cfg.coeffs
    )
    train, test = split(dataset, cfg.n_test, cfg.data_seed)
    write_csv(train, cfg.train_csv)
    write_csv(test, cfg.test_csv)
    print(f"wrote {len(train)} train rows to {cfg.train_csv}")
    print(f"wrote {len(test)} test rows to {cfg.test_csv}")
    return 0


def _make_nets(cfg: EngineConfig, space, seed_g: int, seed_d: int):
    width_in_g = COND_LEN + cfg.noise_len
    width_in_d = COND_LEN + space.onehot_width
    g = init_mlp(
        cfg.mlp_sizes(width_in_g, space.onehot_width, "g"),
        space.block_lengths,
        seed=seed_g,
    )
    d = init_mlp(cfg.mlp_sizes(width_in_d, 2, "d"), (2,), seed=seed_d)
    return g, d


def cmd_train(args) -> int:
    cfg = _load_config(args)
    space = cfg.build_space()
    _require(cfg.train_csv, "run gen-data first")
    train_set = read_csv(cfg.train_csv, space)
    model = _model_for(cfg, train_set.stats)
    tc = cfg.train_config()
    g, d = _make_nets(cfg, space, seed_g=tc.seed, seed_d=tc.seed + 1)
    g, d, history = train_gan(train_set, g, d, model, tc)
    save_weights(g, cfg.generator_ckpt)
    save_weights(d, cfg.discriminator_ckpt)
    write_loss_history(history, cfg.losses_txt)
    print(
        f"trained {tc.epochs} epochs (w_critic={tc.w_critic}); "
        f"wrote {cfg.generator_ckpt}"
    )
    return 0


def _objectives_per_layer(values: list[float] | None, n: int, flag: str) -> list[float]:
    if not values:
        raise CliError(f"--{flag} is required")
    if len(values) == 1:
        return values * n
    if len(values) != n:
        raise CliError(
            f"--{flag} given {len(values)} times for {n} layers; "
            "give it once or once per layer"
        )
    return values


def selection_record(
    name: str, variant: str, task: DseTask, result: SelectionResult
) -> str:
    lines = [
        f"layer = {name}",
        f"variant = {variant}",
        f"latency_objective = {task.lo:.17g}",
        f"power_objective = {task.po:.17g}",
        f"latency = {result.l_opt:.17g}",
        f"power = {result.p_opt:.17g}",
        f"satisfied = {str(result.satisfied).lower()}",
        f"candidates_examined = {result.candidates_examined}",
        f"dse_seconds = {result.dse_seconds:.6f}",
    ]
    for f in config_fields(variant):
        lines.append(f"config.{f} = {getattr(result.config_opt, f)}")
    return "\n".join(lines) + "\n"


def parse_selection_record(text: str, source="<record>") -> tuple[str, Configuration]:
    entries = parse_kv_lines(text, source)
    if "variant" not in entries:
        raise CliError(f"{source}: missing variant")
    variant = entries["variant"]
    values = {}
    for f in config_fields(variant):
        key = f"config.{f}"
        if key not in entries:
            raise CliError(f"{source}: missing {key}")
        values[f] = int(entries[key])
    return variant, Configuration(**values)


def cmd_explore(args) -> int:
    cfg = _load_config(args)
    space = cfg.build_space()
    _require(cfg.train_csv, "run gen-data first")
    _require(cfg.generator_ckpt, "run train first")
    net_path = _require(Path(args.network), "network description file")
    net = parse_network(net_path.read_text(), source=str(net_path))
    train_set = read_csv(cfg.train_csv, space)
    model = _model_for(cfg, train_set.stats)
    g = load_weights(cfg.generator_ckpt, expected_blocks=space.block_lengths)
    lo = _objectives_per_layer(args.latency, len(net), "latency")
    po = _objectives_per_layer(args.power, len(net), "power")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.eval_seed
    for i, nl in enumerate(net.layers):
        task = DseTask(nl.layer, lo[i], po[i])
        result = run_explore(
            g, task, model, cfg.threshold,
            seed=int(np.random.default_rng([seed, i]).integers(2**31)),
            cap=cfg.candidate_cap, noise_len=cfg.noise_len,
        )
        record_path = out / f"selection_{nl.name}.txt"
        record_path.write_text(
            selection_record(nl.name, cfg.variant, task, result)
        )
        status = "satisfied" if result.satisfied else "NOT satisfied"
        print(
            f"{nl.name}: {status}  L={result.l_opt:.6g} (<= {task.lo:.6g})  "
            f"P={result.p_opt:.6g} (<= {task.po:.6g})  "
            f"candidates={result.candidates_examined}  -> {record_path}"
        )
    return 0


def cmd_implement(args) -> int:
    sel_path = _require(Path(args.selection), "selection record from explore")
    variant, config = parse_selection_record(sel_path.read_text(), str(sel_path))
    if args.template:
        template = _require(Path(args.template), "RTL template").read_text()
        text = emit_rtl_params(template, config, variant)
    else:
        text = default_rtl_params(config, variant)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text)
    print(f"wrote {out}")
    return 0


def _train_methods(cfg: EngineConfig, methods, space, train_set, model):
    """Train whatever networks the requested methods need."""
    tc = cfg.train_config()
    trained = {}
    if "gan" in methods:
        g, d = _make_nets(cfg, space, seed_g=tc.seed, seed_d=tc.seed + 1)
        g, _, _ = train_gan(train_set, g, d, model, tc)
        trained["gan"] = g
    if "mlp" in methods:
        g_ref, d_ref = _make_nets(cfg, space, seed_g=tc.seed, seed_d=tc.seed + 1)
        target = count_parameters(g_ref) + count_parameters(d_ref)
        prof = cfg.resolved_profile
        in_size = COND_LEN + cfg.noise_len
        width = mlp_width_for_params(
            target, in_size, space.onehot_width, prof.g_hidden_layers
        )
        sizes = [in_size] + [width] * prof.g_hidden_layers + [space.onehot_width]
        mlp = init_mlp(sizes, space.block_lengths, seed=tc.seed)
        mlp, _ = baselines.train_mlp_only(train_set, mlp, model, tc)
        trained["mlp"] = mlp
    return trained


def run_methods(
    cfg: EngineConfig, methods, train_set, test_set, model
) -> tuple[dict[str, list[SelectionResult]], list[DseTask]]:
    """Train the requested methods and solve one task per test sample."""
    space = model.space
    tasks = ev.make_tasks(test_set, mode="exact")
    trained = _train_methods(cfg, methods, space, train_set, model)
    results: dict[str, list[SelectionResult]] = {}
    for method in methods:
        out = []
        for i, task in enumerate(tasks):
            seed = int(np.random.default_rng([cfg.eval_seed, i]).integers(2**31))
            if method in ("gan", "mlp"):
                out.append(
                    run_explore(
                        trained[method], task, model, cfg.threshold,
                        seed=seed, cap=cfg.candidate_cap, noise_len=cfg.noise_len,
                    )
                )
            elif method == "sa":
                t0 = time.perf_counter()
                r = baselines.sa_search(task, space, model, seed=seed)
                out.append(
                    SelectionResult(
                        r.config_opt, r.l_opt, r.p_opt, r.satisfied,
                        r.candidates_examined,
                        dse_seconds=time.perf_counter() - t0,
                    )
                )
            else:
                raise CliError(f"unknown method {method!r}")
        results[method] = out
    return results, tasks


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    space = cfg.build_space()
    _require(cfg.train_csv, "run gen-data first")
    _require(cfg.test_csv, "run gen-data first")
    train_set = read_csv(cfg.train_csv, space)
    test_set = read_csv(cfg.test_csv, space)
    model = _model_for(cfg, train_set.stats)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not methods:
        raise CliError("--methods must name at least one of gan, mlp, sa")
    results, tasks = run_methods(cfg, methods, train_set, test_set, model)
    points = [(s.latency_norm, s.power_norm) for s in train_set.samples]
    report = ev.build_report(results, tasks, points)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    text = ev.render_report(report)
    (out / "report.txt").write_text(text)
    (out / "report.kv").write_text(ev.report_to_kv(report))
    for m in report.methods:
        ev.write_difficulty_series(m, out / f"difficulty_{m.name}.txt")
    print(text, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="accel-dse",
        description="Design space exploration for CNN accelerator configurations",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="engine config file (key = value lines)")
        p.add_argument("--seed", type=int, help="override every seed at once")
        p.add_argument("--variant", choices=("im2col", "dnnweaver"))
        p.add_argument("--profile", choices=("desk", "paper"))
        p.add_argument("--out-dir", help="artifact directory (default: runs)")

    p = sub.add_parser("gen-data", help="generate and split the dataset")
    common(p)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train the adversarial G/D pair")
    common(p)
    p.add_argument("--w-critic", type=float, dest="w_critic")
    p.add_argument("--epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("explore", help="search configurations for a network")
    common(p)
    p.add_argument("--network", required=True, help="network description file")
    p.add_argument(
        "--latency", type=float, action="append",
        help="latency objective (repeat once per layer, normalized units)",
    )
    p.add_argument(
        "--power", type=float, action="append",
        help="power objective (repeat once per layer, normalized units)",
    )
    p.add_argument("--threshold", type=float)
    p.set_defaults(func=cmd_explore)

    p = sub.add_parser("implement", help="emit RTL parameters for a selection")
    p.add_argument("--selection", required=True, help="record written by explore")
    p.add_argument("--template", help="RTL template with {{NAME}} placeholders")
    p.add_argument("--out", required=True, help="output parameter file")
    p.set_defaults(func=cmd_implement)

    p = sub.add_parser("evaluate", help="compare DSE methods on generated tasks")
    common(p)
    p.add_argument(
        "--methods", default="gan", help="comma list from: gan, mlp, sa"
    )
    p.add_argument("--w-critic", type=float, dest="w_critic")
    p.add_argument("--epochs", type=int)
    p.add_argument("--threshold", type=float)
    p.set_defaults(func=cmd_evaluate)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CliError, *USER_ERRORS) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except AssertionError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
