"""Engine configuration: one flat key/value file drives every command.

Keys use dotted section prefixes (``power.e_mac``, ``train.epochs``).
Unset keys fall back to the documented defaults; the reference file
``configs/defaults.cfg`` in the repository lists every key at its
default value. The ``profile`` key selects the network architecture and
optimizer settings: ``desk`` is sized for commodity-CPU runs, ``paper``
selects the published large-scale hyperparameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path

from .data import DEFAULT_LAYER_RANGES
from .gan import TrainConfig
from .model import DNNWEAVER_DSB, DNNWEAVER_SDB, PowerCoefficients, VARIANTS
from .space import ConfigSpace, make_space, parse_kv_lines


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Profile:
    g_hidden_layers: int
    d_hidden_layers: int
    width: int
    lr: float
    batch_size: int


def profile_settings(profile: str, variant: str) -> Profile:
    if profile == "desk":
        return Profile(4, 4, 256, 1e-3, 256)
    if profile == "paper":
        if variant == "dnnweaver":
            return Profile(14, 11, 2048, 2.5e-5, 1024)
        return Profile(11, 11, 2048, 2e-5, 1024)
    raise ConfigError(f"unknown profile {profile!r}")


@dataclass(frozen=True)
class EngineConfig:
    variant: str = "im2col"
    profile: str = "desk"
    coeffs: PowerCoefficients = field(default_factory=PowerCoefficients)
    space_overrides: dict = field(default_factory=dict)
    layer_ranges: dict = field(default_factory=lambda: dict(DEFAULT_LAYER_RANGES))
    n_train: int = 5000
    n_test: int = 500
    data_seed: int = 1
    epochs: int = 100
    batch_size: int | None = None  # None: use the profile's batch size
    w_critic: float = 0.5
    lr_g: float | None = None      # None: use the profile's learning rate
    lr_d: float | None = None
    train_seed: int = 0
    noise_len: int = 16
    clip_norm: float = 5.0
    threshold: float = 0.2
    candidate_cap: int = 100_000
    eval_seed: int = 0
    dnnweaver_dsb: int = DNNWEAVER_DSB
    dnnweaver_sdb: int = DNNWEAVER_SDB
    out_dir: str = "runs"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}")
        profile_settings(self.profile, self.variant)
        if not 0.0 < self.threshold < 1.0:
            raise ConfigError("explore.threshold must be in (0, 1)")
        if self.n_train < 2 or self.n_test < 0:
            raise ConfigError("dataset sizes out of range")
        if self.epochs < 1 or self.candidate_cap < 1:
            raise ConfigError("train.epochs and explore.cap must be >= 1")
        if self.w_critic < 0:
            raise ConfigError("train.w_critic must be >= 0")

    @property
    def resolved_profile(self) -> Profile:
        return profile_settings(self.profile, self.variant)

    def build_space(self) -> ConfigSpace:
        return make_space(self.variant, self.space_overrides or None)

    def train_config(self) -> TrainConfig:
        prof = self.resolved_profile
        return TrainConfig(
            epochs=self.epochs,
            batch_size=self.batch_size or prof.batch_size,
            w_critic=self.w_critic,
            lr_g=self.lr_g if self.lr_g is not None else prof.lr,
            lr_d=self.lr_d if self.lr_d is not None else prof.lr,
            threshold=self.threshold,
            seed=self.train_seed,
            noise_len=self.noise_len,
            clip_norm=self.clip_norm,
        )

    def mlp_sizes(self, input_size: int, output_size: int, kind: str) -> list[int]:
        prof = self.resolved_profile
        hidden = prof.g_hidden_layers if kind == "g" else prof.d_hidden_layers
        return [input_size] + [prof.width] * hidden + [output_size]

    # Conventional artifact paths inside out_dir.
    def path(self, name: str) -> Path:
        return Path(self.out_dir) / name

    @property
    def train_csv(self) -> Path:
        return self.path("train.csv")

    @property
    def test_csv(self) -> Path:
        return self.path("test.csv")

    @property
    def generator_ckpt(self) -> Path:
        return self.path("generator.npz")

    @property
    def discriminator_ckpt(self) -> Path:
        return self.path("discriminator.npz")

    @property
    def losses_txt(self) -> Path:
        return self.path("losses.txt")


_INT_KEYS = {
    "dataset.n_train": "n_train",
    "dataset.n_test": "n_test",
    "dataset.seed": "data_seed",
    "train.epochs": "epochs",
    "train.batch_size": "batch_size",
    "train.seed": "train_seed",
    "train.noise_len": "noise_len",
    "explore.cap": "candidate_cap",
    "eval.seed": "eval_seed",
    "dnnweaver.dsb": "dnnweaver_dsb",
    "dnnweaver.sdb": "dnnweaver_sdb",
}
_FLOAT_KEYS = {
    "train.w_critic": "w_critic",
    "train.lr_g": "lr_g",
    "train.lr_d": "lr_d",
    "train.clip_norm": "clip_norm",
    "explore.threshold": "threshold",
}
_STR_KEYS = {
    "variant": "variant",
    "profile": "profile",
    "paths.out_dir": "out_dir",
}
_POWER_KEYS = ("e_mac", "e_sram", "e_dram", "c_pe", "c_sram", "c_base")


def load_engine_config(path: str | Path) -> EngineConfig:
    """Parse a flat key/value config file into an EngineConfig."""
    entries = parse_kv_lines(Path(path).read_text(), path)
    return engine_config_from_entries(entries, source=path)


def engine_config_from_entries(
    entries: dict[str, str], source="<entries>"
) -> EngineConfig:
    kwargs: dict = {}
    power: dict = {}
    space_overrides: dict = {}
    layer_ranges = dict(DEFAULT_LAYER_RANGES)
    for key, val in entries.items():
        try:
            if key in _STR_KEYS:
                kwargs[_STR_KEYS[key]] = val
            elif key in _INT_KEYS:
                kwargs[_INT_KEYS[key]] = int(val)
            elif key in _FLOAT_KEYS:
                kwargs[_FLOAT_KEYS[key]] = float(val)
            elif key.startswith("power."):
                name = key[6:]
                if name not in _POWER_KEYS:
                    raise ConfigError(f"{source}: unknown power coefficient {name!r}")
                power[name] = float(val)
            elif key.startswith("space."):
                space_overrides[key[6:]] = tuple(
                    int(x) for x in val.split(",") if x.strip()
                )
            elif key.startswith("ranges."):
                name = key[7:]
                if name not in layer_ranges:
                    raise ConfigError(f"{source}: unknown layer range {name!r}")
                layer_ranges[name] = tuple(int(x) for x in val.split(",") if x.strip())
            else:
                raise ConfigError(f"{source}: unknown key {key!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"{source}: bad value for {key!r}: {val!r}") from None
    if power:
        kwargs["coeffs"] = PowerCoefficients(**{**_default_power(), **power})
    kwargs["space_overrides"] = space_overrides
    kwargs["layer_ranges"] = layer_ranges
    return EngineConfig(**kwargs)


def _default_power() -> dict:
    c = PowerCoefficients()
    return {k: getattr(c, k) for k in _POWER_KEYS}


def render_engine_config(cfg: EngineConfig) -> str:
    """Write a config back out with every key explicit."""
    lines = [
        f"variant = {cfg.variant}",
        f"profile = {cfg.profile}",
    ]
    for k in _POWER_KEYS:
        lines.append(f"power.{k} = {getattr(cfg.coeffs, k)}")
    for name, vals in (cfg.space_overrides or {}).items():
        lines.append(f"space.{name} = {','.join(str(v) for v in vals)}")
    for name, vals in cfg.layer_ranges.items():
        lines.append(f"ranges.{name} = {','.join(str(v) for v in vals)}")
    lines += [
        f"dataset.n_train = {cfg.n_train}",
        f"dataset.n_test = {cfg.n_test}",
        f"dataset.seed = {cfg.data_seed}",
        f"train.epochs = {cfg.epochs}",
    ]
    if cfg.batch_size is not None:
        lines.append(f"train.batch_size = {cfg.batch_size}")
    lines += [
        f"train.w_critic = {cfg.w_critic}",
    ]
    if cfg.lr_g is not None:
        lines.append(f"train.lr_g = {cfg.lr_g}")
    if cfg.lr_d is not None:
        lines.append(f"train.lr_d = {cfg.lr_d}")
    lines += [
        f"train.seed = {cfg.train_seed}",
        f"train.noise_len = {cfg.noise_len}",
        f"train.clip_norm = {cfg.clip_norm}",
        f"explore.threshold = {cfg.threshold}",
        f"explore.cap = {cfg.candidate_cap}",
        f"eval.seed = {cfg.eval_seed}",
        f"dnnweaver.dsb = {cfg.dnnweaver_dsb}",
        f"dnnweaver.sdb = {cfg.dnnweaver_sdb}",
        f"paths.out_dir = {cfg.out_dir}",
    ]
    return "\n".join(lines) + "\n"
