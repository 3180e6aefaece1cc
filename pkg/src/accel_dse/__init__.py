"""Design space exploration engine for CNN accelerator configurations."""

from .model import (
    Configuration,
    ConvLayer,
    DesignMetrics,
    InfeasibleConfigError,
    PowerCoefficients,
    check_feasible,
    design_metrics,
    dnnweaver_derive_tiling,
    im2col_latency,
    im2col_power,
)
from .space import (
    ConfigSpace,
    NormStats,
    candidate_product,
    decode_onehot,
    dnnweaver_space,
    encode_conditioning,
    encode_onehot,
    im2col_space,
    make_space,
)
from .data import Dataset, Sample, compute_norm_stats, generate_dataset, read_csv, split, write_csv
from .nn import Mlp, AdamState, adam_step, backward, cross_entropy, forward, init_mlp, load_weights, save_weights
from .gan import (
    DseTask,
    LossRecord,
    NormalizedModel,
    SelectionResult,
    TrainConfig,
    explore,
    generate_candidates,
    select_design,
    train_gan,
)
from .baselines import SaSchedule, sa_search, train_mlp_only
from .evaluate import (
    EvalReport,
    build_report,
    error_stats,
    improvement_ratio,
    is_satisfied,
    make_tasks,
    pareto_frontiers,
    task_difficulty,
)
from .netdesc import NetworkDescription, parse_network
from .rtl import default_rtl_params, emit_rtl_params
from .config import EngineConfig, load_engine_config

__version__ = "0.1.0"
