"""Static execution-time, power, and energy prediction for CUDA kernels.

The pipeline: parse PTX into a kernel graph, schedule it against an
architecture profile to predict cycles and time, extract static features,
and run a tree-ensemble power model to get watts and microjoules.
"""

from gpukalc.errors import (
    EnsembleError,
    FitError,
    GpukalcError,
    ProfileError,
    PtxParseError,
    ScheduleError,
)
from gpukalc.features import (
    FEATURE_ORDER,
    SELECTED_FEATURES,
    FeatureVector,
    extract_features,
    features_from_csv,
    features_to_csv,
    theoretical_occupancy,
)
from gpukalc.modelfit import (
    MeasurementSeries,
    avg_latency_from_timing,
    detect_peakwarps,
    fit_exponential,
    fit_linear,
    fit_piecewise_linear,
    generate_microbench,
)
from gpukalc.power import (
    EnergyReport,
    TreeEnsemble,
    importance_report,
    load_ensemble,
    predict_energy,
    predict_power,
)
from gpukalc.profiles import (
    ArchProfile,
    ExpGrowthModel,
    LinearOverheadModel,
    PiecewiseLinearModel,
    cycles_from_us,
    global_mem_latency,
    latency_of,
    launch_overhead_us,
    list_shipped_profiles,
    load_profile,
    mem_throughput,
    resolve_profile,
    us_from_cycles,
)
from gpukalc.ptx import (
    BasicBlock,
    InstClass,
    KernelGraph,
    PtxInstruction,
    Resource,
    parse_ptx,
)
from gpukalc.scheduler import (
    KernelSchedule,
    LaunchConfig,
    schedule_block,
    schedule_cfg,
    schedule_kernel,
)

__version__ = "0.1.0"

__all__ = [
    "ArchProfile",
    "BasicBlock",
    "EnergyReport",
    "EnsembleError",
    "ExpGrowthModel",
    "FEATURE_ORDER",
    "FeatureVector",
    "FitError",
    "GpukalcError",
    "InstClass",
    "KernelGraph",
    "KernelSchedule",
    "LaunchConfig",
    "LinearOverheadModel",
    "MeasurementSeries",
    "PiecewiseLinearModel",
    "ProfileError",
    "PtxInstruction",
    "PtxParseError",
    "Resource",
    "SELECTED_FEATURES",
    "ScheduleError",
    "TreeEnsemble",
    "avg_latency_from_timing",
    "cycles_from_us",
    "detect_peakwarps",
    "extract_features",
    "features_from_csv",
    "features_to_csv",
    "fit_exponential",
    "fit_linear",
    "fit_piecewise_linear",
    "generate_microbench",
    "global_mem_latency",
    "importance_report",
    "latency_of",
    "launch_overhead_us",
    "list_shipped_profiles",
    "load_ensemble",
    "load_profile",
    "mem_throughput",
    "parse_ptx",
    "predict_energy",
    "predict_power",
    "resolve_profile",
    "schedule_block",
    "schedule_cfg",
    "schedule_kernel",
    "theoretical_occupancy",
    "us_from_cycles",
]
