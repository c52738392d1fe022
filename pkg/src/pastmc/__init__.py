"""MCMC acceleration by resampling from the past or from an auxiliary chain."""
from .auxiliary import (
    AuxConfig,
    EnergyPartition,
    WeightedReservoir,
    check_weights,
    importance_log_weight,
    run_importance_resampling,
)
from .core import ChainTrace, LogDensity, RngStream, make_substream, read_trace_csv, run_chain, write_trace_csv
from .diagnostics import acf, ess, inefficiency, parzen, tv_distance
from .kernels import GibbsBlock, GibbsKernel, ImhKernel, RwmKernel
from .resampling import ResampleSchedule, divergence_delta, run_with_resampling, schedule_time

__version__ = "0.1.0"
