"""Python bindings for the Nexus-rank growth toolkit."""

from ._core import (
    NumericError,
    ValidationError,
    efficiency_ratio,
    fisher_g_test,
    grassmann_distance,
    grow_checkpoint,
    harmonic_fit,
    mann_whitney,
    max_logit_deviation,
    model_flops,
    nexus_proj_flops,
    noc,
    percent_shift,
    perf_gain,
    radial_energy,
    scaling_law_fit,
    standard_proj_flops,
    train,
)

__all__ = [
    "NumericError",
    "ValidationError",
    "efficiency_ratio",
    "fisher_g_test",
    "grassmann_distance",
    "grow_checkpoint",
    "harmonic_fit",
    "mann_whitney",
    "max_logit_deviation",
    "model_flops",
    "nexus_proj_flops",
    "noc",
    "percent_shift",
    "perf_gain",
    "radial_energy",
    "scaling_law_fit",
    "standard_proj_flops",
    "train",
]
