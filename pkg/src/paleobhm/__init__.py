"""Hierarchical Bayes reconstruction of a gridded temperature field from proxies.

The package fits, by Gibbs sampling with forward-filter backward-sample
steps, a three-level model: proxies respond linearly to local temperature,
the gridded field follows a VAR(1) around a forced hemispheric mean, and
instrumental data anchor the calibration window.  A pseudo-proxy harness,
a direct-regression baseline, and sampler-correctness checks (Geweke, SBC)
ship alongside the engine; `paleobhm` on the command line drives the whole
pipeline from CSV inputs.
"""

from paleobhm.model import (
    DataError,
    Dataset,
    ForcingSeries,
    GridSpec,
    InstrumentalSeries,
    LatentStates,
    ModelConfig,
    NumericalError,
    Params,
    PriorConfig,
    ProxyPanel,
    SamplerConfig,
    ValidationReport,
    nh_mean_path,
    validate_config,
)
from paleobhm.gibbs import (
    DrawStore,
    chain_diagnostics,
    run_chain,
    run_chains,
)
from paleobhm.statespace import (
    build_ssm,
    draw_latents,
    ffbs_states,
    kalman_filter,
    smoother_moments,
)
from paleobhm.pseudoproxy import (
    PseudoproxyDesign,
    SimulatedTruth,
    draw_prior_params,
    simulate_dataset,
)
from paleobhm.baseline import (
    DirectModel,
    attenuation_factor,
    fit_direct,
    predict_direct,
)
from paleobhm.evaluation import (
    correlation,
    insample_mean_benchmark,
    interval_coverage,
    reconstruction_window,
    rmse,
    sbc_check,
)
from paleobhm.validation import geweke_check, geweke_instance
from paleobhm.io import (
    RunConfig,
    load_config,
    merge_draws,
    parse_inputs,
    read_draws,
    summarize,
    write_draws,
)

__all__ = [
    "DataError",
    "Dataset",
    "DirectModel",
    "DrawStore",
    "ForcingSeries",
    "GridSpec",
    "InstrumentalSeries",
    "LatentStates",
    "ModelConfig",
    "NumericalError",
    "Params",
    "PriorConfig",
    "ProxyPanel",
    "PseudoproxyDesign",
    "RunConfig",
    "SamplerConfig",
    "SimulatedTruth",
    "ValidationReport",
    "attenuation_factor",
    "build_ssm",
    "chain_diagnostics",
    "correlation",
    "draw_latents",
    "draw_prior_params",
    "ffbs_states",
    "fit_direct",
    "geweke_check",
    "geweke_instance",
    "insample_mean_benchmark",
    "interval_coverage",
    "kalman_filter",
    "load_config",
    "merge_draws",
    "nh_mean_path",
    "parse_inputs",
    "predict_direct",
    "read_draws",
    "reconstruction_window",
    "rmse",
    "run_chain",
    "run_chains",
    "sbc_check",
    "simulate_dataset",
    "smoother_moments",
    "summarize",
    "validate_config",
    "write_draws",
]
