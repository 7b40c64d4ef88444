"""Scoring: RMSE, correlation, the in-sample-mean benchmark, interval
coverage, and simulation-based calibration of the sampler.

RMSE alone can flatter an informationless predictor -- the calibration-
window mean has no skill yet often beats a variance-attenuated regression
on RMSE -- so correlation (structure capture) and interval calibration are
reported alongside it.  Degenerate correlations are flagged as undefined
(None), never returned as NaN.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from .gibbs import DrawStore, run_chain
from .model import (
    Dataset,
    InstrumentalSeries,
    LatentStates,
    ModelConfig,
    ProxyPanel,
)
from .pseudoproxy import (
    PseudoproxyDesign,
    draw_prior_params,
    simulate_instrumental_values,
    simulate_latents,
    simulate_panel_values,
    staircase_mask,
    synthesize_forcings,
)


def rmse(recon, truth) -> float:
    recon = np.asarray(recon, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if recon.shape != truth.shape or recon.ndim != 1 or recon.size == 0:
        raise ValueError("rmse needs two equal-length nonempty series")
    return float(np.sqrt(np.mean((recon - truth) ** 2)))


def correlation(recon, truth):
    """Pearson correlation, or None when either series is constant."""
    recon = np.asarray(recon, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if recon.shape != truth.shape or recon.ndim != 1 or recon.size == 0:
        raise ValueError("correlation needs two equal-length nonempty series")
    if np.ptp(recon) == 0.0 or np.ptp(truth) == 0.0:
        return None
    a = recon - recon.mean()
    b = truth - truth.mean()
    na = np.sqrt(a @ a)
    nb = np.sqrt(b @ b)
    if na == 0.0 or nb == 0.0:
        return None
    return float(np.clip((a @ b) / (na * nb), -1.0, 1.0))


def insample_mean_benchmark(calibration_target, n_years: int) -> np.ndarray:
    """The informationless benchmark: the calibration mean, held constant."""
    calibration_target = np.asarray(calibration_target, dtype=float)
    if calibration_target.size == 0:
        raise ValueError("calibration window is empty")
    return np.full(n_years, float(calibration_target.mean()))


def reconstruction_window(years, calibration) -> np.ndarray:
    """Boolean mask of the pre-calibration years -- where skill is scored."""
    years = np.asarray(years)
    lo, _ = calibration
    return years < lo


@dataclass(frozen=True)
class CoverageResult:
    contains: np.ndarray   # (T,) bool per year
    coverage: float        # fraction of years covered
    lower: np.ndarray      # (T,) interval endpoints
    upper: np.ndarray


def interval_coverage(draws: DrawStore, truth, level: float,
                      weights=None, years=None) -> CoverageResult:
    """Empirical coverage of central credible intervals for the NH mean.

    `truth` is either the true NH series or a LatentStates (then `weights`
    supplies the area weighting).  `years` restricts to a subset of time
    indices.
    """
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    if isinstance(truth, LatentStates):
        if weights is None:
            raise ValueError("area weights are required with latent-state truth")
        truth_nh = truth.nh_series(np.asarray(weights))
    else:
        truth_nh = np.asarray(truth, dtype=float)
    samples = draws.nh_recon
    if samples.shape[0] == 0:
        raise ValueError("empty draw store")
    if years is not None:
        samples = samples[:, years]
        truth_nh = truth_nh[years]
    alpha = 0.5 * (1.0 - level)
    lower = np.quantile(samples, alpha, axis=0)
    upper = np.quantile(samples, 1.0 - alpha, axis=0)
    contains = (truth_nh >= lower) & (truth_nh <= upper)
    return CoverageResult(
        contains=contains, coverage=float(contains.mean()), lower=lower, upper=upper
    )


# ---------------------------------------------------------------------------
# simulation-based calibration
# ---------------------------------------------------------------------------

def uniformity_pvalue(counts) -> float:
    """Chi-squared goodness-of-fit p-value against a uniform histogram."""
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total == 0:
        raise ValueError("empty histogram")
    expected = total / counts.size
    stat = ((counts - expected) ** 2 / expected).sum()
    return float(chi2.sf(stat, counts.size - 1))


@dataclass(frozen=True)
class SbcResult:
    ranks: dict            # name -> (n_replicates,) integer ranks in [0, L]
    counts: dict           # name -> histogram over bins
    pvalues: dict          # name -> chi-squared uniformity p-value
    n_draws_per_rank: int  # L


def _sbc_scalars(params, latents, weights, recon_years):
    out = {
        "gamma[0]": params.gamma[0],
        "mu": params.mu,
        "omega_solar": params.omega[0],
        "Sigma[0,0]": params.Sigma[0, 0],
    }
    nh = latents.nh_series(weights)
    for t in recon_years:
        out[f"nh_recon[{t}]"] = nh[t]
    return out


def sbc_check(cfg: ModelConfig, design: PseudoproxyDesign, n_replicates: int,
              rng, n_rank_draws: int = 19, n_bins: int = 10) -> SbcResult:
    """Simulation-based calibration of the whole sampler.

    Each replicate draws a truth from the priors, simulates data from the
    model's own data level, runs one chain, and ranks the truth among L
    thinned posterior draws.  Correct software makes every rank uniform on
    {0..L}; the chi-squared p-value per scalar flags miscalibration.
    """
    if n_replicates <= 0:
        raise ValueError("n_replicates must be positive")
    if (cfg.sampler.n_iter - cfg.sampler.burn_in) // cfg.sampler.thin < n_rank_draws:
        raise ValueError("sampler config keeps fewer draws than n_rank_draws")
    T = design.n_years
    G = cfg.grid.n_cells
    weights = cfg.grid.area_weights
    footprints = design.footprints()
    mask = staircase_mask(design.proxy_starts, design.years)
    lo, hi = design.calibration
    inst_mask = (design.years >= lo) & (design.years <= hi)
    recon_years = sorted({0, T // 2, T - 1})
    if cfg.initial_state_mode == "fixed":
        init = dict(v_cov0=cfg.fixed_v_var * np.eye(G), w_var0=cfg.fixed_w_var)
    else:
        init = {}

    names = None
    ranks = {}
    seeds = rng.integers(0, 2**63 - 1, size=n_replicates)
    for r in range(n_replicates):
        rep_rng = np.random.default_rng(seeds[r])
        params = draw_prior_params(cfg, design.n_proxies, rep_rng)
        forcings = design.forcings
        if forcings is None:
            forcings = synthesize_forcings(design, rep_rng)
        latents = simulate_latents(params, forcings, rep_rng, **init)
        values = simulate_panel_values(
            params, latents, footprints, mask, cfg.proxy_ar_enabled, rep_rng
        )
        panel = ProxyPanel(values=values, mask=mask, footprints=footprints)
        obs = simulate_instrumental_values(params, latents, inst_mask, design.obs_sd, rep_rng)
        data = Dataset(
            panel=panel, forcings=forcings,
            instrumental=InstrumentalSeries(obs=obs, mask=inst_mask, obs_sd=design.obs_sd),
        )
        store = run_chain(cfg, data, seed=int(seeds[r]) % 2**32, chain_idx=0)
        keep = np.linspace(0, store.n_draws - 1, n_rank_draws).astype(int)
        truth_vals = _sbc_scalars(params, latents, weights, recon_years)
        if names is None:
            names = list(truth_vals)
            ranks = {k: np.empty(n_replicates, dtype=int) for k in names}
        for k in names:
            series = store.scalar_series(k)[keep]
            ranks[k][r] = int((series < truth_vals[k]).sum())

    counts = {}
    pvalues = {}
    edges = np.linspace(0, n_rank_draws + 1, n_bins + 1)
    for k in names:
        c, _ = np.histogram(ranks[k], bins=edges)
        counts[k] = c
        pvalues[k] = uniformity_pvalue(c)
    return SbcResult(
        ranks=ranks, counts=counts, pvalues=pvalues, n_draws_per_rank=n_rank_draws
    )
