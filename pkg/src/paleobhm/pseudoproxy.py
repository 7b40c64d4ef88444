"""Pseudo-proxy experiments: synthetic truths and proxy networks.

A PseudoproxyDesign pins down everything about an experiment -- grid,
record length, calibration window, proxy footprints, signal-to-noise
ratios, the staircase missingness schedule, and the true parameters --
so that every replicate is reproducible from (design, seed).

Two data simulators live here.  ``generate_proxies`` targets experiment
design: noise variances are set from per-proxy SNR measured on the
simulated record.  ``simulate_panel_values`` draws data exactly from the
model's own data level (noise variance taken from Params), which is what
sampler-validation procedures require.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import invwishart

from .model import (
    DataError,
    Dataset,
    ForcingSeries,
    GridSpec,
    InstrumentalSeries,
    LatentStates,
    ModelConfig,
    Params,
    PriorConfig,
    ProxyPanel,
    SamplerConfig,
    nh_mean_path,
    spectral_radius,
    stationary_var_cov,
)

__all__ = [
    "PseudoproxyDesign",
    "SimulatedTruth",
    "ProxyPanelResult",
    "staircase_mask",
    "synthesize_forcings",
    "simulate_latents",
    "simulate_truth",
    "simulate_panel_values",
    "simulate_instrumental_values",
    "generate_proxies",
    "simulate_dataset",
    "draw_prior_params",
]


@dataclass(frozen=True)
class PseudoproxyDesign:
    """Complete specification of one pseudo-proxy experiment."""

    grid: GridSpec
    n_years: int
    start_year: int
    calibration: tuple            # (first, last) calendar year with instrumental data
    snr: np.ndarray               # (P,) signal-to-noise ratios (np.inf = noiseless)
    proxy_starts: np.ndarray      # (P,) first observed calendar year per proxy
    true_params: Params
    footprint_mode: str = "one_cell"   # or "local_average"
    footprint_width: int = 2           # cells averaged in local_average mode
    obs_sd: float = 0.1                # instrumental noise sd
    forcing_ar: float = 0.7            # persistence of synthesized forcings
    forcing_sd: float = 1.0            # marginal sd of synthesized forcings
    forcings: ForcingSeries | None = None  # use these instead of synthesizing

    def __post_init__(self):
        snr = np.asarray(self.snr, dtype=float)
        starts = np.asarray(self.proxy_starts, dtype=int)
        object.__setattr__(self, "snr", snr)
        object.__setattr__(self, "proxy_starts", starts)
        if snr.shape != starts.shape or snr.ndim != 1:
            raise ValueError("snr and proxy_starts must be 1-d with one entry per proxy")
        if np.any(snr <= 0):
            raise ValueError("signal-to-noise ratios must be positive")
        last = self.start_year + self.n_years - 1
        if np.any(starts > last):
            raise ValueError("every proxy must start on or before the last year")
        if self.true_params.n_cells != self.grid.n_cells:
            raise ValueError("true_params grid dimension does not match the design grid")
        if self.true_params.n_proxies != len(snr):
            raise ValueError("true_params proxy dimension does not match the design")
        lo, hi = self.calibration
        if not (self.start_year <= lo <= hi <= last):
            raise ValueError("calibration window falls outside the record")
        if hi != last:
            raise ValueError("calibration window must end at the last year "
                             "(instrumental data anchor the modern tail)")
        if self.footprint_mode not in ("one_cell", "local_average"):
            raise ValueError(f"unknown footprint_mode {self.footprint_mode!r}")

    @property
    def n_proxies(self) -> int:
        return len(self.snr)

    @property
    def years(self) -> np.ndarray:
        return np.arange(self.start_year, self.start_year + self.n_years)

    def footprints(self) -> np.ndarray:
        G = self.grid.n_cells
        P = self.n_proxies
        out = np.zeros((P, G))
        for i in range(P):
            if self.footprint_mode == "one_cell":
                out[i, i % G] = 1.0
            else:
                width = min(self.footprint_width, G)
                for k in range(width):
                    out[i, (i + k) % G] = 1.0 / width
        return out

    def model_config(self, priors: PriorConfig | None = None,
                     sampler: SamplerConfig | None = None, **kw) -> ModelConfig:
        """A ModelConfig matching this design's dimensions and windows."""
        proxy_ar = bool(np.any(self.true_params.proxy_ar != 0.0))
        return ModelConfig(
            grid=self.grid,
            priors=priors or PriorConfig(),
            sampler=sampler or SamplerConfig(),
            calibration=self.calibration,
            proxy_ar_enabled=kw.pop("proxy_ar_enabled", proxy_ar),
            **kw,
        )


@dataclass(frozen=True)
class SimulatedTruth:
    params: Params
    latents: LatentStates
    instrumental: InstrumentalSeries
    forcings: ForcingSeries


def staircase_mask(starts, years) -> np.ndarray:
    """Observation mask: proxy i observed in every year >= starts[i]."""
    years = np.asarray(years)
    starts = np.asarray(starts)
    return years[:, None] >= starts[None, :]


def _ar1_series(rho, innov_sd, T, rng, init_sd=None):
    """Stationary AR(1) path (or with a given initial sd)."""
    x = np.empty(T)
    if init_sd is None:
        init_sd = innov_sd / np.sqrt(1.0 - rho**2) if abs(rho) < 1 else innov_sd
    x[0] = init_sd * rng.standard_normal()
    shocks = innov_sd * rng.standard_normal(T - 1)
    for t in range(1, T):
        x[t] = rho * x[t - 1] + shocks[t - 1]
    return x


def synthesize_forcings(design: PseudoproxyDesign, rng) -> ForcingSeries:
    """Independent AR(1) forcing series with the design's persistence."""
    T = design.n_years
    rho = design.forcing_ar
    innov = design.forcing_sd * np.sqrt(1.0 - rho**2)
    return ForcingSeries(
        years=design.years,
        solar=_ar1_series(rho, innov, T, rng),
        volcanic=_ar1_series(rho, innov, T, rng),
        co2=_ar1_series(rho, innov, T, rng),
    )


def simulate_latents(params: Params, forcings: ForcingSeries, rng,
                     v_cov0=None, w_var0=None) -> LatentStates:
    """Forward-simulate (v, w, y); stationary initial law unless overridden."""
    T = forcings.n_years
    G = params.n_cells
    if v_cov0 is None:
        v_cov0 = stationary_var_cov(params.A, params.Sigma)
    if w_var0 is None:
        w_var0 = params.nh_var / (1.0 - params.nh_ar**2)
    v = np.empty((T, G))
    v[0] = np.linalg.cholesky(v_cov0 + 1e-300 * np.eye(G)) @ rng.standard_normal(G) \
        if np.any(v_cov0) else np.zeros(G)
    Ls = np.linalg.cholesky(params.Sigma)
    shocks = rng.standard_normal((T - 1, G)) @ Ls.T
    for t in range(1, T):
        v[t] = params.A @ v[t - 1] + shocks[t - 1]
    w = _ar1_series(params.nh_ar, np.sqrt(params.nh_var), T, rng,
                    init_sd=np.sqrt(w_var0))
    c = nh_mean_path(params.mu, params.omega, forcings)
    return LatentStates(v=v, w=w, y=c + w)


def simulate_truth(design: PseudoproxyDesign, rng) -> SimulatedTruth:
    """Draw one synthetic truth: forcings, latent paths, instrumental record."""
    params = design.true_params
    forcings = design.forcings if design.forcings is not None else synthesize_forcings(design, rng)
    latents = simulate_latents(params, forcings, rng)
    T = design.n_years
    G = design.grid.n_cells
    lo, hi = design.calibration
    mask = (design.years >= lo) & (design.years <= hi)
    obs = np.zeros((T, G))
    field = latents.temperature_field()
    obs[mask] = field[mask] + design.obs_sd * rng.standard_normal((int(mask.sum()), G))
    instrumental = InstrumentalSeries(obs=obs, mask=mask, obs_sd=design.obs_sd)
    return SimulatedTruth(
        params=params, latents=latents, instrumental=instrumental, forcings=forcings
    )


def _ar_noise_on_runs(mask_col, marginal_sd, phi, rng, T):
    """Model-law noise: AR(1) restarted at each observed run, marginal sd given."""
    u = np.zeros(T)
    idx = np.flatnonzero(mask_col)
    if idx.size == 0:
        return u
    innov_sd = marginal_sd * np.sqrt(1.0 - phi**2)
    prev = None
    for t in idx:
        if prev is None or t != prev + 1:
            u[t] = marginal_sd * rng.standard_normal()
        else:
            u[t] = phi * u[prev] + innov_sd * rng.standard_normal()
        prev = t
    return u


@dataclass(frozen=True)
class ProxyPanelResult:
    panel: ProxyPanel
    noise_marginal_var: np.ndarray  # (P,) implied marginal noise variances


def generate_proxies(truth: SimulatedTruth, design: PseudoproxyDesign, rng) -> ProxyPanelResult:
    """Proxy panel with noise variances set from the design's SNR targets.

    SNR is defined on the simulated record: noise marginal variance =
    Var(gamma_i h_i . T_t)/SNR_i, with the variance taken over the full
    simulated record so the experiment is exactly reproducible.
    """
    params = truth.params
    field = truth.latents.temperature_field()
    footprints = design.footprints()
    T, P = design.n_years, design.n_proxies
    mask = staircase_mask(design.proxy_starts, design.years)
    values = np.empty((T, P))
    noise_marginal_var = np.empty(P)
    for i in range(P):
        signal = params.gamma[i] * (field @ footprints[i])
        sig_var = float(signal.var())
        if sig_var == 0.0 and np.isfinite(design.snr[i]):
            raise DataError(
                f"proxy {i} has a zero-variance signal; finite SNR is unachievable"
            )
        m2 = sig_var / design.snr[i] if np.isfinite(design.snr[i]) else 0.0
        noise_marginal_var[i] = m2
        phi = params.proxy_ar[i]
        if m2 == 0.0:
            values[:, i] = signal
        elif phi == 0.0:
            values[:, i] = signal + np.sqrt(m2) * rng.standard_normal(T)
        else:
            values[:, i] = signal + _ar_noise_on_runs(
                np.ones(T, dtype=bool), np.sqrt(m2), phi, rng, T
            )
    panel = ProxyPanel(values=values, mask=mask, footprints=footprints)
    return ProxyPanelResult(panel=panel, noise_marginal_var=noise_marginal_var)


def simulate_panel_values(params: Params, latents: LatentStates,
                          footprints: np.ndarray, mask: np.ndarray,
                          proxy_ar_enabled: bool, rng) -> np.ndarray:
    """Draw panel values from the model's own data level (run-restart AR).

    Unobserved cells are left at zero; they are never read downstream.
    """
    T, P = mask.shape
    field = latents.temperature_field()
    values = np.zeros((T, P))
    for i in range(P):
        signal = params.gamma[i] * (field @ footprints[i])
        phi = params.proxy_ar[i] if proxy_ar_enabled else 0.0
        marginal_sd = np.sqrt(params.proxy_noise_var[i] / (1.0 - phi**2))
        u = _ar_noise_on_runs(mask[:, i], marginal_sd, phi, rng, T)
        values[mask[:, i], i] = signal[mask[:, i]] + u[mask[:, i]]
    return values


def simulate_instrumental_values(params: Params, latents: LatentStates,
                                 mask: np.ndarray, obs_sd: float, rng) -> np.ndarray:
    field = latents.temperature_field()
    obs = np.zeros_like(field)
    n = int(mask.sum())
    obs[mask] = field[mask] + obs_sd * rng.standard_normal((n, field.shape[1]))
    return obs


def simulate_dataset(design: PseudoproxyDesign, rng) -> tuple[SimulatedTruth, Dataset]:
    """One full replicate: truth plus the Dataset handed to inference."""
    truth = simulate_truth(design, rng)
    panel = generate_proxies(truth, design, rng).panel
    data = Dataset(panel=panel, forcings=truth.forcings, instrumental=truth.instrumental)
    return truth, data


def draw_prior_params(cfg: ModelConfig, n_proxies: int, rng) -> Params:
    """One draw of Params from the configured priors (used by SBC/Geweke)."""
    pri = cfg.priors
    G = cfg.grid.n_cells
    gamma_var = 1.0 / rng.gamma(pri.gamma_var_shape, 1.0 / pri.gamma_var_scale)
    gamma_mean = pri.gamma_mean_loc + pri.gamma_mean_scale * rng.standard_normal()
    gamma = gamma_mean + np.sqrt(gamma_var) * rng.standard_normal(n_proxies)
    noise = 1.0 / rng.gamma(pri.noise_shape, 1.0 / pri.noise_scale, size=n_proxies)
    proxy_ar = (
        rng.uniform(-1.0, 1.0, size=n_proxies)
        if cfg.proxy_ar_enabled else np.zeros(n_proxies)
    )
    beta = np.asarray(pri.coeff_loc) + np.asarray(pri.coeff_scale) * rng.standard_normal(4)
    nh_ar = rng.uniform(-1.0, 1.0)
    nh_var = 1.0 / rng.gamma(pri.nh_var_shape, 1.0 / pri.nh_var_scale)
    Sigma = np.atleast_2d(
        invwishart.rvs(df=cfg.wishart_dof(), scale=cfg.wishart_scale_matrix(),
                       random_state=rng)
    )

    def trunc(loc, scale):
        a, b = ndtr((-1.0 - loc) / scale), ndtr((1.0 - loc) / scale)
        return loc + scale * ndtri(rng.uniform(a, b))

    if cfg.a_structure == "scalar":
        A = trunc(pri.ar_loc, pri.ar_scale) * np.eye(G)
    elif cfg.a_structure == "diagonal":
        A = np.diag([trunc(pri.ar_loc, pri.ar_scale) for _ in range(G)])
    else:
        Ls = np.linalg.cholesky(Sigma)
        for _ in range(1000):
            A = pri.ar_loc * np.eye(G) + Ls @ rng.standard_normal((G, G)) * pri.ar_scale
            if spectral_radius(A) < 1.0:
                break
        else:
            raise DataError("could not draw a stationary transition matrix from the prior")
    return Params(
        gamma=gamma, gamma_mean=gamma_mean, gamma_var=gamma_var,
        proxy_noise_var=noise, proxy_ar=proxy_ar,
        mu=float(beta[0]), omega=beta[1:], nh_ar=float(nh_ar), nh_var=float(nh_var),
        A=A, Sigma=Sigma,
    )
