"""Core types, configuration, and exact densities of the hierarchical model.

The model has three levels.  Proxies are noisy linear functionals of a
gridded temperature field; the field deviations follow a stationary VAR(1)
around a hemispheric mean level; that mean level is a linear response to
external forcing series plus a stationary AR(1) remainder.  Everything in
this module is a pure function over immutable value types, so objects can
be shared freely between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import cholesky as _sp_cholesky
from scipy.linalg import solve_discrete_lyapunov
from scipy.special import gammaln, ndtr
from scipy.stats import invwishart


class DataError(ValueError):
    """Malformed or inconsistent input data."""


class NumericalError(RuntimeError):
    """A linear-algebra or sampling step failed beyond repair."""


def _readonly(arr, dtype=float):
    out = np.array(arr, dtype=dtype)
    out.setflags(write=False)
    return out


# ---------------------------------------------------------------------------
# Value types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Spatial grid with the area weights that define the hemispheric mean."""

    area_weights: np.ndarray

    def __post_init__(self):
        w = _readonly(self.area_weights)
        if w.ndim != 1 or w.size < 1:
            raise ValueError("area_weights must be a nonempty 1-d vector")
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ValueError("area_weights must be finite and nonnegative")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError("area_weights must sum to 1 (tolerance 1e-12)")
        object.__setattr__(self, "area_weights", w)

    @property
    def n_cells(self) -> int:
        return self.area_weights.size


@dataclass(frozen=True)
class ProxyPanel:
    """Proxy observations with missingness mask and known spatial footprints.

    values[t, i] is ignored wherever mask[t, i] is False; masked cells may
    hold any placeholder (including NaN) and must never influence results.
    """

    values: np.ndarray      # (T, P)
    mask: np.ndarray        # (T, P) bool
    footprints: np.ndarray  # (P, G)

    def __post_init__(self):
        values = _readonly(self.values)
        mask = _readonly(self.mask, dtype=bool)
        footprints = _readonly(self.footprints)
        if values.ndim != 2 or mask.shape != values.shape:
            raise ValueError("values and mask must be T x P with identical shape")
        if footprints.ndim != 2 or footprints.shape[0] != values.shape[1]:
            raise ValueError("footprints must be P x G")
        if not np.all(np.isfinite(footprints)):
            raise ValueError("footprints must be finite")
        if np.any(np.all(footprints == 0.0, axis=1)):
            raise ValueError("each footprint must have at least one nonzero weight")
        if not np.all(np.isfinite(values[mask])):
            raise ValueError("observed proxy values must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "footprints", footprints)

    @property
    def n_years(self) -> int:
        return self.values.shape[0]

    @property
    def n_proxies(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ForcingSeries:
    """Annual external drivers: solar irradiance, volcanic loading, CO2."""

    years: np.ndarray     # (T,) int, contiguous
    solar: np.ndarray     # (T,)
    volcanic: np.ndarray  # (T,)
    co2: np.ndarray       # (T,)

    def __post_init__(self):
        years = _readonly(self.years, dtype=int)
        cols = {}
        for name in ("solar", "volcanic", "co2"):
            col = _readonly(getattr(self, name))
            if col.shape != years.shape:
                raise ValueError(f"{name} must match years in length")
            if not np.all(np.isfinite(col)):
                raise ValueError(f"{name} must be finite")
            cols[name] = col
        if years.ndim != 1 or years.size < 1:
            raise ValueError("years must be a nonempty 1-d vector")
        if years.size > 1 and not np.all(np.diff(years) == 1):
            raise ValueError("years must be contiguous with step 1")
        object.__setattr__(self, "years", years)
        for name, col in cols.items():
            object.__setattr__(self, name, col)

    @property
    def n_years(self) -> int:
        return self.years.size

    def design_matrix(self) -> np.ndarray:
        """T x 4 regression design (intercept, solar, volcanic, co2)."""
        return np.column_stack(
            [np.ones(self.n_years), self.solar, self.volcanic, self.co2]
        )


@dataclass(frozen=True)
class InstrumentalSeries:
    """Gridded instrumental observations anchoring proxy calibration.

    obs[t] is a full grid snapshot observed with iid N(0, obs_sd**2) noise
    per cell; mask[t] marks the years with instrumental coverage.
    """

    obs: np.ndarray     # (T, G)
    mask: np.ndarray    # (T,) bool
    obs_sd: float

    def __post_init__(self):
        obs = _readonly(self.obs)
        mask = _readonly(self.mask, dtype=bool)
        if obs.ndim != 2 or mask.shape != (obs.shape[0],):
            raise ValueError("obs must be T x G with a length-T mask")
        if not (np.isfinite(self.obs_sd) and self.obs_sd > 0):
            raise ValueError("obs_sd must be positive")
        if not np.all(np.isfinite(obs[mask])):
            raise ValueError("instrumental values must be finite on observed years")
        object.__setattr__(self, "obs", obs)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "obs_sd", float(self.obs_sd))

    @property
    def n_years(self) -> int:
        return self.obs.shape[0]


def spectral_radius(A: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(np.atleast_2d(A)))))


@dataclass(frozen=True)
class Params:
    """All non-latent unknowns of the hierarchy.

    Construction enforces the type invariants: AR coefficients in (-1, 1),
    variances strictly positive, transition matrix stationary, innovation
    covariance symmetric positive definite.
    """

    gamma: np.ndarray            # (P,) proxy calibration coefficients
    gamma_mean: float            # hierarchical mean of gamma
    gamma_var: float             # hierarchical variance of gamma
    proxy_noise_var: np.ndarray  # (P,) innovation variances of proxy errors
    proxy_ar: np.ndarray         # (P,) AR(1) coefficients of proxy errors
    mu: float                    # hemispheric mean level
    omega: np.ndarray            # (3,) forcing coefficients (solar, volcanic, co2)
    nh_ar: float                 # AR(1) coefficient of the mean-level remainder
    nh_var: float                # innovation variance of the remainder
    A: np.ndarray                # (G, G) field transition matrix
    Sigma: np.ndarray            # (G, G) field innovation covariance

    def __post_init__(self):
        gamma = _readonly(self.gamma)
        noise = _readonly(self.proxy_noise_var)
        phi = _readonly(self.proxy_ar)
        omega = _readonly(self.omega)
        A = _readonly(np.atleast_2d(self.A))
        Sigma = _readonly(np.atleast_2d(self.Sigma))
        if not (gamma.shape == noise.shape == phi.shape) or gamma.ndim != 1:
            raise ValueError("gamma, proxy_noise_var, proxy_ar must share shape (P,)")
        if omega.shape != (3,):
            raise ValueError("omega must have shape (3,)")
        for name, val in (("gamma_var", self.gamma_var), ("nh_var", self.nh_var)):
            if not (np.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive")
        if np.any(noise <= 0) or not np.all(np.isfinite(noise)):
            raise ValueError("proxy noise variances must be positive")
        if np.any(np.abs(phi) >= 1):
            raise ValueError("proxy AR coefficients must lie in (-1, 1)")
        if not (abs(self.nh_ar) < 1):
            raise ValueError("nh_ar must lie in (-1, 1)")
        if A.shape != Sigma.shape or A.shape[0] != A.shape[1]:
            raise ValueError("A and Sigma must be square with matching shape")
        if not np.all(np.isfinite(A)) or spectral_radius(A) >= 1.0:
            raise ValueError("A must be finite with spectral radius < 1")
        if np.max(np.abs(Sigma - Sigma.T)) > 1e-10:
            raise ValueError("Sigma must be symmetric")
        try:
            np.linalg.cholesky(Sigma)
        except np.linalg.LinAlgError:
            raise ValueError("Sigma must be positive definite") from None
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "proxy_noise_var", noise)
        object.__setattr__(self, "proxy_ar", phi)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "Sigma", Sigma)
        object.__setattr__(self, "gamma_mean", float(self.gamma_mean))
        object.__setattr__(self, "gamma_var", float(self.gamma_var))
        object.__setattr__(self, "mu", float(self.mu))
        object.__setattr__(self, "nh_ar", float(self.nh_ar))
        object.__setattr__(self, "nh_var", float(self.nh_var))

    @property
    def n_proxies(self) -> int:
        return self.gamma.size

    @property
    def n_cells(self) -> int:
        return self.A.shape[0]


@dataclass(frozen=True)
class LatentStates:
    """Latent field deviations, mean-level remainder, and mean-level path.

    y must equal the deterministic mean response plus w; the sampler
    maintains this identity exactly and audits enforce it to 1e-12.
    """

    v: np.ndarray  # (T, G)
    w: np.ndarray  # (T,)
    y: np.ndarray  # (T,)

    def __post_init__(self):
        v = _readonly(np.atleast_2d(self.v))
        w = _readonly(self.w)
        y = _readonly(self.y)
        if v.ndim != 2 or w.shape != (v.shape[0],) or y.shape != w.shape:
            raise ValueError("v must be T x G with length-T w and y")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(w)) and np.all(np.isfinite(y))):
            raise ValueError("latent states must be finite")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "y", y)

    @property
    def n_years(self) -> int:
        return self.v.shape[0]

    def temperature_field(self) -> np.ndarray:
        """T x G field: mean level plus deviations."""
        return self.y[:, None] + self.v

    def nh_series(self, weights: np.ndarray) -> np.ndarray:
        """Area-weighted hemispheric mean of the field (the reported series)."""
        return self.temperature_field() @ np.asarray(weights, dtype=float)


@dataclass(frozen=True)
class Dataset:
    """Bundle of everything conditioned on during inference."""

    panel: ProxyPanel
    forcings: ForcingSeries
    instrumental: InstrumentalSeries | None = None


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PriorConfig:
    """Hyperparameters of every prior in the hierarchy.

    Normal priors are (loc, scale); inverse-gamma priors are (shape, scale);
    the innovation covariance takes an inverse-Wishart (dof, scale matrix).
    AR coefficients of the proxy errors and of the mean-level remainder get
    flat priors on (-1, 1); diagonal/scalar transition entries get a normal
    prior truncated to (-1, 1).
    """

    gamma_mean_loc: float = 1.0
    gamma_mean_scale: float = 1.0
    gamma_var_shape: float = 3.0
    gamma_var_scale: float = 0.5
    noise_shape: float = 3.0
    noise_scale: float = 2.0
    coeff_loc: tuple = (0.0, 0.0, 0.0, 0.0)
    coeff_scale: tuple = (1.0, 1.0, 1.0, 1.0)
    nh_var_shape: float = 3.0
    nh_var_scale: float = 0.5
    ar_loc: float = 0.2
    ar_scale: float = 0.4
    wishart_dof: float | None = None      # default G + 4
    wishart_scale: float = 0.5            # scale matrix = wishart_scale * I * (dof - G - 1)


@dataclass(frozen=True)
class SamplerConfig:
    n_chains: int = 2
    n_iter: int = 2000
    burn_in: int = 1000
    thin: int = 1
    seed: int = 0
    mh_scale: float = 0.4
    adapt_mh: bool = True


@dataclass(frozen=True)
class ModelConfig:
    """Dimensions, priors, sampler settings, and structural switches."""

    grid: GridSpec
    priors: PriorConfig = field(default_factory=PriorConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    proxy_ar_enabled: bool = False
    a_structure: str = "diagonal"          # scalar | diagonal | full
    calibration: tuple | None = None       # (first_year, last_year) inclusive
    initial_state_mode: str = "stationary"  # stationary | fixed
    fixed_v_var: float = 1.0
    fixed_w_var: float = 1.0
    init_params: Params | None = None

    def wishart_dof(self) -> float:
        dof = self.priors.wishart_dof
        return float(dof) if dof is not None else self.grid.n_cells + 4.0

    def wishart_scale_matrix(self) -> np.ndarray:
        G = self.grid.n_cells
        return self.priors.wishart_scale * (self.wishart_dof() - G - 1) * np.eye(G)

    def calibration_mask(self, years: np.ndarray) -> np.ndarray:
        """Boolean mask of the calibration window over a span of years."""
        years = np.asarray(years)
        if self.calibration is None:
            return np.zeros(years.shape, dtype=bool)
        lo, hi = self.calibration
        return (years >= lo) & (years <= hi)


@dataclass(frozen=True)
class ValidationReport:
    ok: bool
    violations: tuple

    def __str__(self):
        if self.ok:
            return "configuration valid"
        return "configuration invalid:\n" + "\n".join(f"  - {v}" for v in self.violations)


def validate_config(
    cfg: ModelConfig,
    panel: ProxyPanel,
    forcings: ForcingSeries,
    instrumental: InstrumentalSeries | None = None,
) -> ValidationReport:
    """Cross-check configuration against data shapes; report, never raise."""
    bad = []
    G = cfg.grid.n_cells
    T = forcings.n_years

    if panel.n_years != T:
        bad.append(f"panel spans {panel.n_years} years but forcings span {T}")
    if panel.footprints.shape[1] != G:
        bad.append(
            f"footprint dimension {panel.footprints.shape[1]} does not match grid size {G}"
        )

    p = cfg.priors
    for name, val in (
        ("gamma_mean_scale", p.gamma_mean_scale),
        ("gamma_var_shape", p.gamma_var_shape),
        ("gamma_var_scale", p.gamma_var_scale),
        ("noise_shape", p.noise_shape),
        ("noise_scale", p.noise_scale),
        ("nh_var_shape", p.nh_var_shape),
        ("nh_var_scale", p.nh_var_scale),
        ("ar_scale", p.ar_scale),
        ("wishart_scale", p.wishart_scale),
    ):
        if not (np.isfinite(val) and val > 0):
            bad.append(f"prior {name} must be positive, got {val}")
    if len(p.coeff_loc) != 4 or len(p.coeff_scale) != 4:
        bad.append("coeff_loc and coeff_scale must have length 4")
    elif any(s <= 0 for s in p.coeff_scale):
        bad.append("coeff_scale entries must be positive")
    if cfg.wishart_dof() <= G + 1:
        bad.append(f"inverse-Wishart dof must exceed G+1 = {G + 1}, got {cfg.wishart_dof()}")

    s = cfg.sampler
    if s.burn_in < 0 or s.n_iter < s.burn_in:
        bad.append(f"need n_iter >= burn_in >= 0, got n_iter={s.n_iter} burn_in={s.burn_in}")
    if s.thin < 1:
        bad.append(f"thin must be >= 1, got {s.thin}")
    if s.n_chains < 1:
        bad.append(f"n_chains must be >= 1, got {s.n_chains}")
    if not (np.isfinite(s.mh_scale) and s.mh_scale > 0):
        bad.append(f"mh_scale must be positive, got {s.mh_scale}")

    if cfg.a_structure not in ("scalar", "diagonal", "full"):
        bad.append(f"unknown a_structure {cfg.a_structure!r}")
    if cfg.initial_state_mode not in ("stationary", "fixed"):
        bad.append(f"unknown initial_state_mode {cfg.initial_state_mode!r}")
    if cfg.initial_state_mode == "fixed":
        if cfg.fixed_v_var <= 0 or cfg.fixed_w_var <= 0:
            bad.append("fixed initial-state variances must be positive")

    if cfg.calibration is not None:
        lo, hi = cfg.calibration
        if lo > hi:
            bad.append(f"calibration window {cfg.calibration} is empty")
        elif lo < forcings.years[0] or hi > forcings.years[-1]:
            bad.append(f"calibration window {cfg.calibration} falls outside the record")

    if instrumental is not None:
        if instrumental.n_years != T:
            bad.append("instrumental record length does not match forcings")
        if instrumental.obs.shape[1] != G:
            bad.append("instrumental grid size does not match configuration")
        obs_years = np.flatnonzero(instrumental.mask)
        if obs_years.size:
            contiguous_tail = (
                np.all(np.diff(obs_years) == 1) and obs_years[-1] == T - 1
            )
            if not contiguous_tail:
                bad.append("instrumental coverage must be a contiguous tail window")

    if cfg.init_params is not None:
        q = cfg.init_params
        if q.n_proxies != panel.n_proxies:
            bad.append("init_params proxy dimension does not match panel")
        if q.n_cells != G:
            bad.append("init_params grid dimension does not match configuration")
        # Params construction already enforces stationarity/SPD, but a config
        # assembled from raw deserialization may bypass it.
        if spectral_radius(q.A) >= 1.0:
            bad.append("init_params transition matrix is not stationary")

    return ValidationReport(ok=not bad, violations=tuple(bad))


# ---------------------------------------------------------------------------
# Elementary model maps
# ---------------------------------------------------------------------------

def var_step(A: np.ndarray, v_prev: np.ndarray, e: np.ndarray) -> np.ndarray:
    """One step of the field VAR: A @ v_prev + e."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    v_prev = np.asarray(v_prev, dtype=float)
    e = np.asarray(e, dtype=float)
    if A.shape[1] != v_prev.shape[-1] or v_prev.shape != e.shape:
        raise ValueError("shape mismatch in var_step")
    return v_prev @ A.T + e


def nh_mean_step(mu: float, omega, forcing_t, w_t: float) -> float:
    """Mean level at one time: mu + forcings . omega + remainder."""
    omega = np.asarray(omega, dtype=float)
    forcing_t = np.asarray(forcing_t, dtype=float)
    return float(mu + forcing_t @ omega + w_t)


def nh_mean_path(mu: float, omega, forcings: ForcingSeries) -> np.ndarray:
    """Deterministic part of the mean level over the whole record."""
    omega = np.asarray(omega, dtype=float)
    return mu + forcings.design_matrix()[:, 1:] @ omega


def proxy_mean(gamma_i: float, h_i: np.ndarray, T_t: np.ndarray) -> float:
    """Noise-free proxy expectation gamma_i * (h_i . field)."""
    h_i = np.asarray(h_i, dtype=float)
    T_t = np.asarray(T_t, dtype=float)
    if h_i.shape != T_t.shape:
        raise ValueError("footprint and field dimensions do not match")
    return float(gamma_i * (h_i @ T_t))


def stationary_var_cov(A: np.ndarray, Sigma: np.ndarray) -> np.ndarray:
    """Stationary covariance of the VAR(1), via the discrete Lyapunov equation."""
    A = np.atleast_2d(A)
    Sigma = np.atleast_2d(Sigma)
    if spectral_radius(A) >= 1.0:
        raise NumericalError("transition matrix is not stationary")
    V = solve_discrete_lyapunov(A, Sigma)
    return 0.5 * (V + V.T)


def initial_state_moments(params: Params, cfg: ModelConfig):
    """Mean-zero initial law of (v_1, w_1) under the configured convention."""
    G = params.n_cells
    if cfg.initial_state_mode == "fixed":
        v_cov = cfg.fixed_v_var * np.eye(G)
        w_var = cfg.fixed_w_var
    else:
        v_cov = stationary_var_cov(params.A, params.Sigma)
        w_var = params.nh_var / (1.0 - params.nh_ar**2)
    return v_cov, w_var


# ---------------------------------------------------------------------------
# Log densities
# ---------------------------------------------------------------------------

_LOG2PI = math.log(2.0 * math.pi)


def _norm_logpdf(x, mean, var):
    x = np.asarray(x, dtype=float)
    return -0.5 * (_LOG2PI + np.log(var) + (x - mean) ** 2 / var)


def _mvn_logpdf_zero(x: np.ndarray, cov: np.ndarray) -> float:
    """Log density of N(0, cov) at x, via Cholesky."""
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise NumericalError("covariance not positive definite in log density") from None
    z = np.linalg.solve(L, x)
    return float(-0.5 * (x.size * _LOG2PI + z @ z) - np.log(np.diag(L)).sum())


def _invgamma_logpdf(x, shape, scale):
    x = np.asarray(x, dtype=float)
    return shape * np.log(scale) - gammaln(shape) - (shape + 1) * np.log(x) - scale / x


def _truncnorm_logpdf(x, loc, scale, lo=-1.0, hi=1.0):
    a = (lo - loc) / scale
    b = (hi - loc) / scale
    z = (np.asarray(x, dtype=float) - loc) / scale
    return _norm_logpdf(z, 0.0, 1.0) - np.log(scale) - np.log(ndtr(b) - ndtr(a))


def _matrix_normal_logpdf(X, M, row_cov, col_cov):
    """Matrix-normal density with given row and column covariances."""
    X = np.atleast_2d(X)
    n, p = X.shape
    E = X - M
    Lr = np.linalg.cholesky(row_cov)
    Lc = np.linalg.cholesky(col_cov)
    Z = np.linalg.solve(Lr, E)
    Z = np.linalg.solve(Lc, Z.T)
    return float(
        -0.5 * (n * p * _LOG2PI + (Z**2).sum())
        - p * np.log(np.diag(Lr)).sum()
        - n * np.log(np.diag(Lc)).sum()
    )


def proxy_obs_loglik(
    x: np.ndarray,
    signal: np.ndarray,
    mask: np.ndarray,
    noise_var: float,
    ar: float,
) -> float:
    """Log likelihood of one proxy's observed cells given its noise model.

    Errors are AR(1) within each contiguous observed run; each run starts
    from the stationary error law.  With ar == 0 this is the iid case.
    """
    obs_idx = np.flatnonzero(mask)
    if obs_idx.size == 0:
        return 0.0
    resid = x[obs_idx] - signal[obs_idx]
    if ar == 0.0:
        return float(_norm_logpdf(resid, 0.0, noise_var).sum())
    total = 0.0
    run_start = np.concatenate(([True], np.diff(obs_idx) > 1))
    stat_var = noise_var / (1.0 - ar**2)
    for k in range(obs_idx.size):
        if run_start[k]:
            total += float(_norm_logpdf(resid[k], 0.0, stat_var))
        else:
            total += float(_norm_logpdf(resid[k], ar * resid[k - 1], noise_var))
    return total


def log_joint(
    params: Params,
    latents: LatentStates,
    data: Dataset,
    cfg: ModelConfig,
) -> float:
    """Log of the full joint density: priors, process, and observed-data terms.

    Observed-data terms are included only where the masks are true, so the
    value is invariant to whatever is stored in masked-out cells.  Raises
    instead of returning -inf: all inputs are required to satisfy their type
    invariants, under which the result is finite.
    """
    p = cfg.priors
    G = params.n_cells
    mean_path = nh_mean_path(params.mu, params.omega, data.forcings)
    if np.max(np.abs(latents.y - mean_path - latents.w)) > 1e-8:
        raise ValueError("latent y path is inconsistent with mu, omega, and w")
    field_path = latents.temperature_field()

    # parameter priors
    total = float(_norm_logpdf(params.gamma, params.gamma_mean, params.gamma_var).sum())
    total += float(_norm_logpdf(params.gamma_mean, p.gamma_mean_loc, p.gamma_mean_scale**2))
    total += float(_invgamma_logpdf(params.gamma_var, p.gamma_var_shape, p.gamma_var_scale))
    total += float(_invgamma_logpdf(params.proxy_noise_var, p.noise_shape, p.noise_scale).sum())
    if cfg.proxy_ar_enabled:
        total += params.n_proxies * math.log(0.5)  # flat on (-1, 1)
    beta = np.concatenate(([params.mu], params.omega))
    total += float(
        _norm_logpdf(beta, np.asarray(p.coeff_loc), np.asarray(p.coeff_scale) ** 2).sum()
    )
    total += math.log(0.5)  # nh_ar flat on (-1, 1)
    total += float(_invgamma_logpdf(params.nh_var, p.nh_var_shape, p.nh_var_scale))
    if cfg.a_structure == "scalar":
        total += float(_truncnorm_logpdf(params.A[0, 0], p.ar_loc, p.ar_scale))
    elif cfg.a_structure == "diagonal":
        total += float(_truncnorm_logpdf(np.diag(params.A), p.ar_loc, p.ar_scale).sum())
    else:
        # stationarity truncation constant omitted (constant in A)
        total += _matrix_normal_logpdf(
            params.A, p.ar_loc * np.eye(G), params.Sigma, p.ar_scale**2 * np.eye(G)
        )
    total += float(
        invwishart.logpdf(params.Sigma, df=cfg.wishart_dof(), scale=cfg.wishart_scale_matrix())
    )

    # process level
    v_cov0, w_var0 = initial_state_moments(params, cfg)
    total += _mvn_logpdf_zero(latents.v[0], v_cov0)
    innov = latents.v[1:] - latents.v[:-1] @ params.A.T
    if innov.size:
        L = np.linalg.cholesky(params.Sigma)
        z = np.linalg.solve(L, innov.T)
        total += float(
            -0.5 * (innov.size * _LOG2PI + (z**2).sum())
            - innov.shape[0] * np.log(np.diag(L)).sum()
        )
    total += float(_norm_logpdf(latents.w[0], 0.0, w_var0))
    total += float(
        _norm_logpdf(latents.w[1:], params.nh_ar * latents.w[:-1], params.nh_var).sum()
    )

    # observations
    for i in range(params.n_proxies):
        signal = params.gamma[i] * (field_path @ data.panel.footprints[i])
        ar = params.proxy_ar[i] if cfg.proxy_ar_enabled else 0.0
        total += proxy_obs_loglik(
            data.panel.values[:, i],
            signal,
            data.panel.mask[:, i],
            float(params.proxy_noise_var[i]),
            float(ar),
        )
    if data.instrumental is not None:
        inst = data.instrumental
        obs_years = inst.mask
        if np.any(obs_years):
            resid = inst.obs[obs_years] - field_path[obs_years]
            total += float(_norm_logpdf(resid, 0.0, inst.obs_sd**2).sum())

    if not np.isfinite(total):
        raise NumericalError("log joint evaluated to a non-finite value")
    return total
