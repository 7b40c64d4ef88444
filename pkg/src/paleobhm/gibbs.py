"""Gibbs sampler: full-conditional updates and the chain driver.

Scan order is fixed: latents, gamma (per proxy), gamma hyperparameters,
proxy noise, [proxy AR], forcing coefficients, mean-level AR, A, Sigma.
Conjugate updates are exact full conditionals; the two AR coefficients use
Metropolis-Hastings steps whose proposal scales adapt only during burn-in.
In stationary initialization the A and Sigma quadratic forms drop the t=1
term (conditioning on v_1); with initial_state_mode="fixed" every update is
an exact full conditional, which is what the simulator-consistency checks
run under.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import invwishart, rankdata

from .model import (
    DataError,
    Dataset,
    LatentStates,
    ModelConfig,
    Params,
    nh_mean_path,
    validate_config,
)
from .statespace import draw_latents

_COEFF_NAMES = ("intercept", "solar", "volcanic", "co2")


@dataclass
class ChainState:
    """Mutable sampler state for one chain."""

    params: Params
    latents: LatentStates
    cfg: ModelConfig
    iteration: int = 0
    stream_id: int = 0
    mh_scale_proxy: np.ndarray | None = None   # (P,) proposal sd for each phi_i
    mh_scale_nh: float = 0.4
    mh_accept_proxy: np.ndarray | None = None  # acceptance counts
    mh_accept_nh: int = 0
    last_accept_proxy: np.ndarray | None = None  # 0/1 for the latest iteration
    last_accept_nh: float = 0.0
    a_rejections: int = 0
    a_cap_hits: int = 0


@dataclass
class DrawStore:
    """Thinned post-burn-in draws for one chain, as packed arrays."""

    gamma: np.ndarray            # (n, P)
    gamma_mean: np.ndarray       # (n,)
    gamma_var: np.ndarray        # (n,)
    proxy_noise_var: np.ndarray  # (n, P)
    proxy_ar: np.ndarray         # (n, P)
    mu: np.ndarray               # (n,)
    omega: np.ndarray            # (n, 3)
    nh_ar: np.ndarray            # (n,)
    nh_var: np.ndarray           # (n,)
    A: np.ndarray                # (n, G, G)
    Sigma: np.ndarray            # (n, G, G)
    v: np.ndarray                # (n, T, G)
    w: np.ndarray                # (n, T)
    y: np.ndarray                # (n, T)
    nh_recon: np.ndarray         # (n, T) area-weighted field mean
    meta: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.gamma.shape[0]

    @classmethod
    def allocate(cls, n, T, P, G, meta=None):
        return cls(
            gamma=np.empty((n, P)), gamma_mean=np.empty(n), gamma_var=np.empty(n),
            proxy_noise_var=np.empty((n, P)), proxy_ar=np.empty((n, P)),
            mu=np.empty(n), omega=np.empty((n, 3)), nh_ar=np.empty(n),
            nh_var=np.empty(n), A=np.empty((n, G, G)), Sigma=np.empty((n, G, G)),
            v=np.empty((n, T, G)), w=np.empty((n, T)), y=np.empty((n, T)),
            nh_recon=np.empty((n, T)), meta=dict(meta or {}),
        )

    def record(self, slot: int, state: ChainState, weights: np.ndarray):
        p, lat = state.params, state.latents
        self.gamma[slot] = p.gamma
        self.gamma_mean[slot] = p.gamma_mean
        self.gamma_var[slot] = p.gamma_var
        self.proxy_noise_var[slot] = p.proxy_noise_var
        self.proxy_ar[slot] = p.proxy_ar
        self.mu[slot] = p.mu
        self.omega[slot] = p.omega
        self.nh_ar[slot] = p.nh_ar
        self.nh_var[slot] = p.nh_var
        self.A[slot] = p.A
        self.Sigma[slot] = p.Sigma
        self.v[slot] = lat.v
        self.w[slot] = lat.w
        self.y[slot] = lat.y
        self.nh_recon[slot] = lat.nh_series(weights)

    def scalar_names(self):
        n, P = self.gamma.shape
        G = self.A.shape[1]
        names = ["mu", "omega_solar", "omega_volcanic", "omega_co2",
                 "nh_ar", "nh_var", "gamma_mean", "gamma_var"]
        names += [f"gamma[{i}]" for i in range(P)]
        names += [f"proxy_noise_var[{i}]" for i in range(P)]
        names += [f"proxy_ar[{i}]" for i in range(P)]
        names += [f"A[{g},{h}]" for g in range(G) for h in range(G)]
        names += [f"Sigma[{g},{h}]" for g in range(G) for h in range(g, G)]
        return names

    def scalar_series(self, name: str) -> np.ndarray:
        if name in ("mu", "nh_ar", "nh_var", "gamma_mean", "gamma_var"):
            return getattr(self, name)
        if name.startswith("omega_"):
            idx = {"solar": 0, "volcanic": 1, "co2": 2}[name[6:]]
            return self.omega[:, idx]
        base, _, rest = name.partition("[")
        idx = rest.rstrip("]")
        if base in ("gamma", "proxy_noise_var", "proxy_ar"):
            return getattr(self, base)[:, int(idx)]
        if base in ("A", "Sigma"):
            g, h = (int(s) for s in idx.split(","))
            return getattr(self, base)[:, g, h]
        if base == "nh_recon":
            return self.nh_recon[:, int(idx)]
        raise KeyError(name)


# ---------------------------------------------------------------------------
# small samplers
# ---------------------------------------------------------------------------

def _draw_invgamma(shape, scale, rng):
    return 1.0 / rng.gamma(shape, 1.0 / scale)


def _draw_truncnorm(loc, scale, lo, hi, rng):
    a = ndtr((lo - loc) / scale)
    b = ndtr((hi - loc) / scale)
    u = rng.uniform(a, b)
    return loc + scale * ndtri(u)


def _observed_runs(mask):
    """Maximal runs of True in a boolean vector, as (start, stop) pairs."""
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate(([idx[0]], idx[breaks + 1]))
    stops = np.concatenate((idx[breaks] + 1, [idx[-1] + 1]))
    return list(zip(starts.tolist(), stops.tolist()))


def _prewhiten(series, runs, phi):
    """AR(1)-whitening of a series over observed runs (linear in the series).

    The first cell of each run is scaled by sqrt(1 - phi^2) so every output
    has noise variance sigma^2 when the raw errors are stationary AR(1).
    """
    parts = []
    root = math.sqrt(1.0 - phi**2)
    for s, e in runs:
        seg = series[s:e]
        out = np.empty(e - s)
        out[0] = root * seg[0]
        out[1:] = seg[1:] - phi * seg[:-1]
        parts.append(out)
    return np.concatenate(parts) if parts else np.zeros(0)


def _proxy_signal(latents: LatentStates, footprint: np.ndarray) -> np.ndarray:
    """h_i . T_t for all t (unit-gamma signal)."""
    return latents.v @ footprint + footprint.sum() * latents.y


# ---------------------------------------------------------------------------
# conditional moments (exposed for targeting tests) and update ops
# ---------------------------------------------------------------------------

def gamma_conditional(state: ChainState, data: Dataset, i: int):
    """Posterior (mean, var) of gamma_i given everything else."""
    p = state.params
    runs = _observed_runs(data.panel.mask[:, i])
    phi = p.proxy_ar[i] if state.cfg.proxy_ar_enabled else 0.0
    z = _prewhiten(_proxy_signal(state.latents, data.panel.footprints[i]), runs, phi)
    x = _prewhiten(data.panel.values[:, i], runs, phi)
    prec = 1.0 / p.gamma_var + (z @ z) / p.proxy_noise_var[i]
    num = p.gamma_mean / p.gamma_var + (z @ x) / p.proxy_noise_var[i]
    return num / prec, 1.0 / prec


def update_gamma(state: ChainState, data: Dataset, rng: np.random.Generator):
    gamma = state.params.gamma.copy()
    for i in range(state.params.n_proxies):
        mean, var = gamma_conditional(state, data, i)
        gamma[i] = mean + math.sqrt(var) * rng.standard_normal()
    state.params = replace(state.params, gamma=gamma)


def gamma_mean_conditional(state: ChainState):
    p, pri = state.params, state.cfg.priors
    prec = 1.0 / pri.gamma_mean_scale**2 + p.n_proxies / p.gamma_var
    num = pri.gamma_mean_loc / pri.gamma_mean_scale**2 + p.gamma.sum() / p.gamma_var
    return num / prec, 1.0 / prec


def gamma_var_conditional(state: ChainState):
    p, pri = state.params, state.cfg.priors
    shape = pri.gamma_var_shape + 0.5 * p.n_proxies
    scale = pri.gamma_var_scale + 0.5 * ((p.gamma - p.gamma_mean) ** 2).sum()
    return shape, scale


def update_gamma_hyper(state: ChainState, rng: np.random.Generator):
    mean, var = gamma_mean_conditional(state)
    new_mean = mean + math.sqrt(var) * rng.standard_normal()
    state.params = replace(state.params, gamma_mean=new_mean)
    shape, scale = gamma_var_conditional(state)
    state.params = replace(state.params, gamma_var=_draw_invgamma(shape, scale, rng))


def proxy_noise_conditional(state: ChainState, data: Dataset, i: int):
    p = state.params
    runs = _observed_runs(data.panel.mask[:, i])
    phi = p.proxy_ar[i] if state.cfg.proxy_ar_enabled else 0.0
    signal = p.gamma[i] * _proxy_signal(state.latents, data.panel.footprints[i])
    resid = _prewhiten(data.panel.values[:, i] - signal, runs, phi)
    pri = state.cfg.priors
    return pri.noise_shape + 0.5 * resid.size, pri.noise_scale + 0.5 * (resid @ resid)


def update_proxy_noise(state: ChainState, data: Dataset, rng: np.random.Generator):
    noise = state.params.proxy_noise_var.copy()
    for i in range(state.params.n_proxies):
        shape, scale = proxy_noise_conditional(state, data, i)
        noise[i] = _draw_invgamma(shape, scale, rng)
    state.params = replace(state.params, proxy_noise_var=noise)


def proxy_ar_log_target(state: ChainState, data: Dataset, i: int, phi: float):
    """Unnormalized log conditional of phi_i (flat prior on (-1, 1))."""
    if not -1.0 < phi < 1.0:
        return -np.inf
    p = state.params
    runs = _observed_runs(data.panel.mask[:, i])
    signal = p.gamma[i] * _proxy_signal(state.latents, data.panel.footprints[i])
    resid = data.panel.values[:, i] - signal
    s2 = p.proxy_noise_var[i]
    total = 0.0
    for s, e in runs:
        seg = resid[s:e]
        total += 0.5 * math.log(1.0 - phi**2)
        total -= 0.5 * (1.0 - phi**2) * seg[0] ** 2 / s2
        if e - s > 1:
            d = seg[1:] - phi * seg[:-1]
            total -= 0.5 * (d @ d) / s2
    return total


def update_proxy_ar(state: ChainState, data: Dataset, rng: np.random.Generator):
    accept = np.zeros(state.params.n_proxies)
    phi = state.params.proxy_ar.copy()
    for i in range(state.params.n_proxies):
        scale = float(state.mh_scale_proxy[i])
        if scale <= 0.0:
            raise ValueError(f"proposal scale for proxy_ar[{i}] must be positive")
        prop = phi[i] + scale * rng.standard_normal()
        logr = proxy_ar_log_target(state, data, i, prop) - proxy_ar_log_target(
            state, data, i, phi[i]
        )
        if math.log1p(-rng.uniform()) < logr:
            phi[i] = prop
            accept[i] = 1.0
    state.params = replace(state.params, proxy_ar=phi)
    state.mh_accept_proxy += accept
    state.last_accept_proxy = accept


def _design_matrix(data: Dataset) -> np.ndarray:
    return data.forcings.design_matrix()


def _active_columns(D: np.ndarray):
    """Indices of non-degenerate columns; errors on collinearity among them.

    All-zero columns decouple from the regression (their coefficients keep
    the prior), so they are excluded rather than treated as singular.
    """
    active = [j for j in range(D.shape[1]) if np.abs(D[:, j]).max() > 0.0]
    Da = D[:, active]
    rank = np.linalg.matrix_rank(Da)
    if rank < len(active):
        bad = [
            _COEFF_NAMES[active[k]]
            for k in range(len(active))
            if np.linalg.matrix_rank(np.delete(Da, k, axis=1)) == rank
        ]
        raise DataError(
            "collinear regression design for the mean level: " + ", ".join(bad)
        )
    return active


def coeff_conditional(state: ChainState, data: Dataset):
    """Posterior (mean, cov) of (mu, omega) given the latent y path.

    Rows are weighted by the AR(1) error law of w; the first row uses the
    initial variance of w under the configured initialization.
    """
    p, cfg = state.params, state.cfg
    pri = cfg.priors
    D = _design_matrix(data)
    active = _active_columns(D)
    y = state.latents.y
    rho, s2 = p.nh_ar, p.nh_var
    if cfg.initial_state_mode == "stationary":
        var0 = s2 / (1.0 - rho**2)
    else:
        var0 = cfg.fixed_w_var
    Dt = np.vstack([D[:1], D[1:] - rho * D[:-1]])
    yt = np.concatenate(([y[0]], y[1:] - rho * y[:-1]))
    var = np.concatenate(([var0], np.full(len(y) - 1, s2)))

    loc = np.asarray(pri.coeff_loc, dtype=float)
    scale = np.asarray(pri.coeff_scale, dtype=float)
    prec = np.diag(1.0 / scale[active] ** 2)
    Da = Dt[:, active]
    prec = prec + (Da / var[:, None]).T @ Da
    num = loc[active] / scale[active] ** 2 + (Da / var[:, None]).T @ yt
    cov = np.linalg.inv(prec)
    cov = 0.5 * (cov + cov.T)
    return cov @ num, cov, active


def update_forcing_coeffs(state: ChainState, data: Dataset, rng: np.random.Generator):
    pri = state.cfg.priors
    mean, cov, active = coeff_conditional(state, data)
    beta = np.asarray(pri.coeff_loc, dtype=float).copy()
    inactive = [j for j in range(4) if j not in active]
    for j in inactive:
        beta[j] = pri.coeff_loc[j] + pri.coeff_scale[j] * rng.standard_normal()
    L = np.linalg.cholesky(cov)
    beta[active] = mean + L @ rng.standard_normal(len(active))
    state.params = replace(state.params, mu=float(beta[0]), omega=beta[1:])
    # w is derived: keep the sampled y path fixed and recompute the remainder
    c = nh_mean_path(state.params.mu, state.params.omega, data.forcings)
    state.latents = LatentStates(
        v=state.latents.v, w=state.latents.y - c, y=state.latents.y
    )


def nh_ar_log_target(state: ChainState, rho: float):
    """Unnormalized log conditional of rho_w (flat prior on (-1, 1))."""
    if not -1.0 < rho < 1.0:
        return -np.inf
    w = state.latents.w
    s2 = state.params.nh_var
    d = w[1:] - rho * w[:-1]
    total = -0.5 * (d @ d) / s2
    if state.cfg.initial_state_mode == "stationary":
        total += 0.5 * math.log(1.0 - rho**2)
        total -= 0.5 * (1.0 - rho**2) * w[0] ** 2 / s2
    return total


def nh_var_conditional(state: ChainState):
    w = state.latents.w
    rho = state.params.nh_ar
    pri = state.cfg.priors
    d = w[1:] - rho * w[:-1]
    if state.cfg.initial_state_mode == "stationary":
        shape = pri.nh_var_shape + 0.5 * len(w)
        scale = pri.nh_var_scale + 0.5 * ((1.0 - rho**2) * w[0] ** 2 + d @ d)
    else:
        shape = pri.nh_var_shape + 0.5 * (len(w) - 1)
        scale = pri.nh_var_scale + 0.5 * (d @ d)
    return shape, scale


def update_nh_ar(state: ChainState, rng: np.random.Generator):
    if state.mh_scale_nh <= 0.0:
        raise ValueError("proposal scale for nh_ar must be positive")
    rho = state.params.nh_ar
    prop = rho + state.mh_scale_nh * rng.standard_normal()
    logr = nh_ar_log_target(state, prop) - nh_ar_log_target(state, rho)
    accepted = math.log1p(-rng.uniform()) < logr
    if accepted:
        state.params = replace(state.params, nh_ar=float(prop))
    state.mh_accept_nh += int(accepted)
    state.last_accept_nh = float(accepted)
    shape, scale = nh_var_conditional(state)
    state.params = replace(state.params, nh_var=_draw_invgamma(shape, scale, rng))


def a_entry_conditional(state: ChainState, g: int):
    """Untruncated normal (loc, scale) for diagonal entry A_gg."""
    p, pri = state.params, state.cfg.priors
    v = state.latents.v
    omega = np.linalg.inv(p.Sigma)
    A_rest = p.A.copy()
    A_rest[g, g] = 0.0
    x = v[:-1, g]
    resid = v[1:] - v[:-1] @ A_rest.T
    prior_prec = 1.0 / pri.ar_scale**2
    prec = prior_prec + omega[g, g] * (x @ x)
    num = pri.ar_loc * prior_prec + x @ (resid @ omega[:, g])
    return num / prec, math.sqrt(1.0 / prec)


def a_scalar_conditional(state: ChainState):
    """Untruncated normal (loc, scale) for A = a I."""
    p, pri = state.params, state.cfg.priors
    v = state.latents.v
    omega = np.linalg.inv(p.Sigma)
    prior_prec = 1.0 / pri.ar_scale**2
    prec = prior_prec + np.einsum("tg,gh,th->", v[:-1], omega, v[:-1])
    num = pri.ar_loc * prior_prec + np.einsum("tg,gh,th->", v[:-1], omega, v[1:])
    return num / prec, math.sqrt(1.0 / prec)


def a_full_conditional(state: ChainState):
    """Matrix-normal posterior (M, col_cov) with row covariance Sigma."""
    p, pri = state.params, state.cfg.priors
    v = state.latents.v
    G = p.n_cells
    C0inv = np.eye(G) / pri.ar_scale**2
    M0 = pri.ar_loc * np.eye(G)
    Sxx = v[:-1].T @ v[:-1]
    Sxy = v[1:].T @ v[:-1]
    Cn = np.linalg.inv(C0inv + Sxx)
    Cn = 0.5 * (Cn + Cn.T)
    Mn = (M0 @ C0inv + Sxy) @ Cn
    return Mn, Cn


def update_A(state: ChainState, rng: np.random.Generator):
    p = state.params
    G = p.n_cells
    structure = state.cfg.a_structure
    if structure == "scalar":
        loc, scale = a_scalar_conditional(state)
        a = _draw_truncnorm(loc, scale, -1.0, 1.0, rng)
        state.params = replace(p, A=a * np.eye(G))
        return
    if structure == "diagonal":
        A = p.A.copy()
        for g in range(G):
            loc, scale = a_entry_conditional(state, g)
            A[g, g] = _draw_truncnorm(loc, scale, -1.0, 1.0, rng)
            state.params = replace(state.params, A=A)
        return
    Mn, Cn = a_full_conditional(state)
    Ls = np.linalg.cholesky(p.Sigma)
    Lc = np.linalg.cholesky(Cn)
    for _ in range(100):
        cand = Mn + Ls @ rng.standard_normal((G, G)) @ Lc.T
        if np.abs(np.linalg.eigvals(cand)).max() < 1.0:
            state.params = replace(p, A=cand)
            return
        state.a_rejections += 1
    state.a_cap_hits += 1  # keep the current value


def sigma_conditional(state: ChainState):
    """Inverse-Wishart posterior (df, scale) from innovations at t >= 2."""
    p, cfg = state.params, state.cfg
    v = state.latents.v
    resid = v[1:] - v[:-1] @ p.A.T
    df = cfg.wishart_dof() + resid.shape[0]
    scale = cfg.wishart_scale_matrix() + resid.T @ resid
    scale = 0.5 * (scale + scale.T)
    return df, scale


def update_Sigma(state: ChainState, rng: np.random.Generator):
    df, scale = sigma_conditional(state)
    try:
        np.linalg.cholesky(scale)
    except np.linalg.LinAlgError as exc:
        raise DataError("inverse-Wishart scale matrix is not SPD") from exc
    draw = invwishart.rvs(df=df, scale=scale, random_state=rng)
    state.params = replace(state.params, Sigma=np.atleast_2d(draw))


def update_latents(state: ChainState, data: Dataset, rng: np.random.Generator):
    state.latents = draw_latents(state.params, state.cfg, data, rng)


# ---------------------------------------------------------------------------
# chain driver
# ---------------------------------------------------------------------------

_SCAN = (
    ("latents", True),
    ("gamma", True),
    ("gamma_hyper", False),
    ("proxy_noise", True),
    ("proxy_ar", True),
    ("forcing_coeffs", True),
    ("nh_ar", False),
    ("A", False),
    ("Sigma", False),
)


def gibbs_step(state: ChainState, data: Dataset, rng: np.random.Generator):
    """One full scan in the fixed update order."""
    for name, wants_data in _SCAN:
        if name == "proxy_ar" and not state.cfg.proxy_ar_enabled:
            continue
        fn = _UPDATES[name]
        try:
            if wants_data:
                fn(state, data, rng)
            else:
                fn(state, rng)
        except Exception as exc:
            raise type(exc)(
                f"iteration {state.iteration + 1}, update {name}: {exc}"
            ) from exc
    state.iteration += 1


_UPDATES = {
    "latents": update_latents,
    "gamma": update_gamma,
    "gamma_hyper": update_gamma_hyper,
    "proxy_noise": update_proxy_noise,
    "proxy_ar": update_proxy_ar,
    "forcing_coeffs": update_forcing_coeffs,
    "nh_ar": update_nh_ar,
    "A": update_A,
    "Sigma": update_Sigma,
}


def initial_params(cfg: ModelConfig, n_proxies: int) -> Params:
    """Deterministic starting point: prior centers, zero AR coefficients."""
    if cfg.init_params is not None:
        return cfg.init_params
    pri = cfg.priors
    G = cfg.grid.n_cells
    return Params(
        gamma=np.full(n_proxies, pri.gamma_mean_loc),
        gamma_mean=pri.gamma_mean_loc,
        gamma_var=pri.gamma_var_scale / (pri.gamma_var_shape - 1.0)
        if pri.gamma_var_shape > 1 else pri.gamma_var_scale,
        proxy_noise_var=np.full(
            n_proxies,
            pri.noise_scale / (pri.noise_shape - 1.0)
            if pri.noise_shape > 1 else pri.noise_scale,
        ),
        proxy_ar=np.zeros(n_proxies),
        mu=pri.coeff_loc[0],
        omega=np.asarray(pri.coeff_loc[1:], dtype=float),
        nh_ar=0.0,
        nh_var=pri.nh_var_scale / (pri.nh_var_shape - 1.0)
        if pri.nh_var_shape > 1 else pri.nh_var_scale,
        A=min(pri.ar_loc, 0.95) * np.eye(G),
        Sigma=pri.wishart_scale * np.eye(G),
    )


def initial_latents(params: Params, cfg: ModelConfig, data: Dataset) -> LatentStates:
    T = data.panel.n_years
    G = cfg.grid.n_cells
    c = nh_mean_path(params.mu, params.omega, data.forcings)
    return LatentStates(v=np.zeros((T, G)), w=np.zeros(T), y=c.copy())


def init_chain(cfg: ModelConfig, data: Dataset, chain_idx: int = 0) -> ChainState:
    params = initial_params(cfg, data.panel.n_proxies)
    P = data.panel.n_proxies
    return ChainState(
        params=params,
        latents=initial_latents(params, cfg, data),
        cfg=cfg,
        stream_id=chain_idx,
        mh_scale_proxy=np.full(P, cfg.sampler.mh_scale),
        mh_scale_nh=cfg.sampler.mh_scale,
        mh_accept_proxy=np.zeros(P),
        last_accept_proxy=np.zeros(P),
    )


def _adapt_scales(state: ChainState):
    """Robbins-Monro drift of the MH proposal scales toward 0.44 acceptance."""
    kappa = (state.iteration) ** -0.6
    state.mh_scale_nh = float(
        np.exp(np.log(state.mh_scale_nh) + kappa * (state.last_accept_nh - 0.44))
    )
    if state.cfg.proxy_ar_enabled:
        state.mh_scale_proxy = np.exp(
            np.log(state.mh_scale_proxy) + kappa * (state.last_accept_proxy - 0.44)
        )


def run_chain(cfg: ModelConfig, data: Dataset, seed: int | None = None,
              chain_idx: int = 0) -> DrawStore:
    """Run one chain; returns thinned post-burn-in draws.

    The RNG stream is derived from (seed, chain_idx), so chains are
    reproducible individually and mutually independent.
    """
    report = validate_config(cfg, data.panel, data.forcings, data.instrumental)
    if not report.ok:
        raise DataError("invalid configuration: " + "; ".join(report.violations))
    if seed is None:
        seed = cfg.sampler.seed
    rng = np.random.default_rng(np.random.SeedSequence((seed, chain_idx)))
    s = cfg.sampler
    state = init_chain(cfg, data, chain_idx)
    T = data.panel.n_years
    P = data.panel.n_proxies
    G = cfg.grid.n_cells
    n_keep = max((s.n_iter - s.burn_in) // s.thin, 0)
    store = DrawStore.allocate(
        n_keep, T, P, G,
        meta={"chain_idx": chain_idx, "seed": seed, "n_iter": s.n_iter,
              "burn_in": s.burn_in, "thin": s.thin},
    )
    weights = cfg.grid.area_weights
    slot = 0
    for it in range(1, s.n_iter + 1):
        gibbs_step(state, data, rng)
        if s.adapt_mh and it <= s.burn_in:
            _adapt_scales(state)
        if it > s.burn_in and (it - s.burn_in) % s.thin == 0 and slot < n_keep:
            store.record(slot, state, weights)
            slot += 1
    store.meta.update(
        mh_scale_nh=state.mh_scale_nh,
        mh_scale_proxy=list(map(float, state.mh_scale_proxy)),
        accept_rate_nh=state.mh_accept_nh / max(s.n_iter, 1),
        accept_rate_proxy=[float(a) / max(s.n_iter, 1) for a in state.mh_accept_proxy],
        a_rejections=state.a_rejections,
        a_cap_hits=state.a_cap_hits,
    )
    return store


def run_chains(cfg: ModelConfig, data: Dataset, n_threads: int = 1) -> list[DrawStore]:
    """All chains from the sampler config; results ordered by chain index."""
    idxs = list(range(cfg.sampler.n_chains))
    if n_threads <= 1 or len(idxs) <= 1:
        return [run_chain(cfg, data, chain_idx=k) for k in idxs]
    with ThreadPoolExecutor(max_workers=n_threads) as pool:
        futures = [pool.submit(run_chain, cfg, data, None, k) for k in idxs]
        return [f.result() for f in futures]


# ---------------------------------------------------------------------------
# convergence diagnostics
# ---------------------------------------------------------------------------

def _rank_normalize(draws: np.ndarray) -> np.ndarray:
    """Fractional ranks mapped through the normal quantile function."""
    flat = draws.reshape(-1)
    r = rankdata(flat, method="average")
    z = ndtri((r - 0.375) / (flat.size + 0.25))
    return z.reshape(draws.shape)


def _split_rhat(seqs: np.ndarray):
    """Split-R-hat of (C, N) rank-normalized sequences; None if degenerate."""
    C, N = seqs.shape
    half = N // 2
    parts = np.concatenate([seqs[:, :half], seqs[:, half : 2 * half]], axis=0)
    W = parts.var(axis=1, ddof=1).mean()
    if W == 0.0 or not np.isfinite(W):
        return None
    B = half * parts.mean(axis=1).var(ddof=1)
    varplus = (half - 1) / half * W + B / half
    return float(np.sqrt(varplus / W))


def _ess(seqs: np.ndarray):
    """Bulk ESS with Geyer initial-monotone truncation; None if degenerate."""
    C, N = seqs.shape
    if N < 4:
        return None
    W = seqs.var(axis=1, ddof=1).mean()
    if W == 0.0 or not np.isfinite(W):
        return None
    B = N * seqs.mean(axis=1).var(ddof=1) if C > 1 else 0.0
    varplus = (N - 1) / N * W + B / N
    # per-chain autocovariances via FFT
    centered = seqs - seqs.mean(axis=1, keepdims=True)
    nfft = int(2 ** np.ceil(np.log2(2 * N)))
    f = np.fft.rfft(centered, nfft, axis=1)
    acov = np.fft.irfft(f * np.conj(f), nfft, axis=1)[:, :N].real / N
    mean_acov = acov.mean(axis=0)
    rho = 1.0 - (W - mean_acov) / varplus
    rho[0] = 1.0
    # Geyer pairs
    tau = 0.0
    prev = np.inf
    k = 0
    while 2 * k + 1 < N:
        pair = rho[2 * k] + rho[2 * k + 1]
        if pair <= 0.0:
            break
        pair = min(pair, prev)
        tau += pair
        prev = pair
        k += 1
    tau = max(2.0 * tau - 1.0, 1e-8)
    return float(min(C * N / tau, C * N))


def chain_diagnostics(stores: list[DrawStore], recon_years: list[int] | None = None):
    """Rank-normalized split-R-hat and bulk ESS for each scalar summary.

    Constant series are reported with None (undefined) rather than NaN.
    """
    if len(stores) < 2:
        raise ValueError("chain diagnostics require at least 2 chains")
    n = min(st.n_draws for st in stores)
    if n == 0:
        raise ValueError("chain diagnostics require non-empty draw stores")
    T = stores[0].y.shape[1]
    if recon_years is None:
        recon_years = sorted({0, T // 2, T - 1})
    names = stores[0].scalar_names() + [f"nh_recon[{t}]" for t in recon_years]
    out = {}
    for name in names:
        seqs = np.stack([st.scalar_series(name)[:n] for st in stores])
        if np.all(seqs == seqs.reshape(-1)[0]):
            out[name] = {"rhat": None, "ess": None}
            continue
        z = _rank_normalize(seqs)
        # rank-normalized R-hat saturates under large location shifts, so
        # take the worse of the robust and raw-scale statistics
        candidates = [r for r in (_split_rhat(z), _split_rhat(seqs)) if r is not None]
        out[name] = {"rhat": max(candidates) if candidates else None, "ess": _ess(z)}
    return out
