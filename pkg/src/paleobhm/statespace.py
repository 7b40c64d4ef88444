"""Linear-Gaussian state-space form of the model, with filtering and FFBS.

Given fixed parameters, the latent block (field deviations and the mean
level) is jointly Gaussian with the observations, so exact inference uses
the Kalman filter, the RTS smoother, and forward-filter backward-sample
draws.  The state is [v_t, y_t] (dimension G+1); with autocorrelated proxy
errors the state also carries one lag of each block (dimension 2G+2) and
observation rows are quasi-differenced within contiguous observed runs.

Numerical conventions: innovation solves go through Cholesky factors,
covariances are symmetrized each step, and a single jitter of 1e-10 is
added on a Cholesky failure; a second failure raises NumericalError.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .model import (
    Dataset,
    ForcingSeries,
    InstrumentalSeries,
    LatentStates,
    ModelConfig,
    NumericalError,
    Params,
    ProxyPanel,
    initial_state_moments,
    nh_mean_path,
)

_JITTER = 1e-10
_LOG2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class ObsAvailability:
    """Observation structure: masks, footprints, and known noise scales.

    Carries everything the system assembly needs except the measured
    values themselves, which guarantees masked-out values can never leak
    into the filter.
    """

    footprints: np.ndarray        # (P, G)
    proxy_mask: np.ndarray        # (T, P) bool
    instrumental_mask: np.ndarray  # (T,) bool
    instrumental_sd: float | None

    @classmethod
    def from_data(cls, panel: ProxyPanel, instrumental: InstrumentalSeries | None):
        T = panel.n_years
        if instrumental is None:
            imask = np.zeros(T, dtype=bool)
            isd = None
        else:
            imask = instrumental.mask
            isd = instrumental.obs_sd
        return cls(
            footprints=panel.footprints,
            proxy_mask=panel.mask,
            instrumental_mask=imask,
            instrumental_sd=isd,
        )

    @property
    def n_proxies(self) -> int:
        return self.proxy_mask.shape[1]

    @property
    def n_years(self) -> int:
        return self.proxy_mask.shape[0]


@dataclass
class SsmSystem:
    """Assembled system matrices plus the per-row bookkeeping for the data."""

    F: np.ndarray          # (m, m) transition
    Q: np.ndarray          # (m, m) innovation covariance (PSD)
    offset: np.ndarray     # (T, m) state intercept; offset[0] unused
    init_mean: np.ndarray  # (m,)
    init_cov: np.ndarray   # (m, m)
    H: np.ndarray          # (T, n_max, m) observation rows
    R: np.ndarray          # (T, n_max) diagonal observation noise
    n_obs: np.ndarray      # (T,) rows active at each time
    row_src: np.ndarray    # (T, n_max) proxy index, or P + cell for instrumental
    row_ar: np.ndarray     # (T, n_max) quasi-difference coefficient (0 = plain row)
    n_cells: int
    y_index: int
    nh_mean: np.ndarray    # (T,) deterministic mean-level path
    augmented: bool

    @property
    def n_years(self) -> int:
        return self.offset.shape[0]

    @property
    def state_dim(self) -> int:
        return self.F.shape[0]


@dataclass
class FilterResult:
    filtered_means: np.ndarray  # (T, m)
    filtered_covs: np.ndarray   # (T, m, m)
    pred_means: np.ndarray      # (T, m) one-step predictive (prior at t=0)
    pred_covs: np.ndarray       # (T, m, m)
    loglik: float

    @property
    def n_years(self) -> int:
        return self.filtered_means.shape[0]


@dataclass
class SmootherResult:
    means: np.ndarray  # (T, m)
    covs: np.ndarray   # (T, m, m)


def build_ssm(
    params: Params,
    cfg: ModelConfig,
    availability: ObsAvailability,
    forcings: ForcingSeries,
) -> SsmSystem:
    """Cast the process and data levels as a state-space system.

    The mean-level channel holds y_t itself, so the forcing response enters
    as a state intercept and observation rows need no separate offsets.
    """
    G = params.n_cells
    P = availability.n_proxies
    T = availability.n_years
    footprints = availability.footprints
    if footprints.shape != (P, G):
        raise ValueError("footprints do not match grid dimension")
    foot_sums = footprints.sum(axis=1)

    augmented = bool(cfg.proxy_ar_enabled)
    m = 2 * G + 2 if augmented else G + 1
    y_index = 2 * G if augmented else G

    rho = params.nh_ar
    F = np.zeros((m, m))
    Q = np.zeros((m, m))
    if augmented:
        F[:G, :G] = params.A
        F[G : 2 * G, :G] = np.eye(G)
        F[2 * G, 2 * G] = rho
        F[2 * G + 1, 2 * G] = 1.0
        Q[:G, :G] = params.Sigma
        Q[2 * G, 2 * G] = params.nh_var
    else:
        F[:G, :G] = params.A
        F[G, G] = rho
        Q[:G, :G] = params.Sigma
        Q[G, G] = params.nh_var

    mean_path = nh_mean_path(params.mu, params.omega, forcings)
    offset = np.zeros((T, m))
    offset[1:, y_index] = mean_path[1:] - rho * mean_path[:-1]

    v_cov0, w_var0 = initial_state_moments(params, cfg)
    init_mean = np.zeros(m)
    init_mean[y_index] = mean_path[0]
    init_cov = np.zeros((m, m))
    init_cov[:G, :G] = v_cov0
    init_cov[y_index, y_index] = w_var0
    if augmented:
        init_mean[y_index + 1] = mean_path[0]
        if cfg.initial_state_mode == "stationary":
            # proper stationary joint of (current, lag)
            init_cov[G : 2 * G, G : 2 * G] = v_cov0
            init_cov[:G, G : 2 * G] = params.A @ v_cov0
            init_cov[G : 2 * G, :G] = init_cov[:G, G : 2 * G].T
            init_cov[y_index + 1, y_index + 1] = w_var0
            init_cov[y_index, y_index + 1] = rho * w_var0
            init_cov[y_index + 1, y_index] = rho * w_var0
        else:
            # lag channels at t=1 are never referenced; any proper law works
            init_cov[G : 2 * G, G : 2 * G] = v_cov0
            init_cov[y_index + 1, y_index + 1] = w_var0

    # observation rows: proxies in ascending order, then instrumental cells
    inst_rows = G if availability.instrumental_sd is not None else 0
    per_t = availability.proxy_mask.sum(axis=1) + inst_rows * availability.instrumental_mask
    n_max = int(per_t.max()) if T else 0
    H = np.zeros((T, n_max, m))
    R = np.zeros((T, n_max))
    n_obs = np.zeros(T, dtype=np.int64)
    row_src = np.full((T, n_max), -1, dtype=np.int64)
    row_ar = np.zeros((T, n_max))

    for t in range(T):
        k = 0
        for i in range(P):
            if not availability.proxy_mask[t, i]:
                continue
            g_i = params.gamma[i]
            phi = params.proxy_ar[i] if augmented else 0.0
            quasi = augmented and t > 0 and availability.proxy_mask[t - 1, i] and phi != 0.0
            H[t, k, :G] = g_i * footprints[i]
            H[t, k, y_index] = g_i * foot_sums[i]
            if quasi:
                H[t, k, G : 2 * G] = -phi * g_i * footprints[i]
                H[t, k, y_index + 1] = -phi * g_i * foot_sums[i]
                R[t, k] = params.proxy_noise_var[i]
                row_ar[t, k] = phi
            else:
                R[t, k] = params.proxy_noise_var[i] / (1.0 - phi**2)
            row_src[t, k] = i
            k += 1
        if inst_rows and availability.instrumental_mask[t]:
            for g in range(G):
                H[t, k, g] = 1.0
                H[t, k, y_index] = 1.0
                R[t, k] = availability.instrumental_sd**2
                row_src[t, k] = P + g
                k += 1
        n_obs[t] = k

    return SsmSystem(
        F=F, Q=Q, offset=offset, init_mean=init_mean, init_cov=init_cov,
        H=H, R=R, n_obs=n_obs, row_src=row_src, row_ar=row_ar,
        n_cells=G, y_index=y_index, nh_mean=mean_path, augmented=augmented,
    )


def stack_observations(
    ssm: SsmSystem,
    panel: ProxyPanel,
    instrumental: InstrumentalSeries | None,
) -> np.ndarray:
    """Observed values padded to (T, n_max), quasi-differenced to match rows."""
    T, n_max = ssm.R.shape
    P = panel.n_proxies
    obs = np.zeros((T, n_max))
    for t in range(T):
        for k in range(int(ssm.n_obs[t])):
            src = int(ssm.row_src[t, k])
            if src < P:
                val = panel.values[t, src]
                phi = ssm.row_ar[t, k]
                if phi != 0.0:
                    val = val - phi * panel.values[t - 1, src]
                obs[t, k] = val
            else:
                obs[t, k] = instrumental.obs[t, src - P]
    return obs


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

@njit(cache=True)
def _chol_lower(A, L, strict):
    """Lower Cholesky factor of A into L; returns False if it fails.

    With strict=False, zero pivots are tolerated (valid for PSD matrices),
    which keeps degenerate draw covariances exact instead of jittered.
    """
    n = A.shape[0]
    tol = 0.0
    for i in range(n):
        if A[i, i] > tol:
            tol = A[i, i]
    tol = 1e-12 * tol
    for i in range(n):
        for j in range(n):
            L[i, j] = 0.0
    for j in range(n):
        s = A[j, j]
        for k in range(j):
            s -= L[j, k] * L[j, k]
        if strict:
            if s <= 0.0:
                return False
            L[j, j] = np.sqrt(s)
        else:
            if s < -max(tol, 1e-14):
                return False
            L[j, j] = np.sqrt(s) if s > 0.0 else 0.0
        for i in range(j + 1, n):
            s = A[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / L[j, j] if L[j, j] > 0.0 else 0.0
    return True


@njit(cache=True)
def _chol_with_jitter(A, L, strict):
    """Cholesky with the one-shot jitter repair; returns a status code.

    0: clean, 1: succeeded after jitter (A modified in place), 2: failed.
    """
    if _chol_lower(A, L, strict):
        return 0
    n = A.shape[0]
    for i in range(n):
        A[i, i] += _JITTER
    if _chol_lower(A, L, strict):
        return 1
    return 2


@njit(cache=True)
def _forward_solve(L, b, out):
    n = L.shape[0]
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= L[i, k] * out[k]
        out[i] = s / L[i, i]


@njit(cache=True)
def _backward_solve(L, b, out):
    # solves L.T x = b
    n = L.shape[0]
    for i in range(n - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, n):
            s -= L[k, i] * out[k]
        out[i] = s / L[i, i]


@njit(cache=True)
def _symmetrize(A):
    n = A.shape[0]
    for i in range(n):
        for j in range(i + 1, n):
            v = 0.5 * (A[i, j] + A[j, i])
            A[i, j] = v
            A[j, i] = v


@njit(cache=True)
def _kalman_kernel(F, Q, offset, init_mean, init_cov, n_obs, H, R, obs,
                   filt_m, filt_P, pred_m, pred_P):
    """Filter pass; returns (loglik, status). status != 0 signals failure."""
    T = n_obs.shape[0]
    m = F.shape[0]
    n_max = R.shape[1]
    loglik = 0.0
    work_m = np.empty((m, m))
    imkh = np.empty((m, m))
    S = np.empty((n_max, n_max))
    LS = np.empty((n_max, n_max))
    PHt = np.empty((m, n_max))
    K = np.empty((m, n_max))
    innov = np.empty(n_max)
    alpha = np.empty(n_max)
    tmp = np.empty(n_max)

    for t in range(T):
        if t == 0:
            for i in range(m):
                pred_m[0, i] = init_mean[i]
                for j in range(m):
                    pred_P[0, i, j] = init_cov[i, j]
        else:
            # mean: F @ filt_m[t-1] + offset[t]
            for i in range(m):
                s = offset[t, i]
                for k in range(m):
                    s += F[i, k] * filt_m[t - 1, k]
                pred_m[t, i] = s
            # cov: F P F' + Q
            for i in range(m):
                for j in range(m):
                    s = 0.0
                    for k in range(m):
                        s += filt_P[t - 1, i, k] * F[j, k]
                    work_m[i, j] = s
            for i in range(m):
                for j in range(m):
                    s = Q[i, j]
                    for k in range(m):
                        s += F[i, k] * work_m[k, j]
                    pred_P[t, i, j] = s
            _symmetrize(pred_P[t])

        n = n_obs[t]
        if n == 0:
            for i in range(m):
                filt_m[t, i] = pred_m[t, i]
                for j in range(m):
                    filt_P[t, i, j] = pred_P[t, i, j]
            continue

        # innovation moments
        for i in range(m):
            for k in range(n):
                s = 0.0
                for j in range(m):
                    s += pred_P[t, i, j] * H[t, k, j]
                PHt[i, k] = s
        for k in range(n):
            s = obs[t, k]
            for j in range(m):
                s -= H[t, k, j] * pred_m[t, j]
            innov[k] = s
            for l in range(n):
                s2 = 0.0
                for j in range(m):
                    s2 += H[t, k, j] * PHt[j, l]
                S[k, l] = s2
            S[k, k] += R[t, k]
        _symmetrize(S[:n, :n])
        status = _chol_with_jitter(S[:n, :n], LS[:n, :n], True)
        if status == 2:
            return loglik, 2

        # log-likelihood contribution
        _forward_solve(LS[:n, :n], innov[:n], alpha[:n])
        quad = 0.0
        logdet = 0.0
        for k in range(n):
            quad += alpha[k] * alpha[k]
            logdet += np.log(LS[k, k])
        loglik += -0.5 * (n * _LOG2PI + quad) - logdet

        # gain K = P H' S^-1 via solves: K = (S^-1 (P H')')'
        for i in range(m):
            for k in range(n):
                tmp[k] = PHt[i, k]
            _forward_solve(LS[:n, :n], tmp[:n], alpha[:n])
            _backward_solve(LS[:n, :n], alpha[:n], tmp[:n])
            for k in range(n):
                K[i, k] = tmp[k]

        for i in range(m):
            s = pred_m[t, i]
            for k in range(n):
                s += K[i, k] * innov[k]
            filt_m[t, i] = s

        # Joseph form: (I - K H) P (I - K H)' + K R K'
        for i in range(m):
            for j in range(m):
                s = 1.0 if i == j else 0.0
                for k in range(n):
                    s -= K[i, k] * H[t, k, j]
                imkh[i, j] = s
        for i in range(m):
            for j in range(m):
                s = 0.0
                for k in range(m):
                    s += imkh[i, k] * pred_P[t, k, j]
                work_m[i, j] = s
        for i in range(m):
            for j in range(m):
                s = 0.0
                for k in range(m):
                    s += work_m[i, k] * imkh[j, k]
                for k in range(n):
                    s += K[i, k] * R[t, k] * K[j, k]
                filt_P[t, i, j] = s
        _symmetrize(filt_P[t])

    return loglik, 0


@njit(cache=True)
def _gain_to_prev(filt_P_t, F, pred_P_next, J):
    """J = filt_P_t F' pred_P_next^{-1}; returns status code."""
    m = F.shape[0]
    B = np.empty((m, m))
    L = np.empty((m, m))
    C = pred_P_next.copy()
    status = _chol_with_jitter(C, L, True)
    if status == 2:
        return 2
    for i in range(m):
        for j in range(m):
            s = 0.0
            for k in range(m):
                s += filt_P_t[i, k] * F[j, k]
            B[i, j] = s
    tmp = np.empty(m)
    sol = np.empty(m)
    for i in range(m):
        for k in range(m):
            tmp[k] = B[i, k]
        _forward_solve(L, tmp, sol)
        _backward_solve(L, sol, tmp)
        for k in range(m):
            J[i, k] = tmp[k]
    return 0


@njit(cache=True)
def _smoother_kernel(F, filt_m, filt_P, pred_m, pred_P, sm_m, sm_P):
    T, m = filt_m.shape
    for i in range(m):
        sm_m[T - 1, i] = filt_m[T - 1, i]
        for j in range(m):
            sm_P[T - 1, i, j] = filt_P[T - 1, i, j]
    J = np.empty((m, m))
    D = np.empty((m, m))
    for t in range(T - 2, -1, -1):
        if _gain_to_prev(filt_P[t], F, pred_P[t + 1], J) != 0:
            return 2
        for i in range(m):
            s = filt_m[t, i]
            for k in range(m):
                s += J[i, k] * (sm_m[t + 1, k] - pred_m[t + 1, k])
            sm_m[t, i] = s
        for i in range(m):
            for j in range(m):
                s = 0.0
                for k in range(m):
                    s += J[i, k] * (sm_P[t + 1, k, j] - pred_P[t + 1, k, j])
                D[i, j] = s
        for i in range(m):
            for j in range(m):
                s = filt_P[t, i, j]
                for k in range(m):
                    s += D[i, k] * J[j, k]
                sm_P[t, i, j] = s
        _symmetrize(sm_P[t])
    return 0


@njit(cache=True)
def _ffbs_kernel(F, filt_m, filt_P, pred_m, pred_P, z, draws):
    T, m = filt_m.shape
    L = np.empty((m, m))
    C = filt_P[T - 1].copy()
    if _chol_with_jitter(C, L, False) == 2:
        return 2
    for i in range(m):
        s = filt_m[T - 1, i]
        for k in range(i + 1):
            s += L[i, k] * z[T - 1, k]
        draws[T - 1, i] = s
    J = np.empty((m, m))
    cm = np.empty(m)
    cP = np.empty((m, m))
    for t in range(T - 2, -1, -1):
        if _gain_to_prev(filt_P[t], F, pred_P[t + 1], J) != 0:
            return 2
        for i in range(m):
            s = filt_m[t, i]
            for k in range(m):
                s += J[i, k] * (draws[t + 1, k] - pred_m[t + 1, k])
            cm[i] = s
        # cP = filt_P - J pred_P_next J'
        for i in range(m):
            for j in range(m):
                s = 0.0
                for k in range(m):
                    s += pred_P[t + 1, i, k] * J[j, k]
                cP[i, j] = s
        for i in range(m):
            for j in range(m):
                s = filt_P[t, i, j]
                for k in range(m):
                    s -= J[i, k] * cP[k, j]
                L[i, j] = s
        for i in range(m):
            for j in range(m):
                cP[i, j] = L[i, j]
        _symmetrize(cP)
        if _chol_with_jitter(cP, L, False) == 2:
            return 2
        for i in range(m):
            s = cm[i]
            for k in range(i + 1):
                s += L[i, k] * z[t, k]
            draws[t, i] = s
    return 0


# ---------------------------------------------------------------------------
# public operations
# ---------------------------------------------------------------------------

def kalman_filter(ssm: SsmSystem, obs: np.ndarray) -> FilterResult:
    """Exact Gaussian filtering; loglik is the sum of predictive log densities."""
    T = ssm.n_years
    m = ssm.state_dim
    if obs.shape != ssm.R.shape:
        raise ValueError("observation array does not match the system layout")
    filt_m = np.empty((T, m))
    filt_P = np.empty((T, m, m))
    pred_m = np.empty((T, m))
    pred_P = np.empty((T, m, m))
    loglik, status = _kalman_kernel(
        ssm.F, ssm.Q, ssm.offset, ssm.init_mean, ssm.init_cov,
        ssm.n_obs, ssm.H, ssm.R, np.ascontiguousarray(obs),
        filt_m, filt_P, pred_m, pred_P,
    )
    if status != 0:
        raise NumericalError("innovation covariance not invertible after jitter")
    return FilterResult(
        filtered_means=filt_m, filtered_covs=filt_P,
        pred_means=pred_m, pred_covs=pred_P, loglik=float(loglik),
    )


def smoother_moments(filt: FilterResult, ssm: SsmSystem) -> SmootherResult:
    """Marginal smoothed means/covariances by the backward recursion."""
    T, m = filt.filtered_means.shape
    sm_m = np.empty((T, m))
    sm_P = np.empty((T, m, m))
    status = _smoother_kernel(
        ssm.F, filt.filtered_means, filt.filtered_covs,
        filt.pred_means, filt.pred_covs, sm_m, sm_P,
    )
    if status != 0:
        raise NumericalError("smoother gain solve failed after jitter")
    return SmootherResult(means=sm_m, covs=sm_P)


def ffbs_states(filt: FilterResult, ssm: SsmSystem, rng: np.random.Generator) -> np.ndarray:
    """One joint draw of the full state path, as a (T, m) array."""
    T, m = filt.filtered_means.shape
    z = rng.standard_normal((T, m))
    draws = np.empty((T, m))
    status = _ffbs_kernel(
        ssm.F, filt.filtered_means, filt.filtered_covs,
        filt.pred_means, filt.pred_covs, z, draws,
    )
    if status != 0:
        raise NumericalError("backward sampling covariance factorization failed")
    return draws


def states_to_latents(ssm: SsmSystem, states: np.ndarray) -> LatentStates:
    """Extract (v, w, y) from a state path, recomputing w deterministically."""
    G = ssm.n_cells
    y = states[:, ssm.y_index].copy()
    v = states[:, :G].copy()
    w = y - ssm.nh_mean
    return LatentStates(v=v, w=w, y=y)


def ffbs_draw(filt: FilterResult, ssm: SsmSystem, rng: np.random.Generator) -> LatentStates:
    """One exact draw from the joint smoothing distribution of the latents."""
    return states_to_latents(ssm, ffbs_states(filt, ssm, rng))


def draw_latents(
    params: Params,
    cfg: ModelConfig,
    data: Dataset,
    rng: np.random.Generator,
) -> LatentStates:
    """Assemble the system for the data and draw the latent block once."""
    avail = ObsAvailability.from_data(data.panel, data.instrumental)
    ssm = build_ssm(params, cfg, avail, data.forcings)
    obs = stack_observations(ssm, data.panel, data.instrumental)
    filt = kalman_filter(ssm, obs)
    return ffbs_draw(filt, ssm, rng)
