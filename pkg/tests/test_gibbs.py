import math

import numpy as np
import pytest
from scipy.stats import invgamma, invwishart, kstest, matrix_normal, norm, truncnorm

from paleobhm.model import (
    DataError,
    Dataset,
    ForcingSeries,
    LatentStates,
    Params,
    log_joint,
    nh_mean_path,
)
from paleobhm.gibbs import (
    ChainState,
    DrawStore,
    a_entry_conditional,
    a_full_conditional,
    a_scalar_conditional,
    chain_diagnostics,
    coeff_conditional,
    gamma_conditional,
    gamma_mean_conditional,
    gamma_var_conditional,
    gibbs_step,
    init_chain,
    initial_params,
    nh_ar_log_target,
    nh_var_conditional,
    proxy_ar_log_target,
    proxy_noise_conditional,
    run_chain,
    run_chains,
    sigma_conditional,
    update_A,
    update_forcing_coeffs,
    update_gamma,
    update_gamma_hyper,
    update_latents,
    update_nh_ar,
    update_proxy_ar,
    update_proxy_noise,
    update_Sigma,
)

from conftest import make_config, make_forcings, make_instrumental, make_panel, make_params
from test_statespace import staircase_mask


def make_state(T=9, G=2, P=3, proxy_ar=False, mode="stationary",
               a_structure="diagonal", seed=0, instrumental=True, forcings=None):
    """Random but fully consistent sampler state plus matching data."""
    rng = np.random.default_rng(seed)
    diag = rng.uniform(-0.4, 0.7, size=G)
    params = make_params(
        G=G, P=P, rng=rng, A=np.diag(diag),
        proxy_ar=rng.uniform(0.2, 0.6, size=P) if proxy_ar else np.zeros(P),
    )
    cfg = make_config(
        G=G, proxy_ar_enabled=proxy_ar, initial_state_mode=mode,
        a_structure=a_structure,
    )
    mask = staircase_mask(T, P)
    mask[T // 2, :] = False
    panel = make_panel(T, P, G, mask=mask, rng=rng)
    panel = type(panel)(
        values=panel.values, mask=panel.mask,
        footprints=rng.uniform(0.1, 1.0, size=(P, G)),
    )
    if forcings is None:
        forcings = make_forcings(T, rng=rng)
    inst = make_instrumental(T, G, rng=rng) if instrumental else None
    data = Dataset(panel=panel, forcings=forcings, instrumental=inst)
    c = nh_mean_path(params.mu, params.omega, forcings)
    w = rng.normal(size=T)
    latents = LatentStates(v=rng.normal(size=(T, G)), w=w, y=c + w)
    state = ChainState(
        params=params, latents=latents, cfg=cfg,
        mh_scale_proxy=np.full(P, 0.3), mh_scale_nh=0.3,
        mh_accept_proxy=np.zeros(P), last_accept_proxy=np.zeros(P),
    )
    return state, data


def _replace_params(state, **kw):
    from dataclasses import replace
    return replace(state.params, **kw)


def _lj(state, data, params=None, latents=None):
    return log_joint(
        params if params is not None else state.params,
        latents if latents is not None else state.latents,
        data, state.cfg,
    )


# ---------------------------------------------------------------------------
# conditional-update targeting: log_joint ratios must equal conditional
# log-density ratios (exact full conditionals)
# ---------------------------------------------------------------------------

class TestTargeting:
    @pytest.mark.parametrize("mode", ["stationary", "fixed"])
    @pytest.mark.parametrize("proxy_ar", [False, True])
    def test_gamma(self, mode, proxy_ar):
        state, data = make_state(mode=mode, proxy_ar=proxy_ar, seed=3)
        rng = np.random.default_rng(1)
        for i in range(3):
            mean, var = gamma_conditional(state, data, i)
            new = state.params.gamma.copy()
            new[i] = mean + rng.normal()
            lhs = _lj(state, data, params=_replace_params(state, gamma=new)) - _lj(state, data)
            rhs = norm.logpdf(new[i], mean, np.sqrt(var)) - norm.logpdf(
                state.params.gamma[i], mean, np.sqrt(var)
            )
            assert abs(lhs - rhs) < 1e-8

    @pytest.mark.parametrize("mode", ["stationary", "fixed"])
    def test_gamma_hyper(self, mode):
        state, data = make_state(mode=mode, seed=5)
        mean, var = gamma_mean_conditional(state)
        lhs = _lj(state, data, params=_replace_params(state, gamma_mean=2.2)) - _lj(state, data)
        rhs = norm.logpdf(2.2, mean, np.sqrt(var)) - norm.logpdf(
            state.params.gamma_mean, mean, np.sqrt(var)
        )
        assert abs(lhs - rhs) < 1e-8

        shape, scale = gamma_var_conditional(state)
        lhs = _lj(state, data, params=_replace_params(state, gamma_var=0.9)) - _lj(state, data)
        rhs = invgamma.logpdf(0.9, shape, scale=scale) - invgamma.logpdf(
            state.params.gamma_var, shape, scale=scale
        )
        assert abs(lhs - rhs) < 1e-8

    @pytest.mark.parametrize("mode", ["stationary", "fixed"])
    @pytest.mark.parametrize("proxy_ar", [False, True])
    def test_proxy_noise(self, mode, proxy_ar):
        state, data = make_state(mode=mode, proxy_ar=proxy_ar, seed=7)
        for i in range(3):
            shape, scale = proxy_noise_conditional(state, data, i)
            new = state.params.proxy_noise_var.copy()
            new[i] = 1.7
            lhs = _lj(state, data, params=_replace_params(state, proxy_noise_var=new)) - _lj(state, data)
            rhs = invgamma.logpdf(1.7, shape, scale=scale) - invgamma.logpdf(
                state.params.proxy_noise_var[i], shape, scale=scale
            )
            assert abs(lhs - rhs) < 1e-8

    @pytest.mark.parametrize("mode", ["stationary", "fixed"])
    def test_proxy_ar_target(self, mode):
        state, data = make_state(mode=mode, proxy_ar=True, seed=9)
        for i in range(3):
            new = state.params.proxy_ar.copy()
            new[i] = 0.11 + 0.2 * i
            lhs = _lj(state, data, params=_replace_params(state, proxy_ar=new)) - _lj(state, data)
            rhs = proxy_ar_log_target(state, data, i, new[i]) - proxy_ar_log_target(
                state, data, i, state.params.proxy_ar[i]
            )
            assert abs(lhs - rhs) < 1e-8

    @pytest.mark.parametrize("mode", ["stationary", "fixed"])
    def test_forcing_coeffs(self, mode):
        state, data = make_state(mode=mode, seed=11)
        mean, cov, active = coeff_conditional(state, data)
        assert active == [0, 1, 2, 3]
        rng = np.random.default_rng(2)
        beta_new = mean + np.linalg.cholesky(cov) @ rng.normal(size=4)
        beta_old = np.concatenate(([state.params.mu], state.params.omega))
        c_new = nh_mean_path(beta_new[0], beta_new[1:], data.forcings)
        lat_new = LatentStates(
            v=state.latents.v, w=state.latents.y - c_new, y=state.latents.y
        )
        lhs = _lj(
            state, data,
            params=_replace_params(state, mu=float(beta_new[0]), omega=beta_new[1:]),
            latents=lat_new,
        ) - _lj(state, data)
        from scipy.stats import multivariate_normal
        rhs = multivariate_normal.logpdf(beta_new, mean, cov) - multivariate_normal.logpdf(
            beta_old, mean, cov
        )
        assert abs(lhs - rhs) < 1e-8

    @pytest.mark.parametrize("mode", ["stationary", "fixed"])
    def test_nh_ar_and_var(self, mode):
        state, data = make_state(mode=mode, seed=13)
        lhs = _lj(state, data, params=_replace_params(state, nh_ar=-0.35)) - _lj(state, data)
        rhs = nh_ar_log_target(state, -0.35) - nh_ar_log_target(state, state.params.nh_ar)
        assert abs(lhs - rhs) < 1e-8

        shape, scale = nh_var_conditional(state)
        lhs = _lj(state, data, params=_replace_params(state, nh_var=1.4)) - _lj(state, data)
        rhs = invgamma.logpdf(1.4, shape, scale=scale) - invgamma.logpdf(
            state.params.nh_var, shape, scale=scale
        )
        assert abs(lhs - rhs) < 1e-8

    def test_a_entry_fixed_mode(self):
        # exact in fixed initialization (t=1 term does not involve A)
        state, data = make_state(mode="fixed", seed=15)
        for g in range(2):
            loc, sd = a_entry_conditional(state, g)
            A_new = state.params.A.copy()
            A_new[g, g] = 0.55 - 0.3 * g
            lhs = _lj(state, data, params=_replace_params(state, A=A_new)) - _lj(state, data)
            rhs = truncnorm.logpdf(
                A_new[g, g], (-1 - loc) / sd, (1 - loc) / sd, loc=loc, scale=sd
            ) - truncnorm.logpdf(
                state.params.A[g, g], (-1 - loc) / sd, (1 - loc) / sd, loc=loc, scale=sd
            )
            assert abs(lhs - rhs) < 1e-8

    def test_a_scalar_fixed_mode(self):
        state, data = make_state(mode="fixed", a_structure="scalar", seed=17)
        state.params = _replace_params(state, A=0.3 * np.eye(2))
        loc, sd = a_scalar_conditional(state)
        lhs = _lj(state, data, params=_replace_params(state, A=0.6 * np.eye(2))) - _lj(state, data)
        rhs = truncnorm.logpdf(0.6, (-1 - loc) / sd, (1 - loc) / sd, loc=loc, scale=sd)
        rhs -= truncnorm.logpdf(0.3, (-1 - loc) / sd, (1 - loc) / sd, loc=loc, scale=sd)
        assert abs(lhs - rhs) < 1e-8

    def test_a_full_fixed_mode(self):
        state, data = make_state(mode="fixed", a_structure="full", seed=19)
        Mn, Cn = a_full_conditional(state)
        A_new = np.array([[0.35, 0.1], [-0.05, 0.2]])
        lhs = _lj(state, data, params=_replace_params(state, A=A_new)) - _lj(state, data)
        rhs = matrix_normal.logpdf(
            A_new, mean=Mn, rowcov=state.params.Sigma, colcov=Cn
        ) - matrix_normal.logpdf(
            state.params.A, mean=Mn, rowcov=state.params.Sigma, colcov=Cn
        )
        assert abs(lhs - rhs) < 1e-8

    def test_sigma_fixed_mode(self):
        state, data = make_state(mode="fixed", seed=21)
        df, scale = sigma_conditional(state)
        S_new = np.array([[0.9, 0.2], [0.2, 1.1]])
        lhs = _lj(state, data, params=_replace_params(state, Sigma=S_new)) - _lj(state, data)
        rhs = invwishart.logpdf(S_new, df=df, scale=scale) - invwishart.logpdf(
            state.params.Sigma, df=df, scale=scale
        )
        assert abs(lhs - rhs) < 1e-8


# ---------------------------------------------------------------------------
# conjugate-oracle behavior of individual updates
# ---------------------------------------------------------------------------

class TestGammaUpdate:
    def test_missing_proxy_draws_prior(self):
        state, data = make_state(seed=23)
        mask = data.panel.mask.copy()
        mask[:, 1] = False
        panel = type(data.panel)(
            values=data.panel.values, mask=mask, footprints=data.panel.footprints
        )
        data = Dataset(panel=panel, forcings=data.forcings, instrumental=data.instrumental)
        rng = np.random.default_rng(4)
        draws = np.empty(10_000)
        for k in range(draws.size):
            update_gamma(state, data, rng)
            draws[k] = state.params.gamma[1]
        p = state.params
        res = kstest(draws, norm(p.gamma_mean, np.sqrt(p.gamma_var)).cdf)
        assert res.pvalue > 0.01

    def test_small_noise_concentrates_at_least_squares(self):
        state, data = make_state(T=5, seed=25)
        noise = state.params.proxy_noise_var.copy()
        noise[0] = 1e-10
        state.params = _replace_params(state, proxy_noise_var=noise)
        mean, var = gamma_conditional(state, data, 0)
        from paleobhm.gibbs import _observed_runs, _prewhiten, _proxy_signal
        runs = _observed_runs(data.panel.mask[:, 0])
        z = _prewhiten(_proxy_signal(state.latents, data.panel.footprints[0]), runs, 0.0)
        x = _prewhiten(data.panel.values[:, 0], runs, 0.0)
        assert abs(mean - (z @ x) / (z @ z)) < 1e-6
        assert var < 1e-9

    def test_tiny_gamma_var_pins_to_hyper_mean(self):
        state, data = make_state(seed=27)
        state.params = _replace_params(state, gamma_var=1e-14)
        rng = np.random.default_rng(6)
        update_gamma(state, data, rng)
        np.testing.assert_allclose(
            state.params.gamma, state.params.gamma_mean, atol=1e-5
        )


class TestGammaHyperUpdate:
    def test_single_proxy_conjugate(self):
        state, data = make_state(P=1, seed=29)
        pri = state.cfg.priors
        p = state.params
        prec = 1 / pri.gamma_mean_scale**2 + 1 / p.gamma_var
        want_mean = (pri.gamma_mean_loc / pri.gamma_mean_scale**2 + p.gamma[0] / p.gamma_var) / prec
        rng = np.random.default_rng(8)
        draws = np.empty(10_000)
        for k in range(draws.size):
            state.params = _replace_params(state, gamma_mean=p.gamma_mean, gamma_var=p.gamma_var)
            update_gamma_hyper(state, rng)
            draws[k] = state.params.gamma_mean
        res = kstest(draws, norm(want_mean, np.sqrt(1 / prec)).cdf)
        assert res.pvalue > 0.01

    def test_identical_gammas_shrink_variance(self):
        state, data = make_state(P=6, seed=31)
        state.params = _replace_params(
            state, gamma=np.full(6, 1.0), gamma_mean=1.0
        )
        rng = np.random.default_rng(10)
        post = np.empty(10_000)
        pri = np.empty(10_000)
        shape0 = state.cfg.priors.gamma_var_shape
        scale0 = state.cfg.priors.gamma_var_scale
        for k in range(post.size):
            state.params = _replace_params(state, gamma_var=0.3)
            update_gamma_hyper(state, rng)
            post[k] = state.params.gamma_var
            pri[k] = 1.0 / rng.gamma(shape0, 1.0 / scale0)
        # concentrated gammas: posterior variance stochastically below prior
        qs = np.linspace(0.05, 0.95, 19)
        assert np.all(np.quantile(post, qs) < np.quantile(pri, qs))

    def test_symmetric_gammas_center_hyper_mean(self):
        state, data = make_state(P=50, seed=33)
        c = 1.4
        gam = c + np.concatenate([np.linspace(-0.5, 0.5, 25), -np.linspace(-0.5, 0.5, 25)])
        state.params = _replace_params(state, gamma=gam)
        mean, var = gamma_mean_conditional(state)
        pri = state.cfg.priors
        prec = 1 / pri.gamma_mean_scale**2 + 50 / state.params.gamma_var
        want = (pri.gamma_mean_loc / pri.gamma_mean_scale**2 + 50 * c / state.params.gamma_var) / prec
        assert abs(mean - want) < 1e-12
        assert abs(mean - c) < 0.05  # data-dominated at P=50


class TestProxyNoiseUpdate:
    def test_missing_proxy_draws_prior(self):
        state, data = make_state(seed=35)
        mask = data.panel.mask.copy()
        mask[:, 2] = False
        panel = type(data.panel)(
            values=data.panel.values, mask=mask, footprints=data.panel.footprints
        )
        data = Dataset(panel=panel, forcings=data.forcings, instrumental=data.instrumental)
        shape, scale = proxy_noise_conditional(state, data, 2)
        assert shape == state.cfg.priors.noise_shape
        assert scale == state.cfg.priors.noise_scale
        rng = np.random.default_rng(12)
        draws = np.empty(10_000)
        for k in range(draws.size):
            update_proxy_noise(state, data, rng)
            draws[k] = state.params.proxy_noise_var[2]
        res = kstest(draws, invgamma(shape, scale=scale).cdf)
        assert res.pvalue > 0.01

    def test_zero_residuals_bookkeeping(self):
        state, data = make_state(seed=37)
        # construct data equal to the signal: residuals vanish
        from paleobhm.gibbs import _proxy_signal
        vals = data.panel.values.copy()
        vals[:, 0] = state.params.gamma[0] * _proxy_signal(
            state.latents, data.panel.footprints[0]
        )
        panel = type(data.panel)(values=vals, mask=data.panel.mask, footprints=data.panel.footprints)
        data = Dataset(panel=panel, forcings=data.forcings, instrumental=data.instrumental)
        shape, scale = proxy_noise_conditional(state, data, 0)
        n = data.panel.mask[:, 0].sum()
        assert shape == state.cfg.priors.noise_shape + n / 2
        assert abs(scale - state.cfg.priors.noise_scale) < 1e-20

    def test_doubling_residuals_quadruples_increment(self):
        state, data = make_state(seed=39)
        shape1, scale1 = proxy_noise_conditional(state, data, 1)
        from paleobhm.gibbs import _proxy_signal
        sig = state.params.gamma[1] * _proxy_signal(state.latents, data.panel.footprints[1])
        vals = data.panel.values.copy()
        vals[:, 1] = sig + 2.0 * (vals[:, 1] - sig)
        panel = type(data.panel)(values=vals, mask=data.panel.mask, footprints=data.panel.footprints)
        data2 = Dataset(panel=panel, forcings=data.forcings, instrumental=data.instrumental)
        shape2, scale2 = proxy_noise_conditional(state, data2, 1)
        b = state.cfg.priors.noise_scale
        assert shape2 == shape1
        np.testing.assert_allclose(scale2 - b, 4.0 * (scale1 - b), rtol=1e-12)


class TestProxyArUpdate:
    def _mh_posterior_mean(self, phi_true, T, seed, n_iter=600):
        rng = np.random.default_rng(seed)
        u = np.zeros(T)
        u[0] = rng.normal() * np.sqrt(0.5 / (1 - phi_true**2))
        for t in range(1, T):
            u[t] = phi_true * u[t - 1] + rng.normal() * np.sqrt(0.5)
        state, data = make_state(T=T, P=1, G=1, proxy_ar=True, seed=seed)
        state.params = _replace_params(
            state, gamma=np.array([0.0]), proxy_noise_var=np.array([0.5])
        )
        panel = type(data.panel)(
            values=u[:, None], mask=np.ones((T, 1), dtype=bool),
            footprints=data.panel.footprints,
        )
        data = Dataset(panel=panel, forcings=data.forcings, instrumental=None)
        draws = []
        for k in range(n_iter):
            update_proxy_ar(state, data, np.random.default_rng((seed, k)))
            draws.append(state.params.proxy_ar[0])
        return np.mean(draws[n_iter // 3:])

    def test_white_noise_recovers_zero(self):
        assert abs(self._mh_posterior_mean(0.0, 500, seed=41)) < 0.1

    def test_persistent_noise_recovered(self):
        means = [self._mh_posterior_mean(0.7, 1000, seed=100 + r) for r in range(10)]
        assert np.mean(means) == pytest.approx(0.7, abs=0.05)
        assert all(0.6 < m < 0.8 for m in means)

    def test_zero_proposal_scale_errors(self):
        state, data = make_state(proxy_ar=True, seed=43)
        state.mh_scale_proxy[:] = 0.0
        with pytest.raises(ValueError, match="proposal scale"):
            update_proxy_ar(state, data, np.random.default_rng(0))


class TestForcingCoeffUpdate:
    def test_zero_forcings_decouple(self):
        T = 9
        forcings = ForcingSeries(
            years=np.arange(1801, 1801 + T),
            solar=np.zeros(T), volcanic=np.zeros(T), co2=np.zeros(T),
        )
        state, data = make_state(T=T, seed=45, forcings=forcings)
        mean, cov, active = coeff_conditional(state, data)
        assert active == [0]
        # mu regression against y alone under the AR(1) error law
        p = state.params
        y = state.latents.y
        rho, s2 = p.nh_ar, p.nh_var
        var0 = s2 / (1 - rho**2)
        dt = np.concatenate(([1.0], np.full(T - 1, 1 - rho)))
        yt = np.concatenate(([y[0]], y[1:] - rho * y[:-1]))
        var = np.concatenate(([var0], np.full(T - 1, s2)))
        pri = state.cfg.priors
        prec = 1 / pri.coeff_scale[0] ** 2 + (dt**2 / var).sum()
        want = (pri.coeff_loc[0] / pri.coeff_scale[0] ** 2 + (dt * yt / var).sum()) / prec
        assert abs(mean[0] - want) < 1e-12
        # omega draws come straight from the prior
        rng = np.random.default_rng(14)
        draws = np.empty((4000, 3))
        for k in range(draws.shape[0]):
            update_forcing_coeffs(state, data, rng)
            draws[k] = state.params.omega
        for j in range(3):
            res = kstest(
                draws[:, j],
                norm(pri.coeff_loc[j + 1], pri.coeff_scale[j + 1]).cdf,
            )
            assert res.pvalue > 0.01

    def test_iid_case_matches_bayes_regression_oracle(self):
        state, data = make_state(T=10, seed=47)
        state.params = _replace_params(state, nh_ar=0.0)
        mean, cov, active = coeff_conditional(state, data)
        D = data.forcings.design_matrix()
        y = state.latents.y
        pri = state.cfg.priors
        s2 = state.params.nh_var
        prec = np.diag(1 / np.asarray(pri.coeff_scale) ** 2) + D.T @ D / s2
        want_cov = np.linalg.inv(prec)
        want_mean = want_cov @ (
            np.asarray(pri.coeff_loc) / np.asarray(pri.coeff_scale) ** 2 + D.T @ y / s2
        )
        np.testing.assert_allclose(mean, want_mean, atol=1e-10)
        np.testing.assert_allclose(cov, want_cov, atol=1e-10)

    def test_duplicated_forcing_column_errors(self):
        T = 9
        rng = np.random.default_rng(49)
        s = rng.normal(size=T)
        forcings = ForcingSeries(
            years=np.arange(1801, 1801 + T), solar=s, volcanic=s.copy(),
            co2=rng.normal(size=T),
        )
        state, data = make_state(T=T, seed=49, forcings=forcings)
        with pytest.raises(DataError, match="solar, volcanic"):
            update_forcing_coeffs(state, data, np.random.default_rng(0))

    def test_w_recomputed_after_draw(self):
        state, data = make_state(seed=51)
        update_forcing_coeffs(state, data, np.random.default_rng(1))
        c = nh_mean_path(state.params.mu, state.params.omega, data.forcings)
        np.testing.assert_allclose(state.latents.y, c + state.latents.w, atol=1e-12)


class TestNhArUpdate:
    def test_white_truth(self):
        rng = np.random.default_rng(53)
        T = 500
        state, data = make_state(T=T, seed=53)
        c = nh_mean_path(state.params.mu, state.params.omega, data.forcings)
        w = rng.normal(size=T) * np.sqrt(state.params.nh_var)
        state.latents = LatentStates(v=state.latents.v, w=w, y=c + w)
        draws = []
        for k in range(400):
            update_nh_ar(state, np.random.default_rng((53, k)))
        for k in range(600):
            update_nh_ar(state, np.random.default_rng((54, k)))
            draws.append(state.params.nh_ar)
        assert abs(np.mean(draws)) < 0.1

    def test_zero_scale_errors(self):
        state, data = make_state(seed=55)
        state.mh_scale_nh = 0.0
        with pytest.raises(ValueError, match="proposal scale"):
            update_nh_ar(state, np.random.default_rng(0))


class TestAUpdate:
    def test_flat_prior_matches_regression_slope(self):
        from paleobhm.model import PriorConfig
        state, data = make_state(G=1, P=1, T=6, seed=57)
        state.cfg = make_config(
            G=1, priors=PriorConfig(ar_scale=1e6), initial_state_mode="stationary"
        )
        v = np.array([[0.5], [1.2], [-0.3], [0.8], [1.5], [-0.6]])
        state.latents = LatentStates(v=v, w=state.latents.w[:6], y=state.latents.y[:6])
        state.params = _replace_params(state, Sigma=np.array([[1.0]]))
        loc, sd = a_entry_conditional(state, 0)
        x, ynext = v[:-1, 0], v[1:, 0]
        assert abs(loc - (x @ ynext) / (x @ x)) < 1e-6
        assert abs(sd - 1 / np.sqrt(x @ x)) < 1e-6
        draws = np.empty(10_000)
        rng = np.random.default_rng(16)
        for k in range(draws.size):
            update_A(state, rng)
            draws[k] = state.params.A[0, 0]
        res = kstest(draws, truncnorm((-1 - loc) / sd, (1 - loc) / sd, loc=loc, scale=sd).cdf)
        assert res.pvalue > 0.01

    def test_zero_path_draws_prior(self):
        state, data = make_state(G=2, seed=59)
        state.latents = LatentStates(
            v=np.zeros_like(state.latents.v), w=state.latents.w, y=state.latents.y
        )
        pri = state.cfg.priors
        for g in range(2):
            loc, sd = a_entry_conditional(state, g)
            assert abs(loc - pri.ar_loc) < 1e-12
            assert abs(sd - pri.ar_scale) < 1e-12

    def test_full_structure_stationary_draws(self):
        state, data = make_state(G=2, a_structure="full", seed=61)
        rng = np.random.default_rng(18)
        for _ in range(2000):
            update_A(state, rng)
            assert np.abs(np.linalg.eigvals(state.params.A)).max() < 1.0

    def test_rejection_cap_keeps_current(self):
        # force an explosive conditional: huge persistent latent path
        state, data = make_state(G=2, a_structure="full", T=9, seed=63)
        v = np.cumsum(np.full((9, 2), 5.0), axis=0) * 100
        v[1:] *= 1.9  # lag-1 regression slope far above 1
        state.latents = LatentStates(v=v, w=state.latents.w, y=state.latents.y)
        A_before = state.params.A.copy()
        update_A(state, np.random.default_rng(20))
        if state.a_cap_hits:
            np.testing.assert_array_equal(state.params.A, A_before)
        assert np.abs(np.linalg.eigvals(state.params.A)).max() < 1.0


class TestSigmaUpdate:
    def test_no_innovations_draws_prior(self):
        state, data = make_state(G=2, T=9, seed=65)
        state.latents = LatentStates(
            v=state.latents.v[:1], w=state.latents.w[:1], y=state.latents.y[:1]
        )
        df, scale = sigma_conditional(state)
        assert df == state.cfg.wishart_dof()
        np.testing.assert_allclose(scale, state.cfg.wishart_scale_matrix(), atol=1e-15)
        rng = np.random.default_rng(22)
        draws = np.empty(4000)
        ref = np.empty(4000)
        for k in range(draws.size):
            update_Sigma(state, rng)
            draws[k] = np.linalg.norm(state.params.Sigma)
            ref[k] = np.linalg.norm(
                invwishart.rvs(df=df, scale=scale, random_state=rng)
            )
        from scipy.stats import ks_2samp
        assert ks_2samp(draws, ref).pvalue > 0.01

    def test_scalar_case_matches_invgamma(self):
        state, data = make_state(G=1, P=1, T=5, seed=67)
        df, scale = sigma_conditional(state)
        rng = np.random.default_rng(24)
        draws = np.empty(10_000)
        for k in range(draws.size):
            update_Sigma(state, rng)
            draws[k] = state.params.Sigma[0, 0]
        res = kstest(draws, invgamma(df / 2, scale=float(scale[0, 0]) / 2).cdf)
        assert res.pvalue > 0.01

    def test_draws_always_spd(self):
        state, data = make_state(G=2, seed=69)
        rng = np.random.default_rng(26)
        for _ in range(2000):
            update_Sigma(state, rng)
            np.linalg.cholesky(state.params.Sigma)  # raises if not SPD


# ---------------------------------------------------------------------------
# chain driver
# ---------------------------------------------------------------------------

def small_run_setup(seed=0, proxy_ar=False, **sampler_kw):
    from paleobhm.model import SamplerConfig
    rng = np.random.default_rng(seed)
    T, G, P = 12, 2, 3
    mask = staircase_mask(T, P)
    panel = make_panel(T, P, G, mask=mask, rng=rng)
    data = Dataset(
        panel=panel, forcings=make_forcings(T, rng=rng),
        instrumental=make_instrumental(T, G, rng=rng),
    )
    kw = dict(n_chains=2, n_iter=30, burn_in=10, thin=2, seed=11)
    kw.update(sampler_kw)
    cfg = make_config(G=G, proxy_ar_enabled=proxy_ar, sampler=SamplerConfig(**kw))
    return cfg, data


class TestRunChain:
    def test_empty_store_when_all_burnin(self):
        cfg, data = small_run_setup(n_iter=10, burn_in=10)
        store = run_chain(cfg, data)
        assert store.n_draws == 0

    def test_draw_count(self):
        cfg, data = small_run_setup()
        store = run_chain(cfg, data)
        assert store.n_draws == (30 - 10) // 2

    def test_bit_reproducible(self):
        cfg, data = small_run_setup(proxy_ar=True)
        a = run_chain(cfg, data, chain_idx=1)
        b = run_chain(cfg, data, chain_idx=1)
        for name in ("gamma", "mu", "A", "Sigma", "v", "y", "nh_recon", "proxy_ar"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_chains_differ(self):
        cfg, data = small_run_setup()
        a = run_chain(cfg, data, chain_idx=0)
        b = run_chain(cfg, data, chain_idx=1)
        assert not np.array_equal(a.mu, b.mu)

    def test_stored_draws_satisfy_invariants(self):
        cfg, data = small_run_setup(proxy_ar=True)
        store = run_chain(cfg, data)
        for k in range(store.n_draws):
            Params(
                gamma=store.gamma[k], gamma_mean=store.gamma_mean[k],
                gamma_var=store.gamma_var[k],
                proxy_noise_var=store.proxy_noise_var[k],
                proxy_ar=store.proxy_ar[k], mu=store.mu[k], omega=store.omega[k],
                nh_ar=store.nh_ar[k], nh_var=store.nh_var[k],
                A=store.A[k], Sigma=store.Sigma[k],
            )
            recon = store.y[k] + store.v[k] @ cfg.grid.area_weights
            np.testing.assert_allclose(store.nh_recon[k], recon, atol=1e-12)

    def test_missingness_bitwise_contract(self):
        cfg, data = small_run_setup(proxy_ar=True)
        vals = data.panel.values.copy()
        vals[~data.panel.mask] = 777.0
        panel2 = type(data.panel)(
            values=vals, mask=data.panel.mask, footprints=data.panel.footprints
        )
        data2 = Dataset(panel=panel2, forcings=data.forcings, instrumental=data.instrumental)
        a = run_chain(cfg, data)
        b = run_chain(cfg, data2)
        for name in ("gamma", "mu", "omega", "A", "Sigma", "v", "w", "y", "nh_recon"):
            np.testing.assert_array_equal(getattr(a, name), getattr(b, name))

    def test_update_error_carries_context(self):
        T = 12
        rng = np.random.default_rng(71)
        s = rng.normal(size=T)
        forcings = ForcingSeries(
            years=np.arange(1801, 1801 + T), solar=s, volcanic=s.copy(), co2=rng.normal(size=T)
        )
        cfg, data = small_run_setup()
        data = Dataset(panel=data.panel, forcings=forcings, instrumental=data.instrumental)
        with pytest.raises(DataError, match="iteration 1, update forcing_coeffs"):
            run_chain(cfg, data)

    def test_run_chains_matches_individual(self):
        cfg, data = small_run_setup()
        stores = run_chains(cfg, data)
        solo = run_chain(cfg, data, chain_idx=1)
        np.testing.assert_array_equal(stores[1].mu, solo.mu)
        threaded = run_chains(cfg, data, n_threads=2)
        np.testing.assert_array_equal(stores[0].y, threaded[0].y)
        np.testing.assert_array_equal(stores[1].y, threaded[1].y)

    def test_tiny_conjugate_submodel(self):
        # everything frozen except gamma_1: chain draws are iid conjugate
        state, data = make_state(G=1, P=1, T=5, seed=73)
        mean, var = gamma_conditional(state, data, 0)
        rng = np.random.default_rng(28)
        draws = np.empty(10_000)
        for k in range(draws.size):
            update_gamma(state, data, rng)
            draws[k] = state.params.gamma[0]
        res = kstest(draws, norm(mean, np.sqrt(var)).cdf)
        assert res.pvalue > 0.01

    def test_adaptation_only_during_burnin(self):
        cfg, data = small_run_setup(proxy_ar=True, n_iter=60, burn_in=30)
        store = run_chain(cfg, data)
        # adapted scales recorded; rerun with burn_in=0 keeps the initial scale
        cfg0, _ = small_run_setup(proxy_ar=True, n_iter=30, burn_in=0)
        store0 = run_chain(cfg0, data)
        assert store.meta["mh_scale_nh"] != cfg.sampler.mh_scale
        assert store0.meta["mh_scale_nh"] == cfg0.sampler.mh_scale


class TestDiagnostics:
    def _store_from(self, x, meta=None):
        n = x.shape[0]
        st = DrawStore.allocate(n, T=4, P=1, G=1, meta=meta)
        for name in ("gamma_mean", "gamma_var", "nh_ar", "nh_var"):
            getattr(st, name)[:] = 1.0
        st.gamma[:] = 1.0
        st.proxy_noise_var[:] = 1.0
        st.proxy_ar[:] = 0.0
        st.mu[:] = x
        st.omega[:] = 0.0
        st.A[:] = 0.2
        st.Sigma[:] = 1.0
        st.v[:] = 0.0
        st.w[:] = 0.0
        st.y[:] = 0.0
        st.nh_recon[:] = 0.0
        return st

    def test_requires_two_chains(self):
        st = self._store_from(np.random.default_rng(0).normal(size=100))
        with pytest.raises(ValueError):
            chain_diagnostics([st])

    def test_iid_chains_converged(self):
        rng = np.random.default_rng(30)
        stores = [self._store_from(rng.normal(size=1000)) for _ in range(4)]
        out = chain_diagnostics(stores)
        assert out["mu"]["rhat"] < 1.01
        assert out["mu"]["ess"] > 1000

    def test_shifted_chain_flagged(self):
        rng = np.random.default_rng(32)
        stores = [self._store_from(rng.normal(size=1000)) for _ in range(3)]
        stores.append(self._store_from(rng.normal(size=1000) + 10.0))
        out = chain_diagnostics(stores)
        assert out["mu"]["rhat"] > 2.0

    def test_constant_series_undefined_not_nan(self):
        stores = [self._store_from(np.zeros(100)) for _ in range(2)]
        out = chain_diagnostics(stores)
        assert out["mu"]["rhat"] is None
        assert out["gamma[0]"]["rhat"] is None

    def test_real_chains_produce_finite_diagnostics(self):
        cfg, data = small_run_setup(n_iter=50, burn_in=10, thin=1)
        stores = run_chains(cfg, data)
        out = chain_diagnostics(stores)
        assert np.isfinite(out["mu"]["rhat"])
        assert out["proxy_ar[0]"]["rhat"] is None  # disabled -> constant zero
        assert any(k.startswith("nh_recon[") for k in out)
