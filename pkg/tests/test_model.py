import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import invgamma, invwishart, multivariate_normal, norm, truncnorm

from paleobhm.model import (
    Dataset,
    ForcingSeries,
    GridSpec,
    InstrumentalSeries,
    LatentStates,
    Params,
    ProxyPanel,
    log_joint,
    nh_mean_path,
    nh_mean_step,
    proxy_mean,
    stationary_var_cov,
    validate_config,
    var_step,
)

from conftest import make_config, make_forcings, make_instrumental, make_panel, make_params


# ---------------------------------------------------------------------------
# independent term-by-term density oracle (written before the implementation
# was trusted; sums scipy logpdfs with explicit loops)
# ---------------------------------------------------------------------------

def oracle_log_joint(params, latents, data, cfg):
    p = cfg.priors
    G = params.n_cells
    total = 0.0

    # priors
    for g in params.gamma:
        total += norm.logpdf(g, params.gamma_mean, math.sqrt(params.gamma_var))
    total += norm.logpdf(params.gamma_mean, p.gamma_mean_loc, p.gamma_mean_scale)
    total += invgamma.logpdf(params.gamma_var, p.gamma_var_shape, scale=p.gamma_var_scale)
    for s2 in params.proxy_noise_var:
        total += invgamma.logpdf(s2, p.noise_shape, scale=p.noise_scale)
    if cfg.proxy_ar_enabled:
        total += params.n_proxies * math.log(0.5)
    beta = [params.mu, *params.omega]
    for b, loc, scale in zip(beta, p.coeff_loc, p.coeff_scale):
        total += norm.logpdf(b, loc, scale)
    total += math.log(0.5)
    total += invgamma.logpdf(params.nh_var, p.nh_var_shape, scale=p.nh_var_scale)
    a, b_ = (-1 - p.ar_loc) / p.ar_scale, (1 - p.ar_loc) / p.ar_scale
    if cfg.a_structure == "scalar":
        total += truncnorm.logpdf(params.A[0, 0], a, b_, loc=p.ar_loc, scale=p.ar_scale)
    elif cfg.a_structure == "diagonal":
        for g in range(G):
            total += truncnorm.logpdf(params.A[g, g], a, b_, loc=p.ar_loc, scale=p.ar_scale)
    else:
        raise NotImplementedError
    total += invwishart.logpdf(
        params.Sigma, df=cfg.wishart_dof(), scale=cfg.wishart_scale_matrix()
    )

    # process
    if cfg.initial_state_mode == "fixed":
        v_cov0 = cfg.fixed_v_var * np.eye(G)
        w_var0 = cfg.fixed_w_var
    else:
        v_cov0 = stationary_var_cov(params.A, params.Sigma)
        w_var0 = params.nh_var / (1 - params.nh_ar**2)
    total += multivariate_normal.logpdf(latents.v[0], np.zeros(G), v_cov0)
    for t in range(1, latents.n_years):
        total += multivariate_normal.logpdf(
            latents.v[t], params.A @ latents.v[t - 1], params.Sigma
        )
    total += norm.logpdf(latents.w[0], 0.0, math.sqrt(w_var0))
    for t in range(1, latents.n_years):
        total += norm.logpdf(
            latents.w[t], params.nh_ar * latents.w[t - 1], math.sqrt(params.nh_var)
        )

    # observations
    field = latents.y[:, None] + latents.v
    for i in range(params.n_proxies):
        phi = params.proxy_ar[i] if cfg.proxy_ar_enabled else 0.0
        sd = math.sqrt(params.proxy_noise_var[i])
        prev_resid = None
        for t in range(latents.n_years):
            if not data.panel.mask[t, i]:
                prev_resid = None
                continue
            signal = params.gamma[i] * float(
                data.panel.footprints[i] @ field[t]
            )
            resid = data.panel.values[t, i] - signal
            if prev_resid is None:
                total += norm.logpdf(resid, 0.0, sd / math.sqrt(1 - phi**2))
            else:
                total += norm.logpdf(resid, phi * prev_resid, sd)
            prev_resid = resid
    if data.instrumental is not None:
        inst = data.instrumental
        for t in range(latents.n_years):
            if inst.mask[t]:
                for g in range(G):
                    total += norm.logpdf(inst.obs[t, g], field[t, g], inst.obs_sd)
    return total


def tiny_instance(proxy_ar=True, initial_state_mode="stationary", seed=5):
    rng = np.random.default_rng(seed)
    T, G, P = 2, 1, 1
    forcings = make_forcings(T, start_year=1999, rng=rng)
    params = make_params(G=G, P=P, proxy_ar=np.array([0.4 if proxy_ar else 0.0]), rng=rng)
    panel = make_panel(T, P, G, rng=rng)
    inst = make_instrumental(T, G, mask=np.array([False, True]), rng=rng)
    cfg = make_config(
        G=G,
        calibration=(2000, 2000),
        proxy_ar_enabled=proxy_ar,
        initial_state_mode=initial_state_mode,
    )
    v = rng.normal(size=(T, G))
    w = rng.normal(size=T)
    y = nh_mean_path(params.mu, params.omega, forcings) + w
    latents = LatentStates(v=v, w=w, y=y)
    data = Dataset(panel=panel, forcings=forcings, instrumental=inst)
    return params, latents, data, cfg


# ---------------------------------------------------------------------------
# type invariants
# ---------------------------------------------------------------------------

class TestTypes:
    def test_grid_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            GridSpec(area_weights=np.array([0.5, 0.6]))
        with pytest.raises(ValueError):
            GridSpec(area_weights=np.array([1.5, -0.5]))
        g = GridSpec(area_weights=np.array([0.25, 0.75]))
        assert g.n_cells == 2

    def test_params_reject_nonstationary_A(self):
        with pytest.raises(ValueError):
            make_params(G=2, A=1.01 * np.eye(2))

    def test_params_reject_non_spd_sigma(self):
        with pytest.raises(ValueError):
            make_params(G=2, Sigma=np.array([[1.0, 2.0], [2.0, 1.0]]))

    def test_params_reject_bad_ar(self):
        with pytest.raises(ValueError):
            make_params(nh_ar=1.0)
        with pytest.raises(ValueError):
            make_params(P=2, proxy_ar=np.array([0.2, -1.0]))

    def test_footprint_all_zero_rejected(self):
        with pytest.raises(ValueError):
            ProxyPanel(
                values=np.zeros((3, 1)),
                mask=np.ones((3, 1), dtype=bool),
                footprints=np.zeros((1, 2)),
            )

    def test_masked_values_may_be_nan(self):
        mask = np.array([[True], [False]])
        vals = np.array([[1.0], [np.nan]])
        panel = ProxyPanel(values=vals, mask=mask, footprints=np.ones((1, 1)))
        assert panel.n_proxies == 1

    def test_years_must_be_contiguous(self):
        with pytest.raises(ValueError):
            ForcingSeries(
                years=np.array([1800, 1802]),
                solar=np.zeros(2),
                volcanic=np.zeros(2),
                co2=np.zeros(2),
            )


# ---------------------------------------------------------------------------
# validate_config
# ---------------------------------------------------------------------------

class TestValidateConfig:
    def test_default_passes(self):
        cfg = make_config(G=2)
        panel = make_panel(6, 3, 2)
        forcings = make_forcings(6)
        report = validate_config(cfg, panel, forcings)
        assert report.ok, report.violations

    def test_footprint_dimension_violation(self):
        cfg = make_config(G=2)
        panel = make_panel(6, 3, 3)  # footprints sized for G=3
        forcings = make_forcings(6)
        report = validate_config(cfg, panel, forcings)
        assert not report.ok
        assert any("footprint dimension" in v for v in report.violations)

    def test_wishart_dof_boundary(self):
        cfg = make_config(G=2)
        cfg = cfg.__class__(**{**cfg.__dict__, "priors": cfg.priors.__class__(wishart_dof=2.0)})
        panel = make_panel(6, 3, 2)
        report = validate_config(cfg, panel, make_forcings(6))
        assert not report.ok
        assert any("dof must exceed G+1" in v for v in report.violations)


# ---------------------------------------------------------------------------
# elementary maps
# ---------------------------------------------------------------------------

class TestElementaryMaps:
    def test_var_step_pure_innovation(self):
        out = var_step(np.zeros((2, 2)), np.zeros(2), np.array([1.0, 2.0]))
        np.testing.assert_allclose(out, [1.0, 2.0])

    def test_var_step_identity_persistence(self):
        out = var_step(np.eye(2), np.array([3.0, -1.0]), np.zeros(2))
        np.testing.assert_allclose(out, [3.0, -1.0])

    def test_var_step_arithmetic(self):
        out = var_step(0.5 * np.eye(2), np.array([2.0, 4.0]), np.array([0.1, 0.0]))
        np.testing.assert_allclose(out, [1.1, 2.0])

    def test_var_step_shape_mismatch(self):
        with pytest.raises(ValueError):
            var_step(np.eye(2), np.zeros(3), np.zeros(3))

    @given(
        st.floats(-5, 5),
        st.floats(-5, 5),
        st.integers(0, 2**31 - 1),
    )
    @settings(max_examples=50, deadline=None)
    def test_var_step_linearity(self, alpha, beta, seed):
        r = np.random.default_rng(seed)
        A = r.normal(size=(3, 3))
        v1, v2 = r.normal(size=3), r.normal(size=3)
        e1, e2 = r.normal(size=3), r.normal(size=3)
        left = var_step(A, alpha * v1 + beta * v2, alpha * e1 + beta * e2)
        right = alpha * var_step(A, v1, e1) + beta * var_step(A, v2, e2)
        np.testing.assert_allclose(left, right, atol=1e-9)

    def test_nh_mean_step_forcings_off(self):
        assert nh_mean_step(0.2, (0, 0, 0), (1, 2, 3), 0.0) == pytest.approx(0.2)

    def test_nh_mean_step_single_forcing(self):
        assert nh_mean_step(0.0, (2, 0, 0), (0.5, 9, 9), 0.0) == pytest.approx(1.0)

    def test_nh_mean_step_arithmetic(self):
        assert nh_mean_step(1.0, (1, 1, 1), (0.1, 0.2, 0.3), -0.6) == pytest.approx(1.0)

    def test_proxy_mean_selector(self):
        assert proxy_mean(1.0, np.array([1.0, 0.0]), np.array([2.0, 5.0])) == pytest.approx(2.0)

    def test_proxy_mean_decoupled(self):
        assert proxy_mean(0.0, np.array([0.3, 0.7]), np.array([9.0, -4.0])) == 0.0

    def test_proxy_mean_arithmetic(self):
        assert proxy_mean(2.0, np.array([0.5, 0.5]), np.array([1.0, 3.0])) == pytest.approx(4.0)

    def test_proxy_mean_shape_mismatch(self):
        with pytest.raises(ValueError):
            proxy_mean(1.0, np.ones(3), np.ones(2))


# ---------------------------------------------------------------------------
# log_joint
# ---------------------------------------------------------------------------

class TestLogJoint:
    @pytest.mark.parametrize("proxy_ar", [False, True])
    @pytest.mark.parametrize("mode", ["stationary", "fixed"])
    def test_matches_term_by_term_oracle(self, proxy_ar, mode):
        params, latents, data, cfg = tiny_instance(proxy_ar=proxy_ar, initial_state_mode=mode)
        expected = oracle_log_joint(params, latents, data, cfg)
        assert log_joint(params, latents, data, cfg) == pytest.approx(expected, abs=1e-9)

    def test_oracle_on_larger_instance(self):
        rng = np.random.default_rng(42)
        T, G, P = 5, 2, 3
        forcings = make_forcings(T, rng=rng)
        params = make_params(G=G, P=P, proxy_ar=rng.uniform(-0.5, 0.5, P), rng=rng)
        mask = rng.random((T, P)) < 0.7
        panel = make_panel(T, P, G, mask=mask, rng=rng)
        inst = make_instrumental(T, G, rng=rng)
        cfg = make_config(G=G, calibration=(forcings.years[2], forcings.years[-1]),
                          proxy_ar_enabled=True)
        w = rng.normal(size=T)
        latents = LatentStates(
            v=rng.normal(size=(T, G)),
            w=w,
            y=nh_mean_path(params.mu, params.omega, forcings) + w,
        )
        data = Dataset(panel=panel, forcings=forcings, instrumental=inst)
        expected = oracle_log_joint(params, latents, data, cfg)
        assert log_joint(params, latents, data, cfg) == pytest.approx(expected, abs=1e-9)

    def test_one_observed_cell_adds_its_log_density(self):
        params, latents, data, cfg = tiny_instance(proxy_ar=False)
        mask_off = data.panel.mask.copy()
        mask_off[0, 0] = False
        panel_off = ProxyPanel(
            values=data.panel.values, mask=mask_off, footprints=data.panel.footprints
        )
        base = log_joint(params, latents, Dataset(panel_off, data.forcings, data.instrumental), cfg)
        full = log_joint(params, latents, data, cfg)
        field = latents.y[:, None] + latents.v
        signal = proxy_mean(params.gamma[0], data.panel.footprints[0], field[0])
        expected = norm.logpdf(
            data.panel.values[0, 0], signal, math.sqrt(params.proxy_noise_var[0])
        )
        assert full - base == pytest.approx(expected, abs=1e-10)

    def test_masked_cells_carry_no_information(self):
        params, latents, data, cfg = tiny_instance(proxy_ar=True)
        mask = data.panel.mask.copy()
        mask[0, 0] = False
        vals_a = data.panel.values.copy()
        vals_b = vals_a.copy()
        vals_b[0, 0] = 123.456
        panel_a = ProxyPanel(values=vals_a, mask=mask, footprints=data.panel.footprints)
        panel_b = ProxyPanel(values=vals_b, mask=mask, footprints=data.panel.footprints)
        lj_a = log_joint(params, latents, Dataset(panel_a, data.forcings, data.instrumental), cfg)
        lj_b = log_joint(params, latents, Dataset(panel_b, data.forcings, data.instrumental), cfg)
        assert lj_a == lj_b

    def test_gamma_difference_isolates_proxy_terms(self):
        rng = np.random.default_rng(9)
        T, G, P = 6, 2, 3
        forcings = make_forcings(T, rng=rng)
        params = make_params(G=G, P=P, rng=rng)
        panel = make_panel(T, P, G, mask=rng.random((T, P)) < 0.8, rng=rng)
        cfg = make_config(G=G)
        w = rng.normal(size=T)
        latents = LatentStates(
            v=rng.normal(size=(T, G)),
            w=w,
            y=nh_mean_path(params.mu, params.omega, forcings) + w,
        )
        data = Dataset(panel=panel, forcings=forcings, instrumental=None)

        gamma2 = params.gamma.copy()
        gamma2[1] += 0.7
        params2 = Params(**{**_params_dict(params), "gamma": gamma2})

        diff = log_joint(params2, latents, data, cfg) - log_joint(params, latents, data, cfg)

        field = latents.y[:, None] + latents.v
        def gamma_terms(prm):
            total = norm.logpdf(prm.gamma[1], prm.gamma_mean, math.sqrt(prm.gamma_var))
            sd = math.sqrt(prm.proxy_noise_var[1])
            for t in range(T):
                if panel.mask[t, 1]:
                    total += norm.logpdf(
                        panel.values[t, 1], prm.gamma[1] * (panel.footprints[1] @ field[t]), sd
                    )
            return total

        assert diff == pytest.approx(gamma_terms(params2) - gamma_terms(params), abs=1e-9)

    def test_finite_for_valid_states(self):
        params, latents, data, cfg = tiny_instance()
        assert np.isfinite(log_joint(params, latents, data, cfg))

    def test_inconsistent_y_rejected(self):
        params, latents, data, cfg = tiny_instance()
        bad = LatentStates(v=latents.v, w=latents.w, y=latents.y + 1.0)
        with pytest.raises(ValueError):
            log_joint(params, bad, data, cfg)


def _params_dict(params):
    return dict(
        gamma=params.gamma, gamma_mean=params.gamma_mean, gamma_var=params.gamma_var,
        proxy_noise_var=params.proxy_noise_var, proxy_ar=params.proxy_ar,
        mu=params.mu, omega=params.omega, nh_ar=params.nh_ar, nh_var=params.nh_var,
        A=params.A, Sigma=params.Sigma,
    )


class TestLatentStates:
    def test_y_identity_reconstruction(self):
        rng = np.random.default_rng(3)
        forcings = make_forcings(8, rng=rng)
        params = make_params(rng=rng)
        w = rng.normal(size=8)
        y = nh_mean_path(params.mu, params.omega, forcings) + w
        lat = LatentStates(v=rng.normal(size=(8, 1)), w=w, y=y)
        rebuilt = nh_mean_path(params.mu, params.omega, forcings) + lat.w
        assert np.max(np.abs(lat.y - rebuilt)) < 1e-12

    def test_nh_series_is_weighted_field(self):
        v = np.array([[1.0, 3.0], [2.0, 4.0]])
        lat = LatentStates(v=v, w=np.zeros(2), y=np.array([1.0, -1.0]))
        weights = np.array([0.25, 0.75])
        np.testing.assert_allclose(lat.nh_series(weights), [1.0 + 2.5, -1.0 + 3.5])
