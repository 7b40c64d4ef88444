import numpy as np
import pytest

from paleobhm.model import (
    Dataset,
    ForcingSeries,
    GridSpec,
    InstrumentalSeries,
    ModelConfig,
    Params,
    ProxyPanel,
    SamplerConfig,
)


def make_forcings(T, start_year=1801, rng=None):
    if rng is None:
        rng = np.random.default_rng(7)
    years = np.arange(start_year, start_year + T)
    return ForcingSeries(
        years=years,
        solar=rng.normal(size=T),
        volcanic=rng.normal(size=T),
        co2=rng.normal(size=T),
    )


def make_params(G=1, P=1, rng=None, **overrides):
    if rng is None:
        rng = np.random.default_rng(11)
    base = dict(
        gamma=1.0 + 0.2 * rng.normal(size=P),
        gamma_mean=1.0,
        gamma_var=0.3,
        proxy_noise_var=0.4 + 0.2 * rng.random(size=P),
        proxy_ar=np.zeros(P),
        mu=0.1,
        omega=np.array([0.2, -0.3, 0.5]),
        nh_ar=0.3,
        nh_var=0.6,
        A=0.5 * np.eye(G),
        Sigma=0.75 * np.eye(G) + 0.05 * (np.ones((G, G)) - np.eye(G)),
    )
    base.update(overrides)
    return Params(**base)


def make_panel(T, P, G, mask=None, rng=None):
    if rng is None:
        rng = np.random.default_rng(13)
    if mask is None:
        mask = np.ones((T, P), dtype=bool)
    footprints = np.zeros((P, G))
    for i in range(P):
        footprints[i, i % G] = 1.0
    return ProxyPanel(values=rng.normal(size=(T, P)), mask=mask, footprints=footprints)


def make_config(G=1, calibration=None, **overrides):
    weights = np.full(G, 1.0 / G)
    sampler = overrides.pop("sampler", SamplerConfig(n_iter=20, burn_in=10, seed=3))
    return ModelConfig(
        grid=GridSpec(area_weights=weights),
        sampler=sampler,
        calibration=calibration,
        **overrides,
    )


def make_instrumental(T, G, mask=None, obs_sd=0.1, rng=None):
    if rng is None:
        rng = np.random.default_rng(17)
    if mask is None:
        mask = np.zeros(T, dtype=bool)
        mask[T // 2 :] = True
    return InstrumentalSeries(obs=rng.normal(size=(T, G)), mask=mask, obs_sd=obs_sd)


@pytest.fixture
def rng():
    return np.random.default_rng(2024)
