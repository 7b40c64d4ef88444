"""Abridged sampler-correctness checks: Geweke and rank calibration.

Both tests catch implementation bugs, not modeling choices.  The Geweke
comparison runs two simulators that must target the same joint law -- one
samples (params, latents, data) from the prior, the other alternates the
Gibbs kernel with re-simulated data -- and z-tests every tracked moment.
Simulation-based calibration draws a truth from the prior, fits it, and
ranks the truth among posterior draws; the ranks must be uniform.  The
full-size versions (10^4 draws, 200 replicates) run in the acceptance
suite; this demo uses cut-down budgets to finish in about a minute.
"""

import numpy as np
from dataclasses import replace

from paleobhm import PseudoproxyDesign, SamplerConfig, sbc_check
from paleobhm.validation import geweke_check, geweke_instance
from paleobhm.pseudoproxy import draw_prior_params


def run_geweke(n_draws=1500):
    print(f"Geweke getting-it-right, {n_draws} draws per simulator:")
    res = geweke_check(geweke_instance(), n_draws=n_draws,
                       rng=np.random.default_rng(5))
    print(f"  {'moment':<22}{'prior sim':>10}{'gibbs sim':>10}{'z':>7}")
    for name in res.names:
        print(f"  {name:<22}{res.mc_mean[name]:>10.3f}"
              f"{res.sc_mean[name]:>10.3f}{res.z_scores[name]:>7.2f}")
    print(f"  max |z| = {res.max_abs_z:.2f} (flag at 4)\n")


def run_sbc(replicates=20):
    inst = geweke_instance(proxy_ar_enabled=False)
    cfg = replace(
        inst.cfg,
        sampler=SamplerConfig(n_chains=1, n_iter=1000, burn_in=150,
                              thin=1, seed=0, mh_scale=0.4, adapt_mh=False),
    )
    P = inst.n_proxies
    design = PseudoproxyDesign(
        grid=cfg.grid, n_years=inst.n_years, start_year=1801,
        calibration=cfg.calibration, snr=np.ones(P),
        proxy_starts=[1801, 1803, 1805],
        true_params=draw_prior_params(cfg, P, np.random.default_rng(0)),
        obs_sd=inst.obs_sd, forcings=inst.forcings,
    )
    print(f"simulation-based calibration, {replicates} replicates "
          f"(acceptance runs 200):")
    res = sbc_check(cfg, design, replicates, np.random.default_rng(31))
    for name, p in res.pvalues.items():
        print(f"  {name:<14} uniformity p = {p:.3f}")
    worst = min(res.pvalues.values())
    print(f"  min p = {worst:.3f} (flag at 0.001)")


if __name__ == "__main__":
    run_geweke()
    run_sbc()
