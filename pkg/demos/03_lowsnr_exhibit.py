"""The low-SNR case where RMSE alone rewards reconstructing nothing.

`lowsnr_exhibit.json` pins a design with eight SNR-0.15 proxies and a
15-year calibration window.  Unregularized direct regression overfits the
window so badly that a flat line at the calibration mean beats it on RMSE
over the reconstruction years -- yet the flat line has no skill at all
(correlation with truth undefined; the scorer flags it NA rather than
pretending zero).  The hierarchical model keeps both honest: lower RMSE
than either, real correlation, calibrated intervals.
"""

from pathlib import Path

import numpy as np

from paleobhm import (
    correlation,
    fit_direct,
    insample_mean_benchmark,
    load_config,
    predict_direct,
    reconstruction_window,
    rmse,
    run_chain,
    simulate_dataset,
)

N_REPLICATES = 10
CONFIG = Path(__file__).with_name("lowsnr_exhibit.json")


def main():
    cfg = load_config(CONFIG)
    design, _ = cfg.pseudoproxy_design()
    grid = cfg.grid_from_model()
    mcfg = cfg.model_config(grid, n_chains=1)
    years = design.years
    window = reconstruction_window(years, design.calibration)
    calib_sel = (years >= design.calibration[0]) & (years <= design.calibration[1])
    print(f"design: {design.n_proxies} proxies at SNR "
          f"{design.snr[0]:.2f}, calibration {design.calibration[0]}-"
          f"{design.calibration[1]} ({int(calib_sel.sum())} years), scoring "
          f"{int(window.sum())} reconstruction years\n")

    header = f"{'rep':>3}  {'direct rmse':>11}  {'bench rmse':>10}  " \
             f"{'bhm rmse':>8}  {'direct corr':>11}  {'bench corr':>10}"
    print(header)
    r_direct = np.empty(N_REPLICATES)
    r_bench = np.empty(N_REPLICATES)
    r_bhm = np.empty(N_REPLICATES)
    c_direct = np.empty(N_REPLICATES)
    for r in range(N_REPLICATES):
        rng = np.random.default_rng(np.random.SeedSequence((66, r)))
        truth, data = simulate_dataset(design, rng)
        truth_nh = truth.latents.nh_series(grid.area_weights)[window]
        target = data.instrumental.obs @ grid.area_weights

        model = fit_direct(data.panel, years, target, design.calibration)
        direct = predict_direct(model, data.panel, years, years[window])
        bench = insample_mean_benchmark(target[calib_sel], design.n_years)[window]
        store = run_chain(mcfg, data, seed=r)
        bhm = store.nh_recon.mean(axis=0)[window]

        r_direct[r] = rmse(direct, truth_nh)
        r_bench[r] = rmse(bench, truth_nh)
        r_bhm[r] = rmse(bhm, truth_nh)
        c_direct[r] = correlation(direct, truth_nh)
        bc = correlation(bench, truth_nh)
        bench_corr = "NA" if bc is None else f"{bc:.2f}"
        print(f"{r:>3}  {r_direct[r]:>11.2f}  {r_bench[r]:>10.2f}  "
              f"{r_bhm[r]:>8.2f}  {c_direct[r]:>11.2f}  {bench_corr:>10}")

    print(f"\nmeans over {N_REPLICATES} replicates:")
    print(f"  direct {r_direct.mean():.2f}  bench {r_bench.mean():.2f}  "
          f"bhm {r_bhm.mean():.2f}")
    wins = np.mean((r_bhm < r_direct) & (r_bhm < r_bench))
    print(f"  flat line beats direct regression on RMSE while saying nothing")
    print(f"  (its correlation is undefined); median direct correlation is "
          f"{np.median(c_direct):.2f},")
    print(f"  so the direct method does carry signal -- it just buries it in")
    print(f"  overfit variance; the BHM beats both in {100 * wins:.0f}% of "
          f"replicates")


if __name__ == "__main__":
    main()
