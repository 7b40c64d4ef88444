"""Command-line front end.

Subcommands:

  simulate   draw a synthetic dataset from a design and write input CSVs
  fit        run the Gibbs sampler on CSV inputs, persist draws + summary
  baseline   fit the direct calibration regression on the same inputs
  evaluate   score reconstructions against a held-out truth series
  validate   run the sampler-correctness checks (Geweke / SBC)

Exit codes: 0 success, 1 usage error, 2 bad data or configuration,
3 numerical failure inside the sampler.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io as pio
from .baseline import fit_direct, predict_direct
from .evaluation import (
    correlation,
    insample_mean_benchmark,
    interval_coverage,
    reconstruction_window,
    rmse,
    sbc_check,
)
from .gibbs import chain_diagnostics, run_chains
from .model import (
    DataError,
    Dataset,
    NumericalError,
    SamplerConfig,
    validate_config,
)
from .pseudoproxy import (
    PseudoproxyDesign,
    draw_prior_params,
    simulate_dataset,
)
from .validation import geweke_check, geweke_instance


def _resolve_threads(flag):
    if flag is not None:
        return max(int(flag), 1)
    env = os.environ.get("PALEO_BHM_THREADS")
    if env is not None and env.strip():
        try:
            return max(int(env), 1)
        except ValueError:
            raise DataError(
                f"PALEO_BHM_THREADS must be an integer, got {env!r}"
            ) from None
    return 1


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(args, command) -> pio.RunManifest:
    m = pio.RunManifest(command=command, seed=getattr(args, "seed", None))
    if getattr(args, "config", None):
        m.config_hash = pio.file_sha256(args.config)
    return m.start()


def _fmt(value):
    if value is None:
        return "NA"
    return repr(float(value))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    out = _out_dir(args)
    cfg = pio.load_config(args.config)
    manifest = _manifest(args, "simulate")
    seed = args.seed if args.seed is not None else 0
    rng = np.random.default_rng(seed)
    design, drew = cfg.pseudoproxy_design(rng)
    truth, data = simulate_dataset(design, rng)
    years = design.years

    pio.write_grid(design.grid, out / "grid.csv")
    pio.write_forcings(data.forcings, out / "forcings.csv")
    pio.write_footprints(data.panel.footprints, out / "footprints.csv")
    pio.write_proxies(data.panel, years, out / "proxies.csv")
    pio.write_instrumental(data.instrumental, years, out / "instrumental.csv")
    nh_true = truth.latents.nh_series(design.grid.area_weights)
    pio.write_series(years, nh_true, out / "truth.csv", name="nh_true")
    with open(out / "params_true.json", "w") as fh:
        json.dump(
            {"drawn_from_prior": drew,
             "obs_sd": design.obs_sd,
             "params": pio.params_to_dict(truth.params)},
            fh, indent=2,
        )
        fh.write("\n")

    manifest.seed = seed
    manifest.extra = {
        "n_years": design.n_years,
        "n_proxies": design.n_proxies,
        "n_cells": design.grid.n_cells,
        "params_drawn_from_prior": drew,
    }
    manifest.input_hashes = {
        name: pio.file_sha256(out / name)
        for name in ("grid.csv", "forcings.csv", "footprints.csv",
                     "proxies.csv", "instrumental.csv", "truth.csv")
    }
    manifest.finish().save(out / "manifest.json")
    print(f"simulate: wrote {design.n_years} years x {design.n_proxies} "
          f"proxies on {design.grid.n_cells} cells to {out}")
    return 0


def cmd_fit(args) -> int:
    out = _out_dir(args)
    cfg = pio.load_config(args.config)
    manifest = _manifest(args, "fit")
    paths = cfg.input_paths()
    inputs = pio.parse_inputs(paths, obs_sd=cfg.obs_sd())
    mcfg = cfg.model_config(inputs.grid, seed=args.seed, n_chains=args.chains)
    data = Dataset(panel=inputs.panel, forcings=inputs.forcings,
                   instrumental=inputs.instrumental)
    report = validate_config(mcfg, data.panel, data.forcings, data.instrumental)
    if not report.ok:
        print(report, file=sys.stderr)
        raise DataError("invalid configuration: " + "; ".join(report.violations))

    threads = _resolve_threads(args.threads)
    stores = run_chains(mcfg, data, n_threads=threads)
    for k, store in enumerate(stores):
        pio.write_draws(store, out / f"draws_chain{k}.jsonl")
    merged = pio.merge_draws(stores)
    summary = pio.summarize(merged, level=args.level)
    pio.write_summary(inputs.forcings.years, summary, out / "summary.csv")

    diag = {}
    if len(stores) >= 2 and stores[0].n_draws >= 4:
        diag = chain_diagnostics(stores)
    with open(out / "diagnostics.csv", "w") as fh:
        fh.write("name,rhat,ess\n")
        for name, d in diag.items():
            fh.write(f"{name},{_fmt(d['rhat'])},{_fmt(d['ess'])}\n")

    rhats = [d["rhat"] for d in diag.values() if d["rhat"] is not None]
    esss = [d["ess"] for d in diag.values() if d["ess"] is not None]
    manifest.input_hashes = {k: pio.file_sha256(v) for k, v in paths.items()}
    manifest.diagnostics = {
        "max_rhat": max(rhats) if rhats else None,
        "min_ess": min(esss) if esss else None,
        "n_chains": len(stores),
        "n_draws_total": merged.n_draws,
    }
    manifest.extra = {"threads": threads,
                      "proxy_scale": inputs.proxy_scale.tolist(),
                      "notes": list(inputs.notes)}
    manifest.finish().save(out / "manifest.json")
    rh = f"{max(rhats):.3f}" if rhats else "n/a"
    print(f"fit: {merged.n_draws} draws from {len(stores)} chain(s); "
          f"max R-hat {rh}; outputs in {out}")
    return 0


def cmd_baseline(args) -> int:
    out = _out_dir(args)
    cfg = pio.load_config(args.config)
    manifest = _manifest(args, "baseline")
    paths = cfg.input_paths()
    inputs = pio.parse_inputs(paths, obs_sd=cfg.obs_sd())
    if inputs.instrumental is None:
        raise DataError("baseline regression needs instrumental data")
    bl = cfg.baseline or {}
    window = bl.get("window", cfg.model.get("calibration"))
    if window is None:
        raise DataError("baseline needs a window (baseline.window or "
                        "model.calibration)")
    window = (int(window[0]), int(window[1]))
    years = inputs.forcings.years
    sel = (years >= window[0]) & (years <= window[1])
    if not inputs.instrumental.mask[sel].all():
        raise DataError(
            f"instrumental record does not cover the window {window}"
        )
    target = inputs.instrumental.obs @ inputs.grid.area_weights
    model = fit_direct(
        inputs.panel, years, target, window,
        ridge_penalty=float(bl.get("ridge_penalty", 0.0)),
        subset=bl.get("subset"),
    )
    predictable = inputs.panel.mask[:, list(model.subset)].all(axis=1)
    at_years = years[predictable]
    preds = predict_direct(model, inputs.panel, years, at_years)
    pio.write_series(at_years, preds, out / "baseline.csv")
    with open(out / "baseline_model.json", "w") as fh:
        json.dump(
            {"intercept": model.intercept,
             "weights": model.weights.tolist(),
             "subset": list(model.subset),
             "window": list(model.window),
             "ridge_penalty": model.ridge_penalty},
            fh, indent=2,
        )
        fh.write("\n")
    manifest.input_hashes = {k: pio.file_sha256(v) for k, v in paths.items()}
    manifest.extra = {"window": list(window), "n_predicted": int(predictable.sum())}
    manifest.finish().save(out / "manifest.json")
    print(f"baseline: fit on {window}, predictions for "
          f"{int(predictable.sum())} of {len(years)} years; outputs in {out}")
    return 0


def cmd_evaluate(args) -> int:
    out = _out_dir(args)
    cfg = pio.load_config(args.config)
    manifest = _manifest(args, "evaluate")
    calibration = cfg.model.get("calibration")
    if calibration is None:
        raise DataError("evaluate needs model.calibration to define the "
                        "reconstruction window")
    t_years, t_vals = pio.read_series(args.truth, name="nh_true")
    stores = [pio.read_draws(f) for f in args.draws]
    merged = pio.merge_draws(stores)
    T = merged.nh_recon.shape[1]
    if t_years.shape[0] != T:
        raise DataError(
            f"truth series covers {t_years.shape[0]} years but the draws "
            f"cover {T}"
        )
    window = reconstruction_window(t_years, calibration)
    if not window.any():
        raise DataError("no pre-calibration years to score")

    rows = []
    post_mean = merged.nh_recon.mean(axis=0)
    cov = interval_coverage(merged, t_vals, args.level, years=window)
    rows.append(("bhm_posterior_mean",
                 rmse(post_mean[window], t_vals[window]),
                 correlation(post_mean[window], t_vals[window]),
                 cov.coverage))

    if args.baseline is not None:
        b_years, b_vals = pio.read_series(args.baseline)
        pos = {int(y): i for i, y in enumerate(b_years)}
        joint = np.array([int(y) in pos for y in t_years]) & window
        if not joint.any():
            raise DataError("baseline predictions do not overlap the "
                            "reconstruction window")
        b_on = np.array([b_vals[pos[int(y)]] for y in t_years[joint]])
        rows.append(("direct_baseline",
                     rmse(b_on, t_vals[joint]),
                     correlation(b_on, t_vals[joint]),
                     None))

    if cfg.inputs and cfg.inputs.get("instrumental"):
        inputs = pio.parse_inputs(cfg.input_paths(), obs_sd=cfg.obs_sd())
        years = inputs.forcings.years
        if years.shape[0] == T and inputs.instrumental is not None:
            lo, hi = calibration
            calib = (years >= lo) & (years <= hi) & inputs.instrumental.mask
            if calib.any():
                nh_obs = inputs.instrumental.obs @ inputs.grid.area_weights
                bench = insample_mean_benchmark(nh_obs[calib], T)
                rows.append(("insample_mean",
                             rmse(bench[window], t_vals[window]),
                             correlation(bench[window], t_vals[window]),
                             None))

    with open(out / "scores.csv", "w") as fh:
        fh.write("series,n_years,rmse,correlation,coverage\n")
        for name, r, c, cv in rows:
            fh.write(f"{name},{int(window.sum())},{_fmt(r)},{_fmt(c)},"
                     f"{_fmt(cv)}\n")
    manifest.extra = {"level": args.level, "n_scored_years": int(window.sum())}
    manifest.finish().save(out / "manifest.json")
    for name, r, c, cv in rows:
        cov_txt = f", coverage {cv:.2f}" if cv is not None else ""
        corr_txt = f"{c:.3f}" if c is not None else "undefined"
        print(f"evaluate: {name}: rmse {r:.4f}, correlation {corr_txt}{cov_txt}")
    return 0


def _sbc_setup(seed):
    """Small fixed-mode instance and matching design for the SBC command."""
    inst = geweke_instance(proxy_ar_enabled=False)
    cfg = replace(
        inst.cfg,
        sampler=SamplerConfig(n_chains=1, n_iter=1400, burn_in=260,
                              thin=1, seed=seed, mh_scale=0.4, adapt_mh=False),
    )
    P = inst.n_proxies
    design = PseudoproxyDesign(
        grid=cfg.grid,
        n_years=inst.n_years,
        start_year=1801,
        calibration=cfg.calibration,
        snr=np.ones(P),
        proxy_starts=[1801, 1803, 1805],
        true_params=draw_prior_params(cfg, P, np.random.default_rng(0)),
        obs_sd=inst.obs_sd,
        forcings=inst.forcings,
    )
    return cfg, design


def cmd_validate(args) -> int:
    out = _out_dir(args)
    manifest = _manifest(args, "validate")
    rng = np.random.default_rng(args.seed)
    if args.mode == "geweke":
        inst = geweke_instance()
        res = geweke_check(inst, n_draws=args.draws, rng=rng)
        with open(out / "geweke.csv", "w") as fh:
            fh.write("name,z,prior_mean,chain_mean\n")
            for name in res.z_scores:
                fh.write(f"{name},{_fmt(res.z_scores[name])},"
                         f"{_fmt(res.mc_mean[name])},{_fmt(res.sc_mean[name])}\n")
        verdict = "PASS" if res.max_abs_z < 4.0 else "FAIL"
        manifest.extra = {"mode": "geweke", "n_draws": args.draws,
                          "max_abs_z": res.max_abs_z, "verdict": verdict}
        print(f"validate geweke: {args.draws} draws per simulator, "
              f"max |z| = {res.max_abs_z:.2f} [{verdict}]")
    else:
        cfg, design = _sbc_setup(args.seed)
        res = sbc_check(cfg, design, args.replicates, rng)
        with open(out / "sbc_pvalues.csv", "w") as fh:
            fh.write("scalar,pvalue\n")
            for name, p in res.pvalues.items():
                fh.write(f"{name},{_fmt(p)}\n")
        with open(out / "sbc_ranks.csv", "w") as fh:
            fh.write("replicate,scalar,rank\n")
            for name, rr in res.ranks.items():
                for k, r in enumerate(rr):
                    fh.write(f"{k},{name},{int(r)}\n")
        min_p = min(res.pvalues.values())
        verdict = "PASS" if min_p > 0.001 else "FAIL"
        manifest.extra = {"mode": "sbc", "n_replicates": args.replicates,
                          "min_pvalue": min_p, "verdict": verdict}
        print(f"validate sbc: {args.replicates} replicates, "
              f"min p-value = {min_p:.4f} [{verdict}]")
    manifest.finish().save(out / "manifest.json")
    return 0


# ---------------------------------------------------------------------------
# parser / dispatch
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="paleobhm",
        description="Hierarchical Bayesian temperature-field reconstruction",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True,
                            help="JSON run configuration")
        sp.add_argument("--out-dir", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None)

    sim = sub.add_parser("simulate",
                         help="draw a synthetic dataset and write input CSVs")
    common(sim)

    fit = sub.add_parser("fit", help="run the Gibbs sampler on CSV inputs")
    common(fit)
    fit.add_argument("--chains", type=int, default=None,
                     help="override sampler.n_chains")
    fit.add_argument("--threads", type=int, default=None,
                     help="worker threads (or PALEO_BHM_THREADS)")
    fit.add_argument("--level", type=float, default=0.9,
                     help="credible-interval level for summary.csv")

    base = sub.add_parser("baseline",
                          help="fit the direct calibration regression")
    common(base)

    ev = sub.add_parser("evaluate",
                        help="score reconstructions against a truth series")
    common(ev)
    ev.add_argument("--truth", required=True, help="truth.csv (year,nh_true)")
    ev.add_argument("--draws", required=True, nargs="+",
                    help="draw files from `fit`")
    ev.add_argument("--baseline", default=None,
                    help="baseline.csv from `baseline`")
    ev.add_argument("--level", type=float, default=0.9)

    va = sub.add_parser("validate",
                        help="sampler-correctness checks (Geweke / SBC)")
    va.add_argument("--mode", choices=("geweke", "sbc"), required=True)
    va.add_argument("--out-dir", required=True)
    va.add_argument("--seed", type=int, default=0)
    va.add_argument("--draws", type=int, default=2000,
                    help="draws per simulator (geweke mode)")
    va.add_argument("--replicates", type=int, default=40,
                    help="replicates (sbc mode)")
    return parser


_HANDLERS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "baseline": cmd_baseline,
    "evaluate": cmd_evaluate,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage problems and 0 for --help
        return 0 if exc.code == 0 else 1
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        return _HANDLERS[args.command](args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
