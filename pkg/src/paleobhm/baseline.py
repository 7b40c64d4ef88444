"""Direct predictive regression of the NH mean on proxies, and attenuation.

This is the comparison approach: regress the instrumental target directly
on proxy values over a calibration window, then extrapolate backward.  The
missing-data policy is deliberately strict -- a model fit on one proxy
subset refuses years where that subset is incomplete -- because needing a
separate model for every availability pattern is one of the structural
weaknesses this baseline exists to exhibit.  Errors in the proxies as
predictors attenuate the regression slope; attenuation_factor gives the
expected multiplicative bias in the univariate case.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import DataError, ProxyPanel


@dataclass(frozen=True)
class DirectModel:
    intercept: float
    weights: np.ndarray        # one per proxy in `subset`
    ridge_penalty: float
    window: tuple              # (first_year, last_year) used for fitting
    subset: tuple              # proxy indices the model reads

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "weights", w)
        if not np.all(np.isfinite(w)):
            raise ValueError("direct-model weights must be finite")
        if len(self.subset) == 0:
            raise ValueError("direct model needs a nonempty proxy subset")
        if w.shape != (len(self.subset),):
            raise ValueError("one weight per proxy in the subset")
        if self.ridge_penalty < 0:
            raise ValueError("ridge penalty must be nonnegative")


def fit_direct(panel: ProxyPanel, years, target, window, ridge_penalty=0.0,
               subset=None) -> DirectModel:
    """Ridge (OLS at penalty 0) regression of the target on proxy values.

    `years` aligns the panel rows and the target series; `window` is the
    (first, last) year pair to fit on.  Every proxy in the subset must be
    observed throughout the window.
    """
    years = np.asarray(years)
    target = np.asarray(target, dtype=float)
    if years.shape[0] != panel.n_years or target.shape[0] != panel.n_years:
        raise DataError("panel, years, and target lengths do not agree")
    if subset is None:
        subset = tuple(range(panel.n_proxies))
    else:
        subset = tuple(int(i) for i in subset)
    lo, hi = window
    sel = (years >= lo) & (years <= hi)
    if not np.any(sel):
        raise DataError(f"fitting window {window} contains no years")

    incomplete = [i for i in subset if not panel.mask[sel, i].all()]
    if incomplete:
        raise DataError(
            "proxies not fully observed on the fitting window: "
            + ", ".join(map(str, incomplete))
        )
    X = panel.values[np.ix_(sel, list(subset))]
    y = target[sel]
    xm = X.mean(axis=0)
    ym = y.mean()
    Xc = X - xm
    yc = y - ym
    gram = Xc.T @ Xc + ridge_penalty * np.eye(len(subset))
    if ridge_penalty == 0.0:
        cond = np.linalg.cond(gram) if gram.size else np.inf
        if not np.isfinite(cond) or cond > 1e12:
            raise DataError("collinear proxy design; OLS weights are not identified")
    weights = np.linalg.solve(gram, Xc.T @ yc)
    intercept = ym - float(weights @ xm)
    model = DirectModel(
        intercept=intercept, weights=weights, ridge_penalty=ridge_penalty,
        window=(lo, hi), subset=subset,
    )
    fitted = intercept + X @ weights
    if fitted.var() > y.var() + 1e-8 * max(y.var(), 1.0):
        raise DataError("regression fit exceeds the target variance")
    return model


def predict_direct(model: DirectModel, panel: ProxyPanel, years, at_years) -> np.ndarray:
    """Reconstruction at the requested years; the proxy subset must be present."""
    years = np.asarray(years)
    at_years = np.asarray(at_years)
    pos = {int(y): t for t, y in enumerate(years)}
    out = np.empty(len(at_years))
    for k, yr in enumerate(at_years):
        yr = int(yr)
        if yr not in pos:
            raise DataError(f"year {yr} is outside the panel")
        t = pos[yr]
        for i in model.subset:
            if not panel.mask[t, i]:
                raise DataError(f"proxy {i} is unobserved in year {yr}")
        x = panel.values[t, list(model.subset)]
        out[k] = model.intercept + float(model.weights @ x)
    return out


def attenuation_factor(gamma: float, signal_var: float, noise_var: float) -> float:
    """Reliability ratio: expected multiplicative bias of the direct slope.

    When a proxy x = gamma*s + u predicts the signal s, the population OLS
    slope of s on x is (1/gamma) * lambda with lambda below.
    """
    if not signal_var > 0:
        raise ValueError("signal variance must be positive")
    if noise_var < 0:
        raise ValueError("noise variance must be nonnegative")
    g2v = gamma**2 * signal_var
    return g2v / (g2v + noise_var)
