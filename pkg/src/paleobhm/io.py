"""File formats: CSV inputs, JSON config, line-delimited draw files.

Parsing is strict on purpose.  Every malformed cell is reported with its
file and line number, duplicate keys are errors rather than silent
overwrites, and unknown config keys are rejected so a typo cannot turn
into a silently-ignored setting.  Draw files store floats through
``repr`` round-trip (the JSON shortest-representation rule), which makes
write->read bit-exact for binary64.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import warnings
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .gibbs import DrawStore
from .model import (
    DataError,
    ForcingSeries,
    GridSpec,
    InstrumentalSeries,
    ModelConfig,
    Params,
    PriorConfig,
    ProxyPanel,
    SamplerConfig,
)
from .pseudoproxy import PseudoproxyDesign, draw_prior_params

try:
    from importlib.metadata import version as _pkg_version

    __version__ = _pkg_version("paleobhm")
except Exception:  # pragma: no cover - metadata missing in odd installs
    __version__ = "0.0.0"

DRAWS_FORMAT = "paleobhm-draws"
DRAWS_VERSION = 1
CONFIG_SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# CSV primitives
# ---------------------------------------------------------------------------

def _read_csv(path, expected_header):
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: file does not exist")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if header != list(expected_header):
            raise DataError(
                f"{path}:1: expected header {','.join(expected_header)!r}, "
                f"got {','.join(header)!r}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not f.strip() for f in row):
                continue
            if len(row) != len(expected_header):
                raise DataError(
                    f"{path}:{lineno}: expected {len(expected_header)} fields, "
                    f"got {len(row)}"
                )
            rows.append((lineno, [f.strip() for f in row]))
    return rows


def _parse_int(text, path, lineno, name):
    try:
        return int(text)
    except ValueError:
        raise DataError(f"{path}:{lineno}: {name} {text!r} is not an integer") from None


def _parse_float(text, path, lineno, name, allow_nan=False):
    try:
        val = float(text)
    except ValueError:
        raise DataError(f"{path}:{lineno}: {name} {text!r} is not a number") from None
    if not allow_nan and not math.isfinite(val):
        raise DataError(f"{path}:{lineno}: {name} must be finite, got {text!r}")
    return val


# ---------------------------------------------------------------------------
# input readers
# ---------------------------------------------------------------------------

def load_grid(path) -> GridSpec:
    rows = _read_csv(path, ("cell_id", "area_weight"))
    seen = {}
    for lineno, (cid, w) in rows:
        g = _parse_int(cid, path, lineno, "cell_id")
        if g in seen:
            raise DataError(f"{path}:{lineno}: duplicate cell_id {g}")
        seen[g] = _parse_float(w, path, lineno, "area_weight")
    if not seen:
        raise DataError(f"{path}: no grid cells")
    G = max(seen) + 1
    missing = sorted(set(range(G)) - set(seen))
    if missing:
        raise DataError(f"{path}: cell_ids must cover 0..{G - 1}; missing {missing}")
    weights = np.array([seen[g] for g in range(G)])
    try:
        return GridSpec(area_weights=weights)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def load_forcings(path) -> ForcingSeries:
    rows = _read_csv(path, ("year", "solar", "volcanic", "co2"))
    if not rows:
        raise DataError(f"{path}: no forcing rows")
    years, cols = [], []
    prev = None
    for lineno, (yr, s, v, c) in rows:
        year = _parse_int(yr, path, lineno, "year")
        if prev is not None:
            if year == prev:
                raise DataError(f"{path}:{lineno}: duplicate year {year}")
            if year != prev + 1:
                raise DataError(
                    f"{path}:{lineno}: years must be contiguous ascending; "
                    f"{year} follows {prev}"
                )
        prev = year
        years.append(year)
        cols.append([_parse_float(x, path, lineno, n)
                     for x, n in ((s, "solar"), (v, "volcanic"), (c, "co2"))])
    arr = np.array(cols)
    return ForcingSeries(years=np.array(years), solar=arr[:, 0],
                         volcanic=arr[:, 1], co2=arr[:, 2])


def load_footprints(path, n_cells) -> np.ndarray:
    rows = _read_csv(path, ("proxy_id", "cell_id", "weight"))
    if not rows:
        raise DataError(f"{path}: no footprint rows")
    entries = {}
    for lineno, (pid, cid, w) in rows:
        i = _parse_int(pid, path, lineno, "proxy_id")
        g = _parse_int(cid, path, lineno, "cell_id")
        if i < 0:
            raise DataError(f"{path}:{lineno}: proxy_id must be nonnegative")
        if not 0 <= g < n_cells:
            raise DataError(
                f"{path}:{lineno}: cell_id {g} outside the grid (0..{n_cells - 1})"
            )
        if (i, g) in entries:
            raise DataError(
                f"{path}:{lineno}: duplicate footprint for proxy {i}, cell {g}"
            )
        entries[(i, g)] = _parse_float(w, path, lineno, "weight")
    P = max(i for i, _ in entries) + 1
    out = np.zeros((P, n_cells))
    for (i, g), w in entries.items():
        out[i, g] = w
    empty = [i for i in range(P) if not np.any(out[i])]
    if empty:
        raise DataError(f"{path}: proxies without footprint rows: {empty}")
    return out


def load_proxies(path, years, n_proxies):
    """Long-format panel; returns (values, mask, warning list)."""
    rows = _read_csv(path, ("year", "proxy_id", "value"))
    year_pos = {int(y): t for t, y in enumerate(years)}
    T = len(years)
    values = np.full((T, n_proxies), np.nan)
    mask = np.zeros((T, n_proxies), dtype=bool)
    for lineno, (yr, pid, val) in rows:
        year = _parse_int(yr, path, lineno, "year")
        i = _parse_int(pid, path, lineno, "proxy_id")
        if year not in year_pos:
            raise DataError(
                f"{path}:{lineno}: year {year} outside the forcing record "
                f"({years[0]}..{years[-1]})"
            )
        if not 0 <= i < n_proxies:
            raise DataError(
                f"{path}:{lineno}: proxy_id {i} has no footprint "
                f"(expected 0..{n_proxies - 1})"
            )
        t = year_pos[year]
        if mask[t, i]:
            raise DataError(
                f"{path}:{lineno}: duplicate row for year {year}, proxy {i}"
            )
        x = _parse_float(val, path, lineno, "value", allow_nan=True)
        if not math.isfinite(x):
            raise DataError(
                f"{path}:{lineno}: non-finite value in an observed cell "
                f"(year {year}, proxy {i}); omit the row instead"
            )
        values[t, i] = x
        mask[t, i] = True
    notes = []
    for i in range(n_proxies):
        if not mask[:, i].any():
            msg = f"{path}: proxy {i} has no observations"
            warnings.warn(msg)
            notes.append(msg)
    return values, mask, notes


def load_instrumental(path, years, n_cells, obs_sd) -> InstrumentalSeries:
    rows = _read_csv(path, ("year", "cell_id", "value"))
    year_pos = {int(y): t for t, y in enumerate(years)}
    T = len(years)
    obs = np.zeros((T, n_cells))
    seen = np.zeros((T, n_cells), dtype=bool)
    for lineno, (yr, cid, val) in rows:
        year = _parse_int(yr, path, lineno, "year")
        g = _parse_int(cid, path, lineno, "cell_id")
        if year not in year_pos:
            raise DataError(
                f"{path}:{lineno}: year {year} outside the forcing record"
            )
        if not 0 <= g < n_cells:
            raise DataError(f"{path}:{lineno}: cell_id {g} outside the grid")
        t = year_pos[year]
        if seen[t, g]:
            raise DataError(
                f"{path}:{lineno}: duplicate row for year {year}, cell {g}"
            )
        obs[t, g] = _parse_float(val, path, lineno, "value")
        seen[t, g] = True
    mask = seen.any(axis=1)
    partial = np.flatnonzero(mask & ~seen.all(axis=1))
    if partial.size:
        yr = int(np.asarray(years)[partial[0]])
        raise DataError(
            f"{path}: instrumental year {yr} is missing some grid cells; "
            "each covered year needs a full snapshot"
        )
    obs[~mask] = 0.0
    return InstrumentalSeries(obs=obs, mask=mask, obs_sd=obs_sd)


def standardize_panel(values, mask):
    """Per-proxy zero mean / unit variance over observed cells.

    Returns (standardized values, (P, 2) array of [mean, sd]).
    """
    values = np.asarray(values, dtype=float)
    mask = np.asarray(mask, dtype=bool)
    P = values.shape[1]
    scale = np.zeros((P, 2))
    out = np.where(mask, values, 0.0)
    for i in range(P):
        obs = values[mask[:, i], i]
        if obs.size == 0:
            scale[i] = (0.0, 1.0)
            continue
        m = obs.mean()
        s = obs.std()
        if s == 0.0:
            raise DataError(
                f"proxy {i} is constant over its observed years; "
                "cannot standardize to unit variance"
            )
        scale[i] = (m, s)
        out[mask[:, i], i] = (obs - m) / s
    return out, scale


@dataclass(frozen=True)
class ParsedInputs:
    grid: GridSpec
    panel: ProxyPanel
    forcings: ForcingSeries
    instrumental: InstrumentalSeries | None
    proxy_scale: np.ndarray     # (P, 2) [mean, sd] removed from each proxy
    notes: tuple = ()


def parse_inputs(paths: dict, obs_sd: float | None = None,
                 standardize: bool = True) -> ParsedInputs:
    """Load and cross-validate the full input bundle.

    `paths` maps {"grid", "forcings", "footprints", "proxies"} (and
    optionally "instrumental", which then requires obs_sd) to files.
    """
    required = {"grid", "forcings", "footprints", "proxies"}
    missing = sorted(required - set(paths))
    if missing:
        raise DataError(f"missing input paths: {', '.join(missing)}")
    grid = load_grid(paths["grid"])
    forcings = load_forcings(paths["forcings"])
    footprints = load_footprints(paths["footprints"], grid.n_cells)
    values, mask, notes = load_proxies(
        paths["proxies"], forcings.years, footprints.shape[0]
    )
    if standardize:
        values, scale = standardize_panel(values, mask)
    else:
        scale = np.column_stack([np.zeros(footprints.shape[0]),
                                 np.ones(footprints.shape[0])])
        values = np.where(mask, values, 0.0)
    panel = ProxyPanel(values=values, mask=mask, footprints=footprints)
    instrumental = None
    if paths.get("instrumental") is not None:
        if obs_sd is None:
            raise DataError(
                "instrumental data need a known observation noise sd "
                "(model.obs_sd in the config)"
            )
        instrumental = load_instrumental(
            paths["instrumental"], forcings.years, grid.n_cells, obs_sd
        )
    return ParsedInputs(grid=grid, panel=panel, forcings=forcings,
                        instrumental=instrumental, proxy_scale=scale,
                        notes=tuple(notes))


# ---------------------------------------------------------------------------
# input writers (used by `simulate` and the test fixtures)
# ---------------------------------------------------------------------------

def write_grid(grid: GridSpec, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cell_id", "area_weight"])
        for g, wt in enumerate(grid.area_weights):
            w.writerow([g, repr(float(wt))])


def write_forcings(forcings: ForcingSeries, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["year", "solar", "volcanic", "co2"])
        for t, yr in enumerate(forcings.years):
            w.writerow([int(yr), repr(float(forcings.solar[t])),
                        repr(float(forcings.volcanic[t])),
                        repr(float(forcings.co2[t]))])


def write_footprints(footprints, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["proxy_id", "cell_id", "weight"])
        for i, row in enumerate(np.asarray(footprints)):
            for g in np.flatnonzero(row):
                w.writerow([i, int(g), repr(float(row[g]))])


def write_proxies(panel: ProxyPanel, years, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["year", "proxy_id", "value"])
        for t, yr in enumerate(np.asarray(years)):
            for i in np.flatnonzero(panel.mask[t]):
                w.writerow([int(yr), int(i), repr(float(panel.values[t, i]))])


def write_instrumental(inst: InstrumentalSeries, years, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["year", "cell_id", "value"])
        for t in np.flatnonzero(inst.mask):
            for g in range(inst.obs.shape[1]):
                w.writerow([int(np.asarray(years)[t]), g,
                            repr(float(inst.obs[t, g]))])


def write_series(years, values, path, name="value"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["year", name])
        for yr, v in zip(np.asarray(years), np.asarray(values)):
            w.writerow([int(yr), repr(float(v))])


def read_series(path, name="value"):
    rows = _read_csv(path, ("year", name))
    years = np.array([_parse_int(r[0], path, ln, "year") for ln, r in rows])
    vals = np.array([_parse_float(r[1], path, ln, name) for ln, r in rows])
    return years, vals


# ---------------------------------------------------------------------------
# draw persistence
# ---------------------------------------------------------------------------

_ARRAY_FIELDS = ("gamma", "gamma_mean", "gamma_var", "proxy_noise_var",
                 "proxy_ar", "mu", "omega", "nh_ar", "nh_var", "A", "Sigma",
                 "v", "w", "y", "nh_recon")


def write_draws(store: DrawStore, path):
    """Header line plus one JSON record per thinned draw; lossless floats."""
    header = {
        "format": DRAWS_FORMAT,
        "version": DRAWS_VERSION,
        "n_draws": store.n_draws,
        "shapes": {name: list(getattr(store, name).shape[1:])
                   for name in _ARRAY_FIELDS},
        "meta": store.meta,
    }
    with open(path, "w") as fh:
        fh.write(json.dumps(header) + "\n")
        for k in range(store.n_draws):
            rec = {name: getattr(store, name)[k].tolist()
                   for name in _ARRAY_FIELDS}
            fh.write(json.dumps(rec) + "\n")


def read_draws(path) -> DrawStore:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: file does not exist")
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataError(f"{path}: empty draw file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:1: unreadable header: {exc}") from None
    if header.get("format") != DRAWS_FORMAT:
        raise DataError(f"{path}: not a draw file (format {header.get('format')!r})")
    if header.get("version") != DRAWS_VERSION:
        raise DataError(
            f"{path}: draw file version {header.get('version')} is not "
            f"supported by this reader (version {DRAWS_VERSION})"
        )
    n = int(header["n_draws"])
    shapes = header["shapes"]
    if set(shapes) != set(_ARRAY_FIELDS):
        raise DataError(f"{path}: header names unexpected arrays")
    if len(lines) - 1 != n:
        raise DataError(
            f"{path}: truncated or padded draw file: header promises {n} "
            f"records, found {len(lines) - 1}"
        )
    arrays = {name: np.empty([n] + list(shape))
              for name, shape in shapes.items()}
    for k in range(n):
        try:
            rec = json.loads(lines[k + 1])
        except json.JSONDecodeError as exc:
            raise DataError(
                f"{path}:{k + 2}: corrupt draw record: {exc}"
            ) from None
        for name in _ARRAY_FIELDS:
            try:
                arrays[name][k] = rec[name]
            except (KeyError, ValueError) as exc:
                raise DataError(
                    f"{path}:{k + 2}: corrupt draw record ({name}): {exc}"
                ) from None
    return DrawStore(meta=dict(header.get("meta", {})), **arrays)


def merge_draws(stores) -> DrawStore:
    """Concatenate per-chain stores (post burn-in draws pooled)."""
    stores = list(stores)
    if not stores:
        raise ValueError("no draw stores to merge")
    arrays = {name: np.concatenate([getattr(s, name) for s in stores])
              for name in _ARRAY_FIELDS}
    meta = dict(stores[0].meta)
    meta["n_chains_merged"] = len(stores)
    return DrawStore(meta=meta, **arrays)


def summarize(store: DrawStore, level: float = 0.9) -> dict:
    """Per-year posterior mean, median, and central interval of the NH mean."""
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    draws = store.nh_recon
    if draws.shape[0] == 0:
        raise ValueError("empty draw store")
    alpha = 0.5 * (1.0 - level)
    return {
        "mean": draws.mean(axis=0),
        "median": np.median(draws, axis=0),
        "lower": np.quantile(draws, alpha, axis=0),
        "upper": np.quantile(draws, 1.0 - alpha, axis=0),
        "level": level,
        "n_draws": draws.shape[0],
    }


def write_summary(years, summary: dict, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["year", "mean", "median", "lower", "upper"])
        for t, yr in enumerate(np.asarray(years)):
            w.writerow([int(yr)] + [repr(float(summary[k][t]))
                                    for k in ("mean", "median", "lower", "upper")])


# ---------------------------------------------------------------------------
# manifests
# ---------------------------------------------------------------------------

def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


@dataclass
class RunManifest:
    command: str
    seed: int | None
    config_hash: str | None = None
    input_hashes: dict = field(default_factory=dict)
    software_version: str = __version__
    started: str = ""
    finished: str = ""
    diagnostics: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def start(self):
        self.started = datetime.now(timezone.utc).isoformat()
        return self

    def finish(self):
        self.finished = datetime.now(timezone.utc).isoformat()
        return self

    def to_dict(self) -> dict:
        return {
            "command": self.command,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "input_hashes": dict(self.input_hashes),
            "software_version": self.software_version,
            "started": self.started,
            "finished": self.finished,
            "diagnostics": self.diagnostics,
            "extra": self.extra,
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2, default=float)
            fh.write("\n")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

_MODEL_KEYS = {
    "area_weights", "priors", "sampler", "proxy_ar_enabled", "a_structure",
    "calibration", "initial_state_mode", "fixed_v_var", "fixed_w_var",
    "obs_sd",
}
_PRIOR_KEYS = {f.name for f in PriorConfig.__dataclass_fields__.values()}
_SAMPLER_KEYS = {f.name for f in SamplerConfig.__dataclass_fields__.values()}
_DESIGN_KEYS = {
    "n_years", "start_year", "calibration", "snr", "proxy_starts",
    "footprint_mode", "footprint_width", "obs_sd", "forcing_ar",
    "forcing_sd", "true_params",
}
_PARAMS_KEYS = {f.name for f in Params.__dataclass_fields__.values()}
_INPUT_KEYS = {"grid", "forcings", "footprints", "proxies", "instrumental"}
_BASELINE_KEYS = {"window", "ridge_penalty", "subset"}
_TOP_KEYS = {"schema_version", "model", "design", "inputs", "baseline"}


def _check_keys(section: dict, allowed: set, where: str):
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise DataError(f"unknown config keys in {where}: {', '.join(unknown)}")


@dataclass(frozen=True)
class RunConfig:
    """Validated contents of a config file plus its location."""

    schema_version: int
    model: dict
    design: dict | None
    inputs: dict | None
    baseline: dict | None
    base_dir: Path
    source: Path | None = None

    def resolve(self, rel) -> Path:
        return (self.base_dir / rel).resolve()

    def input_paths(self) -> dict:
        if not self.inputs:
            raise DataError("config has no inputs section")
        return {k: self.resolve(v) for k, v in self.inputs.items()
                if v is not None}

    def priors(self) -> PriorConfig:
        return PriorConfig(**self.model.get("priors", {}))

    def sampler(self, seed=None, n_chains=None) -> SamplerConfig:
        kw = dict(self.model.get("sampler", {}))
        if seed is not None:
            kw["seed"] = int(seed)
        if n_chains is not None:
            kw["n_chains"] = int(n_chains)
        return SamplerConfig(**kw)

    def obs_sd(self) -> float | None:
        val = self.model.get("obs_sd")
        return None if val is None else float(val)

    def model_config(self, grid: GridSpec, seed=None, n_chains=None) -> ModelConfig:
        m = self.model
        inline = m.get("area_weights")
        if inline is not None and not np.allclose(
            np.asarray(inline, dtype=float), grid.area_weights, atol=1e-12
        ):
            raise DataError(
                "config area_weights disagree with the grid file"
            )
        kw = {}
        for key in ("proxy_ar_enabled", "a_structure", "initial_state_mode",
                    "fixed_v_var", "fixed_w_var"):
            if key in m:
                kw[key] = m[key]
        calibration = m.get("calibration")
        if calibration is not None:
            calibration = tuple(int(x) for x in calibration)
        try:
            return ModelConfig(
                grid=grid,
                priors=self.priors(),
                sampler=self.sampler(seed=seed, n_chains=n_chains),
                calibration=calibration,
                **kw,
            )
        except (TypeError, ValueError) as exc:
            raise DataError(f"bad model section: {exc}") from None

    def grid_from_model(self) -> GridSpec:
        weights = self.model.get("area_weights")
        if weights is None:
            raise DataError(
                "simulation needs model.area_weights in the config "
                "(no grid file exists yet)"
            )
        try:
            return GridSpec(area_weights=np.asarray(weights, dtype=float))
        except ValueError as exc:
            raise DataError(f"bad area_weights: {exc}") from None

    def pseudoproxy_design(self, rng=None):
        """Build the design; true params come from the config or the priors.

        Returns (design, params_were_drawn).
        """
        if not self.design:
            raise DataError("config has no design section")
        d = dict(self.design)
        grid = self.grid_from_model()
        calibration = d.pop("calibration", self.model.get("calibration"))
        if calibration is None:
            raise DataError("design needs a calibration window")
        raw_params = d.pop("true_params", None)
        drawn = raw_params is None
        if drawn:
            if rng is None:
                raise DataError("true_params absent and no RNG supplied")
            snr = np.asarray(d.get("snr", ()), dtype=float)
            cfg = self.model_config(grid)
            params = draw_prior_params(cfg, len(snr), rng)
        else:
            params = params_from_dict(raw_params)
        try:
            design = PseudoproxyDesign(
                grid=grid,
                calibration=tuple(int(x) for x in calibration),
                true_params=params,
                **d,
            )
        except (TypeError, ValueError) as exc:
            raise DataError(f"bad design section: {exc}") from None
        return design, drawn


def params_from_dict(raw: dict) -> Params:
    _check_keys(raw, _PARAMS_KEYS, "true_params")
    missing = sorted(_PARAMS_KEYS - set(raw))
    if missing:
        raise DataError(f"true_params missing fields: {', '.join(missing)}")
    try:
        return Params(
            gamma=np.asarray(raw["gamma"], dtype=float),
            gamma_mean=float(raw["gamma_mean"]),
            gamma_var=float(raw["gamma_var"]),
            proxy_noise_var=np.asarray(raw["proxy_noise_var"], dtype=float),
            proxy_ar=np.asarray(raw["proxy_ar"], dtype=float),
            mu=float(raw["mu"]),
            omega=np.asarray(raw["omega"], dtype=float),
            nh_ar=float(raw["nh_ar"]),
            nh_var=float(raw["nh_var"]),
            A=np.asarray(raw["A"], dtype=float),
            Sigma=np.asarray(raw["Sigma"], dtype=float),
        )
    except ValueError as exc:
        raise DataError(f"bad true_params: {exc}") from None


def params_to_dict(params: Params) -> dict:
    return {
        "gamma": params.gamma.tolist(),
        "gamma_mean": params.gamma_mean,
        "gamma_var": params.gamma_var,
        "proxy_noise_var": params.proxy_noise_var.tolist(),
        "proxy_ar": params.proxy_ar.tolist(),
        "mu": params.mu,
        "omega": params.omega.tolist(),
        "nh_ar": params.nh_ar,
        "nh_var": params.nh_var,
        "A": params.A.tolist(),
        "Sigma": params.Sigma.tolist(),
    }


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: config file does not exist")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise DataError(f"{path}: config must be a JSON object")
    _check_keys(raw, _TOP_KEYS, "the top level")
    version = raw.get("schema_version")
    if version != CONFIG_SCHEMA_VERSION:
        raise DataError(
            f"{path}: schema_version {version!r} is not supported "
            f"(expected {CONFIG_SCHEMA_VERSION})"
        )
    model = raw.get("model", {})
    _check_keys(model, _MODEL_KEYS, "model")
    _check_keys(model.get("priors", {}), _PRIOR_KEYS, "model.priors")
    _check_keys(model.get("sampler", {}), _SAMPLER_KEYS, "model.sampler")
    design = raw.get("design")
    if design is not None:
        _check_keys(design, _DESIGN_KEYS, "design")
    inputs = raw.get("inputs")
    if inputs is not None:
        _check_keys(inputs, _INPUT_KEYS, "inputs")
    baseline = raw.get("baseline")
    if baseline is not None:
        _check_keys(baseline, _BASELINE_KEYS, "baseline")
    return RunConfig(
        schema_version=version,
        model=model,
        design=design,
        inputs=inputs,
        baseline=baseline,
        base_dir=path.parent,
        source=path,
    )
