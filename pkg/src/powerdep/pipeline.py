"""Per-hour dependence studies and their rolling-window variant.

Two entry points orchestrate the full modelling chain (marginal
AR-GARCH fits, pseudo-observations, vine copula, dependence measures):

* :func:`run_global` analyses each requested hour on the whole sample
  and collects induced Spearman correlations, pairwise tail-dependence
  curves, the multivariate tail coefficients of price given the other
  variables, and the high/low scenario table.
* :func:`run_rolling` re-estimates marginals and vine on a sliding
  window and tracks the induced pairwise Spearman correlations over
  time next to the full-sample reference value.

Results serialize through :func:`write_report_bundle` into one JSON per
hour, a long-format CSV of every series, and a run-metadata JSON.  All
randomness flows from the config seed through per-purpose child seeds,
so an identical (data, config) pair reproduces the bundle byte for
byte.
"""

from __future__ import annotations

import csv
import io
import json
import os
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy

from . import taildep, vine
from .bicop import DEFAULT_CANDIDATES
from .data_ingest import SOLAR_HOURS, build_dummies, HourlyPanel
from .errors import (
    ConfigError,
    DegenerateSeriesError,
    DomainError,
    OptimizationError,
    PowerdepError,
)
from .marginals import MarginalSpec, fit_ar_garch
from .taildep import ScenarioPattern

# purpose codes for child-seed derivation; fixed forever for reproducibility
_SEED_SPEARMAN = 1
_SEED_TDC = 2
_SEED_LAMBDA = 3
_SEED_SCENARIO = 4
_SEED_ROLL = 5
_SEED_REFERENCE = 6

# default scenario set: conditioning directions over (demand, wind, solar),
# target price high
DEFAULT_SCENARIOS = ("HLL", "HHL", "HLH", "LHH", "LHL")

# smallest window that satisfies every marginal fit's length precondition
_MIN_WINDOW = 58

_CSV_COLUMNS = (
    "hour",
    "section",
    "measure",
    "pair",
    "pattern",
    "side",
    "alpha",
    "beta",
    "window_end",
    "value",
    "ratio",
    "stderr",
    "reliable",
)


def child_seed(base, *keys):
    """Deterministic child seed from the run seed and integer keys."""
    ss = np.random.SeedSequence(entropy=(int(base),) + tuple(int(k) for k in keys))
    return int(ss.generate_state(1, np.uint64)[0])


def window_count(total_days, window_days, step_days):
    """Number of rolling windows: floor((T - window)/step) + 1."""
    total = int(total_days)
    window = int(window_days)
    step = int(step_days)
    if window < 1 or step < 1:
        raise DomainError("window_days and step_days must be positive")
    if total < window:
        raise DomainError(
            f"total days {total} shorter than the window {window}"
        )
    return (total - window) // step + 1


def _parse_pattern_token(token):
    text = str(token).strip()
    if ":" in text:
        body, target = text.split(":", 1)
    else:
        body, target = text, "H"
    body = body.upper()
    target = target.upper()
    if not body or any(c not in "HL" for c in body):
        raise ConfigError(f"scenario pattern {token!r} must use only H and L")
    if target not in ("H", "L"):
        raise ConfigError(f"scenario target in {token!r} must be H or L")
    return body, target


@dataclass(frozen=True)
class AnalysisConfig:
    """Knobs of a full run; defaults follow the published study scale."""

    hours: tuple = tuple(range(24))
    window_days: int = 730
    step_days: int = 1
    alpha: float = 0.05
    beta: float = 0.05
    alpha_grid: tuple = taildep.DEFAULT_ALPHA_GRID
    tdc_grid: tuple = (0.05, 0.025, 0.01)
    n_mc_spearman: int = 100_000
    n_mc_tdc: int = 200_000
    n_mc_lambda: int = 40_000
    n_mc_scenario: int = 20_000
    n_mc_rolling: int = 20_000
    seed: int = 0
    indep_test: float | None = vine.INDEP_TEST_LEVEL
    candidates: tuple = DEFAULT_CANDIDATES
    scenarios: tuple = DEFAULT_SCENARIOS
    jobs: int = 1

    def __post_init__(self):
        hours = tuple(int(h) for h in self.hours)
        if any(not 0 <= h <= 23 for h in hours):
            raise ConfigError("hours must lie in 0..23")
        if len(set(hours)) != len(hours):
            raise ConfigError("hours must be distinct")
        object.__setattr__(self, "hours", hours)
        if self.window_days < _MIN_WINDOW:
            raise ConfigError(
                f"window_days must be at least {_MIN_WINDOW} to fit marginals"
            )
        if self.step_days < 1:
            raise ConfigError("step_days must be at least 1")
        if not (0.0 < self.alpha < 0.5) or not (0.0 < self.beta < 0.5):
            raise ConfigError("alpha and beta must lie in (0, 0.5)")
        for name, floor in (
            ("n_mc_spearman", 10_000),
            ("n_mc_tdc", 1000),
            ("n_mc_lambda", 1000),
            ("n_mc_scenario", 1000),
            ("n_mc_rolling", 10_000),
        ):
            if getattr(self, name) < floor:
                raise ConfigError(f"{name} must be at least {floor}")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        object.__setattr__(
            self, "alpha_grid", tuple(float(a) for a in self.alpha_grid)
        )
        object.__setattr__(self, "tdc_grid", tuple(float(t) for t in self.tdc_grid))
        object.__setattr__(
            self,
            "candidates",
            tuple((str(f), int(r)) for f, r in self.candidates),
        )
        # validate eagerly so a bad pattern fails at config time
        parsed = tuple(_parse_pattern_token(p) for p in self.scenarios)
        object.__setattr__(
            self,
            "scenarios",
            tuple(b if t == "H" else f"{b}:{t}" for b, t in parsed),
        )

    def to_json_dict(self):
        return {
            "hours": list(self.hours),
            "window_days": self.window_days,
            "step_days": self.step_days,
            "alpha": self.alpha,
            "beta": self.beta,
            "alpha_grid": list(self.alpha_grid),
            "tdc_grid": list(self.tdc_grid),
            "n_mc_spearman": self.n_mc_spearman,
            "n_mc_tdc": self.n_mc_tdc,
            "n_mc_lambda": self.n_mc_lambda,
            "n_mc_scenario": self.n_mc_scenario,
            "n_mc_rolling": self.n_mc_rolling,
            "seed": self.seed,
            "indep_test": self.indep_test,
            "candidates": [list(c) for c in self.candidates],
            "scenarios": list(self.scenarios),
            "jobs": self.jobs,
        }

    @classmethod
    def from_json_dict(cls, data):
        kwargs = dict(data)
        for key in ("hours", "alpha_grid", "tdc_grid", "scenarios"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        if "candidates" in kwargs:
            kwargs["candidates"] = tuple(tuple(c) for c in kwargs["candidates"])
        unknown = set(kwargs) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**kwargs)


@dataclass(frozen=True)
class HourlyAnalysisResult:
    """Everything the global study produces for one hour."""

    hour: int
    variable_names: tuple
    marginals: dict
    vine_model: vine.VineModel
    spearman: dict
    spearman_matrix: tuple
    pairwise_tdc: dict
    lambda_k: dict
    scenario_table: tuple
    warnings: tuple = ()

    def __post_init__(self):
        quad = self.hour in SOLAR_HOURS
        if (len(self.variable_names) == 4) != quad:
            raise DomainError(
                f"hour {self.hour} must carry "
                f"{'four' if quad else 'three'} variables"
            )

    def to_json_dict(self):
        return {
            "hour": self.hour,
            "variables": list(self.variable_names),
            "marginals": {
                name: fit.to_json_dict() for name, fit in self.marginals.items()
            },
            "vine": self.vine_model.to_json_dict(),
            "spearman": {k: dict(v) for k, v in self.spearman.items()},
            "spearman_matrix": [list(row) for row in self.spearman_matrix],
            "pairwise_tdc": {k: v for k, v in self.pairwise_tdc.items()},
            "lambda_k": {k: v.to_json_dict() for k, v in self.lambda_k.items()},
            "scenarios": [
                {
                    "pattern": row["pattern"],
                    "target_direction": row["target_direction"],
                    "result": row["result"].to_json_dict(),
                }
                for row in self.scenario_table
            ],
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class GlobalRunResult:
    results: tuple
    failures: tuple

    def by_hour(self):
        return {res.hour: res for res in self.results}


@dataclass(frozen=True)
class RollingResult:
    """Per-window dependence series for one hour."""

    hour: int
    variable_names: tuple
    window_days: int
    step_days: int
    window_end_dates: tuple
    series: dict
    reference: dict
    skipped: tuple = ()

    def __post_init__(self):
        for pair, values in self.series.items():
            if len(values) != len(self.window_end_dates):
                raise DomainError(
                    f"series for {pair} does not match the window count"
                )

    def to_json_dict(self):
        return {
            "hour": self.hour,
            "variables": list(self.variable_names),
            "window_days": self.window_days,
            "step_days": self.step_days,
            "window_end_dates": list(self.window_end_dates),
            "series": {k: list(v) for k, v in self.series.items()},
            "reference": dict(self.reference),
            "skipped": [dict(s) for s in self.skipped],
        }


def _pair_label(names, i, j):
    return f"{names[i]}~{names[j]}"


def _variable_pairs(names):
    return [
        (i, j) for i in range(len(names)) for j in range(i + 1, len(names))
    ]


def aligned_pseudo_obs(panel):
    """Marginal fits plus a date-aligned pseudo-observation matrix.

    Variables lose their first ``max_lag`` rows to the autoregression;
    columns are truncated to the largest loss so every row of the
    returned matrix refers to the same date.
    """
    dummies = build_dummies(panel.dates)
    specs = {
        name: MarginalSpec.for_variable(name) for name in panel.variable_names
    }
    common = max(spec.max_lag for spec in specs.values())
    fits = {}
    cols = []
    for name in panel.variable_names:
        fit = fit_ar_garch(panel.column(name), dummies, specs[name])
        fits[name] = fit
        cols.append(fit.pseudo_obs[common - specs[name].max_lag :])
    return np.column_stack(cols), fits, common


def _scenario_patterns_for(config, names):
    """Instantiate config patterns against this hour's variable set.

    Patterns are written for the quadrivariate conditioning order
    (demand, wind, solar); trivariate hours drop the solar letter and
    de-duplicate while preserving order.
    """
    n_cond = len(names) - 1
    out = []
    seen = set()
    for token in config.scenarios:
        body, target = _parse_pattern_token(token)
        if len(body) < n_cond:
            raise ConfigError(
                f"pattern {token!r} is shorter than the {n_cond} conditioning variables"
            )
        trimmed = body[:n_cond]
        key = (trimmed, target)
        if key in seen:
            continue
        seen.add(key)
        out.append(
            ScenarioPattern(
                conditioning=tuple((k + 1, trimmed[k]) for k in range(n_cond)),
                target=0,
                target_direction=target,
                alpha=config.alpha,
                beta=config.beta,
            )
        )
    return out


def analyze_hour(panel, config):
    """Fit one hour end-to-end and compute every dependence measure."""
    pseudo, fits, _ = aligned_pseudo_obs(panel)
    model = vine.fit_auto(
        pseudo, candidates=config.candidates, indep_test=config.indep_test
    )
    names = panel.variable_names
    n = len(names)
    hour = panel.hour
    warnings = []
    for edge, meta in model.fit_meta.items():
        for note in meta.get("warnings", ()):
            warnings.append(f"{edge.label()}: {note}")

    spearman = {}
    matrix = [[1.0] * n for _ in range(n)]
    pairwise_tdc = {}
    for i, j in _variable_pairs(names):
        label = _pair_label(names, i, j)
        est = vine.induced_spearman(
            model,
            (i, j),
            n_mc=config.n_mc_spearman,
            seed=child_seed(config.seed, hour, _SEED_SPEARMAN, i, j),
        )
        spearman[label] = est
        matrix[i][j] = matrix[j][i] = est["estimate"]
        pairwise_tdc[label] = vine.induced_pair_tdc(
            model,
            (i, j),
            alpha_grid=config.tdc_grid,
            n_mc=config.n_mc_tdc,
            seed=child_seed(config.seed, hour, _SEED_TDC, i, j),
        )

    lam_sample = vine.simulate(
        model, config.n_mc_lambda, seed=child_seed(config.seed, hour, _SEED_LAMBDA)
    )
    collapsed = np.column_stack([lam_sample[:, 1:], lam_sample[:, 0]])
    lambda_k = {
        side: taildep.lambda_kendall(collapsed, side, config.alpha_grid)
        for side in ("lower", "upper")
    }

    scenario_table = []
    for k, pattern in enumerate(_scenario_patterns_for(config, names)):
        result = taildep.scenario_tail_coefficient(
            model,
            pattern,
            n_mc=config.n_mc_scenario,
            seed=child_seed(config.seed, hour, _SEED_SCENARIO, k),
        )
        scenario_table.append(
            {
                "pattern": pattern.label,
                "target_direction": pattern.target_direction,
                "result": result,
            }
        )

    return HourlyAnalysisResult(
        hour=hour,
        variable_names=names,
        marginals=fits,
        vine_model=model,
        spearman=spearman,
        spearman_matrix=tuple(tuple(row) for row in matrix),
        pairwise_tdc=pairwise_tdc,
        lambda_k=lambda_k,
        scenario_table=tuple(scenario_table),
        warnings=tuple(warnings),
    )


def _hour_job(args):
    panel, config = args
    try:
        return panel.hour, analyze_hour(panel, config), None
    except PowerdepError as exc:
        return panel.hour, None, {
            "hour": panel.hour,
            "code": exc.code,
            "message": str(exc),
        }


def _check_panels(panels, hours):
    missing = [h for h in hours if h not in panels]
    if missing:
        raise ConfigError(f"no panel supplied for hours {missing}")


def run_global(panels, config):
    """Analyse every configured hour; failures are contained per hour."""
    _check_panels(panels, config.hours)
    jobs = [(panels[h], config) for h in sorted(config.hours)]
    if config.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            outcomes = list(pool.map(_hour_job, jobs))
    else:
        outcomes = [_hour_job(job) for job in jobs]
    outcomes.sort(key=lambda item: item[0])
    results = tuple(res for _, res, err in outcomes if err is None)
    failures = tuple(err for _, _, err in outcomes if err is not None)
    return GlobalRunResult(results=results, failures=failures)


def _window_panel(panel, start, length):
    return HourlyPanel(
        hour=panel.hour,
        dates=panel.dates[start : start + length],
        values=panel.values[start : start + length],
        variable_names=panel.variable_names,
    )


def _model_spearman_all_pairs(panel, config, seed_keys):
    pseudo, _, _ = aligned_pseudo_obs(panel)
    model = vine.fit_auto(
        pseudo, candidates=config.candidates, indep_test=config.indep_test
    )
    names = panel.variable_names
    out = {}
    for i, j in _variable_pairs(names):
        est = vine.induced_spearman(
            model,
            (i, j),
            n_mc=config.n_mc_rolling,
            seed=child_seed(config.seed, *seed_keys, i, j),
        )
        out[_pair_label(names, i, j)] = est
    return out


def rolling_hour(panel, config):
    """Sliding-window re-estimation of the pairwise dependence series."""
    total = len(panel.dates)
    window = config.window_days
    step = config.step_days
    if total < window + step:
        raise DomainError(
            f"need at least window + step = {window + step} days, got {total}"
        )
    count = window_count(total, window, step)
    names = panel.variable_names
    pairs = [_pair_label(names, i, j) for i, j in _variable_pairs(names)]

    series = {pair: [] for pair in pairs}
    end_dates = []
    skipped = []
    for w in range(count):
        sub = _window_panel(panel, w * step, window)
        end_dates.append(sub.dates[-1].isoformat())
        try:
            estimates = _model_spearman_all_pairs(
                sub, config, (panel.hour, _SEED_ROLL, w)
            )
        except (DegenerateSeriesError, OptimizationError) as exc:
            skipped.append(
                {
                    "window_index": w,
                    "window_end": sub.dates[-1].isoformat(),
                    "code": exc.code,
                    "message": str(exc),
                }
            )
            for pair in pairs:
                series[pair].append(None)
            continue
        for pair in pairs:
            series[pair].append(estimates[pair]["estimate"])

    reference = {
        pair: est["estimate"]
        for pair, est in _model_spearman_all_pairs(
            panel, config, (panel.hour, _SEED_REFERENCE)
        ).items()
    }
    return RollingResult(
        hour=panel.hour,
        variable_names=names,
        window_days=window,
        step_days=step,
        window_end_dates=tuple(end_dates),
        series={pair: tuple(vals) for pair, vals in series.items()},
        reference=reference,
        skipped=tuple(skipped),
    )


def run_rolling(panels, config):
    """Rolling study for every configured hour, merged by hour order."""
    _check_panels(panels, config.hours)
    return tuple(rolling_hour(panels[h], config) for h in sorted(config.hours))


# ---------------------------------------------------------------------------
# report bundle
# ---------------------------------------------------------------------------


def _fmt(value):
    if value is None or value == "":
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def series_rows(global_result, rolling_results):
    rows = []
    for res in global_result.results:
        h = res.hour
        for pair in sorted(res.spearman):
            est = res.spearman[pair]
            rows.append(
                {
                    "hour": h,
                    "section": "global",
                    "measure": "spearman",
                    "pair": pair,
                    "value": est["estimate"],
                    "stderr": est["mc_stderr"],
                }
            )
        for pair in sorted(res.pairwise_tdc):
            tdc = res.pairwise_tdc[pair]
            for level in tdc["levels"]:
                for side in ("lower", "upper"):
                    rows.append(
                        {
                            "hour": h,
                            "section": "global",
                            "measure": "tdc",
                            "pair": pair,
                            "side": side,
                            "alpha": level["t"],
                            "value": level[side],
                            "stderr": level[f"{side}_stderr"],
                        }
                    )
            for side in ("lower", "upper"):
                rows.append(
                    {
                        "hour": h,
                        "section": "global",
                        "measure": "tdc_extrapolated",
                        "pair": pair,
                        "side": side,
                        "alpha": 0.0,
                        "value": tdc[f"{side}_extrapolated"],
                    }
                )
        for side in ("lower", "upper"):
            lam = res.lambda_k[side]
            for a, v, se, ok in zip(
                lam.alphas, lam.values, lam.stderrs, lam.reliable
            ):
                rows.append(
                    {
                        "hour": h,
                        "section": "global",
                        "measure": "lambda",
                        "side": side,
                        "alpha": a,
                        "value": v,
                        "stderr": se,
                        "reliable": ok,
                    }
                )
            rows.append(
                {
                    "hour": h,
                    "section": "global",
                    "measure": "lambda_extrapolated",
                    "side": side,
                    "alpha": 0.0,
                    "value": lam.extrapolated,
                    "reliable": True,
                }
            )
        for row in res.scenario_table:
            r = row["result"]
            rows.append(
                {
                    "hour": h,
                    "section": "global",
                    "measure": "scenario",
                    "pattern": f"{row['pattern']}:{row['target_direction']}",
                    "side": r.side,
                    "alpha": r.alpha,
                    "beta": r.beta,
                    "value": r.value,
                    "ratio": r.ratio_vs_independence,
                    "stderr": r.mc_stderr,
                    "reliable": r.reliable,
                }
            )
    for roll in rolling_results:
        h = roll.hour
        for pair in sorted(roll.series):
            for end, value in zip(roll.window_end_dates, roll.series[pair]):
                rows.append(
                    {
                        "hour": h,
                        "section": "rolling",
                        "measure": "spearman",
                        "pair": pair,
                        "window_end": end,
                        "value": value,
                    }
                )
            rows.append(
                {
                    "hour": h,
                    "section": "rolling",
                    "measure": "spearman_reference",
                    "pair": pair,
                    "value": roll.reference[pair],
                }
            )
    return rows


def render_csv(rows):
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=_CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({key: _fmt(row.get(key, "")) for key in _CSV_COLUMNS})
    return buf.getvalue()


def _json_bytes(obj):
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def write_report_bundle(out_dir, config, global_result, rolling_results=(), force=False):
    """Write the per-hour JSONs, the long CSV, and the run metadata.

    Returns the mapping of artifact names to paths.  Refuses to
    overwrite existing artifacts unless ``force`` is set.
    """
    os.makedirs(out_dir, exist_ok=True)
    artifacts = {}
    payloads = {}
    for res in global_result.results:
        payloads[f"hour_{res.hour:02d}.json"] = _json_bytes(res.to_json_dict())
    if rolling_results:
        payloads["rolling.json"] = _json_bytes(
            [roll.to_json_dict() for roll in rolling_results]
        )
    payloads["series.csv"] = render_csv(
        series_rows(global_result, rolling_results)
    )
    payloads["run_metadata.json"] = _json_bytes(
        {
            "config": config.to_json_dict(),
            "failures": [dict(f) for f in global_result.failures],
            "hours_completed": [res.hour for res in global_result.results],
            "rolling_hours": [roll.hour for roll in rolling_results],
            "versions": {
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
            },
        }
    )
    for name in sorted(payloads):
        path = os.path.join(out_dir, name)
        if os.path.exists(path) and not force:
            raise ConfigError(
                f"refusing to overwrite {path}; pass force to replace it"
            )
        with open(path, "w", newline="") as handle:
            handle.write(payloads[name])
        artifacts[name] = path
    return artifacts
