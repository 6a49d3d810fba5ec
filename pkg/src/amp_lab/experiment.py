"""Seeded multi-trial experiments and their aggregation.

A trial draws an instance, runs AMP and the state evolution on the realised
signal and noise, and optionally decomposes the run.  Results are merged in
trial order, so the thread count never changes the output.
"""

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .amp import run_amp
from .decomp import decompose, hat_sequences
from .diag import coordinate_w1, norm_ratio, scaling_fit
from .exceptions import AmpLabError
from .io import write_csv, write_svg
from .model import make_instance
from .se import se_for_model, se_fixed_point

TRIAL_COLUMNS = ("trial", "t", "risk", "gamma_emp", "gamma_star", "alpha_emp", "alpha_star",
                 "tau_or_b", "xi_norm", "zeta_norm", "w1_coord")
SE_COLUMNS = ("t", "alpha_star", "gamma_star", "inner_param")
DECOMP_COLUMNS = ("t", "xi_norm", "zeta_norm", "gamma_norm", "alpha_norm",
                  "gamma_hat_tt", "alpha_hat_tt")
METRICS = TRIAL_COLUMNS[2:] + ("norm_ratio", "gamma_gap2", "abs_risk_gap", "jump",
                                "calib_residual")

AGGREGATE_SCHEMA = {
    "type": "object",
    "required": ["mode", "seed", "t_max", "trials", "warnings", "runs"],
    "properties": {
        "mode": {"enum": ["sparse", "robust"]},
        "seed": {"type": "integer"},
        "t_max": {"type": "integer"},
        "trials": {"type": "integer"},
        "warnings": {"type": "array", "items": {"type": "string"}},
        "runs": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["n", "p", "k", "trials_ok", "failures", "per_t"],
                "properties": {
                    "n": {"type": "integer"}, "p": {"type": "integer"}, "k": {"type": "integer"},
                    "trials_ok": {"type": "integer"},
                    "failures": {"type": "array", "items": {
                        "type": "object", "required": ["trial", "error"]}},
                    "per_t": {"type": "array", "items": {
                        "type": "object", "required": ["t"],
                        "additionalProperties": {
                            "type": ["object", "integer"],
                        }}},
                },
            },
        },
        "scaling": {
            "type": "object",
            "required": ["t", "metrics"],
            "properties": {
                "t": {"type": "integer"},
                "metrics": {"type": "object", "additionalProperties": {
                    "type": "object",
                    "required": ["slope", "intercept", "r2", "points"],
                    "properties": {"slope": {"type": ["number", "null"]},
                                   "intercept": {"type": ["number", "null"]},
                                   "r2": {"type": ["number", "null"]},
                                   "points": {"type": "array"}}}},
            },
        },
    },
}

SCALING_METRICS = ("gamma_gap2", "xi_norm", "zeta_norm", "abs_risk_gap")


@dataclass
class TrialResult:
    trial: int
    n: int
    error: str = None
    rows: list = field(default_factory=list)


def _nan():
    return float("nan")


def run_trial(cfg, n, trial):
    """Run one trial at sample size ``n``; structured errors are captured."""
    n, p, k = cfg.dims(n)
    res = TrialResult(trial, n)
    try:
        model = make_instance(n, p, k, cfg.signal_spec(), cfg.noise_spec(n), cfg.seed, trial)
        lam = cfg.lam_for(n) if cfg.mode == "robust" else None
        trace = run_amp(model, cfg.mode, cfg.t_max, lam, cfg.tau_method, cfg.calib_tol)
        se = se_for_model(model, cfg.mode, cfg.t_max, lam)
        dec = None
        if cfg.diagnostics.decomp or cfg.diagnostics.w1:
            dec = decompose(trace, budget=cfg.decomp_budget)
    except (AmpLabError, ValueError, FloatingPointError) as err:
        res.error = f"{type(err).__name__}: {err}"
        return res
    theta_star = model.signal
    row0 = dict.fromkeys(METRICS, _nan())
    row0.update(trial=trial, t=0, risk=float(np.linalg.norm(trace[0].theta_next - theta_star)))
    res.rows.append(row0)
    for t in range(1, cfg.t_max + 1):
        st = trace[t]
        g_emp = float(np.linalg.norm(trace.F_value(t)))
        a_emp = float(np.linalg.norm(trace.G_value(t)))
        row = dict.fromkeys(METRICS, _nan())
        risk_next = float(np.linalg.norm(st.theta_next - theta_star))
        gap = (g_emp if cfg.mode == "sparse" else risk_next) - se.gamma_star[t]
        row.update(trial=trial, t=t, risk=risk_next, gamma_emp=g_emp,
                   gamma_star=se.gamma_star[t], alpha_emp=a_emp, alpha_star=se.alpha_star[t],
                   tau_or_b=st.param, gamma_gap2=abs(g_emp**2 - se.gamma_star[t] ** 2),
                   abs_risk_gap=abs(gap), jump=float(st.jump),
                   calib_residual=abs(st.g_mean - 1.0))
        if dec is not None and t <= dec.T:
            if cfg.diagnostics.decomp:
                row.update(xi_norm=float(np.linalg.norm(dec.xi[t - 1])),
                           zeta_norm=float(np.linalg.norm(dec.zeta[t - 1])))
            if cfg.diagnostics.w1:
                alpha_norm = float(np.linalg.norm(dec.alpha[t - 1]))
                row.update(w1_coord=coordinate_w1(dec.v[t - 1], alpha_norm, n),
                           norm_ratio=norm_ratio(dec.v[t - 1], alpha_norm, n, p))
        res.rows.append(row)
    return res


def resolve_threads(threads=None):
    if threads is None:
        env = os.environ.get("AMP_LAB_THREADS")
        threads = int(env) if env else 1
    return max(1, int(threads))


def run_trials(cfg, n, threads=1):
    jobs = range(cfg.trials)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda i: run_trial(cfg, n, i), jobs))
    else:
        results = [run_trial(cfg, n, i) for i in jobs]
    return sorted(results, key=lambda r: r.trial)


def _stat(values):
    v = np.asarray([x for x in values if not math.isnan(x)], dtype=float)
    if v.size == 0:
        return {"mean": None, "se": None, "count": 0}
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else None
    return {"mean": float(v.mean()), "se": se, "count": int(v.size)}


def aggregate_run(cfg, n, results):
    n, p, k = cfg.dims(n)
    ok = [r for r in results if r.error is None]
    per_t = []
    for t in range(cfg.t_max + 1):
        entry = {"t": t}
        for m in METRICS:
            entry[m] = _stat([r.rows[t][m] for r in ok])
        per_t.append(entry)
    return {"n": n, "p": p, "k": k, "trials_ok": len(ok),
            "failures": [{"trial": r.trial, "error": r.error} for r in results if r.error],
            "per_t": per_t}


def scaling_section(cfg, runs):
    t = cfg.report_t
    metrics = {}
    for m in SCALING_METRICS:
        pts = [(run["n"], run["per_t"][t][m]["mean"]) for run in runs]
        good = [(a, b) for a, b in pts if b is not None and b > 0]
        if len(good) >= 3:
            fit = scaling_fit(good)
            metrics[m] = {"slope": fit.slope, "intercept": fit.intercept, "r2": fit.r2,
                          "points": [list(x) for x in pts]}
        else:
            metrics[m] = {"slope": None, "intercept": None, "r2": None,
                          "points": [list(x) for x in pts]}
    return {"t": t, "metrics": metrics}


def _clean(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    return obj


def trial_rows(results):
    rows = []
    for r in results:
        for row in r.rows:
            rows.append([row[c] for c in TRIAL_COLUMNS])
    return rows


def run_experiment(cfg, out_dir, threads=None, sweep=False):
    """Run the configured experiment and write its outputs.

    Writes ``trials.csv`` (or ``trials_n<n>.csv`` per size in a sweep),
    ``aggregate.json`` and ``risk.svg``.  Returns the process exit code:
    0 unless every trial failed.
    """
    threads = resolve_threads(threads)
    os.makedirs(out_dir, exist_ok=True)
    sizes = cfg.n_sweep if (sweep or cfg.n_sweep) and cfg.n_sweep else (cfg.n,)
    runs = []
    any_ok = False
    for n in sizes:
        results = run_trials(cfg, n, threads)
        any_ok |= any(r.error is None for r in results)
        name = "trials.csv" if len(sizes) == 1 else f"trials_n{n}.csv"
        write_csv(os.path.join(out_dir, name), TRIAL_COLUMNS, trial_rows(results))
        runs.append(aggregate_run(cfg, n, results))
    report = {"mode": cfg.mode, "seed": cfg.seed, "t_max": cfg.t_max, "trials": cfg.trials,
              "warnings": list(cfg.warnings), "runs": runs}
    if cfg.n_sweep:
        report["scaling"] = scaling_section(cfg, runs)
    with open(os.path.join(out_dir, "aggregate.json"), "w", newline="\n") as fh:
        json.dump(_clean(report), fh, indent=2, sort_keys=True)
        fh.write("\n")
    last = runs[-1]["per_t"]
    ts = [e["t"] for e in last][1:]
    pick = lambda m: [np.nan if e[m]["mean"] is None else e[m]["mean"] for e in last][1:]
    write_svg(os.path.join(out_dir, "risk.svg"), ts,
              {"empirical gamma": pick("gamma_emp"), "state evolution": pick("gamma_star")},
              title=f"{cfg.mode} AMP, n={runs[-1]['n']}", xlabel="iteration t",
              ylabel="error norm")
    return 0 if any_ok else 1


def run_se(cfg, out_dir, trial=0, tol=1e-10, t_cap=200):
    """Fixed-point state evolution for one trial's realised signal and noise."""
    os.makedirs(out_dir, exist_ok=True)
    n, p, k = cfg.dims(cfg.n)
    model = make_instance(n, p, k, cfg.signal_spec(), cfg.noise_spec(n), cfg.seed, trial)
    lam = cfg.lam_for(n) if cfg.mode == "robust" else None
    se = se_fixed_point(model.signal, model.noise, cfg.mode, lam, tol, t_cap)
    write_csv(os.path.join(out_dir, "se.csv"), SE_COLUMNS, se.rows())
    fp = se.fixed_point
    with open(os.path.join(out_dir, "se.json"), "w", newline="\n") as fh:
        json.dump(_clean({"alpha": fp.alpha, "gamma": fp.gamma, "converged": fp.converged,
                          "iterations": fp.iterations, "tol": tol,
                          "contraction_ratios": list(map(float, fp.ratios))}),
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    return se


def decomp_rows(trace, dec, hat=None):
    rows = []
    for t in range(1, dec.T + 1):
        gh = hat.gamma_hat[t - 1][-1] if hat is not None and t <= len(hat.gamma_hat) else np.nan
        ah = hat.alpha_hat[t - 1][-1] if hat is not None and t <= len(hat.alpha_hat) else np.nan
        rows.append([t, np.linalg.norm(dec.xi[t - 1]), np.linalg.norm(dec.zeta[t - 1]),
                     np.linalg.norm(dec.gamma[t - 1]), np.linalg.norm(dec.alpha[t - 1]), gh, ah])
    return rows


def run_decomp(cfg, out_dir, threads=None):
    """Per-trial decomposition tables ``decomp_trial<i>.csv``."""
    threads = resolve_threads(threads)
    os.makedirs(out_dir, exist_ok=True)
    n, p, k = cfg.dims(cfg.n)

    def one(trial):
        model = make_instance(n, p, k, cfg.signal_spec(), cfg.noise_spec(n), cfg.seed, trial)
        lam = cfg.lam_for(n) if cfg.mode == "robust" else None
        trace = run_amp(model, cfg.mode, cfg.t_max, lam, cfg.tau_method, cfg.calib_tol)
        dec = decompose(trace, budget=cfg.decomp_budget)
        hat = hat_sequences(dec, trace) if cfg.diagnostics.hat else None
        return decomp_rows(trace, dec, hat)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        tables = list(pool.map(one, range(cfg.trials)))
    for trial, rows in enumerate(tables):
        write_csv(os.path.join(out_dir, f"decomp_trial{trial:03d}.csv"), DECOMP_COLUMNS, rows)
    return tables
