"""Experiment orchestration: config, seeding, replica farming, exponent
fits, verdicts and file artifacts.

Every experiment kind writes the same three artifacts into its output
directory:

  estimates.csv   header exactly: t,log_point,se_log,replicas,seed
  summary.json    config echo + fit results + pass/fail verdicts (versioned)
  plot.gp         plain-text gnuplot script referencing the CSV

Seed hygiene: the stream for a replica r of experiment e at grid index k is
derived by SplitMix64 from (master_seed, hash(e), k, r); batched kernels
consume (master_seed, hash(e), k) and derive per-replica streams from it,
so no stream is reused across t-grid points and identical configs give
identical CSV bytes.

A grid point whose projected cost exceeds the configured wall-clock budget
is the time-domain analogue of the population cap: it is recorded in the
summary (status "budget_exceeded") and the experiment continues on the
remaining grid, exactly like the cap contract. Cost is extrapolated from
the previous completed point by the exact e^t growth law.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import brownian, engine, overlap_stats, spinal, theory
from .errors import (
    ConfigInvalid,
    DegenerateWeights,
    InsufficientPoints,
    PopulationCapExceeded,
)
from .rng import derive_seed, hash_tag

SCHEMA_VERSION = 1
CSV_HEADER = ["t", "log_point", "se_log", "replicas", "seed"]

EXPERIMENT_KINDS = (
    "typical_overlap",
    "mean_overlap_naive",
    "mean_overlap_is",
    "beta0_exact",
    "martingale_suite",
    "ballot_suite",
    "rn_check",
)

DEFAULT_TOLERANCES = {
    "exponent_rel": 0.15,   # relative band on fitted decay exponents
    "paired_sigma": 4.0,    # paired-estimator z tolerance
    "beta0_ratio": 0.05,    # band on the t=30 asymptotic ratio
}


@dataclass
class ExperimentConfig:
    kind: str
    beta: float = 0.0
    a: float = 0.5
    t_grid: list[float] = field(default_factory=list)
    replicas: int = 1000
    master_seed: int = 1
    population_cap: int = 10_000_000
    output_dir: str = "."
    tolerances: dict[str, float] = field(default_factory=dict)
    time_budget_s: float | None = None

    def validate(self) -> None:
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigInvalid(f"unknown experiment kind {self.kind!r}")
        if not self.t_grid:
            raise ConfigInvalid("t_grid must be non-empty")
        if any(b >= a for a, b in zip(self.t_grid[1:], self.t_grid)):
            raise ConfigInvalid("t_grid must be strictly increasing")
        if self.replicas < 2:
            raise ConfigInvalid("replicas must be >= 2")
        if not (0.0 < self.a < 1.0):
            raise ConfigInvalid("a must lie in (0, 1)")
        if self.beta < 0.0:
            raise ConfigInvalid("beta must be >= 0")
        if self.population_cap < 1:
            raise ConfigInvalid("population_cap must be >= 1")

    def tol(self, name: str) -> float:
        return float(self.tolerances.get(name, DEFAULT_TOLERANCES[name]))

    @staticmethod
    def from_json(text: str) -> "ExperimentConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigInvalid(f"config is not valid JSON: {e}") from None
        known = {f for f in ExperimentConfig.__dataclass_fields__}
        unknown = set(doc) - known
        if unknown:
            raise ConfigInvalid(f"unknown config fields: {sorted(unknown)}")
        cfg = ExperimentConfig(**doc)
        cfg.validate()
        return cfg


@dataclass
class FitResult:
    slope: float
    intercept: float
    slope_std_error: float
    r_squared: float
    points_used: int


def fit_exponent(points) -> FitResult:
    """Weighted least squares of log_estimate on t with weights 1/se^2.

    points: iterable of (t, log_estimate, se). The slope is the decay-rate
    estimate (negative for a decaying quantity).
    """
    pts = [(float(t), float(y), float(se)) for t, y, se in points]
    if len(pts) < 3:
        raise InsufficientPoints(f"need >= 3 points, got {len(pts)}")
    t = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    se = np.array([p[2] for p in pts])
    if not (np.all(np.isfinite(t)) and np.all(np.isfinite(y))):
        raise DegenerateWeights("non-finite fit inputs")
    if np.any(se <= 0.0) or not np.all(np.isfinite(se)):
        raise DegenerateWeights("standard errors must be positive and finite")
    w = 1.0 / se**2
    xm = np.average(t, weights=w)
    ym = np.average(y, weights=w)
    sxx = float(np.sum(w * (t - xm) ** 2))
    if sxx == 0.0:
        raise DegenerateWeights("degenerate abscissae")
    slope = float(np.sum(w * (t - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    ss_res = float(np.sum(w * (y - slope * t - intercept) ** 2))
    ss_tot = float(np.sum(w * (y - ym) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return FitResult(
        slope=slope,
        intercept=intercept,
        slope_std_error=float(math.sqrt(1.0 / sxx)),
        r_squared=r2,
        points_used=len(pts),
    )


# -- experiment drivers --------------------------------------------------------


def _per_point_budget_gate(config, k, elapsed, last_cost, rows):
    """Skip grid point k if the e^t extrapolation of the last completed
    point's cost would blow the remaining budget."""
    if config.time_budget_s is None or last_cost is None:
        return None
    t_prev = rows[-1]["t"] if rows else None
    if t_prev is None:
        return None
    predicted = last_cost * math.exp(config.t_grid[k] - t_prev)
    remaining = config.time_budget_s - elapsed
    if predicted > remaining:
        return {
            "t": config.t_grid[k],
            "status": "budget_exceeded",
            "predicted_s": predicted,
            "remaining_s": remaining,
        }
    return None


def _run_overlap_like(config: ExperimentConfig) -> dict:
    """typical_overlap, mean_overlap_naive, mean_overlap_is share the grid
    loop, the budget gate, and the exponent fit; they differ in estimator
    and in the theory-side reference."""
    kind = config.kind
    rows = []
    failures = []
    start = time.time()
    last_cost = None
    heavy_regime = config.beta > theory.SQRT_HALF
    for k, t in enumerate(config.t_grid):
        skip = _per_point_budget_gate(config, k, time.time() - start, last_cost, rows)
        if skip is not None:
            failures.append(skip)
            continue
        seed_k = derive_seed(config.master_seed, hash_tag(kind), k)
        t0 = time.time()
        try:
            if kind == "typical_overlap":
                nu = overlap_stats.overlap_samples(
                    config.beta, config.a, t, config.replicas, seed_k, config.population_cap
                )
                logs = np.log(nu)
                if heavy_regime:
                    center = float(np.median(logs))
                    q1, q3 = np.percentile(logs, [25.0, 75.0])
                    se = 1.2533 * (q3 - q1) / 1.349 / math.sqrt(logs.size)
                    center_kind = "median"
                else:
                    m = float(np.mean(nu))
                    center = math.log(m)
                    se = float(np.std(nu, ddof=1) / math.sqrt(nu.size)) / m
                    center_kind = "mean"
            elif kind == "mean_overlap_naive":
                est = spinal.naive_mean_overlap(
                    config.beta, config.a, t, config.replicas, seed_k, config.population_cap
                )
                center = est.point.log
                se = est.std_error_log
                center_kind = "mean"
            else:  # mean_overlap_is
                est = spinal.is_mean_overlap_estimator(
                    config.beta, config.a, t, config.replicas, seed_k, config.population_cap
                )
                center = est.point.log
                se = est.std_error_log
                center_kind = "mean"
        except PopulationCapExceeded as e:
            failures.append({"t": t, "status": "population_cap_exceeded", "detail": str(e)})
            continue
        last_cost = time.time() - t0
        rows.append({"t": t, "log_point": center, "se_log": se, "seed": seed_k, "center": center_kind})

    fits: dict[str, object] = {}
    verdicts = []
    if kind == "typical_overlap":
        target = theory.psi_typ(config.beta) * config.a
        points = [(r["t"], -r["log_point"], r["se_log"]) for r in rows]
    elif kind == "mean_overlap_is" and config.beta > theory.SQRT_TWO_THIRDS:
        # remove the t^{-3/2} polynomial factor before fitting the rate
        target = theory.psi_mean(config.beta) * config.a
        points = [(r["t"], -(r["log_point"] + 1.5 * math.log(r["t"])), r["se_log"]) for r in rows]
    else:
        target = theory.psi_mean(config.beta) * config.a
        points = [(r["t"], -r["log_point"], r["se_log"]) for r in rows]
    try:
        fit = fit_exponent(points)
        fits["decay_rate"] = asdict(fit)
        tol = config.tol("exponent_rel")
        ok = abs(fit.slope - target) <= tol * abs(target) if target != 0.0 else abs(fit.slope) <= tol
        verdicts.append(
            {
                "name": f"{kind}_exponent",
                "passed": bool(ok),
                "fitted": fit.slope,
                "expected": target,
                "rel_tolerance": tol,
            }
        )
    except InsufficientPoints as e:
        verdicts.append(
            {"name": f"{kind}_exponent", "passed": False, "error": str(e), "expected": target}
        )
    return {"rows": rows, "failures": failures, "fits": fits, "verdicts": verdicts}


def _run_beta0_exact(config: ExperimentConfig) -> dict:
    rows = []
    for k, t in enumerate(config.t_grid):
        val = theory.exact_mean_overlap_beta0(config.a, t)
        rows.append({"t": t, "log_point": math.log(val), "se_log": 0.0, "seed": 0, "center": "exact"})
    ratios = {
        r["t"]: math.exp(r["log_point"]) / (2.0 * config.a * r["t"] * math.exp(-config.a * r["t"]))
        for r in rows
    }
    late = {t: v for t, v in ratios.items() if t >= 25.0}
    verdicts = []
    if late:
        worst = max(abs(v - 1.0) for v in late.values())
        tol = config.tol("beta0_ratio")
        verdicts.append(
            {
                "name": "beta0_asymptotic_ratio",
                "passed": bool(worst <= tol),
                "max_abs_ratio_minus_1": worst,
                "tolerance": tol,
                "t_used": sorted(late),
            }
        )
    return {"rows": rows, "failures": [], "fits": {"asymptotic_ratio": ratios}, "verdicts": verdicts}


def _run_martingale_suite(config: ExperimentConfig) -> dict:
    """Unit-mean checks of W_t(beta) across the grid for the configured
    beta, plus a zero-mean check of the derivative martingale."""
    rows = []
    verdicts = []
    sig = config.tol("paired_sigma")
    for k, t in enumerate(config.t_grid):
        seed_k = derive_seed(config.master_seed, hash_tag("martingale_suite"), k)
        stats = engine.tree_stats(seed_k, config.replicas, config.beta, t)
        w = np.exp(stats["log_wt"])
        mean = float(np.mean(w))
        se = float(np.std(w, ddof=1) / math.sqrt(config.replicas))
        rows.append(
            {"t": t, "log_point": math.log(mean), "se_log": se / mean, "seed": seed_k, "center": "mean"}
        )
        verdicts.append(
            {
                "name": f"W_unit_mean_t{t:g}",
                "passed": bool(abs(mean - 1.0) <= sig * se),
                "mean": mean,
                "se": se,
                "sigma": sig,
            }
        )
        z = stats["z_t"]
        zm = float(np.mean(z))
        zse = float(np.std(z, ddof=1) / math.sqrt(config.replicas))
        verdicts.append(
            {
                "name": f"Z_zero_mean_t{t:g}",
                "passed": bool(abs(zm) <= sig * zse),
                "mean": zm,
                "se": zse,
                "sigma": sig,
            }
        )
    return {"rows": rows, "failures": [], "fits": {}, "verdicts": verdicts}


def _run_ballot_suite(config: ExperimentConfig) -> dict:
    sig = config.tol("paired_sigma")
    rep = brownian.ballot_scaling_check(
        2.0, config.t_grid, 0.25, config.replicas, derive_seed(config.master_seed, hash_tag("ballot"), 0)
    )
    rep2 = brownian.ballot_endpoint_scaling_check(
        2.0, 2.0, config.t_grid, 0.25, config.replicas, derive_seed(config.master_seed, hash_tag("ballot"), 1)
    )
    t0 = float(config.t_grid[0])
    flat = brownian.ballot_scaling_check(
        2.0, [t0], 0.25, config.replicas, derive_seed(config.master_seed, hash_tag("ballot"), 2), curve="flat"
    )
    exact = brownian.reflection_tail(2.0, -math.inf, 2.0, t0)
    z = abs(flat.p_lower[0] - exact) / max(flat.se_lower[0], 1e-300)
    rows = [
        {"t": t, "log_point": math.log(p), "se_log": se / p, "seed": 0, "center": "mean"}
        for t, p, se in zip(rep.t_grid, rep.p_mid, rep.se_lower)
    ]
    verdicts = [
        {
            "name": "ballot_slope_minus_half",
            "passed": bool(-0.65 <= rep.slope_mid <= -0.35),
            "fitted": rep.slope_mid,
            "expected": -0.5,
        },
        {
            "name": "ballot_slope_minus_three_halves",
            "passed": bool(-1.7 <= rep2.slope_mid <= -1.3),
            "fitted": rep2.slope_mid,
            "expected": -1.5,
        },
        {
            "name": "flat_barrier_vs_reflection",
            "passed": bool(z <= sig),
            "mc": flat.p_lower[0],
            "exact": exact,
            "z": z,
        },
    ]
    fits = {
        "slope_sup": {"slope": rep.slope_mid, "se": rep.slope_se},
        "slope_endpoint": {"slope": rep2.slope_mid, "se": rep2.slope_se},
    }
    return {"rows": rows, "failures": [], "fits": fits, "verdicts": verdicts}


def _run_rn_check(config: ExperimentConfig) -> dict:
    sig = config.tol("paired_sigma")
    verdicts = []
    rows = []
    t = float(config.t_grid[0])
    for j, stat in enumerate(sorted(spinal.RN_CATALOG)):
        seed_j = derive_seed(config.master_seed, hash_tag("rn_check"), j)
        p_est, q_est = spinal.radon_nikodym_check(
            config.beta, t, stat, config.replicas, seed_j, config.population_cap
        )
        pv = p_est.point.to_float()
        qv = q_est.point.to_float()
        se = math.hypot(
            p_est.std_error_log * abs(pv) if math.isfinite(p_est.std_error_log) else 0.0,
            q_est.std_error_log * abs(qv) if math.isfinite(q_est.std_error_log) else 0.0,
        )
        z = abs(pv - qv) / se if se > 0 else (0.0 if pv == qv else math.inf)
        verdicts.append(
            {
                "name": f"rn_{stat}",
                "passed": bool(z <= sig),
                "p_side": pv,
                "q_side": qv,
                "z": z,
                "sigma": sig,
            }
        )
        rows.append(
            {"t": t, "log_point": math.log(abs(pv)) if pv else -math.inf, "se_log": p_est.std_error_log,
             "seed": seed_j, "center": "mean"}
        )
    return {"rows": rows, "failures": [], "fits": {"catalog_version": spinal.RN_CATALOG_VERSION}, "verdicts": verdicts}


_RUNNERS = {
    "typical_overlap": _run_overlap_like,
    "mean_overlap_naive": _run_overlap_like,
    "mean_overlap_is": _run_overlap_like,
    "beta0_exact": _run_beta0_exact,
    "martingale_suite": _run_martingale_suite,
    "ballot_suite": _run_ballot_suite,
    "rn_check": _run_rn_check,
}


def _csv_bytes(rows, replicas) -> bytes:
    buf = io.StringIO()
    w = csv.writer(buf, quoting=csv.QUOTE_MINIMAL, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow([repr(float(r["t"])), repr(float(r["log_point"])), repr(float(r["se_log"])),
                    replicas, r["seed"]])
    return buf.getvalue().encode()


def _plot_script(kind: str) -> str:
    return (
        "# gnuplot script emitted by bbm; batch artifact, no rendering here\n"
        'set datafile separator ","\n'
        f'set title "{kind}"\n'
        'set xlabel "t"\n'
        'set ylabel "log estimate"\n'
        "plot 'estimates.csv' using 1:2:3 every ::1 with yerrorlines title 'log point'\n"
    )


def run_experiment(config: ExperimentConfig) -> int:
    """Run one experiment; writes estimates.csv, summary.json and plot.gp
    into config.output_dir. Exit status: 0 all verdicts pass, 2 at least
    one verdict failed, 1 configuration/IO error (raised as exceptions)."""
    config.validate()
    engine.configure_threads()
    os.makedirs(config.output_dir, exist_ok=True)
    result = _RUNNERS[config.kind](config)
    csv_path = os.path.join(config.output_dir, "estimates.csv")
    with open(csv_path, "wb") as f:
        f.write(_csv_bytes(result["rows"], config.replicas))
    summary = {
        "schema_version": SCHEMA_VERSION,
        "config": asdict(config),
        "fits": result["fits"],
        "verdicts": result["verdicts"],
        "failures": result["failures"],
        "center_statistic": [r.get("center") for r in result["rows"]],
    }
    with open(os.path.join(config.output_dir, "summary.json"), "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True, default=float)
        f.write("\n")
    with open(os.path.join(config.output_dir, "plot.gp"), "w") as f:
        f.write(_plot_script(config.kind))
    all_pass = all(v.get("passed", False) for v in result["verdicts"]) if result["verdicts"] else True
    return 0 if all_pass else 2


def emit_report(results: dict, config: ExperimentConfig, path: str) -> None:
    """Standalone summary writer for pre-computed results (same schema as
    run_experiment's summary.json)."""
    if not results:
        raise ValueError("results must be non-empty")
    doc = {"schema_version": SCHEMA_VERSION, "config": asdict(config), **results}
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True, default=float)
        f.write("\n")
