"""Acceptance suite: quantitative desk-scale checks of the asymptotic results.

Each criterion is a function of a parameter dict (defaults in
:data:`CRITERIA`) returning a :class:`CriterionResult`.  A criterion passes when
every embedded check passes and the wall time stays below its runtime limit.
Parameters can be overridden per criterion, e.g.
``{"A3": {"rate_factor": 1.1}}`` perturbs the reference Gamma rate (a negative
control that must fail).
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .closed_form import closed_form_u, closed_form_v, model_matrix, v0_vector, z_constant
from .cumulant import advance, bracket_bounds, grad_u, solve_u, solve_v
from .laws import (
    ConditioningSpec,
    gamma_law,
    iterated_limit_t_then_theta,
    iterated_limit_theta_then_t,
    laplace_conditioned_numeric,
    stable_cumulant,
    stable_limit_laplace,
)
from .mc import h_transform_weights, sample_conditioned, simulate
from .spectral import perron, validate_model
from .stats import decreasing_within_noise, explosion_monitor, ks_weighted


@dataclass
class CriterionResult:
    id: str
    title: str
    passed: bool
    runtime: float
    runtime_limit: float
    checks: list[dict] = field(default_factory=list)

    @property
    def failures(self) -> list[dict]:
        return [c for c in self.checks if not c["pass"]]

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        msg = f"{self.id} {status} [{self.runtime:.1f}s / {self.runtime_limit:g}s] {self.title}"
        if self.failures:
            msg += f" -- first failed check: {self.failures[0]['name']}"
        elif self.runtime > self.runtime_limit:
            msg += " -- runtime limit exceeded"
        return msg

    def to_dict(self) -> dict:
        return {"id": self.id, "title": self.title, "pass": self.passed,
                "runtime": self.runtime, "runtime_limit": self.runtime_limit,
                "checks": self.checks}


class _Checks:
    def __init__(self):
        self.rows: list[dict] = []

    def add(self, name: str, ok: bool, **values):
        row = {"name": name, "pass": bool(ok)}
        row.update({k: _plain(v) for k, v in values.items()})
        self.rows.append(row)
        return ok


def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def _rel_err(a, b) -> float:
    a, b = np.asarray(a, float), np.asarray(b, float)
    den = np.maximum(np.abs(b), 1e-300)
    err = np.where(a == b, 0.0, np.abs(a - b) / den)
    return float(np.max(err))


# ---------------------------------------------------------------- criteria

def _a1(p, chk):
    times = np.linspace(0.0, p["t_max"], p["n_times"])
    for model_id, params in p["models"]:
        D = model_matrix(model_id, params)
        model = validate_model(D, params["c"])
        grid = p["grid1"] if model.k == 1 else p["grid2"]
        worst_u = worst_v = 0.0
        for lam in grid:
            lam = np.atleast_1d(np.asarray(lam, dtype=float))
            u = solve_u(model, lam, times).u
            if model.k == 1 or lam[1] == 0:
                worst_u = max(worst_u, _rel_err(u, closed_form_u(model_id, params, lam, times)))
            else:
                worst_u = max(worst_u, _rel_err(u[:, 1], closed_form_u(model_id, params, lam, times,
                                                                    component=2)))
                continue
            ids = ("xi",) if model.k == 1 else ("xi", "e1", "e2")
            for v0_id in ids:
                v = solve_v(model, lam, v0_vector(model_id, params, v0_id), times).v
                worst_v = max(worst_v, _rel_err(v, closed_form_v(model_id, params, lam, v0_id, times)))
        label = f"{model_id} {params}"
        chk.add(f"u {label}", worst_u <= p["tol"], max_rel_err=worst_u)
        chk.add(f"v {label}", worst_v <= p["tol"], max_rel_err=worst_v)


def _a2(p, chk):
    for case in p["cases"]:
        spec = perron(validate_model(case["D"], 1.0))
        for key in ("mu", "xi", "eta"):
            if key not in case:
                continue
            err = float(np.max(np.abs(np.asarray(getattr(spec, key)) - np.asarray(case[key]))))
            chk.add(f"{key} of {case['D']}", err <= p["tol"], err=err)


def _a3(p, chk):
    model = validate_model([[p["mu"]]], p["c"])
    ens = sample_conditioned(model, [p["x0"]], p["t"], ConditioningSpec.whole(), p["n_paths"],
                             p["seed"], method=p["method"], dt=p["dt"], threads=p["threads"])
    ref = gamma_law(2, p["rate_factor"] * 2 * abs(p["mu"]) / p["c"], "reference Gamma law")
    rep = ks_weighted(ens.marginal(1), ens.weights, ref, p["threshold"])
    chk.add("weighted KS vs Gamma(2, 2|mu|/c)", rep.passed, statistic=rep.statistic,
            threshold=p["threshold"], n_effective=rep.n_effective, reference_rate=ref.rate)


def _a4(p, chk):
    for D, c, n, dt in p["models"]:
        model = validate_model(D, c)
        spec = perron(model)
        ens = simulate(model, np.ones(model.k), max(p["times"]), dt, n, p["seed"],
                       times=p["times"], threads=p["threads"])
        for t in p["times"]:
            w = h_transform_weights(ens, t, spec.xi, spec.mu)
            mean, se = float(w.mean()), float(w.std(ddof=1) / math.sqrt(w.size))
            chk.add(f"mean weight D={D} t={t}", abs(mean - 1) <= p["z"] * se, mean=mean, se=se)


def _a5(p, chk):
    model = validate_model(p["D"], p["c"])
    for lam in p["lambdas"]:
        a = iterated_limit_t_then_theta(model, lam)
        b = iterated_limit_theta_then_t(model, lam)
        chk.add(f"interchange lambda={lam}", abs(a - b) <= p["tol"], t_then_theta=a,
                theta_then_t=b, diff=abs(a - b))
    mono = validate_model([[-1.0]], 2.0)
    a = iterated_limit_t_then_theta(mono, [1.0])
    b = iterated_limit_theta_then_t(mono, [1.0])
    chk.add("monotype value 1/4", max(abs(a - 0.25), abs(b - 0.25)) <= p["mono_tol"],
            t_then_theta=a, theta_then_t=b)


def _a6(p, chk):
    model = validate_model([[0.0]], p["c"])
    ts = p["times"]
    ens = sample_conditioned(model, [1.0], max(ts), ConditioningSpec.whole(), p["n_paths"],
                             p["seed"], times=ts, threads=p["threads"])
    rows = explosion_monitor(ens, p["M"], 1, times=ts)
    probs = [r["p"] for r in rows]
    chk.add(f"P*(x_t <= {p['M']}) strictly decreasing", all(a > b for a, b in zip(probs, probs[1:])),
            probabilities=probs, se=[r["se"] for r in rows])
    t = max(ts)
    rep = ks_weighted(ens.marginal(1, t) / t, ens.weights, gamma_law(2, 2 / p["c"], "x_t / t"),
                      p["threshold"])
    chk.add("x_t/t weighted KS vs Gamma(2, 2/c)", rep.passed, statistic=rep.statistic,
            threshold=p["threshold"])


def _a7(p, chk):
    dt, n, thr, th = p["dt"], p["n_paths"], p["threshold"], p["threads"]
    # CP-D, type-1 survival: type-1 marginal is Gamma(2, 2 alpha / c)
    cpd = validate_model(model_matrix("CP-D", {"alpha": 1.0, "c": 2.0}), 2.0)
    ens = sample_conditioned(cpd, p["x0"], 8.0, ConditioningSpec.type_(1), n, p["seed"], dt=dt,
                             threads=th)
    rep = ks_weighted(ens.marginal(1), ens.weights, gamma_law(2, 1.0, ""), thr)
    chk.add("CP-D type-1 survival: type 1 vs Gamma(2,1)", rep.passed, statistic=rep.statistic)
    # CP-D, whole survival: type 1 vanishes and type 2 explodes
    ts = p["monitor_times"]
    ens = sample_conditioned(cpd, p["x0"], max(ts), ConditioningSpec.whole(), n, p["seed"] + 1,
                             dt=dt, times=ts, threads=th)
    j = ens.time_index(p["vanish_t"])
    tail = float(np.average(ens.states[:, j, 0] > p["vanish_level"], weights=ens.weights))
    chk.add(f"CP-D whole survival: P*(x_1 > {p['vanish_level']}) at t={p['vanish_t']}",
            tail < p["vanish_prob"], probability=tail)
    rows = explosion_monitor(ens, p["M"], 2, times=ts)
    chk.add("CP-D whole survival: type-2 explosion monitor decreasing",
            decreasing_within_noise(rows), probabilities=[r["p"] for r in rows],
            se=[r["se"] for r in rows])
    # CP-D+ with beta < alpha: type 2 dominates
    m = validate_model(model_matrix("CP-D+", {"alpha": 1.0, "beta": 0.5, "c": 2.0}), 2.0)
    ens = sample_conditioned(m, p["x0"], p["t_beta"], ConditioningSpec.whole(), n, p["seed"] + 2,
                             dt=dt, threads=th)
    rep = ks_weighted(ens.marginal(2), ens.weights, gamma_law(2, 0.5, ""), thr)
    chk.add("CP-D+ beta<alpha: type 2 vs Gamma(2, 2 beta/c)", rep.passed, statistic=rep.statistic)
    # CP-D+ with alpha < beta: type 1 dominates
    m = validate_model(model_matrix("CP-D+", {"alpha": 1.0, "beta": 2.0, "c": 2.0}), 2.0)
    ens = sample_conditioned(m, p["x0"], 8.0, ConditioningSpec.whole(), n, p["seed"] + 3, dt=dt,
                             threads=th)
    rep = ks_weighted(ens.marginal(1), ens.weights, gamma_law(2, 1.0, ""), thr)
    chk.add("CP-D+ alpha<beta: type 1 vs Gamma(2,1)", rep.passed, statistic=rep.statistic)
    worst = 0.0
    conds = (ConditioningSpec.whole(), ConditioningSpec.type_(1), ConditioningSpec.type_(2))
    for lam in p["lambdas"]:
        vals = [laplace_conditioned_numeric(m, p["x0"], lam, p["t_laplace"], cnd) for cnd in conds]
        worst = max(worst, max(vals) - min(vals))
    chk.add("CP-D+ alpha<beta: three conditionings coincide", worst <= p["laplace_tol"],
            max_spread=worst)


def _a8(p, chk):
    rng = np.random.default_rng(p["seed"])
    times = np.linspace(0.0, p["t_max"], p["n_times"])
    for D, c in p["models"]:
        model = validate_model(D, c)
        spec = perron(model)
        bad = 0
        for _ in range(p["draws"]):
            lam = rng.exponential(p["lambda_scale"], size=model.k)
            bad += not bracket_bounds(model, lam, times, spec=spec).all_satisfied
        chk.add(f"bracket D={D}", bad == 0, violations=bad, draws=p["draws"])


def _a9(p, chk):
    times = np.asarray(p["times"], dtype=float)
    h = p["h"]
    kw = {"rtol": p["rtol"], "atol": p["atol"], "method": p["method"]}

    def fd_error(model, lam, d):
        v = grad_u(model, lam, d, times, **kw).v
        up = solve_u(model, lam + h * d, times, **kw).u
        dn = solve_u(model, lam - h * d, times, **kw).u
        fd = (up - dn) / (2 * h)
        scale = np.maximum(np.max(np.abs(v), axis=1, keepdims=True), 1e-300)
        return float(np.max(np.abs(fd - v) / scale))

    for D, c in p["models"]:
        model = validate_model(D, c)
        xi = perron(model).xi
        lambdas = [np.asarray(lam[: model.k], dtype=float) for lam in p["lambdas"]]
        worst = max(fd_error(model, lam, e) for lam in lambdas for e in np.eye(model.k))
        chk.add(f"gradient vs finite differences D={D}", worst <= p["tol"], max_rel_err=worst)
        # v started at xi is the derivative of lambda -> u along xi
        worst = max(fd_error(model, lam, xi) for lam in lambdas)
        chk.add(f"v started at xi vs xi-derivative D={D}", worst <= p["tol"], max_rel_err=worst)


def _a10(p, chk):
    vals = {}
    for lam2 in p["lambda2"]:
        z, det = z_constant(p["params"], lam2, tol=p["tol"], return_details=True)
        (_, a), (_, b) = det["history"][-2:]
        change = abs(b - a) / abs(b)
        vals[str(lam2)] = z
        chk.add(f"z stabilized lambda2={lam2}", change < p["tol"] and z > 0, value=z,
                rel_change=change, horizon=det["horizon"])
    v = np.array(list(vals.values()))
    chk.add("uniform bounds within factor 10", v.max() / v.min() <= 10, values=vals)


def _a11(p, chk):
    val = stable_limit_laplace(1.0, 1.0, 0.5, 1.0)
    chk.add("stable_limit_laplace(1,1,1/2,1) = 1/8", val == 0.125, value=val)
    worst = 0.0
    for mu, c, beta, lam, t in p["cases"]:
        def rhs(s, u, mu=mu, c=c, beta=beta):
            return [mu * u[0] - c * max(u[0], 0.0) ** (1 + beta)]
        num = float(advance(rhs, [lam], 0.0, t, rtol=p["rtol"])[0])
        worst = max(worst, _rel_err(stable_cumulant(mu, c, beta, lam, t), num))
    chk.add("closed form vs ODE", worst <= p["tol"], max_rel_err=worst)


@dataclass(frozen=True)
class Criterion:
    id: str
    title: str
    runtime_limit: float
    fn: Callable
    defaults: dict


_IRR = [[-1.0, 0.5], [0.5, -1.0]]

CRITERIA: dict[str, Criterion] = {c.id: c for c in [
    Criterion("A1", "closed forms vs ODE solutions", 10.0, _a1, {
        "models": [("monotype", {"mu": 0.0, "c": 2.0}), ("monotype", {"mu": -1.0, "c": 2.0}),
                   ("CP-D", {"alpha": 1.0, "c": 2.0}),
                   ("CP-D+", {"alpha": 1.0, "beta": 0.5, "c": 2.0}),
                   ("CP-D+", {"alpha": 1.0, "beta": 2.0, "c": 2.0})],
        "grid1": [0.0, 0.1, 0.3, 1.0, 2.0, 5.0, 10.0, 50.0],
        "grid2": [(0.0, 0.0), (0.5, 0.0), (1.0, 0.0), (5.0, 0.0), (0.0, 1.0), (1.0, 1.0),
                  (2.0, 0.5), (0.1, 10.0)],
        "t_max": 20.0, "n_times": 201, "tol": 1e-8}),
    Criterion("A2", "Perron data of the decomposable examples", 1.0, _a2, {
        "cases": [{"D": [[-1.0, 1.0], [0.0, 0.0]], "mu": 0.0, "xi": [0.5, 0.5], "eta": [0.0, 2.0]},
                  {"D": [[-1.0, 1.0], [0.0, -0.5]], "mu": -0.5, "xi": [2 / 3, 1 / 3],
                   "eta": [0.0, 3.0]},
                  {"D": [[-2.0, 2.0], [0.0, -3.0]], "mu": -2.0, "xi": [1.0, 0.0]}],
        "tol": 1e-12}),
    Criterion("A3", "Gamma limit of the conditioned subcritical monotype process", 60.0, _a3, {
        "mu": -1.0, "c": 2.0, "x0": 1.0, "t": 12.0, "n_paths": 100_000, "seed": 2023,
        "method": "spine", "dt": None, "threshold": 0.02, "rate_factor": 1.0, "threads": 1}),
    Criterion("A4", "h-transform density has mean one", 60.0, _a4, {
        "models": [([[-1.0]], 2.0, 100_000, None), (_IRR, 1.0, 20_000, 0.01)],
        "times": [1.0, 5.0, 10.0], "seed": 404, "z": 3.0, "threads": 1}),
    Criterion("A5", "exchange of the limits t and theta", 30.0, _a5, {
        "D": _IRR, "c": 1.0, "lambdas": [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (2.0, 0.5)],
        "tol": 1e-3, "mono_tol": 1e-6}),
    Criterion("A6", "explosion of the conditioned critical process", 300.0, _a6, {
        "c": 2.0, "times": [10.0, 100.0, 1000.0], "n_paths": 100_000, "M": 10.0,
        "threshold": 0.03, "seed": 606, "threads": 1}),
    Criterion("A7", "decomposable two-type models", 300.0, _a7, {
        "x0": [1.0, 1.0], "dt": 0.01, "n_paths": 20_000, "threshold": 0.03, "seed": 707,
        "monitor_times": [3.0, 6.0, 12.0, 24.0], "M": 10.0, "vanish_t": 12.0,
        "vanish_level": 0.1, "vanish_prob": 0.05, "t_beta": 20.0,
        "lambdas": [(1.0, 0.0), (0.0, 1.0), (1.0, 1.0), (2.0, 0.5)], "t_laplace": 3.0,
        "laplace_tol": 1e-8, "threads": 1}),
    Criterion("A8", "a priori bracket of the cumulant", 10.0, _a8, {
        "models": [(_IRR, 1.0), ([[-1.0, 1.0], [1.0, -1.0]], 2.0),
                   ([[-2.0, 1.0, 0.5], [0.3, -1.0, 0.2], [1.0, 0.0, -1.5]], 1.5)],
        "draws": 20, "lambda_scale": 2.0, "t_max": 20.0, "n_times": 101, "seed": 808}),
    Criterion("A9", "gradient of the cumulant", 10.0, _a9, {
        "models": [(_IRR, 1.0), ([[-1.0, 1.0], [0.0, -2.0]], 2.0),
                   ([[-2.0, 1.0, 0.5], [0.3, -1.0, 0.2], [1.0, 0.0, -1.5]], 1.5)],
        "lambdas": [(1.0, 1.0, 1.0), (0.2, 3.0, 0.5)], "times": [0.5, 1.0, 5.0, 20.0],
        "h": 1e-4, "rtol": 1e-12, "atol": 1e-30, "method": "DOP853", "tol": 1e-6}),
    Criterion("A10", "constant of the dominated type", 10.0, _a10, {
        "params": {"alpha": 1.0, "beta": 2.0, "c": 2.0},
        "lambda2": [1.0, 10.0, 100.0, math.inf], "tol": 1e-6}),
    Criterion("A11", "stable branching", 5.0, _a11, {
        "cases": [(-1.0, 1.0, 0.5, 1.0, 2.0), (0.0, 1.0, 0.5, 1.0, 3.0),
                  (-0.5, 2.0, 0.3, 4.0, 5.0), (-2.0, 0.7, 0.8, 0.2, 1.0)],
        "rtol": 1e-12, "tol": 1e-8}),
]}


def _params_for(crit: Criterion, overrides: dict | None, threads: int | None) -> dict:
    p = dict(crit.defaults)
    if overrides:
        unknown = set(overrides) - set(p)
        if unknown:
            raise KeyError(f"unknown parameters for {crit.id}: {sorted(unknown)}")
        p.update(overrides)
    if threads is not None and "threads" in p:
        p["threads"] = threads
    return p


def run_criterion(cid: str, overrides: dict | None = None,
                  threads: int | None = None) -> CriterionResult:
    crit = CRITERIA[cid]
    p = _params_for(crit, overrides, threads)
    chk = _Checks()
    start = time.perf_counter()
    crit.fn(p, chk)
    runtime = time.perf_counter() - start
    ok = bool(chk.rows) and all(r["pass"] for r in chk.rows) and runtime <= crit.runtime_limit
    return CriterionResult(cid, crit.title, ok, runtime, crit.runtime_limit, chk.rows)


def run_acceptance(ids=None, overrides: dict | None = None, threads: int | None = None,
                   echo: Callable[[str], None] | None = None) -> list[CriterionResult]:
    """Run the selected criteria (all by default) in order; ``echo`` receives one line each."""
    overrides = overrides or {}
    results = []
    for cid in ids or CRITERIA:
        res = run_criterion(cid, overrides.get(cid), threads)
        if echo:
            echo(res.line())
        results.append(res)
    return results


def summary(results: list[CriterionResult]) -> dict:
    return {"pass": all(r.passed for r in results),
            "criteria": [r.to_dict() for r in results]}


def summary_json(results: list[CriterionResult]) -> str:
    return json.dumps(summary(results), indent=2, default=_plain)
