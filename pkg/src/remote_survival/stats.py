"""Weighted goodness-of-fit tools for Monte Carlo ensembles."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc

from .errors import EmptyEnsemble, NoCdf
from .laws import LimitLawDescriptor


@dataclass(frozen=True)
class GofReport:
    statistic: float
    n_effective: float
    threshold: float
    passed: bool
    reference: LimitLawDescriptor

    @property
    def pass_(self) -> bool:
        return self.passed

    def to_dict(self) -> dict:
        return {"statistic": self.statistic, "n_effective": self.n_effective,
                "threshold": self.threshold, "pass": self.passed,
                "reference": self.reference.to_dict()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def effective_sample_size(weights) -> float:
    w = np.asarray(weights, dtype=float)
    s2 = float(np.sum(w * w))
    return float(np.sum(w)) ** 2 / s2 if s2 > 0 else 0.0


def _unpack(ensemble_or_samples, weights=None, t=None):
    """``(states (n, k), weights)`` from an ensemble or raw arrays."""
    if hasattr(ensemble_or_samples, "states"):
        ens = ensemble_or_samples
        X = ens.states[:, -1, :] if t is None else ens.at(t)
        w = ens.weights
    else:
        X = np.asarray(ensemble_or_samples, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        w = np.ones(X.shape[0]) if weights is None else np.asarray(weights, dtype=float)
    if X.shape[0] == 0 or not np.sum(w) > 0:
        raise EmptyEnsemble("no paths (or zero total weight)")
    return X, w


def empirical_laplace(ensemble, lambda_grid, weights=None, t=None) -> dict:
    """Weighted empirical Laplace transform ``sum w exp(-(x, lam)) / sum w`` with jackknife SEs.

    ``lambda_grid`` is an array of Laplace arguments of shape ``(m, k)`` (or
    ``(m,)`` for one type).  The delete-one jackknife of the ratio estimator is
    computed in closed form.
    """
    X, w = _unpack(ensemble, weights, t)
    lam = np.asarray(lambda_grid, dtype=float)
    if lam.ndim == 1:
        lam = lam[:, None] if X.shape[1] == 1 else lam[None, :]
    E = np.exp(-(X @ lam.T))  # (n, m)
    W = w.sum()
    S = w @ E
    values = S / W
    n = X.shape[0]
    if n > 1:
        loo = (S[None, :] - w[:, None] * E) / (W - w)[:, None]
        se = np.sqrt((n - 1) / n * np.sum((loo - loo.mean(axis=0)) ** 2, axis=0))
    else:
        se = np.full(values.shape, np.nan)
    return {"lambda": lam, "value": values, "se": se, "n_effective": effective_sample_size(w)}


def gamma_cdf(x, shape: float, rate: float):
    """CDF of Gamma(``shape``, ``rate``) via the regularized lower incomplete gamma function."""
    x = np.asarray(x, dtype=float)
    return gammainc(shape, np.maximum(x, 0.0) * rate)


def exp_sum_cdf(x, r1: float, r2: float):
    """CDF of the sum of independent exponentials with rates ``r1`` and ``r2``.

    ``1 - (r2 exp(-r1 x) - r1 exp(-r2 x)) / (r2 - r1)``; equal rates use the
    Gamma(2, r) branch, an infinite rate drops that summand.
    """
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    if math.isinf(r1) and math.isinf(r2):
        return np.ones_like(x)
    if math.isinf(r1) or math.isinf(r2):
        r = r2 if math.isinf(r1) else r1
        return -np.expm1(-r * x)
    if math.isclose(r1, r2, rel_tol=1e-9):
        return gamma_cdf(x, 2.0, 0.5 * (r1 + r2))
    return 1 - (r2 * np.exp(-r1 * x) - r1 * np.exp(-r2 * x)) / (r2 - r1)


def reference_cdf(ref: LimitLawDescriptor):
    if ref.form == "gamma":
        return lambda x: gamma_cdf(x, ref.shape, ref.rate)
    if ref.form == "product_of_exponentials":
        rates = list(ref.rates)
        if len(rates) == 1:
            return lambda x: -np.expm1(-rates[0] * np.maximum(x, 0.0))
        if len(rates) == 2:
            return lambda x: exp_sum_cdf(x, rates[0], rates[1])
        raise NoCdf("only one or two exponential summands have an explicit CDF")
    if ref.form == "point_mass_zero":
        return lambda x: (np.asarray(x, dtype=float) >= 0).astype(float)
    raise NoCdf(f"{ref.form} references have no CDF on the half line; "
                "compare Laplace transforms or use the explosion monitor")


def weighted_ecdf_distance(samples, weights, cdf) -> float:
    """``sup_x |F_w(x) - F(x)|`` for the weighted empirical CDF ``F_w`` of ``samples``."""
    x = np.asarray(samples, dtype=float)
    w = np.asarray(weights, dtype=float)
    order = np.argsort(x, kind="stable")
    x, w = x[order], w[order]
    W = w.sum()
    # collapse ties so that the ECDF is evaluated once per distinct point
    uniq, first = np.unique(x, return_index=True)
    cw = np.cumsum(w)
    last = np.append(first[1:], x.size) - 1
    upper = cw[last] / W
    lower = np.concatenate([[0.0], upper[:-1]])
    F = np.asarray(cdf(uniq), dtype=float)
    # left limits of the reference, which differ from F only at its atoms
    F_left = np.asarray(cdf(np.nextafter(uniq, -np.inf)), dtype=float)
    return float(max(np.max(np.abs(upper - F)), np.max(np.abs(F_left - lower))))


def ks_weighted(samples, weights, reference: LimitLawDescriptor, threshold: float = 0.02) -> GofReport:
    """Weighted Kolmogorov-Smirnov distance between a 1-d sample and ``reference``.

    Invariant under a common rescaling of the weights.  Zero-weight samples
    do not contribute.

    Raises
    ------
    NoCdf
        For ``explosion`` and ``numeric_laplace`` references.
    EmptyEnsemble
        If there is no sample with positive weight.
    """
    cdf = reference_cdf(reference)
    x = np.asarray(samples, dtype=float).ravel()
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float).ravel()
    keep = w > 0
    x, w = x[keep], w[keep]
    if x.size == 0:
        raise EmptyEnsemble("no sample with positive weight")
    stat = weighted_ecdf_distance(x, w, cdf)
    return GofReport(stat, effective_sample_size(w), threshold, stat <= threshold, reference)


def ks_two_sample_weighted(x1, w1, x2, w2) -> float:
    """``sup |F_1 - F_2|`` between two weighted empirical CDFs."""
    x1, x2 = np.asarray(x1, float), np.asarray(x2, float)
    w1 = np.ones_like(x1) if w1 is None else np.asarray(w1, float)
    w2 = np.ones_like(x2) if w2 is None else np.asarray(w2, float)
    grid = np.union1d(x1, x2)

    def ecdf(x, w):
        o = np.argsort(x, kind="stable")
        cw = np.concatenate([[0.0], np.cumsum(w[o])]) / w.sum()
        return cw[np.searchsorted(x[o], grid, side="right")]

    return float(np.max(np.abs(ecdf(x1, w1) - ecdf(x2, w2))))


def explosion_monitor(ensembles, M: float, i: int = 1, *, times=None) -> list[dict]:
    """Weighted estimates of ``P(x_(t,i) <= M)`` with standard errors.

    Either a sequence of ensembles (each read at its final time), or a single
    ensemble read at each of ``times``.  Returns one row
    ``{"t", "p", "se", "n_effective"}`` per time; the SE is the delta-method
    error of the self-normalized estimator.
    """
    if times is not None:
        pairs = [(ensembles, float(t)) for t in times]
    else:
        pairs = [(ens, float(ens.times[-1])) for ens in ensembles]
    rows = []
    for ens, t in pairs:
        x = ens.marginal(i, t)
        w = ens.weights
        W = w.sum()
        if not W > 0:
            raise EmptyEnsemble("ensemble with zero total weight")
        ind = (x <= M).astype(float)
        p = float(w @ ind / W)
        se = float(np.sqrt(np.sum((w * (ind - p)) ** 2)) / W)
        rows.append({"t": t, "p": p, "se": se, "n_effective": effective_sample_size(w)})
    return rows


def decreasing_within_noise(rows, z: float = 3.0, strict: bool = True) -> bool:
    """Successive estimates decrease; ``strict`` also requires each drop to exceed ``z`` SEs."""
    for a, b in zip(rows, rows[1:]):
        gap = a["p"] - b["p"]
        noise = z * math.hypot(a["se"], b["se"])
        if gap <= (noise if strict else -noise):
            return False
    return True
