"""Laplace transforms of the mass process, conditioned laws and their long-time limits.

Conditioning on remote survival (survival of the whole population, or of one
type, at time ``t + theta`` with ``theta -> inf``) is an h-transform with
density ``exp(-rate t) (x_t, v0) / (x_0, v0)``.  The pair ``(v0, rate)``
depends on the model family:

==========================  ===================  =================  ============
family                      whole / type 2       type 1             condition
==========================  ===================  =================  ============
monotype, irreducible       ``(xi, mu)``         ``(xi, mu)``
CP-D                        ``(xi, 0)``          ``((1,0), -alpha)``  ``x_1 > 0``
CP-D+, beta < alpha         ``(xi, -beta)``      ``((1,0), -alpha)``  ``x_1 > 0``
CP-D+, alpha <= beta        ``((1,0), -alpha)``  ``((1,0), -alpha)``  ``x_1 > 0``
CP-D+, alpha <= beta        ``((0,1), -beta)``   undefined          ``x_1 = 0``
==========================  ===================  =================  ============

Every density ``v0`` above satisfies ``D v0 = rate * v0``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from .cumulant import (
    RTOL,
    LambdaSpec,
    advance,
    grad_u,
    solve_u,
    solve_v,
    tilde_v_infinity,
    u_at_infinite_lambda,
)
from .errors import (
    CriticalModel,
    NotStabilized,
    UncoveredCase,
    UndefinedConditioning,
)
from .spectral import ModelParams, SpectralData, is_irreducible, perron

FAMILIES = ("monotype", "irreducible", "CP-D", "CP-D+ beta<alpha",
            "CP-D+ alpha<beta", "CP-D+ alpha=beta")


@dataclass(frozen=True)
class ConditioningSpec:
    """Survival event at time ``t + horizon``: of the whole population or of type ``i`` (1-based)."""

    kind: str = "whole"
    i: int | None = None
    horizon: float = math.inf

    def __post_init__(self):
        if self.kind not in ("whole", "type"):
            raise ValueError("kind must be 'whole' or 'type'")
        if self.kind == "type" and (self.i is None or self.i < 1):
            raise ValueError("type conditioning needs a 1-based index i")
        if self.kind == "whole" and self.i is not None:
            raise ValueError("whole-population conditioning takes no index")
        if not self.horizon > 0:
            raise ValueError("horizon must be > 0")

    @classmethod
    def whole(cls, horizon: float = math.inf) -> "ConditioningSpec":
        return cls("whole", None, horizon)

    @classmethod
    def type_(cls, i: int, horizon: float = math.inf) -> "ConditioningSpec":
        return cls("type", i, horizon)

    @property
    def remote(self) -> bool:
        return math.isinf(self.horizon)

    def mask(self, k: int) -> np.ndarray:
        """Coordinates sent to infinity in the survival probability."""
        if self.kind == "whole":
            return np.ones(k, dtype=bool)
        if self.i > k:
            raise ValueError(f"type {self.i} does not exist in a {k}-type model")
        m = np.zeros(k, dtype=bool)
        m[self.i - 1] = True
        return m

    def to_dict(self) -> dict:
        return {"kind": self.kind, "i": self.i,
                "horizon": None if self.remote else self.horizon}


@dataclass(frozen=True)
class LimitLawDescriptor:
    """A limit law: explicit family, or a certified numeric Laplace table."""

    form: str
    provenance: str
    shape: float | None = None
    rate: float | None = None
    rates: tuple | None = None
    table: dict | None = None
    flags: tuple = field(default_factory=tuple)

    FORMS = ("gamma", "product_of_exponentials", "point_mass_zero", "explosion",
             "numeric_laplace")

    def __post_init__(self):
        if self.form not in self.FORMS:
            raise ValueError(f"unknown form {self.form!r}")
        if self.form == "gamma" and not (self.shape > 0 and self.rate > 0):
            raise ValueError("gamma needs shape > 0 and rate > 0")
        if self.form == "product_of_exponentials" and not self.rates:
            raise ValueError("product_of_exponentials needs rates")

    def laplace(self, lam: float) -> float:
        """Laplace transform at a scalar ``lam >= 0`` (explicit forms only)."""
        lam = float(lam)
        if self.form == "gamma":
            return (1 + lam / self.rate) ** (-self.shape)
        if self.form == "product_of_exponentials":
            out = 1.0
            for r in self.rates:
                out /= 1 + (0.0 if math.isinf(r) else lam / r)
            return out
        if self.form == "point_mass_zero":
            return 1.0
        if self.form == "explosion":
            return 1.0 if lam == 0 else 0.0
        raise NotImplementedError("use the stored table of a numeric_laplace law")

    def to_dict(self) -> dict:
        d = {"form": self.form}
        if self.form == "gamma":
            d.update(shape=self.shape, rate=self.rate)
        if self.form == "product_of_exponentials":
            d["rates"] = [None if math.isinf(r) else r for r in self.rates]
        if self.table is not None:
            d["table"] = self.table
        if self.flags:
            d["flags"] = list(self.flags)
        d["provenance"] = self.provenance
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "LimitLawDescriptor":
        rates = d.get("rates")
        if rates is not None:
            rates = tuple(math.inf if r is None else float(r) for r in rates)
        return cls(form=d["form"], provenance=d.get("provenance", ""),
                   shape=d.get("shape"), rate=d.get("rate"), rates=rates,
                   table=d.get("table"), flags=tuple(d.get("flags", ())))

    @classmethod
    def from_json(cls, s: str) -> "LimitLawDescriptor":
        return cls.from_dict(json.loads(s))


def gamma_law(shape, rate, provenance) -> LimitLawDescriptor:
    return LimitLawDescriptor("gamma", provenance, shape=float(shape), rate=float(rate))


# ---------------------------------------------------------------- dispatch

@dataclass(frozen=True)
class Family:
    name: str
    alpha: float = math.nan
    beta: float = math.nan


def model_family(model: ModelParams) -> Family:
    """Classify ``D`` into one of the covered families (see module docstring)."""
    D = model.D
    if model.k == 1:
        return Family("monotype")
    if is_irreducible(D):
        return Family("irreducible")
    if model.k == 2 and D[1, 0] == 0 and D[0, 1] > 0 and math.isclose(
            -D[0, 0], D[0, 1], rel_tol=1e-12):
        alpha, beta = float(D[0, 1]), float(-D[1, 1])
        if beta == 0:
            return Family("CP-D", alpha, 0.0)
        if beta < 0:
            raise UncoveredCase("type 2 is supercritical")
        if math.isclose(alpha, beta, rel_tol=1e-12):
            return Family("CP-D+ alpha=beta", alpha, beta)
        return Family("CP-D+ beta<alpha" if beta < alpha else "CP-D+ alpha<beta", alpha, beta)
    raise UncoveredCase("reducible mutation matrix outside the covered decomposable families")


def _check_x0(x0, k) -> np.ndarray:
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.size != k:
        raise ValueError(f"x0 must have {k} entries")
    if np.any(x0 < 0) or np.any(~np.isfinite(x0)):
        raise ValueError("x0 must be finite and >= 0")
    if not np.any(x0 > 0):
        raise UndefinedConditioning("null initial condition: the process is extinct")
    return x0


def _xi_decomposable(fam: Family) -> np.ndarray:
    a, b = fam.alpha, fam.beta
    return np.array([a, a - b]) / (2 * a - b)


def conditioning_density(model: ModelParams, x0, cond: ConditioningSpec,
                         spec: SpectralData | None = None) -> tuple[np.ndarray, float]:
    """``(v0, rate)`` of the h-transform for remote-survival conditioning.

    Raises
    ------
    UndefinedConditioning
        For the conditionings that do not exist for this ``x0`` (type-1 survival
        without type-1 mass when type 1 is not fed by type 2).
    """
    k = model.k
    x0 = _check_x0(x0, k)
    cond.mask(k)  # validates the index
    fam = model_family(model)
    if fam.name in ("monotype", "irreducible"):
        spec = spec or perron(model)
        return spec.xi.copy(), float(spec.mu)
    e1, e2 = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    type1 = cond.kind == "type" and cond.i == 1
    if fam.name in ("CP-D", "CP-D+ beta<alpha"):
        if type1:
            if x0[0] <= 0:
                raise UndefinedConditioning("type-1 survival needs initial type-1 mass")
            return e1, -fam.alpha
        return _xi_decomposable(fam), -fam.beta
    # alpha <= beta: type 1 dominates whenever it is present
    if x0[0] > 0:
        return e1, -fam.alpha
    if type1:
        raise UndefinedConditioning(
            "type 1 is absent and never created: its survival has probability 0")
    return e2, -fam.beta


# ---------------------------------------------------------------- Laplace transforms

def laplace_unconditioned(model: ModelParams, x0, lam, t: float, **kw) -> float:
    """``E_x0 exp(-(x_t, lambda)) = exp(-(x0, u_t^lambda))``."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if np.any(x0 < 0):
        raise ValueError("x0 must be >= 0")
    if t == 0:
        lam = LambdaSpec.of(lam)
        return float(math.exp(-float(x0 @ lam.values)))
    if not np.any(x0 > 0):
        return 1.0
    u = solve_u(model, lam, [t], **kw).u[-1]
    return math.exp(-float(x0 @ u))


def extinction_probability(model: ModelParams, x0, t: float) -> float:
    """``P_x0(x_t = 0) = exp(-(x0, u_t^inf))``; equals 1 for ``x0 = 0``."""
    if not t > 0:
        raise ValueError("t must be > 0")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if np.any(x0 < 0):
        raise ValueError("x0 must be >= 0")
    if not np.any(x0 > 0):
        return 1.0
    u = u_at_infinite_lambda(model, t, np.ones(model.k, dtype=bool))
    return math.exp(-float(x0 @ u))


def _u_mask_at(model, mask, times, t_start=None):
    """``u^inf`` (masked coordinates infinite) on ``times``, started from ``min(times, 1)``."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    t0 = min(1.0, float(times[0])) if t_start is None else t_start
    grid = times if times[0] == t0 else np.concatenate([[t0], times])
    lam = np.where(mask, np.inf, 0.0)
    u = solve_u(model, lam, grid).u
    return u if times[0] == t0 else u[1:]


def laplace_conditioned(model: ModelParams, spec: SpectralData | None, x0, lam, t: float,
                        cond: ConditioningSpec | None = None) -> float:
    """Laplace transform of ``x_t`` conditioned on survival at ``t + theta``.

    Remote survival (``theta = inf``) uses the h-transform
    ``(x0, v_t)/(x0, v0) exp(-rate t) exp(-(x0, u_t))`` with ``(v0, rate)`` from
    :func:`conditioning_density`.  A finite ``theta`` uses the exact ratio

    ``[exp(-(x0,u_t^lam)) - exp(-(x0,u_t^(lam+w)))] / [1 - exp(-(x0,u_(t+theta)^inf))]``

    with ``w = u_theta^inf`` and only the conditioned coordinates sent to
    infinity.
    """
    cond = cond or ConditioningSpec.whole()
    k = model.k
    lam = LambdaSpec.of(lam)
    x0 = _check_x0(x0, k)
    if not lam.is_finite:
        raise ValueError("lambda must be finite")
    if cond.remote:
        v0, rate = conditioning_density(model, x0, cond, spec)
        if t == 0:
            return math.exp(-float(x0 @ lam.values))
        tr = solve_v(model, lam, v0, [t])
        num = float(x0 @ tr.v[-1])
        den = float(x0 @ v0)
        return num / den * math.exp(-rate * t - float(x0 @ tr.u[-1]))
    return _laplace_finite_theta(model, x0, lam.values, t, cond)


def _laplace_finite_theta(model, x0, lam, t, cond):
    theta = cond.horizon
    mask = cond.mask(model.k)
    if t > 0:
        w, u_end = _u_mask_at(model, mask, [theta, t + theta])
        u, d = _u_and_increment(model, lam, w, t)
        A, gap = float(x0 @ u), float(x0 @ d)
    else:
        w = u_end = _u_mask_at(model, mask, [theta])[0]
        A, gap = float(x0 @ lam), float(x0 @ w)
    C = float(x0 @ u_end)
    den = -math.expm1(-C)
    if den <= 0:
        raise UndefinedConditioning("the conditioning event has probability 0")
    return math.exp(-A) * -math.expm1(-gap) / den


def _u_and_increment(model, lam, w, t):
    """``u_t^lam`` and ``u_t^(lam+w) - u_t^lam``, the increment integrated as its own variable."""
    k = model.k
    D, half_c = model.D, 0.5 * model.c

    def rhs(s, y):
        u, d = y[:k], y[k:]
        return np.concatenate([D @ u - half_c * u * u, D @ d - half_c * (2 * u + d) * d])

    y = advance(rhs, np.concatenate([lam, w]), 0.0, t)
    return y[:k], y[k:]


def conditioned_limit_direction(model: ModelParams, x0, t: float, cond: ConditioningSpec, *,
                                theta0: float = 5.0, tol: float = 1e-10,
                                max_doublings: int = 6) -> tuple[np.ndarray, float]:
    """``h = lim_theta u_theta^inf / (x0, u_(t+theta)^inf)`` by horizon doubling.

    Returns ``(h, theta)``.  This limit is the derivative direction of the
    conditioned Laplace transform and does not use the h-transform dispatch.
    """
    x0 = _check_x0(x0, model.k)
    mask = cond.mask(model.k)
    prev = None
    theta = theta0
    for _ in range(max_doublings + 1):
        w, u_end = _u_mask_at(model, mask, [theta, t + theta])
        den = float(x0 @ u_end)
        if den <= 0:
            raise UndefinedConditioning("the conditioning event has probability 0")
        h = w / den
        if prev is not None:
            scale = max(float(np.max(np.abs(h))), 1e-300)
            if np.max(np.abs(h - prev)) <= tol * scale:
                return h, theta
        prev = h
        theta *= 2
    raise NotStabilized(f"limit direction did not stabilize by theta={theta / 2}")


def laplace_conditioned_numeric(model: ModelParams, x0, lam, t: float,
                                cond: ConditioningSpec, **kw) -> float:
    """Remote-survival Laplace transform from the ``theta -> inf`` limit of the exact ratio.

    Independent of :func:`conditioning_density`: as ``theta -> inf`` the
    numerator of the finite-``theta`` ratio linearizes along ``h`` of
    :func:`conditioned_limit_direction` and the value becomes
    ``(x0, grad_h u_t^lam) exp(-(x0, u_t^lam))``.
    """
    x0 = _check_x0(x0, model.k)
    h, _ = conditioned_limit_direction(model, x0, t, cond, **kw)
    tr = grad_u(model, lam, h, [t])
    return float(x0 @ tr.v[-1]) * math.exp(-float(x0 @ tr.u[-1]))


# ---------------------------------------------------------------- long-time laws

def _laplace_table(fn, k: int, n_points: int, lam_min: float, lam_max: float):
    """``fn`` on ``n_points`` log-spaced points along each coordinate ray, plus ``lambda = 0``."""
    s = np.geomspace(lam_min, lam_max, n_points)
    lambdas = [[0.0] * k]
    values = [1.0]
    for i in range(k):
        for si in s:
            lam = np.zeros(k)
            lam[i] = si
            lambdas.append(lam.tolist())
            values.append(float(fn(lam)))
    return {"lambdas": lambdas, "values": values}


def _ray_table(fn, which, k, n_points, lam_min, lam_max):
    s = np.geomspace(lam_min, lam_max, n_points)
    lambdas, values = [[0.0] * k], [1.0]
    for si in s:
        lam = np.zeros(k)
        lam[which - 1] = si
        lambdas.append(lam.tolist())
        values.append(float(fn(lam)))
    return {"lambdas": lambdas, "values": values}


def longtime_law(model: ModelParams, cond: ConditioningSpec | None = None,
                 which_type: int | None = None, *, x0=None, n_points: int = 64,
                 lam_range: tuple = (1e-2, 1e2)):
    """Limit as ``t -> inf`` of the law of ``x_t`` under remote-survival conditioning.

    For two-type decomposable models without ``which_type`` a dict
    ``{1: law, 2: law}`` is returned.  Non-explicit limits are returned as
    ``numeric_laplace`` tables (64 log-spaced points per coordinate ray plus
    ``lambda = 0`` by default).

    Raises
    ------
    UncoveredCase
        When the long-time behaviour is not established for the requested case.
    """
    cond = cond or ConditioningSpec.whole()
    if not cond.remote:
        raise UncoveredCase("long-time laws are tabulated for remote survival only")
    k = model.k
    fam = model_family(model)
    c = model.c
    x0 = np.ones(k) if x0 is None else _check_x0(x0, k)
    if fam.name == "monotype":
        if model.is_critical:
            return LimitLawDescriptor("explosion", "critical monotype process under remote survival")
        return gamma_law(2, 2 * abs(model.mu) / c,
                         "size-biased Yaglom limit of the subcritical monotype process")
    if fam.name == "irreducible":
        if model.is_critical:
            return LimitLawDescriptor("explosion", "critical irreducible process under remote survival")
        spec = perron(model)
        horizons = []

        def fn(lam):
            v, T = tilde_v_infinity(model, lam, spec=spec, return_horizon=True)
            horizons.append(T)
            return float(v.sum())

        if which_type is None:
            table = _laplace_table(fn, k, n_points, *lam_range)
        else:
            table = _ray_table(fn, which_type, k, n_points, *lam_range)
        table["horizon"] = max(horizons)
        return LimitLawDescriptor(
            "numeric_laplace",
            "limit of the conditioned Laplace transform (tilde v at infinity, summed)",
            table=table)
    if fam.name == "CP-D+ alpha=beta":
        raise UncoveredCase("alpha = beta: only the conditioned densities are covered")
    laws = _decomposable_laws(model, fam, cond, x0, n_points, lam_range, which_type)
    if which_type is None:
        return laws
    if which_type not in laws:
        raise ValueError("which_type must be 1 or 2")
    return laws[which_type]


def _decomposable_laws(model, fam, cond, x0, n_points, lam_range, which_type=None):
    c, a, b = model.c, fam.alpha, fam.beta
    type1 = cond.kind == "type" and cond.i == 1
    vanish = LimitLawDescriptor("point_mass_zero", "weakest type vanishes under survival of the dominating type")
    explode = LimitLawDescriptor("explosion", "critical type explodes under remote survival")
    if fam.name == "CP-D":
        if type1:
            if x0[0] <= 0:
                raise UndefinedConditioning("type-1 survival needs initial type-1 mass")
            return {1: gamma_law(2, 2 * a / c, "type 1 under its own survival"), 2: explode}
        return {1: vanish, 2: explode}
    if fam.name == "CP-D+ beta<alpha":
        if type1:
            if x0[0] <= 0:
                raise UndefinedConditioning("type-1 survival needs initial type-1 mass")
            return {1: gamma_law(2, 2 * a / c, "type 1 under its own survival"),
                    2: LimitLawDescriptor("explosion", "type 2 under type-1 survival")}
        return {1: vanish, 2: gamma_law(2, 2 * b / c, "dominating type 2 under remote survival")}
    # alpha < beta
    v0, rate = conditioning_density(model, x0, cond)
    if x0[0] == 0:
        return {1: LimitLawDescriptor("point_mass_zero", "type 1 is absent and never created"),
                2: gamma_law(2, 2 * b / c, "type 2 alone under its own survival")}

    dominant = gamma_law(2, 2 * a / c, "dominating type 1 under remote survival")
    if which_type == 1:
        # the type-2 table is costly and not requested
        return {1: dominant}
    horizons = []

    def fn(lam):
        v, T = tilde_v_infinity(model, lam, v0=v0, rate=rate, return_horizon=True)
        horizons.append(T)
        return float(x0 @ v) / float(x0 @ v0)

    table = _ray_table(fn, 2, 2, n_points, *lam_range)
    table["horizon"] = max(horizons)
    return {1: dominant,
            2: LimitLawDescriptor("numeric_laplace",
                                  "type 2 fed by the dominating type 1 (non-explicit limit)",
                                  table=table)}


# ---------------------------------------------------------------- iterated limits

def _iterated_setup(model, lam, cond, x0):
    cond = cond or ConditioningSpec.whole()
    if not cond.remote:
        cond = ConditioningSpec(cond.kind, cond.i)
    lam = LambdaSpec.of(lam)
    if not lam.is_finite:
        raise ValueError("lambda must be finite")
    k = model.k
    fam = model_family(model)
    x0 = np.ones(k) if x0 is None else _check_x0(x0, k)
    if fam.name in ("monotype", "irreducible"):
        if model.is_critical:
            raise CriticalModel("the iterated limits need a subcritical model")
        spec = perron(model)
        return lam.values, cond, x0, spec.xi, spec.mu
    if fam.name == "CP-D+ alpha=beta":
        raise UncoveredCase("the exchange of limits is not established for alpha = beta")
    # decomposable: Laplace argument must act on a single type
    support = np.flatnonzero(lam.values > 0)
    if support.size > 1:
        raise UncoveredCase("decomposable models: lambda must charge a single type")
    i = int(support[0]) + 1 if support.size else None
    j = 0 if cond.kind == "whole" else cond.i
    covered = {
        "CP-D": {(1, 1)},
        "CP-D+ beta<alpha": {(1, 1), (2, 2), (2, 0)},
        "CP-D+ alpha<beta": {(1, 1), (1, 2), (2, 1), (2, 2), (1, 0), (2, 0)}
        if x0[0] > 0 else {(2, 2), (2, 0)},
    }[fam.name]
    if i is not None and (i, j) not in covered:
        raise UncoveredCase(f"exchange of limits not covered for type {i} under {cond.to_dict()}")
    v0, rate = conditioning_density(model, x0, cond)
    return lam.values, cond, x0, v0, rate


def iterated_limit_t_then_theta(model: ModelParams, lam, cond: ConditioningSpec | None = None,
                                x0=None, **kw) -> float:
    """``lim_t lim_theta`` of the conditioned Laplace transform: ``(x0, tilde v_inf)/(x0, v0)``.

    For irreducible models ``tilde v_inf`` is collinear to ``xi`` and this is
    ``(tilde v_inf, 1)`` for every ``x0``.
    """
    lam, cond, x0, v0, rate = _iterated_setup(model, lam, cond, x0)
    if not np.any(lam > 0):
        return 1.0
    v = tilde_v_infinity(model, lam, v0=v0, rate=rate, **kw)
    return float(x0 @ v) / float(x0 @ v0)


def _rescaled_pair_limit(model, lam, w, rate, *, tol=1e-10, max_doublings=8, rtol=RTOL):
    """Limits of ``exp(-rate t)`` times ``u^lam``, ``u^(lam+w) - u^lam`` and ``u^w``.

    The difference is integrated as its own variable so that it keeps full
    relative accuracy when ``w`` is tiny.
    """
    k = model.k
    A = model.D - rate * np.eye(k)
    half_c = 0.5 * model.c

    def rhs(t, y):
        z, d, q = y[:k], y[k:2 * k], y[2 * k:]
        g = half_c * math.exp(rate * t)
        return np.concatenate([A @ z - g * z * z,
                               A @ d - g * (2 * z + d) * d,
                               A @ q - g * q * q])

    def step(y, a, b):
        return advance(rhs, y, a, b, rtol=rtol)

    T = 10.0 / abs(rate)
    y = step(np.concatenate([lam, w, w]), 0.0, T)
    for _ in range(max_doublings):
        y_next = step(y, T, 2 * T)
        T *= 2
        tail = y_next[k:]
        scale = np.maximum(np.abs(tail), 1e-300)
        if np.all(np.abs(tail - y[k:]) <= tol * scale):
            return y_next[:k], y_next[k:2 * k], y_next[2 * k:]
        y = y_next
    raise NotStabilized(f"rescaled cumulants did not stabilize by horizon {T}")


def iterated_limit_theta_then_t(model: ModelParams, lam, cond: ConditioningSpec | None = None,
                                x0=None, *, thetas=None, tol: float = 1e-9) -> float:
    """``lim_theta lim_t`` of the conditioned Laplace transform.

    For fixed ``theta`` the inner limit is
    ``F(theta) = (x0, tilde u^(lam+w) - tilde u^lam) / (x0, tilde u^w)`` with
    ``w = u_theta^inf`` (conditioned coordinates infinite) and ``tilde`` the
    ``exp(-rate t)`` rescaled long-time limit.  ``F`` is affine in
    ``s = (w, 1)`` to first order, so successive pairs of horizons are
    extrapolated to ``s = 0`` until two estimates agree to ``tol``.
    """
    lam, cond, x0, _, rate = _iterated_setup(model, lam, cond, x0)
    if not np.any(lam > 0):
        return 1.0
    mask = cond.mask(model.k)
    if thetas is None:
        thetas = 6.0 / abs(rate) + np.arange(0, 8) * 2.0 / abs(rate)
    ws = _u_mask_at(model, mask, thetas)
    F, s = [], []
    est = []
    for w in ws:
        _, d, q = _rescaled_pair_limit(model, lam, w, rate)
        F.append(float(x0 @ d) / float(x0 @ q))
        s.append(float(w.sum()))
        if len(F) >= 2:
            (s1, F1), (s2, F2) = (s[-2], F[-2]), (s[-1], F[-1])
            est.append((s1 * F2 - s2 * F1) / (s1 - s2))
        if len(est) >= 2 and abs(est[-1] - est[-2]) <= tol * abs(est[-1]):
            return est[-1]
    raise NotStabilized(f"theta extrapolation did not settle: {est[-3:]}")


def finite_theta_limit_law_monotype(mu: float, c: float, theta: float) -> LimitLawDescriptor:
    """``lim_t`` of the law of ``x_t`` given ``x_(t+theta) > 0`` (subcritical monotype).

    The Laplace transform is ``1/(1 + a lam) * 1/(1 + a (1 - exp(mu theta)) lam)``
    with ``a = c/(2|mu|)``, i.e. the sum of independent exponentials with
    rates ``2|mu|/c`` and ``2|mu| / (c (1 - exp(mu theta)))``.  As ``theta -> 0``
    the second rate diverges (the second summand degenerates to 0).
    """
    if not mu < 0:
        raise CriticalModel("needs mu < 0")
    if not theta > 0:
        raise ValueError("theta must be > 0")
    r = 2 * abs(mu) / c
    q = -math.expm1(mu * theta)
    flags = ("second summand nearly degenerate",) if q < 1e-8 else ()
    return LimitLawDescriptor(
        "product_of_exponentials",
        "monotype limit given survival at a finite extra horizon theta",
        rates=(r, r / q), flags=flags)


# ---------------------------------------------------------------- stable branching

def stable_cumulant(mu: float, c: float, beta: float, lam: float, t: float) -> float:
    """Cumulant of the monotype process with ``beta``-stable branching.

    Solves ``du/dt = mu u - c u^(1+beta)``, ``u_0 = lam``, in closed form.
    """
    _check_stable(mu, c, beta)
    if mu > 0:
        raise ValueError("mu must be <= 0")
    lam, t = float(lam), float(t)
    if lam == 0:
        return 0.0
    if mu == 0:
        return lam / (1 + beta * c * lam**beta * t) ** (1 / beta)
    a = abs(mu)
    return lam * math.exp(-a * t) / (
        1 + c * lam**beta / a * -math.expm1(-beta * a * t)) ** (1 / beta)


def stable_limit_laplace(mu: float, c: float, beta: float, lam: float) -> float:
    """Laplace transform ``(1 + (c/|mu|) lam^beta)^(-1 - 1/beta)`` of the conditioned limit.

    Only ``|mu|`` enters, so both sign conventions for the decay rate are accepted.
    """
    _check_stable(mu, c, beta)
    if mu == 0:
        raise CriticalModel("the stable limit law needs a subcritical rate")
    return (1 + c / abs(mu) * float(lam) ** beta) ** (-1 - 1 / beta)


def _check_stable(mu, c, beta):
    if not 0 < beta < 1:
        raise ValueError("beta must lie in (0, 1)")
    if not c > 0:
        raise ValueError("c must be > 0")
