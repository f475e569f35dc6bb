"""Numerical cumulant semigroup of the multitype Feller diffusion.

The cumulant ``u_t`` solves ``du/dt = D u - (c/2) u*u``, ``u_0 = lambda`` and
gives the Laplace transform ``E_x exp(-(x_t, lambda)) = exp(-(x, u_t))``.  The
companion ``v_t`` solves the linearized system ``dv/dt = D v - c u*v``; with
``v_0 = xi`` it drives the Laplace transform of the conditioned process, with
``v_0 = eta`` it is the directional derivative of ``u_t`` in ``lambda``.

Infinite entries of ``lambda`` are handled as monotone limits (a ladder of
large finite values followed by Richardson extrapolation in ``1/L``).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import (
    CriticalModel,
    InfiniteLambdaAtZero,
    NotStabilized,
    ReducibleModel,
    SolverFailure,
)
from .spectral import ModelParams, SpectralData, matrix_exp, perron

RTOL = 1e-10
# Effectively pure relative error control: cumulants decay like exp(mu t) and
# an absolute floor would destroy their relative accuracy at long times.
ATOL = 1e-300
METHOD = "RK45"
LADDER = (1e2, 1e4, 1e6, 1e8)


@dataclass(frozen=True)
class LambdaSpec:
    """Laplace argument; ``inf`` entries encode the monotone limit in that coordinate."""

    values: np.ndarray

    @classmethod
    def of(cls, lam) -> "LambdaSpec":
        if isinstance(lam, LambdaSpec):
            return lam
        arr = np.atleast_1d(np.asarray(lam, dtype=float)).copy()
        if np.any(np.isnan(arr)) or np.any(arr < 0):
            raise ValueError("lambda entries must be >= 0")
        return cls(arr)

    @property
    def mask(self) -> np.ndarray:
        return np.isinf(self.values)

    @property
    def finite_part(self) -> np.ndarray:
        return np.where(self.mask, 0.0, self.values)

    @property
    def is_finite(self) -> bool:
        return not self.mask.any()

    def tolist(self) -> list:
        return [float(x) for x in self.values]


@dataclass(frozen=True)
class CumulantTrajectory:
    times: np.ndarray
    u: np.ndarray
    initial_lambda: LambdaSpec
    v: np.ndarray | None = None
    initial_v: np.ndarray | None = None
    solver_stats: dict = field(default_factory=dict)

    def at(self, i: int = -1) -> np.ndarray:
        return self.u[i]

    def to_csv(self, path) -> None:
        """Columns ``t, u_1..u_k[, v_1..v_k]`` with 17 significant digits."""
        k = self.u.shape[1]
        header = ["t"] + [f"u_{i + 1}" for i in range(k)]
        if self.v is not None:
            header += [f"v_{i + 1}" for i in range(k)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for j, t in enumerate(self.times):
                row = [t, *self.u[j]]
                if self.v is not None:
                    row += list(self.v[j])
                w.writerow([f"{x:.17g}" for x in row])


@dataclass(frozen=True)
class BracketReport:
    times: np.ndarray
    u: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    linear_lower: np.ndarray
    linear_upper: np.ndarray
    satisfied: np.ndarray

    @property
    def all_satisfied(self) -> bool:
        return bool(np.all(self.satisfied))


def _grid(times) -> np.ndarray:
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a nonempty 1-d grid")
    if np.any(times < 0) or np.any(np.diff(times) <= 0):
        raise ValueError("times must be nonnegative and strictly increasing")
    return times


def _integrate(rhs, y0, t0, times, rtol, atol, method):
    """Run ``solve_ivp`` from ``t0`` and return the states on ``times``."""
    y0 = np.asarray(y0, dtype=float)
    out = np.empty((times.size, y0.size))
    at_start = times == t0
    out[at_start] = y0
    later = times[~at_start]
    stats = {"nfev": 0, "method": method, "rtol": rtol, "atol": atol}
    if later.size:
        # zero initial components make the first-step heuristic divide by atol
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            sol = solve_ivp(rhs, (t0, later[-1]), y0, method=method, t_eval=later,
                            rtol=rtol, atol=atol)
        if sol.status != 0:
            raise SolverFailure(sol.message)
        out[~at_start] = sol.y.T
        stats["nfev"] = int(sol.nfev)
    return out, stats


def advance(rhs, y0, t_from: float, t_to: float, *, rtol: float = RTOL,
            atol: float = ATOL, method: str = METHOD) -> np.ndarray:
    """State at ``t_to`` of the solution started from ``y0`` at ``t_from``."""
    out, _ = _integrate(rhs, y0, t_from, np.array([t_to], dtype=float), rtol, atol, method)
    return out[-1]


def _enforce_nonnegative(u: np.ndarray, rtol: float, atol: float) -> np.ndarray:
    if u.size == 0 or u.min() >= 0:
        return u
    scale = np.max(np.abs(u), axis=-1, keepdims=True)
    floor = -10.0 * (rtol * scale + atol)
    if np.any(u < floor):
        raise SolverFailure(f"cumulant became negative ({u.min():.3g})")
    return np.maximum(u, 0.0)


def _u_rhs(model: ModelParams):
    D, half_c = model.D, 0.5 * model.c

    def rhs(t, u):
        return D @ u - half_c * u * u

    return rhs


def _uv_rhs(model: ModelParams):
    D, c, k = model.D, model.c, model.k

    def rhs(t, y):
        u, v = y[:k], y[k:]
        return np.concatenate([D @ u - 0.5 * c * u * u, D @ v - c * u * v])

    return rhs


def _check_lambda(model: ModelParams, lam: LambdaSpec) -> None:
    if lam.values.size != model.k:
        raise ValueError(f"lambda has {lam.values.size} entries, model has {model.k} types")


def _start_state(model, lam, times, rtol, atol, method, ladder):
    """Initial time and value of ``u``; infinite coordinates start at ``times[0] > 0``."""
    if lam.is_finite:
        return 0.0, lam.values.copy()
    if times[0] <= 0:
        raise InfiniteLambdaAtZero("lambda has infinite entries; the grid must start at t > 0")
    u0 = u_at_infinite_lambda(model, times[0], lam.mask, lam.finite_part,
                              ladder=ladder, rtol=rtol, atol=atol, method=method)
    return float(times[0]), u0


def solve_u(model: ModelParams, lam, times, *, rtol: float = RTOL, atol: float = ATOL,
            method: str = METHOD, ladder=LADDER) -> CumulantTrajectory:
    """Cumulant ``u_t^lambda`` on the grid ``times``."""
    lam = LambdaSpec.of(lam)
    _check_lambda(model, lam)
    times = _grid(times)
    t0, u0 = _start_state(model, lam, times, rtol, atol, method, ladder)
    u, stats = _integrate(_u_rhs(model), u0, t0, times, rtol, atol, method)
    u = _enforce_nonnegative(u, rtol, atol)
    return CumulantTrajectory(times, u, lam, solver_stats=stats)


def solve_v(model: ModelParams, lam, v0, times, *, rtol: float = RTOL,
            atol: float = ATOL, method: str = METHOD) -> CumulantTrajectory:
    """Joint solution of the cumulant and its linearization ``v`` started at ``v0``.

    ``lambda`` must be finite; ``v0`` may have any sign (``grad_u`` relies on it).
    """
    lam = LambdaSpec.of(lam)
    _check_lambda(model, lam)
    if not lam.is_finite:
        raise InfiniteLambdaAtZero("solve_v requires a finite lambda")
    times = _grid(times)
    v0 = np.asarray(v0, dtype=float).reshape(model.k)
    y0 = np.concatenate([lam.values, v0])
    y, stats = _integrate(_uv_rhs(model), y0, 0.0, times, rtol, atol, method)
    k = model.k
    u = _enforce_nonnegative(y[:, :k], rtol, atol)
    return CumulantTrajectory(times, u, lam, v=y[:, k:], initial_v=v0, solver_stats=stats)


def grad_u(model: ModelParams, lam, direction, times, **kw) -> CumulantTrajectory:
    """Directional derivative of ``lambda -> u_t^lambda``; stored in ``.v``."""
    return solve_v(model, lam, direction, times, **kw)


def _richardson(Ls, values):
    # u_L = u_inf - a/L + O(1/L^2): eliminate the 1/L term with two rungs
    (L1, u1), (L2, u2) = (Ls[-2], values[-2]), (Ls[-1], values[-1])
    return (L2 * u2 - L1 * u1) / (L2 - L1)


def u_at_infinite_lambda(model: ModelParams, t: float, mask, finite_part=None, *,
                         ladder=LADDER, tol: float = 1e-6, rtol: float = RTOL,
                         atol: float = ATOL, method: str = METHOD,
                         spec: SpectralData | None = None,
                         close_mask: bool = True) -> np.ndarray:
    """Monotone limit of ``u_t`` as the masked coordinates of ``lambda`` go to infinity.

    Each rung ``L`` of ``ladder`` solves from ``finite_part + L*mask``; the last
    two Richardson estimates (elimination of the ``1/L`` term) must agree to
    ``tol`` relative, otherwise :class:`NotStabilized` is raised.

    A type that mutates (directly or through other types) into an infinite type
    receives a forcing of order ``1/t`` near ``t = 0``.  The only nonnegative
    solution on ``(0, inf)`` then blows up like ``2/(c t)`` in that coordinate
    too, so the limit does not depend on its finite entry.  Such coordinates
    are added to the mask (``close_mask=True``): along the raw ladder they
    converge only logarithmically in ``L``.  For an
    all-infinite ``lambda`` on an irreducible model the result is also checked
    against the a priori bracket ``[2f(t)/(c max xi), 2f(t)/(c min xi)] * xi``.
    """
    if not t > 0:
        raise InfiniteLambdaAtZero("the infinite-lambda cumulant only exists for t > 0")
    k = model.k
    mask = np.asarray(mask, dtype=bool).reshape(k)
    base = np.zeros(k) if finite_part is None else np.asarray(finite_part, float).reshape(k)
    if len(ladder) < 3:
        raise ValueError("ladder needs at least three rungs")
    if close_mask:
        mask = upstream_closure(model.D, mask)
    rhs = _u_rhs(model)
    values = []
    for L in ladder:
        lam0 = base + L * mask
        u, _ = _integrate(rhs, lam0, 0.0, np.array([t]), rtol, atol, method)
        values.append(_enforce_nonnegative(u[0], rtol, atol))
    est_prev = _richardson(ladder[:-1], values[:-1])
    est = _richardson(ladder, values)
    scale = np.maximum(np.abs(est), 1e-300)
    if np.any(np.abs(est - est_prev) > tol * scale + 1e-300):
        raise NotStabilized(
            f"ladder did not stabilize at t={t}: {est_prev} vs {est}")
    est = np.maximum(est, values[-1])  # the limit is a supremum over the ladder
    if mask.all():
        _check_infinite_bracket(model, t, est, spec)
    return est


def upstream_closure(D, mask) -> np.ndarray:
    """Types ``i`` with a mutation path ``i -> ... -> j`` to some masked ``j`` (plus the mask)."""
    D = np.asarray(D, dtype=float)
    k = D.shape[0]
    adj = (D > 0) & ~np.eye(k, dtype=bool)
    out = np.asarray(mask, dtype=bool).reshape(k).copy()
    for _ in range(k):
        grown = out | (adj & out[None, :]).any(axis=1)
        if np.array_equal(grown, out):
            break
        out = grown
    return out


def _f_bound(mu: float, t: float) -> float:
    if mu == 0:
        return 1.0 / t
    return abs(mu) * math.exp(mu * t) / (-math.expm1(mu * t))


def _check_infinite_bracket(model, t, u, spec):
    spec = spec or _maybe_perron(model)
    if spec is None or not spec.irreducible:
        return
    f = _f_bound(spec.mu, t)
    lo = 2 * f / (model.c * spec.xi.max()) * spec.xi
    hi = 2 * f / (model.c * spec.xi.min()) * spec.xi
    slack = 1e-7
    if np.any(u < lo * (1 - slack)) or np.any(u > hi * (1 + slack)):
        raise NotStabilized(f"u_t^inf={u} outside the a priori bracket [{lo}, {hi}]")


def _maybe_perron(model):
    try:
        return perron(model)
    except Exception:
        return None


def _horizon_limit(step, y0, T0, tol, max_doublings, what):
    """Integrate ``step(y, t_from, t_to)`` over doubling horizons until ``y`` settles."""
    y = step(y0, 0.0, T0)
    T = T0
    for _ in range(max_doublings):
        y_next = step(y, T, 2 * T)
        T *= 2
        scale = max(float(np.max(np.abs(y_next))), 1e-300)
        if np.max(np.abs(y_next - y)) <= tol * scale:
            return y_next, T
        y = y_next
    raise NotStabilized(f"{what} did not stabilize by horizon {T}")


def tilde_u_infinity(model: ModelParams, lam, *, spec: SpectralData | None = None,
                     tol: float = 1e-8, max_doublings: int = 6, rtol: float = RTOL,
                     method: str = METHOD, collinearity_tol: float = 1e-6,
                     return_horizon: bool = False):
    """``lim_{t->inf} exp(-mu t) u_t^lambda`` for a subcritical model.

    Integrates ``w = exp(-mu t) u`` directly, ``dw/dt = (D - mu) w - (c/2) exp(mu t) w*w``,
    over horizons ``T0 = 10/|mu|, 2 T0, ...`` until the relative change is below
    ``tol``.  For irreducible ``D`` the limit must be collinear to ``xi``.
    """
    spec = spec or perron(model)
    if spec.mu == 0 or model.is_critical:
        raise CriticalModel("the rescaled limit is degenerate for a critical model")
    lam = LambdaSpec.of(lam)
    _check_lambda(model, lam)
    if not lam.is_finite:
        raise ValueError("tilde_u_infinity needs a finite lambda")
    if not np.any(lam.values > 0):
        out = np.zeros(model.k)
        return (out, 0.0) if return_horizon else out
    mu, c = spec.mu, model.c
    A = model.D - mu * np.eye(model.k)

    def rhs(t, w):
        return A @ w - 0.5 * c * math.exp(mu * t) * w * w

    def step(w, t_from, t_to):
        return advance(rhs, w, t_from, t_to, rtol=rtol, method=method)

    w, T = _horizon_limit(step, lam.values.copy(), 10.0 / abs(mu), tol, max_doublings,
                          "exp(-mu t) u_t")
    if spec.irreducible and model.k > 1:
        _assert_collinear(w, spec.xi, collinearity_tol)
    return (w, T) if return_horizon else w


def tilde_v_infinity(model: ModelParams, lam, v0=None, rate: float | None = None, *,
                     spec: SpectralData | None = None, tol: float = 1e-8,
                     max_doublings: int = 6, rtol: float = RTOL, method: str = METHOD,
                     T0: float | None = None, return_horizon: bool = False):
    """``lim_{t->inf} exp(-rate t) v_t^lambda`` with ``v_0 = v0`` (defaults ``xi``, ``mu``).

    Same doubling certificate as :func:`tilde_u_infinity`, judged on ``v`` only.
    """
    spec = spec or perron(model)
    lam = LambdaSpec.of(lam)
    _check_lambda(model, lam)
    k, c = model.k, model.c
    v0 = spec.xi if v0 is None else np.asarray(v0, dtype=float).reshape(k)
    rate = spec.mu if rate is None else float(rate)
    mu = spec.mu
    Au = model.D - mu * np.eye(k)
    Av = model.D - rate * np.eye(k)

    def rhs(t, y):
        w, vt = y[:k], y[k:]
        u = math.exp(mu * t) * w
        return np.concatenate([Au @ w - 0.5 * c * u * w, Av @ vt - c * u * vt])

    def step(y, t_from, t_to):
        return advance(rhs, y, t_from, t_to, rtol=rtol, method=method)

    if T0 is None:
        T0 = 10.0 / abs(rate) if rate != 0 else 10.0
    # convergence is judged on the v block only
    y = step(np.concatenate([lam.values, v0]), 0.0, T0)
    T = T0
    for _ in range(max_doublings):
        y_next = step(y, T, 2 * T)
        T *= 2
        v_old, v_new = y[k:], y_next[k:]
        scale = max(float(np.max(np.abs(v_new))), 1e-300)
        if np.max(np.abs(v_new - v_old)) <= tol * scale:
            return (v_new, T) if return_horizon else v_new
        y = y_next
    raise NotStabilized(f"exp(-rate t) v_t did not stabilize by horizon {T}")


def _assert_collinear(w, xi, tol):
    nw = np.linalg.norm(w)
    if nw == 0:
        return
    d = np.linalg.norm(w / nw - xi / np.linalg.norm(xi))
    if d > tol:
        raise NotStabilized(f"limit is not collinear to xi (distance {d:.3g})")


def bracket_bounds(model: ModelParams, lam, times, *, spec: SpectralData | None = None,
                   rel_slack: float = 1e-7, **solver_kw) -> BracketReport:
    """Compare ``u_t`` with the a priori bounds built from ``xi``.

    Upper: ``C_t xi`` with ``C_t`` the Riccati majorant of ``max_i u_i/xi_i``
    (capped by its ``lambda``-uniform value).  Lower: ``B_t xi`` with the
    minorant of ``min_i u_i/xi_i``.  Linear bounds: ``u_t <= exp(Dt) lambda``
    and ``u_t >= (1 + ...)^(-max xi/min xi) exp(Dt) lambda``.
    """
    spec = spec or perron(model)
    if not spec.irreducible:
        raise ReducibleModel("the bracket needs an irreducible mutation matrix")
    lam = LambdaSpec.of(lam)
    times = _grid(times)
    traj = solve_u(model, lam, times, **solver_kw)
    u = traj.u
    xi, c, mu = spec.xi, model.c, spec.mu
    lo_xi, hi_xi = xi.min(), xi.max()
    C0 = float(np.max(lam.values / xi))
    B0 = float(np.min(lam.values / xi))

    n = times.size
    C = np.empty(n)
    B = np.empty(n)
    damp = np.empty(n)
    for j, t in enumerate(times):
        if mu == 0:
            growth, horizon = 1.0, t
        else:
            growth, horizon = math.exp(mu * t), -math.expm1(mu * t) / abs(mu)
        C[j] = C0 * growth / (1 + 0.5 * c * lo_xi * C0 * horizon)
        if t > 0:
            C[j] = min(C[j], 2 * _f_bound(mu, t) / (c * lo_xi))
        B[j] = B0 * growth / (1 + 0.5 * c * hi_xi * B0 * horizon)
        damp[j] = (1 + 0.5 * c * lo_xi * C0 * horizon) ** (-hi_xi / lo_xi)

    lin = np.array([matrix_exp(model.D, t) @ lam.values for t in times])
    upper = C[:, None] * xi
    lower = B[:, None] * xi
    lin_lower = damp[:, None] * lin
    slack = rel_slack * np.maximum(np.abs(u), 1e-300) + 1e-300
    ok = ((u <= upper + slack) & (u >= lower - slack)
          & (u <= lin + slack) & (u >= lin_lower - slack))
    return BracketReport(times, u, lower, upper, lin_lower, lin, ok.all(axis=1))


from .closed_form import closed_form_u, closed_form_v, z_constant  # noqa: E402,F401
