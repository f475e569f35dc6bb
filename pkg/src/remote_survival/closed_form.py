"""Explicit cumulants for the monotype and the two-type decomposable models.

Model families and their parameters:

``monotype``
    ``D = (mu)``, keys ``mu <= 0`` and ``c``.
``CP-D``
    ``D = [[-alpha, alpha], [0, 0]]``, keys ``alpha`` and ``c``.
``CP-D+``
    ``D = [[-alpha, alpha], [0, -beta]]``, keys ``alpha``, ``beta`` and ``c``.

For the decomposable families the first coordinate of ``u`` is explicit only
when ``lambda_2 = 0``; other requests raise :class:`NoClosedForm` and the
caller falls back to :func:`remote_survival.cumulant.solve_u`.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NoClosedForm, NotStabilized

MODEL_IDS = ("monotype", "CP-D", "CP-D+")


def _params(model_id: str, params: dict) -> tuple[float, float, float]:
    """Return ``(rate_1, rate_2, c)``: death rates of type 1 and type 2."""
    try:
        c = float(params["c"])
        if model_id == "monotype":
            mu = float(params["mu"])
            if mu > 0:
                raise ValueError("mu must be <= 0")
            return -mu, math.nan, c
        alpha = float(params["alpha"])
        if model_id == "CP-D":
            beta = 0.0
        elif model_id == "CP-D+":
            beta = float(params["beta"])
        else:
            raise NoClosedForm(f"unknown model id {model_id!r}; expected one of {MODEL_IDS}")
    except KeyError as exc:
        raise ValueError(f"missing parameter {exc.args[0]!r} for {model_id}") from None
    if not alpha > 0 or beta < 0 or not c > 0:
        raise ValueError("need alpha > 0, beta >= 0 and c > 0")
    return alpha, beta, c


def model_matrix(model_id: str, params: dict) -> np.ndarray:
    """Mutation matrix of a closed-form family."""
    r1, r2, _ = _params(model_id, params)
    if model_id == "monotype":
        return np.array([[-r1]]) + 0.0
    return np.array([[-r1, r1], [0.0, -r2]]) + 0.0


def _horizon(rate: float, t):
    """``(1 - exp(-rate t)) / rate``, equal to ``t`` when ``rate = 0``."""
    t = np.asarray(t, dtype=float)
    if rate == 0:
        return t
    return -np.expm1(-rate * t) / rate


def _mono_u(rate, c, lam, t):
    """Solution of ``u' = -rate u - (c/2) u^2``, ``u_0 = lam`` (``lam = inf`` allowed for t > 0)."""
    t = np.asarray(t, dtype=float)
    H = _horizon(rate, t)
    decay = np.exp(-rate * t)
    if math.isinf(lam):
        if np.any(t <= 0):
            raise NoClosedForm("the infinite-lambda cumulant is only defined for t > 0")
        return decay / (0.5 * c * H)
    return lam * decay / (1 + 0.5 * c * lam * H)


def _mono_g(rate, c, lam, t):
    return 1 + 0.5 * c * lam * _horizon(rate, t)


def _exp_integral(r, t):
    """``int_0^t exp(r s) ds``."""
    if r == 0:
        return np.asarray(t, dtype=float)
    return np.expm1(r * np.asarray(t, dtype=float)) / r


def _lambda(lam, k):
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if lam.size != k:
        raise ValueError(f"lambda must have {k} entries")
    if np.any(np.isnan(lam)) or np.any(lam < 0):
        raise ValueError("lambda entries must be >= 0")
    return lam


def closed_form_u(model_id: str, params: dict, lam, t, component: int | None = None):
    """Explicit ``u_t^lambda``.

    Parameters
    ----------
    model_id : {"monotype", "CP-D", "CP-D+"}
    params : dict
        ``mu, c`` or ``alpha[, beta], c``.
    lam : array_like
        Laplace argument; infinite entries are allowed for ``t > 0`` where the
        formula has a limit.
    t : float or array_like
        Time(s); the output gains a leading axis for an array.
    component : int, optional
        ``2`` returns only the second coordinate, which is explicit for every
        ``lambda``.  By default the full vector is returned.

    Raises
    ------
    NoClosedForm
        First coordinate of a decomposable model with ``lambda_2 != 0``.
    """
    r1, r2, c = _params(model_id, params)
    scalar_t = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    if model_id == "monotype":
        (l1,) = _lambda(lam, 1)
        out = _mono_u(r1, c, l1, t)[:, None]
        return out[0] if scalar_t else out
    l1, l2 = _lambda(lam, 2)
    u2 = _mono_u(r2, c, l2, t)
    if component == 2:
        return float(u2[0]) if scalar_t else u2
    if component not in (None, 1):
        raise ValueError("component must be 1, 2 or None")
    if l2 != 0:
        raise NoClosedForm("the first coordinate is explicit only when lambda_2 = 0")
    u1 = _mono_u(r1, c, l1, t)
    if component == 1:
        return float(u1[0]) if scalar_t else u1
    out = np.stack([u1, u2], axis=-1)
    return out[0] if scalar_t else out


def v0_vector(model_id, params, v0_id):
    r1, r2, _ = _params(model_id, params)
    if model_id == "monotype":
        if v0_id not in ("xi", "e1"):
            raise NoClosedForm("monotype models only have v0 = xi = e1")
        return np.ones(1)
    if v0_id == "e1":
        return np.array([1.0, 0.0])
    if v0_id == "e2":
        return np.array([0.0, 1.0])
    if v0_id != "xi":
        raise ValueError(f"unknown v0 id {v0_id!r}")
    alpha, beta = r1, r2
    if beta < alpha:
        # beta = 0 gives the CP-D vector (1/2, 1/2)
        return np.array([alpha, alpha - beta]) / (2 * alpha - beta)
    if alpha < beta:
        return np.array([1.0, 0.0])
    raise NoClosedForm("alpha = beta: the Perron eigenvalue is not simple")


def closed_form_v(model_id: str, params: dict, lam, v0_id: str, t):
    """Explicit solution of ``v' = D v - c u*v`` started at ``xi``, ``e1`` or ``e2``.

    Type 2 always has ``v_2 = v_{0,2} exp(-beta t) / g_2^2`` with
    ``g_2 = 1 + (c/2) lambda_2 (1 - exp(-beta t)) / beta``.  Type 1 needs
    ``exp(c int_0^s u_1) = g_1(s)^2``, known when ``lambda_2 = 0``; then

    ``v_1 = exp(-alpha t) g_1^-2 (v_{0,1} + alpha v_{0,2} int_0^t exp((alpha - beta) s) g_1(s)^2 ds)``

    where the last integral is evaluated exactly as a sum of exponentials.
    With ``lambda_2 != 0`` the first coordinate has no closed form and
    :class:`NoClosedForm` is raised.
    """
    r1, r2, c = _params(model_id, params)
    h0 = v0_vector(model_id, params, v0_id)
    scalar_t = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 0):
        raise ValueError("t must be nonnegative")
    if model_id == "monotype":
        (l1,) = _lambda(lam, 1)
        if math.isinf(l1):
            raise NoClosedForm("v needs a finite lambda")
        out = (np.exp(-r1 * t) / _mono_g(r1, c, l1, t) ** 2)[:, None]
        return out[0] if scalar_t else out
    l1, l2 = _lambda(lam, 2)
    if math.isinf(l1) or math.isinf(l2):
        raise NoClosedForm("v needs a finite lambda")
    alpha, beta = r1, r2
    h2 = h0[1] * np.exp(-beta * t) / _mono_g(beta, c, l2, t) ** 2
    if l2 != 0:
        raise NoClosedForm("the first coordinate is explicit only when lambda_2 = 0")
    # g_1(s) = b - a exp(-alpha s), expand g_1^2 and integrate term by term
    a = c * l1 / (2 * alpha)
    b = 1 + a
    kappa = alpha - beta
    integral = (b * b * _exp_integral(kappa, t)
                - 2 * a * b * _exp_integral(kappa - alpha, t)
                + a * a * _exp_integral(kappa - 2 * alpha, t))
    g1 = _mono_g(alpha, c, l1, t)
    h1 = np.exp(-alpha * t) / g1**2 * (h0[0] + alpha * h0[1] * integral)
    out = np.stack([h1, h2], axis=-1)
    return out[0] if scalar_t else out


def _z_forcing(alpha, beta, c, lam2):
    """Forcing term of ``z' = -(c/2) exp(-alpha t) z^2 + F(t)`` for ``z = exp(alpha t) y``."""
    if math.isinf(lam2):
        k = alpha * 2 * beta / c

        def F(t):
            return k * math.exp(-(beta - alpha) * t) / -math.expm1(-beta * t)
    else:
        def F(t):
            return (alpha * lam2 * math.exp(-(beta - alpha) * t)
                    / (1 + 0.5 * c * lam2 * -math.expm1(-beta * t) / beta))
    return F


def z_constant(params: dict, lambda2: float, lambda1: float = 0.0, *, tol: float = 1e-8,
               max_doublings: int = 8, rtol: float = 1e-11, t_start: float = 1.0,
               return_details: bool = False):
    """``C(lambda_2, y) = lim_t exp(alpha t) y_t`` for the type-1 cumulant of CP-D+.

    ``y`` is the first coordinate of ``u^(lambda_1; lambda_2)``.  For finite
    ``lambda_2`` the integration starts at ``t = 0`` from ``z_0 = lambda_1``.
    For ``lambda_2 = inf`` the solution is the monotone limit, only defined for
    ``t > 0``: it is initialised at ``t_start`` from the infinite-lambda ladder.

    For ``alpha = beta`` the function returns the rate ``C`` of the linear
    growth ``exp(alpha t) y_t ~ C t`` instead, read off ``dz/dt`` at the
    stabilization horizon.

    Raises
    ------
    NotStabilized
        If ``z`` (or its slope for ``alpha = beta``) does not settle to ``tol``
        relative after ``max_doublings`` horizon doublings.
    """
    alpha = float(params["alpha"])
    beta = float(params["beta"])
    c = float(params["c"])
    lambda2 = float(lambda2)
    if not (alpha > 0 and beta > 0 and c > 0):
        raise ValueError("need alpha, beta, c > 0")
    if beta < alpha:
        raise ValueError("z_constant requires alpha <= beta")
    if lambda2 < 0 or lambda1 < 0 or math.isinf(lambda1):
        raise ValueError("need lambda_2 in [0, inf] and finite lambda_1 >= 0")
    F = _z_forcing(alpha, beta, c, lambda2)

    def rhs(t, z):
        return [-0.5 * c * math.exp(-alpha * t) * z[0] ** 2 + F(t)]

    if math.isinf(lambda2):
        from .cumulant import u_at_infinite_lambda
        from .spectral import validate_model
        model = validate_model([[-alpha, alpha], [0.0, -beta]], c)
        y0 = u_at_infinite_lambda(model, t_start, [False, True], [lambda1, 0.0])[0]
        t0, z0 = t_start, math.exp(alpha * t_start) * y0
    else:
        t0, z0 = 0.0, lambda1

    from .cumulant import advance as _advance

    def advance(z, a, b):
        return float(_advance(rhs, [z], a, b, rtol=rtol)[0])

    critical = alpha == beta
    scale_rate = alpha if critical else min(alpha, beta - alpha)
    T = t0 + 10.0 / scale_rate
    z = advance(z0, t0, T)
    prev = rhs(T, [z])[0] if critical else z
    history = [(T, prev)]
    for _ in range(max_doublings):
        T_next = 2 * T
        z = advance(z, T, T_next)
        T = T_next
        cur = rhs(T, [z])[0] if critical else z
        history.append((T, cur))
        if abs(cur - prev) <= tol * max(abs(cur), 1e-300):
            if not cur > 0:
                raise NotStabilized(f"limit is not positive ({cur})")
            if return_details:
                return cur, {"horizon": T, "history": history, "mode": "slope" if critical else "limit"}
            return cur
        prev = cur
    raise NotStabilized(f"exp(alpha t) y_t did not stabilize by t={T}")
