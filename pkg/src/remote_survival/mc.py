"""Monte Carlo simulation of the multitype Feller diffusion and its conditioned laws.

Unconditioned paths
    One type: the exact transition between recording times.  Given ``x``, the
    mass after a time ``h`` is a Poisson(``x exp(mu h)/b``) number of
    independent exponentials of mean ``b = (c/2)(1 - exp(mu h))/|mu|``
    (``b = c h/2`` when ``mu = 0``).
    Several types: Strang splitting with step ``dt``: half a step of the mean
    flow ``x <- exp(D^T dt/2) x``, the exact critical branching step per type,
    and another half step of the flow.

Conditioned paths (remote survival)
    Direct sampling through the spine decomposition of the h-transform with
    density ``exp(-rate t)(x_t, v0)/(x_0, v0)``, ``D v0 = rate v0``: a spine type
    ``J`` starts with probability proportional to ``x0_i v0_i``, jumps from ``i``
    to ``j`` at rate ``d_ij v0_j / v0_i`` and the spine type receives an
    immigration of rate ``c``.  In the branching step this adds 2 to the shape
    of the Gamma variable of the spine type.  The h-transform reweighting of
    unconditioned paths is available as well (``method="h_transform"``).

Random numbers come from a Philox generator per block of ``BLOCK`` paths,
keyed by ``(seed, block index)``, so the output does not depend on the number
of threads.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidStep, TooFewSurvivors, ZeroDenominator
from .laws import ConditioningSpec, conditioning_density
from .spectral import ModelParams, SpectralData, matrix_exp

BLOCK = 8192
_trapezoid = getattr(np, "trapezoid", None) or np.trapz
MIN_SURVIVORS = 100


@dataclass(frozen=True)
class FellerPath:
    times: np.ndarray
    states: np.ndarray
    absorbed_at: float | None = None

    def at(self, t: float) -> np.ndarray:
        j = int(np.searchsorted(self.times, t))
        if j >= self.times.size or not math.isclose(self.times[j], t, rel_tol=0, abs_tol=1e-12):
            raise KeyError(f"time {t} was not recorded")
        return self.states[j]


@dataclass
class WeightedEnsemble:
    """Paths stored as one array ``states[path, time, type]`` with per-path weights."""

    times: np.ndarray
    states: np.ndarray
    weights: np.ndarray
    seed: int
    scheme: str
    model: ModelParams
    x0: np.ndarray
    dt: float | None = None
    absorbed_at: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.states.shape[0]

    @property
    def k(self) -> int:
        return self.states.shape[2]

    @property
    def paths(self) -> list[FellerPath]:
        ab = self.absorbed_at
        return [FellerPath(self.times, self.states[p],
                           None if ab is None or np.isnan(ab[p]) else float(ab[p]))
                for p in range(self.n_paths)]

    def time_index(self, t: float) -> int:
        j = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[j], t, rel_tol=1e-12, abs_tol=1e-12):
            raise KeyError(f"time {t} was not recorded")
        return j

    def at(self, t: float) -> np.ndarray:
        """States at time ``t``, shape ``(n_paths, k)``."""
        return self.states[:, self.time_index(t), :]

    def marginal(self, i: int, t: float | None = None) -> np.ndarray:
        """Mass of type ``i`` (1-based) at ``t`` (default: last recorded time)."""
        j = -1 if t is None else self.time_index(t)
        return self.states[:, j, i - 1]

    def reweighted(self, weights, scheme: str) -> "WeightedEnsemble":
        return WeightedEnsemble(self.times, self.states, np.asarray(weights, float), self.seed,
                                scheme, self.model, self.x0, self.dt, self.absorbed_at,
                                dict(self.info))

    def sidecar(self) -> dict:
        return {
            "format": "remote-survival ensemble",
            "dtype": "<f8",
            "n_paths": self.n_paths,
            "k": self.k,
            "times": [float(t) for t in self.times],
            "columns": ["weight"] + [f"x_{i + 1}@t{j}" for j in range(self.times.size)
                                     for i in range(self.k)],
            "model": self.model.to_dict(),
            "x0": self.x0.tolist(),
            "seed": int(self.seed),
            "scheme": self.scheme,
            "dt": self.dt,
            "info": self.info,
        }

    def save(self, prefix) -> tuple[Path, Path]:
        """Write ``prefix.bin`` (little-endian float64 columns) and ``prefix.json``."""
        prefix = Path(prefix)
        cols = np.empty((1 + self.times.size * self.k, self.n_paths), dtype="<f8")
        cols[0] = self.weights
        cols[1:] = self.states.reshape(self.n_paths, -1).T
        bin_path = prefix.with_suffix(".bin")
        json_path = prefix.with_suffix(".json")
        bin_path.write_bytes(cols.tobytes(order="C"))
        json_path.write_text(json.dumps(self.sidecar(), indent=2, sort_keys=True) + "\n")
        return bin_path, json_path

    def to_csv(self, path) -> None:
        """Long format ``path, weight, t, x_1..x_k`` (17 significant digits)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path", "weight", "t"] + [f"x_{i + 1}" for i in range(self.k)])
            for p in range(self.n_paths):
                for j, t in enumerate(self.times):
                    w.writerow([p, f"{self.weights[p]:.17g}", f"{t:.17g}"]
                               + [f"{x:.17g}" for x in self.states[p, j]])


def load_ensemble(prefix) -> WeightedEnsemble:
    """Read an ensemble written by :meth:`WeightedEnsemble.save`."""
    from .spectral import validate_model

    prefix = Path(prefix)
    meta = json.loads(prefix.with_suffix(".json").read_text())
    n, k = meta["n_paths"], meta["k"]
    times = np.array(meta["times"], dtype=float)
    cols = np.frombuffer(prefix.with_suffix(".bin").read_bytes(), dtype="<f8")
    cols = cols.reshape(1 + times.size * k, n)
    states = cols[1:].T.reshape(n, times.size, k).copy()
    model = validate_model(meta["model"]["D"], meta["model"]["c"])
    return WeightedEnsemble(times, states, cols[0].copy(), meta["seed"], meta["scheme"],
                            model, np.array(meta["x0"]), meta["dt"], info=meta.get("info", {}))


# ---------------------------------------------------------------- core stepping

def _rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def _branch(rng, x, h, c, extra_shape=None):
    """Exact step of length ``h`` of critical branching (variance ``c``), per coordinate."""
    b = 0.5 * c * h
    n = rng.poisson(x / b)
    shape = n.astype(float)
    if extra_shape is not None:
        shape += extra_shape
    return rng.gamma(shape, b)


def _mono_exact(rng, x, h, mu, c, immigration):
    if mu == 0:
        b = 0.5 * c * h
        mean_factor = 1.0
    else:
        b = 0.5 * c * -math.expm1(mu * h) / abs(mu)
        mean_factor = math.exp(mu * h)
    n = rng.poisson(x * mean_factor / b)
    shape = n.astype(float)
    if immigration:
        shape += 2.0
    return rng.gamma(shape, b)


@dataclass(frozen=True)
class _Spine:
    v0: np.ndarray
    Q: np.ndarray  # generator of the spine type on the support of v0


def _spine(model: ModelParams, v0, rate) -> _Spine:
    v0 = np.asarray(v0, dtype=float)
    k = model.k
    Q = np.zeros((k, k))
    sup = v0 > 0
    for i in np.flatnonzero(sup):
        for j in np.flatnonzero(sup):
            if i != j:
                Q[i, j] = model.D[i, j] * v0[j] / v0[i]
        Q[i, i] = -Q[i].sum()
    return _Spine(v0, Q)


def _simulate_block(rng, model, x0, times, dt, n, spine: _Spine | None, exact: bool):
    k = model.k
    x = np.tile(np.asarray(x0, dtype=float), (n, 1))
    out = np.empty((n, times.size, k))
    absorbed = np.full(n, np.nan)
    J = None
    if spine is not None:
        p0 = x0 * spine.v0
        J = rng.choice(k, size=n, p=p0 / p0.sum())
    t = 0.0
    cache = {}
    for j, tau in enumerate(times):
        delta = tau - t
        if delta > 0:
            if exact:
                x[:, 0] = _mono_exact(rng, x[:, 0], delta, model.mu, model.c, spine is not None)
                newly = np.isnan(absorbed) & (x[:, 0] == 0)
                absorbed[newly] = tau
            else:
                steps = max(1, int(math.ceil(delta / dt - 1e-9)))
                h = delta / steps
                if h not in cache:
                    half = matrix_exp(model.D, 0.5 * h)
                    jump = matrix_exp(spine.Q, h) if spine is not None else None
                    cache[h] = (half, None if jump is None else np.cumsum(jump, axis=1))
                half, jump_cdf = cache[h]
                for s in range(steps):
                    x = x @ half
                    extra = None
                    if spine is not None:
                        extra = np.zeros((n, k))
                        extra[np.arange(n), J] = 2.0
                    x = _branch(rng, x, h, model.c, extra) @ half
                    if spine is not None:
                        u = rng.random(n)
                        J = np.minimum((u[:, None] > jump_cdf[J]).sum(axis=1), k - 1)
                    newly = np.isnan(absorbed) & (x.sum(axis=1) == 0)
                    absorbed[newly] = t + (s + 1) * h
            t = tau
        out[:, j] = x
    return out, absorbed


def _run(model, x0, times, dt, n_paths, seed, spine, threads):
    exact = model.k == 1 and dt is None
    if not exact and (dt is None or not dt > 0):
        raise InvalidStep(f"time step must be positive, got {dt}")
    sizes = [min(BLOCK, n_paths - b * BLOCK) for b in range(-(-n_paths // BLOCK))]

    def job(b):
        return _simulate_block(_rng(seed, b), model, x0, times, dt, sizes[b], spine, exact)

    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(job, range(len(sizes))))
    else:
        parts = [job(b) for b in range(len(sizes))]
    states = np.concatenate([p[0] for p in parts])
    absorbed = np.concatenate([p[1] for p in parts])
    return states, absorbed, exact


def _check_inputs(model, x0, dt, n_paths):
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    if x0.size != model.k or np.any(x0 < 0) or np.any(~np.isfinite(x0)):
        raise ValueError("x0 must be a finite nonnegative vector with one entry per type")
    if dt is not None and not dt > 0:
        raise InvalidStep(f"time step must be positive, got {dt}")
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    return x0


def _record_times(t_end, times):
    if times is None:
        return np.array([0.0, float(t_end)]) if t_end > 0 else np.array([0.0])
    times = np.unique(np.concatenate([[0.0], np.asarray(times, dtype=float)]))
    return times


def simulate(model: ModelParams, x0, t_end: float, dt: float | None, n_paths: int,
             seed: int, *, times=None, threads: int = 1) -> WeightedEnsemble:
    """Unconditioned ensemble with unit weights, recorded at ``0`` and ``times`` (default ``t_end``).

    ``dt`` is the splitting step for several types.  For one type pass
    ``dt=None`` to use the exact transition, or a step to force splitting.
    """
    x0 = _check_inputs(model, x0, dt, n_paths)
    rec = _record_times(t_end, times)
    states, absorbed, exact = _run(model, x0, rec, dt, n_paths, seed, None, threads)
    return WeightedEnsemble(rec, states, np.ones(n_paths), seed, "unconditioned", model, x0,
                            None if exact else dt, absorbed,
                            {"method": "exact" if exact else "splitting"})


def hweight(path_or_states, t: float, v0, rate: float, x0=None) -> np.ndarray | float:
    """``exp(-rate t) (x_t, v0) / (x_0, v0)``.

    Accepts a :class:`FellerPath` (then ``x_0`` is its first state) or an array
    of states at time ``t`` together with ``x0``.
    """
    v0 = np.asarray(v0, dtype=float)
    if isinstance(path_or_states, FellerPath):
        x0 = path_or_states.states[0]
        xt = path_or_states.at(t)
    else:
        xt = np.asarray(path_or_states, dtype=float)
        if x0 is None:
            raise ValueError("x0 is required with raw states")
    den = float(np.asarray(x0, dtype=float) @ v0)
    if den == 0:
        raise ZeroDenominator("(x0, v0) = 0: the density is undefined")
    return math.exp(-rate * t) * (xt @ v0) / den


def h_transform_weights(ensemble: WeightedEnsemble, t: float, v0, rate: float) -> np.ndarray:
    return hweight(ensemble.at(t), t, v0, rate, ensemble.x0)


def sample_conditioned(model: ModelParams, x0, t: float, cond: ConditioningSpec,
                       n_paths: int, seed: int, *, dt: float | None = None, times=None,
                       method: str = "spine", spec: SpectralData | None = None,
                       threads: int = 1, min_survivors: int = MIN_SURVIVORS) -> WeightedEnsemble:
    """Ensemble of ``x`` on ``[0, t]`` under the conditioned law.

    ``theta = inf``: ``method="spine"`` samples the conditioned law directly
    (unit weights); ``method="h_transform"`` weights unconditioned paths by
    the density.  Finite ``theta``: paths are simulated up to ``t + theta`` and
    only those whose conditioned coordinates are alive at ``t + theta`` are
    kept (unit weights; ``info["acceptance_rate"]``).

    Raises
    ------
    UndefinedConditioning
        If the conditioning does not exist for ``x0``.
    TooFewSurvivors
        Fewer than ``min_survivors`` accepted paths in the rejection scheme.
    """
    x0 = _check_inputs(model, x0, dt, n_paths)
    rec = _record_times(t, times)
    if cond.remote:
        v0, rate = conditioning_density(model, x0, cond, spec)
        info = {"v0": v0.tolist(), "rate": rate, "conditioning": cond.to_dict()}
        if method == "spine":
            sp = _spine(model, v0, rate)
            states, absorbed, exact = _run(model, x0, rec, dt, n_paths, seed, sp, threads)
            return WeightedEnsemble(rec, states, np.ones(n_paths), seed, "spine", model, x0,
                                    None if exact else dt, absorbed, info)
        if method == "h_transform":
            ens = simulate(model, x0, t, dt, n_paths, seed, times=rec[1:], threads=threads)
            w = h_transform_weights(ens, t, v0, rate)
            out = ens.reweighted(w, "h_transform")
            out.info.update(info)
            return out
        raise ValueError(f"unknown method {method!r}")
    theta = cond.horizon
    mask = cond.mask(model.k)
    full = np.unique(np.concatenate([rec, [t + theta]]))
    ens = simulate(model, x0, t + theta, dt, n_paths, seed, times=full[1:], threads=threads)
    alive = (ens.states[:, -1, :][:, mask] > 0).any(axis=1)
    n_ok = int(alive.sum())
    if n_ok < min_survivors:
        raise TooFewSurvivors(f"{n_ok} accepted paths out of {n_paths} (need {min_survivors})")
    keep = np.isin(full, rec)
    states = ens.states[alive][:, keep, :]
    absorbed = ens.absorbed_at[alive] if ens.absorbed_at is not None else None
    info = {"acceptance_rate": n_ok / n_paths, "conditioning": cond.to_dict()}
    return WeightedEnsemble(rec, states, np.ones(n_ok), seed, f"rejection({theta:g})", model,
                            x0, ens.dt, absorbed, info)


def martingale_residual(model: ModelParams, spec: SpectralData | None, lam, ensemble: WeightedEnsemble,
                        t: float | None = None, v0=None) -> tuple[float, float]:
    """Weighted mean and standard error of the conditioned martingale at ``t``.

    ``M_t = F(x_t) - F(x_0) + int_0^t [(x,D lam) + c (x, lam*v0)/(x, v0) - (c/2)(x, lam^2)] F(x_s) ds``

    with ``F(x) = exp(-(x, lam))`` and ``v0 = xi`` by default; the integral is a
    trapezoid on the recorded grid.  Paths with zero weight contribute 0.
    """
    lam = np.asarray(lam, dtype=float)
    if v0 is None:
        v0 = ensemble.info.get("v0")
        v0 = np.asarray(v0 if v0 is not None else spec.xi, dtype=float)
    v0 = np.asarray(v0, dtype=float)
    j_end = ensemble.times.size - 1 if t is None else ensemble.time_index(t)
    ts = ensemble.times[: j_end + 1]
    X = ensemble.states[:, : j_end + 1, :]
    w = ensemble.weights
    if not np.any(lam):
        return 0.0, 0.0
    F = np.exp(-(X @ lam))
    xv = X @ v0
    with np.errstate(divide="ignore", invalid="ignore"):
        drift_in = np.where(xv > 0, (X @ (lam * v0)) / xv, 0.0)
    integrand = ((X @ (model.D @ lam)) + model.c * drift_in
                 - 0.5 * model.c * (X @ (lam * lam))) * F
    integral = _trapezoid(integrand, ts, axis=1)
    M = F[:, -1] - F[:, 0] + integral
    M = np.where(w > 0, M, 0.0)
    W = w.sum()
    est = float((w * M).sum() / W)
    # ratio-estimator standard error
    se = float(np.sqrt(np.sum((w * (M - est)) ** 2)) / W)
    return est, se
