"""Linear algebra for Metzler mutation matrices.

Validation of the model, Perron data (root, right/left eigenvectors, rank-one
projector, spectral gap), a sign-preserving matrix exponential and the
long-time rank-one asymptote ``exp(Dt) ~ exp(mu t) P``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import DegeneratePerron, NonPositiveVariance, NotMetzler, Supercritical

EIG_TOL = 1e-10
EXP_TOL = 1e-12


@dataclass(frozen=True)
class ModelParams:
    """Mutation matrix ``D`` (1/time), branching variance ``c`` and number of types."""

    D: np.ndarray
    c: float
    mu: float = field(default=0.0, compare=False)
    criticality: str = field(default="critical", compare=False)

    @property
    def k(self) -> int:
        return self.D.shape[0]

    @property
    def is_critical(self) -> bool:
        return self.criticality == "critical"

    def to_dict(self) -> dict:
        return {"D": self.D.tolist(), "c": self.c, "k": self.k,
                "mu": self.mu, "criticality": self.criticality}


@dataclass(frozen=True)
class SpectralData:
    mu: float
    xi: np.ndarray
    eta: np.ndarray
    P: np.ndarray | None
    gamma: float
    irreducible: bool

    def to_dict(self) -> dict:
        return {
            "mu": self.mu,
            "xi": self.xi.tolist(),
            "eta": self.eta.tolist(),
            "P": None if self.P is None else self.P.tolist(),
            "gamma": self.gamma if math.isfinite(self.gamma) else None,
            "irreducible": self.irreducible,
        }


def _as_square(D) -> np.ndarray:
    D = np.array(D, dtype=float)
    if D.ndim == 0:
        D = D.reshape(1, 1)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError(f"mutation matrix must be square, got shape {D.shape}")
    if not np.all(np.isfinite(D)):
        raise ValueError("mutation matrix has non-finite entries")
    return D


def _perron_root(D: np.ndarray) -> float:
    return float(np.max(np.linalg.eigvals(D).real))


def validate_model(D, c, eig_tol: float = EIG_TOL) -> ModelParams:
    """Check the Metzler condition, ``c > 0`` and ``mu <= 0``.

    A Perron root within ``eig_tol * max(1, ||D||)`` of zero is snapped to 0
    and the model is labelled critical.
    """
    D = _as_square(D)
    off = D[~np.eye(D.shape[0], dtype=bool)]
    if np.any(off < 0):
        raise NotMetzler("off-diagonal entries of D must be nonnegative")
    c = float(c)
    if not c > 0:
        raise NonPositiveVariance(f"branching variance must be positive, got {c}")
    mu = _perron_root(D)
    scale = eig_tol * max(1.0, float(np.linalg.norm(D, ord=np.inf)))
    if mu > scale:
        raise Supercritical(f"Perron root {mu:.6g} > 0")
    if abs(mu) <= scale:
        return ModelParams(D, c, 0.0, "critical")
    return ModelParams(D, c, mu, "subcritical")


def is_irreducible(D) -> bool:
    """Strong connectivity of the graph ``i -> j`` iff ``d_ij > 0`` (``i != j``)."""
    D = _as_square(D)
    k = D.shape[0]
    if k == 1:
        return True
    adj = (D > 0) & ~np.eye(k, dtype=bool)
    n_comp, _ = connected_components(adj.astype(np.int8), directed=True,
                                     connection="strong")
    return n_comp == 1


def _null_vector(A: np.ndarray) -> np.ndarray:
    _, s, vh = np.linalg.svd(A)
    return vh[-1]


def _fix_sign(v: np.ndarray) -> np.ndarray:
    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    return v


def _clean_nonnegative(v: np.ndarray, tol: float, name: str) -> np.ndarray:
    # Perron vectors of Metzler matrices are >= 0; remove round-off below tol
    if np.any(v < -tol):
        raise DegeneratePerron(f"{name} has a negative component {v.min():.3g}")
    return np.where(v < 0, 0.0, v)


def perron(model: ModelParams, eig_tol: float = EIG_TOL) -> SpectralData:
    """Perron root, normalized eigenvectors ``(xi,1)=1``, ``(xi,eta)=1`` and gap.

    Raises
    ------
    DegeneratePerron
        If the eigenvalue with maximal real part is not real, not simple, or its
        left and right eigenvectors are orthogonal (defective case).
    """
    D = model.D
    k = model.k
    norm = max(1.0, float(np.linalg.norm(D, ord=np.inf)))
    if k == 1:
        one = np.ones(1)
        return SpectralData(model.mu, one, one.copy(), np.ones((1, 1)),
                            math.inf, True)

    vals = np.linalg.eigvals(D)
    order = np.argsort(-vals.real)
    lead = vals[order[0]]
    if abs(lead.imag) > eig_tol * norm:
        raise DegeneratePerron("eigenvalue with maximal real part is not real")
    gap = float(lead.real - vals[order[1]].real)
    if gap < eig_tol * norm:
        raise DegeneratePerron(f"Perron eigenvalue is not simple (gap {gap:.3g})")

    mu = float(lead.real)
    M = D - mu * np.eye(k)
    xi = _fix_sign(_null_vector(M))
    eta = _fix_sign(_null_vector(M.T))
    tol = 1e3 * np.finfo(float).eps
    xi = _clean_nonnegative(xi / np.max(np.abs(xi)), tol, "xi")
    eta = _clean_nonnegative(eta / np.max(np.abs(eta)), tol, "eta")
    xi = xi / xi.sum() + 0.0
    overlap = float(xi @ eta)
    if overlap < eig_tol:
        raise DegeneratePerron("left and right Perron vectors are orthogonal")
    eta = eta / overlap + 0.0
    # Rayleigh quotient removes the O(eps) error of the eigenvalue routine
    mu = float(eta @ D @ xi)
    if model.is_critical:
        mu = 0.0
    irreducible = is_irreducible(D)
    if irreducible and (xi.min() <= 0 or eta.min() <= 0):
        raise DegeneratePerron("irreducible matrix with a non-positive Perron vector")
    return SpectralData(mu, xi, eta, np.outer(xi, eta), gap, irreducible)


def _exp_nonneg_taylor(A: np.ndarray) -> np.ndarray:
    # every term of the series is entrywise >= 0, so there is no cancellation
    k = A.shape[0]
    term = np.eye(k)
    total = np.eye(k)
    for n in range(1, 60):
        term = term @ A / n
        total = total + term
        if np.all(term <= np.finfo(float).eps * 0.5 * total):
            break
    return total


def matrix_exp(D, t: float) -> np.ndarray:
    """``exp(D t)`` for a Metzler matrix and ``t >= 0``; entrywise nonnegative.

    Scaling and squaring around a shifted Taylor series: ``D h + s h I`` is
    entrywise nonnegative for ``s = max(-diag D)``, so the truncated series and
    the repeated squaring never subtract, which gives entrywise relative
    accuracy and exact nonnegativity.
    """
    D = _as_square(D)
    if t < 0:
        raise ValueError("t must be nonnegative")
    k = D.shape[0]
    if t == 0:
        return np.eye(k)
    s = max(0.0, float(np.max(-np.diag(D))))
    A = (D + s * np.eye(k)) * t
    norm = float(np.max(np.abs(A).sum(axis=1))) + s * t
    squarings = max(0, int(math.ceil(math.log2(norm / 0.25)))) if norm > 0.25 else 0
    h = 1.0 / 2**squarings
    E = _exp_nonneg_taylor(A * h) * math.exp(-s * t * h)
    for _ in range(squarings):
        E = E @ E
    return E


def matrix_exp_eig(D, t: float) -> np.ndarray:
    """Eigendecomposition route; only accurate for well-conditioned ``D``.

    Kept as an independent cross-check of :func:`matrix_exp`.
    """
    D = _as_square(D)
    w, V = np.linalg.eig(D)
    out = (V * np.exp(w * t)) @ np.linalg.inv(V)
    return out.real


def rank_one_asymptote(spec: SpectralData, t: float) -> np.ndarray:
    """``exp(mu t) P``, the leading term of ``exp(D t)`` for large ``t``."""
    if spec.P is None:
        raise DegeneratePerron("rank-one projector is not available")
    return math.exp(spec.mu * t) * spec.P


def rank_one_burn_in(spec: SpectralData, factor: float = 10.0) -> float:
    """Time after which ``||exp(Dt) - exp(mu t)P|| <= C exp((mu - gamma/2) t)`` is checked."""
    if not math.isfinite(spec.gamma):
        return 0.0
    return factor / spec.gamma
