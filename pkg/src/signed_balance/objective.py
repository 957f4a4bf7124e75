"""Negative log-likelihoods, gradients, projections and alignment-aware errors.

Objective values sum over unordered pairs ``i < j``. Gradients are taken of
the symmetric sum over all ``i != j``, which is exactly twice the ``i < j``
sum; the factor 2 matches the ``2 tau`` in the one-step update and is
absorbed into the step sizes of the fitters.

Every function accepts an optional ``observed`` 0/1 matrix that removes
pairs from both likelihood parts (used for cross-validation holdouts).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import orthogonal_procrustes

from .graph import SignedAdjacency
from .model import ExplicitPolar, LatentParams, LinearPolar, build_theta


def _entries(A) -> np.ndarray:
    if isinstance(A, SignedAdjacency):
        return A.entries.astype(float)
    return np.asarray(A, dtype=float)


def pair_weights(n: int, observed: np.ndarray | None = None) -> np.ndarray:
    """Off-diagonal 0/1 weight matrix, optionally intersected with ``observed``."""
    w = np.ones((n, n)) if observed is None else np.asarray(observed, dtype=float).copy()
    if w.shape != (n, n):
        raise ValueError(f"observed mask has shape {w.shape}, expected {(n, n)}")
    np.fill_diagonal(w, 0.0)
    return w


def logistic_terms(logits: np.ndarray, target: np.ndarray, weight: np.ndarray) -> tuple[float, np.ndarray]:
    """Weighted Bernoulli-logit loss over unordered pairs, and its residual.

    Returns ``(sum_{i<j} weight*(softplus(x) - target*x), weight*sigmoid(x) - weight*target)``.
    softplus and sigmoid share one ``exp(-|x|)`` so logits of any magnitude are safe.
    """
    e = np.exp(-np.abs(logits))
    softplus = np.maximum(logits, 0.0) + np.log1p(e)
    sig = np.where(logits >= 0, 1.0, e) / (1.0 + e)
    value = 0.5 * float(np.sum(weight * (softplus - target * logits)))
    return value, weight * (sig - target)


def _check_finite(*arrays):
    for x in arrays:
        if x is not None and not np.all(np.isfinite(x)):
            raise ValueError("parameters must be finite")


def _sign_target(a: np.ndarray) -> np.ndarray:
    return (1.0 + a) / 2.0


def nll_edges(A, alpha: np.ndarray, Z: np.ndarray, observed: np.ndarray | None = None) -> float:
    """Negative edge log-likelihood ``-sum_{i<j} |A_ij| Theta_ij + log(1 - sigma(Theta_ij))``."""
    a = _entries(A)
    _check_finite(alpha, Z)
    theta = build_theta(alpha, Z)
    value, _ = logistic_terms(theta, np.abs(a), pair_weights(a.shape[0], observed))
    return value


def _polar_vector(params) -> np.ndarray:
    if isinstance(params, LatentParams):
        v = params.v
        if v is None:
            raise ValueError("parameters carry no polar variable")
        return v
    if isinstance(params, ExplicitPolar):
        return params.v
    if isinstance(params, LinearPolar):
        raise ValueError("a bare LinearPolar needs Z; pass LatentParams instead")
    return np.asarray(params, dtype=float).reshape(-1)


def nll_signs(A, params, observed: np.ndarray | None = None) -> float:
    """Negative sign log-likelihood; only pairs with an edge contribute.

    ``params`` may be a ``LatentParams``, an ``ExplicitPolar`` or a bare ``v``.
    """
    a = _entries(A)
    v = _polar_vector(params)
    _check_finite(v)
    if v.size != a.shape[0]:
        raise ValueError(f"v has length {v.size}, network has {a.shape[0]} nodes")
    weight = pair_weights(a.shape[0], observed) * np.abs(a)
    value, _ = logistic_terms(np.outer(v, v), _sign_target(a), weight)
    return value


def _check_lambda(lam: float):
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")


def nll_weighted(A, alpha, Z, w, gamma, lam: float, observed: np.ndarray | None = None) -> float:
    """``(1 - lam) * nll_edges + lam * nll_signs`` with ``v = Z w + gamma``."""
    _check_lambda(lam)
    Z = np.atleast_2d(np.asarray(Z, dtype=float).T).T
    v = Z @ np.asarray(w, dtype=float).reshape(-1) + gamma
    return (1 - lam) * nll_edges(A, alpha, Z, observed) + lam * nll_signs(A, v, observed)


@dataclass(frozen=True)
class GradientBundle:
    g_alpha: np.ndarray | None = None
    g_Z: np.ndarray | None = None
    g_v: np.ndarray | None = None
    g_w: np.ndarray | None = None
    g_gamma: float | None = None

    def norm(self) -> float:
        parts = [np.ravel(g) for g in (self.g_alpha, self.g_Z, self.g_v, self.g_w) if g is not None]
        if self.g_gamma is not None:
            parts.append(np.array([self.g_gamma]))
        return float(np.linalg.norm(np.concatenate(parts))) if parts else 0.0


def grad_edges(A, alpha, Z, observed: np.ndarray | None = None) -> GradientBundle:
    """``g_alpha = 2 R 1`` and ``g_Z = 2 R Z`` with ``R = sigma(Theta) - |A|`` off the diagonal."""
    a = _entries(A)
    Z = np.atleast_2d(np.asarray(Z, dtype=float).T).T
    theta = build_theta(alpha, Z)
    _, R = logistic_terms(theta, np.abs(a), pair_weights(a.shape[0], observed))
    return GradientBundle(g_alpha=2 * R.sum(axis=1), g_Z=2 * R @ Z)


def sign_residual(a: np.ndarray, v: np.ndarray, weight: np.ndarray) -> tuple[float, np.ndarray]:
    """Sign-part value and ``S = |A| o sigma(eta) - B`` (weighted), with ``B = |A| o (A + 1) / 2``."""
    return logistic_terms(np.outer(v, v), _sign_target(a), weight * np.abs(a))


def grad_signs(A, v, observed: np.ndarray | None = None) -> GradientBundle:
    """``g_v = 2 S v``."""
    a = _entries(A)
    v = np.asarray(v, dtype=float).reshape(-1)
    if v.size != a.shape[0]:
        raise ValueError(f"v has length {v.size}, network has {a.shape[0]} nodes")
    _, S = sign_residual(a, v, pair_weights(a.shape[0], observed))
    return GradientBundle(g_v=2 * S @ v)


def grad_joint(A, alpha, Z, w, gamma, lam: float, observed: np.ndarray | None = None) -> GradientBundle:
    """Gradient of ``nll_weighted`` (full symmetric-sum convention) in all four blocks."""
    _check_lambda(lam)
    a = _entries(A)
    Z = np.atleast_2d(np.asarray(Z, dtype=float).T).T
    w = np.asarray(w, dtype=float).reshape(-1)
    weight = pair_weights(a.shape[0], observed)
    _, R = logistic_terms(build_theta(alpha, Z), np.abs(a), weight)
    v = Z @ w + gamma
    _, S = sign_residual(a, v, weight)
    gv = 2 * S @ v
    return GradientBundle(
        g_alpha=(1 - lam) * 2 * R.sum(axis=1),
        g_Z=(1 - lam) * 2 * R @ Z + lam * np.outer(gv, w),
        g_w=lam * Z.T @ gv,
        g_gamma=float(lam * gv.sum()),
    )


@dataclass(frozen=True)
class ProjectionBounds:
    """Feasible-set radii.

    Projection caps ``|alpha_i|`` at ``M1 / 4`` and ``||z_i||^2`` at ``M1 / 2``;
    ``M3`` caps ``v_i^2``. ``M2`` is a sparsity level used for validation only.
    """

    M1: float
    M3: float
    M2: float | None = None

    def __post_init__(self):
        if not (self.M1 > 0 and self.M3 > 0):
            raise ValueError("M1 and M3 must be positive")
        if self.M2 is not None and not (0 < self.M2 <= self.M1):
            raise ValueError("M2 must satisfy 0 < M2 <= M1")

    def to_dict(self) -> dict:
        return {"M1": self.M1, "M3": self.M3, "M2": self.M2}


def project_alpha(alpha: np.ndarray, bounds: ProjectionBounds) -> np.ndarray:
    cap = bounds.M1 / 4
    return np.clip(alpha, -cap, cap)


def project_Z(Z: np.ndarray, bounds: ProjectionBounds, max_rounds: int = 100) -> np.ndarray:
    """Center columns and cap squared row norms at ``M1 / 2``.

    Rescaling a row moves the column means, so the two steps alternate until
    both constraints hold; a single round suffices unless some row is capped.
    """
    cap = bounds.M1 / 2
    Z = Z - Z.mean(axis=0)
    for _ in range(max_rounds):
        sq = np.sum(Z * Z, axis=1)
        over = sq > cap
        if not np.any(over):
            break
        Z[over] *= np.sqrt(cap / sq[over])[:, None]
        Z -= Z.mean(axis=0)
    return Z


def project_v(v: np.ndarray, bounds: ProjectionBounds) -> np.ndarray:
    cap = np.sqrt(bounds.M3)
    return np.clip(v, -cap, cap)


def shrink_linear_polar(Z: np.ndarray, w: np.ndarray, gamma: float,
                        bounds: ProjectionBounds) -> tuple[np.ndarray, float]:
    """Scale ``(w, gamma)`` down so that ``v = Z w + gamma`` respects ``max v_i^2 <= M3``."""
    vmax = float(np.max(np.abs(Z @ w + gamma))) if Z.size else abs(gamma)
    cap = np.sqrt(bounds.M3)
    if vmax <= cap:
        return w, gamma
    scale = cap / vmax
    return w * scale, gamma * scale


def project(params: LatentParams, bounds: ProjectionBounds) -> LatentParams:
    """Project alpha, Z and the polar variable onto their feasible sets.

    An explicit ``v`` is clipped entrywise; a linear rule ``(w, gamma)`` is
    shrunk proportionally so the induced ``v`` stays exactly ``Z w + gamma``.
    """
    alpha = None if params.alpha is None else project_alpha(params.alpha, bounds)
    Z = None if params.Z is None else project_Z(params.Z, bounds)
    polar = params.polar
    if isinstance(polar, ExplicitPolar):
        polar = ExplicitPolar(project_v(polar.v, bounds))
    elif isinstance(polar, LinearPolar):
        polar = LinearPolar(*shrink_linear_polar(Z, polar.w, polar.gamma, bounds))
    return LatentParams(alpha, Z, polar)


def procrustes_distance(Z1: np.ndarray, Z2: np.ndarray) -> tuple[float, np.ndarray]:
    """``min_O ||Z1 - Z2 O||_F`` over orthogonal ``O``, and the minimiser."""
    Z1 = np.atleast_2d(np.asarray(Z1, dtype=float).T).T
    Z2 = np.atleast_2d(np.asarray(Z2, dtype=float).T).T
    if Z1.shape != Z2.shape:
        raise ValueError(f"shape mismatch {Z1.shape} vs {Z2.shape}")
    O, _ = orthogonal_procrustes(Z2, Z1)
    return float(np.linalg.norm(Z1 - Z2 @ O)), O


def sign_distance(v1: np.ndarray, v2: np.ndarray) -> tuple[float, int]:
    """``min_kappa ||v1 - kappa v2||`` over ``kappa in {-1, +1}``; ties go to +1."""
    v1 = np.asarray(v1, dtype=float).reshape(-1)
    v2 = np.asarray(v2, dtype=float).reshape(-1)
    if v1.size != v2.size:
        raise ValueError(f"length mismatch {v1.size} vs {v2.size}")
    plus = float(np.linalg.norm(v1 - v2))
    minus = float(np.linalg.norm(v1 + v2))
    return (minus, -1) if minus < plus else (plus, 1)


def _rel(num: float, den: float, what: str) -> float:
    if den == 0:
        raise ValueError(f"true {what} has zero norm")
    return num / den


def relative_errors(est: LatentParams, truth: LatentParams) -> dict[str, float]:
    """Relative errors of Z, v, Theta and eta after orthogonal / sign alignment."""
    if est.n != truth.n:
        raise ValueError("estimate and truth differ in size")
    dz, _ = procrustes_distance(est.Z, truth.Z)
    dv, _ = sign_distance(est.v, truth.v)
    theta_hat, theta_star = build_theta(est.alpha, est.Z), build_theta(truth.alpha, truth.Z)
    eta_hat, eta_star = np.outer(est.v, est.v), np.outer(truth.v, truth.v)
    return {
        "err_Z": _rel(dz, np.linalg.norm(truth.Z), "Z"),
        "err_v": _rel(dv, np.linalg.norm(truth.v), "v"),
        "err_Theta": _rel(np.linalg.norm(theta_hat - theta_star), np.linalg.norm(theta_star), "Theta"),
        "err_eta": _rel(np.linalg.norm(eta_hat - eta_star), np.linalg.norm(eta_star), "eta"),
    }
