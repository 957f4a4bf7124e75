"""Initialisation and projected-gradient fitting of the balanced inner-product models.

Three estimators are provided:

* ``fit_separate_edges`` / ``fit_separate_signs`` fit ``(alpha, Z)`` from |A|
  and ``v`` from the observed signs independently.
* ``fit_joint`` fits ``(alpha, Z, w, gamma)`` under ``v = Z w + gamma`` by
  minimising the lambda-weighted likelihood.
* ``one_step_joint`` refines separate estimates with a single joint step.

The supplementary pseudo-code for these algorithms is not public; the loops
below use the step sizes ``tau / ||Z0||_op^2`` (Z), ``tau / (2n)`` (alpha)
and ``tau / ||v0||^2`` (v), projecting after every step.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Union

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, eigsh
from scipy.special import logit

from . import _kernels
from .graph import SignedAdjacency
from .model import ExplicitPolar, LatentParams, LinearPolar, build_theta
from .objective import (
    ProjectionBounds,
    pair_weights,
    project_alpha,
    project_v,
    project_Z,
    shrink_linear_polar,
)

logger = logging.getLogger(__name__)

USVT_EPS = 1e-6


class FitDivergedError(RuntimeError):
    """The objective became non-finite; the step scale is too large."""


@dataclass(frozen=True)
class RandomInit:
    scale: float = 1.0


@dataclass(frozen=True)
class WarmInit:
    params: LatentParams


Init = Union[str, RandomInit, WarmInit]


@dataclass(frozen=True)
class FitConfig:
    k: int = 2
    lam: float = 0.5
    tau: float = 2.0
    max_iter: int = 2000
    tol: float = 1e-8
    bounds: ProjectionBounds | None = None
    init: Init = "usvt"
    seed: int = 0
    threshold_scale: float = 2.01
    patience: int = 3

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if not 0 <= self.lam <= 1:
            raise ValueError("lambda must lie in [0, 1]")
        if self.tau <= 0 or self.tol <= 0 or self.max_iter < 1:
            raise ValueError("tau and tol must be positive and max_iter at least 1")
        if isinstance(self.init, str) and self.init != "usvt":
            raise ValueError(f"unknown init {self.init!r}")

    def to_dict(self) -> dict:
        if isinstance(self.init, RandomInit):
            init = {"type": "random", "scale": self.init.scale}
        elif isinstance(self.init, WarmInit):
            init = {"type": "warm", "params": self.init.params.to_dict()}
        else:
            init = {"type": "usvt"}
        return {
            "k": self.k, "lambda": self.lam, "tau": self.tau, "max_iter": self.max_iter,
            "tol": self.tol, "bounds": None if self.bounds is None else self.bounds.to_dict(),
            "init": init, "seed": self.seed, "threshold_scale": self.threshold_scale,
            "patience": self.patience,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitConfig":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        if d.get("bounds") is not None:
            d["bounds"] = ProjectionBounds(**d["bounds"])
        init = d.get("init")
        if isinstance(init, dict):
            kind = init.get("type", "usvt")
            if kind == "random":
                d["init"] = RandomInit(init.get("scale", 1.0))
            elif kind == "warm":
                d["init"] = WarmInit(LatentParams.from_dict(init["params"]))
            else:
                d["init"] = kind
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown FitConfig fields {sorted(unknown)}")
        return cls(**d)


@dataclass
class FitResult:
    params: LatentParams
    objective_trace: np.ndarray
    grad_norm_trace: np.ndarray
    iterations: int
    converged: bool
    diagnostics: dict = field(default_factory=dict)


class _Data:
    """Views of A shared by every objective evaluation of one fit.

    Edge terms run over all observed pairs of a dense 0/1 matrix; sign terms
    run over the list of observed edges only.
    """

    def __init__(self, A, observed: np.ndarray | None = None):
        a = A.entries if isinstance(A, SignedAdjacency) else np.asarray(A)
        self.n = a.shape[0]
        self.a = a.astype(float)
        self.weight = pair_weights(self.n, observed)
        self.abs_u8 = np.abs(a).astype(np.uint8)
        self.mask_u8 = (self.weight > 0).astype(np.uint8)
        rows, cols = np.nonzero(np.triu(self.abs_u8 * self.mask_u8, k=1))
        self.ei = rows.astype(np.int64)
        self.ej = cols.astype(np.int64)
        self.target = (self.a[rows, cols] > 0).astype(float)
        self.observed_fraction = float(self.weight.sum() / max(self.n * (self.n - 1), 1))

    @property
    def num_sign_obs(self) -> int:
        return self.ei.size

    def edge_terms(self, alpha, Z):
        return _kernels.edge_pass(alpha, np.ascontiguousarray(Z), self.abs_u8, self.mask_u8)

    def edge_value(self, alpha, Z) -> float:
        return _kernels.edge_value(alpha, np.ascontiguousarray(Z), self.abs_u8, self.mask_u8)

    def sign_terms(self, v):
        return _kernels.sign_pass(v, self.ei, self.ej, self.target)

    def sign_value(self, v) -> float:
        return _kernels.sign_value(v, self.ei, self.ej, self.target)

    def signed_matrix(self) -> np.ndarray:
        """Observed signs as a dense matrix, zero where unobserved or absent."""
        return self.a * self.weight


def _top_eigs(M: np.ndarray, count: int, which: str = "LM") -> tuple[np.ndarray, np.ndarray]:
    n = M.shape[0]
    if count >= n - 1 or n <= 64:
        vals, vecs = np.linalg.eigh(M)
        order = np.argsort(-np.abs(vals)) if which == "LM" else np.argsort(-vals)
        order = order[:count]
        return vals[order], vecs[:, order]
    try:
        # fixed start vector keeps ARPACK deterministic
        vals, vecs = eigsh(M, k=count, which=which, v0=np.ones(n) / np.sqrt(n))
    except ArpackNoConvergence:
        return _top_eigs(M, n, which)
    order = np.argsort(-np.abs(vals)) if which == "LM" else np.argsort(-vals)
    return vals[order], vecs[:, order]


def usvt(M: np.ndarray, threshold: float) -> np.ndarray:
    """Keep the spectral components of symmetric ``M`` above ``threshold`` in magnitude."""
    M = (M + M.T) / 2
    n = M.shape[0]
    count = min(n, 16)
    while True:
        vals, vecs = _top_eigs(M, count)
        if np.abs(vals[-1]) <= threshold or count >= n:
            break
        count = min(n, count * 2)
    keep = np.abs(vals) > threshold
    return (vecs[:, keep] * vals[keep]) @ vecs[:, keep].T


def init_edges_usvt(A, k: int, threshold_scale: float = 2.01, observed: np.ndarray | None = None,
                    seed: int = 0) -> tuple[np.ndarray, np.ndarray, dict]:
    """Spectral starting point for ``(alpha, Z)``.

    |A| is denoised by singular value thresholding at
    ``threshold_scale * sqrt(n * p_hat)`` (``p_hat`` the edge density), clipped
    into ``[eps, 1 - eps]`` and mapped to logits. ``alpha`` comes from row means
    of that logit matrix and ``Z`` from the top-k eigenpairs of its
    double-centred version. Missing eigen-directions (fewer than ``k``
    positive eigenvalues) get small random columns and are reported in the
    returned flags.
    """
    data = A if isinstance(A, _Data) else _Data(A, observed)
    n = data.n
    q = data.observed_fraction
    M = np.abs(data.a) * data.weight / q
    p_hat = max(float(M.sum()) / max(n * (n - 1), 1), 1.0 / n)
    P = usvt(M, threshold_scale * np.sqrt(n * p_hat))
    theta = logit(np.clip(P, USVT_EPS, 1 - USVT_EPS))
    row = theta.mean(axis=1)
    alpha0 = row - row.mean() / 2
    centered = theta - row[:, None] - row[None, :] + row.mean()
    vals, vecs = _top_eigs(centered, min(k, n - 1), which="LA")
    Z0 = np.zeros((n, k))
    # eigenvalues at rounding level count as missing directions
    pos = np.where(vals > 1e-10 * max(1.0, float(np.abs(theta).max())), vals, 0.0)
    Z0[:, : vals.size] = vecs * np.sqrt(pos)
    missing = np.flatnonzero(np.linalg.norm(Z0, axis=0) == 0)
    flags = {"missing_dims": int(missing.size)}
    if missing.size:
        # a zero column is a fixed point of the gradient, so seed it with small noise
        warnings.warn(f"USVT init found only {k - missing.size} positive eigenvalues; "
                      "filling the rest of Z with small random columns")
        kept = np.linalg.norm(Z0, axis=0)
        scale = 1e-3 * (kept[kept > 0].min() if np.any(kept > 0) else 1.0)
        noise = np.random.default_rng(seed).standard_normal((n, missing.size))
        Z0[:, missing] = scale * noise / np.linalg.norm(noise, axis=0)
    return alpha0, Z0 - Z0.mean(axis=0), flags


def init_signs_usvt(A, threshold_scale: float = 2.01, observed: np.ndarray | None = None,
                    seed: int = 0) -> tuple[np.ndarray, dict]:
    """Spectral starting point for ``v``.

    The observed signs (0 where there is no edge) are rescaled by the
    observation rate, denoised by singular value thresholding, read as
    ``2 sigma(eta) - 1``, mapped to ``eta`` and factored through its top
    eigenpair. A non-positive top eigenvalue falls back to a random start.
    """
    data = A if isinstance(A, _Data) else _Data(A, observed)
    n = data.n
    Y = data.signed_matrix()
    m = 2.0 * data.num_sign_obs
    if m == 0:
        raise ValueError("network has no observed edges, so signs carry no information")
    p_hat = m / max(n * (n - 1), 1)
    X = usvt(Y / p_hat, threshold_scale * np.sqrt(n / p_hat))
    eta = 2 * np.arctanh(np.clip(X, -1 + 2 * USVT_EPS, 1 - 2 * USVT_EPS))
    vals, vecs = _top_eigs((eta + eta.T) / 2, 1, which="LA")
    flags = {"random_fallback": False}
    if vals[0] <= 0:
        warnings.warn("sign USVT init has no positive eigenvalue; using a random start")
        flags["random_fallback"] = True
        return np.random.default_rng(seed).standard_normal(n), flags
    return np.sqrt(vals[0]) * vecs[:, 0], flags


def _default_bounds(alpha: np.ndarray | None, Z: np.ndarray | None, v: np.ndarray | None) -> ProjectionBounds:
    mags = [0.0]
    if alpha is not None:
        mags.append(4 * float(np.max(np.abs(alpha))))
    if Z is not None:
        mags.append(2 * float(np.max(np.sum(Z * Z, axis=1))))
    m3 = 0.0 if v is None else float(np.max(v * v))
    return ProjectionBounds(M1=2 * max(mags) + 4, M3=2 * m3 + 4)


def _start_edges(data: _Data, config: FitConfig) -> tuple[np.ndarray, np.ndarray, dict]:
    init = config.init
    if isinstance(init, WarmInit):
        p = init.params
        if p.alpha is None or p.Z is None:
            raise ValueError("warm start needs alpha and Z")
        if p.Z.shape != (data.n, config.k):
            raise ValueError(f"warm-start Z has shape {p.Z.shape}, expected {(data.n, config.k)}")
        return p.alpha.copy(), p.Z.copy(), {"init": "warm"}
    if isinstance(init, RandomInit):
        rng = np.random.default_rng(config.seed)
        Z = rng.standard_normal((data.n, config.k)) * init.scale / np.sqrt(config.k)
        return np.zeros(data.n), Z - Z.mean(axis=0), {"init": "random"}
    alpha, Z, flags = init_edges_usvt(data, config.k, config.threshold_scale, seed=config.seed)
    return alpha, Z, {"init": "usvt", **flags}


def _start_signs(data: _Data, config: FitConfig) -> tuple[np.ndarray, dict]:
    init = config.init
    if isinstance(init, WarmInit):
        v = init.params.v
        if v is None:
            raise ValueError("warm start needs a polar variable")
        return np.array(v, dtype=float), {"init": "warm"}
    if isinstance(init, RandomInit):
        rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(2)[1])
        return rng.standard_normal(data.n) * init.scale, {"init": "random"}
    v, flags = init_signs_usvt(data, config.threshold_scale, seed=config.seed)
    return v, {"init": "usvt", **flags}


class _Tracker:
    """Objective trace and the relative-change stopping rule."""

    def __init__(self, config: FitConfig, first: float):
        self.config = config
        self.values = [first]
        self.grads: list[float] = []
        self.quiet = 0

    def push(self, value: float, grad_norm: float, it: int) -> bool:
        if not np.isfinite(value):
            raise FitDivergedError(
                f"objective became non-finite at iteration {it}; reduce tau (currently {self.config.tau})")
        prev = self.values[-1]
        self.values.append(value)
        self.grads.append(grad_norm)
        rel = abs(prev - value) / max(abs(prev), np.finfo(float).tiny)
        self.quiet = self.quiet + 1 if rel < self.config.tol else 0
        return self.quiet >= self.config.patience


def _accept(new: float, old: float, shrink: float) -> bool:
    """Keep a step unless it raised the objective; tiny steps are always kept.

    The fixed step sizes are rescaled by powers of two whenever a step would
    increase the objective, which happens when the starting embedding is much
    smaller than the final one.
    """
    if not np.isfinite(new):
        return shrink < 1e-12
    return new <= old + 1e-12 * abs(old) or shrink < 1e-12


def _spectral_sq(Z: np.ndarray) -> float:
    return float(np.linalg.norm(Z, 2) ** 2) if Z.size else 0.0


def _condition_number(Z: np.ndarray) -> float:
    s = np.linalg.svd(Z, compute_uv=False)
    return float(s[0] / s[-1]) if s[-1] > 0 else float("inf")


def fit_separate_edges(A, config: FitConfig, observed: np.ndarray | None = None) -> FitResult:
    """Projected gradient descent for ``(alpha, Z)`` on the edge likelihood."""
    data = _Data(A, observed)
    n = data.n
    alpha, Z, flags = _start_edges(data, config)
    bounds = config.bounds or _default_bounds(alpha, Z, None)
    alpha, Z = project_alpha(alpha, bounds), project_Z(Z, bounds)
    tau_z = config.tau / max(_spectral_sq(Z), 1e-12)
    tau_a = config.tau / (2 * n)
    value, g_alpha, g_Z = data.edge_terms(alpha, Z)
    track = _Tracker(config, value)
    converged = False
    it = 0
    shrink = 1.0
    for it in range(1, config.max_iter + 1):
        grad_norm = float(np.sqrt(g_alpha @ g_alpha + np.sum(g_Z * g_Z)))
        while True:
            alpha_new = project_alpha(alpha - shrink * tau_a * g_alpha, bounds)
            Z_new = project_Z(Z - shrink * tau_z * g_Z, bounds)
            terms = data.edge_terms(alpha_new, Z_new)
            if _accept(terms[0], value, shrink):
                break
            shrink /= 2
        alpha, Z = alpha_new, Z_new
        value, g_alpha, g_Z = terms
        if track.push(value, grad_norm, it):
            converged = True
            break
    diagnostics = {
        **flags, "bounds": bounds.to_dict(), "tau_Z": tau_z, "tau_alpha": tau_a, "step_shrink": shrink,
        "condition_number_Z": _condition_number(Z),
        "grad_norm_alpha": float(np.linalg.norm(g_alpha)), "grad_norm_Z": float(np.linalg.norm(g_Z)),
    }
    return FitResult(LatentParams(alpha, Z), np.array(track.values), np.array(track.grads),
                     it, converged, diagnostics)


def fit_separate_signs(A, config: FitConfig, observed: np.ndarray | None = None) -> FitResult:
    """Projected gradient descent for ``v`` on the sign likelihood."""
    data = _Data(A, observed)
    if data.num_sign_obs == 0:
        raise ValueError("network has no edges, so signs carry no information")
    v, flags = _start_signs(data, config)
    bounds = config.bounds or _default_bounds(None, None, v)
    v = project_v(v, bounds)
    tau_v = config.tau / max(float(v @ v), 1e-12)
    value, g_v = data.sign_terms(v)
    track = _Tracker(config, value)
    converged = False
    it = 0
    shrink = 1.0
    for it in range(1, config.max_iter + 1):
        grad_norm = float(np.linalg.norm(g_v))
        while True:
            v_new = project_v(v - shrink * tau_v * g_v, bounds)
            terms = data.sign_terms(v_new)
            if _accept(terms[0], value, shrink):
                break
            shrink /= 2
        v = v_new
        value, g_v = terms
        if track.push(value, grad_norm, it):
            converged = True
            break
    diagnostics = {**flags, "bounds": bounds.to_dict(), "tau_v": tau_v, "step_shrink": shrink,
                   "grad_norm_v": float(np.linalg.norm(g_v))}
    return FitResult(LatentParams(None, None, ExplicitPolar(v)), np.array(track.values),
                     np.array(track.grads), it, converged, diagnostics)


def regress_polar(Z: np.ndarray, v_target: np.ndarray) -> tuple[np.ndarray, float]:
    """Least-squares ``(w, gamma)`` minimising ``||v_target - Z w - gamma 1||``.

    A rank-deficient design gives the minimum-norm solution with a warning.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float).T).T
    X = np.column_stack([Z, np.ones(Z.shape[0])])
    coef, _, rank, _ = np.linalg.lstsq(X, np.asarray(v_target, dtype=float).reshape(-1), rcond=None)
    if rank < X.shape[1]:
        warnings.warn("design [Z, 1] is rank deficient; returning the minimum-norm (w, gamma)")
    return coef[:-1], float(coef[-1])


def _newton_polar(data: _Data, Z: np.ndarray, theta: np.ndarray, max_steps: int = 50,
                  rtol: float = 1e-12) -> tuple[np.ndarray, float]:
    """Minimise the sign likelihood over ``theta = (w, gamma)`` with ``v = [Z, 1] theta``.

    Damped Newton with Armijo backtracking on the exact (k+1)-dimensional
    Hessian; damping kicks in whenever the Hessian is not positive definite.
    """
    X = np.ascontiguousarray(np.column_stack([Z, np.ones(data.n)]))
    eye = np.eye(X.shape[1])
    for _ in range(max_steps):
        value, grad, H = _kernels.polar_newton_pass(X, X @ theta, data.ei, data.ej, data.target)
        scale = max(float(np.abs(np.diag(H)).max()), 1e-12)
        damping = 0.0
        while True:
            try:
                np.linalg.cholesky(H + damping * eye)
                break
            except np.linalg.LinAlgError:
                damping = max(4 * damping, 1e-8 * scale)
        step = np.linalg.solve(H + damping * eye, -grad)
        decrease = float(-(grad @ step))
        if decrease <= rtol * max(1.0, abs(value)):
            break
        t = 1.0
        while t > 1e-10:
            cand = theta + t * step
            if data.sign_value(X @ cand) <= value - 1e-4 * t * decrease:
                theta = cand
                break
            t /= 2
        else:
            break
    return theta, data.sign_value(X @ theta)


def _fit_polar(data: _Data, Z: np.ndarray, start: np.ndarray | None, config: FitConfig) -> np.ndarray:
    if start is None:
        v0, _ = init_signs_usvt(data, config.threshold_scale, seed=config.seed)
        w0, g0 = regress_polar(Z, v0)
        start = np.append(w0, g0)
    theta, _ = _newton_polar(data, Z, start)
    return theta


def fit_joint(A, config: FitConfig, observed: np.ndarray | None = None) -> FitResult:
    """Projected gradient descent on the lambda-weighted likelihood with ``v = Z w + gamma``.

    ``(alpha, Z)`` start from ``fit_separate_edges`` (or a warm start). Each
    iteration takes a gradient step in ``(alpha, Z)`` and then re-solves
    ``(w, gamma)`` exactly for the new ``Z``; for any ``lam > 0`` that inner
    problem only involves the sign likelihood. ``(w, gamma)`` are shrunk
    together whenever the induced ``v`` would exceed the ``M3`` cap.
    """
    lam = config.lam
    data = _Data(A, observed)
    n = data.n
    if isinstance(config.init, WarmInit):
        alpha, Z, flags = _start_edges(data, config)
        warm_polar = config.init.params.polar
    else:
        sep = fit_separate_edges(A, config, observed)
        alpha, Z = sep.params.alpha, sep.params.Z
        flags = {"separate_iterations": sep.iterations, "separate_converged": sep.converged}
        warm_polar = None
    start = None
    if isinstance(warm_polar, LinearPolar):
        start = np.append(warm_polar.w, warm_polar.gamma)
    elif isinstance(warm_polar, ExplicitPolar):
        w0, g0 = regress_polar(Z, warm_polar.v)
        start = np.append(w0, g0)
    has_signs = data.num_sign_obs > 0
    if has_signs:
        theta = _fit_polar(data, Z, start, config)
    else:
        theta = np.zeros(config.k + 1) if start is None else start
    v = Z @ theta[:-1] + theta[-1]
    bounds = config.bounds or _default_bounds(alpha, Z, v)
    alpha, Z = project_alpha(alpha, bounds), project_Z(Z, bounds)
    w, gamma = shrink_linear_polar(Z, theta[:-1], theta[-1], bounds)
    theta = np.append(w, gamma)
    v = Z @ w + gamma

    z_sq = max(_spectral_sq(Z), 1e-12)
    v_sq = max(float(v @ v), 1e-12)
    # without the sign term there is nothing to balance the Z step against
    r0 = min(1.0, z_sq / v_sq) if lam > 0 else 1.0
    tau_z = r0 * config.tau / z_sq
    tau_a = config.tau / (2 * n)

    e_val, g_alpha_e, g_Z_e = data.edge_terms(alpha, Z)
    s_val, g_v = data.sign_terms(v)
    track = _Tracker(config, (1 - lam) * e_val + lam * s_val)
    converged = False
    it = 0
    value = track.values[-1]
    shrink = 1.0
    for it in range(1, config.max_iter + 1):
        g_alpha = (1 - lam) * g_alpha_e
        g_Z = (1 - lam) * g_Z_e + lam * np.outer(g_v, w)
        grad_norm = float(np.sqrt(g_alpha @ g_alpha + np.sum(g_Z * g_Z)))
        while True:
            alpha_new = project_alpha(alpha - shrink * tau_a * g_alpha, bounds)
            Z_new = project_Z(Z - shrink * tau_z * g_Z, bounds)
            theta_new = _newton_polar(data, Z_new, theta)[0] if has_signs else theta
            w_new, gamma_new = shrink_linear_polar(Z_new, theta_new[:-1], theta_new[-1], bounds)
            v_new = Z_new @ w_new + gamma_new
            e_terms = data.edge_terms(alpha_new, Z_new)
            s_terms = data.sign_terms(v_new)
            new_value = (1 - lam) * e_terms[0] + lam * s_terms[0]
            if _accept(new_value, value, shrink):
                break
            shrink /= 2
        alpha, Z, w, gamma, v = alpha_new, Z_new, w_new, gamma_new, v_new
        theta = np.append(w, gamma)
        (e_val, g_alpha_e, g_Z_e), (s_val, g_v) = e_terms, s_terms
        value = new_value
        if track.push(value, grad_norm, it):
            converged = True
            break
    diagnostics = {
        **flags, "bounds": bounds.to_dict(), "tau_Z": tau_z, "tau_alpha": tau_a, "r0": r0,
        "step_shrink": shrink,
        "condition_number_Z": _condition_number(Z),
        "grad_norm_alpha": float(np.linalg.norm((1 - lam) * g_alpha_e)),
        "grad_norm_Z": float(np.linalg.norm((1 - lam) * g_Z_e + lam * np.outer(g_v, w))),
    }
    params = LatentParams(alpha, Z, LinearPolar(w, gamma))
    return FitResult(params, np.array(track.values), np.array(track.grads), it, converged, diagnostics)


def default_one_step_size(Z_bar: np.ndarray, v_bar: np.ndarray, tau: float) -> float:
    """``r0 tau / ||Z||_op^2`` with ``r0 = min(1, ||Z||_op^2 / ||v||^2)``, as for the joint fit."""
    z_sq = max(_spectral_sq(Z_bar), 1e-12)
    v_sq = max(float(v_bar @ v_bar), 1e-12)
    return min(1.0, z_sq / v_sq) * tau / z_sq


def one_step_joint(A, alpha_bar, Z_bar, v_tilde, lam: float, tau_z: float
                   ) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """One joint gradient step in Z from separate estimates.

    ``(w, gamma)`` are the least-squares fit of ``v_tilde`` on ``[Z_bar, 1]``
    and ``v_bar = Z_bar w + gamma``; the step is

        Z_hat = Z_bar - 2 tau_z (1 - lam) R Z_bar - 2 tau_z lam S v_bar w^T

    followed by column centering. Returns ``(Z_hat, v_bar, w, gamma)``.
    """
    if not 0 <= lam <= 1:
        raise ValueError("lambda must lie in [0, 1]")
    data = _Data(A)
    Z_bar = np.atleast_2d(np.asarray(Z_bar, dtype=float).T).T
    v_tilde = np.asarray(v_tilde, dtype=float).reshape(-1)
    if v_tilde.size != data.n or Z_bar.shape[0] != data.n:
        raise ValueError("dimension mismatch between A, Z_bar and v_tilde")
    w, gamma = regress_polar(Z_bar, v_tilde)
    v_bar = Z_bar @ w + gamma
    # the kernels return 2 R Z_bar and 2 S v_bar directly
    _, _, g_Z = data.edge_terms(np.asarray(alpha_bar, dtype=float), Z_bar)
    _, g_v = data.sign_terms(v_bar)
    Z_hat = Z_bar - tau_z * (1 - lam) * g_Z - tau_z * lam * np.outer(g_v, w)
    return Z_hat - Z_hat.mean(axis=0), v_bar, w, gamma


def _holdout_loglik(data: _Data, holdout: np.ndarray, alpha, Z, v) -> float:
    theta = build_theta(alpha, Z)
    eta = np.outer(v, v)
    abs_a = np.abs(data.a)
    # log sigma(x) = -softplus(-x)
    edge = -np.logaddexp(0, -np.where(abs_a > 0, theta, -theta))
    sign = -np.logaddexp(0, -np.where(data.a > 0, eta, -eta)) * abs_a
    mask = np.triu(holdout, k=1)
    return float(np.sum((edge + sign) * mask) / mask.sum())


def select_lambda_cv(A, candidates, config: FitConfig, mask_fraction: float = 0.1, folds: int = 3,
                     seed: int = 0) -> float:
    """Choose lambda by held-out predictive log-likelihood.

    For each fold a random ``mask_fraction`` of node pairs is hidden, the
    joint model is fitted on the rest for every candidate, and the hidden
    pairs are scored by the log-probability of their edge indicator and sign.
    The candidate with the best mean score wins; ties go to the smaller lambda.
    """
    cands = sorted(float(c) for c in candidates)
    if not cands:
        raise ValueError("no lambda candidates")
    if not 0 < mask_fraction < 1:
        raise ValueError("mask_fraction must lie in (0, 1)")
    if len(set(cands)) == 1:
        return cands[0]
    data = _Data(A)
    n = data.n
    rows, cols = np.triu_indices(n, k=1)
    rng = np.random.default_rng(seed)
    scores = np.zeros(len(cands))
    for fold in range(folds):
        for attempt in range(100):
            hidden = rng.random(rows.size) < mask_fraction
            if np.any(data.abs_u8[rows[hidden], cols[hidden]] > 0):
                break
            logger.warning("fold %d drew a holdout without edges; redrawing", fold)
        else:
            raise ValueError("could not draw a holdout containing an edge")
        holdout = np.zeros((n, n))
        holdout[rows[hidden], cols[hidden]] = 1
        holdout += holdout.T
        observed = 1 - holdout
        sep_config = replace(config, lam=0.0)
        sep = fit_separate_edges(A, sep_config, observed)
        for c, lam in enumerate(cands):
            warm = WarmInit(LatentParams(sep.params.alpha, sep.params.Z))
            res = fit_joint(A, replace(config, lam=lam, init=warm), observed)
            p = res.params
            scores[c] += _holdout_loglik(data, holdout, p.alpha, p.Z, p.v)
    best = 0
    for c in range(1, len(cands)):
        if scores[c] > scores[best]:
            best = c
    return cands[best]
