"""Balanced latent space models: parameters, logit surfaces, samplers and balance checks."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.special import expit

from .graph import SignedAdjacency

SeedLike = Union[int, np.random.SeedSequence, None]


@dataclass(frozen=True)
class ExplicitPolar:
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float).reshape(-1))


@dataclass(frozen=True)
class LinearPolar:
    """Polar variable tied to the latent positions: ``v = Z w + gamma``."""

    w: np.ndarray
    gamma: float

    def __post_init__(self):
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float).reshape(-1))
        object.__setattr__(self, "gamma", float(self.gamma))


Polar = Union[ExplicitPolar, LinearPolar]


@dataclass(frozen=True)
class LatentParams:
    """Degree offsets ``alpha``, latent positions ``Z`` and a polar rule.

    Any part may be ``None`` for partial fits (the sign-only fitter has no
    ``alpha`` or ``Z``), but whatever is present must agree on ``n`` and ``k``.
    """

    alpha: np.ndarray | None
    Z: np.ndarray | None
    polar: Polar | None = None

    def __post_init__(self):
        if self.alpha is not None:
            object.__setattr__(self, "alpha", np.asarray(self.alpha, dtype=float).reshape(-1))
        if self.Z is not None:
            Z = np.asarray(self.Z, dtype=float)
            if Z.ndim == 1:
                Z = Z[:, None]
            object.__setattr__(self, "Z", Z)
        sizes = set()
        if self.alpha is not None:
            sizes.add(self.alpha.size)
        if self.Z is not None:
            sizes.add(self.Z.shape[0])
        if isinstance(self.polar, ExplicitPolar):
            sizes.add(self.polar.v.size)
        if len(sizes) > 1:
            raise ValueError(f"inconsistent node counts {sorted(sizes)}")
        if isinstance(self.polar, LinearPolar):
            if self.Z is None:
                raise ValueError("a linear polar rule needs latent positions Z")
            if self.polar.w.size != self.Z.shape[1]:
                raise ValueError(f"w has length {self.polar.w.size}, Z has {self.Z.shape[1]} columns")

    @property
    def n(self) -> int:
        if self.alpha is not None:
            return self.alpha.size
        if self.Z is not None:
            return self.Z.shape[0]
        return self.polar.v.size

    @property
    def k(self) -> int | None:
        return None if self.Z is None else self.Z.shape[1]

    @property
    def v(self) -> np.ndarray | None:
        """Polar values, derived from ``(w, gamma)`` for the linear rule."""
        if isinstance(self.polar, ExplicitPolar):
            return self.polar.v
        if isinstance(self.polar, LinearPolar):
            return self.Z @ self.polar.w + self.polar.gamma
        return None

    def is_centered(self, atol: float = 1e-10) -> bool:
        return self.Z is None or bool(np.allclose(self.Z.sum(axis=0), 0.0, atol=atol * max(1, self.n)))

    def with_polar(self, polar: Polar | None) -> "LatentParams":
        return LatentParams(self.alpha, self.Z, polar)

    def to_dict(self) -> dict:
        out: dict = {}
        if self.alpha is not None:
            out["alpha"] = self.alpha.tolist()
        if self.Z is not None:
            out["Z"] = self.Z.tolist()
        if isinstance(self.polar, ExplicitPolar):
            out["polar"] = {"type": "explicit", "v": self.polar.v.tolist()}
        elif isinstance(self.polar, LinearPolar):
            out["polar"] = {"type": "linear", "w": self.polar.w.tolist(), "gamma": self.polar.gamma}
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "LatentParams":
        polar = None
        p = d.get("polar")
        if p is not None:
            kind = p.get("type")
            if kind == "explicit":
                polar = ExplicitPolar(p["v"])
            elif kind == "linear":
                polar = LinearPolar(p["w"], p["gamma"])
            else:
                raise ValueError(f"unknown polar type {kind!r}")
        Z = d.get("Z")
        if Z is not None:
            Z = np.asarray(Z, dtype=float)
            if Z.ndim == 1:
                Z = Z[:, None]
        return cls(d.get("alpha"), Z, polar)


def build_theta(alpha: np.ndarray, Z: np.ndarray) -> np.ndarray:
    """Edge logits ``alpha 1^T + 1 alpha^T + Z Z^T``; the diagonal is never used."""
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[:, None]
    if Z.shape[0] != alpha.size:
        raise ValueError(f"alpha has length {alpha.size} but Z has {Z.shape[0]} rows")
    theta = Z @ Z.T
    theta += alpha[:, None]
    theta += alpha[None, :]
    # Z @ Z.T is symmetric in exact arithmetic but BLAS may round the halves differently
    return (theta + theta.T) / 2


def build_eta(params: LatentParams | Polar | np.ndarray, Z: np.ndarray | None = None) -> np.ndarray:
    """Sign logits ``v v^T``.

    Accepts a full ``LatentParams``, an ``ExplicitPolar``, a ``LinearPolar``
    together with ``Z``, or a bare polar vector.
    """
    if isinstance(params, LatentParams):
        v = params.v
        if v is None:
            raise ValueError("parameters carry no polar variable")
    elif isinstance(params, ExplicitPolar):
        v = params.v
    elif isinstance(params, LinearPolar):
        if Z is None:
            raise ValueError("a linear polar rule needs Z")
        Z = np.asarray(Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        if Z.shape[1] != params.w.size:
            raise ValueError(f"w has length {params.w.size}, Z has {Z.shape[1]} columns")
        v = Z @ params.w + params.gamma
    else:
        v = np.asarray(params, dtype=float).reshape(-1)
    return np.outer(v, v)


def _seed_streams(seed: SeedLike, count: int) -> list[np.random.Generator]:
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.default_rng(s) for s in ss.spawn(count)]


def _sample_pairs(edge_prob: np.ndarray, sign_prob: np.ndarray,
                  edge_rng: np.random.Generator, sign_rng: np.random.Generator) -> SignedAdjacency:
    n = edge_prob.shape[0]
    rows, cols = np.triu_indices(n, k=1)
    present = edge_rng.random(rows.size) < edge_prob[rows, cols]
    positive = sign_rng.random(rows.size) < sign_prob[rows, cols]
    vals = np.where(present, np.where(positive, 1, -1), 0).astype(np.int8)
    a = np.zeros((n, n), dtype=np.int8)
    a[rows, cols] = vals
    a[cols, rows] = vals
    return SignedAdjacency(a)


def sample_network(Theta: np.ndarray, Eta: np.ndarray, seed: SeedLike = None) -> SignedAdjacency:
    """Draw a signed network with edge logits ``Theta`` and sign logits ``Eta``.

    Each unordered pair ``i < j`` (row-major order) gets one uniform from an
    edge stream and one from a separate sign stream, both derived from
    ``seed``. The edge pattern |A| therefore depends on ``Theta`` and the seed
    only, and stays fixed when ``Eta`` changes.
    """
    Theta = np.asarray(Theta, dtype=float)
    Eta = np.asarray(Eta, dtype=float)
    if Theta.shape != Eta.shape or Theta.ndim != 2 or Theta.shape[0] != Theta.shape[1]:
        raise ValueError("Theta and Eta must be square matrices of the same shape")
    edge_rng, sign_rng = _seed_streams(seed, 2)
    return _sample_pairs(expit(Theta), expit(Eta), edge_rng, sign_rng)


@dataclass(frozen=True)
class FiniteLatentModel:
    """Latent model on the states ``0..K-1``.

    ``p`` is the state distribution, ``B`` the edge probability between
    states and ``f`` the sign logit between states.
    """

    p: np.ndarray
    B: np.ndarray
    f: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float).reshape(-1)
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        f = np.atleast_2d(np.asarray(self.f, dtype=float))
        K = p.size
        if B.shape != (K, K) or f.shape != (K, K):
            raise ValueError("B and f must be K x K with K = len(p)")
        if np.any(p < 0) or not np.isclose(p.sum(), 1.0):
            raise ValueError("p must be a probability vector")
        if not np.allclose(B, B.T) or not np.allclose(f, f.T):
            raise ValueError("B and f must be symmetric")
        if np.any(B <= 0) or np.any(B >= 1):
            raise ValueError("edge probabilities in B must lie strictly inside (0, 1)")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "f", f)

    @property
    def K(self) -> int:
        return self.p.size


def sample_finite_model(model: FiniteLatentModel, n: int, seed: SeedLike = None) -> tuple[SignedAdjacency, np.ndarray]:
    """Sample iid states from ``model.p`` and then a network given the states."""
    edge_rng, sign_rng, state_rng = _seed_streams(seed, 3)
    states = state_rng.choice(model.K, size=n, p=model.p)
    idx = np.ix_(states, states)
    network = _sample_pairs(model.B[idx], expit(model.f[idx]), edge_rng, sign_rng)
    return network, states


@dataclass(frozen=True)
class Balanced:
    grouping: np.ndarray


@dataclass(frozen=True)
class Violation:
    triple: tuple[int, int, int]


BalanceVerdict = Union[Balanced, Violation]


def check_f_balance_finite(f: np.ndarray) -> BalanceVerdict:
    """Decide whether ``f(a,b) f(b,c) f(c,a) > 0`` for all states, repeats included.

    On success the grouping ``g`` (normalised so ``g[0] = +1``) satisfies
    ``sign(f[a, b]) == g[a] * g[b]``. Otherwise a violating triple is returned;
    zero entries count as violations.
    """
    f = np.atleast_2d(np.asarray(f, dtype=float))
    K = f.shape[0]
    if f.shape != (K, K) or not np.allclose(f, f.T):
        raise ValueError("f must be a symmetric square matrix")
    s = np.sign(f).astype(int)
    for a in range(K):
        if s[a, a] <= 0:
            return Violation((a, a, a))
    zero = np.argwhere(s == 0)
    if zero.size:
        a, b = (int(x) for x in zero[0])
        return Violation((a, b, b))
    g = s[0].copy()
    bad = np.argwhere(s != np.outer(g, g))
    if bad.size:
        a, b = (int(x) for x in bad[0])
        return Violation((0, a, b))
    return Balanced(g)


@dataclass(frozen=True)
class PopulationBalance:
    """Per-triple conditional sign expectations and their minimum."""

    triples: np.ndarray
    values: np.ndarray
    minimum: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "minimum", float(self.values.min()))

    @property
    def balanced(self) -> bool:
        return self.minimum > 0


def _triples(n: int) -> np.ndarray:
    return np.array(list(itertools.combinations(range(n), 3)), dtype=np.int64).reshape(-1, 3)


def population_balance_index(Eta: np.ndarray) -> PopulationBalance:
    """Exact ``E(A_ij A_jl A_li | triangle closed)`` for every triple.

    Signs are conditionally independent given the edges, so the conditional
    mean is the product of ``2 sigma(eta) - 1 = tanh(eta / 2)`` over the three
    pairs. The network is population-level balanced iff the minimum is > 0.
    """
    Eta = np.asarray(Eta, dtype=float)
    n = Eta.shape[0]
    if n < 3:
        raise ValueError("need at least three nodes")
    T = np.tanh(Eta / 2)
    tri = _triples(n)
    i, j, l = tri.T
    return PopulationBalance(tri, T[i, j] * T[j, l] * T[i, l])


@dataclass(frozen=True)
class MonteCarloBalance:
    triples: np.ndarray
    means: np.ndarray
    counts: np.ndarray

    @property
    def standard_errors(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.sqrt(np.clip(1 - self.means**2, 0, None) / self.counts)


def mc_population_balance(Theta: np.ndarray, Eta: np.ndarray, num_samples: int, seed: SeedLike = None,
                          batch: int = 4096) -> MonteCarloBalance:
    """Monte-Carlo estimate of the conditional sign product on every triple.

    Triples that never close get a NaN mean; if no triple closes in any
    sample a ``ValueError`` is raised.
    """
    Theta = np.asarray(Theta, dtype=float)
    Eta = np.asarray(Eta, dtype=float)
    n = Theta.shape[0]
    if n < 3:
        raise ValueError("need at least three nodes")
    rows, cols = np.triu_indices(n, k=1)
    pair = np.zeros((n, n), dtype=np.int64)
    pair[rows, cols] = np.arange(rows.size)
    tri = _triples(n)
    p1, p2, p3 = pair[tri[:, 0], tri[:, 1]], pair[tri[:, 1], tri[:, 2]], pair[tri[:, 0], tri[:, 2]]
    pe = expit(Theta[rows, cols])
    ps = expit(Eta[rows, cols])
    rng = np.random.default_rng(seed)
    sums = np.zeros(tri.shape[0])
    counts = np.zeros(tri.shape[0], dtype=np.int64)
    left = num_samples
    while left > 0:
        b = min(batch, left)
        present = rng.random((b, rows.size)) < pe
        sign = np.where(rng.random((b, rows.size)) < ps, 1.0, -1.0)
        closed = present[:, p1] & present[:, p2] & present[:, p3]
        prod = sign[:, p1] * sign[:, p2] * sign[:, p3]
        sums += np.where(closed, prod, 0.0).sum(axis=0)
        counts += closed.sum(axis=0)
        left -= b
    if counts.sum() == 0:
        raise ValueError("no closed triangle was sampled")
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return MonteCarloBalance(tri, means, counts)
