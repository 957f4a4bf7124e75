"""Signed adjacency matrices, signed-triangle census and the sign permutation test."""

from __future__ import annotations

from collections.abc import Hashable, Iterable, Mapping
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np


@dataclass(frozen=True)
class SignedAdjacency:
    """Symmetric matrix with entries in {-1, 0, +1} and a zero diagonal.

    Storage is dense (``int8``); every likelihood downstream is a sum over all
    node pairs, so nothing is gained from a sparse layout at the sizes used here.
    """

    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {a.shape}")
        if not np.isin(a, (-1, 0, 1)).all():
            raise ValueError("adjacency entries must lie in {-1, 0, +1}")
        if not np.array_equal(a, a.T):
            raise ValueError("adjacency must be symmetric")
        if np.any(np.diagonal(a) != 0):
            raise ValueError("adjacency must have a zero diagonal (no self-loops)")
        a = a.astype(np.int8)
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    @property
    def absolute(self) -> np.ndarray:
        """|A| as a float matrix."""
        return np.abs(self.entries).astype(float)

    def edges(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Upper-triangle edge list ``(rows, cols, signs)`` in lexicographic order."""
        rows, cols = np.nonzero(np.triu(self.entries, k=1))
        return rows, cols, self.entries[rows, cols].astype(np.int8)

    @property
    def num_edges(self) -> int:
        return int(np.count_nonzero(self.entries)) // 2

    def density(self) -> float:
        n = self.n
        return self.num_edges / (n * (n - 1) / 2) if n > 1 else 0.0

    def positive_fraction(self) -> float:
        m = self.num_edges
        return (int(np.count_nonzero(self.entries > 0)) // 2) / m if m else float("nan")

    def permuted(self, perm: np.ndarray) -> "SignedAdjacency":
        """Relabel nodes: the new node ``i`` is the old node ``perm[i]``."""
        perm = np.asarray(perm)
        return SignedAdjacency(self.entries[np.ix_(perm, perm)])


def from_edge_list(edges: Iterable[tuple[int, int, int]], n: int) -> SignedAdjacency:
    """Build an adjacency matrix from ``(i, j, sign)`` triples.

    Repeated pairs with the same sign are accepted; a pair listed with both
    signs, a self-loop, or an index outside ``[0, n)`` raises ``ValueError``.
    """
    a = np.zeros((n, n), dtype=np.int8)
    for i, j, s in edges:
        i, j, s = int(i), int(j), int(s)
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"edge ({i}, {j}) out of range for n={n}")
        if i == j:
            raise ValueError(f"self-loop at node {i}")
        if s not in (-1, 1):
            raise ValueError(f"edge sign must be +1 or -1, got {s}")
        if a[i, j] != 0 and a[i, j] != s:
            raise ValueError(f"conflicting signs for pair ({i}, {j})")
        a[i, j] = a[j, i] = s
    return SignedAdjacency(a)


@dataclass(frozen=True)
class TriangleCensus:
    count_ppp: int
    count_pmm: int
    count_ppm: int
    count_mmm: int

    @property
    def balanced(self) -> int:
        return self.count_ppp + self.count_pmm

    @property
    def unbalanced(self) -> int:
        return self.count_ppm + self.count_mmm

    @property
    def total(self) -> int:
        return self.balanced + self.unbalanced

    @property
    def balanced_fraction(self) -> float:
        return self.balanced / self.total if self.total else float("nan")


def triangle_census(A: SignedAdjacency) -> TriangleCensus:
    """Count closed triangles by sign pattern.

    Uses closed-walk traces: with P and N the positive and negative indicator
    matrices, tr(P^3)/6 counts +++ triangles and tr(P P N)/2 counts ++- ones.
    Float matmuls are exact here since every count is far below 2**53.
    """
    P = (A.entries > 0).astype(float)
    N = (A.entries < 0).astype(float)
    PP = P @ P
    NN = N @ N
    ppp = np.einsum("ij,ji->", PP, P) / 6
    ppm = np.einsum("ij,ji->", PP, N) / 2
    pmm = np.einsum("ij,ji->", NN, P) / 2
    mmm = np.einsum("ij,ji->", NN, N) / 6
    return TriangleCensus(*(int(round(c)) for c in (ppp, pmm, ppm, mmm)))


def triangle_edge_index(A: SignedAdjacency) -> tuple[np.ndarray, np.ndarray]:
    """Enumerate closed triangles as triples of edge indices.

    Returns ``(triangles, signs)`` where ``triangles`` has shape ``(T, 3)`` and
    indexes into the upper-triangle edge list ``signs`` (see ``A.edges()``).
    """
    rows, cols, signs = A.edges()
    n = A.n
    index = -np.ones((n, n), dtype=np.int64)
    index[rows, cols] = np.arange(rows.size)
    index[cols, rows] = np.arange(rows.size)
    absA = A.entries != 0
    tris = []
    for e, (i, j) in enumerate(zip(rows, cols)):
        common = np.nonzero(absA[i] & absA[j])[0]
        common = common[common > j]
        if common.size:
            tris.append(np.column_stack([np.full(common.size, e), index[i, common], index[j, common]]))
    triangles = np.concatenate(tris) if tris else np.empty((0, 3), dtype=np.int64)
    return triangles, signs


class PermutationTestResult(NamedTuple):
    p_value: float
    observed_stat: float


def _strata_groups(A: SignedAdjacency, strata: Mapping[tuple[int, int], Hashable]) -> list[np.ndarray]:
    rows, cols, _ = A.edges()
    lookup = {}
    for (i, j), label in strata.items():
        key = (min(i, j), max(i, j))
        if key in lookup and lookup[key] != label:
            raise ValueError(f"pair {key} assigned to two strata")
        lookup[key] = label
    edge_keys = set(zip(rows.tolist(), cols.tolist()))
    stray = [k for k in lookup if k not in edge_keys]
    if stray:
        raise ValueError(f"stratum entries refer to absent edges, e.g. {stray[0]}")
    groups: dict[Hashable, list[int]] = {}
    for e, key in enumerate(zip(rows.tolist(), cols.tolist())):
        if key not in lookup:
            raise ValueError(f"edge {key} has no stratum")
        groups.setdefault(lookup[key], []).append(e)
    return [np.asarray(g) for g in groups.values()]


def sign_permutation_test(
    A: SignedAdjacency,
    num_perms: int,
    strata: Mapping[tuple[int, int], Hashable] | None = None,
    seed: int = 0,
) -> PermutationTestResult:
    """One-sided permutation test for an excess of balanced triangles.

    The edge positions are held fixed and the observed signs are shuffled
    across them (within each stratum when ``strata`` maps every edge to a
    label). The statistic is the balanced-triangle fraction, and the p-value
    carries the usual +1 correction, so it never drops below 1/(1+num_perms).
    """
    if num_perms < 1:
        raise ValueError("num_perms must be at least 1")
    triangles, signs = triangle_edge_index(A)
    if triangles.shape[0] == 0:
        raise ValueError("network has no closed triangles")
    groups = [np.arange(signs.size)] if strata is None else _strata_groups(A, strata)

    def balanced_count(s: np.ndarray) -> np.ndarray:
        prod = s[..., triangles[:, 0]] * s[..., triangles[:, 1]] * s[..., triangles[:, 2]]
        return np.count_nonzero(prod > 0, axis=-1)

    observed = int(balanced_count(signs))
    rng = np.random.default_rng(seed)
    chunk = max(1, min(num_perms, 20_000_000 // max(triangles.shape[0], signs.size)))
    exceed = 0
    done = 0
    while done < num_perms:
        size = min(chunk, num_perms - done)
        draws = np.tile(signs, (size, 1))
        for g in groups:
            draws[:, g] = rng.permuted(draws[:, g], axis=1)
        exceed += int(np.count_nonzero(balanced_count(draws) >= observed))
        done += size
    return PermutationTestResult((1 + exceed) / (1 + num_perms), observed / triangles.shape[0])
