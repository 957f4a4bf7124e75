import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_census, exhaustive_perm_pvalue, random_signed
from signed_balance.graph import (
    SignedAdjacency,
    from_edge_list,
    sign_permutation_test,
    triangle_census,
    triangle_edge_index,
)


@st.composite
def signed_graphs(draw, max_n=12):
    n = draw(st.integers(0, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    density = draw(st.floats(0, 1))
    rng = np.random.default_rng(seed)
    return random_signed(n, density, draw(st.floats(0, 1)), rng)


class TestSignedAdjacency:
    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError, match="symmetric"):
            SignedAdjacency(np.array([[0, 1], [0, 0]]))

    def test_rejects_self_loop(self):
        with pytest.raises(ValueError, match="diagonal"):
            SignedAdjacency(np.array([[1, 0], [0, 0]]))

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError, match="entries"):
            SignedAdjacency(np.array([[0, 2], [2, 0]]))

    def test_is_read_only(self):
        A = SignedAdjacency(np.zeros((3, 3)))
        with pytest.raises(ValueError):
            A.entries[0, 1] = 1

    def test_summaries(self):
        A = from_edge_list([(0, 1, 1), (1, 2, -1), (0, 2, 1)], 4)
        assert A.num_edges == 3
        assert A.density() == pytest.approx(3 / 6)
        assert A.positive_fraction() == pytest.approx(2 / 3)


class TestFromEdgeList:
    def test_empty(self):
        assert not from_edge_list([], 3).entries.any()

    def test_symmetric(self):
        A = from_edge_list([(0, 1, 1)], 2)
        assert A.entries[0, 1] == A.entries[1, 0] == 1

    def test_conflicting_duplicate(self):
        with pytest.raises(ValueError, match="conflicting"):
            from_edge_list([(0, 1, 1), (1, 0, -1)], 2)

    def test_consistent_duplicate_is_fine(self):
        assert from_edge_list([(0, 1, -1), (1, 0, -1)], 2).num_edges == 1

    @pytest.mark.parametrize("edge", [(0, 0, 1), (0, 5, 1), (0, 1, 0)])
    def test_contract_errors(self, edge):
        with pytest.raises(ValueError):
            from_edge_list([edge], 3)


class TestCensus:
    def test_all_positive_triangle(self):
        c = triangle_census(from_edge_list([(0, 1, 1), (1, 2, 1), (0, 2, 1)], 3))
        assert (c.count_ppp, c.balanced_fraction) == (1, 1.0)

    def test_two_plus_one_minus(self):
        c = triangle_census(from_edge_list([(0, 1, 1), (1, 2, 1), (0, 2, -1)], 3))
        assert c.count_ppm == 1 and c.unbalanced == 1 and c.balanced == 0

    def test_matches_brute_force(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            a = random_signed(int(rng.integers(3, 30)), rng.random(), rng.random(), rng)
            c = triangle_census(SignedAdjacency(a))
            assert (c.count_ppp, c.count_pmm, c.count_ppm, c.count_mmm) == brute_census(a)

    @given(signed_graphs(), st.randoms(use_true_random=False))
    @settings(max_examples=60, deadline=None)
    def test_invariant_under_relabelling(self, a, rnd):
        A = SignedAdjacency(a)
        perm = list(range(A.n))
        rnd.shuffle(perm)
        assert triangle_census(A) == triangle_census(A.permuted(np.array(perm, dtype=int)))

    @given(signed_graphs())
    @settings(max_examples=60, deadline=None)
    def test_total_counts_closed_triples(self, a):
        c = triangle_census(SignedAdjacency(a))
        closed = sum(brute_census(a))
        assert c.total == closed
        tris, _ = triangle_edge_index(SignedAdjacency(a))
        assert tris.shape[0] == closed


class TestPermutationTest:
    def test_all_positive_gives_one(self):
        a = np.ones((6, 6), dtype=int) - np.eye(6, dtype=int)
        res = sign_permutation_test(SignedAdjacency(a), 50, seed=1)
        assert res.p_value == 1.0 and res.observed_stat == 1.0

    def test_deterministic(self):
        a = random_signed(15, 0.6, 0.5, np.random.default_rng(2))
        A = SignedAdjacency(a)
        assert sign_permutation_test(A, 300, seed=7) == sign_permutation_test(A, 300, seed=7)

    def test_p_value_range(self):
        a = random_signed(15, 0.6, 0.5, np.random.default_rng(3))
        res = sign_permutation_test(SignedAdjacency(a), 40, seed=0)
        assert 1 / 41 <= res.p_value <= 1

    @pytest.mark.parametrize("minus_edge", [(0, 1), (0, 2)])
    def test_matches_exhaustive_oracle(self, minus_edge):
        # K4 minus the edge (2, 3): two triangles sharing the edge (0, 1)
        edges = [(0, 1), (0, 2), (1, 2), (0, 3), (1, 3)]
        A = from_edge_list([(i, j, -1 if (i, j) == minus_edge else 1) for i, j in edges], 4)
        exact = exhaustive_perm_pvalue(A.entries.astype(int))
        assert exact in (pytest.approx(0.8), pytest.approx(1.0))
        num = 20_000
        res = sign_permutation_test(A, num, seed=11)
        se = np.sqrt(exact * (1 - exact) / num)
        assert abs(res.p_value - exact) <= 4 * se + 1 / (1 + num)

    def test_strata_confine_shuffles(self):
        a = random_signed(12, 0.7, 0.5, np.random.default_rng(4))
        A = SignedAdjacency(a)
        rows, cols, signs = A.edges()
        # one stratum per sign: every shuffle reproduces the observed signs
        strata = {(int(i), int(j)): int(s) for i, j, s in zip(rows, cols, signs)}
        assert sign_permutation_test(A, 100, strata=strata).p_value == 1.0

    def test_strata_must_cover_edges(self):
        A = from_edge_list([(0, 1, 1), (1, 2, 1), (0, 2, -1)], 3)
        with pytest.raises(ValueError, match="no stratum"):
            sign_permutation_test(A, 10, strata={(0, 1): "a"})
        with pytest.raises(ValueError, match="absent"):
            sign_permutation_test(A, 10, strata={(0, 1): "a", (1, 2): "a", (0, 2): "a", (0, 0): "b"})

    def test_contract_errors(self):
        A = from_edge_list([(0, 1, 1), (1, 2, 1), (0, 2, -1)], 3)
        with pytest.raises(ValueError):
            sign_permutation_test(A, 0)
        with pytest.raises(ValueError, match="triangles"):
            sign_permutation_test(from_edge_list([(0, 1, 1)], 3), 10)
