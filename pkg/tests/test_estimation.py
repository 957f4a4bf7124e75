import warnings
from dataclasses import replace

import numpy as np
import pytest

from oracles import grid_procrustes, normal_equations, random_orthogonal, rel_err
from signed_balance.estimation import (
    FitConfig,
    RandomInit,
    WarmInit,
    fit_joint,
    fit_separate_edges,
    fit_separate_signs,
    init_edges_usvt,
    init_signs_usvt,
    one_step_joint,
    regress_polar,
    select_lambda_cv,
    usvt,
)
from signed_balance.experiments import SimConfig, make_ground_truth
from signed_balance.graph import SignedAdjacency
from signed_balance.model import ExplicitPolar, LatentParams, build_eta, build_theta, sample_network
from signed_balance.objective import grad_edges, procrustes_distance, relative_errors, sign_distance


def simulate(n, k=2, seed=0, **kw):
    truth = make_ground_truth(SimConfig(n=n, k=k, seed=seed, reps=1, **kw))
    return truth, sample_network(build_theta(truth.alpha, truth.Z), build_eta(truth), seed=seed + 1000)


@pytest.fixture(scope="module")
def mid_instance():
    truth, A = simulate(500, seed=3)
    cfg = FitConfig(k=2)
    return truth, A, cfg, fit_separate_edges(A, cfg), fit_separate_signs(A, cfg)


class TestConfig:
    def test_validation(self):
        for bad in ({"k": 0}, {"lam": 1.5}, {"tau": 0}, {"tol": 0}, {"max_iter": 0}, {"init": "spectral"}):
            with pytest.raises(ValueError):
                FitConfig(**bad)

    def test_json_round_trip(self):
        cfg = FitConfig(k=3, lam=0.25, init=RandomInit(0.5), seed=9)
        d = cfg.to_dict()
        assert d["lambda"] == 0.25
        assert FitConfig.from_dict(d) == cfg

    def test_unknown_field(self):
        with pytest.raises(ValueError, match="unknown"):
            FitConfig.from_dict({"k": 2, "steps": 3})


class TestUSVT:
    def test_exact_low_rank_survives(self):
        rng = np.random.default_rng(0)
        U = np.linalg.qr(rng.standard_normal((40, 3)))[0]
        P = (U * np.array([9.0, 6.0, 4.0])) @ U.T
        np.testing.assert_allclose(usvt(P, 3.0), P, atol=1e-10)
        np.testing.assert_allclose(usvt(P, 5.0), (U[:, :2] * np.array([9.0, 6.0])) @ U[:, :2].T, atol=1e-10)

    def test_complete_graph_gives_flat_positions(self):
        A = SignedAdjacency(np.ones((12, 12), dtype=int) - np.eye(12, dtype=int))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            alpha0, Z0, flags = init_edges_usvt(A, 2)
        assert flags["missing_dims"] == 2
        assert np.all(np.linalg.norm(Z0, axis=0) < 1e-2)
        assert np.ptp(alpha0) < 1e-8

    def test_init_beats_nothing_but_loses_to_fit(self, mid_instance):
        truth, A, cfg, edges, signs = mid_instance
        alpha0, Z0, _ = init_edges_usvt(A, 2)
        v0, _ = init_signs_usvt(A)
        init = relative_errors(LatentParams(alpha0, Z0, ExplicitPolar(v0)), truth)
        fit = relative_errors(LatentParams(edges.params.alpha, edges.params.Z, signs.params.polar), truth)
        assert init["err_Theta"] < 1 and fit["err_Theta"] < init["err_Theta"]
        assert init["err_v"] < 1 and fit["err_v"] < init["err_v"]

    def test_all_positive_signs_share_a_sign(self):
        n = 30
        A = sample_network(np.full((n, n), 1e6), np.full((n, n), 1e6), seed=0)
        v0, _ = init_signs_usvt(A)
        assert np.all(v0 > 0) or np.all(v0 < 0)

    def test_empty_network(self):
        with pytest.raises(ValueError, match="no observed edges"):
            init_signs_usvt(SignedAdjacency(np.zeros((5, 5))))


class TestSeparate:
    def test_objective_decreases(self, mid_instance):
        _, _, _, edges, signs = mid_instance
        for fit in (edges, signs):
            assert fit.converged
            assert np.all(np.diff(fit.objective_trace) <= 1e-8 * np.abs(fit.objective_trace[:-1]))
            assert fit.iterations == fit.grad_norm_trace.size == fit.objective_trace.size - 1

    def test_diagnostics(self, mid_instance):
        _, _, _, edges, _ = mid_instance
        d = edges.diagnostics
        assert np.isfinite(d["condition_number_Z"]) and d["grad_norm_Z"] >= 0 and d["grad_norm_alpha"] >= 0

    def test_iterates_feasible(self, mid_instance):
        _, _, _, edges, signs = mid_instance
        b = edges.diagnostics["bounds"]
        assert np.max(np.abs(edges.params.alpha)) <= b["M1"] / 4
        assert np.max(np.sum(edges.params.Z**2, axis=1)) <= b["M1"] / 2 * (1 + 1e-12)
        assert edges.params.is_centered()
        assert np.max(signs.params.v**2) <= signs.diagnostics["bounds"]["M3"]

    def test_permutation_equivariance(self):
        _, A = simulate(60, seed=5)
        perm = np.random.default_rng(0).permutation(60)
        # a shared warm start removes any dependence of the start on node order
        start = fit_separate_edges(A, FitConfig(max_iter=1)).params
        cfg = FitConfig(max_iter=300)
        plain = fit_separate_edges(A, replace(cfg, init=WarmInit(start))).params
        warm = WarmInit(LatentParams(start.alpha[perm], start.Z[perm]))
        moved = fit_separate_edges(A.permuted(perm), replace(cfg, init=warm)).params
        np.testing.assert_allclose(moved.alpha, plain.alpha[perm], atol=1e-9)
        np.testing.assert_allclose(moved.Z, plain.Z[perm], atol=1e-9)

    def test_deterministic(self):
        _, A = simulate(80, seed=6)
        r1, r2 = fit_separate_edges(A, FitConfig()), fit_separate_edges(A, FitConfig())
        assert np.array_equal(r1.params.Z, r2.params.Z)
        assert np.array_equal(r1.objective_trace, r2.objective_trace)

    def test_identifiability_of_errors(self, mid_instance):
        truth, _, _, edges, _ = mid_instance
        O = random_orthogonal(2, np.random.default_rng(1))
        rotated = LatentParams(truth.alpha, truth.Z @ O, truth.polar.__class__(O.T @ truth.polar.w, truth.polar.gamma))
        est = LatentParams(edges.params.alpha, edges.params.Z, ExplicitPolar(truth.v))
        assert relative_errors(est, truth)["err_Z"] == pytest.approx(relative_errors(est, rotated)["err_Z"], abs=1e-12)

    def test_sign_flip_orbit(self):
        _, A = simulate(80, seed=7)
        v0, _ = init_signs_usvt(A)
        cfg = FitConfig()
        up = fit_separate_signs(A, replace(cfg, init=WarmInit(LatentParams(None, None, ExplicitPolar(v0)))))
        down = fit_separate_signs(A, replace(cfg, init=WarmInit(LatentParams(None, None, ExplicitPolar(-v0)))))
        np.testing.assert_allclose(up.params.v, -down.params.v, atol=1e-12)

    def test_dense_positive_signs_share_a_sign(self):
        n = 40
        A = sample_network(np.full((n, n), 3.0), np.full((n, n), 1e6), seed=2)
        v = fit_separate_signs(A, FitConfig()).params.v
        assert np.all(v > 0) or np.all(v < 0)

    def test_random_init_reaches_similar_error(self, mid_instance):
        truth, A, cfg, edges, _ = mid_instance
        rand = fit_separate_edges(A, replace(cfg, init=RandomInit(1.0), seed=4))
        e_usvt = procrustes_distance(edges.params.Z, truth.Z)[0]
        e_rand = procrustes_distance(rand.params.Z, truth.Z)[0]
        assert e_rand < 1.2 * e_usvt
        assert rand.iterations >= 1

    def test_empty_network_signs(self):
        with pytest.raises(ValueError):
            fit_separate_signs(SignedAdjacency(np.zeros((6, 6))), FitConfig())


class TestRegressPolar:
    def test_exact_model(self):
        rng = np.random.default_rng(0)
        Z, w0 = rng.standard_normal((20, 3)), rng.standard_normal(3)
        w, g = regress_polar(Z, Z @ w0 + 0.7)
        np.testing.assert_allclose(w, w0, atol=1e-10)
        assert g == pytest.approx(0.7, abs=1e-10)

    def test_constant_target(self):
        Z = np.random.default_rng(1).standard_normal((15, 2))
        Z -= Z.mean(axis=0)
        w, g = regress_polar(Z, np.full(15, 2.5))
        np.testing.assert_allclose(w, 0, atol=1e-12)
        assert g == pytest.approx(2.5)

    def test_normal_equations_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            Z, y = rng.standard_normal((30, 2)), rng.standard_normal(30)
            w, g = regress_polar(Z, y)
            w_ref, g_ref = normal_equations(Z, y)
            np.testing.assert_allclose(w, w_ref, atol=1e-8)
            assert g == pytest.approx(g_ref, abs=1e-8)

    def test_rank_deficient_warns(self):
        Z = np.zeros((10, 2))
        with pytest.warns(UserWarning, match="rank deficient"):
            w, g = regress_polar(Z, np.ones(10))
        assert np.all(w == 0) and g == pytest.approx(1.0)


class TestJoint:
    def test_lambda_zero_reproduces_edges_trajectory(self):
        _, A = simulate(100, seed=8)
        cfg = FitConfig(lam=0.0, max_iter=50)
        start = fit_separate_edges(A, replace(cfg, max_iter=1)).params
        warm = replace(cfg, init=WarmInit(start.with_polar(ExplicitPolar(np.ones(100)))))
        sep = fit_separate_edges(A, warm)
        joint = fit_joint(A, warm)
        np.testing.assert_allclose(joint.params.Z, sep.params.Z, atol=1e-12)
        np.testing.assert_allclose(joint.params.alpha, sep.params.alpha, atol=1e-12)
        np.testing.assert_allclose(joint.objective_trace, sep.objective_trace, rtol=1e-12)

    def test_improves_on_separate(self, mid_instance):
        truth, A, cfg, edges, signs = mid_instance
        sep = LatentParams(edges.params.alpha, edges.params.Z, signs.params.polar)
        joint = fit_joint(A, replace(cfg, init=WarmInit(sep)))
        e_sep, e_joint = relative_errors(sep, truth), relative_errors(joint.params, truth)
        assert e_joint["err_v"] < e_sep["err_v"]
        assert e_joint["err_Z"] < e_sep["err_Z"] + 0.005
        assert np.all(np.diff(joint.objective_trace) <= 1e-8 * np.abs(joint.objective_trace[:-1]))
        v = joint.params.v
        assert np.max(v**2) <= joint.diagnostics["bounds"]["M3"] * (1 + 1e-12)

    def test_deterministic(self):
        _, A = simulate(80, seed=9)
        r1, r2 = fit_joint(A, FitConfig()), fit_joint(A, FitConfig())
        assert np.array_equal(r1.params.Z, r2.params.Z)
        assert np.array_equal(r1.params.polar.w, r2.params.polar.w)
        assert r1.params.polar.gamma == r2.params.polar.gamma


class TestOneStep:
    def test_lambda_zero_is_one_gradient_step(self):
        rng = np.random.default_rng(0)
        _, A = simulate(40, seed=10)
        alpha, Z, v = rng.standard_normal(40) * 0.1, rng.standard_normal((40, 2)), rng.standard_normal(40)
        Z_hat, _, _, _ = one_step_joint(A, alpha, Z, v, 0.0, 0.01)
        step = Z - 0.01 * grad_edges(A, alpha, Z).g_Z
        np.testing.assert_allclose(Z_hat, step - step.mean(axis=0), atol=1e-12)

    def test_zero_step_just_centres(self):
        rng = np.random.default_rng(1)
        _, A = simulate(30, seed=11)
        Z = rng.standard_normal((30, 2)) + 3
        Z_hat, v_bar, w, g = one_step_joint(A, np.zeros(30), Z, rng.standard_normal(30), 0.5, 0.0)
        np.testing.assert_allclose(Z_hat, Z - Z.mean(axis=0), atol=1e-12)
        np.testing.assert_allclose(v_bar, Z @ w + g)

    def test_dimension_mismatch(self):
        _, A = simulate(30, seed=12)
        with pytest.raises(ValueError):
            one_step_joint(A, np.zeros(30), np.zeros((30, 2)), np.zeros(29), 0.5, 0.1)


class TestLambdaCV:
    def test_singleton(self):
        _, A = simulate(30, seed=13)
        assert select_lambda_cv(A, [0.5], FitConfig()) == 0.5

    def test_duplicates_tie_to_smaller(self):
        _, A = simulate(30, seed=13)
        assert select_lambda_cv(A, [0.7, 0.7], FitConfig()) == 0.7

    def test_contract(self):
        _, A = simulate(30, seed=13)
        with pytest.raises(ValueError):
            select_lambda_cv(A, [], FitConfig())
        with pytest.raises(ValueError):
            select_lambda_cv(A, [0.1, 0.5], FitConfig(), mask_fraction=1.0)

    def test_strong_signs_prefer_positive_lambda(self):
        picks = []
        for rep in range(20):
            _, A = simulate(60, seed=100 + rep, w_scale=3.0)
            picks.append(select_lambda_cv(A, [0.0, 0.5], FitConfig(max_iter=400), folds=2, seed=rep))
        assert np.mean(np.array(picks) > 0) >= 0.8


def test_grid_oracle_agrees_on_fitted_embedding(mid_instance):
    truth, _, _, edges, _ = mid_instance
    d = procrustes_distance(edges.params.Z, truth.Z)[0]
    assert abs(d - grid_procrustes(edges.params.Z, truth.Z)) < 1e-4 * max(1.0, d)


def test_sign_distance_of_fit(mid_instance):
    truth, _, _, _, signs = mid_instance
    d, _ = sign_distance(signs.params.v, truth.v)
    assert d / np.linalg.norm(truth.v) < 0.5
    assert rel_err(signs.params.v, signs.params.v) == 0
