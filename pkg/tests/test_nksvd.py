import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectral_dl.atoms import grad_hess_theta, objective_S
from spectral_dl.diagnostics import assert_lemma1
from spectral_dl.errors import DegenerateResultError, InvalidArgumentError
from spectral_dl.metrics import beta
from spectral_dl.nksvd import NKSVDParams, initialize, objective, run
from spectral_dl.signal_model import (
    TWO_PI,
    SensingOperator,
    generate_scenario,
    psnr_to_sigma,
    sensed_atoms,
    steering_vector,
)
from spectral_dl.sparse_coding import SparseCode

import oracles


def noisy_run(seed, n=64, m=32, k=3, psnr=20.0, t=1, **kw):
    sc, obs = generate_scenario(n, m, t, k, psnr_to_sigma(psnr), 4 * math.pi / n, seed=seed)
    return sc, run(obs, NKSVDParams(eps=math.sqrt(m) * sc.noise_sigma, **kw))


class TestInitialize:
    def test_grid(self):
        d = initialize(4, 4, SensingOperator.identity(4))
        np.testing.assert_allclose(d.frequencies, [0, math.pi / 2, math.pi, 3 * math.pi / 2], atol=1e-15)

    def test_identity_norms(self):
        d = initialize(16, 16)
        np.testing.assert_allclose(np.linalg.norm(d.atoms, axis=0), 1.0, atol=1e-14)

    def test_subsampled_norms(self):
        op = SensingOperator.random_subsample(32, 12, np.random.default_rng(0))
        d = initialize(32, 40, op)
        np.testing.assert_allclose(np.linalg.norm(d.atoms, axis=0), math.sqrt(12 / 32), atol=1e-14)

    def test_columns_match_steering(self):
        op = SensingOperator.random_subsample(16, 9, np.random.default_rng(3))
        d = initialize(16, 7, op)
        for j, th in enumerate(d.frequencies):
            np.testing.assert_allclose(d.atoms[:, j], oracles.steering(th, 16, op.rows), atol=1e-14)

    def test_bad_r(self):
        with pytest.raises(InvalidArgumentError):
            initialize(4, 0)


class TestObjective:
    def test_zero_code(self):
        y = np.arange(12).reshape(4, 3) + 1j
        assert objective(y, initialize(4, 4), np.zeros((4, 3))) == pytest.approx(np.linalg.norm(y) ** 2)

    def test_exact(self):
        d = initialize(8, 8)
        x = np.zeros((8, 2), complex)
        x[3] = [1, 2j]
        assert objective(d.atoms @ x, d, x) < 1e-28

    @given(st.integers(0, 2**32 - 1))
    def test_column_sum_oracle(self, seed):
        rng = np.random.default_rng(seed)
        d = initialize(10, 6)
        t = 3
        y = rng.standard_normal((10, t)) + 1j * rng.standard_normal((10, t))
        supports = [sorted(rng.choice(6, size=int(rng.integers(0, 4)), replace=False).tolist()) for _ in range(t)]
        coeffs = [rng.standard_normal(len(s)) + 1j * rng.standard_normal(len(s)) for s in supports]
        code = SparseCode(6, supports, coeffs)
        want = 0.0
        for c in range(t):
            r = list(y[:, c])
            for k, v in zip(supports[c], coeffs[c]):
                a = oracles.steering(d.frequencies[k], 10)
                r = [r[i] - a[i] * v for i in range(10)]
            want += sum(abs(z) ** 2 for z in r)
        assert objective(y, d, code) == pytest.approx(want, rel=1e-12)


class TestRunExamples:
    def test_on_grid_noise_free(self):
        n = 16
        th = 5 * TWO_PI / n
        res = run(steering_vector(th, n) * (3 + 1j), NKSVDParams(eps=1e-9))
        assert res.k_hat == 1
        assert abs(res.frequencies[0] - th) < 1e-9
        assert res.stop_reason == "tol"
        assert res.trace.iterations == 2

    @pytest.mark.parametrize("offset", [0.5, 0.23, 0.91])
    def test_off_grid_noise_free(self, offset):
        n = 16
        th = (3 + offset) * TWO_PI / n
        y = steering_vector(th, n)[:, None] * (2 - 1j)
        oracle = oracles.global_single_atom_minimizer(y, range(n), n)
        res = run(y, NKSVDParams(eps=1e-9))
        assert res.k_hat == 1
        assert oracles.wrap_distance_shifts(res.frequencies[0], oracle) < 1e-6
        assert abs(res.frequencies[0] - th) < 1e-6
        assert res.trace.iterations <= 30

    def test_subsampled_off_grid(self):
        n = 32
        op = SensingOperator.random_subsample(n, 14, np.random.default_rng(2))
        th = 11.37 * TWO_PI / n
        y = sensed_atoms([th], op) * (1.5 + 0.5j)
        res = run(y, NKSVDParams(eps=1e-9), sensing=op)
        assert res.k_hat == 1 and abs(res.frequencies[0] - th) < 1e-6

    def test_mmv_two_sources(self):
        n = 32
        thetas = [1.0, 1.0 + 3 * TWO_PI / n]
        rng = np.random.default_rng(0)
        s = 5 * np.exp(1j * rng.uniform(0, TWO_PI, (2, 4)))
        y = sensed_atoms(thetas, SensingOperator.identity(n)) @ s
        res = run(y, NKSVDParams(eps=1e-8))
        assert res.k_hat == 2
        assert beta(thetas, res.frequencies) < 1e-14

    @pytest.mark.slow
    def test_full_aperture_40db(self):
        good = 0
        for seed in range(100):
            sc, res = noisy_run(seed, m=64, psnr=40.0)
            good += res.k_hat == 3 and beta(sc.frequencies, res.frequencies) < 1e-6
        assert good >= 95


class TestRunErrors:
    def test_bad_eps(self):
        with pytest.raises(InvalidArgumentError):
            run(np.ones(4), NKSVDParams(eps=0.0))

    def test_bad_margin(self):
        with pytest.raises(InvalidArgumentError):
            run(np.ones(4), NKSVDParams(eps=1.0, eps_margin=0.0))

    def test_sensing_mismatch(self):
        with pytest.raises(InvalidArgumentError):
            run(np.ones(4), NKSVDParams(eps=1.0), sensing=SensingOperator.identity(5))

    def test_all_pruned(self):
        # eps above the data norm leaves every column with an empty code
        with pytest.raises(DegenerateResultError):
            run(np.ones(8) * 0.01, NKSVDParams(eps=1.0))

    def test_nonconvergence_reports_max_iter(self):
        _, res = noisy_run(0, max_iter=1, tol=1e-16)
        assert res.stop_reason == "max_iter" and res.trace.iterations == 1


class TestRunProperties:
    @pytest.mark.parametrize("seed", range(6))
    def test_atom_stage_monotone(self, seed):
        _, res = noisy_run(seed)
        for stage in res.trace.atom_stage_objectives:
            assert all(b <= a + 1e-9 for a, b in zip(stage, stage[1:]))

    @pytest.mark.parametrize("seed", range(4))
    def test_refine_records_decrease(self, seed):
        _, res = noisy_run(seed, psnr=15.0)
        rep = assert_lemma1(res.trace, floor=1e-6)
        assert rep["passed"], rep

    @pytest.mark.parametrize("seed", range(4))
    def test_residual_recomputes(self, seed):
        sc, res = noisy_run(seed, t=3)
        atoms = sensed_atoms(res.frequencies, sc.sensing)
        y = generate_scenario(64, 32, 3, 3, psnr_to_sigma(20.0), 4 * math.pi / 64, seed=seed)[1].y
        assert res.residual_fro == pytest.approx(np.linalg.norm(y - atoms @ res.gains), rel=1e-9)
        assert res.gains.shape == (res.k_hat, 3)
        assert len(res.frequencies) == res.k_hat
        assert np.all((res.frequencies >= 0) & (res.frequencies < TWO_PI))

    def test_deterministic(self):
        sc, obs = generate_scenario(64, 32, 2, 3, psnr_to_sigma(15.0), 4 * math.pi / 64, seed=11)
        p = NKSVDParams(eps=math.sqrt(32) * sc.noise_sigma)
        a, b = run(obs, p), run(obs, p)
        assert a.to_json() == b.to_json()
        assert a.frequencies.tobytes() == b.frequencies.tobytes()
        assert a.gains.tobytes() == b.gains.tobytes()

    def test_pruning_counts_consistent(self):
        _, res = noisy_run(3)
        tr = res.trace
        assert len(tr.pruned_counts) == len(tr.merged_counts) == len(tr.eliminated_counts) == tr.iterations
        assert all(c >= 0 for c in tr.pruned_counts + tr.merged_counts + tr.eliminated_counts)
        # every gain row of a survivor is used by some column
        assert np.all(np.any(res.gains != 0, axis=1))

    @settings(max_examples=15)
    @given(st.floats(0.0, 1.0, exclude_max=True), st.integers(8, 32), st.integers(1, 3))
    def test_stationary_at_tol_stop(self, frac, n, t):
        th = (2 + frac) * TWO_PI / n
        rng = np.random.default_rng(n * 7 + t)
        s = np.exp(1j * rng.uniform(0, TWO_PI, (1, t))) * 4
        y = sensed_atoms([th], SensingOperator.identity(n)) @ s
        res = run(y, NKSVDParams(eps=1e-9))
        assert res.stop_reason == "tol" and res.k_hat == 1
        op = SensingOperator.identity(n)
        g, _ = grad_hess_theta(res.frequencies[0], res.gains[0], y, op)
        assert abs(g) <= 1e-4 * (1 + np.linalg.norm(y) ** 2)
        assert objective_S(res.frequencies[0], res.gains[0], y, op) < 1e-12
