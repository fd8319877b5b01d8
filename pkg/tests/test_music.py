import math

import numpy as np
import pytest

from tagtrack.geometry import ScenePose, aoa_from_positions, steering_vector, unambiguous_fov
from tagtrack.music import (eig2_hermitian, estimate_aoa,
                            music_spectrum, sample_covariance)
from tagtrack.preprocess import IQWindow
from tagtrack.simulate import (PathSpec, SASSchedule, SimScene, anechoic_scene,
                               lab_scene, paper_geometry, simulate_window)

GEO = paper_geometry()
SCHED = SASSchedule()


def make_window(matrix, complete=True, idx=0):
    return IQWindow("t", idx, np.asarray(matrix, dtype=complex), 0.0, complete)


def noiseless_window(theta, n=50, gain=1.0):
    scene = SimScene(GEO, [("t", [PathSpec(gain, 0.0, is_los=True)])])
    return simulate_window(scene, SASSchedule(samples_per_window=2 * n), [theta], 0)[0]


class TestSampleCovariance:
    def test_all_ones(self):
        cov = sample_covariance(make_window([[1, 1], [1, 1]]))
        np.testing.assert_allclose(cov.matrix, [[1, 1], [1, 1]], atol=1e-15)
        assert cov.num_snapshots == 2

    def test_identity_pair(self):
        cov = sample_covariance(make_window([[1, 0], [0, 1]]))
        np.testing.assert_allclose(cov.matrix, 0.5 * np.eye(2), atol=1e-15)

    def test_offdiagonal_phase_at_15deg(self):
        w = noiseless_window(math.radians(15.0))
        cov = sample_covariance(w)
        assert np.angle(cov.matrix[0, 1]) == pytest.approx(-2.6018, abs=1e-3)

    def test_hermitian_psd_and_trace(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            y = rng.normal(size=(2, 20)) + 1j * rng.normal(size=(2, 20))
            cov = sample_covariance(make_window(y))
            r = cov.matrix
            assert abs(r[0, 1] - np.conj(r[1, 0])) < 1e-12 * np.abs(r).max()
            eig = eig2_hermitian(cov)
            assert eig.lam_n >= -1e-10 * np.trace(r).real
            # trace equals squared Frobenius norm over snapshot count
            assert np.trace(r).real == pytest.approx(
                np.linalg.norm(y) ** 2 / y.shape[1], rel=1e-9)

    def test_incomplete_window_rejected(self):
        w = make_window([[1, 1], [1, 1]], complete=False)
        with pytest.raises(ValueError):
            sample_covariance(w)


class TestEig2:
    def test_diagonal(self):
        eig = eig2_hermitian(np.diag([2.0, 1.0]).astype(complex))
        assert (eig.lam_s, eig.lam_n) == (2.0, 1.0)
        np.testing.assert_allclose(np.abs(eig.u_s), [1, 0], atol=1e-15)
        np.testing.assert_allclose(np.abs(eig.u_n), [0, 1], atol=1e-15)

    def test_rank_one_ones(self):
        eig = eig2_hermitian(np.ones((2, 2), dtype=complex))
        assert eig.lam_s == pytest.approx(2.0)
        assert eig.lam_n == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(np.abs(eig.u_s), [1 / math.sqrt(2)] * 2, atol=1e-12)

    def test_scaling_invariance(self):
        rng = np.random.default_rng(2)
        y = rng.normal(size=(2, 8)) + 1j * rng.normal(size=(2, 8))
        r = y @ y.conj().T / 8
        e1 = eig2_hermitian(r)
        e2 = eig2_hermitian(3.5 * r)
        assert e2.lam_s == pytest.approx(3.5 * e1.lam_s, rel=1e-12)
        assert e2.lam_n == pytest.approx(3.5 * e1.lam_n, rel=1e-12)
        # eigvecs equal up to phase
        assert abs(abs(np.vdot(e1.u_s, e2.u_s)) - 1) < 1e-12

    def test_eigen_equation_and_orthogonality(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            y = rng.normal(size=(2, 6)) + 1j * rng.normal(size=(2, 6))
            r = y @ y.conj().T / 6
            eig = eig2_hermitian(r)
            np.testing.assert_allclose(r @ eig.u_s, eig.lam_s * eig.u_s, atol=1e-9)
            np.testing.assert_allclose(r @ eig.u_n, eig.lam_n * eig.u_n, atol=1e-9)
            assert abs(np.vdot(eig.u_s, eig.u_n)) <= 1e-12
            assert np.linalg.norm(eig.u_s) == pytest.approx(1.0, abs=1e-12)
            recon = eig.lam_s * np.outer(eig.u_s, eig.u_s.conj()) \
                + eig.lam_n * np.outer(eig.u_n, eig.u_n.conj())
            assert np.linalg.norm(recon - r) <= 1e-9 * np.linalg.norm(r)

    def test_non_hermitian_rejected(self):
        with pytest.raises(ValueError):
            eig2_hermitian(np.array([[1.0, 1.0], [0.0, 1.0]], dtype=complex))


class TestSpectrum:
    def test_noiseless_peak_hits_clamp(self):
        w = noiseless_window(math.radians(7.0))
        eig = eig2_hermitian(sample_covariance(w))
        peak = music_spectrum(math.radians(7.0), eig.u_n, GEO)
        assert peak >= 1e12

    def test_unit_steering_noise_vector(self):
        # u_n aligned with the (normalized) steering vector: denominator is
        # |a|^2 = 2, so the spectrum is 0.5 by direct evaluation
        theta = math.radians(5.0)
        a = steering_vector(theta, GEO)
        u_n = a / np.linalg.norm(a)
        assert music_spectrum(theta, u_n, GEO) == pytest.approx(0.5, rel=1e-12)

    def test_alias_identity(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            y = rng.normal(size=(2, 10)) + 1j * rng.normal(size=(2, 10))
            eig = eig2_hermitian(sample_covariance(make_window(y)))
            theta = rng.uniform(-0.2, 0.2)
            alias = math.asin(math.sin(theta) + 0.625)
            s1 = music_spectrum(theta, eig.u_n, GEO)
            s2 = music_spectrum(alias, eig.u_n, GEO)
            assert s2 == pytest.approx(s1, rel=1e-9)


class TestEstimateAoA:
    def test_noiseless_zero(self):
        m = estimate_aoa(noiseless_window(0.0), GEO)
        assert abs(math.degrees(m.theta_hat)) <= 0.01
        assert m.valid

    def test_noiseless_grid_exactness(self):
        for deg in np.arange(-18, 18.01, 0.5):
            m = estimate_aoa(noiseless_window(math.radians(deg)), GEO)
            assert abs(math.degrees(m.theta_hat) - deg) <= 0.01, deg

    def test_incomplete_window_invalid(self):
        w = noiseless_window(0.1)
        w.matrix[1] = np.nan
        w.complete = False
        m = estimate_aoa(w, GEO)
        assert not m.valid and math.isnan(m.theta_hat)

    def test_anechoic_tolerance(self):
        errs = []
        scene = anechoic_scene(GEO, 20.0)
        for s in range(100):
            w = simulate_window(scene, SCHED, [math.radians(15.0)], [30, s])[0]
            errs.append(abs(math.degrees(estimate_aoa(w, GEO).theta_hat) - 15.0))
        assert np.mean(errs) <= 1.5

    def test_lab_tolerance(self):
        errs = []
        for s in range(100):
            rng = np.random.default_rng([31, s])
            scene = lab_scene(GEO, 20.0, rng)
            w = simulate_window(scene, SCHED, [math.radians(15.0)], [32, s])[0]
            errs.append(abs(math.degrees(estimate_aoa(w, GEO).theta_hat) - 15.0))
        assert np.mean(errs) <= 4.5

    def test_gain_invariance(self):
        rng = np.random.default_rng(5)
        scene = anechoic_scene(GEO, 15.0)
        for s in range(10):
            w = simulate_window(scene, SCHED, [0.15], [33, s])[0]
            c = (rng.normal() + 1j * rng.normal()) or 1.0
            scaled = make_window(c * w.matrix)
            t1 = estimate_aoa(w, GEO).theta_hat
            t2 = estimate_aoa(scaled, GEO).theta_hat
            assert abs(math.degrees(t1 - t2)) <= 1e-4

    def test_search_range_validation(self):
        w = noiseless_window(0.0)
        with pytest.raises(ValueError):
            estimate_aoa(w, GEO, search=(0.2, 0.1))
        with pytest.raises(ValueError):
            estimate_aoa(w, GEO, search=(-1.0, 1.0))  # outside the FOV

    def test_brute_force_oracle(self):
        # golden-section refinement agrees with an exhaustive 0.001-degree
        # grid argmax within 0.02 degrees
        fine = np.radians(np.arange(-18, 18.0001, 0.001))
        for s in range(15):
            rng = np.random.default_rng([34, s])
            scene = lab_scene(GEO, 10.0, rng)
            w = simulate_window(scene, SCHED, [rng.uniform(-0.25, 0.25)], [35, s])[0]
            eig = eig2_hermitian(sample_covariance(w))
            sp = music_spectrum(fine, eig.u_n, GEO)
            brute = fine[int(np.argmax(sp))]
            m = estimate_aoa(w, GEO)
            assert abs(math.degrees(m.theta_hat - brute)) <= 0.02

    def test_two_tag_independence(self):
        errs = {"-15": [], "-10": []}
        for s in range(100):
            scene = anechoic_scene(GEO, 20.0, tag_ids=("A", "B"))
            ws = simulate_window(scene, SCHED,
                                 [math.radians(-15.0), math.radians(-10.0)], [36, s])
            errs["-15"].append(abs(math.degrees(estimate_aoa(ws[0], GEO).theta_hat) + 15))
            errs["-10"].append(abs(math.degrees(estimate_aoa(ws[1], GEO).theta_hat) + 10))
        assert np.mean(errs["-15"]) <= 1.5
        assert np.mean(errs["-10"]) <= 1.5

    def test_residual_phase_compensation(self):
        # with the residual carrier phase on, dividing out the known transmit
        # sequence restores the noiseless estimate
        sched = SASSchedule(sample_period_s=2.5037e-4, residual_phase=True)
        scene = SimScene(GEO, [("t", [PathSpec(1.0, 0.0, is_los=True)])])
        theta = math.radians(9.0)
        w = simulate_window(scene, sched, [theta], 0)[0]
        tx = np.vstack([sched.tx_sequence(0, m, 1, GEO.carrier_freq_hz) for m in (1, 2)])
        m = estimate_aoa(w, GEO, tx_sequence=tx)
        assert abs(math.degrees(m.theta_hat) - 9.0) <= 0.01

    def test_consistency_with_positions(self):
        # a tag simulated at a pose is recovered at aoa_from_positions(pose)
        pose = ScenePose((0.0, 0.0), (0.8, 3.0))
        theta = aoa_from_positions(pose)
        assert abs(theta) < unambiguous_fov(GEO)
        w = noiseless_window(theta)
        m = estimate_aoa(w, GEO)
        assert abs(math.degrees(m.theta_hat - theta)) <= 0.01

    def test_snr_monotonicity(self):
        # RMSE is non-increasing in per-sample SNR, 200 trials per point
        rmse = []
        for snr in (0.0, 10.0, 20.0, 30.0):
            scene = anechoic_scene(GEO, snr)
            sq = []
            for s in range(200):
                w = simulate_window(scene, SCHED, [math.radians(15.0)], [37, int(snr), s])[0]
                sq.append((math.degrees(estimate_aoa(w, GEO).theta_hat) - 15.0) ** 2)
            rmse.append(math.sqrt(np.mean(sq)))
        assert all(hi >= lo for hi, lo in zip(rmse[:-1], rmse[1:]))
