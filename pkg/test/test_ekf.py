"""Test the error-state filter building blocks and a short run."""
import unittest
import logging
import numpy as np
import numpy.testing as nptest
from magcal.core import so3
from magcal.core.errors import ConfigError, DegenerateError, NonFiniteError
from magcal.core.ekf import (
    EkfConfig,
    CalibState,
    init_state,
    propagate,
    transition,
    process_noise,
    mag_jacobian,
    accel_jacobian,
    update_mag,
    update_accel,
    accel_valid,
    finalize,
    nis,
    anis_band,
    detect_motion_start,
    estimation_window,
    MagCalFilter,
    run,
    PSI,
    EPS,
    SMAT,
    HVEC,
    MVEC,
    GVEC,
)
from magcal.sensors.simulate import NoiseConfig, SimTruth, gen_trajectory, standard_profile, simulate

logging.basicConfig(level=logging.DEBUG)


def random_state(rng):
    """A plausible, non-trivial filter state."""
    return CalibState(
        C=so3.rotvec_to_dcm(rng.normal(size=3)),
        eps=rng.normal(scale=0.01, size=3),
        S=np.eye(3) + rng.normal(scale=0.1, size=(3, 3)),
        h=rng.normal(scale=0.5, size=3),
        m_i=rng.normal(size=3),
        g_i=np.array([0, 0, 9.8]) + rng.normal(scale=0.1, size=3),
        P=np.eye(24) * 1e-4,
    )


def perturbed(state, dx):
    """Truth x such that the error state of `state` relative to it is dx."""
    out = state.copy()
    out.C = so3.rotvec_to_dcm(dx[PSI]) @ state.C
    out.eps = state.eps - dx[EPS]
    out.S = state.S - so3.unvec(dx[SMAT])
    out.h = state.h - dx[HVEC]
    out.m_i = state.m_i - dx[MVEC]
    out.g_i = state.g_i - dx[GVEC]
    return out


def numeric_jacobian(state, predict, delta=1e-5):
    H = np.zeros((3, 24))
    for jj in range(24):
        dx = np.zeros(24)
        dx[jj] = delta
        H[:, jj] = (predict(perturbed(state, -dx)) - predict(perturbed(state, dx))) / (2 * delta)
    return H


class ConfigTest(unittest.TestCase):
    """Filter settings"""

    def test_defaults(self):
        cfg = EkfConfig()
        self.assertAlmostEqual(cfg.T_md, 0.03)
        self.assertAlmostEqual(cfg.noise.sigma_a, 0.09)
        self.assertAlmostEqual(cfg.noise.sigma_g, np.radians(0.01))
        self.assertAlmostEqual(cfg.g_local, 9.8)
        self.assertIsNone(cfg.S_init)
        self.assertIsNone(cfg.h_init)
        self.assertEqual(cfg.seed, "batch")
        self.assertTrue(cfg.use_accel)

    def test_from_dict(self):
        cfg = EkfConfig.from_dict(
            {"T_md": 0.05, "use_accel": False, "start": "auto", "noise": {"sigma_m": 0.01}}
        )
        self.assertAlmostEqual(cfg.noise.sigma_a, 0.15)
        self.assertAlmostEqual(cfg.noise.sigma_m, 0.01)
        self.assertFalse(cfg.use_accel)
        self.assertEqual(cfg.start, "auto")
        cfg = EkfConfig.from_dict({"noise": {"sigma_a": 0.2}})
        self.assertAlmostEqual(cfg.noise.sigma_a, 0.2)

    def test_invalid(self):
        self.assertRaises(ConfigError, EkfConfig.from_dict, {"Tmd": 0.03})
        self.assertRaises(ConfigError, EkfConfig, T_md=0.0)
        self.assertRaises(ConfigError, EkfConfig, init_std={"bias": 1.0})
        self.assertRaises(ConfigError, EkfConfig, S_init=np.eye(2))
        self.assertRaises(ConfigError, EkfConfig, h_init=[0.1, 0.2])
        self.assertRaises(ConfigError, EkfConfig, seed="ones")
        self.assertRaises(ConfigError, EkfConfig.from_dict, {"seed": "truth"})

    def test_copy(self):
        cfg = EkfConfig(T_md=0.04)
        S = np.diag([1.1, 0.9, 1.0])
        cfg2 = cfg.copy(S_init=S)
        nptest.assert_array_equal(cfg2.S_init, S)
        self.assertIsNone(cfg.S_init)
        self.assertEqual(cfg2.T_md, 0.04)
        cfg3 = cfg2.copy(h_init=[0.1, 0.0, -0.2], seed="identity")
        nptest.assert_array_equal(cfg3.S_init, S)
        nptest.assert_array_equal(cfg3.h_init, [0.1, 0.0, -0.2])
        self.assertEqual(cfg3.to_dict()["seed"], "identity")


class InitTest(unittest.TestCase):
    """Initial state"""

    def test_vectors(self):
        state = init_state(EkfConfig(), (0.6, -0.1, 0.8), (0, 0, -9.8))
        nptest.assert_array_equal(state.m_i, (0.6, -0.1, 0.8))
        nptest.assert_array_equal(state.g_i, (0, 0, 9.8))
        nptest.assert_array_equal(state.C, np.eye(3))
        nptest.assert_array_equal(state.eps, np.zeros(3))
        nptest.assert_array_equal(state.h, np.zeros(3))

    def test_covariance(self):
        state = init_state(EkfConfig(), (0.6, -0.1, 0.8), (0, 0, -9.8))
        nptest.assert_array_equal(state.P[PSI, :], 0.0)
        nptest.assert_array_equal(state.P[:, PSI], 0.0)
        nptest.assert_allclose(np.diag(state.P)[EPS], np.radians(5.0) ** 2)
        nptest.assert_allclose(np.diag(state.P)[SMAT], 0.01)
        nptest.assert_allclose(np.diag(state.P)[HVEC], 1.0)
        nptest.assert_allclose(np.diag(state.P)[MVEC], 0.25)
        nptest.assert_allclose(np.diag(state.P)[GVEC], 1.0)

    def test_S_init(self):
        S = np.array([[1.2, 0.3, 0.0], [0.3, 1.0, 0.1], [0.0, 0.1, 0.9]])
        state = init_state(EkfConfig(S_init=S), (0.6, -0.1, 0.8), (0, 0, -9.8))
        nptest.assert_array_equal(state.S, S)
        nptest.assert_allclose(state.predict_mag(), (0.6, -0.1, 0.8), atol=1e-14)

    def test_h_init(self):
        S = np.array([[1.2, 0.3, 0.0], [0.3, 1.0, 0.1], [0.0, 0.1, 0.9]])
        h = np.array([-0.5, 0.04, 0.24])
        state = init_state(EkfConfig(S_init=S, h_init=h), (0.6, -0.1, 0.8), (0, 0, -9.8))
        nptest.assert_array_equal(state.h, h)
        nptest.assert_allclose(state.m_i, np.linalg.solve(S, [1.1, -0.14, 0.56]), atol=1e-14)
        nptest.assert_allclose(state.predict_mag(), (0.6, -0.1, 0.8), atol=1e-14)

    def test_errors(self):
        self.assertRaises(DegenerateError, init_state, EkfConfig(), (0, 0, 0), (0, 0, -9.8))
        self.assertRaises(NonFiniteError, init_state, EkfConfig(), (np.nan, 0, 1), (0, 0, -9.8))


class PropagateTest(unittest.TestCase):
    """Time update"""

    def setUp(self):
        self.state = init_state(EkfConfig(), (0.6, -0.1, 0.8), (0, 0, -9.8))

    def test_matched_bias(self):
        state = self.state
        state.eps = np.radians([0.2, -0.1, 0.3])
        state.P = np.zeros((24, 24))
        noise = NoiseConfig()
        C0 = state.C.copy()
        propagate(state, state.eps, 0.01, noise)
        nptest.assert_allclose(state.C, C0, atol=1e-15)
        nptest.assert_allclose(state.P, process_noise(C0, noise, 0.01), atol=1e-20)
        self.assertAlmostEqual(state.t, 0.01)

    def test_attitude_covariance_grows(self):
        propagate(self.state, np.zeros(3), 0.01, NoiseConfig.zero())
        self.assertGreater(np.trace(self.state.P[PSI, PSI]), 0.0)

    def test_z_rotation(self):
        state = self.state
        rate = np.array([0.0, 0.0, 0.5 * np.pi / 10.0])
        for _ in range(1000):
            propagate(state, rate, 0.01, NoiseConfig.zero())
        Rz = so3.euler_to_dcm((0.0, 0.0, 90.0))
        self.assertLess(so3.geodesic_angle(state.C, Rz), 1e-4)
        self.assertTrue(so3.is_rotation(state.C))

    def test_bias_coupling_sign(self):
        """A bias error d_eps turns into the attitude error C d_eps T."""
        C0 = so3.rotvec_to_dcm([0.3, -0.5, 1.1])
        deps = np.radians([0.1, -0.05, 0.08])
        state = self.state
        state.C = C0.copy()
        state.eps = deps.copy()
        dx = np.zeros(24)
        dx[EPS] = deps
        dt, nsteps = 0.01, 100
        for _ in range(nsteps):
            # stationary truth with zero true bias: the gyro reads zero
            dx = transition(state.C, dt) @ dx
            propagate(state, np.zeros(3), dt, NoiseConfig.zero())
        # C_est = (I - psi x) C_true
        psi = so3.vee(np.eye(3) - state.C @ C0.T)
        expected = C0 @ deps * dt * nsteps
        nptest.assert_allclose(psi, expected, rtol=0, atol=1e-2 * np.linalg.norm(expected))
        nptest.assert_allclose(dx[PSI], psi, rtol=0, atol=1e-2 * np.linalg.norm(expected))

    def test_errors(self):
        self.assertRaises(NonFiniteError, propagate, self.state, [np.nan, 0, 0], 0.01, NoiseConfig())
        self.assertRaises(ValueError, propagate, self.state, [0, 0, 0], 0.0, NoiseConfig())


class JacobianTest(unittest.TestCase):
    """Measurement Jacobians against central differences"""

    def test_mag(self):
        rng = np.random.default_rng(10)
        for _ in range(100):
            state = random_state(rng)
            H = mag_jacobian(state)
            Hn = numeric_jacobian(state, CalibState.predict_mag)
            nptest.assert_allclose(H, Hn, rtol=1e-5, atol=1e-7)

    def test_accel(self):
        rng = np.random.default_rng(11)
        for _ in range(100):
            state = random_state(rng)
            H = accel_jacobian(state)
            Hn = numeric_jacobian(state, CalibState.predict_accel)
            nptest.assert_allclose(H, Hn, rtol=1e-5, atol=1e-6)


class UpdateTest(unittest.TestCase):
    """Measurement updates"""

    def setUp(self):
        self.state = random_state(np.random.default_rng(12))
        self.state.P = np.diag(np.linspace(1e-4, 1e-2, 24))

    def test_zero_innovation(self):
        state = self.state.copy()
        trace0 = np.trace(state.P)
        _, innovation, S_inn = update_mag(state, self.state.predict_mag(), 0.005)
        nptest.assert_array_equal(innovation, 0.0)
        nptest.assert_allclose(state.S, self.state.S, atol=1e-15)
        nptest.assert_allclose(state.h, self.state.h, atol=1e-15)
        self.assertLessEqual(np.trace(state.P), trace0)
        self.assertEqual(nis(innovation, S_inn), 0.0)

    def test_mag_reduces_error(self):
        truth = self.state.copy()
        state = self.state.copy()
        state.h = truth.h + np.array([0.05, -0.02, 0.03])
        state.P[HVEC, HVEC] = np.eye(3) * 0.01
        err0 = np.linalg.norm(state.h - truth.h)
        for _ in range(5):
            update_mag(state, truth.predict_mag(), 0.005)
        self.assertLess(np.linalg.norm(state.predict_mag() - truth.predict_mag()), 0.05 * err0)
        nptest.assert_array_equal(state.P, state.P.T)
        self.assertGreater(np.linalg.eigvalsh(state.P).min(), -1e-12)
        self.assertTrue(so3.is_rotation(state.C))

    def test_gating(self):
        cfg = EkfConfig()
        self.assertFalse(accel_valid([0, 0, 9.9], 9.8, 0.03))
        self.assertTrue(accel_valid([0, 0, -9.81], 9.8, 0.03))
        state = self.state.copy()
        _, accepted = update_accel(state, [0.0, 0.0, 9.9], cfg)
        self.assertFalse(accepted)
        nptest.assert_array_equal(state.P, self.state.P)
        nptest.assert_array_equal(state.g_i, self.state.g_i)
        y_a = self.state.predict_accel()
        y_a *= 9.8 / np.linalg.norm(y_a)
        _, accepted = update_accel(state, y_a, cfg)
        self.assertTrue(accepted)
        self.assertLess(np.trace(state.P), np.trace(self.state.P))

    def test_nis(self):
        self.assertAlmostEqual(nis([1.0, 2.0, 0.0], np.diag([1.0, 4.0, 1.0])), 2.0)
        lo, hi = anis_band(1)
        self.assertAlmostEqual(lo, 0.0717, places=3)
        self.assertAlmostEqual(hi, 12.838, places=2)
        lo, hi = anis_band(10000)
        self.assertTrue(2.9 < lo < 3.0 < hi < 3.1)
        self.assertTrue(np.isnan(anis_band(0)[0]))


class FinalizeTest(unittest.TestCase):
    """Re-scaling and decomposition"""

    def test_rescale(self):
        state = init_state(EkfConfig(), (0.0, 0.0, 2.0), (0, 0, -9.8))
        result = finalize(state, [2.0, 4.0], accepted=[True, False, False, True])
        nptest.assert_allclose(result.S_rs, 2 * np.eye(3))
        nptest.assert_allclose(result.m_rs, (0, 0, 1))
        nptest.assert_allclose(result.R, 0.5 * np.eye(3))
        nptest.assert_allclose(result.C_b_m, np.eye(3), atol=1e-15)
        self.assertAlmostEqual(result.anis_mag, 3.0)
        self.assertAlmostEqual(result.accel_accept_ratio, 0.5)
        self.assertAlmostEqual(result.inclination, 90.0)
        self.assertAlmostEqual(np.linalg.norm(result.m_rs), 1.0, places=12)

    def test_scale_ambiguity(self):
        rng = np.random.default_rng(13)
        state = random_state(rng)
        other = state.copy()
        other.S = 1.7 * state.S
        other.m_i = state.m_i / 1.7
        nptest.assert_allclose(other.predict_mag(), state.predict_mag(), atol=1e-14)
        r1, r2 = finalize(state), finalize(other)
        nptest.assert_allclose(r1.S_rs, r2.S_rs, atol=1e-12)
        nptest.assert_allclose(r1.m_rs, r2.m_rs, atol=1e-12)
        self.assertIsNone(r1.anis_mag)

    def test_degenerate(self):
        state = init_state(EkfConfig(), (0.0, 0.0, 2.0), (0, 0, -9.8))
        state.m_i = np.array([1e-9, 0.0, 0.0])
        self.assertRaises(DegenerateError, finalize, state)


class RunTest(unittest.TestCase):
    """Short end-to-end runs on simulated data"""

    @classmethod
    def setUpClass(cls):
        cls.truth = SimTruth.from_dict(
            {
                "R": [[1.0021, 0.01, -0.02], [0, 0.9969, 0.005], [0, 0, 1.0058]],
                "h": [-0.5018, 0.0421, 0.2379],
                "misalignment_deg": [1.5, -2.0, 3.0],
                "eps_deg": [-0.221, 0.171, 0.25],
            },
            noise=NoiseConfig.sensor_default(),
        )
        traj = gen_trajectory(standard_profile(still=5, tumble=55), seed=20)
        cls.stream, cls.attitudes = simulate(cls.truth, traj, seed=20)
        cls.filt = MagCalFilter(EkfConfig())
        cls.result = cls.filt.run(cls.stream)

    def test_estimates(self):
        result = self.result
        nptest.assert_allclose(result.eps_deg, np.degrees(self.truth.eps), atol=0.03)
        C_m_b, R = self.truth.intrinsic()
        nptest.assert_allclose(result.R, R, atol=2e-3)
        nptest.assert_allclose(result.h, self.truth.h, atol=5e-3)
        self.assertLess(np.degrees(so3.geodesic_angle(result.C_b_m, C_m_b.T)), 0.2)
        self.assertAlmostEqual(result.inclination, self.truth.inclination, delta=0.2)
        self.assertAlmostEqual(result.accel_accept_ratio, 1.0, places=2)

    def test_covariance_health(self):
        P = self.filt.state.P
        nptest.assert_array_equal(P, P.T)
        self.assertGreater(np.linalg.eigvalsh(P).min(), -1e-9 * np.trace(P))

    def test_history(self):
        hist = self.result.history
        nn = len(self.stream)
        self.assertEqual(len(hist["t"]), nn)
        nptest.assert_allclose(hist["t"], self.stream.t)
        self.assertTrue(np.isnan(hist["nis"][0]))
        self.assertEqual(hist["attitude"].shape, (nn, 3, 3))
        t, att = self.result.attitude_series
        self.assertEqual(len(t), nn)
        # the filter attitude follows the reference
        err = [so3.geodesic_angle(att[k], self.attitudes[k]) for k in range(0, nn, 100)]
        self.assertLess(np.degrees(max(err[-10:])), 0.5)
        # innovations mostly inside three sigma
        inside = np.abs(hist["innovation"][1:]) <= 3 * hist["sigma"][1:]
        self.assertGreater(inside.mean(), 0.99)

    def test_batch_start(self):
        # S and h start near the truth instead of at I and 0
        cfg = self.filt.config
        nptest.assert_allclose(cfg.S_init, self.truth.S, atol=0.02)
        nptest.assert_allclose(cfg.h_init, self.truth.h, atol=0.02)
        hist = self.result.history
        nptest.assert_allclose(hist["S"][0], cfg.S_init)
        nptest.assert_allclose(hist["h"][0], cfg.h_init)

    def test_identity_start(self):
        filt = MagCalFilter(EkfConfig(seed="identity"))
        state = filt.process(self.stream[0])
        nptest.assert_array_equal(state.S, np.eye(3))
        nptest.assert_array_equal(state.h, np.zeros(3))
        nptest.assert_array_equal(state.m_i, self.stream.mag[0])

    def test_still_start(self):
        """No rotation, no batch start values: S = I and h = 0."""
        filt = MagCalFilter(EkfConfig(use_accel=False), record_history=False)
        with self.assertLogs("magcal.core.ekf", level="WARNING"):
            filt.run(self.stream[:400])
        self.assertIsNone(filt.config.S_init)

    def test_without_history(self):
        filt = MagCalFilter(EkfConfig(use_accel=False), record_history=False)
        result = filt.run(self.stream[:500])
        self.assertIsNone(result.history)
        self.assertIsNone(result.accel_accept_ratio)


class WindowTest(unittest.TestCase):
    """Estimation window and motion detection"""

    @classmethod
    def setUpClass(cls):
        truth = SimTruth(noise=NoiseConfig.sensor_default(), eps=np.radians([0.2, -0.1, 0.25]))
        traj = gen_trajectory(standard_profile(still=10, tumble=10), seed=21)
        cls.stream, _ = simulate(truth, traj, seed=21)

    def test_motion_start(self):
        start = detect_motion_start(self.stream, np.radians(0.01))
        self.assertGreater(start, 9.0)
        self.assertLess(start, 13.0)

    def test_no_motion(self):
        still = self.stream.window(0, 9)
        self.assertEqual(detect_motion_start(still, np.radians(0.01)), 0.0)

    def test_window(self):
        window = estimation_window(self.stream, EkfConfig(start=2.0, stop=4.0))
        self.assertAlmostEqual(window.t[0], 2.0)
        self.assertAlmostEqual(window.t[-1], 4.0)
        window = estimation_window(self.stream, EkfConfig(start="auto"))
        self.assertGreater(window.t[0], 9.0)
        self.assertRaises(DegenerateError, estimation_window, self.stream, EkfConfig(start=50.0))

    def test_run_window(self):
        result = run(self.stream, EkfConfig(start=10.0, stop=12.0, seed="identity"))
        self.assertEqual(len(result.history["t"]), 201)


if __name__ == "__main__":
    unittest.main()
