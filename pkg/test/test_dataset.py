"""Test CSV ingestion, the stream container and still averaging."""
import os
import json
import tempfile
import unittest
import logging
import numpy as np
import numpy.testing as nptest
from magcal.core.errors import DatasetError
from magcal.sensors.dataset import (
    SCHEMA,
    SensorSample,
    SensorStream,
    DatasetSpec,
    ingest_csv,
    write_csv,
    still_average_bias,
)
from magcal.sensors.simulate import NoiseConfig, SimTruth, gen_trajectory, standard_profile, simulate

logging.basicConfig(level=logging.DEBUG)

UNITS = {"gyro": "rad/s", "accel": "m/s2", "mag": "raw"}


def write_lines(path, lines):
    with open(path, "w") as fp:
        fp.write("\n".join(lines) + "\n")


def rows(nn, rate=100.0, start=0.0):
    lines = [",".join(SCHEMA)]
    for kk in range(nn):
        t = start + kk / rate
        lines.append("{:.2f},0.1,0.2,0.3,0,0,-9.8,0.5,0.1,0.8".format(t))
    return lines


class SensorStreamTest(unittest.TestCase):
    """Container behaviour"""

    def setUp(self):
        t = np.arange(0, 1, 0.01)
        self.stream = SensorStream(t, np.ones((100, 3)), np.zeros((100, 3)), np.ones((100, 3)))

    def test_basic(self):
        self.assertEqual(len(self.stream), 100)
        self.assertAlmostEqual(self.stream.sample_rate, 100.0, places=6)
        self.assertAlmostEqual(self.stream.duration, 0.99)
        sample = self.stream[3]
        self.assertIsInstance(sample, SensorSample)
        self.assertAlmostEqual(sample.t, 0.03)
        self.assertEqual(len(list(self.stream)), 100)

    def test_window(self):
        sub = self.stream.window(0.2, 0.5)
        self.assertEqual(len(sub), 31)
        self.assertAlmostEqual(sub.t[0], 0.2)
        self.assertEqual(len(self.stream.window(0.5, None)), 50)
        self.assertEqual(len(self.stream[10:20]), 10)

    def test_copy_is_independent(self):
        other = self.stream.copy()
        other.gyro[:] = 0.0
        self.assertEqual(self.stream.gyro.sum(), 300.0)


class IngestTest(unittest.TestCase):
    """Reading dataset files"""

    def setUp(self):
        self.tmpdir = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmpdir.name, "data.csv")

    def tearDown(self):
        self.tmpdir.cleanup()

    def test_well_formed(self):
        write_lines(self.path, rows(10))
        stream = ingest_csv(DatasetSpec(self.path, units=UNITS))
        self.assertEqual(len(stream), 10)
        nptest.assert_allclose(stream.accel[0], [0, 0, -9.8])
        self.assertEqual(stream.gaps, [])

    def test_units(self):
        write_lines(self.path, rows(10))
        units = {"gyro": "deg/s", "accel": "g", "mag": "raw"}
        stream = ingest_csv(DatasetSpec(self.path, units=units))
        nptest.assert_allclose(stream.gyro[0], np.radians([0.1, 0.2, 0.3]))
        nptest.assert_allclose(stream.accel[0], [0, 0, -9.8 * 9.80665])

    def test_column_mapping(self):
        lines = rows(10)
        lines[0] = "time,wx,wy,wz,ax,ay,az,mx,my,mz"
        write_lines(self.path, lines)
        spec = DatasetSpec(
            self.path, columns={"t": "time", "gx": "wx", "gy": "wy", "gz": "wz"}, units=UNITS
        )
        self.assertEqual(len(ingest_csv(spec)), 10)
        self.assertRaises(DatasetError, ingest_csv, DatasetSpec(self.path, units=UNITS))
        self.assertRaises(DatasetError, DatasetSpec, self.path, columns={"q": "q"})

    def test_nan_row(self):
        lines = rows(10)
        lines[4] = "0.03,0.1,nan,0.3,0,0,-9.8,0.5,0.1,0.8"
        write_lines(self.path, lines)
        with self.assertRaises(DatasetError) as cm:
            ingest_csv(DatasetSpec(self.path, units=UNITS))
        self.assertEqual(cm.exception.line, 5)
        self.assertIn("line 5", str(cm.exception))

    def test_unparsable_row(self):
        lines = rows(10)
        lines[2] = "0.01,0.1,abc,0.3,0,0,-9.8,0.5,0.1,0.8"
        write_lines(self.path, lines)
        with self.assertRaises(DatasetError) as cm:
            ingest_csv(DatasetSpec(self.path, units=UNITS))
        self.assertEqual(cm.exception.line, 3)

    def test_time_not_increasing(self):
        lines = rows(10)
        lines[5], lines[6] = lines[6], lines[5]
        write_lines(self.path, lines)
        with self.assertRaises(DatasetError) as cm:
            ingest_csv(DatasetSpec(self.path, units=UNITS))
        self.assertEqual(cm.exception.line, 7)

    def test_missing_units(self):
        write_lines(self.path, rows(10))
        self.assertRaises(DatasetError, ingest_csv, DatasetSpec(self.path))
        units = {"gyro": "rad/s", "accel": "m/s2"}
        self.assertRaises(DatasetError, ingest_csv, DatasetSpec(self.path, units=units))
        units = dict(UNITS, gyro="rpm")
        self.assertRaises(DatasetError, ingest_csv, DatasetSpec(self.path, units=units))

    def test_declared_rate(self):
        write_lines(self.path, rows(20))
        self.assertRaises(
            DatasetError, ingest_csv, DatasetSpec(self.path, units=UNITS, sample_rate=50)
        )

    def test_gaps(self):
        lines = rows(20)
        del lines[8:11]
        write_lines(self.path, lines)
        stream = ingest_csv(DatasetSpec(self.path, units=UNITS))
        self.assertEqual(len(stream), 17)
        self.assertEqual(len(stream.gaps), 1)
        t0, t1, missing = stream.gaps[0]
        self.assertAlmostEqual(t0, 0.06)
        self.assertAlmostEqual(t1, 0.10)
        self.assertEqual(missing, 3)

    def test_missing_file(self):
        spec = DatasetSpec(os.path.join(self.tmpdir.name, "none.csv"), units=UNITS)
        self.assertRaises(DatasetError, ingest_csv, spec)

    def test_simulated_round_trip(self):
        """Written simulator output reads back bit for bit."""
        truth = SimTruth(noise=NoiseConfig.sensor_default())
        stream, _ = simulate(truth, gen_trajectory(standard_profile(still=2, tumble=8), seed=3), seed=3)
        sidecar = write_csv(stream, self.path)
        self.assertTrue(os.path.exists(sidecar))
        with open(sidecar) as fp:
            self.assertEqual(json.load(fp)["units"], UNITS)
        spec = DatasetSpec.from_dict({"path": "data.csv", "sidecar": sidecar}, basedir=self.tmpdir.name)
        back = ingest_csv(spec)
        nptest.assert_array_equal(back.t, stream.t)
        nptest.assert_array_equal(back.gyro, stream.gyro)
        nptest.assert_array_equal(back.accel, stream.accel)
        nptest.assert_array_equal(back.mag, stream.mag)

    def test_spec_from_dict(self):
        spec = DatasetSpec.from_dict(
            {"path": "x.csv", "units": UNITS, "still": [0, 5]}, basedir="/data"
        )
        self.assertEqual(spec.path, os.path.join("/data", "x.csv"))
        self.assertEqual(spec.to_dict()["still"], [0, 5])
        self.assertRaises(DatasetError, DatasetSpec.from_dict, {"units": UNITS})
        self.assertRaises(DatasetError, DatasetSpec.from_dict, {"path": "x.csv", "rate": 3})


class StillAverageTest(unittest.TestCase):
    """Gyro bias from a stationary window"""

    def test_constant(self):
        bias = np.array([-0.195, 0.168, 0.256])
        t = np.arange(0, 10, 0.01)
        gyro = np.tile(np.radians(bias), (len(t), 1))
        stream = SensorStream(t, gyro, np.zeros_like(gyro), np.ones_like(gyro))
        nptest.assert_allclose(still_average_bias(stream, (0, 5)), bias, rtol=1e-12)

    def test_noisy(self):
        eps_deg = np.array([-0.195, 0.168, 0.256])
        truth = SimTruth(eps=np.radians(eps_deg), noise=NoiseConfig.sensor_default())
        traj = gen_trajectory([{"kind": "stationary", "duration": 60}], seed=5)
        stream, _ = simulate(truth, traj, seed=5)
        bias = still_average_bias(stream, (0, 60))
        nn = len(stream)
        sigma = np.degrees(truth.noise.sigma_g / np.sqrt(stream.dt))
        self.assertLess(np.abs(bias - eps_deg).max(), 4 * sigma / np.sqrt(nn))

    def test_motion(self):
        truth = SimTruth(noise=NoiseConfig.sensor_default())
        stream, _ = simulate(truth, gen_trajectory(standard_profile(still=5, tumble=20), seed=1), seed=1)
        self.assertRaises(DatasetError, still_average_bias, stream, (0, 20))
        still_average_bias(stream, (0, 4.5))

    def test_window_outside(self):
        t = np.arange(0, 10, 0.01)
        stream = SensorStream(t, np.zeros((len(t), 3)), np.zeros((len(t), 3)), np.ones((len(t), 3)))
        self.assertRaises(DatasetError, still_average_bias, stream, (5, 20))
        self.assertRaises(DatasetError, still_average_bias, stream, (5, 4))


if __name__ == "__main__":
    unittest.main()
