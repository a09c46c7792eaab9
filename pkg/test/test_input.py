"""Test correct parsing of the run configuration"""
import os
import tempfile
import unittest
import logging
import numpy as np
import numpy.testing as nptest
from magcal.core.errors import ConfigError, DatasetError
from magcal.core.input import parse_input, get_input, get_config, get_observability, get_batch

logging.basicConfig(level=logging.DEBUG)
logging.basicConfig(format="%(message)s")
LOGGER = logging.getLogger(__name__)

HERE = os.path.dirname(os.path.abspath(__file__))

# unclosed flow sequence, trailing comma
MALFORMED = (("bad.yaml", "mode: [ekf\n  seed: 1\n"), ("bad.json", '{"mode": "ekf",}'))


def sim_input(**kwargs):
    userinp = get_input(os.path.join(HERE, "magcal_in_sim.yaml"))
    userinp.update(kwargs)
    return userinp


class ReadInputTest(unittest.TestCase):
    """Check if we can read input file"""

    def test_import(self):
        """YAML and JSON forms of a configuration are the same"""
        data1 = get_input(os.path.join(HERE, "magcal_in_sim.yaml"))
        data2 = get_input(os.path.join(HERE, "magcal_in_sim.json"))
        self.assertDictEqual(data1, data2)

    def test_parse_nonexistent(self):
        """Can we report neatly that input file is missing?"""
        self.assertRaises(FileNotFoundError, parse_input, "magcal_noinput.yaml")

    def test_malformed(self):
        with tempfile.TemporaryDirectory() as tmpdir:
            for name, text in MALFORMED:
                path = os.path.join(tmpdir, name)
                with open(path, "w") as fp:
                    fp.write(text)
                self.assertRaises(ConfigError, get_input, path)


class ParseConfigTest(unittest.TestCase):
    """Check configuration is interpreted properly"""

    def test_parse_config(self):
        config = get_config(get_input(os.path.join(HERE, "magcal_in_sim.yaml")), basedir=HERE)
        refdict = {
            "mode": "ekf",
            "seed": 7,
            "outdir": os.path.join(HERE, "_workdir", "sim"),
            "plots": False,
            "abort_unobservable": False,
        }
        self.assertDictEqual(refdict, config)

    def test_defaults(self):
        config = get_config(None)
        self.assertEqual(config["mode"], "ekf")
        self.assertEqual(config["seed"], 0)
        self.assertIsNone(config["outdir"])

    def test_invalid(self):
        self.assertRaises(ConfigError, get_config, {"mode": "calibrate"})
        self.assertRaises(ConfigError, get_config, {"seed": "first"})
        self.assertRaises(ConfigError, get_observability, {"tol": 2.0})
        self.assertRaises(ConfigError, get_observability, {"tolerance": 1e-3})
        self.assertRaises(ConfigError, get_batch, {"method": "x"})

    def test_file_relative_outdir(self):
        setup = parse_input(os.path.join(HERE, "magcal_in_sim.json"))
        self.assertEqual(setup["config"]["outdir"], os.path.join(HERE, "_workdir", "sim"))


class ParseSetupTest(unittest.TestCase):
    """Simulation, filter and dataset sections"""

    def test_simulation(self):
        setup = parse_input(sim_input())
        self.assertIsNone(setup["dataset"])
        truth = setup["simulation"]["truth"]
        nptest.assert_allclose(np.degrees(truth.eps), [-0.221, 0.171, 0.25])
        C_m_b, R = truth.intrinsic()
        nptest.assert_allclose(R[0, 0], 1.0021, rtol=1e-12)
        self.assertAlmostEqual(truth.noise.sigma_g, np.radians(0.01))
        # constant bias unless configured
        self.assertEqual(truth.noise.sigma_eps, 0.0)
        self.assertEqual(len(setup["simulation"]["profile"]), 2)
        self.assertIsNone(setup["simulation"]["disturbance"])

    def test_ekf(self):
        setup = parse_input(sim_input())
        ekf = setup["ekf"]
        self.assertEqual(ekf.T_md, 0.03)
        self.assertAlmostEqual(ekf.noise.sigma_a, 0.09)
        self.assertTrue(ekf.use_accel)
        setup = parse_input(sim_input(ekf={"T_md": 0.1, "noise": {"sigma_g": 0.02}}))
        self.assertAlmostEqual(setup["ekf"].noise.sigma_a, 0.3)
        self.assertAlmostEqual(setup["ekf"].noise.sigma_g, np.radians(0.02))
        self.assertRaises(ConfigError, parse_input, sim_input(ekf={"Tmd": 0.1}))

    def test_disturbance(self):
        siminp = sim_input()["simulation"]
        siminp["disturbance"] = {"magnitude": 2.0}
        setup = parse_input(sim_input(simulation=siminp))
        self.assertEqual(setup["simulation"]["disturbance"], {"magnitude": 2.0, "fraction": 0.5})
        siminp["disturbance"] = {"amplitude": 2.0}
        self.assertRaises(ConfigError, parse_input, sim_input(simulation=siminp))

    def test_data_source(self):
        userinp = sim_input()
        del userinp["simulation"]
        self.assertRaises(ConfigError, parse_input, userinp)
        userinp = sim_input(dataset={"path": "data.csv"})
        self.assertRaises(ConfigError, parse_input, userinp)
        self.assertRaises(ConfigError, parse_input, sim_input(extra=1))

    def test_dataset_window(self):
        userinp = sim_input(
            dataset={
                "path": "data.csv",
                "units": {"gyro": "deg/s", "accel": "m/s2", "mag": "raw"},
                "still": [0, 70],
                "estimation": ["auto", 250],
            }
        )
        del userinp["simulation"]
        setup = parse_input(userinp, basedir="/data")
        self.assertEqual(setup["dataset"].path, os.path.join("/data", "data.csv"))
        self.assertEqual(setup["ekf"].start, "auto")
        self.assertEqual(setup["ekf"].stop, 250.0)
        userinp["ekf"] = {"start": 110}
        setup = parse_input(userinp, basedir="/data")
        self.assertEqual(setup["ekf"].start, 110.0)
        userinp["ekf"] = {"start": "later"}
        self.assertRaises(ConfigError, parse_input, userinp, "/data")
        userinp["ekf"] = {}
        userinp["dataset"] = {"units": {}}
        self.assertRaises(DatasetError, parse_input, userinp, "/data")


if __name__ == "__main__":
    unittest.main()
