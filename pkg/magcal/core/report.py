"""
Run reports: text tables, the structured JSON file and the plot CSVs.

All angles are reported in degrees and rates in deg/s.
"""
import os
import json
import hashlib
import numpy as np
import magcal
from magcal.core.utils import get_logger, tolist
from magcal.core.errors import DatasetError
from magcal.core import so3
from magcal.core.strapdown import integrate_attitude

LOGGER = get_logger(__name__)

TIME_ATOL = 1e-9

# quantities compared between two reports: (label, key in 'result')
COMPARED = [
    ("gyro bias [deg/s]", "eps_deg"),
    ("C_b_m euler [deg]", "C_b_m_euler_deg"),
    ("R", "R"),
    ("h", "h"),
    ("inclination [deg]", "inclination_deg"),
    ("ANIS", "anis_mag"),
    ("accel acceptance", "accel_accept_ratio"),
]

# estimates.csv: time, bias, S_rs row by row, h, unit m^i, g^i
ESTIMATE_COLUMNS = (
    ["t", "eps_x_deg", "eps_y_deg", "eps_z_deg"]
    + ["S{}{}".format(i + 1, j + 1) for i in range(3) for j in range(3)]
    + ["h_x", "h_y", "h_z", "m_x", "m_y", "m_z", "g_x", "g_y", "g_z"]
)


def canonical_json(userinp):
    """Key-sorted compact JSON of a configuration."""
    return json.dumps(tolist(userinp), sort_keys=True, separators=(",", ":"), default=str)


def provenance(userinp, seed):
    """Configuration hash, seed and package version of a run."""
    digest = hashlib.sha256(canonical_json(userinp).encode("utf-8")).hexdigest()
    return {"config_sha256": digest, "seed": seed, "version": magcal.__version__}


def gyro_attitude(t, gyro, bias):
    """Gyroscope-maintained attitude relative to the first sample.

    Args:
        bias (3-vector): gyro bias [rad/s] removed before integration
    """
    return integrate_attitude(t, gyro, bias=bias)


def compare_attitude(t_ekf, att_ekf, t_gyro, att_gyro):
    """Euler angles [deg] of C_ekf^T C_gyro per sample.

    Raises:
        DatasetError: series of different length or timestamps
    """
    t_ekf = np.asarray(t_ekf, dtype=float)
    t_gyro = np.asarray(t_gyro, dtype=float)
    att_ekf = np.asarray(att_ekf, dtype=float).reshape(-1, 3, 3)
    att_gyro = np.asarray(att_gyro, dtype=float).reshape(-1, 3, 3)
    if len(t_ekf) != len(t_gyro) or len(att_ekf) != len(t_ekf) or len(att_gyro) != len(t_gyro):
        raise DatasetError(
            "attitude series differ in length: {} and {} samples".format(len(t_ekf), len(t_gyro))
        )
    if not np.allclose(t_ekf, t_gyro, rtol=0.0, atol=TIME_ATOL):
        kk = int(np.argmax(np.abs(t_ekf - t_gyro) > TIME_ATOL))
        raise DatasetError(
            "attitude series misaligned at sample {}: {} s vs {} s".format(kk, t_ekf[kk], t_gyro[kk])
        )
    relative = np.einsum("kji,kjl->kil", att_ekf, att_gyro)
    return np.array([so3.dcm_to_euler(D) for D in relative]).reshape(-1, 3)


def _fmt(values, fmt="{:10.4f}"):
    if values is None:
        return "{:>10s}".format("-")
    values = np.atleast_1d(np.asarray(values, dtype=float))
    return " ".join(fmt.format(v) for v in values)


class RunReport:
    """Everything one calibration run produced.

    Attributes:
        mode (str): calibration path
        result (CalibResult): the estimate of the selected path
        passes (list of CalibResult): earlier passes of a multi-pass run
        obsv (ObsvReport): observability verdicts of the processed window
        still_bias (3-vector): still-averaged gyro bias [deg/s] or None
        comparisons (dict): source name -> CalibResult of other paths
        recovery (dict): source name -> error dict, when truth is known
        provenance (dict): config hash, seed, version
        discrepancy ((t, Nx3)): EKF minus gyro-maintained attitude [deg]
        accel_norm (N array): accelerometer magnitude over the window
    """

    def __init__(
        self,
        mode,
        result,
        obsv=None,
        still_bias=None,
        comparisons=None,
        recovery=None,
        provenance=None,
        passes=None,
        discrepancy=None,
        accel_norm=None,
    ):
        self.mode = mode
        self.result = result
        self.obsv = obsv
        self.still_bias = None if still_bias is None else np.asarray(still_bias, dtype=float)
        self.comparisons = comparisons or {}
        self.recovery = recovery or {}
        self.provenance = provenance or {}
        self.passes = passes or []
        self.discrepancy = discrepancy
        self.accel_norm = accel_norm

    def sources(self):
        """(name, CalibResult) of the selected path and its comparisons."""
        items = [(self.result.source, self.result)]
        items.extend((name, res) for name, res in self.comparisons.items())
        return items

    def table(self):
        """Plain-text report."""
        lines = []
        lines.append("magcal run, mode {}".format(self.mode))
        if self.provenance:
            lines.append(
                "config sha256 {config_sha256}, seed {seed}, magcal {version}".format(**self.provenance)
            )
        lines.append("")
        lines.append("Gyroscope bias [deg/s]")
        lines.append("{:<16s} {:>10s} {:>10s} {:>10s}".format("source", "x", "y", "z"))
        for name, res in self.sources():
            lines.append("{:<16s} {}".format(name, _fmt(res.eps_deg)))
        if self.still_bias is not None:
            lines.append("{:<16s} {}".format("still average", _fmt(self.still_bias)))
        lines.append("")
        lines.append("Magnetometer parameters")
        lines.append(
            "{:<16s} {:>10s} {:>10s} {:>10s} | {:>32s} | {:>32s}".format(
                "source", "roll", "pitch", "yaw", "diag(R)", "h"
            )
        )
        for name, res in self.sources():
            lines.append(
                "{:<16s} {} | {} | {}".format(
                    name, _fmt(res.euler_deg), _fmt(np.diag(res.R)), _fmt(res.h)
                )
            )
        lines.append("")
        lines.append("{:<16s} {:>10s} {:>16s} {:>12s} {:>12s}".format(
            "source", "ANIS", "99% band", "inclination", "accel acc."))
        for name, res in self.sources():
            band = "-" if res.anis_band is None else "{:.2f}-{:.2f}".format(*res.anis_band)
            lines.append(
                "{:<16s} {} {:>16s} {} {}".format(
                    name,
                    _fmt(res.anis_mag, "{:10.3f}"),
                    band,
                    _fmt(res.inclination, "{:12.3f}"),
                    _fmt(res.accel_accept_ratio, "{:12.3f}"),
                )
            )
        for res in self.passes:
            lines.append("pass {:d} ANIS {:.3f}".format(res.npass, res.anis_mag))
        if self.recovery:
            lines.append("")
            lines.append("Recovery errors against simulation truth")
            keys = sorted({key for errs in self.recovery.values() for key in errs})
            lines.append("{:<16s} ".format("source") + " ".join("{:>16s}".format(k) for k in keys))
            for name, errs in self.recovery.items():
                lines.append(
                    "{:<16s} ".format(name)
                    + " ".join("{:16.3e}".format(errs.get(k, np.nan)) for k in keys)
                )
        if self.obsv is not None:
            lines.append("")
            lines.append(self.obsv.table())
        return "\n".join(lines)

    def to_dict(self):
        dd = {
            "mode": self.mode,
            "result": self.result.to_dict(),
            "passes": [res.to_dict() for res in self.passes],
            "comparisons": {name: res.to_dict() for name, res in self.comparisons.items()},
            "still_bias_deg": self.still_bias,
            "recovery": self.recovery,
            "provenance": self.provenance,
            "observability": None if self.obsv is None else self.obsv.to_dict(),
        }
        return tolist(dd)

    def write(self, outdir):
        """Write report.txt, report.json and the plot CSVs to `outdir`.

        Returns:
            list of str: written files
        """
        os.makedirs(outdir, exist_ok=True)
        written = []
        path = os.path.join(outdir, "report.txt")
        with open(path, "w") as fp:
            fp.write(self.table() + "\n")
        written.append(path)
        path = os.path.join(outdir, "report.json")
        with open(path, "w") as fp:
            json.dump(self.to_dict(), fp, indent=2)
        written.append(path)
        written.extend(write_plot_csvs(self, outdir))
        LOGGER.info("Report written to %s", outdir)
        return written

    def __repr__(self):
        return "RunReport({}, {})".format(self.mode, self.result)


def _savecsv(path, columns, header):
    np.savetxt(path, np.column_stack(columns), delimiter=",", header=",".join(header), comments="")
    return path


def write_plot_csvs(report, outdir):
    """Series behind the figures of a run; only those with data are written."""
    written = []
    if report.obsv is not None and len(report.obsv.t):
        path = os.path.join(outdir, "eigen_ratio.csv")
        report.obsv.write_csv(path)
        written.append(path)
    hist = report.result.history
    if hist is not None:
        t = hist["t"]
        written.append(
            _savecsv(
                os.path.join(outdir, "innovation.csv"),
                [t, hist["innovation"], hist["sigma"], hist["nis"]],
                ["t", "nu_x", "nu_y", "nu_z", "sigma_x", "sigma_y", "sigma_z", "nis"],
            )
        )
        mnorm = np.linalg.norm(hist["m_i"], axis=1)
        S_rs = hist["S"] * mnorm[:, None, None]
        m_rs = hist["m_i"] / mnorm[:, None]
        written.append(
            _savecsv(
                os.path.join(outdir, "estimates.csv"),
                [t, np.degrees(hist["eps"]), S_rs.reshape(-1, 9), hist["h"], m_rs, hist["g_i"]],
                ESTIMATE_COLUMNS,
            )
        )
        if report.accel_norm is not None and report.result.accel_accept_ratio is not None:
            written.append(
                _savecsv(
                    os.path.join(outdir, "accel_gating.csv"),
                    [t, report.accel_norm, hist["accepted"].astype(int)],
                    ["t", "accel_norm", "accepted"],
                )
            )
    if report.discrepancy is not None:
        t, euler = report.discrepancy
        written.append(
            _savecsv(
                os.path.join(outdir, "attitude_discrepancy.csv"),
                [t, euler],
                ["t", "roll_deg", "pitch_deg", "yaw_deg"],
            )
        )
    return written


def load_report(path):
    """Structured report of an earlier run."""
    if os.path.isdir(path):
        path = os.path.join(path, "report.json")
    with open(path) as fp:
        return json.load(fp)


def compare_reports(first, second):
    """Per-quantity differences second - first of two structured reports.

    Returns:
        list of (label, first value, second value, difference); the
        difference is None when either value is missing
    """
    rows = []
    for label, key in COMPARED:
        aa = first["result"].get(key)
        bb = second["result"].get(key)
        if aa is None or bb is None:
            rows.append((label, aa, bb, None))
            continue
        aa = np.asarray(aa, dtype=float)
        bb = np.asarray(bb, dtype=float)
        rows.append((label, aa, bb, bb - aa))
    return rows


def comparison_table(rows, names=("A", "B")):
    lines = ["{:<20s} {:>34s} {:>34s} {:>34s}".format("quantity", names[0], names[1], "difference")]
    for label, aa, bb, diff in rows:
        if diff is not None and np.ndim(diff) == 2:
            aa, bb, diff = np.diag(aa), np.diag(bb), np.diag(diff)
            label = "diag " + label
        lines.append(
            "{:<20s} {:>34s} {:>34s} {:>34s}".format(
                label,
                _fmt(aa, "{:10.4g}") if aa is not None else "-",
                _fmt(bb, "{:10.4g}") if bb is not None else "-",
                _fmt(diff, "{:10.3e}") if diff is not None else "-",
            )
        )
    return "\n".join(lines)
