"""
Sensor streams and their CSV representation.

Internal units are rad/s for gyro, m/s^2 for accelerometer and raw
magnetometer units. Files follow the schema

    t,gx,gy,gz,ax,ay,az,mx,my,mz

with one row per sample; units are declared in the dataset description,
never inferred from the data.
"""
import os
import json
from collections import namedtuple
import numpy as np
from magcal.core.utils import get_logger
from magcal.core.errors import DatasetError

LOGGER = get_logger(__name__)

SCHEMA = ["t", "gx", "gy", "gz", "ax", "ay", "az", "mx", "my", "mz"]

STANDARD_GRAVITY = 9.80665

# unit name -> multiplier to internal units
GYRO_UNITS = {"rad/s": 1.0, "deg/s": np.pi / 180.0}
ACCEL_UNITS = {"m/s2": 1.0, "m/s^2": 1.0, "g": STANDARD_GRAVITY}
MAG_UNITS = {"raw": 1.0}

# relative tolerance between declared and observed sample rate
RATE_RTOL = 0.01
# spacing above this many nominal periods is reported as a gap
GAP_FACTOR = 1.5

SensorSample = namedtuple("SensorSample", ["t", "gyro", "accel", "mag"])


class SensorStream:
    """Time-ordered gyro, accelerometer and magnetometer samples.

    Attributes:
        t (N array): time [s]
        gyro (Nx3 array): angular rate [rad/s]
        accel (Nx3 array): specific force [m/s^2]
        mag (Nx3 array): magnetometer reading [raw]
        labels (N array of str): optional segment label per sample
        gaps (list): (t_before, t_after, n_missing) for missing samples
    """

    def __init__(self, t, gyro, accel, mag, labels=None, gaps=None):
        self.t = np.asarray(t, dtype=float)
        self.gyro = np.asarray(gyro, dtype=float).reshape(-1, 3)
        self.accel = np.asarray(accel, dtype=float).reshape(-1, 3)
        self.mag = np.asarray(mag, dtype=float).reshape(-1, 3)
        nn = len(self.t)
        assert self.gyro.shape[0] == nn, (self.gyro.shape, nn)
        assert self.accel.shape[0] == nn, (self.accel.shape, nn)
        assert self.mag.shape[0] == nn, (self.mag.shape, nn)
        if labels is None:
            labels = np.full(nn, "", dtype="<U16")
        self.labels = np.asarray(labels)
        self.gaps = list(gaps) if gaps is not None else []

    def __len__(self):
        return len(self.t)

    def __iter__(self):
        for k in range(len(self.t)):
            yield SensorSample(self.t[k], self.gyro[k], self.accel[k], self.mag[k])

    def __getitem__(self, key):
        if isinstance(key, (int, np.integer)):
            return SensorSample(
                self.t[key], self.gyro[key], self.accel[key], self.mag[key]
            )
        return SensorStream(
            self.t[key],
            self.gyro[key],
            self.accel[key],
            self.mag[key],
            labels=self.labels[key],
        )

    @property
    def dt(self):
        """Median sample spacing [s]."""
        if len(self.t) < 2:
            return np.nan
        return float(np.median(np.diff(self.t)))

    @property
    def sample_rate(self):
        return 1.0 / self.dt

    @property
    def duration(self):
        return float(self.t[-1] - self.t[0]) if len(self.t) else 0.0

    def mask(self, t0=None, t1=None):
        """Boolean mask of samples with t0 <= t <= t1."""
        t0 = self.t[0] if t0 is None else t0
        t1 = self.t[-1] if t1 is None else t1
        return (self.t >= t0 - 1e-9) & (self.t <= t1 + 1e-9)

    def window(self, t0=None, t1=None):
        """Return the sub-stream with t0 <= t <= t1."""
        return self[self.mask(t0, t1)]

    def copy(self):
        return SensorStream(
            self.t.copy(),
            self.gyro.copy(),
            self.accel.copy(),
            self.mag.copy(),
            labels=self.labels.copy(),
            gaps=self.gaps,
        )

    def as_array(self):
        """Nx10 array in the column order of SCHEMA."""
        return np.column_stack([self.t, self.gyro, self.accel, self.mag])

    def __repr__(self):
        if not len(self):
            return "SensorStream(empty)"
        return "SensorStream({} samples, {:.3f}-{:.3f} s, {:.1f} Hz)".format(
            len(self), self.t[0], self.t[-1], self.sample_rate
        )


class DatasetSpec:
    """Description of a dataset file.

    Args:
        path (str): CSV file
        columns (dict): schema name -> header name in the file; identity
            for names not given
        units (dict): declarations for 'gyro', 'accel' and 'mag'
        sample_rate (float): declared rate [Hz]
        still (2-sequence): stationary window [s] for still averaging
        estimation (2-sequence): estimation window [s]; the start may be
            'auto' for motion detection
        delimiter (str): field separator
    """

    def __init__(
        self,
        path,
        columns=None,
        units=None,
        sample_rate=100.0,
        still=None,
        estimation=None,
        delimiter=",",
    ):
        self.path = path
        self.columns = {name: name for name in SCHEMA}
        if columns:
            unknown = set(columns) - set(SCHEMA)
            if unknown:
                raise DatasetError(
                    "unknown schema columns {}; expected {}".format(
                        sorted(unknown), SCHEMA
                    )
                )
            self.columns.update(columns)
        self.units = units
        self.sample_rate = float(sample_rate)
        self.still = still
        self.estimation = estimation
        self.delimiter = delimiter

    @classmethod
    def from_dict(cls, userinp, basedir=None):
        """Build from a configuration dictionary; relative paths are
        resolved against `basedir`."""
        userinp = dict(userinp)
        try:
            path = userinp.pop("path")
        except KeyError:
            raise DatasetError("dataset description lacks 'path'")
        path = os.path.expanduser(path)
        if basedir is not None and not os.path.isabs(path):
            path = os.path.join(basedir, path)
        if "sidecar" in userinp:
            sidecar = userinp.pop("sidecar")
            if basedir is not None and not os.path.isabs(sidecar):
                sidecar = os.path.join(basedir, sidecar)
            with open(sidecar) as fp:
                declared = json.load(fp)
            for key, val in declared.items():
                if key != "path":
                    userinp.setdefault(key, val)
        try:
            return cls(path, **userinp)
        except TypeError as exc:
            raise DatasetError("invalid dataset description: {}".format(exc))

    def to_dict(self):
        return {
            "path": self.path,
            "columns": self.columns,
            "units": self.units,
            "sample_rate": self.sample_rate,
            "still": self.still,
            "estimation": self.estimation,
            "delimiter": self.delimiter,
        }

    def unit_factors(self):
        """Multipliers converting gyro, accel, mag columns to internal units."""
        if not self.units:
            raise DatasetError(
                "unit declarations missing for {}; declare gyro, accel and mag "
                "units".format(self.path)
            )
        factors = []
        for key, table in (
            ("gyro", GYRO_UNITS),
            ("accel", ACCEL_UNITS),
            ("mag", MAG_UNITS),
        ):
            unit = self.units.get(key)
            if unit is None:
                raise DatasetError("unit declaration missing for '{}'".format(key))
            if unit not in table:
                raise DatasetError(
                    "unsupported {} unit '{}'; use one of {}".format(
                        key, unit, sorted(table)
                    )
                )
            factors.append(table[unit])
        return factors


def ingest_csv(spec):
    """Read a dataset file into a SensorStream in internal units.

    Args:
        spec (DatasetSpec): file, column mapping, units and declared rate

    Returns:
        SensorStream: with `gaps` listing spacings above 1.5 periods

    Raises:
        DatasetError: for missing file, header mismatch, unparsable or
            non-finite rows (naming the file line), non-increasing time,
            undeclared units and a declared rate off by more than 1%.
    """
    gyro_f, accel_f, mag_f = spec.unit_factors()
    if not os.path.isfile(spec.path):
        raise DatasetError("dataset file {} not found".format(spec.path))
    with open(spec.path, "r") as infile:
        lines = [
            (ii + 1, line.strip())
            for ii, line in enumerate(infile)
            if line.strip() and not line.lstrip().startswith("#")
        ]
    if not lines:
        raise DatasetError("dataset file {} is empty".format(spec.path))
    header_line, header = lines[0]
    header = [name.strip() for name in header.split(spec.delimiter)]
    usecols = []
    for name in SCHEMA:
        column = spec.columns[name]
        if column not in header:
            raise DatasetError(
                "column '{}' (for '{}') not in header {}".format(column, name, header),
                line=header_line,
            )
        usecols.append(header.index(column))
    body = lines[1:]
    if not body:
        raise DatasetError("dataset file {} holds no samples".format(spec.path))
    ncols = len(header)
    for lineno, text in body:
        if len(text.split(spec.delimiter)) != ncols:
            raise DatasetError(
                "expected {} fields, found {}".format(
                    ncols, len(text.split(spec.delimiter))
                ),
                line=lineno,
            )
    try:
        data = np.genfromtxt(
            [text for _, text in body],
            delimiter=spec.delimiter,
            usecols=usecols,
            dtype=float,
            comments=None,
        )
    except ValueError as exc:
        raise DatasetError("cannot parse {}: {}".format(spec.path, exc))
    data = np.atleast_2d(data)
    bad = np.where(~np.all(np.isfinite(data), axis=1))[0]
    if len(bad):
        lineno, text = body[bad[0]]
        LOGGER.critical("Non-finite or unparsable row in %s: %s", spec.path, text)
        raise DatasetError("non-finite or unparsable value in '{}'".format(text), line=lineno)
    t = data[:, 0]
    dt = np.diff(t)
    nonmono = np.where(dt <= 0)[0]
    if len(nonmono):
        lineno, _ = body[nonmono[0] + 1]
        raise DatasetError(
            "time not increasing ({} after {})".format(
                t[nonmono[0] + 1], t[nonmono[0]]
            ),
            line=lineno,
        )
    gaps = []
    if len(t) > 1:
        median_dt = np.median(dt)
        observed = 1.0 / median_dt
        if abs(observed - spec.sample_rate) > RATE_RTOL * spec.sample_rate:
            raise DatasetError(
                "declared sample rate {} Hz, observed {:.4f} Hz".format(
                    spec.sample_rate, observed
                )
            )
        period = 1.0 / spec.sample_rate
        for kk in np.where(dt > GAP_FACTOR * period)[0]:
            missing = int(round(dt[kk] / period)) - 1
            gaps.append((float(t[kk]), float(t[kk + 1]), missing))
        if gaps:
            LOGGER.warning(
                "%d gaps in %s, %d samples missing in total",
                len(gaps),
                spec.path,
                sum(gap[2] for gap in gaps),
            )
            for gap in gaps:
                LOGGER.debug("gap %.4f -> %.4f s: %d samples missing", *gap)
    stream = SensorStream(
        t,
        data[:, 1:4] * gyro_f,
        data[:, 4:7] * accel_f,
        data[:, 7:10] * mag_f,
        gaps=gaps,
    )
    LOGGER.info("Read %s from %s", stream, spec.path)
    return stream


def write_csv(stream, path, sidecar=True):
    """Write `stream` in the ingest schema, internal units, full precision.

    With `sidecar`, a '<name>.dataset.json' unit declaration is written
    next to the file, so the pair reads back as a dataset.

    Returns:
        str: path of the sidecar file, or None
    """
    np.savetxt(
        path,
        stream.as_array(),
        fmt="%.17g",
        delimiter=",",
        header=",".join(SCHEMA),
        comments="",
    )
    LOGGER.info("Wrote %s to %s", stream, path)
    if not sidecar:
        return None
    base, _ = os.path.splitext(path)
    sidecarpath = base + ".dataset.json"
    declared = {
        "path": os.path.basename(path),
        "units": {"gyro": "rad/s", "accel": "m/s2", "mag": "raw"},
        "sample_rate": round(stream.sample_rate, 9),
    }
    with open(sidecarpath, "w") as fp:
        json.dump(declared, fp, indent=2)
    return sidecarpath


def still_average_bias(stream, window, motion_std=np.radians(0.5)):
    """Gyro bias by averaging a stationary window.

    Args:
        stream (SensorStream): input data
        window (2-sequence): (t0, t1) [s], must lie inside the stream
        motion_std (float): per-axis gyro standard deviation [rad/s] above
            which the window is taken to contain motion

    Returns:
        array: mean gyro reading in deg/s
    """
    t0, t1 = window
    if len(stream) == 0 or t0 < stream.t[0] - 1e-9 or t1 > stream.t[-1] + 1e-9 or t1 <= t0:
        raise DatasetError(
            "still window {} outside stream {}".format(tuple(window), stream)
        )
    gyro = stream.gyro[stream.mask(t0, t1)]
    if len(gyro) < 2:
        raise DatasetError("still window {} holds fewer than 2 samples".format(window))
    std = gyro.std(axis=0)
    if np.any(std > motion_std):
        LOGGER.critical(
            "Motion in still window %s: gyro std %s deg/s", window, np.degrees(std)
        )
        raise DatasetError(
            "motion detected in still window {}; gyro std {} deg/s".format(
                tuple(window), np.degrees(std)
            )
        )
    bias = np.degrees(gyro.mean(axis=0))
    LOGGER.info("Still-averaged gyro bias over %s s: %s deg/s", tuple(window), bias)
    return bias
