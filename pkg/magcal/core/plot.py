import os
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
from matplotlib.ticker import AutoMinorLocator
import numpy as np
from magcal.core.utils import get_logger

LOGGER = get_logger(__name__)

COLORS = [
    "#1f77b4",
    "#ff7f0e",
    "#2ca02c",
    "#d62728",
    "#9467bd",
    "#8c564b",
]


def set_mplrcpar(**kwargs):
    """Configure matplotlib rcParams."""
    matplotlib.rcParams.update(
        {
            "axes.titlesize": kwargs.get("fontsize", 14),
            "font.size": kwargs.get("fontsize", 14),
            "font.family": kwargs.get("fontfamily", "sans-serif"),
            "font.sans-serif": kwargs.get(
                "font", ["Arial", "DejaVu Sans", "Bitstream Vera Sans", "Helvetica", "sans-serif"]
            ),
        }
    )
    plt.rc("lines", linewidth=1.5)
    plt.rc("savefig", bbox="tight")


def set_axes(ax, xlabel, ylabel):
    """Axis labels and minor ticks."""
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.xaxis.set_minor_locator(AutoMinorLocator())
    ax.yaxis.set_minor_locator(AutoMinorLocator())


def seriesplot(
    tt,
    yy,
    linelabels=None,
    title=None,
    figsize=(8, 4.5),
    xlabel="time [s]",
    ylabel=None,
    ylim=None,
    bands=None,
    logy=False,
    filename=None,
):
    """Plot one or more time series against a common time axis.

    Args:
        tt (N array): abscissa
        yy (N or NxM array): one line per column
        linelabels (list of str): legend entry per column
        bands (NxM array): +/- envelope drawn around each column
        logy (bool): logarithmic ordinate
        filename (str): save and close the figure if given

    Returns:
        (fig, ax)
    """
    set_mplrcpar()
    tt = np.asarray(tt, dtype=float)
    yy = np.asarray(yy, dtype=float)
    if yy.ndim == 1:
        yy = yy[:, None]
    assert yy.shape[0] == tt.shape[0], (yy.shape, tt.shape)
    if linelabels is None:
        linelabels = [None] * yy.shape[1]
    fig, ax = plt.subplots(figsize=figsize)
    set_axes(ax, xlabel, ylabel)
    for ii in range(yy.shape[1]):
        color = COLORS[ii % len(COLORS)]
        ax.plot(tt, yy[:, ii], color=color, label=linelabels[ii])
        if bands is not None:
            band = np.asarray(bands)[:, ii]
            ax.plot(tt, band, color=color, ls="--", lw=0.8)
            ax.plot(tt, -band, color=color, ls="--", lw=0.8)
    if logy:
        ax.set_yscale("log")
    if ylim:
        ax.set_ylim(ylim)
    if len(tt):
        ax.set_xlim(tt[0], tt[-1])
    if title:
        ax.set_title(title)
    if any(linelabels):
        ax.legend(loc=0, fontsize=10)
    if filename:
        fig.savefig(filename)
        plt.close(fig)
    return fig, ax


def _load(path):
    data = np.genfromtxt(path, delimiter=",", names=True)
    return data


def plot_outputs(outdir):
    """PNG figure for every plot CSV present in `outdir`.

    Returns:
        list of str: written figures
    """
    written = []

    def target(name):
        path = os.path.join(outdir, name)
        written.append(path)
        return path

    path = os.path.join(outdir, "eigen_ratio.csv")
    if os.path.exists(path):
        data = _load(path)
        seriesplot(
            np.atleast_1d(data["t"]),
            np.atleast_1d(data["log10_ratio"]),
            title="Ellipsoid Gramian eigenvalue ratio",
            ylabel="log10(lambda_1 / lambda_2)",
            filename=target("eigen_ratio.png"),
        )
    path = os.path.join(outdir, "innovation.csv")
    if os.path.exists(path):
        data = _load(path)
        nu = np.column_stack([data["nu_x"], data["nu_y"], data["nu_z"]])
        sigma = np.column_stack([data["sigma_x"], data["sigma_y"], data["sigma_z"]])
        seriesplot(
            data["t"],
            nu,
            linelabels=["x", "y", "z"],
            bands=3 * sigma,
            title="Magnetometer innovation and 3-sigma bounds",
            ylabel="innovation",
            filename=target("innovation.png"),
        )
    path = os.path.join(outdir, "estimates.csv")
    if os.path.exists(path):
        data = _load(path)
        seriesplot(
            data["t"],
            np.column_stack([data["eps_x_deg"], data["eps_y_deg"], data["eps_z_deg"]]),
            linelabels=["x", "y", "z"],
            title="Gyroscope bias estimate",
            ylabel="bias [deg/s]",
            filename=target("gyro_bias.png"),
        )
        seriesplot(
            data["t"],
            np.column_stack([data["h_x"], data["h_y"], data["h_z"]]),
            linelabels=["x", "y", "z"],
            title="Magnetometer bias estimate",
            ylabel="h",
            filename=target("mag_bias.png"),
        )
    path = os.path.join(outdir, "attitude_discrepancy.csv")
    if os.path.exists(path):
        data = _load(path)
        seriesplot(
            data["t"],
            np.column_stack([data["roll_deg"], data["pitch_deg"], data["yaw_deg"]]),
            linelabels=["roll", "pitch", "yaw"],
            title="Filter minus gyro-maintained attitude",
            ylabel="angle [deg]",
            filename=target("attitude_discrepancy.png"),
        )
    path = os.path.join(outdir, "accel_gating.csv")
    if os.path.exists(path):
        data = _load(path)
        seriesplot(
            data["t"],
            np.column_stack([data["accel_norm"], np.where(data["accepted"] > 0, data["accel_norm"], np.nan)]),
            linelabels=["|y_a|", "accepted"],
            title="Accelerometer gating",
            ylabel="[m/s^2]",
            filename=target("accel_gating.png"),
        )
    LOGGER.info("Wrote %d figures to %s", len(written), outdir)
    return written
