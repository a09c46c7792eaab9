"""Magnetometer calibration and alignment to inertial sensors."""

__version__ = "0.1.0"
