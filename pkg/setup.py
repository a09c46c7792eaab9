#!/usr/bin/env python3

# Please see the accompanying LICENSE file for further information.

from setuptools import setup
import os
import sys

if sys.version_info < (3, 6, 0, "final", 0):
    raise SystemExit("Python 3.6 or later is required!")

name = "magcal"
short_description = (
    "Magnetometer calibration and alignment to gyroscope and "
    + "accelerometer by filtering and batch estimation"
)
long_description = open("README.txt").read()

version = "0.1.0"

package_dir = {
    "magcal": "magcal",
}

packages = []
for dirname, dirnames, filenames in os.walk("magcal"):
    if "__init__.py" in filenames:
        packages.append(dirname.replace("/", "."))

package_data = {}

scripts = [
    "bin/magcal",
]

# data_files needs (directory, files-in-this-directory) tuples
data_files = []

setup(
    name=name,
    version=version,
    description=short_description,
    long_description=long_description,
    author="magcal developers",
    keywords=[
        "magnetometer",
        "calibration",
        "gyroscope",
        "accelerometer",
        "kalman filter",
        "observability",
        "inertial sensors",
        "magcal",
    ],
    license="MIT",
    platforms=["any"],
    packages=packages,
    package_dir=package_dir,
    package_data=package_data,
    scripts=scripts,
    data_files=data_files,
    install_requires=["numpy", "scipy", "pyyaml", "matplotlib"],
    classifiers=[],
)
