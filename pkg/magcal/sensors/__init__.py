"""Sensor streams: synthetic generation and CSV datasets."""
