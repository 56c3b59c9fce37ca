"""Discrete-event model of device-to-device data streaming over a disaggregated fabric."""

__version__ = "0.1.0"
