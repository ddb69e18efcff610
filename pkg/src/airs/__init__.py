"""Autonomic intrusion response: signature detection, expected-utility planning, simulated execution."""

__version__ = "0.1.0"
