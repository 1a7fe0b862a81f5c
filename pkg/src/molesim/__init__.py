"""Insider-threat multi-agent simulator and pre-registered analysis harness."""

__version__ = "0.1.0"
