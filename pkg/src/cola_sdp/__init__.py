"""Globally optimal low-thrust collision-avoidance planning via moment-matrix SDP relaxation."""

__version__ = "0.1.0"
