"""Outage analysis of cooperative relaying in Poisson ad hoc networks."""

from coopnet.netmodel import NetworkParams, derive_scalars, validate_params

__all__ = ["NetworkParams", "derive_scalars", "validate_params"]
__version__ = "0.1.0"
