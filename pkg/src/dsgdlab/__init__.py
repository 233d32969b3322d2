"""Decentralized SGD laboratory: gossip simulation, consensus rates, stepsize tuning."""

from __future__ import annotations

__version__ = "0.1.0"
