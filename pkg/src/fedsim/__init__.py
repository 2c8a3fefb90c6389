"""Deterministic desk-scale federated learning simulator.

Protocols: parameter averaging (FedAvg), proxy-set logit distillation (FedKD)
and data-free distillation through a server-side conditional generator
(FedKDF), plus Standalone and Centralized baselines.
"""

__version__ = "0.1.0"
