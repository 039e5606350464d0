"""Fault-tolerant navigation for a simulated ground vehicle.

Detects which failure afflicts the vehicle with an explainable decision tree,
quantifies the detection's uncertainty by local perturbation of the training
set, gates corrective controllers through reachability analysis and converges
on the best one by recursive Bayesian validation.
"""

__version__ = "0.1.0"
