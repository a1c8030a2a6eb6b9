"""fairgate: post-deployment fairness gatekeeper for binary classifiers.

Ingests prediction/outcome events from models in production, computes
per-subgroup parity and performance against a training-time nutrition-label
baseline, detects data and concept drift, gates canary / blue-green rollouts
on parity, and routes suspect observations through a human review queue.
"""

__version__ = "0.1.0"
