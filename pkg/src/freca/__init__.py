"""Client contribution assessment for federated learning.

FedTruth truth-discovery aggregation, model-boosting and noise attacks, and
four per-client contribution metrics (FRECA aggregation weight, FRECA net
contribution, exact Shapley value, leave-one-out) on a small deterministic
FL simulator.
"""

__version__ = "0.1.0"
