"""Convex two-layer ReLU preference heads.

Phase I trains the network through its convex group-lasso reformulation with
ADMM; Phase II fits the output layer on a convex logistic preference loss.
Also included: triplet extraction from conversations, a binary feature store
and guided rescoring of generation candidates.
"""

__version__ = "0.1.0"
