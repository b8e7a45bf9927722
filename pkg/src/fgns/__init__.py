"""Example-based explanations for image classifiers.

The package trains a small reference network, mines class-level feature
masks from local surrogate attributions validated by global importance
scoring, condenses each class into a median prototype, and ranks candidate
neighbors by feature-weighted closeness to that prototype. An
activation-space k-NN baseline and a quantitative evaluation harness are
included, all behind a FastAPI service with a thin CLI client.
"""

__version__ = "0.1.0"
