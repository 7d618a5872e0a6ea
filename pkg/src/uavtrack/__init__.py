"""Co-training an observing UAV and an evading target in a range-bearing
tracking game, with baselines, evaluation and policy explanations."""

__version__ = "0.1.0"
