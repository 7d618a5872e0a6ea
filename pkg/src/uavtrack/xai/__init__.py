"""Saliency along episodes and decision-tree distillation of a policy."""

from .grid import (
    GridSpec,
    dataset_hash,
    fit_tree,
    grid_observations,
    holdout_observations,
    policy_mean,
    sample_policy_grid,
    select_ccp_alpha,
    tree_fidelity,
)
from .rules import Rule, extract_rules, rules_text, theta_intervals
from .saliency import SaliencyTrace, saliency, trace_observations, write_saliency_csv
from .tree import RegressionTree

__all__ = [
    "GridSpec", "RegressionTree", "Rule", "SaliencyTrace", "dataset_hash", "extract_rules",
    "fit_tree", "grid_observations", "holdout_observations", "policy_mean", "rules_text",
    "saliency", "sample_policy_grid", "select_ccp_alpha", "theta_intervals", "trace_observations",
    "tree_fidelity", "write_saliency_csv",
]
