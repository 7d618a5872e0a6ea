"""Input-gradient saliency of the deterministic action along an episode."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ..env import OBSERVER_FEATURES


@dataclass
class SaliencyTrace:
    observations: np.ndarray
    action_mean: np.ndarray
    gradient: np.ndarray
    normalized: np.ndarray
    degenerate: np.ndarray

    def __len__(self):
        return self.observations.shape[0]


def saliency(actor, observations) -> SaliencyTrace:
    """Exact d(mean action)/d(observation) per row, plus a per-row copy
    scaled by its largest absolute component.  All-zero rows are flagged
    ``degenerate`` and stay zero."""
    obs = np.atleast_2d(np.asarray(observations, dtype=float))
    mean = actor.forward(obs)[:, 0]
    grad = actor.input_gradient(obs)
    scale = np.abs(grad).max(axis=1)
    degenerate = scale == 0.0
    normalized = np.zeros_like(grad)
    normalized[~degenerate] = grad[~degenerate] / scale[~degenerate, None]
    return SaliencyTrace(obs, mean, grad, normalized, degenerate)


def trace_observations(rows) -> np.ndarray:
    """Observer observations from episode-trace rows (one per step)."""
    return np.array([[row[f"o_{name}"] for name in OBSERVER_FEATURES] for row in rows], dtype=float)


def write_saliency_csv(trace: SaliencyTrace, path, steps=None) -> None:
    """Step x feature matrix of normalized gradients, raw gradients appended."""
    steps = range(1, len(trace) + 1) if steps is None else steps
    header = ["step", *OBSERVER_FEATURES, *(f"raw_{n}" for n in OBSERVER_FEATURES), "action_mean", "degenerate"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for step, norm, raw, mean, deg in zip(steps, trace.normalized, trace.gradient,
                                              trace.action_mean, trace.degenerate):
            writer.writerow([int(step), *map(repr, norm.tolist()), *map(repr, raw.tolist()),
                             repr(float(mean)), int(deg)])
