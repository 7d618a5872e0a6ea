"""Uniform observation grids for global policy distillation."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from sklearn.metrics import r2_score

from .tree import RegressionTree

BLOCK_ROWS = 65536


@dataclass(frozen=True)
class GridSpec:
    """Sampling ranges of the five free observer-observation dimensions.

    The bearing is sampled as an angle on ``[-pi, pi)`` and expanded to its
    sine and cosine together, giving ``n ** 5`` rows.
    """

    n: int = 21
    omega: tuple = (-1.0, 1.0)
    kappa: tuple | None = None
    dist: tuple = (0.0, 1.0)
    entropy: tuple = (-0.5, 1.0)
    k: float = 1.05
    max_gap_steps: int = 60

    @property
    def kappa_range(self) -> tuple:
        return self.kappa or (self.k ** (-self.max_gap_steps), 1.0)

    @property
    def n_rows(self) -> int:
        return self.n**5

    def axes(self) -> list[np.ndarray]:
        n = self.n
        theta = -math.pi + 2.0 * math.pi * np.arange(n) / n
        return [
            np.linspace(*self.omega, n),
            np.linspace(*self.kappa_range, n),
            np.linspace(*self.dist, n),
            theta,
            np.linspace(*self.entropy, n),
        ]

    def offset_axes(self) -> list[np.ndarray]:
        """Axes shifted by half a cell: midpoints between grid values (and
        between neighbouring angles, including across the wrap)."""
        axes = self.axes()
        out = [0.5 * (a[:-1] + a[1:]) for a in axes]
        out[3] = axes[3] + math.pi / self.n
        return out


def expand(columns) -> np.ndarray:
    """(omega, kappa, dist, theta, entropy) columns -> observer observations."""
    om, ka, di, th, en = columns
    return np.column_stack([om, ka, di, np.sin(th), np.cos(th), en])


def grid_observations(grid: GridSpec) -> np.ndarray:
    """All ``n**5`` grid points in C order of (omega, kappa, dist, theta, entropy)."""
    mesh = np.meshgrid(*grid.axes(), indexing="ij")
    return expand([m.reshape(-1) for m in mesh])


def holdout_observations(grid: GridSpec, n_samples: int = 100_000, seed: int = 0) -> np.ndarray:
    """Random subsample of the half-cell offset lattice."""
    axes = grid.offset_axes()
    shape = tuple(a.size for a in axes)
    total = int(np.prod(shape))
    rng = np.random.default_rng(seed)
    flat = np.sort(rng.choice(total, size=min(n_samples, total), replace=False))
    idx = np.unravel_index(flat, shape)
    return expand([a[i] for a, i in zip(axes, idx)])


def policy_mean(actor, obs) -> np.ndarray:
    """Deterministic action of ``actor`` on many rows, in fixed-size blocks."""
    out = np.empty(obs.shape[0])
    for start in range(0, obs.shape[0], BLOCK_ROWS):
        out[start:start + BLOCK_ROWS] = actor.forward(obs[start:start + BLOCK_ROWS])[:, 0]
    return out


def sample_policy_grid(actor, grid: GridSpec | None = None) -> tuple[np.ndarray, np.ndarray]:
    grid = grid or GridSpec()
    obs = grid_observations(grid)
    return obs, policy_mean(actor, obs)


def dataset_hash(obs, actions) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(obs, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(actions, dtype="<f8").tobytes())
    return h.hexdigest()


def select_ccp_alpha(tree: RegressionTree, X_hold, y_hold, tolerance=0.01) -> float:
    """Largest pruning alpha whose holdout R^2 stays within ``tolerance`` of
    the best alpha on the pruning path."""
    alphas = tree.cost_complexity_pruning_path()
    scores = np.array([r2_score(y_hold, tree.pruned(a).predict(X_hold)) for a in alphas])
    ok = np.flatnonzero(scores >= scores.max() - tolerance)
    return float(alphas[ok.max()])


def fit_tree(X, y, max_depth=8, ccp_alpha=None, holdout=None, tolerance=0.01) -> RegressionTree:
    """Distill samples into a pruned tree.

    With ``ccp_alpha=None`` the coefficient is chosen on ``holdout``
    (``(X, y)``) by :func:`select_ccp_alpha`; without a holdout no pruning
    is applied.
    """
    tree = RegressionTree(max_depth=max_depth, ccp_alpha=0.0 if ccp_alpha is None else ccp_alpha)
    tree.fit(X, y)
    if ccp_alpha is None and holdout is not None:
        alpha = select_ccp_alpha(tree, holdout[0], holdout[1], tolerance)
        tree = tree.pruned(alpha)
    return tree


def tree_fidelity(tree: RegressionTree, actor, holdout_obs) -> float:
    """R^2 of the tree against the actor's mean action on held-out rows."""
    return float(tree.score(holdout_obs, policy_mean(actor, holdout_obs)))
