"""Readable rules from the leaves of a distilled observer tree."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..env import OBSERVER_FEATURES, decay_inverse
from .tree import RegressionTree

SIN, COS, KAPPA = 3, 4, 1
SYMBOLS = {0: "omega", 1: "kappa", 2: "d_track", 5: "S"}


@dataclass
class Rule:
    """Conjunction of half-open intervals ``lower < x[f] <= upper``."""

    leaf: int
    action: float
    n_samples: int
    bounds: dict = field(default_factory=dict)
    text: str = ""
    theta_intervals: list | None = None
    theta_single: bool = True

    def mask(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        keep = np.ones(X.shape[0], dtype=bool)
        for f, (lo, hi) in self.bounds.items():
            keep &= (X[:, f] > lo) & (X[:, f] <= hi)
        return keep


def _path_bounds(path) -> dict:
    bounds = {}
    for f, thr, went_left in path:
        lo, hi = bounds.get(f, (-math.inf, math.inf))
        if went_left:
            hi = min(hi, thr)
        else:
            lo = max(lo, thr)
        bounds[f] = (lo, hi)
    return bounds


def theta_intervals(sin_bounds, cos_bounds) -> list[tuple[float, float]]:
    """Angles in [-pi, pi) whose sine and cosine satisfy the bounds, as
    ``(start, end)`` arcs in radians; an arc may wrap past +pi.

    Exact up to the membership test at segment midpoints between all
    candidate boundary angles.
    """
    s_lo, s_hi = sin_bounds
    c_lo, c_hi = cos_bounds
    cuts = {-math.pi, math.pi}
    for t in (s_lo, s_hi):
        if -1.0 <= t <= 1.0:
            a = math.asin(t)
            cuts.update({a, math.copysign(math.pi, a) - a if a != 0 else math.pi})
    for t in (c_lo, c_hi):
        if -1.0 <= t <= 1.0:
            a = math.acos(t)
            cuts.update({a, -a})
    cuts = sorted(c for c in cuts if -math.pi <= c <= math.pi)

    def inside(th):
        s, c = math.sin(th), math.cos(th)
        return s_lo < s <= s_hi and c_lo < c <= c_hi

    arcs = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b - a < 1e-15 or not inside(0.5 * (a + b)):
            continue
        if arcs and abs(arcs[-1][1] - a) < 1e-12:
            arcs[-1] = (arcs[-1][0], b)
        else:
            arcs.append((a, b))
    # join an arc ending at +pi with one starting at -pi
    if len(arcs) > 1 and abs(arcs[0][0] + math.pi) < 1e-12 and abs(arcs[-1][1] - math.pi) < 1e-12:
        first = arcs.pop(0)
        last = arcs.pop()
        arcs.append((last[0], first[1] + 2.0 * math.pi))
    return arcs


def _deg(rad) -> str:
    return f"{math.degrees(rad):.0f}°"


def _kappa_text(lo, hi, k) -> str:
    parts = []
    if lo > -math.inf:
        # kappa > lo  <=>  gap < inverse(lo)
        gap = math.ceil(decay_inverse(lo, k) - 1e-12) - 1 if lo > 0 else None
        parts.append(f"{lo:.2f} < kappa" + (f" (seen at most {gap} steps ago)" if gap is not None else ""))
    if hi < math.inf:
        gap = math.ceil(decay_inverse(hi, k) - 1e-12) if 0 < hi < 1 else None
        if gap is not None:
            parts.append(f"kappa <= {hi:.2f} (unseen for at least {gap} steps)")
        else:
            parts.append(f"kappa <= {hi:.2f}")
    return " ∧ ".join(parts)


def _interval_text(name, lo, hi) -> str:
    if lo > -math.inf and hi < math.inf:
        return f"{lo:.2f} < {name} <= {hi:.2f}"
    if lo > -math.inf:
        return f"{name} > {lo:.2f}"
    return f"{name} <= {hi:.2f}"


def describe(bounds: dict, k: float = 1.05):
    """Text of a bounds dict with the bearing back-converted to degrees."""
    terms = []
    arcs, single = None, True
    if SIN in bounds or COS in bounds:
        inf = (-math.inf, math.inf)
        arcs = theta_intervals(bounds.get(SIN, inf), bounds.get(COS, inf))
        single = len(arcs) == 1
        if single:
            a, b = arcs[0]
            if b - a >= 2.0 * math.pi - 1e-9:
                pass
            elif b > math.pi:
                terms.append(f"theta ∈ ({_deg(a)}, {_deg(b - 2 * math.pi)}] (across ±180°)")
            else:
                terms.append(f"{_deg(a)} < theta <= {_deg(b)}")
        else:
            raw = [_interval_text(n, *bounds[f]) for f, n in ((SIN, "sin theta"), (COS, "cos theta")) if f in bounds]
            pieces = " ∪ ".join(f"({_deg(a)}, {_deg(b)}]" for a, b in arcs) or "∅"
            terms.append(f"theta ∈ {pieces} [not a single interval: {' ∧ '.join(raw)}]")
    for f in sorted(bounds):
        if f in (SIN, COS):
            continue
        lo, hi = bounds[f]
        if f == KAPPA:
            terms.append(_kappa_text(lo, hi, k))
        else:
            terms.append(_interval_text(SYMBOLS.get(f, OBSERVER_FEATURES[f]), lo, hi))
    return (" ∧ ".join(terms) if terms else "always"), arcs, single


def extract_rules(tree: RegressionTree, action_threshold: float = 0.0, k: float = 1.05) -> list[Rule]:
    """One rule per leaf with ``|action| >= action_threshold``, strongest first."""
    rules = []
    nodes = tree.nodes_
    for leaf, path in tree.paths().items():
        value = float(nodes["value"][leaf])
        if abs(value) < action_threshold:
            continue
        bounds = _path_bounds(path)
        text, arcs, single = describe(bounds, k)
        rules.append(Rule(
            leaf=leaf,
            action=value,
            n_samples=int(nodes["n_samples"][leaf]),
            bounds=bounds,
            text=f"a ≈ {value:+.2f}: {text}",
            theta_intervals=arcs,
            theta_single=single,
        ))
    rules.sort(key=lambda r: (-abs(r.action), r.leaf))
    return rules


def rules_text(rules) -> str:
    return "".join(f"{r.text}    [leaf {r.leaf}, {r.n_samples} samples]\n" for r in rules)
