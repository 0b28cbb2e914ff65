"""Order diagnostics for a trained filter bank.

Lateral coupling between neighboring channels should leave a trace in the
first conv layer: adjacent filters become unusually similar. Three views
of that order:

  * order_metric  — percent drop from the mean all-pair filter MSD to the
    mean circular-adjacent-pair MSD ("% less chaos"); near 0 for a random
    ordering, large when neighbors are similar.
  * two_opt_order — treats filters as cities of a circular TSP with MSD
    edge weights and polishes the native order with best-improvement
    2-opt; an already-ordered bank survives untouched.
  * correlation_profile — mean cosine similarity to the filter at each
    signed circular offset, centered on the reference filter.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import LengthTooSmall, ShapeMismatch, ZeroNormFilter
from .net import FilterBank


@dataclass(frozen=True)
class OrderReport:
    all_pair_msd: float
    adjacent_pair_msd: float
    percent_reduction: float
    tour: tuple[int, ...]
    correlation_profile: tuple[float, ...]

    def to_json(self) -> str:
        return json.dumps(
            {
                "all_pair_msd": self.all_pair_msd,
                "adjacent_pair_msd": self.adjacent_pair_msd,
                "percent_reduction": self.percent_reduction,
                "tour": list(self.tour),
                "correlation_profile": list(self.correlation_profile),
            }
        )


def _flat_filters(bank: FilterBank) -> np.ndarray:
    return bank.weights.reshape(bank.count, -1).astype(np.float64)


def msd(a: np.ndarray, b: np.ndarray) -> float:
    """Mean over all elements of the squared weight difference."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatch(f"filters have shapes {a.shape} and {b.shape}")
    return float(np.mean((a - b) ** 2))


def pairwise_msd(bank: FilterBank) -> np.ndarray:
    """f x f matrix of inter-filter MSDs (the TSP edge weights)."""
    flat = _flat_filters(bank)
    diff = flat[:, None, :] - flat[None, :, :]
    return np.mean(diff * diff, axis=2)


def order_metric(bank: FilterBank) -> tuple[float, float, float]:
    """(all-pair mean, circular-adjacent-pair mean, percent reduction).

    The all-pair mean runs over the f(f-1)/2 unordered pairs, the adjacent
    mean over the f circular neighbor pairs (last wraps to first). The
    reduction is 0 when the bank is degenerate (all-pair mean ~ 0).
    """
    f = bank.count
    if f < 3:
        raise LengthTooSmall(f"order metric needs at least 3 filters, got {f}")
    distances = pairwise_msd(bank)
    all_pair = float(distances[np.triu_indices(f, k=1)].mean())
    adjacent = float(distances[np.arange(f), (np.arange(f) + 1) % f].mean())
    if all_pair < 1e-12:
        return all_pair, adjacent, 0.0
    return all_pair, adjacent, 100.0 * (all_pair - adjacent) / all_pair


def tour_length(distances: np.ndarray, tour) -> float:
    tour = np.asarray(tour)
    return float(distances[tour, np.roll(tour, -1)].sum())


def two_opt_order(bank: FilterBank, threshold: float) -> tuple[int, ...]:
    """Best-improvement 2-opt on the circular filter tour.

    Starts from the native order. Each sweep scans every segment reversal
    (i, j), applies the single best one, and only accepts it if it
    shortens the tour by strictly more than threshold (ties broken by
    lowest (i, j)). Deterministic; terminates because the tour length
    strictly decreases with every accepted move. Acceptance is floored at
    an ulp-scale epsilon relative to the largest edge weight so that exact
    ties, which round to phantom one-ulp "improvements", cannot cycle.
    """
    f = bank.count
    if f < 3:
        raise LengthTooSmall(f"2-opt needs at least 3 filters, got {f}")
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    distances = pairwise_msd(bank)
    # ulp-scale "gains" from exact ties would otherwise be accepted forever
    numerical_floor = 64.0 * np.finfo(np.float64).eps * max(float(distances.max()), 1.0)
    min_gain = max(threshold, numerical_floor)
    tour = list(range(f))
    while True:
        best_gain = min_gain
        best_move = None
        for i in range(f - 1):
            before = tour[i - 1]  # i == 0 wraps to the closing edge
            for j in range(i + 1, f):
                if j - i >= f - 2:
                    continue  # reversing all (or all but one) vertices only relabels the circle
                after = tour[(j + 1) % f]
                gain = (
                    distances[before][tour[i]]
                    + distances[tour[j]][after]
                    - distances[before][tour[j]]
                    - distances[tour[i]][after]
                )
                if gain > best_gain:
                    best_gain = gain
                    best_move = (i, j)
        if best_move is None:
            return tuple(tour)
        i, j = best_move
        tour[i : j + 1] = reversed(tour[i : j + 1])


def correlation_profile(bank: FilterBank) -> np.ndarray:
    """Mean cosine similarity by signed circular offset.

    For each filter, cosine similarity to every other filter is indexed by
    circular offset and re-centered so the reference filter sits at offset
    0 (index f//2 of the returned vector, value exactly 1 after averaging).
    """
    f = bank.count
    if f < 2:
        raise LengthTooSmall(f"correlation profile needs at least 2 filters, got {f}")
    flat = _flat_filters(bank)
    norms = np.linalg.norm(flat, axis=1)
    zero = np.nonzero(norms < 1e-300)[0]
    if zero.size:
        raise ZeroNormFilter(int(zero[0]))
    unit = flat / norms[:, None]
    cosine = unit @ unit.T
    by_offset = np.empty(f)
    center = f // 2
    for m in range(f):
        by_offset[m] = cosine[np.arange(f), (np.arange(f) + m - center) % f].mean()
    return by_offset


def order_report(bank: FilterBank, threshold: float = 0.003) -> OrderReport:
    all_pair, adjacent, reduction = order_metric(bank)
    return OrderReport(
        all_pair_msd=all_pair,
        adjacent_pair_msd=adjacent,
        percent_reduction=reduction,
        tour=two_opt_order(bank, threshold),
        correlation_profile=tuple(correlation_profile(bank)),
    )
