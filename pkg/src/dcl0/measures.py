"""Weighted (pseudo-)norms on finite discrete measure spaces.

A vector of positive weights ``lam`` turns ``{0, ..., n-1}`` into a purely
atomic measure space with ``mu({i}) = lam[i]``.  On top of it we provide the
support measure (L0), the weighted L1 norm, and the largest-K-norm

    |x|_K = max { sum_{i in I} lam_i |x_i| : sum_{i in I} lam_i <= K },

which is a knapsack maximum.  Exact oracles (subset enumeration, integer
dynamic programming), the greedy approximation used inside the DC solver,
the fractional relaxation, and subgradients of the largest-K-norm live here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DiscreteMeasureSpace",
    "KSelection",
    "OracleLimitError",
    "weighted_l0",
    "weighted_l1",
    "largest_k_greedy",
    "largest_k_exact",
    "largest_k_relaxed",
    "largest_k_auto",
    "reformulation_gap",
    "subgradient_largest_k",
]

#: values with |x_i| below this count as zero for the support measure
ZERO_THRESHOLD = 1e-10

#: relative slack on the weight budget, absorbs floating-point weight sums
BUDGET_RTOL = 1e-12

#: largest atom count handled by subset enumeration
ENUM_LIMIT = 25

#: largest atom count handled by the integer-weight dynamic program
DP_LIMIT = 10_000

#: cap on (atoms x integer capacity) for the DP decision table
DP_CELL_LIMIT = 200_000_000


class OracleLimitError(ValueError):
    """Instance is too large for the requested exact oracle."""


class DiscreteMeasureSpace:
    """Finite set of atoms with positive measures."""

    def __init__(self, weights):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a non-empty 1-d array")
        if not np.all(w > 0.0):
            raise ValueError("all atom measures must be positive")
        if not np.isfinite(w).all():
            raise ValueError("atom measures must be finite")
        self.weights = w
        self.n = w.size

    def total_measure(self) -> float:
        return float(self.weights.sum())

    def __repr__(self):
        return f"DiscreteMeasureSpace(n={self.n}, total={self.total_measure():g})"


@dataclass
class KSelection:
    """Index set realizing (or approximating) a weighted largest-K maximum.

    ``indices`` are distinct atom indices, ``value`` the attained weighted
    sum, ``weight`` the consumed budget, and ``exact`` tells whether the
    selection came from an exact oracle rather than the greedy scan.
    """

    indices: np.ndarray
    value: float
    weight: float
    exact: bool

    def __post_init__(self):
        self.indices = np.asarray(self.indices, dtype=int)


def _check_dims(x, space):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != space.n:
        raise ValueError(f"vector has length {x.size}, space has {space.n} atoms")
    return x


def _check_budget(budget, space):
    total = space.total_measure()
    if not 0.0 <= budget <= total * (1.0 + BUDGET_RTOL):
        raise ValueError(f"budget {budget} outside [0, {total}]")
    return float(budget)


def weighted_l0(x, space: DiscreteMeasureSpace, zero_threshold=ZERO_THRESHOLD) -> float:
    """Measure of the support: sum of atom measures where ``|x_i|`` exceeds
    the zero threshold."""
    x = _check_dims(x, space)
    return float(space.weights[np.abs(x) > zero_threshold].sum())


def weighted_l1(x, space: DiscreteMeasureSpace) -> float:
    """Weighted L1 norm ``sum_i lam_i |x_i|``."""
    x = _check_dims(x, space)
    return float(space.weights @ np.abs(x))


def _selection(indices, absx, lam, exact):
    idx = np.sort(np.asarray(indices, dtype=int))
    value = float(lam[idx] @ absx[idx]) if idx.size else 0.0
    weight = float(lam[idx].sum()) if idx.size else 0.0
    return KSelection(indices=idx, value=value, weight=weight, exact=exact)


def largest_k_greedy(x, space: DiscreteMeasureSpace, budget,
                     zero_threshold=ZERO_THRESHOLD) -> KSelection:
    """Greedy knapsack scan for the largest-K maximum.

    Atoms are visited by decreasing ``|x_i|`` (ties by ascending index) and
    taken whenever their measure still fits the remaining budget.  Atoms with
    ``|x_i|`` at or below the zero threshold are never taken.  The result is
    feasible but may undershoot the exact maximum.
    """
    x = _check_dims(x, space)
    budget = _check_budget(budget, space)
    lam = space.weights
    absx = np.abs(x)
    candidates = np.flatnonzero(absx > zero_threshold)
    # stable sort on -|x| keeps ascending index order within ties
    order = candidates[np.argsort(-absx[candidates], kind="stable")]
    slack = budget + BUDGET_RTOL * space.total_measure()
    taken = []
    used = 0.0
    for i in order:
        if used + lam[i] <= slack:
            taken.append(i)
            used += lam[i]
    return _selection(taken, absx, lam, exact=False)


def _float_gcd(values, rtol=1e-9):
    """Approximate positive real gcd of a set of floats, or None."""
    g = 0.0
    for v in values:
        a, b = max(g, v), min(g, v)
        while b > rtol * a:
            a, b = b, a - np.floor(a / b) * b
        g = a
    if g <= 0.0:
        return None
    ratios = np.asarray(values) / g
    if np.max(np.abs(ratios - np.round(ratios))) > rtol:
        return None
    return g


def _int_capacity(ratio):
    # relative slack so that counts in the thousands survive float noise;
    # any overshoot stays within the budget tolerance of the selection
    return int(np.floor(ratio + BUDGET_RTOL * max(1.0, ratio)))


def _exact_equal_weights(absx, lam, budget):
    # all atom measures equal: take the largest |x_i| until the budget is full
    w = lam[0]
    count = min(_int_capacity(budget / w), lam.size)
    candidates = np.flatnonzero(absx > 0.0)
    if count == 0 or candidates.size == 0:
        return _selection([], absx, lam, exact=True)
    order = candidates[np.argsort(-absx[candidates], kind="stable")]
    return _selection(order[:min(count, order.size)], absx, lam, exact=True)


def _exact_dp(absx, lam, budget, unit):
    """0/1 knapsack DP on integer-rescaled weights with traceback."""
    items = np.flatnonzero(absx > 0.0)
    w_int = np.round(lam[items] / unit).astype(np.int64)
    cap = _int_capacity(budget / unit)
    if cap <= 0 or items.size == 0:
        return _selection([], absx, lam, exact=True)
    w_int = np.minimum(w_int, cap + 1)
    if items.size * (cap + 1) > DP_CELL_LIMIT:
        raise OracleLimitError(
            f"dp table {items.size} x {cap + 1} exceeds the configured limit")
    profits = lam[items] * absx[items]
    best = np.zeros(cap + 1)
    take = np.zeros((items.size, cap + 1), dtype=bool)
    for j, (w, p) in enumerate(zip(w_int, profits)):
        if w > cap:
            continue
        cand = best[:cap + 1 - w] + p
        improved = cand > best[w:]
        take[j, w:] = improved
        np.maximum(best[w:], cand, out=best[w:])
    chosen = []
    c = cap
    for j in range(items.size - 1, -1, -1):
        if take[j, c]:
            chosen.append(items[j])
            c -= w_int[j]
    return _selection(chosen, absx, lam, exact=True)


def _subset_sums(weights, profits):
    w = np.zeros(1)
    p = np.zeros(1)
    for wi, pi in zip(weights, profits):
        w = np.concatenate([w, w + wi])
        p = np.concatenate([p, p + pi])
    return w, p


def _exact_enumerate(absx, lam, budget):
    """Meet-in-the-middle subset enumeration."""
    items = np.flatnonzero(absx > 0.0)
    if items.size == 0:
        return _selection([], absx, lam, exact=True)
    slack = budget + BUDGET_RTOL * lam.sum()
    half = items.size // 2
    left, right = items[:half], items[half:]
    wl, pl = _subset_sums(lam[left], lam[left] * absx[left])
    wr, pr = _subset_sums(lam[right], lam[right] * absx[right])
    # sort right halves by weight and keep the running best profit
    order = np.argsort(wr, kind="stable")
    wr, pr = wr[order], pr[order]
    best_pr = np.maximum.accumulate(pr)
    best_at = np.zeros(wr.size, dtype=np.int64)
    run = 0
    for i in range(wr.size):
        if pr[i] > pr[run]:
            run = i
        best_at[i] = run
    # for every left half, the best right half among those that still fit
    pos = np.searchsorted(wr, slack - wl, side="right") - 1
    vals = np.full(wl.size, -np.inf)
    feasible = pos >= 0
    vals[feasible] = pl[feasible] + best_pr[pos[feasible]]
    ml = int(np.argmax(vals))
    mr = int(order[best_at[pos[ml]]])
    chosen = [left[b] for b in range(left.size) if ml >> b & 1]
    chosen += [right[b] for b in range(right.size) if mr >> b & 1]
    return _selection(chosen, absx, lam, exact=True)


def largest_k_exact(x, space: DiscreteMeasureSpace, budget,
                    enum_limit=ENUM_LIMIT, dp_limit=DP_LIMIT) -> KSelection:
    """Exact largest-K maximum.

    Uses, in order of preference: the closed form for equal atom measures,
    a dynamic program when the measures are integer multiples of a common
    unit, and meet-in-the-middle subset enumeration for up to ``enum_limit``
    atoms.  Raises :class:`OracleLimitError` when none applies.
    """
    x = _check_dims(x, space)
    budget = _check_budget(budget, space)
    lam = space.weights
    absx = np.abs(x)
    if budget == 0.0:
        return _selection([], absx, lam, exact=True)
    if np.ptp(lam) <= BUDGET_RTOL * lam[0]:
        return _exact_equal_weights(absx, lam, budget)
    if space.n <= dp_limit:
        unit = _float_gcd(lam)
        if unit is not None:
            cap = _int_capacity(budget / unit)
            if space.n * (cap + 1) <= DP_CELL_LIMIT:
                return _exact_dp(absx, lam, budget, unit)
    if space.n <= enum_limit:
        return _exact_enumerate(absx, lam, budget)
    raise OracleLimitError(
        f"no exact oracle for {space.n} atoms with incommensurate measures")


def largest_k_relaxed(x, space: DiscreteMeasureSpace, budget) -> float:
    """Fractional relaxation: atoms may be taken partially, so the optimum
    is the greedy fill with a split at the budget boundary.  Always an upper
    bound for the exact largest-K value."""
    x = _check_dims(x, space)
    budget = _check_budget(budget, space)
    lam = space.weights
    absx = np.abs(x)
    candidates = np.flatnonzero(absx > 0.0)
    order = candidates[np.argsort(-absx[candidates], kind="stable")]
    value = 0.0
    remaining = budget
    for i in order:
        if remaining <= 0.0:
            break
        frac = min(1.0, remaining / lam[i])
        value += frac * lam[i] * absx[i]
        remaining -= frac * lam[i]
    return float(value)


def largest_k_auto(x, space: DiscreteMeasureSpace, budget) -> KSelection:
    """Exact selection when an oracle applies, greedy otherwise; the
    ``exact`` flag on the result records which path was taken."""
    try:
        return largest_k_exact(x, space, budget)
    except OracleLimitError:
        return largest_k_greedy(x, space, budget)


def reformulation_gap(x, space: DiscreteMeasureSpace, budget) -> float:
    """Gap ``l1 - largest_k``; zero exactly when the support measure fits
    the budget (nonnegative whenever the exact oracle was used)."""
    sel = largest_k_auto(x, space, budget)
    return weighted_l1(x, space) - sel.value


def subgradient_largest_k(x, space: DiscreteMeasureSpace, budget,
                          selection: KSelection, zero_sign_policy="zero"):
    """Subgradient of the largest-K-norm from a maximizing selection.

    On selected atoms the component is ``lam_i * sign(x_i)``; where the
    selected atom has ``x_i == 0`` the sign is chosen by ``zero_sign_policy``
    ("zero", "plus", "minus", or an explicit sign vector).  Off the
    selection the subgradient vanishes.  This is a true subgradient only
    when the selection is exact.
    """
    x = _check_dims(x, space)
    if selection.indices.size and selection.indices.max() >= space.n:
        raise ValueError("selection indices out of range for this space")
    if isinstance(zero_sign_policy, str):
        try:
            fill = {"zero": 0.0, "plus": 1.0, "minus": -1.0}[zero_sign_policy]
        except KeyError:
            raise ValueError(f"unknown zero_sign_policy {zero_sign_policy!r}")
        signs = np.full(space.n, fill)
    else:
        signs = np.asarray(zero_sign_policy, dtype=float)
        if signs.shape != (space.n,):
            raise ValueError("sign vector must match the number of atoms")
    a = np.sign(x)
    a[x == 0.0] = signs[x == 0.0]
    s = np.zeros(space.n)
    idx = selection.indices
    s[idx] = space.weights[idx] * a[idx]
    return s
