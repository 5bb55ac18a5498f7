"""One-shot information quantities of a joint pmf.

Notation in names:
    he      -- epsilon-conditional entropy, min over A of P(A) H_A(X|Y)
    the     -- its linear surrogate, min over A of sum_A P log 1/P_{X|Y}
    hhe     -- the sorting surrogate with cut index i*
    ohe     -- per-symbol tail quantile of -log P_{X|Y}(x|Y_x)
    ohs     -- P_X-average of ohe

The subset searches are exhaustive.  Both objectives split into a sum of
per-column terms (one per y), so every column's 2^|X| subsets are tabulated,
dominated (mass, value) pairs are dropped, and the columns are combined.
Dropping a pair that another pair beats in both mass and value never removes
the constrained minimum, so the search stays exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .dist import JointPMF, budgets, conditional_entropy, xlogy_inv
from .errors import BoundViolated, BudgetExceeded, EmptyRestriction, InputError

# slack on every "mass >= 1 - eps" feasibility test
FEAS_TOL = 1e-12
# information values (bits) closer than this count as ties when ranking
TIE_TOL = 1e-10


def tie_keys(values: np.ndarray, tol: float = TIE_TOL) -> np.ndarray:
    """Integer sort keys that merge runs of values within ``tol`` of their
    neighbour, so float noise never overrides a secondary tie-break."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return np.zeros(0, dtype=np.int64)
    order = np.argsort(values, kind="stable")
    with np.errstate(invalid="ignore"):  # inf - inf for zero-probability cells
        steps = np.concatenate([[0], (np.diff(values[order]) > tol).astype(np.int64)])
    keys = np.empty(values.size, dtype=np.int64)
    keys[order] = np.cumsum(steps)
    return keys


def _check_eps(eps: float) -> float:
    eps = float(eps)
    if not 0.0 <= eps <= 1.0 or math.isnan(eps):
        raise InputError(f"epsilon must lie in [0, 1], got {eps}")
    return eps


@dataclass(frozen=True)
class RestrictedSet:
    """A subset of X x Y given by (x index, y index) pairs, with its mass."""

    members: frozenset
    mass: float

    @classmethod
    def of(cls, pmf: JointPMF, members: Iterable[tuple[int, int]]) -> "RestrictedSet":
        members = frozenset((int(i), int(j)) for i, j in members)
        mass = float(sum(pmf.p[i, j] for i, j in members))
        return cls(members, mass)

    @classmethod
    def from_mask(cls, pmf: JointPMF, mask: np.ndarray) -> "RestrictedSet":
        return cls.of(pmf, zip(*np.nonzero(mask)))

    @classmethod
    def full(cls, pmf: JointPMF) -> "RestrictedSet":
        return cls.from_mask(pmf, np.ones(pmf.shape, dtype=bool))

    @classmethod
    def empty(cls) -> "RestrictedSet":
        return cls(frozenset(), 0.0)

    def mask(self, shape: tuple[int, int]) -> np.ndarray:
        m = np.zeros(shape, dtype=bool)
        for i, j in self.members:
            m[i, j] = True
        return m

    def column(self, j: int) -> set[int]:
        return {i for i, jj in self.members if jj == j}

    def __contains__(self, cell) -> bool:
        return tuple(cell) in self.members

    def __len__(self) -> int:
        return len(self.members)

    def encode(self, pmf: JointPMF) -> str:
        """Witness string ``x:y;x:y`` with labels, in index order."""
        return ";".join(
            f"{pmf.x_labels[i]}:{pmf.y_labels[j]}" for i, j in sorted(self.members)
        )


def restricted_entropy(pmf: JointPMF, A: RestrictedSet) -> float:
    """H_A(X|Y): conditional entropy of P_XY restricted to A and renormalised."""
    if A.mass <= 0:
        raise EmptyRestriction("restriction has zero mass")
    q = np.where(A.mask(pmf.shape), pmf.p, 0.0) / A.mass
    qy = q.sum(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        cond = np.where(qy > 0, q / qy, 0.0)
    return float(xlogy_inv(q, cond).sum())


# --- exhaustive subset search ------------------------------------------------

def _subset_bits(k: int) -> np.ndarray:
    """Row s is the indicator vector of subset s of range(k)."""
    masks = np.arange(2**k, dtype=np.int64)
    return ((masks[:, None] >> np.arange(k)) & 1).astype(bool)


def _pareto(mass: np.ndarray, value: np.ndarray) -> np.ndarray:
    """Indices of pairs not beaten by another pair (mass >=, value <=)."""
    order = np.lexsort((value, -mass))
    keep = []
    best = math.inf
    for idx in order:
        if value[idx] < best:
            keep.append(idx)
            best = value[idx]
    return np.asarray(keep, dtype=np.int64)


ColumnTable = tuple[np.ndarray, np.ndarray]


def _min_over_columns(tables: list[ColumnTable], threshold: float) -> tuple[float, list[int]]:
    """Minimise sum_j value_j[s_j] subject to sum_j mass_j[s_j] >= threshold.

    Returns the minimum and the chosen subset id per column.  Ties resolve to
    the smallest subset encoding (column 0 most significant).
    """
    mass = np.zeros(1)
    value = np.zeros(1)
    choice = np.zeros((1, 0), dtype=np.int64)
    for col_mass, col_value in tables:
        keep = _pareto(col_mass, col_value)
        cm, cv = col_mass[keep], col_value[keep]
        mass = (mass[:, None] + cm[None, :]).ravel()
        value = (value[:, None] + cv[None, :]).ravel()
        choice = np.concatenate(
            [np.repeat(choice, len(keep), axis=0), np.tile(keep, len(choice))[:, None]], axis=1
        )
        front = _pareto(mass, value)
        mass, value, choice = mass[front], value[front], choice[front]
    feasible = mass >= threshold - FEAS_TOL
    if not np.any(feasible):
        raise InputError("no subset meets the mass constraint")
    idx = np.nonzero(feasible)[0]
    best = value[idx].min()
    ties = idx[value[idx] == best]
    pick = min(ties, key=lambda t: tuple(choice[t]))
    return float(best), [int(c) for c in choice[pick]]


def _column_tables(pmf: JointPMF, column_value: Callable[[np.ndarray, int], np.ndarray]) -> tuple[list[ColumnTable], np.ndarray]:
    nx, ny = pmf.shape
    if nx * ny > budgets()["subset"]:
        raise BudgetExceeded(f"{nx * ny} cells exceed the subset-enumeration budget")
    bits = _subset_bits(nx)
    tables = []
    for j in range(ny):
        col_mass = bits.astype(float) @ pmf.p[:, j]
        tables.append((col_mass, column_value(bits, j)))
    return tables, bits


def _set_from_choice(pmf: JointPMF, bits: np.ndarray, choice: list[int]) -> RestrictedSet:
    members = [(int(i), j) for j, s in enumerate(choice) for i in np.nonzero(bits[s])[0]]
    return RestrictedSet.of(pmf, members)


def _he_column(pmf: JointPMF):
    def value(bits: np.ndarray, j: int) -> np.ndarray:
        col = pmf.p[:, j]
        m = bits.astype(float) @ col
        own = bits.astype(float) @ xlogy_inv(col, col)
        return own - xlogy_inv(m, m)
    return value


def _the_column(pmf: JointPMF):
    def value(bits: np.ndarray, j: int) -> np.ndarray:
        return bits.astype(float) @ xlogy_inv(pmf.p[:, j], pmf.x_given_y[:, j])
    return value


def he_bruteforce(pmf: JointPMF, eps: float) -> tuple[float, RestrictedSet]:
    """H^eps(X|Y) by exhaustive search, with one minimising set A.

    Uses P(A) H_A(X|Y) = sum_y [sum_{x in A(y)} p log 1/p - m_y log 1/m_y],
    m_y = P_XY(A(y), y).  eps = 1 gives 0 and the empty set.
    """
    eps = _check_eps(eps)
    if eps == 1.0:
        return 0.0, RestrictedSet.empty()
    tables, bits = _column_tables(pmf, _he_column(pmf))
    best, choice = _min_over_columns(tables, 1.0 - eps)
    return max(best, 0.0), _set_from_choice(pmf, bits, choice)


def the_bruteforce(pmf: JointPMF, eps: float) -> float:
    """H~^eps(X|Y) = min over A with P(A) >= 1-eps of sum_A P log 1/P_{X|Y}."""
    return the_bruteforce_witness(pmf, eps)[0]


def the_bruteforce_witness(pmf: JointPMF, eps: float) -> tuple[float, RestrictedSet]:
    eps = _check_eps(eps)
    if eps == 1.0:
        return 0.0, RestrictedSet.empty()
    tables, bits = _column_tables(pmf, _the_column(pmf))
    best, choice = _min_over_columns(tables, 1.0 - eps)
    return best, _set_from_choice(pmf, bits, choice)


# --- sorting surrogate -------------------------------------------------------

@dataclass(frozen=True)
class SortedPairRanking:
    """Cells ordered by P_{X|Y} descending (ties: P_XY descending, then (x, y)).

    ``order`` holds flat cell indices (x * |Y| + y); ``cumulative[k]`` is the
    mass of the first k+1 cells; ``i_star`` is 1-based, 0 meaning no cell.
    """

    order: np.ndarray
    cumulative: np.ndarray
    i_star: int
    ny: int

    def cell(self, k: int) -> tuple[int, int]:
        """(x, y) index pair at 0-based rank k."""
        return divmod(int(self.order[k]), self.ny)

    def top(self) -> list[tuple[int, int]]:
        return [self.cell(k) for k in range(self.i_star)]


def rank_pairs(pmf: JointPMF, eps: float) -> SortedPairRanking:
    eps = _check_eps(eps)
    cond = pmf.x_given_y.ravel()
    p = pmf.p.ravel()
    with np.errstate(divide="ignore"):
        info = -np.log2(cond)
    order = np.lexsort((np.arange(p.size), -p, tie_keys(info)))
    cumulative = np.cumsum(p[order])
    if eps == 1.0:
        i_star = 0
    else:
        hits = np.nonzero(cumulative >= 1.0 - eps - FEAS_TOL)[0]
        i_star = int(hits[0]) + 1 if hits.size else p.size
    return SortedPairRanking(order, cumulative, i_star, pmf.shape[1])


def hhe(pmf: JointPMF, eps: float) -> tuple[float, SortedPairRanking]:
    """H^^eps(X|Y): sum of P log 1/P_{X|Y} over the first i* ranked cells."""
    ranking = rank_pairs(pmf, eps)
    cells = ranking.order[: ranking.i_star]
    p = pmf.p.ravel()[cells]
    value = float(xlogy_inv(p, pmf.x_given_y.ravel()[cells]).sum())
    return value, ranking


def the_fractional(pmf: JointPMF, eps: float) -> float:
    """Optimum of the LP relaxation of H~^eps.

    The greedy solution takes whole cells in ranked order and a fraction of
    cell i*, so that exactly 1 - eps mass is covered.
    """
    ranking = rank_pairs(pmf, eps)
    if ranking.i_star == 0:
        return 0.0
    p = pmf.p.ravel()[ranking.order]
    f = -np.log2(pmf.x_given_y.ravel()[ranking.order][: ranking.i_star])
    k = ranking.i_star - 1
    before = float(ranking.cumulative[k - 1]) if k > 0 else 0.0
    boundary = min(max(1.0 - eps - before, 0.0), float(p[k]))
    head = float(np.dot(p[:k], f[:k])) if k > 0 else 0.0
    return head + (boundary * float(f[k]) if boundary > 0 else 0.0)


# --- per-symbol tail quantile ------------------------------------------------

QUANTILE_TOL = 1e-12


@dataclass(frozen=True)
class TailQuantileResult:
    """``value`` is the quantile in bits; ``tail_mass_at_value`` is
    Pr{f_x(Y_x) > value}."""

    value: float
    tail_mass_at_value: float


def ideal_lengths(pmf: JointPMF) -> np.ndarray:
    """Matrix f[x, y] = -log2 P_{X|Y}(x|y) (+inf on zero cells)."""
    with np.errstate(divide="ignore"):
        return -np.log2(pmf.x_given_y)


def ohe_all(pmf: JointPMF, eps: float) -> np.ndarray:
    """Vector of h-bar^eps(x) over every x index."""
    eps = _check_eps(eps)
    nx = pmf.shape[0]
    if eps == 1.0:
        return np.zeros(nx)
    f = ideal_lengths(pmf)
    w = pmf.y_given_x
    if eps == 0.0:
        return np.where(w > 0, f, -np.inf).max(axis=1).clip(min=0.0)
    order = np.argsort(f, axis=1, kind="stable")
    fs = np.take_along_axis(f, order, axis=1)
    ws = np.take_along_axis(w, order, axis=1)
    # after the k-th smallest value, the mass strictly above it is at most
    # 1 - cum[k]; column 0 is the threshold 0, below every value (tail 1)
    tail = np.concatenate([np.ones((nx, 1)), 1.0 - np.cumsum(ws, axis=1)], axis=1)
    fs = np.concatenate([np.zeros((nx, 1)), fs], axis=1)
    first = np.argmax(tail <= eps + QUANTILE_TOL, axis=1)
    out = fs[np.arange(nx), first]
    return np.where(np.isfinite(out), out, 0.0).clip(min=0.0)


def _tail_above(f_row: np.ndarray, w_row: np.ndarray, alpha: float) -> float:
    return float(w_row[f_row > alpha].sum())


def ohe(pmf: JointPMF, x, eps: float) -> TailQuantileResult:
    """h-bar^eps(x) = inf{a : Pr{-log P_{X|Y}(x|Y_x) > a} <= eps}."""
    i = pmf.x_index(x)
    eps = _check_eps(eps)
    f = ideal_lengths(pmf)[i]
    w = pmf.y_given_x[i]
    if eps == 1.0:
        value = 0.0
    elif eps == 0.0:
        value = float(max(f[w > 0].max(), 0.0))
    else:
        # the infimum sits on 0 or one of the finitely many values f_x(y)
        candidates = np.unique(np.append(f[w > 0], 0.0))
        value = next(
            float(v) for v in candidates if _tail_above(f, w, v) <= eps + QUANTILE_TOL
        )
    return TailQuantileResult(value, _tail_above(f, w, value))


def ohe_bounds_check(pmf: JointPMF, x, eps: float) -> None:
    """Raise BoundViolated unless 0 <= h-bar^eps(x) <= log 1/P_X(x) + log 1/eps."""
    if not 0.0 < eps <= 1.0:
        raise InputError("the bound needs 0 < eps <= 1")
    i = pmf.x_index(x)
    value = ohe(pmf, x, eps).value
    upper = -math.log2(pmf.px[i]) - math.log2(eps)
    if not -1e-9 <= value <= upper + 1e-9:
        raise BoundViolated(f"h-bar^{eps}({x!r}) = {value} outside [0, {upper}]")


def ohs_eps(pmf: JointPMF, eps: float) -> float:
    """H-bar_S^eps(X|Y) = sum_x P_X(x) h-bar^eps(x)."""
    return float(np.dot(pmf.px, ohe_all(pmf, eps)))


def spectrum_tail(pmf: JointPMF, R: float) -> float:
    """Pr{-log2 P_{X|Y}(X|Y) >= R}."""
    f = ideal_lengths(pmf)
    return float(pmf.p[(f >= R) & (pmf.p > 0)].sum())


def all_quantities(pmf: JointPMF, eps: float) -> dict[str, float]:
    """Every scalar quantity for one epsilon (subset searches only within budget)."""
    out = {
        "H": conditional_entropy(pmf),
        "hhe": hhe(pmf, eps)[0],
        "the_frac": the_fractional(pmf, eps),
        "ohs": ohs_eps(pmf, eps),
    }
    if pmf.p.size <= budgets()["subset"]:
        out["he"] = he_bruteforce(pmf, eps)[0]
        out["the"] = the_bruteforce(pmf, eps)
    return out
