"""Brute-force optimum for epsilon-codes with common side-information, and
verifiers for every one-shot sandwich.

Why the optimum search is exact.  Fix any epsilon-code and let A be its set
of correctly decoded cells.  For each y the codewords of A(y) are distinct
(they decode to different symbols) and, with any codeword used only by
symbols outside A(y), form a prefix code.  Symbols outside A(y) are errors
anyway, so moving all of them onto the shortest leaf of the tree never
lengthens the code; that leaf is either a dedicated error leaf or the leaf of
some x in A(y).  So column y costs at least
    min( Huffman(A(y) + {error}), min_{x in A(y)} Huffman(A(y), w_x += error) )
where "error" carries the weight P_XY(X \\ A(y), y), and each option is
realised by an actual code whose correct set is A.  Minimising the sum of
column costs over every A with P_XY(A) >= 1 - eps therefore gives the
optimum over all epsilon-codes.
"""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field

import numpy as np

from .codes import (
    CommonSICode,
    EpsilonProfile,
    build_flag_code,
    build_sw_code,
    canonical_codewords,
    converse_extract,
    evaluate_common_code,
    is_prefix_free,
    kraft_check,
    lemma5_tail,
    sw_codeword_lengths,
    sw_exact_error,
    theorem3_length_bound,
)
from .dist import JointPMF, budgets
from .entropy import (
    RestrictedSet,
    _min_over_columns,
    _set_from_choice,
    _subset_bits,
    he_bruteforce,
    hhe,
    ohe_all,
    the_bruteforce,
    the_fractional,
    _check_eps,
)
from .errors import BoundViolated, BudgetExceeded

SLACK = 1e-9
ORACLE_CELL_BUDGET = 20
ORACLE_X_BUDGET = 12


def huffman_lengths(weights, min_length: int = 0) -> list[int]:
    """Optimal prefix-code lengths; ties broken by (weight, symbol order).

    A single symbol gets length ``min_length`` (0 = the empty codeword).
    """
    k = len(weights)
    if k == 0:
        return []
    if k == 1:
        return [min_length]
    counter = itertools.count(k)
    heap = [(float(w), s, [s]) for s, w in enumerate(weights)]
    heapq.heapify(heap)
    depth = [0] * k
    while len(heap) > 1:
        w1, _, g1 = heapq.heappop(heap)
        w2, _, g2 = heapq.heappop(heap)
        for s in g1 + g2:
            depth[s] += 1
        heapq.heappush(heap, (w1 + w2, next(counter), g1 + g2))
    return depth


def huffman_cost(weights, min_length: int = 0) -> float:
    return float(np.dot(weights, huffman_lengths(weights, min_length))) if weights else 0.0


def _column_option(weights: list[float], err: float, min_length: int):
    """Best layout for one column: (cost, merge target) where the target is
    None for a dedicated error leaf or the position in ``weights`` that also
    carries the error symbols."""
    best = (huffman_cost(weights + [err] if err > 0 else weights, min_length), None)
    if err > 0:
        for k in range(len(weights)):
            merged = list(weights)
            merged[k] += err
            cost = huffman_cost(merged, min_length)
            if cost < best[0]:
                best = (cost, k)
    return best


@dataclass(frozen=True)
class OracleResult:
    optimum: float
    witness_set: RestrictedSet
    per_y_codebooks: tuple  # sorted codeword-length multiset per y
    code: CommonSICode = field(repr=False)


def _witness_code(pmf: JointPMF, A: RestrictedSet, min_length: int) -> CommonSICode:
    nx, ny = pmf.shape
    encode_table = {}
    decode_tables = []
    for j in range(ny):
        inside = sorted(A.column(j))
        outside = [i for i in range(nx) if i not in A.column(j)]
        weights = [float(pmf.p[i, j]) for i in inside]
        err = float(sum(pmf.p[i, j] for i in outside))
        _, target = _column_option(weights, err, min_length)
        symbols = list(inside)
        if err > 0 and target is None:
            symbols.append("err")
            weights = weights + [err]
        elif target is not None:
            weights[target] += err
        lengths = dict(zip(symbols, huffman_lengths(weights, min_length)))
        words = canonical_codewords(lengths, symbols)
        table = {}
        for i in inside:
            encode_table[(i, j)] = words[i]
            table[words[i]] = i
        if "err" in words:
            sink = words["err"]
            table[sink] = inside[0] if inside else 0
        else:
            # zero-mass outside cells ride on any leaf at no cost
            sink = words[inside[target if target is not None else 0]] if outside else None
        for i in outside:
            encode_table[(i, j)] = sink
        decode_tables.append(table)
    decode_tables = tuple(decode_tables)
    members = [(i, j) for (i, j), w in encode_table.items() if decode_tables[j].get(w) == i]
    return CommonSICode(encode_table, decode_tables, RestrictedSet.of(pmf, members))


def optimal_common_code(pmf: JointPMF, eps: float, min_length: int = 0) -> OracleResult:
    """Minimum exact E[l(X|Y)] over every epsilon-code (see module docstring)."""
    eps = _check_eps(eps)
    nx, ny = pmf.shape
    cell_budget = min(ORACLE_CELL_BUDGET, budgets()["subset"])
    if nx * ny > cell_budget or nx > ORACLE_X_BUDGET:
        raise BudgetExceeded(f"{nx}x{ny} exceeds the oracle budget")
    bits = _subset_bits(nx)
    tables = []
    for j in range(ny):
        col = pmf.p[:, j]
        mass = bits.astype(float) @ col
        cost = np.empty(len(bits))
        for s, row in enumerate(bits):
            weights = [float(col[i]) for i in np.nonzero(row)[0]]
            err = float(col[~row].sum())
            cost[s] = _column_option(weights, err, min_length)[0]
        tables.append((mass, cost))
    best, choice = _min_over_columns(tables, 1.0 - eps)
    A = _set_from_choice(pmf, bits, choice)
    code = _witness_code(pmf, A, min_length)
    books = tuple(
        tuple(sorted(len(w) for w in code.codebook(j))) for j in range(ny)
    )
    return OracleResult(best, A, books, code)


# --- verifiers ---------------------------------------------------------------

@dataclass
class Report:
    theorem: str
    epsilon: float
    values: dict
    passed: bool
    delta: float | None = None
    detail: str = ""

    def raise_if_failed(self) -> "Report":
        if not self.passed:
            raise BoundViolated(f"theorem {self.theorem} failed: {self.detail or self.values}")
        return self


def _report(theorem, eps, values, checks, delta=None, strict=True) -> Report:
    failed = [name for name, ok in checks if not ok]
    rep = Report(theorem, eps, values, not failed, delta, "; ".join(failed))
    return rep.raise_if_failed() if strict else rep


def verify_theorem1(pmf: JointPMF, eps: float, strict: bool = True) -> Report:
    """H^eps <= OPT <= flag-code E[l] <= H^eps + 2 and the flag code errs <= eps."""
    he, A = he_bruteforce(pmf, eps)
    opt = optimal_common_code(pmf, eps)
    if A.mass > 0:
        flag_err, flag_avg = evaluate_common_code(pmf, build_flag_code(pmf, A))
    else:
        # eps = 1 convention: the empty restriction, every codeword empty
        flag_err, flag_avg = 1.0, 0.0
    opt_err, opt_avg = evaluate_common_code(pmf, opt.code)
    values = {"he": he, "opt": opt.optimum, "flag_avg": flag_avg, "flag_err": flag_err}
    checks = [
        ("he<=opt", he <= opt.optimum + SLACK),
        ("opt<=flag", opt.optimum <= flag_avg + SLACK),
        ("flag<=he+2", flag_avg <= he + 2 + SLACK),
        ("flag_err<=eps", flag_err <= eps + SLACK),
        ("opt_witness", abs(opt_avg - opt.optimum) <= SLACK and opt_err <= eps + SLACK),
    ]
    return _report("1", eps, values, checks, strict=strict)


def verify_theorem2(pmf: JointPMF, eps: float, strict: bool = True) -> Report:
    """Both sandwiches around H^eps and the LP chain."""
    he, _ = he_bruteforce(pmf, eps)
    the = the_bruteforce(pmf, eps)
    frac = the_fractional(pmf, eps)
    hh, _ = hhe(pmf, eps)
    values = {"he": he, "the": the, "the_frac": frac, "hhe": hh}
    checks = [
        ("hhe-2<=he", hh - 2 <= he + SLACK),
        ("he<=hhe", he <= hh + SLACK),
        ("the-1<=he", the - 1 <= he + SLACK),
        ("he<=the", he <= the + SLACK),
        ("frac<=the", frac <= the + SLACK),
        ("the<=hhe", the <= hh + SLACK),
        ("frac>=hhe-1", frac >= hh - 1 - SLACK),
    ]
    return _report("2", eps, values, checks, strict=strict)


verify_the_sandwich = verify_theorem2


def verify_theorem3(pmf: JointPMF, budget: EpsilonProfile, delta: float, seeds, strict: bool = True) -> Report:
    """Length bound for every x and every seed; seed-averaged exact error
    against sum P_X eps_x + 2^{-delta/2} + 3 standard errors."""
    errors = []
    length_ok = True
    kraft_ok = True
    for seed in seeds:
        code = build_sw_code(pmf, budget, delta, seed)
        for i, total in enumerate(sw_codeword_lengths(code)):
            if total > theorem3_length_bound(code.ohe[i], delta) + SLACK:
                length_ok = False
        words = [code.codeword(i) for i in range(pmf.shape[0])]
        kraft_ok &= is_prefix_free(words)
        try:
            kraft_check(len(w) for w in set(words))
        except BoundViolated:
            kraft_ok = False
        errors.append(sw_exact_error(pmf, code))
    errs = np.asarray(errors)
    mean = float(errs.mean())
    stderr = float(errs.std(ddof=1) / np.sqrt(len(errs))) if len(errs) > 1 else 0.0
    bound = budget.aggregate + 2 ** (-delta / 2)
    values = {"mean_error": mean, "stderr": stderr, "bound": bound}
    checks = [
        ("length_bound", length_ok),
        ("prefix_kraft", kraft_ok),
        ("error_bound", mean <= bound + 3 * stderr + SLACK),
    ]
    return _report("3", budget.aggregate, values, checks, delta=delta, strict=strict)


def verify_converse(pmf: JointPMF, lengths, error: float, delta: float, strict: bool = True) -> Report:
    """Converse certificate and tail inequality for one code."""
    prof = converse_extract(pmf, lengths, delta)
    tail = lemma5_tail(pmf, lengths, delta)
    h = np.array([ohe_all(pmf, e)[i] for i, e in enumerate(prof.per_symbol)])
    values = {"aggregate": prof.aggregate, "error": error, "tail": tail}
    checks = [
        ("aggregate<=error+2^-delta", prof.aggregate <= error + 2.0**-delta + SLACK),
        ("length>=ohe-delta", bool(np.all(np.asarray(lengths) >= h - delta - SLACK))),
        ("lemma5", error >= tail - 2.0**-delta - SLACK),
        ("aggregate==tail", abs(prof.aggregate - tail) <= SLACK),
    ]
    return _report("4", error, values, checks, delta=delta, strict=strict)


def verify_lemma5(pmf: JointPMF, lengths, error: float, delta: float, strict: bool = True) -> Report:
    tail = lemma5_tail(pmf, lengths, delta)
    values = {"error": error, "tail": tail}
    checks = [("error>=tail-2^-delta", error >= tail - 2.0**-delta - SLACK)]
    return _report("lemma5", error, values, checks, delta=delta, strict=strict)


def verify_ohe_bounds(pmf: JointPMF, eps: float, strict: bool = True) -> Report:
    """0 <= h-bar^eps(x) <= log 1/P_X(x) + log 1/eps for every x (eps > 0)."""
    h = ohe_all(pmf, eps)
    upper = -np.log2(pmf.px) - np.log2(eps)
    values = {"max_excess": float(np.max(h - upper)), "min": float(h.min())}
    checks = [("lower", bool(np.all(h >= -SLACK))), ("upper", bool(np.all(h <= upper + SLACK)))]
    return _report("ohe_bounds", eps, values, checks, strict=strict)
