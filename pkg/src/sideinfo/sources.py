"""Finite-blocklength quantities of i.i.d. and mixed sources.

A blocklength-n source is sum_i alpha_i P_i^{(x)n} (one component for i.i.d.).
Two exact routes are available:

* ``enum``  -- build the pmf on X^n x Y^n and reuse the one-shot functions;
* ``types`` -- group sequence pairs by joint type.  Every probability the
  quantities need depends on (x^n, y^n) only through the joint type, so each
  class is handled once with its multiplicity.

``mc`` samples x^n and evaluates h-bar exactly for each sample's x-type.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .dist import (
    TOL,
    JointPMF,
    MixtureSpec,
    as_mixture,
    budgets,
    conditional_entropy,
    entropy,
    kl_divergence_x_marginals,
    mixture_extension,
)
from .entropy import FEAS_TOL, QUANTILE_TOL, _check_eps, hhe, ohs_eps, tie_keys
from .errors import BoundViolated, BudgetExceeded, InputError, RegimeUndetermined

LOG2E = math.log2(math.e)
TYPE_BUDGET = 4_000_000


def _log2_factorial(k) -> np.ndarray:
    k = np.asarray(k, dtype=np.int64)
    table = np.concatenate([[0.0], np.cumsum(np.log2(np.arange(1, int(k.max(initial=0)) + 1)))])
    return table[k]


def _log2_sum_exp2(terms: np.ndarray, axis: int = 0) -> np.ndarray:
    """log2 sum 2^terms along ``axis`` (terms may be -inf)."""
    top = np.max(terms, axis=axis, keepdims=True)
    safe = np.where(np.isfinite(top), top, 0.0)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.log2(np.sum(np.exp2(terms - safe), axis=axis)) + np.squeeze(safe, axis=axis)
    return np.where(np.isfinite(np.squeeze(top, axis=axis)), out, -np.inf)


def compositions(n: int, k: int) -> np.ndarray:
    """All length-k non-negative integer vectors summing to n."""
    if k == 1:
        return np.array([[n]])
    bars = np.array(list(itertools.combinations(range(n + k - 1), k - 1)), dtype=np.int64)
    edges = np.concatenate(
        [np.full((len(bars), 1), -1), bars, np.full((len(bars), 1), n + k - 1)], axis=1
    )
    return np.diff(edges, axis=1) - 1


def _log2_probs(p: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log2(p)


def _counts_dot(counts: np.ndarray, logp: np.ndarray) -> np.ndarray:
    """sum_c counts[:, c] * logp[c] with 0 * (-inf) = 0."""
    safe = np.where(np.isfinite(logp), logp, 0.0)
    out = counts @ safe
    bad = (counts[:, ~np.isfinite(logp)] > 0).any(axis=1) if (~np.isfinite(logp)).any() else False
    return np.where(bad, -np.inf, out)


@dataclass(frozen=True)
class TypeTable:
    """Joint-type classes of (x^n, y^n) for a (mixed) i.i.d. source.

    Per class: ``log2_pairs`` = log2 of the number of sequence pairs,
    ``log2_cond_pairs`` = log2 of the number of y^n per fixed x^n, and
    per-element log2 probabilities under the mixture.
    """

    n: int
    nx: int
    ny: int
    counts: np.ndarray = field(repr=False)
    x_type: np.ndarray = field(repr=False)
    log2_pairs: np.ndarray = field(repr=False)
    log2_cond_pairs: np.ndarray = field(repr=False)
    log2_xseqs: np.ndarray = field(repr=False)
    log2_pxy: np.ndarray = field(repr=False)
    log2_px: np.ndarray = field(repr=False)
    log2_py: np.ndarray = field(repr=False)

    @cached_property
    def mass(self) -> np.ndarray:
        """Probability of each joint-type class."""
        return np.exp2(self.log2_pairs + self.log2_pxy)

    @cached_property
    def info(self) -> np.ndarray:
        """-log2 P(x^n|y^n) per element (+inf on null classes)."""
        with np.errstate(invalid="ignore"):
            return np.where(np.isfinite(self.log2_pxy), self.log2_py - self.log2_pxy, np.inf)

    @cached_property
    def cond_mass(self) -> np.ndarray:
        """P(class | x^n) for any x^n of the class's x-type."""
        with np.errstate(invalid="ignore"):
            out = np.exp2(self.log2_cond_pairs + self.log2_pxy - self.log2_px)
        return np.where(np.isfinite(self.log2_pxy), out, 0.0)


def type_table(source: JointPMF | MixtureSpec, n: int) -> TypeTable:
    spec = as_mixture(source)
    nx, ny = spec.base.shape
    k = nx * ny
    if math.comb(n + k - 1, k - 1) > TYPE_BUDGET:
        raise BudgetExceeded(f"too many joint types at n={n}")
    counts = compositions(n, k)
    grid = counts.reshape(-1, nx, ny)
    row = grid.sum(axis=2)
    col = grid.sum(axis=1)
    lf_n = _log2_factorial(n)
    log2_pairs = lf_n - _log2_factorial(counts).sum(axis=1)
    log2_cond_pairs = _log2_factorial(row).sum(axis=1) - _log2_factorial(counts).sum(axis=1)
    log2_xseqs = lf_n - _log2_factorial(row).sum(axis=1)
    _, x_type = np.unique(row, axis=0, return_inverse=True)
    logw = np.log2(np.asarray(spec.weights))[:, None]
    lpxy = np.stack([_counts_dot(counts, _log2_probs(c.p.ravel())) for c in spec.components])
    lpx = np.stack([_counts_dot(row, _log2_probs(c.px)) for c in spec.components])
    lpy = np.stack([_counts_dot(col, _log2_probs(c.py)) for c in spec.components])
    return TypeTable(
        n, nx, ny, counts, x_type.ravel(), log2_pairs, log2_cond_pairs, log2_xseqs,
        _log2_sum_exp2(lpxy + logw), _log2_sum_exp2(lpx + logw), _log2_sum_exp2(lpy + logw),
    )


def types_conditional_entropy(t: TypeTable) -> float:
    live = t.mass > 0
    return float(np.sum(t.mass[live] * t.info[live]))


def types_hhe(t: TypeTable, eps: float) -> float:
    """H^^eps of the blocklength-n source; the cut may fall inside a class,
    whose members share P_{X|Y} and P_XY, so only a count is needed."""
    eps = _check_eps(eps)
    if eps == 1.0:
        return 0.0
    live = np.nonzero(t.mass > 0)[0]
    order = live[np.lexsort((-t.log2_pxy[live], tie_keys(t.info[live])))]
    mass = t.mass[order]
    cum = np.cumsum(mass)
    target = 1.0 - eps
    k = int(np.argmax(cum >= target - FEAS_TOL)) if cum[-1] >= target - FEAS_TOL else len(cum) - 1
    before = float(cum[k - 1]) if k > 0 else 0.0
    elem = 2.0 ** t.log2_pxy[order[k]]
    n_elems = 2.0 ** t.log2_pairs[order[k]]
    need = min(n_elems, max(1.0, math.ceil((target - before - FEAS_TOL) / elem)))
    head = float(np.dot(mass[:k], t.info[order[:k]]))
    return head + need * elem * float(t.info[order[k]])


def _grouped_quantiles(groups: np.ndarray, values: np.ndarray, weights: np.ndarray, eps: float) -> np.ndarray:
    """Per group: smallest value v with (group weight above v) <= eps."""
    ngroups = int(groups.max()) + 1
    if eps == 1.0:
        return np.zeros(ngroups)
    order = np.lexsort((values, groups))
    g, v, w = groups[order], values[order], weights[order]
    cum = np.cumsum(w)
    starts = np.searchsorted(g, np.arange(ngroups))
    base = np.concatenate([[0.0], cum])[starts]
    within = cum - base[g]
    total = np.bincount(g, weights=w, minlength=ngroups)
    if eps == 0.0:
        # supremum over supported values
        out = np.full(ngroups, -np.inf)
        np.maximum.at(out, g[w > 0], v[w > 0])
        return np.maximum(out, 0.0)
    ok = (total[g] - within) <= eps + QUANTILE_TOL
    out = np.full(ngroups, np.inf)
    np.minimum.at(out, g[ok], v[ok])
    # threshold 0 lies below every value and leaves the whole mass in the tail
    out[total <= eps + QUANTILE_TOL] = 0.0
    return np.maximum(out, 0.0)


def types_ohe(t: TypeTable, eps: float) -> np.ndarray:
    """h-bar^eps(x^n) for each x-type id."""
    eps = _check_eps(eps)
    return _grouped_quantiles(t.x_type, t.info, t.cond_mass, eps)


def _xtype_weights(t: TypeTable) -> np.ndarray:
    """P_{X^n}(x-type class) per x-type id."""
    ids, first = np.unique(t.x_type, return_index=True)
    return np.exp2(t.log2_xseqs[first] + t.log2_px[first])


def types_ohs(t: TypeTable, eps: float) -> float:
    return float(np.dot(_xtype_weights(t), types_ohe(t, eps)))


def types_spectrum(t: TypeTable) -> tuple[np.ndarray, np.ndarray]:
    """Support values of (1/n)(-log2 P(X^n|Y^n)) and their probabilities,
    sorted ascending (equal values kept separate)."""
    live = t.mass > 0
    z = t.info[live] / t.n
    m = t.mass[live]
    order = np.argsort(z, kind="stable")
    return z[order], m[order]


def lower_quantile(z: np.ndarray, m: np.ndarray, eps: float) -> float:
    """sup{b : Pr{Z < b} <= eps} for a sorted discrete law."""
    cum = np.cumsum(m)
    k = int(np.argmax(cum > eps + QUANTILE_TOL)) if cum[-1] > eps + QUANTILE_TOL else len(z) - 1
    return float(z[k])


def upper_quantile(z: np.ndarray, m: np.ndarray, eps: float) -> float:
    """inf{R : Pr{Z >= R} <= eps} = min{v : Pr{Z > v} <= eps}."""
    tail = 1.0 - np.cumsum(m)
    k = int(np.argmax(tail <= eps + QUANTILE_TOL))
    return float(z[k])


# --- per-n evaluation by either route ----------------------------------------

def _choose_method(source, n: int, method: str) -> str:
    if method != "auto":
        return method
    nx, ny = as_mixture(source).base.shape
    return "enum" if (nx * ny) ** n <= min(budgets()["product"], 2**20) else "types"


def block_quantities(source, n: int, eps: float, method: str = "auto") -> dict[str, float]:
    """(1/n)-normalised H, H^^eps and H-bar_S^eps at blocklength n."""
    method = _choose_method(source, n, method)
    if method == "enum":
        pmf = mixture_extension(as_mixture(source), n)
        return {
            "H": conditional_entropy(pmf) / n,
            "hhe": hhe(pmf, eps)[0] / n,
            "ohs": ohs_eps(pmf, eps) / n,
            "method": "enum",
        }
    if method == "types":
        t = type_table(source, n)
        return {
            "H": types_conditional_entropy(t) / n,
            "hhe": types_hhe(t, eps) / n,
            "ohs": types_ohs(t, eps) / n,
            "method": "types",
        }
    raise InputError(f"unknown method {method!r}")


@dataclass(frozen=True)
class SweepResult:
    """One row of a sweep; ``gap`` is value - prediction."""

    quantity: str
    n: int
    value: float
    prediction: float
    gap: float
    stderr: float = 0.0
    method: str = "exact"

    @classmethod
    def make(cls, quantity, n, value, prediction, stderr=0.0, method="exact"):
        return cls(quantity, n, float(value), float(prediction), float(value) - float(prediction), float(stderr), method)


def _require_iid(base) -> JointPMF:
    if isinstance(base, MixtureSpec):
        if len(base.components) != 1:
            raise InputError("this sweep expects an i.i.d. source; use mixture_sweep")
        return base.base
    return base


def rcom_sweep(base: JointPMF, eps: float, n_max: int, method: str = "auto") -> list[SweepResult]:
    """(1/n) H^^eps(X^n|Y^n) against (1 - eps) H(X|Y)."""
    base = _require_iid(base)
    eps = _check_eps(eps)
    pred = (1 - eps) * conditional_entropy(base)
    out = []
    for n in range(1, n_max + 1):
        q = block_quantities(base, n, eps, method)
        out.append(SweepResult.make("rcom", n, q["hhe"], pred, method=q["method"]))
    return out


def ohs_mc(source, n: int, eps: float, samples: int, seed: int) -> tuple[float, float]:
    """Monte Carlo (1/n) H-bar_S^eps: sample x^n, evaluate h-bar exactly for
    its x-type.  Returns (estimate, standard error)."""
    spec = as_mixture(source)
    t = type_table(spec, n)
    per_type = types_ohe(t, eps) / n
    rng = np.random.default_rng(seed)
    nx = spec.base.shape[0]
    comp = rng.choice(len(spec.weights), size=samples, p=np.asarray(spec.weights))
    xs = np.empty((samples, n), dtype=np.int64)
    for i, c in enumerate(spec.components):
        sel = comp == i
        xs[sel] = rng.choice(nx, size=(int(sel.sum()), n), p=c.px)
    rows = np.stack([(xs == a).sum(axis=1) for a in range(nx)], axis=1)
    ids, first = np.unique(t.x_type, return_index=True)
    # x-type row counts of each type id, for lookup
    type_rows = t.counts.reshape(-1, t.nx, t.ny).sum(axis=2)[first]
    lookup = {tuple(r): i for i, r in zip(ids, type_rows)}
    vals = np.array([per_type[lookup[tuple(r)]] for r in rows])
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(samples))


def ohs_sweep(base: JointPMF, eps: float, n_max: int, method: str = "auto",
              samples: int = 0, seed: int = 0) -> list[SweepResult]:
    """(1/n) H-bar_S^eps(X^n|Y^n) against H(X|Y).

    ``method="mc"`` (or ``samples > 0`` together with ``auto``) uses the
    Monte Carlo estimator and reports its standard error.
    """
    base = _require_iid(base)
    eps = _check_eps(eps)
    pred = conditional_entropy(base)
    out = []
    for n in range(1, n_max + 1):
        if method == "mc":
            v, se = ohs_mc(base, n, eps, samples or 10_000, seed + n)
            out.append(SweepResult.make("ohs", n, v, pred, se, "mc"))
        else:
            q = block_quantities(base, n, eps, method)
            out.append(SweepResult.make("ohs", n, q["ohs"], pred, method=q["method"]))
    return out


# --- mixtures ----------------------------------------------------------------

@dataclass(frozen=True)
class MixtureRegime:
    """Components grouped by X-marginal; ``prediction`` is
    sum_g alpha_g max_{i in g} H_i(X|Y)."""

    name: str  # "distinguishable", "identical", or "grouped"
    groups: tuple
    prediction: float


def mixture_regime(spec: MixtureSpec) -> MixtureRegime:
    comps = spec.components
    groups: list[list[int]] = []
    for i, c in enumerate(comps):
        for g in groups:
            if np.max(np.abs(comps[g[0]].px - c.px)) <= TOL:
                g.append(i)
                break
        else:
            groups.append([i])
    for a, b in itertools.combinations(range(len(groups)), 2):
        pa, pb = comps[groups[a][0]], comps[groups[b][0]]
        if not (kl_divergence_x_marginals(pa, pb) > TOL and kl_divergence_x_marginals(pb, pa) > TOL):
            raise RegimeUndetermined("X-marginals neither coincide nor are distinguishable")
    h = [conditional_entropy(c) for c in comps]
    pred = sum(
        sum(spec.weights[i] for i in g) * max(h[i] for i in g) for g in groups
    )
    if len(groups) == 1:
        name = "identical"
    elif all(len(g) == 1 for g in groups):
        name = "distinguishable"
    else:
        name = "grouped"
    return MixtureRegime(name, tuple(tuple(g) for g in groups), float(pred))


def mixture_sweep(spec: MixtureSpec, eps: float, n_max: int, n_min: int = 1,
                  method: str = "auto") -> list[SweepResult]:
    """(1/n) H-bar_S^eps of the sequence-level mixture against the regime's
    prediction."""
    eps = _check_eps(eps)
    regime = mixture_regime(spec)
    out = []
    for n in range(n_min, n_max + 1):
        q = block_quantities(spec, n, eps, method)
        out.append(SweepResult.make("mixture", n, q["ohs"], regime.prediction, method=q["method"]))
    return out


# --- spectrum ----------------------------------------------------------------

@dataclass(frozen=True)
class SpectrumEstimate:
    samples: int
    quantile_lo: float
    quantile_hi: float
    epsilon_tail: float
    mean: float = 0.0
    std: float = 0.0


def sample_information(source, n: int, samples: int, seed: int, chunk: int = 20_000) -> np.ndarray:
    """Draws of (1/n)(-log2 P(X^n|Y^n)) under the (mixed) source."""
    spec = as_mixture(source)
    nx, ny = spec.base.shape
    k = nx * ny
    rng = np.random.default_rng(seed)
    logw = np.log2(np.asarray(spec.weights))[:, None]
    lp = [_log2_probs(c.p.ravel()) for c in spec.components]
    lpy = [_log2_probs(c.py) for c in spec.components]
    out = np.empty(samples)
    done = 0
    while done < samples:
        s = min(chunk, samples - done)
        comp = rng.choice(len(spec.weights), size=s, p=np.asarray(spec.weights))
        cells = np.empty((s, n), dtype=np.int64)
        for i, c in enumerate(spec.components):
            sel = comp == i
            cells[sel] = rng.choice(k, size=(int(sel.sum()), n), p=c.p.ravel())
        counts = np.stack([(cells == c).sum(axis=1) for c in range(k)], axis=1)
        ycounts = counts.reshape(s, nx, ny).sum(axis=1)
        lxy = _log2_sum_exp2(np.stack([_counts_dot(counts, l) for l in lp]) + logw)
        ly = _log2_sum_exp2(np.stack([_counts_dot(ycounts, l) for l in lpy]) + logw)
        out[done:done + s] = (ly - lxy) / n
        done += s
    return out


def spectrum_quantiles(source, n: int, eps_tail: float, samples: int, seed: int) -> SpectrumEstimate:
    """Empirical eps_tail and 1 - eps_tail quantiles of the normalised
    information density."""
    if samples < 1000:
        raise InputError("spectrum estimation needs at least 1000 samples")
    z = sample_information(source, n, samples, seed)
    lo, hi = np.quantile(z, [eps_tail, 1 - eps_tail], method="inverted_cdf")
    return SpectrumEstimate(samples, float(lo), float(hi), eps_tail, float(z.mean()), float(z.std()))


def exact_spectrum_quantiles(source, n: int, eps_tail: float) -> tuple[float, float]:
    z, m = types_spectrum(type_table(source, n))
    return lower_quantile(z, m, eps_tail), upper_quantile(z, m, eps_tail)


def spectrum_tail_n(source, n: int, R: float) -> float:
    """Pr{(1/n)(-log2 P(X^n|Y^n)) >= R} at blocklength n (exact)."""
    z, m = types_spectrum(type_table(source, n))
    return float(m[z >= R].sum())


# --- bound checks and diagnostics --------------------------------------------

@dataclass
class RcomBoundReport:
    n: int
    epsilon: float
    lower: float
    value: float
    upper: float
    slack: float
    passed: bool


def rcom_bound_check(base, eps: float, n: int, strict: bool = True) -> RcomBoundReport:
    """(1-eps) q_lo - slack <= (1/n) H^^eps <= R_up + slack with
    q_lo the eps lower quantile of the normalised spectrum, R_up =
    inf{R : Pr{Z >= R} <= eps} and slack = 2/n + |R_up - q_lo|."""
    eps = _check_eps(eps)
    t = type_table(base, n)
    z, m = types_spectrum(t)
    q_lo = lower_quantile(z, m, eps)
    r_up = upper_quantile(z, m, eps)
    value = types_hhe(t, eps) / n
    slack = 2.0 / n + abs(r_up - q_lo)
    lower = (1 - eps) * q_lo
    ok = lower - slack <= value + 1e-9 and value <= r_up + slack + 1e-9
    rep = RcomBoundReport(n, eps, float(lower), float(value), float(r_up), float(slack), bool(ok))
    if strict and not ok:
        raise BoundViolated(f"rcom bounds fail at n={n}: {rep}")
    return rep


@dataclass
class DiagnosticRow:
    n: int
    eps_n: float
    H: float          # (1/n) H(X^n|Y^n)
    ohs: float        # (1/n) H-bar_S^{eps_n}
    d: float          # H - ohs
    tail_term: float  # (1/n) n delta_n of the entropy bracket
    bracket_ok: bool


@dataclass
class DiagnosticReport:
    rows: list
    gamma: float
    satisfied: bool  # d at the largest n is >= -gamma


def default_eps_sequence(n: int) -> float:
    return n ** -0.5


def entropy_bracket(t: TypeTable, eps: float, gamma: float) -> tuple[float, float, float]:
    """Terms of H(X^n|Y^n) <= H-bar_S^eps + gamma + (tail entropy), where the
    tail entropy sums P log 1/P_{X|Y} over pairs whose information exceeds
    h-bar^eps(x^n) + gamma.  Returns (H, H-bar_S^eps, tail)."""
    h = types_ohe(t, eps)
    over = t.info > h[t.x_type] + gamma
    live = t.mass > 0
    sel = over & live
    tail = float(np.sum(t.mass[sel] * t.info[sel]))
    return types_conditional_entropy(t), types_ohs(t, eps), tail


def encoder_sideinfo_diagnostic(source, eps_seq=None, n_max: int = 10, gamma: float = 0.02) -> DiagnosticReport:
    """d_n = (1/n) H(X^n|Y^n) - (1/n) H-bar_S^{eps_n}(X^n|Y^n) for n = 1..n_max.

    ``eps_seq`` is a list (eps_1, eps_2, ...) or a callable n -> eps_n.
    """
    rows = []
    for n in range(1, n_max + 1):
        if eps_seq is None:
            e = default_eps_sequence(n)
        elif callable(eps_seq):
            e = eps_seq(n)
        else:
            e = eps_seq[n - 1]
        e = _check_eps(min(1.0, e))
        t = type_table(source, n)
        H, ohs, tail = entropy_bracket(t, e, gamma)
        rows.append(DiagnosticRow(n, e, H / n, ohs / n, (H - ohs) / n, tail / n,
                                  H <= ohs + gamma + tail + 1e-9))
    return DiagnosticReport(rows, gamma, rows[-1].d >= -gamma)


@dataclass
class BoundednessReport:
    per_n: list        # (n, (1/n) H(X^n|Y^n), bound)
    max_value: float
    passed: bool


def boundedness_check(source, n_max: int) -> BoundednessReport:
    """max_n (1/n) H(X^n|Y^n) against H(X|Y) (i.i.d.) or, for an m-component
    mixture, sum_i alpha_i H_i + (H(alpha) + (m - 1) log2 e) / n."""
    spec = as_mixture(source)
    hs = [conditional_entropy(c) for c in spec.components]
    avg = float(np.dot(spec.weights, hs))
    m = len(spec.components)
    rows = []
    ok = True
    for n in range(1, n_max + 1):
        value = types_conditional_entropy(type_table(spec, n)) / n
        if m == 1:
            bound = avg + 1e-9
        else:
            bound = avg + (entropy(spec.weights) + (m - 1) * LOG2E) / n + 1e-9
        ok &= value <= bound
        rows.append((n, value, bound))
    return BoundednessReport(rows, max(r[1] for r in rows), ok)
