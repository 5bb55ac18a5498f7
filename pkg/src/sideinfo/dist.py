"""Finite joint distributions P_XY, their i.i.d. extensions and mixtures.

All probabilities are float64.  Equality checks use the absolute tolerance
``TOL``.  Entropies are in bits with the convention 0 log(1/0) = 0.
"""
from __future__ import annotations

import csv
import io
import itertools
import json
import math
import os
from dataclasses import dataclass, field
from functools import cached_property
from typing import Hashable, Sequence

import numpy as np

from .errors import (
    AlphabetMismatch,
    BudgetExceeded,
    DuplicateLabel,
    InputError,
    NegativeMass,
    NotNormalized,
    UnknownSymbol,
    ZeroMarginal,
)

TOL = 1e-9
# joins coordinate labels of blocklength-n symbols
SEP = ","
DEFAULT_PRODUCT_BUDGET = 2**22
DEFAULT_SUBSET_BUDGET = 24


def budgets() -> dict[str, int]:
    """Enumeration budgets, overridable through ``SIDEINFO_BUDGET``.

    The variable is either a bare integer (product-extension cell budget) or a
    comma list such as ``product=4194304,subset=20``.
    """
    out = {"product": DEFAULT_PRODUCT_BUDGET, "subset": DEFAULT_SUBSET_BUDGET}
    raw = os.environ.get("SIDEINFO_BUDGET", "").strip()
    if not raw:
        return out
    try:
        if "=" not in raw:
            out["product"] = int(raw)
        else:
            for part in raw.split(","):
                key, value = part.split("=")
                key = key.strip()
                if key not in out:
                    raise ValueError(key)
                out[key] = int(value)
    except ValueError as exc:
        raise InputError(f"cannot parse SIDEINFO_BUDGET={raw!r}") from exc
    return out


def xlogy_inv(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Elementwise p * log2(1/q) with 0 * log(1/0) = 0."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    out = np.zeros(np.broadcast(p, q).shape)
    mask = np.broadcast_to(p > 0, out.shape)
    pb = np.broadcast_to(p, out.shape)
    qb = np.broadcast_to(q, out.shape)
    out[mask] = -pb[mask] * np.log2(qb[mask])
    return out


def h2(p: float) -> float:
    """Binary entropy in bits."""
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def _label_index(labels: tuple) -> dict:
    out = {}
    for i, lab in enumerate(labels):
        out.setdefault(str(lab), i)
    for i, lab in enumerate(labels):
        out[lab] = i
    return out


@dataclass(frozen=True, eq=False)
class JointPMF:
    """Joint pmf of (X, Y); ``p[i, j] = P_XY(x_labels[i], y_labels[j])``.

    Construction does not validate; call :func:`validate` (the factory
    functions and readers below do).
    """

    x_labels: tuple
    y_labels: tuple
    p: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.array(self.p, dtype=float)
        if arr.shape != (len(self.x_labels), len(self.y_labels)):
            raise InputError(
                f"pmf shape {arr.shape} does not match alphabets "
                f"({len(self.x_labels)}, {len(self.y_labels)})"
            )
        arr.setflags(write=False)
        object.__setattr__(self, "p", arr)
        object.__setattr__(self, "x_labels", tuple(self.x_labels))
        object.__setattr__(self, "y_labels", tuple(self.y_labels))

    @property
    def shape(self) -> tuple[int, int]:
        return self.p.shape

    @cached_property
    def px(self) -> np.ndarray:
        return self.p.sum(axis=1)

    @cached_property
    def py(self) -> np.ndarray:
        return self.p.sum(axis=0)

    @cached_property
    def x_given_y(self) -> np.ndarray:
        """Matrix of P_{X|Y}(x|y)."""
        return self.p / self.py[None, :]

    @cached_property
    def y_given_x(self) -> np.ndarray:
        """Matrix of P_{Y|X}(y|x)."""
        return self.p / self.px[:, None]

    @cached_property
    def _x_index(self) -> dict:
        return _label_index(self.x_labels)

    @cached_property
    def _y_index(self) -> dict:
        return _label_index(self.y_labels)

    def x_index(self, x: Hashable) -> int:
        """Index of label ``x``; text read from a stream file also matches
        ``str(label)``."""
        try:
            return self._x_index[x]
        except (KeyError, TypeError):
            raise UnknownSymbol(f"unknown x symbol {x!r}") from None

    def y_index(self, y: Hashable) -> int:
        try:
            return self._y_index[y]
        except (KeyError, TypeError):
            raise UnknownSymbol(f"unknown y symbol {y!r}") from None

    def same_alphabets(self, other: "JointPMF") -> bool:
        return self.x_labels == other.x_labels and self.y_labels == other.y_labels


def validate(pmf: JointPMF) -> None:
    """Raise unless every JointPMF invariant holds."""
    for axis, labels in (("X", pmf.x_labels), ("Y", pmf.y_labels)):
        if not labels:
            raise InputError(f"empty {axis} alphabet")
        if len(set(labels)) != len(labels):
            raise DuplicateLabel(f"duplicate label in {axis} alphabet")
    p = pmf.p
    if not np.all(np.isfinite(p)):
        raise InputError("pmf contains non-finite entries")
    if np.any(p < 0):
        raise NegativeMass("pmf contains a negative entry")
    total = float(p.sum())
    if abs(total - 1.0) > TOL:
        raise NotNormalized(total)
    for i, mass in enumerate(pmf.px):
        if mass <= 0:
            raise ZeroMarginal("X", pmf.x_labels[i])
    for j, mass in enumerate(pmf.py):
        if mass <= 0:
            raise ZeroMarginal("Y", pmf.y_labels[j])


def make_pmf(p, x_labels: Sequence | None = None, y_labels: Sequence | None = None) -> JointPMF:
    arr = np.asarray(p, dtype=float)
    if arr.ndim != 2:
        raise InputError("pmf must be a matrix")
    xs = tuple(range(arr.shape[0])) if x_labels is None else tuple(x_labels)
    ys = tuple(range(arr.shape[1])) if y_labels is None else tuple(y_labels)
    pmf = JointPMF(xs, ys, arr)
    validate(pmf)
    return pmf


def from_channel(px: Sequence[float], channel, x_labels=None, y_labels=None) -> JointPMF:
    """P_XY(x, y) = P_X(x) W(y|x)."""
    px = np.asarray(px, dtype=float)
    w = np.asarray(channel, dtype=float)
    return make_pmf(px[:, None] * w, x_labels, y_labels)


def bsc_source(px1: float, flip: float) -> JointPMF:
    """X ~ Bern(px1), Y = X xor Z with Z ~ Bern(flip)."""
    return from_channel([1 - px1, px1], [[1 - flip, flip], [flip, 1 - flip]])


def dsbs(flip: float) -> JointPMF:
    """Doubly symmetric binary source: uniform X, Y = X flipped w.p. ``flip``."""
    return bsc_source(0.5, flip)


def deterministic(k: int = 2) -> JointPMF:
    """Y = X with X uniform over k symbols."""
    return make_pmf(np.eye(k) / k)


def independent(px: Sequence[float], py: Sequence[float]) -> JointPMF:
    return make_pmf(np.outer(px, py))


def random_pmf(rng: np.random.Generator, nx: int, ny: int, sparsity: float = 0.0) -> JointPMF:
    """Random full-marginal pmf; ``sparsity`` zeroes that fraction of cells
    where doing so keeps every marginal positive."""
    p = rng.dirichlet(np.ones(nx * ny)).reshape(nx, ny)
    if sparsity > 0:
        drop = rng.random((nx, ny)) < sparsity
        q = np.where(drop, 0.0, p)
        if np.all(q.sum(axis=1) > 0) and np.all(q.sum(axis=0) > 0):
            p = q / q.sum()
    return make_pmf(p)


def conditional_x_given_y(pmf: JointPMF, x, y) -> float:
    return float(pmf.x_given_y[pmf.x_index(x), pmf.y_index(y)])


def conditional_y_given_x(pmf: JointPMF, y, x) -> float:
    return float(pmf.y_given_x[pmf.x_index(x), pmf.y_index(y)])


def conditional_entropy(pmf: JointPMF) -> float:
    """H(X|Y) in bits."""
    return float(xlogy_inv(pmf.p, pmf.x_given_y).sum())


def entropy(probs) -> float:
    probs = np.asarray(probs, dtype=float)
    return float(xlogy_inv(probs, probs).sum())


def _product_labels(labels: tuple, n: int) -> tuple:
    return tuple(SEP.join(map(str, t)) for t in itertools.product(labels, repeat=n))


def product_extension(pmf: JointPMF, n: int, budget: int | None = None) -> JointPMF:
    """Blocklength-n i.i.d. pmf over X^n x Y^n (labels are comma-joined tuples)."""
    if n < 1:
        raise InputError("blocklength must be positive")
    if n == 1:
        return pmf
    budget = budgets()["product"] if budget is None else budget
    nx, ny = pmf.shape
    if (nx * ny) ** n > budget:
        raise BudgetExceeded(f"{(nx * ny) ** n} cells at n={n} exceed budget {budget}")
    p = pmf.p
    for _ in range(n - 1):
        p = np.kron(p, pmf.p)
    return JointPMF(_product_labels(pmf.x_labels, n), _product_labels(pmf.y_labels, n), p)


@dataclass(frozen=True)
class MixtureSpec:
    """Weighted components sharing identical alphabets."""

    weights: tuple[float, ...]
    components: tuple[JointPMF, ...]

    def __post_init__(self):
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))
        object.__setattr__(self, "components", tuple(self.components))
        if not self.components or len(self.weights) != len(self.components):
            raise InputError("mixture needs one weight per component")
        if any(w <= 0 for w in self.weights):
            raise InputError("mixture weights must be positive")
        if abs(sum(self.weights) - 1.0) > TOL:
            raise NotNormalized(sum(self.weights))
        first = self.components[0]
        for comp in self.components[1:]:
            if not comp.same_alphabets(first):
                raise AlphabetMismatch("mixture components must share alphabets in order")

    @classmethod
    def single(cls, pmf: JointPMF) -> "MixtureSpec":
        return cls((1.0,), (pmf,))

    @property
    def base(self) -> JointPMF:
        return self.components[0]


def as_mixture(source: JointPMF | MixtureSpec) -> MixtureSpec:
    return source if isinstance(source, MixtureSpec) else MixtureSpec.single(source)


def mix(spec: MixtureSpec) -> JointPMF:
    """Entrywise sum_i alpha_i P_i."""
    p = sum(w * c.p for w, c in zip(spec.weights, spec.components))
    return JointPMF(spec.base.x_labels, spec.base.y_labels, p)


def mixture_extension(spec: MixtureSpec, n: int, budget: int | None = None) -> JointPMF:
    """sum_i alpha_i P_i^{(x)n}: mixing happens at the sequence level."""
    if len(spec.components) == 1:
        return product_extension(spec.base, n, budget)
    return mix(MixtureSpec(spec.weights, tuple(product_extension(c, n, budget) for c in spec.components)))


def kl_divergence_x_marginals(pmf1: JointPMF, pmf2: JointPMF) -> float:
    """D(P_{X,1} || P_{X,2}) in bits; +inf when the support condition fails."""
    if pmf1.x_labels != pmf2.x_labels:
        raise AlphabetMismatch("X alphabets differ")
    p, q = pmf1.px, pmf2.px
    on = p > 0
    if np.any(q[on] <= 0):
        return math.inf
    return max(0.0, float(np.sum(p[on] * np.log2(p[on] / q[on]))))


# --- serialization -----------------------------------------------------------

def to_json_obj(pmf: JointPMF) -> dict:
    return {
        "x_alphabet": list(pmf.x_labels),
        "y_alphabet": list(pmf.y_labels),
        "pmf": pmf.p.tolist(),
    }


def from_json_obj(obj: dict) -> JointPMF:
    try:
        xs, ys, rows = obj["x_alphabet"], obj["y_alphabet"], obj["pmf"]
    except (KeyError, TypeError) as exc:
        raise InputError(f"missing pmf field: {exc}") from None
    for lab in (*xs, *ys):
        if not isinstance(lab, (str, int)) or isinstance(lab, bool):
            raise InputError(f"labels must be strings or integers, got {lab!r}")
    try:
        arr = np.array(rows, dtype=float)
    except (TypeError, ValueError) as exc:
        raise InputError(f"pmf matrix is not numeric: {exc}") from None
    if arr.ndim != 2:
        raise InputError("pmf must be a list of rows")
    return make_pmf(arr, xs, ys)


def dumps(pmf: JointPMF) -> str:
    return json.dumps(to_json_obj(pmf))


def loads(text: str) -> JointPMF:
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed JSON: {exc}") from None
    return from_json_obj(obj)


def mixture_to_json_obj(spec: MixtureSpec) -> dict:
    return {
        "components": [
            {"weight": w, "pmf": to_json_obj(c)} for w, c in zip(spec.weights, spec.components)
        ]
    }


def mixture_from_json_obj(obj: dict) -> MixtureSpec:
    try:
        comps = obj["components"]
        return MixtureSpec(
            tuple(c["weight"] for c in comps), tuple(from_json_obj(c["pmf"]) for c in comps)
        )
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed mixture: {exc}") from None


def source_from_json_obj(obj) -> JointPMF | MixtureSpec:
    if isinstance(obj, dict) and "components" in obj:
        return mixture_from_json_obj(obj)
    return from_json_obj(obj)


def read_tsv(text: str) -> JointPMF:
    """Long-form TSV with header ``x<TAB>y<TAB>p``; absent cells are zero."""
    reader = csv.reader(io.StringIO(text), delimiter="\t")
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["x", "y", "p"]:
        raise InputError("TSV header must be x<TAB>y<TAB>p")
    xs: dict = {}
    ys: dict = {}
    cells = {}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 3:
            raise InputError(f"line {lineno}: expected 3 fields")
        x, y, p = row
        try:
            val = float(p)
        except ValueError:
            raise InputError(f"line {lineno}: bad probability {p!r}") from None
        xs.setdefault(x, len(xs))
        ys.setdefault(y, len(ys))
        if (x, y) in cells:
            raise DuplicateLabel(f"line {lineno}: repeated cell ({x}, {y})")
        cells[(x, y)] = val
    arr = np.zeros((len(xs), len(ys)))
    for (x, y), val in cells.items():
        arr[xs[x], ys[y]] = val
    return make_pmf(arr, list(xs), list(ys))


def write_tsv(pmf: JointPMF) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, delimiter="\t", lineterminator="\n")
    w.writerow(["x", "y", "p"])
    for i, x in enumerate(pmf.x_labels):
        for j, y in enumerate(pmf.y_labels):
            w.writerow([x, y, repr(float(pmf.p[i, j]))])
    return buf.getvalue()


def load_source(path: str) -> JointPMF | MixtureSpec:
    """Read a pmf (JSON or TSV by extension/content) or a mixture JSON."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    if path.endswith((".tsv", ".txt")) or text.lstrip().startswith("x\t"):
        return read_tsv(text)
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"malformed JSON in {path}: {exc}") from None
    return source_from_json_obj(obj)
