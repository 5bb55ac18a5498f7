"""Bit-exact codes: flag+Shannon codes with common side-information, Elias
gamma headers, and the random-binning Slepian-Wolf codec.

Bitstrings are plain ``str`` objects over ``"01"``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .dist import JointPMF, from_json_obj, to_json_obj
from .entropy import RestrictedSet, ideal_lengths, ohe_all
from .errors import (
    EmptyRestriction,
    InputError,
    KraftViolated,
    MalformedHeader,
    ZeroProbabilitySymbol,
)

Bitstring = str
KRAFT_TOL = 1e-12


# --- prefix-code helpers -----------------------------------------------------

def kraft_sum(lengths: Iterable[int]) -> float:
    return float(sum(2.0 ** -l for l in lengths))


def kraft_check(lengths: Iterable[int]) -> None:
    """Raise KraftViolated if sum 2^-l exceeds 1 (+1e-12)."""
    s = kraft_sum(lengths)
    if s > 1.0 + KRAFT_TOL:
        raise KraftViolated(f"Kraft sum {s} > 1")


def is_prefix_free(words: Iterable[str]) -> bool:
    """True if no word is a proper prefix of a different word (repeats allowed)."""
    distinct = sorted(set(words))
    # in sorted order a prefix is immediately followed by one of its extensions
    return all(not b.startswith(a) for a, b in zip(distinct, distinct[1:]))


def canonical_codewords(lengths: Mapping[Hashable, int], order: Sequence[Hashable] | None = None) -> dict:
    """Assign codewords lexicographically in order of non-decreasing length.

    Ties in length follow ``order`` (default: mapping order).  Requires the
    Kraft inequality.
    """
    kraft_check(lengths.values())
    order = list(lengths) if order is None else [s for s in order if s in lengths]
    rank = {s: k for k, s in enumerate(order)}
    code = 0
    prev = 0
    out = {}
    for sym in sorted(order, key=lambda s: (lengths[s], rank[s])):
        l = lengths[sym]
        code <<= l - prev
        out[sym] = format(code, f"0{l}b") if l > 0 else ""
        code += 1
        prev = l
    return out


def shannon_lengths(cond: Mapping[Hashable, float]) -> dict:
    """ceil(log2 1/Q(x|y)) for every x with Q > 0."""
    out = {}
    for sym, q in cond.items():
        if q <= 0:
            raise ZeroProbabilitySymbol(f"symbol {sym!r} has probability {q}")
        out[sym] = max(0, math.ceil(-math.log2(q)))
    return out


# --- codes with common side-information --------------------------------------

@dataclass(frozen=True)
class CommonSICode:
    """Encoder table (x, y) -> codeword and per-y decoder tables.

    ``decode_tables[y]`` maps codeword -> x index; ``correct_set`` holds the
    cells the decoder reproduces.
    """

    encode_table: dict
    decode_tables: tuple
    correct_set: RestrictedSet

    def codebook(self, j: int) -> set[str]:
        return {w for (i, jj), w in self.encode_table.items() if jj == j}

    def decode(self, stream: str, j: int) -> tuple[int, int]:
        """Parse one codeword from the front of ``stream`` under y index j."""
        table = self.decode_tables[j]
        if "" in table:
            return table[""], 0
        for k in range(1, len(stream) + 1):
            hit = table.get(stream[:k])
            if hit is not None:
                return hit, k
        raise MalformedHeader("stream does not start with a codeword")


def _correct_set(pmf: JointPMF, encode_table: dict, decode_tables) -> RestrictedSet:
    members = [
        (i, j) for (i, j), w in encode_table.items() if decode_tables[j].get(w) == i
    ]
    return RestrictedSet.of(pmf, members)


def build_flag_code(pmf: JointPMF, A: RestrictedSet) -> CommonSICode:
    """Flag code: "0" + Shannon codeword of Q^A(.|y) inside A, "1" outside.

    The "1" codeword decodes to the most probable member of A(y), or to x index
    0 when A(y) is empty.  Zero-probability cells of A have no Shannon codeword
    and are sent with the "1" flag.
    """
    if A.mass <= 0:
        raise EmptyRestriction("flag code needs a restriction of positive mass")
    nx, ny = pmf.shape
    encode_table = {}
    decode_tables = []
    for j in range(ny):
        inside = sorted(i for i in A.column(j) if pmf.p[i, j] > 0)
        col_mass = sum(pmf.p[i, j] for i in inside)
        table: dict[str, int] = {}
        if inside:
            lengths = shannon_lengths({i: pmf.p[i, j] / col_mass for i in inside})
            words = canonical_codewords(lengths, inside)
            for i in inside:
                encode_table[(i, j)] = "0" + words[i]
                table["0" + words[i]] = i
        outside = [i for i in range(nx) if (i, j) not in encode_table]
        if outside:
            for i in outside:
                encode_table[(i, j)] = "1"
            table["1"] = max(inside, key=lambda i: (pmf.p[i, j], -i)) if inside else 0
        decode_tables.append(table)
    decode_tables = tuple(decode_tables)
    return CommonSICode(encode_table, decode_tables, _correct_set(pmf, encode_table, decode_tables))


def evaluate_common_code(pmf: JointPMF, code: CommonSICode) -> tuple[float, float]:
    """Exact (error probability, average length) by running the decoder on
    every cell."""
    err = 0.0
    avg = 0.0
    nx, ny = pmf.shape
    for i in range(nx):
        for j in range(ny):
            w = code.encode_table[(i, j)]
            avg += pmf.p[i, j] * len(w)
            decoded, used = code.decode(w, j)
            if decoded != i or used != len(w):
                err += pmf.p[i, j]
    return err, avg


# --- Elias gamma -------------------------------------------------------------

def elias_gamma_encode(m: int) -> Bitstring:
    """floor(log2 m) zeros followed by m in binary: 2 floor(log2 m) + 1 bits."""
    if m < 1:
        raise InputError(f"Elias gamma encodes positive integers, got {m}")
    body = format(m, "b")
    return "0" * (len(body) - 1) + body


def elias_gamma_decode(stream: str, pos: int = 0) -> tuple[int, int]:
    """Decode one integer starting at ``pos``; returns (m, bits consumed)."""
    zeros = 0
    k = pos
    while k < len(stream) and stream[k] == "0":
        zeros += 1
        k += 1
    end = k + zeros + 1
    if end > len(stream):
        raise MalformedHeader("truncated Elias gamma header")
    return int(stream[k:end], 2), end - pos


def gamma_length(m: int) -> int:
    return 2 * (m.bit_length() - 1) + 1


# --- Slepian-Wolf codec ------------------------------------------------------

@dataclass(frozen=True)
class EpsilonProfile:
    """Per-symbol error budgets eps_x and their P_X-average."""

    per_symbol: tuple
    aggregate: float

    @classmethod
    def of(cls, pmf: JointPMF, per_symbol: Sequence[float]) -> "EpsilonProfile":
        eps = tuple(float(e) for e in per_symbol)
        if len(eps) != pmf.shape[0]:
            raise InputError("one budget per x symbol is required")
        if any(not 0.0 <= e <= 1.0 for e in eps):
            raise InputError("budgets must lie in [0, 1]")
        return cls(eps, float(np.dot(pmf.px, eps)))

    @classmethod
    def uniform(cls, pmf: JointPMF, eps: float) -> "EpsilonProfile":
        return cls.of(pmf, [eps] * pmf.shape[0])


def ohe_profile(pmf: JointPMF, budget: EpsilonProfile) -> np.ndarray:
    """h-bar^{eps_x}(x) per x index."""
    out = np.empty(pmf.shape[0])
    cache: dict[float, np.ndarray] = {}
    for i, e in enumerate(budget.per_symbol):
        if e not in cache:
            cache[e] = ohe_all(pmf, e)
        out[i] = cache[e][i]
    return out


def bin_bits(seed: int, x_index: int, length: int) -> Bitstring:
    """Uniform ``length``-bit bin index keyed by (seed, x, length)."""
    rng = np.random.Generator(np.random.Philox(key=np.random.SeedSequence([seed, x_index, length]).generate_state(2, np.uint64)))
    return "".join("1" if b else "0" for b in rng.integers(0, 2, size=length))


class DecodeOutcome(NamedTuple):
    x: int | None  # x index, None on failure
    consumed: int
    candidates: int


@dataclass(frozen=True)
class SWBinCode:
    """Random-binning SW code.

    Codeword of x: gamma(l~(x)) followed by the l~(x)-bit bin index, with
    l~(x) = ceil(h-bar^{eps_x}(x) + delta).  The decoder, given (l, m, y),
    looks for the unique x with l~(x) = l, bin(x) = m and
    -log2 P_{X|Y}(x|y) <= l - delta/2.
    """

    pmf: JointPMF = field(repr=False)
    budget: EpsilonProfile
    delta: float
    seed: int
    ohe: tuple
    length_fn: tuple
    bins: tuple
    ideal: np.ndarray = field(repr=False, compare=False)

    def codeword(self, i: int) -> Bitstring:
        return elias_gamma_encode(self.length_fn[i]) + self.bins[i]

    def total_length(self, i: int) -> int:
        return gamma_length(self.length_fn[i]) + self.length_fn[i]

    def in_typical_set(self, i: int, j: int, l: int) -> bool:
        return bool(self.ideal[i, j] <= l - self.delta / 2)

    def typical_members(self, j: int, l: int) -> list[int]:
        return [int(i) for i in np.nonzero(self.ideal[:, j] <= l - self.delta / 2)[0]]

    def to_json_obj(self) -> dict:
        return {
            "x_alphabet": list(self.pmf.x_labels),
            "length_fn": list(self.length_fn),
            "seed": self.seed,
            "delta": self.delta,
            "budget": list(self.budget.per_symbol),
            "pmf": to_json_obj(self.pmf),
        }


def build_sw_code(pmf: JointPMF, budget: EpsilonProfile, delta: float, seed: int) -> SWBinCode:
    if not delta > 0:
        raise InputError("delta must be positive")
    h = ohe_profile(pmf, budget)
    lengths = tuple(math.ceil(v + delta) for v in h)
    bins = tuple(bin_bits(seed, i, l) for i, l in enumerate(lengths))
    return SWBinCode(
        pmf, budget, float(delta), int(seed), tuple(float(v) for v in h), lengths, bins,
        ideal_lengths(pmf),
    )


def sw_code_from_json_obj(obj: dict) -> SWBinCode:
    """Rebuild a codec; bins are regenerated from the seed."""
    try:
        pmf = from_json_obj(obj["pmf"])
        code = build_sw_code(pmf, EpsilonProfile.of(pmf, obj["budget"]), obj["delta"], obj["seed"])
        stored = tuple(obj["length_fn"])
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed codec description: {exc}") from None
    if stored != code.length_fn:
        raise InputError("stored length function disagrees with the rebuilt codec")
    return code


def sw_code_dumps(code: SWBinCode) -> str:
    return json.dumps(code.to_json_obj(), sort_keys=True)


def sw_encode(code: SWBinCode, x) -> Bitstring:
    return code.codeword(code.pmf.x_index(x))


def sw_decode_index(code: SWBinCode, stream: str, j: int, pos: int = 0) -> DecodeOutcome:
    """Decode one codeword at ``pos`` under side-information index j."""
    l, used = elias_gamma_decode(stream, pos)
    start = pos + used
    if start + l > len(stream):
        raise MalformedHeader("truncated bin index")
    m = stream[start:start + l]
    f = code.ideal[:, j]
    threshold = l - code.delta / 2
    hits = [
        i for i in range(len(code.length_fn))
        if code.length_fn[i] == l and code.bins[i] == m and f[i] <= threshold
    ]
    x = hits[0] if len(hits) == 1 else None
    return DecodeOutcome(x, used + l, len(hits))


def sw_decode(code: SWBinCode, pmf: JointPMF, stream: str, y):
    """Decode the codeword at the front of ``stream``; returns the x label or
    None when zero or several candidates survive."""
    if not code.pmf.same_alphabets(pmf):
        raise InputError("codec and pmf alphabets differ")
    out = sw_decode_index(code, stream, pmf.y_index(y))
    return None if out.x is None else pmf.x_labels[out.x]


def sw_exact_error(pmf: JointPMF, code: SWBinCode) -> float:
    """Exact Pr{X != decoded} by running the decoder on every cell."""
    err = 0.0
    nx, ny = pmf.shape
    for i in range(nx):
        word = code.codeword(i)
        for j in range(ny):
            if pmf.p[i, j] == 0:
                continue
            if sw_decode_index(code, word, j).x != i:
                err += pmf.p[i, j]
    return err


def sw_codeword_lengths(code: SWBinCode) -> list[int]:
    return [code.total_length(i) for i in range(len(code.length_fn))]


def theorem3_length_bound(h: float, delta: float) -> float:
    return h + delta + 2 * math.log2(h + delta + 1) + 3


# --- general SW codes (for converse checks) ----------------------------------

@dataclass(frozen=True)
class TableSWCode:
    """Arbitrary SW code: codeword per x and a decision per (codeword, y)."""

    codewords: tuple
    decisions: dict

    def lengths(self) -> list[int]:
        return [len(w) for w in self.codewords]


def map_decoder_code(pmf: JointPMF, codewords: Sequence[str]) -> TableSWCode:
    """Decoder picks the x with largest P_XY(x, y) among those sharing the
    received codeword (ties: smallest index)."""
    decisions = {}
    nx, ny = pmf.shape
    for w in set(codewords):
        group = [i for i in range(nx) if codewords[i] == w]
        for j in range(ny):
            decisions[(w, j)] = max(group, key=lambda i: (pmf.p[i, j], -i))
    return TableSWCode(tuple(codewords), decisions)


def table_code_error(pmf: JointPMF, code: TableSWCode) -> float:
    nx, ny = pmf.shape
    return float(sum(
        pmf.p[i, j] for i in range(nx) for j in range(ny)
        if code.decisions[(code.codewords[i], j)] != i
    ))


def random_prefix_sw_code(pmf: JointPMF, rng: np.random.Generator, max_len: int = 6) -> TableSWCode:
    """A random prefix codebook of random size with a random (possibly
    many-to-one) assignment of x symbols, decoded by MAP."""
    nx = pmf.shape[0]
    size = int(rng.integers(1, nx + 1))
    while True:
        lengths = rng.integers(0 if size == 1 else 1, max_len + 1, size=size)
        if kraft_sum(lengths) <= 1.0:
            break
    words = list(canonical_codewords({k: int(l) for k, l in enumerate(lengths)}).values())
    assign = rng.integers(0, size, size=nx)
    return map_decoder_code(pmf, [words[a] for a in assign])


def converse_extract(pmf: JointPMF, lengths: Sequence[float], delta: float) -> EpsilonProfile:
    """eps_x = Pr{-log2 P_{X|Y}(x|Y_x) > l(x) + delta | X = x}."""
    if not delta > 0:
        raise InputError("delta must be positive")
    f = ideal_lengths(pmf)
    w = pmf.y_given_x
    lengths = np.asarray(lengths, dtype=float)
    tail = np.where((f > lengths[:, None] + delta) & (w > 0), w, 0.0).sum(axis=1)
    return EpsilonProfile.of(pmf, np.clip(tail, 0.0, 1.0))


def lemma5_tail(pmf: JointPMF, lengths: Sequence[float], delta: float) -> float:
    """Pr{-log2 P_{X|Y}(X|Y) > l(X) + delta}."""
    f = ideal_lengths(pmf)
    lengths = np.asarray(lengths, dtype=float)
    return float(pmf.p[(f > lengths[:, None] + delta) & (pmf.p > 0)].sum())


# --- byte serialisation ------------------------------------------------------

def pack_bits(bits: str) -> bytes:
    """8-byte big-endian bit count, then the bits MSB-first, zero-padded."""
    n = len(bits)
    padded = bits + "0" * (-n % 8)
    body = int(padded, 2).to_bytes(len(padded) // 8, "big") if padded else b""
    return n.to_bytes(8, "big") + body


def unpack_bits(data: bytes) -> str:
    if len(data) < 8:
        raise MalformedHeader("missing bit-length field")
    n = int.from_bytes(data[:8], "big")
    body = data[8:]
    if len(body) * 8 < n or len(body) != (n + 7) // 8:
        raise MalformedHeader("bit-length field disagrees with payload size")
    if not body:
        return ""
    return format(int.from_bytes(body, "big"), f"0{len(body) * 8}b")[:n]
