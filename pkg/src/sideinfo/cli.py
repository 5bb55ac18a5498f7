"""Command-line front end.

Exit codes: 0 success, 1 a verified bound failed, 2 bad input, 3 the request
does not fit the configured enumeration budgets.  Errors are reported as one
JSON object on stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .codes import (
    EpsilonProfile,
    build_sw_code,
    elias_gamma_decode,
    pack_bits,
    random_prefix_sw_code,
    sw_code_dumps,
    sw_code_from_json_obj,
    sw_codeword_lengths,
    sw_decode_index,
    sw_exact_error,
    table_code_error,
    unpack_bits,
)
from .dist import JointPMF, MixtureSpec, conditional_entropy, load_source, mix, random_pmf
from .entropy import _check_eps, all_quantities, he_bruteforce, hhe, ohe_all, the_bruteforce_witness
from .errors import BoundViolated, BudgetExceeded, InputError, SideInfoError, StreamLengthMismatch
from .oracle import (
    optimal_common_code,
    verify_converse,
    verify_lemma5,
    verify_theorem1,
    verify_theorem2,
    verify_theorem3,
)
from .sources import (
    boundedness_check,
    encoder_sideinfo_diagnostic,
    mixture_sweep,
    ohs_sweep,
    rcom_bound_check,
    rcom_sweep,
    spectrum_quantiles,
)

DEFAULT_SEED = 0x5E1F00D
SCHEMA_VERSION = 1
EXIT_OK, EXIT_BOUND, EXIT_INPUT, EXIT_BUDGET = 0, 1, 2, 3


# --- helpers -----------------------------------------------------------------

def _pmap(fn, items, workers: int):
    """Order-preserving map; results never depend on the worker count."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else str(v)


def _write_csv(out, header: list[str], rows) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["schema_version"] + header)
    for row in rows:
        w.writerow([SCHEMA_VERSION] + [_fmt(v) for v in row])


def _one_shot(source) -> JointPMF:
    return mix(source) if isinstance(source, MixtureSpec) else source


def read_stream(path: str) -> list[str]:
    """One symbol per line; an empty file is an empty stream."""
    return Path(path).read_text().splitlines()


def parse_budget(text: str, pmf: JointPMF) -> EpsilonProfile:
    """``uniform:E`` or a JSON file holding a list or an {x label: eps} map."""
    if text.startswith("uniform:"):
        try:
            return EpsilonProfile.uniform(pmf, float(text.split(":", 1)[1]))
        except ValueError as exc:
            raise InputError(f"bad budget {text!r}") from exc
    try:
        obj = json.loads(Path(text).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read budget file {text!r}: {exc}") from None
    if isinstance(obj, dict):
        per = [0.0] * pmf.shape[0]
        for label, e in obj.items():
            per[pmf.x_index(label)] = e
        return EpsilonProfile.of(pmf, per)
    return EpsilonProfile.of(pmf, obj)


# --- encode / decode ---------------------------------------------------------

def codeword_spans(stream: str) -> list[tuple[int, int]]:
    """(start, length) of each concatenated codeword, parsed from headers."""
    spans = []
    pos = 0
    while pos < len(stream):
        l, used = elias_gamma_decode(stream, pos)
        spans.append((pos, used + l))
        pos += used + l
    if pos != len(stream):
        raise InputError("bitstream ends inside a codeword")
    return spans


def _encode_chunk(args):
    code, xs = args
    return "".join(code.codeword(i) for i in xs)


def _decode_chunk(args):
    code, pieces = args
    return [sw_decode_index(code, w, j).x for w, j in pieces]


def _chunks(seq, workers: int):
    k = max(1, workers)
    size = max(1, -(-len(seq) // k))
    return [seq[i:i + size] for i in range(0, len(seq), size)]


def encode_stream(code, symbols: list[str], workers: int = 1) -> str:
    xs = [code.pmf.x_index(s) for s in symbols]
    parts = _pmap(_encode_chunk, [(code, c) for c in _chunks(xs, workers)], workers)
    return "".join(parts)


def decode_indices(code, stream: str, side: list[str], workers: int = 1) -> list[int | None]:
    """x index per codeword, None where the decoder fails."""
    spans = codeword_spans(stream)
    if len(spans) != len(side):
        raise StreamLengthMismatch(f"{len(spans)} codewords but {len(side)} side-information symbols")
    pieces = [(stream[a:a + n], code.pmf.y_index(y)) for (a, n), y in zip(spans, side)]
    out = []
    for part in _pmap(_decode_chunk, [(code, c) for c in _chunks(pieces, workers)], workers):
        out.extend(part)
    return out


def decode_stream(code, stream: str, side: list[str], workers: int = 1) -> list:
    return [None if i is None else code.pmf.x_labels[i] for i in decode_indices(code, stream, side, workers)]


@dataclass
class RoundtripReport:
    symbols: int
    decoded_ok: int
    total_bits: int
    success: list = field(repr=False)
    bitstream: bytes = field(repr=False, default=b"")


def encode_decode_roundtrip(pmf: JointPMF, symbols: list[str], side: list[str], delta: float,
                            budget: EpsilonProfile, seed: int = DEFAULT_SEED,
                            workers: int = 1) -> RoundtripReport:
    """Encode x-stream, concatenate, decode with the y-stream, compare."""
    if len(symbols) != len(side):
        raise StreamLengthMismatch(f"{len(symbols)} symbols but {len(side)} side-information symbols")
    code = build_sw_code(pmf, budget, delta, seed)
    bits = encode_stream(code, symbols, workers)
    decoded = decode_indices(code, bits, side, workers)
    success = [d == pmf.x_index(s) for d, s in zip(decoded, symbols)]
    return RoundtripReport(len(symbols), sum(success), len(bits), success, pack_bits(bits))


# --- subcommands -------------------------------------------------------------

def cmd_quantities(args, out) -> int:
    pmf = _one_shot(load_source(args.input))
    rows = [("H", "", conditional_entropy(pmf), "")]
    for eps in args.eps:
        eps = _check_eps(eps)
        q = all_quantities(pmf, eps)
        if "he" in q:
            _, A = he_bruteforce(pmf, eps)
            rows.append(("he", eps, q["he"], A.encode(pmf)))
            _, B = the_bruteforce_witness(pmf, eps)
            rows.append(("the", eps, q["the"], B.encode(pmf)))
        rows.append(("the_frac", eps, q["the_frac"], ""))
        rows.append(("hhe", eps, q["hhe"], f"i*={hhe(pmf, eps)[1].i_star}"))
        rows.append(("ohs", eps, q["ohs"], ""))
        for label, v in zip(pmf.x_labels, ohe_all(pmf, eps)):
            rows.append(("ohe", eps, float(v), f"x={label}"))
    _write_csv(out, ["quantity", "epsilon", "value", "witness"], rows)
    return EXIT_OK


def cmd_encode(args, out) -> int:
    pmf = _one_shot(load_source(args.input))
    code = build_sw_code(pmf, parse_budget(args.eps_budget, pmf), args.delta, args.seed)
    symbols = read_stream(args.symbols)
    bits = encode_stream(code, symbols, args.workers)
    Path(args.bits).write_bytes(pack_bits(bits))
    if args.codec:
        Path(args.codec).write_text(sw_code_dumps(code) + "\n")
    _write_csv(out, ["symbols", "total_bits", "seed"], [(len(symbols), len(bits), args.seed)])
    return EXIT_OK


def cmd_decode(args, out) -> int:
    try:
        obj = json.loads(Path(args.codec).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read codec {args.codec!r}: {exc}") from None
    code = sw_code_from_json_obj(obj)
    bits = unpack_bits(Path(args.bits).read_bytes())
    decoded = decode_stream(code, bits, read_stream(args.side), args.workers)
    text = "".join(("" if d is None else str(d)) + "\n" for d in decoded)
    if args.symbols_out:
        Path(args.symbols_out).write_text(text)
    failures = sum(d is None for d in decoded)
    _write_csv(out, ["symbols", "decoded", "failures", "total_bits"],
               [(len(decoded), len(decoded) - failures, failures, len(bits))])
    return EXIT_OK


def cmd_roundtrip(args, out) -> int:
    pmf = _one_shot(load_source(args.input))
    rep = encode_decode_roundtrip(
        pmf, read_stream(args.symbols), read_stream(args.side), args.delta,
        parse_budget(args.eps_budget, pmf), args.seed, args.workers,
    )
    if args.bits:
        Path(args.bits).write_bytes(rep.bitstream)
    _write_csv(out, ["symbols", "decoded_ok", "total_bits", "seed"],
               [(rep.symbols, rep.decoded_ok, rep.total_bits, args.seed)])
    return EXIT_OK


VERIFY_HEADER = ["instance", "theorem", "epsilon", "delta", "passed",
                 "he", "the", "the_frac", "hhe", "opt", "values", "detail"]


def _five(pmf: JointPMF, eps: float) -> list:
    q = all_quantities(pmf, eps)
    try:
        opt = optimal_common_code(pmf, eps).optimum
    except BudgetExceeded:
        opt = None
    return [q.get("he"), q.get("the"), q["the_frac"], q["hhe"], opt]


def _verify_job(job) -> list:
    name, pmf, theorem, eps, delta, seed, n, adversarial = job
    rows = []

    def row(rep):
        values = json.dumps({k: float(v) for k, v in rep.values.items()}, sort_keys=True)
        return [name, rep.theorem, eps, delta, rep.passed, *_five(pmf, eps), values, rep.detail]

    if theorem == "1":
        rows.append(row(verify_theorem1(pmf, eps, strict=False)))
    elif theorem == "2":
        rows.append(row(verify_theorem2(pmf, eps, strict=False)))
    elif theorem == "3":
        budget = EpsilonProfile.uniform(pmf, eps)
        rows.append(row(verify_theorem3(pmf, budget, delta, range(seed, seed + 200), strict=False)))
    elif theorem in ("4", "lemma5"):
        check = verify_converse if theorem == "4" else verify_lemma5
        code = build_sw_code(pmf, EpsilonProfile.uniform(pmf, eps), delta, seed)
        rows.append(row(check(pmf, sw_codeword_lengths(code), sw_exact_error(pmf, code), delta, strict=False)))
        rng = np.random.default_rng([seed, 4])
        for _ in range(adversarial):
            tc = random_prefix_sw_code(pmf, rng)
            rows.append(row(check(pmf, tc.lengths(), table_code_error(pmf, tc), delta, strict=False)))
    elif theorem == "rcom":
        rep = rcom_bound_check(pmf, eps, n, strict=False)
        values = json.dumps({"lower": rep.lower, "value": rep.value, "upper": rep.upper,
                             "slack": rep.slack, "n": n}, sort_keys=True)
        rows.append([name, "rcom", eps, "", rep.passed, *_five(pmf, eps), values, ""])
    return rows


def cmd_verify(args, out) -> int:
    instances = []
    if args.input:
        instances.append((Path(args.input).name, _one_shot(load_source(args.input))))
    for k in range(args.random):
        rng = np.random.default_rng([args.seed, k])
        instances.append((f"random{k}", random_pmf(rng, args.nx, args.ny, args.sparsity)))
    if not instances:
        raise InputError("verify needs an input file or --random K")
    jobs = [(name, pmf, args.theorem, _check_eps(eps), args.delta, args.seed, args.n, args.adversarial)
            for name, pmf in instances for eps in args.eps]
    rows = [r for part in _pmap(_verify_job, jobs, args.workers) for r in part]
    _write_csv(out, VERIFY_HEADER, rows)
    return EXIT_OK if all(r[4] for r in rows) else EXIT_BOUND


SWEEP_HEADER = ["quantity", "n", "value", "prediction", "gap", "stderr", "method"]


def _spectrum_job(job):
    return spectrum_quantiles(*job)


def cmd_sweep(args, out) -> int:
    source = load_source(args.input)
    eps = _check_eps(args.eps)
    if args.quantity == "mixture":
        spec = source if isinstance(source, MixtureSpec) else MixtureSpec((1.0,), (source,))
        results = mixture_sweep(spec, eps, args.n_max, method=args.method)
    elif args.quantity == "rcom":
        results = rcom_sweep(source, eps, args.n_max, method=args.method)
    elif args.quantity == "ohs":
        results = ohs_sweep(source, eps, args.n_max, method=args.method,
                            samples=args.samples, seed=args.seed)
    else:
        comps = source.components if isinstance(source, MixtureSpec) else (source,)
        hs = [conditional_entropy(c) for c in comps]
        jobs = [(source, n, args.eps_tail, max(args.samples, 1000), args.seed + n)
                for n in range(1, args.n_max + 1)]
        rows = []
        for n, est in enumerate(_pmap(_spectrum_job, jobs, args.workers), start=1):
            se_lo = est.std / np.sqrt(est.samples)
            rows.append(("spectrum_lo", n, est.quantile_lo, min(hs), est.quantile_lo - min(hs), se_lo, "mc"))
            rows.append(("spectrum_hi", n, est.quantile_hi, max(hs), est.quantile_hi - max(hs), se_lo, "mc"))
        _write_csv(out, SWEEP_HEADER, rows)
        return EXIT_OK
    _write_csv(out, SWEEP_HEADER,
               [(r.quantity, r.n, r.value, r.prediction, r.gap, r.stderr, r.method) for r in results])
    return EXIT_OK


def cmd_diagnose(args, out) -> int:
    source = load_source(args.input)
    if args.boundedness:
        rep = boundedness_check(source, args.n_max)
        _write_csv(out, ["n", "value", "bound"], rep.per_n)
        return EXIT_OK if rep.passed else EXIT_BOUND
    rep = encoder_sideinfo_diagnostic(source, n_max=args.n_max, gamma=args.gamma)
    _write_csv(out, ["n", "eps_n", "H", "ohs", "d", "tail_term", "bracket_ok", "condition1_indicated"],
               [(r.n, r.eps_n, r.H, r.ohs, r.d, r.tail_term, r.bracket_ok, rep.satisfied) for r in rep.rows])
    return EXIT_OK


# --- parser ------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise InputError(f"usage: {message}")


def _seed(text: str) -> int:
    try:
        return int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad seed {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=_seed, default=DEFAULT_SEED,
                        help="randomness seed (default 0x5E1F00D)")
    common.add_argument("--workers", type=int, default=1, help="worker processes; outputs do not depend on it")
    common.add_argument("-o", "--output", help="write CSV here instead of stdout")

    p = _Parser(prog="sideinfo", description="Source coding with side-information: quantities, codecs, checks.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    q = sub.add_parser("quantities", parents=[common], help="one-shot quantities for each epsilon")
    q.add_argument("input")
    q.add_argument("--eps", type=float, nargs="+", required=True)
    q.set_defaults(func=cmd_quantities)

    e = sub.add_parser("encode", parents=[common], help="SW-encode a symbol stream")
    e.add_argument("input")
    e.add_argument("--symbols", required=True, help="x stream, one label per line")
    e.add_argument("--bits", required=True, help="output bitstream file")
    e.add_argument("--codec", help="write the codec description (JSON) here")
    e.add_argument("--delta", type=float, required=True)
    e.add_argument("--eps-budget", default="uniform:0.1", help="uniform:E or a JSON file")
    e.set_defaults(func=cmd_encode)

    d = sub.add_parser("decode", parents=[common], help="decode a bitstream with side-information")
    d.add_argument("--codec", required=True)
    d.add_argument("--bits", required=True)
    d.add_argument("--side", required=True, help="y stream, one label per line")
    d.add_argument("--symbols-out", help="decoded labels, empty line on failure")
    d.set_defaults(func=cmd_decode)

    r = sub.add_parser("roundtrip", parents=[common], help="encode then decode a stream pair")
    r.add_argument("input")
    r.add_argument("--symbols", required=True)
    r.add_argument("--side", required=True)
    r.add_argument("--bits", help="also write the bitstream here")
    r.add_argument("--delta", type=float, required=True)
    r.add_argument("--eps-budget", default="uniform:0.1")
    r.set_defaults(func=cmd_roundtrip)

    v = sub.add_parser("verify", parents=[common], help="check a coding bound")
    v.add_argument("input", nargs="?")
    v.add_argument("--theorem", choices=["1", "2", "3", "4", "lemma5", "rcom"], required=True)
    v.add_argument("--eps", type=float, nargs="+", default=[0.1])
    v.add_argument("--delta", type=float, default=2.0)
    v.add_argument("--n", type=int, default=10, help="blocklength for rcom")
    v.add_argument("--random", type=int, default=0, metavar="K", help="also check K random pmfs")
    v.add_argument("--nx", type=int, default=3)
    v.add_argument("--ny", type=int, default=3)
    v.add_argument("--sparsity", type=float, default=0.0)
    v.add_argument("--adversarial", type=int, default=20, help="random prefix codes for 4/lemma5")
    v.set_defaults(func=cmd_verify)

    s = sub.add_parser("sweep", parents=[common], help="finite-blocklength sweep")
    s.add_argument("input")
    s.add_argument("--quantity", choices=["rcom", "ohs", "mixture", "spectrum"], required=True)
    s.add_argument("--n-max", type=int, required=True)
    s.add_argument("--eps", type=float, default=0.1)
    s.add_argument("--eps-tail", type=float, default=0.05)
    s.add_argument("--method", choices=["auto", "enum", "types", "mc"], default="auto")
    s.add_argument("--samples", type=int, default=0)
    s.set_defaults(func=cmd_sweep)

    g = sub.add_parser("diagnose", parents=[common], help="finite-n diagnostics")
    g.add_argument("input")
    mode = g.add_mutually_exclusive_group(required=True)
    mode.add_argument("--condition1", action="store_true", help="encoder side-information indicator")
    mode.add_argument("--boundedness", action="store_true")
    g.add_argument("--n-max", type=int, default=10)
    g.add_argument("--gamma", type=float, default=0.02)
    g.set_defaults(func=cmd_diagnose)
    return p


def _error(exc: Exception, code: int) -> int:
    kind = exc.kind if isinstance(exc, SideInfoError) else type(exc).__name__
    sys.stderr.write(json.dumps({"error": kind, "message": str(exc), "exit_code": code}, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        sys.stderr.write(f"# seed={args.seed:#x}\n")
        buf = io.StringIO()
        status = args.func(args, buf)
        if args.output:
            Path(args.output).write_text(buf.getvalue())
        else:
            sys.stdout.write(buf.getvalue())
        return status
    except BoundViolated as exc:
        return _error(exc, EXIT_BOUND)
    except BudgetExceeded as exc:
        return _error(exc, EXIT_BUDGET)
    except InputError as exc:
        return _error(exc, EXIT_INPUT)
    except SideInfoError as exc:
        return _error(exc, EXIT_INPUT)
    except (OSError, ValueError) as exc:
        return _error(exc, EXIT_INPUT)


if __name__ == "__main__":
    sys.exit(main())
