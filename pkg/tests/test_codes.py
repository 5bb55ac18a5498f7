import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import epsilons, pmfs
from oracles import elias_gamma
from sideinfo.codes import (
    CommonSICode,
    EpsilonProfile,
    build_flag_code,
    build_sw_code,
    canonical_codewords,
    converse_extract,
    elias_gamma_decode,
    elias_gamma_encode,
    evaluate_common_code,
    gamma_length,
    is_prefix_free,
    kraft_check,
    kraft_sum,
    lemma5_tail,
    pack_bits,
    random_prefix_sw_code,
    shannon_lengths,
    sw_code_dumps,
    sw_code_from_json_obj,
    sw_codeword_lengths,
    sw_decode,
    sw_decode_index,
    sw_encode,
    sw_exact_error,
    table_code_error,
    theorem3_length_bound,
    unpack_bits,
)
from sideinfo.dist import deterministic, dsbs, random_pmf
from sideinfo.entropy import RestrictedSet, he_bruteforce, ohe_all
from sideinfo.errors import (
    EmptyRestriction,
    InputError,
    KraftViolated,
    MalformedHeader,
    ZeroProbabilitySymbol,
)

D = dsbs(0.25)


def test_shannon_lengths():
    assert shannon_lengths({"a": 0.75, "b": 0.25}) == {"a": 1, "b": 2}
    assert set(shannon_lengths({k: 0.25 for k in range(4)}).values()) == {2}
    lens = shannon_lengths({0: 0.5, 1: 0.3, 2: 0.2})
    assert [lens[k] for k in range(3)] == [1, 2, 3]
    assert kraft_sum(lens.values()) == pytest.approx(0.875)
    with pytest.raises(ZeroProbabilitySymbol):
        shannon_lengths({0: 1.0, 1: 0.0})


def test_kraft():
    kraft_check([1, 2, 2])
    with pytest.raises(KraftViolated):
        kraft_check([1, 1, 2])


def test_canonical_codewords_prefix_free():
    words = canonical_codewords({"a": 1, "b": 2, "c": 3, "d": 3})
    assert words == {"a": "0", "b": "10", "c": "110", "d": "111"}
    assert canonical_codewords({"only": 0}) == {"only": ""}


def test_flag_code_deterministic():
    pmf = deterministic()
    code = build_flag_code(pmf, RestrictedSet.full(pmf))
    # supported cells; zero-mass cells have no Shannon codeword and take "1"
    assert {code.encode_table[(i, i)] for i in range(2)} == {"0"}
    assert evaluate_common_code(pmf, code) == (0.0, 1.0)


def test_flag_code_dsbs_top3():
    A = RestrictedSet.of(D, [(0, 0), (1, 1), (0, 1)])
    code = build_flag_code(D, A)
    err, avg = evaluate_common_code(D, code)
    assert err == pytest.approx(0.125, abs=1e-15)
    assert avg <= he_bruteforce(D, 0.2)[0] + 2
    assert code.correct_set.members >= A.members


def test_flag_code_full_mass():
    A = RestrictedSet.full(D)
    err, avg = evaluate_common_code(D, build_flag_code(D, A))
    assert err == 0.0 and avg <= 0.811279 + 2
    with pytest.raises(EmptyRestriction):
        build_flag_code(D, RestrictedSet.empty())


def test_all_ones_code_error():
    pmf = random_pmf(np.random.default_rng(3), 3, 3)
    enc = {(i, j): "1" for i in range(3) for j in range(3)}
    tables = tuple({"1": int(np.argmax(pmf.p[:, j]))} for j in range(3))
    members = [(int(np.argmax(pmf.p[:, j])), j) for j in range(3)]
    code = CommonSICode(enc, tables, RestrictedSet.of(pmf, members))
    err, avg = evaluate_common_code(pmf, code)
    assert err == pytest.approx(1 - pmf.p.max(axis=0).sum(), abs=1e-12)
    assert avg == pytest.approx(1.0)


def random_common_code(pmf, rng):
    """Per column: random prefix codebook, random assignment, MAP decoding."""
    nx, ny = pmf.shape
    enc, tables, members = {}, [], []
    for j in range(ny):
        size = int(rng.integers(1, nx + 1))
        while True:
            lengths = rng.integers(0 if size == 1 else 1, 5, size=size)
            if kraft_sum(lengths) <= 1:
                break
        words = list(canonical_codewords({k: int(l) for k, l in enumerate(lengths)}).values())
        assign = rng.integers(0, size, size=nx)
        table = {}
        for k, w in enumerate(words):
            group = [i for i in range(nx) if assign[i] == k]
            if group:
                best = max(group, key=lambda i: (pmf.p[i, j], -i))
                table[w] = best
                members.append((best, j))
        for i in range(nx):
            enc[(i, j)] = words[assign[i]]
        tables.append(table)
    return CommonSICode(enc, tuple(tables), RestrictedSet.of(pmf, members))


def test_any_code_respects_converse(rng):
    for _ in range(150):
        pmf = random_pmf(rng, int(rng.integers(2, 4)), int(rng.integers(1, 4)), 0.2)
        code = random_common_code(pmf, rng)
        err, avg = evaluate_common_code(pmf, code)
        assert avg >= he_bruteforce(pmf, min(1.0, err))[0] - 1e-9
        for j in range(pmf.shape[1]):
            assert is_prefix_free(code.codebook(j))


def test_elias_examples():
    assert elias_gamma_encode(1) == "1"
    assert elias_gamma_encode(2) == "010"
    assert elias_gamma_encode(5) == "00101"
    with pytest.raises(InputError):
        elias_gamma_encode(0)
    with pytest.raises(MalformedHeader):
        elias_gamma_decode("0001")
    with pytest.raises(MalformedHeader):
        elias_gamma_decode("")


def test_elias_exhaustive():
    for m in range(1, 2**16 + 1):
        w = elias_gamma_encode(m)
        assert w == elias_gamma(m)
        assert len(w) == gamma_length(m) == 2 * int(math.floor(math.log2(m))) + 1
        assert elias_gamma_decode(w + "1011") == (m, len(w))


def test_sw_length_examples():
    det = deterministic()
    code = build_sw_code(det, EpsilonProfile.uniform(det, 0.1), 2, seed=1)
    assert code.length_fn == (2, 2)
    assert sw_codeword_lengths(code) == [5, 5]
    assert 5 <= 2 + 2 * math.log2(3) + 3
    code = build_sw_code(D, EpsilonProfile.uniform(D, 0.1), 4, seed=1)
    assert code.length_fn == (6, 6)
    # gamma(6) = "00110" has 5 bits, so the codeword is 11 bits
    assert sw_codeword_lengths(code) == [11, 11]
    assert 11 <= theorem3_length_bound(2.0, 4) == pytest.approx(2 + 4 + 2 * math.log2(7) + 3)
    code = build_sw_code(D, EpsilonProfile.uniform(D, 1.0), 3.5, seed=1)
    assert code.length_fn == (4, 4)
    with pytest.raises(InputError):
        build_sw_code(D, EpsilonProfile.uniform(D, 0.1), 0.0, seed=1)


def test_sw_decode_deterministic_source():
    det = deterministic(4)
    for seed in range(20):
        code = build_sw_code(det, EpsilonProfile.uniform(det, 0.1), 2, seed)
        for x in det.x_labels:
            assert sw_decode(code, det, sw_encode(code, x), x) == x
        assert sw_exact_error(det, code) == 0.0


def test_sw_decode_outside_typical_set_fails():
    # eps_x = 1 gives l~ = ceil(delta) = 1, threshold 0.5 bits: the
    # mismatched cell (2 bits) can never be decoded, whatever the bins
    for seed in range(10):
        code = build_sw_code(D, EpsilonProfile.uniform(D, 1.0), 1.0, seed)
        assert not code.in_typical_set(0, 1, code.length_fn[0])
        assert sw_decode(code, D, sw_encode(code, 0), 1) != 0


def test_sw_decode_collision_fails():
    code = build_sw_code(D, EpsilonProfile.uniform(D, 0.1), 4, seed=1)
    clash = dataclasses.replace(code, bins=(code.bins[0], code.bins[0]))
    out = sw_decode_index(clash, clash.codeword(0), 0)
    assert out.x is None and out.candidates == 2


def test_sw_truncated_stream():
    code = build_sw_code(D, EpsilonProfile.uniform(D, 0.1), 4, seed=1)
    with pytest.raises(MalformedHeader):
        sw_decode_index(code, code.codeword(0)[:-1], 0)


def test_sw_vacuous_budget_error_by_enumeration():
    code = build_sw_code(D, EpsilonProfile.uniform(D, 1.0), 6, seed=5)
    err = sw_exact_error(D, code)
    assert 0.0 <= err <= 1.0
    # l~ = 6, threshold 3 bits: both cells typical, so only a bin clash errs
    expected = 0.0 if code.bins[0] != code.bins[1] else 1.0
    assert err == expected


def test_converse_extract_examples():
    prof = converse_extract(D, [1e9, 1e9], 1.0)
    assert prof.per_symbol == (0.0, 0.0)
    prof = converse_extract(D, [0, 0], 0.1)
    assert prof.per_symbol == (1.0, 1.0)
    assert prof.aggregate == pytest.approx(1.0)
    with pytest.raises(InputError):
        converse_extract(D, [0, 0], 0.0)


def test_profile_aggregate(rng):
    pmf = random_pmf(rng, 4, 3)
    eps = rng.random(4)
    prof = EpsilonProfile.of(pmf, eps)
    assert prof.aggregate == pytest.approx(float(np.dot(pmf.px, eps)), abs=1e-12)
    with pytest.raises(InputError):
        EpsilonProfile.of(pmf, [0.1] * 3)
    with pytest.raises(InputError):
        EpsilonProfile.of(pmf, [1.5] * 4)


def test_codec_json_round_trip(rng):
    pmf = random_pmf(rng, 4, 3)
    code = build_sw_code(pmf, EpsilonProfile.uniform(pmf, 0.2), 3.0, seed=77)
    import json
    back = sw_code_from_json_obj(json.loads(sw_code_dumps(code)))
    assert back.bins == code.bins and back.length_fn == code.length_fn
    obj = json.loads(sw_code_dumps(code))
    obj["length_fn"][0] += 1
    with pytest.raises(InputError):
        sw_code_from_json_obj(obj)
    with pytest.raises(InputError):
        sw_code_from_json_obj({"seed": 1})


def test_decoder_determinism(rng):
    pmf = random_pmf(rng, 4, 4)
    a = build_sw_code(pmf, EpsilonProfile.uniform(pmf, 0.1), 2.0, seed=9)
    b = build_sw_code(pmf, EpsilonProfile.uniform(pmf, 0.1), 2.0, seed=9)
    assert a.bins == b.bins
    assert [[sw_decode_index(a, a.codeword(i), j) for j in range(4)] for i in range(4)] == \
        [[sw_decode_index(b, b.codeword(i), j) for j in range(4)] for i in range(4)]


@pytest.mark.parametrize("bits", ["", "1", "0101", "1" * 8, "10110011101"])
def test_pack_bits(bits):
    data = pack_bits(bits)
    assert unpack_bits(data) == bits
    assert len(data) == 8 + (len(bits) + 7) // 8


def test_unpack_rejects_bad_length():
    with pytest.raises(MalformedHeader):
        unpack_bits(b"\x00" * 7)
    with pytest.raises(MalformedHeader):
        unpack_bits((20).to_bytes(8, "big") + b"\x00")


# --- properties ---------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(pmfs(max_x=3, max_y=3), epsilons)
def test_flag_code_sandwich(pmf, eps):
    he, A = he_bruteforce(pmf, eps)
    if A.mass <= 0:
        return
    code = build_flag_code(pmf, A)
    err, avg = evaluate_common_code(pmf, code)
    assert he - 1e-9 <= avg <= he + 2 + 1e-9
    assert err <= eps + 1e-9
    for j in range(pmf.shape[1]):
        book = code.codebook(j)
        assert is_prefix_free(book)
        assert "" not in book or len(book) == 1
        kraft_check(len(w) for w in book)
    for (i, j), w in code.encode_table.items():
        decoded, used = code.decode(w, j)
        assert (decoded == i and used == len(w)) == ((i, j) in code.correct_set)


@settings(max_examples=40, deadline=None)
@given(pmfs(max_x=4, max_y=3), st.sampled_from([0.0, 0.1, 0.5, 1.0]),
       st.sampled_from([0.5, 1.0, 2.0, 4.0]), st.integers(0, 2**32))
def test_sw_code_properties(pmf, eps, delta, seed):
    code = build_sw_code(pmf, EpsilonProfile.uniform(pmf, eps), delta, seed)
    h = ohe_all(pmf, eps)
    assert code.length_fn == tuple(math.ceil(v + delta) for v in h)
    words = [code.codeword(i) for i in range(pmf.shape[0])]
    assert is_prefix_free(words)
    kraft_check(len(w) for w in set(words))
    for i, w in enumerate(words):
        assert len(w) <= theorem3_length_bound(h[i], delta) + 1e-9
        out = sw_decode_index(code, w + "0110", 0)
        assert out.consumed == len(w)
    # typical-set size bound per (y, l)
    for j in range(pmf.shape[1]):
        for l in set(code.length_fn):
            assert len(code.typical_members(j, l)) <= 2 ** (l - delta / 2) + 1e-9
    lengths = sw_codeword_lengths(code)
    err = sw_exact_error(pmf, code)
    prof = converse_extract(pmf, lengths, delta)
    assert prof.aggregate <= err + 2.0**-delta + 1e-9
    hx = np.array([ohe_all(pmf, e)[i] for i, e in enumerate(prof.per_symbol)])
    assert np.all(np.asarray(lengths) >= hx - delta - 1e-9)


@settings(max_examples=60, deadline=None)
@given(pmfs(max_x=4, max_y=3), st.sampled_from([0.5, 1.0, 2.0, 4.0]), st.integers(0, 2**32))
def test_tail_inequality_on_adversarial_codes(pmf, delta, seed):
    code = random_prefix_sw_code(pmf, np.random.default_rng(seed))
    err = table_code_error(pmf, code)
    assert err >= lemma5_tail(pmf, code.lengths(), delta) - 2.0**-delta - 1e-9
    prof = converse_extract(pmf, code.lengths(), delta)
    assert prof.aggregate <= err + 2.0**-delta + 1e-9
    assert prof.aggregate == pytest.approx(lemma5_tail(pmf, code.lengths(), delta), abs=1e-12)
