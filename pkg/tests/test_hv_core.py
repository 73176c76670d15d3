import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hvtm.hv_core import (
    ConfigurationError,
    DimensionMismatchError,
    DuplicateTokenError,
    EmptyInputError,
    Hypervector,
    HypervectorError,
    TokenCodebook,
    bind_role,
    bundle,
    capacity,
    overlap,
    overlap_likelihood,
    pack_bits,
    random_token,
    rotate,
    stack,
    unpack_bits,
)


def pascal_row(D):
    row = [1]
    for _ in range(D):
        row = [1] + [a + b for a, b in zip(row, row[1:])] + [1]
    return row


def likelihood_fraction(D, P, T):
    return 1 - (1 - Fraction(1, D**P)) ** T


sizes = st.integers(min_value=1, max_value=300)


@st.composite
def hv_pair(draw, n=2):
    size = draw(sizes)
    vs = [Hypervector.from_bits(draw(st.lists(st.booleans(), min_size=size, max_size=size)))
          for _ in range(n)]
    return vs


# -- storage -------------------------------------------------------------------

@given(st.lists(st.booleans(), min_size=1, max_size=400))
def test_pack_unpack_round_trip(bits):
    bits = np.array(bits)
    assert np.array_equal(unpack_bits(pack_bits(bits), bits.size), bits)


def test_tail_bits_rejected():
    with pytest.raises(HypervectorError):
        Hypervector(3, np.array([0b1000], dtype=np.uint64))


def test_wrong_word_count():
    with pytest.raises(DimensionMismatchError):
        Hypervector(65, np.zeros(1, dtype=np.uint64))


def test_words_are_read_only():
    v = Hypervector.ones(70)
    with pytest.raises(ValueError):
        v.words[0] = 0


def test_positions_and_popcount():
    v = Hypervector.from_positions(100, [3, 64, 99])
    assert v.positions() == [3, 64, 99]
    assert v.popcount() == 3
    assert v.complement().popcount() == 97
    with pytest.raises(HypervectorError):
        Hypervector.from_positions(10, [10])


def test_empty_inputs():
    with pytest.raises(EmptyInputError):
        Hypervector.from_bits([])
    with pytest.raises(EmptyInputError):
        bundle([])
    with pytest.raises(EmptyInputError):
        stack([])


# -- algebra -------------------------------------------------------------------

@given(hv_pair(3))
def test_bundle_laws(vs):
    a, b, c = vs
    assert bundle([a, b]) == bundle([b, a])
    assert bundle([bundle([a, b]), c]) == bundle([a, bundle([b, c])])
    assert bundle([a, a]) == a


@given(hv_pair(1), st.integers(-1000, 1000))
def test_rotate_bijective_and_popcount_preserving(vs, k):
    (v,) = vs
    r = rotate(v, k)
    assert r.popcount() == v.popcount()
    assert rotate(r, -k) == v
    assert rotate(v, v.size) == v


@given(hv_pair(1), st.integers(-1000, 1000))
def test_rotate_matches_roll_oracle(vs, k):
    (v,) = vs
    assert np.array_equal(rotate(v, k).bits(), np.roll(v.bits(), k))


def test_rotate_moves_bit_forward():
    v = Hypervector.from_positions(10, [9])
    assert rotate(v, 1).positions() == [0]
    assert rotate(v, 3).positions() == [2]


@given(hv_pair(2))
def test_overlap_matches_bit_oracle(vs):
    a, b = vs
    assert overlap(a, b) == int(np.sum(a.bits() & b.bits()))
    assert overlap(a, b) == overlap(b, a)
    assert overlap(a, a) == a.popcount()


def test_size_mismatch():
    with pytest.raises(DimensionMismatchError):
        overlap(Hypervector.zeros(8), Hypervector.zeros(9))
    with pytest.raises(DimensionMismatchError):
        bundle([Hypervector.zeros(8), Hypervector.zeros(9)])


def test_bind_role_rejects_role_zero():
    v = Hypervector.from_positions(16, [1])
    with pytest.raises(ConfigurationError):
        bind_role(v, 0)
    assert bind_role(v, 2) == rotate(v, 2)


# -- capacity and overlap likelihood --------------------------------------------

def test_capacity_matches_pascal():
    for D in range(0, 65):
        row = pascal_row(D)
        for S in range(D + 1):
            assert capacity(D, S) == row[S]


def test_capacity_large_product_oracle():
    num = math.prod(range(1024 - 8 + 1, 1025))
    assert capacity(1024, 8) == num // math.factorial(8)


def test_capacity_invalid():
    with pytest.raises(HypervectorError):
        capacity(4, 5)


@pytest.mark.parametrize("D,P,T", list(itertools.product([2, 256, 1024], [1, 4, 8], [0, 1, 100, 1000])))
def test_overlap_likelihood_rational_oracle(D, P, T):
    exact = likelihood_fraction(D, P, T)
    got = overlap_likelihood(D, P, T)
    if exact == 0:
        assert got == 0
    else:
        assert abs(Fraction(got) - exact) / exact < Fraction(1, 10**12)


def test_overlap_likelihood_edges():
    assert overlap_likelihood(1, 3, 5) == 1.0
    assert overlap_likelihood(7, 2, 0) == 0.0
    with pytest.raises(HypervectorError):
        overlap_likelihood(0, 1, 1)


@given(st.integers(2, 5000), st.integers(1, 6), st.integers(0, 10**6))
def test_overlap_likelihood_in_unit_interval(D, P, T):
    assert 0.0 <= overlap_likelihood(D, P, T) <= 1.0


def test_overlap_likelihood_monte_carlo():
    # P=1: probability that T independent uniform draws hit one fixed position
    rng = np.random.default_rng(5)
    D, T, trials = 64, 20, 20000
    hits = (rng.integers(0, D, size=(trials, T)) == 0).any(axis=1).mean()
    p = overlap_likelihood(D, 1, T)
    se = math.sqrt(p * (1 - p) / trials)
    assert abs(hits - p) < 4 * se


# -- tokens and codebooks --------------------------------------------------------

@given(st.integers(8, 4096), st.integers(1, 8), st.integers(0, 2**32), st.text(max_size=12))
def test_random_token_is_pure(size, nbits, seed, tok):
    a = random_token(size, nbits, seed, tok)
    b = random_token(size, nbits, seed, tok)
    assert a == b and a.popcount() == nbits


def test_random_token_edge_sizes():
    assert random_token(5, 5, 0, "x") == Hypervector.ones(5)
    with pytest.raises(ConfigurationError):
        random_token(5, 6, 0, "x")


def test_token_positions_roughly_uniform():
    counts = np.zeros(16)
    for i in range(4000):
        counts[random_token(16, 1, 3, str(i)).positions()[0]] += 1
    expected = 4000 / 16
    chi2 = ((counts - expected) ** 2 / expected).sum()
    assert chi2 < 40  # 15 dof; p ~ 5e-4


def test_codebook_order_independent():
    a, b = TokenCodebook(512, 4, 9), TokenCodebook(512, 4, 9)
    for t in "xyz":
        a.new_token(t)
    for t in "zyx":
        b.new_token(t)
    assert all(a[t] == b[t] for t in "xyz")


def test_codebook_duplicate_and_lookup():
    cb = TokenCodebook(64, 3, 1)
    v = cb.new_token("a")
    with pytest.raises(DuplicateTokenError):
        cb.new_token("a")
    assert cb.get_or_create("a") is v
    assert cb.get("missing") is None
    assert "missing" not in cb


def test_codebook_serialization_round_trip():
    cb = TokenCodebook(300, 5, 42)
    for i in range(20):
        cb.new_token(f"t{i}")
    back = TokenCodebook.loads(cb.dumps())
    assert back == cb
    d = cb.to_dict()
    d["version"] = 99
    with pytest.raises(ConfigurationError):
        TokenCodebook.from_dict(d)


def test_stack_shape():
    vs = [Hypervector.from_positions(70, [i]) for i in range(3)]
    m = stack(vs)
    assert m.shape == (3, 70) and m.dtype == np.uint8
    assert m.sum() == 3
