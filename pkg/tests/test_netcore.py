import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rmswafom.netcore import (
    DigitalNet,
    DigitalShift,
    NetError,
    NetParams,
    dual,
    enumerate_packed,
    enumerate_points,
    format_net,
    pack_rows,
    packed_to_unit,
    pairing,
    parse_generator_matrices,
    parse_net,
    phi,
    psi,
    random_full_rank_net,
    random_net,
    rank_mod,
    shift,
    span,
    unpack_rows,
)


def as_set(points):
    return {tuple(np.asarray(p).ravel()) for p in points}


@st.composite
def small_nets(draw, bases=(2, 3), max_sn=8):
    b = draw(st.sampled_from(bases))
    s = draw(st.integers(1, 3))
    n = draw(st.integers(1, max(1, max_sn // s)))
    m = draw(st.integers(0, s * n))
    seed = draw(st.integers(0, 2 ** 32 - 1))
    return random_full_rank_net(NetParams(b, s, n, m), seed)


# --- params -----------------------------------------------------------------

@pytest.mark.parametrize("args", [(4, 1, 1, 0), (1, 1, 1, 0), (2, 0, 1, 0), (2, 1, 0, 0),
                                  (2, 1, 2, 3), (2, 1, 2, -1)])
def test_params_rejects_invalid(args):
    with pytest.raises(NetError):
        NetParams(*args)


def test_params_size_and_shape():
    p = NetParams(3, 2, 4, 5)
    assert p.size == 3 ** 5
    assert p.shape == (2, 4)
    assert p.with_m(1).m == 1


# --- enumeration ---------------------------------------------------------------

def test_m0_is_zero_matrix():
    net = DigitalNet(NetParams(2, 2, 3, 0), np.zeros((0, 2, 3), dtype=int))
    pts = enumerate_points(net)
    assert pts.shape == (1, 2, 3)
    assert not pts.any()


def test_one_generator():
    net = DigitalNet.from_basis([[[1, 0]]])
    assert as_set(enumerate_points(net)) == {(0, 0), (1, 0)}


def test_two_generators_fill_space():
    net = DigitalNet.from_basis([[[1, 0]], [[0, 1]]])
    assert as_set(enumerate_points(net)) == set(itertools.product((0, 1), repeat=2))


def test_degenerate_basis_rejected():
    net = DigitalNet.from_basis([[[1, 1]], [[1, 1]]])
    with pytest.raises(NetError, match="degenerate basis"):
        enumerate_points(net)
    with pytest.raises(NetError, match="degenerate basis"):
        DigitalNet.strict(NetParams(2, 1, 2, 2), [[[1, 1]], [[1, 1]]])


@given(small_nets())
def test_span_is_subgroup_of_right_size(net):
    pts = enumerate_points(net)
    S = as_set(pts)
    assert len(S) == net.params.size
    # closed under addition
    b = net.params.b
    for _ in range(5):
        i, j = np.random.default_rng(len(S)).integers(0, len(pts), 2)
        assert tuple(((pts[i] + pts[j]) % b).ravel()) in S


@given(small_nets(bases=(2,)))
def test_packed_enumeration_matches_digits(net):
    pts = enumerate_points(net)
    packed = enumerate_packed(net)
    assert np.array_equal(unpack_rows(packed, net.params.n), pts)


def test_span_order_is_sequence_order():
    basis = np.array([[[1, 0, 0]], [[0, 1, 0]], [[0, 0, 1]]])
    pts = span(basis, 2, (1, 3))
    # point l has digit k equal to bit k of l
    for l, p in enumerate(pts):
        assert [int(d) for d in p[0]] == [(l >> k) & 1 for k in range(3)]


# --- psi / phi ---------------------------------------------------------------

def test_psi_examples():
    assert np.array_equal(psi(np.zeros((3, 4), int), 2), np.zeros(3))
    assert np.allclose(psi([[1, 0], [0, 1]], 2), [0.5, 0.25])
    assert psi([[2, 1]], 3)[0] == pytest.approx(7 / 9, abs=1e-16)


def test_psi_range():
    X = np.ones((1, 10), int) * 2
    assert psi(X, 3)[0] == pytest.approx(1 - 3.0 ** -10)


def test_phi_examples():
    assert phi(np.zeros((2, 3), int), 2).tolist() == [0, 0]
    assert phi([[1, 0, 1]], 2).tolist() == [5]
    assert phi([[0, 1], [1, 1]], 2).tolist() == [2, 3]


@pytest.mark.parametrize("b,n", [(2, 3), (3, 2), (5, 2)])
def test_phi_bijection(b, n):
    vals = {int(phi([list(d)], b)[0]) for d in itertools.product(range(b), repeat=n)}
    assert vals == set(range(b ** n))


@given(st.integers(1, 40), st.integers(0, 2 ** 31))
def test_packed_to_unit_matches_psi(n, seed):
    X = np.random.default_rng(seed).integers(0, 2, size=(6, 3, n))
    u = packed_to_unit(pack_rows(X), n)
    assert np.allclose(u, psi(X, 2), rtol=0, atol=2.0 ** -52)
    assert np.array_equal(unpack_rows(pack_rows(X), n), X)


# --- shifts -------------------------------------------------------------------

def test_shift_zero_identity(rng):
    net = random_full_rank_net(NetParams(3, 2, 2, 2), rng)
    pts = enumerate_points(net)
    assert np.array_equal(shift(pts, DigitalShift.zero(net.params), 3), pts)


def test_shift_involution_b2(rng):
    net = random_full_rank_net(NetParams(2, 2, 4, 3), rng)
    pts = enumerate_points(net)
    sig = DigitalShift(rng.integers(0, 2, size=(2, 4)))
    assert np.array_equal(shift(shift(pts, sig, 2), sig, 2), pts)


def test_shift_whole_group_b3():
    pts = np.array([[[0]], [[1]], [[2]]])
    assert as_set(shift(pts, DigitalShift(np.array([[2]])), 3)) == as_set(pts)


def test_shift_shape_mismatch():
    with pytest.raises(NetError):
        shift(np.zeros((2, 1, 3), int), np.zeros((1, 2), int), 2)


@given(st.integers(2, 3), st.integers(0, 2 ** 31))
def test_psi_of_shift_is_digitwise_sum(b, seed):
    r = np.random.default_rng(seed)
    X = r.integers(0, b, size=(2, 5))
    sig = r.integers(0, b, size=(2, 5))
    y = psi(shift(X, sig, b), b)
    for i in range(2):
        expect = sum(Fraction(int((X[i, j] + sig[i, j]) % b), b ** (j + 1)) for j in range(5))
        assert y[i] == pytest.approx(float(expect), abs=1e-15)


# --- dual ---------------------------------------------------------------------

def test_dual_examples():
    D = dual(DigitalNet.from_basis([[[1, 0]]]))
    assert D.dimension == 1
    assert as_set(D.basis) == {(0, 1)}
    full = DigitalNet.from_basis([[[1, 0]], [[0, 1]]])
    assert dual(full).dimension == 0
    zero = DigitalNet(NetParams(2, 1, 2, 0), np.zeros((0, 1, 2), int))
    assert len(dual(zero).elements()) == 4


@given(small_nets())
def test_dual_matches_bruteforce(net):
    p = net.params
    D = dual(net)
    assert D.dimension == p.s * p.n - p.m
    if D.dimension:
        assert not pairing(D.basis[:, None], net.basis[None], p.b).any() if p.m else True
    pts = enumerate_points(net)
    brute = set()
    for h in itertools.product(range(p.b), repeat=p.s * p.n):
        H = np.array(h).reshape(p.shape)
        if not pairing(H[None], pts, p.b).any():
            brute.add(h)
    assert as_set(D.elements()) == brute


def test_dual_requires_prime_base():
    with pytest.raises(NetError):
        NetParams(4, 1, 2, 1)


def test_rank_mod():
    assert rank_mod(np.array([[1, 2], [2, 4]]), 3) == 1
    assert rank_mod(np.array([[1, 2], [2, 1]]), 3) == 1
    assert rank_mod(np.array([[1, 0], [0, 1]]), 3) == 2


# --- random nets -------------------------------------------------------------

def test_random_net_deterministic():
    p = NetParams(2, 4, 32, 10)
    a = random_net(p, 7)
    assert a == random_net(p, 7)
    assert a.basis.shape == (10, 4, 32)


def test_random_net_needs_m():
    with pytest.raises(NetError):
        random_net(NetParams(2, 1, 2, 0), 0)


class _DuplicateRows:
    """Stand-in generator that always yields identical generators."""

    def integers(self, lo, hi, size):
        return np.ones(size, dtype=np.int64)


def test_strict_mode_rejects_duplicate_rows():
    p = NetParams(2, 1, 3, 2)
    net = random_net(p, np.random.default_rng(0))
    assert net.params == p
    import rmswafom.netcore as nc
    orig = nc._as_rng
    nc._as_rng = lambda r: r
    try:
        with pytest.raises(NetError, match="degenerate"):
            random_net(p, _DuplicateRows(), strict=True)
        loose = random_net(p, _DuplicateRows())
        assert loose.rank() == 1
    finally:
        nc._as_rng = orig


def test_net_is_immutable(rng):
    net = random_net(NetParams(2, 2, 3, 2), rng)
    with pytest.raises(ValueError):
        net.basis[0, 0, 0] = 1


# --- file formats -------------------------------------------------------------

@given(small_nets())
def test_net_file_round_trip(net):
    assert parse_net(format_net(net, comment="x\ny")) == net


@pytest.mark.parametrize("text", ["", "2 1 2\n", "2 1 2 1\n1 0 1\n", "2 1 2 2\n1 0\n"])
def test_net_file_errors(text):
    with pytest.raises(NetError):
        parse_net(text)


def test_generator_matrix_ingest():
    # coordinate 1: identity 3x2; coordinate 2: reversed
    text = "1 0\n0 1\n0 0\n\n0 1\n1 0\n1 1\n"
    net = parse_generator_matrices(text, b=2)
    assert net.params == NetParams(2, 2, 3, 2)
    assert net.basis[0].tolist() == [[1, 0, 0], [0, 1, 1]]
    assert net.basis[1].tolist() == [[0, 1, 0], [1, 0, 1]]
    # point l has digits C_i (bits of l)
    pts = enumerate_points(net)
    assert pts[3].tolist() == [[1, 1, 0], [1, 1, 0]]
    small = parse_generator_matrices(text, b=2, n=2, m=1)
    assert small.basis.tolist() == [[[1, 0], [0, 1]]]
