import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rmswafom.netcore import DigitalNet, NetParams, random_full_rank_net, random_net
from rmswafom.wafom import (
    AccumulationError,
    TooLargeError,
    WeightSpec,
    _finish,
    wafom,
    wafom_dual_bruteforce,
    wafom_highprec,
    wafom_inversion,
    weight_of,
)


def rel(a, b):
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0 else abs(a - b) / scale


@st.composite
def small_nets(draw, bases=(2, 3), max_sn=10):
    b = draw(st.sampled_from(bases))
    s = draw(st.integers(1, 3))
    n = draw(st.integers(1, max_sn // s))
    m = draw(st.integers(0, s * n))
    return random_full_rank_net(NetParams(b, s, n, m), draw(st.integers(0, 2 ** 32 - 1)))


# --- weights ------------------------------------------------------------------

def test_weight_of_examples():
    A = np.array([[1, 0, 1]])
    assert weight_of(np.zeros((1, 3), int), WeightSpec.dick(1, 3)) == 0
    assert weight_of(A, WeightSpec.dick(1, 3)) == 4
    assert weight_of(A, WeightSpec.hamming(1, 3)) == 2
    assert weight_of(A, WeightSpec.dick_hamming(1, 3)) == 6


def test_weight_ignores_digit_value():
    A1 = np.array([[1, 0]])
    A2 = np.array([[2, 0]])
    spec = WeightSpec.dick(1, 2)
    assert weight_of(A1, spec) == weight_of(A2, spec) == 1


def test_weight_shape_mismatch():
    with pytest.raises(ValueError):
        weight_of(np.zeros((2, 2), int), WeightSpec.dick(1, 2))


def test_weight_must_be_finite():
    with pytest.raises(ValueError):
        WeightSpec(np.array([[1.0, np.inf]]))


def test_weight_from_file(tmp_path):
    f = tmp_path / "nu.txt"
    f.write_text("# custom\n1 2.5\n0.5 3\n")
    spec = WeightSpec.by_name(str(f), 2, 2)
    assert spec.nu.tolist() == [[1, 2.5], [0.5, 3]]
    with pytest.raises(ValueError):
        WeightSpec.by_name(str(f), 3, 2)
    with pytest.raises(ValueError):
        WeightSpec.by_name("nope", 1, 1)


# --- spec examples ---------------------------------------------------------------

def test_full_space_is_zero():
    net = random_full_rank_net(NetParams(2, 2, 3, 6), 0)
    for method in ("inversion", "dual", "highprec"):
        v = wafom(net, "mu", method)
        assert v.w == 0.0 and v.lg_w == -math.inf


def test_single_point_one_digit():
    net = DigitalNet(NetParams(2, 1, 1, 0), np.zeros((0, 1, 1), int))
    for method in ("inversion", "dual", "highprec"):
        v = wafom(net, "mu", method)
        assert v.w == pytest.approx(0.5, rel=1e-15)
        assert v.lg_w == pytest.approx(-1.0, rel=1e-15)


def test_one_generator_quarter():
    net = DigitalNet.from_basis([[[1, 0]]])
    assert wafom_inversion(net, WeightSpec.dick(1, 2)).w == pytest.approx(0.25, rel=1e-15)
    assert wafom_dual_bruteforce(net, WeightSpec.dick(1, 2)).w == pytest.approx(0.25, rel=1e-15)


@pytest.mark.parametrize("b,s,n", [(2, 2, 3), (3, 1, 3), (2, 1, 5)])
def test_zero_net_closed_form(b, s, n):
    net = DigitalNet(NetParams(b, s, n, 0), np.zeros((0, s, n), int))
    spec = WeightSpec.dick_hamming(s, n)
    expect = math.prod(1 + (b - 1) * b ** (-2 * v) for v in spec.nu.ravel()) - 1
    assert wafom_dual_bruteforce(net, spec).w ** 2 == pytest.approx(expect, rel=1e-13)
    assert wafom_inversion(net, spec).w ** 2 == pytest.approx(expect, rel=1e-13)


def test_random_2x2_agrees(rng):
    net = random_full_rank_net(NetParams(2, 2, 2, 2), rng)
    spec = WeightSpec.dick(2, 2)
    assert rel(wafom_inversion(net, spec).w, wafom_dual_bruteforce(net, spec).w) <= 1e-13


# --- properties ---------------------------------------------------------------

@given(small_nets(), st.sampled_from(["mu", "h", "mu+h"]))
def test_macwilliams(net, name):
    spec = WeightSpec.by_name(name, net.params.s, net.params.n)
    a = wafom_inversion(net, spec).w
    assert rel(a, wafom_dual_bruteforce(net, spec).w) <= 1e-12
    assert rel(a, wafom_highprec(net, spec).w) <= 1e-12


@given(small_nets(max_sn=8), st.integers(0, 2 ** 31))
def test_real_weights(net, seed):
    nu = np.random.default_rng(seed).uniform(0.3, 3.0, size=net.params.shape)
    spec = WeightSpec(nu)
    a = wafom_inversion(net, spec).w
    assert rel(a, wafom_dual_bruteforce(net, spec).w) <= 1e-11
    assert rel(a, wafom_highprec(net, spec).w) <= 1e-12


@given(small_nets(max_sn=10))
def test_weight_dominance_squared(net):
    p = net.params
    mh = wafom_dual_bruteforce(net, WeightSpec.dick_hamming(p.s, p.n)).w
    mu = wafom_dual_bruteforce(net, WeightSpec.dick(p.s, p.n)).w
    assert mh ** 2 <= p.b ** -2 * mu ** 2 * (1 + 1e-12)


@given(small_nets(max_sn=10), st.integers(0, 2 ** 31))
def test_refinement_monotone(net, seed):
    p = net.params
    if p.m == p.s * p.n:
        return
    r = np.random.default_rng(seed)
    while True:
        v = r.integers(0, p.b, size=(1,) + p.shape)
        bigger = DigitalNet(p.with_m(p.m + 1), np.concatenate([net.basis, v]))
        if bigger.rank() == p.m + 1:
            break
    spec = WeightSpec.dick(p.s, p.n)
    assert wafom_inversion(bigger, spec).w <= wafom_inversion(net, spec).w * (1 + 1e-12)


@given(small_nets(max_sn=10), st.integers(0, 2 ** 31))
def test_basis_change_invariant(net, seed):
    p = net.params
    if p.m < 2:
        return
    r = np.random.default_rng(seed)
    B = np.array(net.basis)
    for _ in range(5):
        k, l = r.choice(p.m, 2, replace=False)
        B[k] = (B[k] + int(r.integers(1, p.b)) * B[l]) % p.b
    other = DigitalNet(p, B)
    spec = WeightSpec.dick_hamming(p.s, p.n)
    assert rel(wafom_inversion(net, spec).w, wafom_inversion(other, spec).w) <= 1e-13


def test_experiment_scale_finite():
    p = NetParams(2, 4, 32, 10)
    vals = [wafom_inversion(random_net(p, k), WeightSpec.dick_hamming(4, 32)).lg_w for k in range(10)]
    assert all(math.isfinite(v) for v in vals)
    assert -20 < min(vals) and max(vals) < -3


def test_highprec_agrees_at_scale():
    p = NetParams(2, 4, 32, 12)
    spec = WeightSpec.dick_hamming(4, 32)
    for k in range(2):
        net = random_full_rank_net(p, k)
        assert rel(wafom_inversion(net, spec).w, wafom_highprec(net, spec).w) <= 1e-10


# --- errors ---------------------------------------------------------------------

def test_clamp_and_failure():
    v = _finish(-1e-9, "inversion")
    assert v.w == 0 and v.clamped
    with pytest.raises(AccumulationError, match="accumulation failure"):
        _finish(-1e-3, "inversion")


def test_dual_guard():
    net = random_net(NetParams(2, 4, 32, 10), 0)
    with pytest.raises(TooLargeError):
        wafom_dual_bruteforce(net, WeightSpec.dick(4, 32))


def test_highprec_guard():
    net = random_net(NetParams(2, 1, 30, 21), 0)
    with pytest.raises(TooLargeError):
        wafom_highprec(net, WeightSpec.dick(1, 30))


def test_unknown_method():
    net = random_full_rank_net(NetParams(2, 1, 2, 1), 0)
    with pytest.raises(ValueError):
        wafom(net, "mu", "nope")
