"""Walsh figure of merit for root mean square error, W(P; nu).

For a product weight nu(A) = sum_ij nu_ij [a_ij != 0],

    W(P; nu)^2 = sum over nonzero A in P^perp of b^(-2 nu(A)).

The sum over the (huge) dual is turned into a sum over P itself:

    W^2 = -1 + |P|^-1 sum_{B in P} prod_ij (1 + eta(b_ij) b^(-2 nu_ij)),

with eta(0) = b - 1 and eta(nonzero) = -1.  The mean of the products is
1 + W^2 and W^2 can be as small as 1e-16, so the kernels never form the
products: they carry ``product - 1`` through ``p <- p + x + p*x`` in
double-double arithmetic and add the per-point excesses exactly with
:func:`math.fsum`.  When the resulting W^2 is so small that the
double-double roundoff bound exceeds 1e-13 of it, the same sum is redone
exactly (see :func:`wafom_highprec`).

Only whether a digit is zero matters, so every kernel works on per-row
"support masks" (bit set where the digit is nonzero, packed as in
:mod:`rmswafom.netcore`).  Row masks are split into chunks of at most 16
digits and each chunk's excess is read from a precomputed table.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

import mpmath
import numpy as np

from . import ddouble as dd
from .netcore import (
    DigitalNet,
    NetError,
    dual,
    enumerate_points,
    pack_rows,
    span,
    span_packed,
)

CLAMP_LIMIT = 1e-6
DUAL_LIMIT = 2 ** 24
HIGHPREC_LIMIT = 2 ** 20
CHUNK_DIGITS = 16
# relative error of one double-double excess_combine
DD_EPS = 2.0 ** -104
# the fast path must resolve W^2 to this relative accuracy, else recompute exactly
INVERSION_RTOL = 1e-13


class AccumulationError(ArithmeticError):
    """The inversion sum came out clearly negative."""


class TooLargeError(ValueError):
    """A brute-force path was asked to enumerate too many elements."""


@dataclass(frozen=True, eq=False)
class WeightSpec:
    """Product weight given by an ``(s, n)`` matrix of reals."""

    nu: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        nu = np.array(self.nu, dtype=np.float64)
        if nu.ndim != 2:
            raise ValueError("weight matrix must be 2-d (s x n)")
        if not np.all(np.isfinite(nu)):
            raise ValueError("weight entries must be finite")
        nu.flags.writeable = False
        object.__setattr__(self, "nu", nu)

    @classmethod
    def dick(cls, s: int, n: int) -> "WeightSpec":
        return cls(np.tile(np.arange(1, n + 1, dtype=float), (s, 1)), "mu")

    @classmethod
    def hamming(cls, s: int, n: int) -> "WeightSpec":
        return cls(np.ones((s, n)), "h")

    @classmethod
    def dick_hamming(cls, s: int, n: int) -> "WeightSpec":
        return cls(np.tile(np.arange(2, n + 2, dtype=float), (s, 1)), "mu+h")

    @classmethod
    def by_name(cls, name: str, s: int, n: int) -> "WeightSpec":
        makers = {"mu": cls.dick, "h": cls.hamming, "mu+h": cls.dick_hamming}
        if name in makers:
            return makers[name](s, n)
        path = Path(name)
        if path.exists():
            return cls.from_file(path, s, n)
        raise ValueError(f"unknown weight {name!r}; use mu, h, mu+h or a file path")

    @classmethod
    def from_file(cls, path, s: int | None = None, n: int | None = None) -> "WeightSpec":
        rows = []
        for line in Path(path).read_text().splitlines():
            line = line.split("#", 1)[0].strip()
            if line:
                rows.append([float(t) for t in line.split()])
        spec = cls(np.array(rows), str(path))
        if s is not None and spec.nu.shape != (s, n):
            raise ValueError(f"weight file is {spec.nu.shape}, net needs {(s, n)}")
        return spec

    @property
    def shape(self) -> tuple[int, int]:
        return self.nu.shape

    @property
    def is_integral(self) -> bool:
        return bool(np.all(self.nu == np.round(self.nu)))

    def key(self) -> tuple:
        return (self.nu.shape, self.nu.tobytes())


@dataclass(frozen=True)
class WafomValue:
    w: float
    lg_w: float
    method: str
    clamped: bool = False

    def as_dict(self) -> dict:
        return {"w": self.w, "lg_w": self.lg_w, "method": self.method, "clamped": self.clamped}


def weight_of(A, spec: WeightSpec) -> float:
    """nu(A) = sum_ij nu_ij * [a_ij != 0]."""
    A = np.asarray(A)
    if A.shape[-2:] != spec.shape:
        raise ValueError(f"shape mismatch: matrix {A.shape[-2:]} vs weight {spec.shape}")
    return (A != 0).astype(float).reshape(*A.shape[:-2], -1) @ spec.nu.ravel()


def _lg(w: float) -> float:
    return math.log2(w) if w > 0 else -math.inf


def _finish(w2: float, method: str) -> WafomValue:
    clamped = False
    if w2 < 0:
        if w2 < -CLAMP_LIMIT:
            raise AccumulationError(f"accumulation failure: W^2 = {w2!r}")
        w2, clamped = 0.0, True
    w = math.sqrt(w2)
    return WafomValue(w, _lg(w), method, clamped)


def _check_shapes(net: DigitalNet, spec: WeightSpec) -> None:
    if spec.shape != net.params.shape:
        raise ValueError(f"weight is {spec.shape}, net is {net.params.shape}")


# ---------------------------------------------------------------------------
# chunk tables


def _term(b: int, nu: float) -> tuple[float, float]:
    """b**(-2 nu) as a double-double (exact split when nu is an integer)."""
    if nu == round(nu):
        return dd.from_fraction(Fraction(1, b ** int(2 * nu)) if nu >= 0 else Fraction(b ** int(-2 * nu)))
    with mpmath.workprec(160):
        v = mpmath.mpf(b) ** (-2 * mpmath.mpf(nu))
        hi = float(v)
        return hi, float(v - hi)


def _chunk_bounds(n: int) -> list[tuple[int, int]]:
    """Bit ranges [lo, hi) of the packed row, LSB first."""
    k = -(-n // CHUNK_DIGITS)
    w = -(-n // k)
    return [(lo, min(lo + w, n)) for lo in range(0, n, w)]


@lru_cache(maxsize=32)
def _tables(b: int, n: int, nu_key: tuple) -> tuple[list, list, np.ndarray]:
    """Per (row, chunk) tables of the chunk excess prod(1 + eta x) - 1.

    Returns (hi_tables, lo_tables, bounds) where tables are indexed
    ``[row][chunk][mask_bits]``.
    """
    shape, raw = nu_key
    nu = np.frombuffer(raw, dtype=np.float64).reshape(shape)
    s = shape[0]
    bounds = _chunk_bounds(n)
    his, los = [], []
    for i in range(s):
        row_hi, row_lo = [], []
        for lo_bit, hi_bit in bounds:
            t_hi = np.zeros(1)
            t_lo = np.zeros(1)
            for bit in range(lo_bit, hi_bit):
                j = n - 1 - bit
                x_hi, x_lo = _term(b, float(nu[i, j]))
                # digit zero: eta = b - 1; nonzero: eta = -1
                z_hi, z_lo = dd.mul(np.float64(b - 1), np.float64(0.0), x_hi, x_lo)
                a_hi, a_lo = dd.excess_combine(t_hi, t_lo, z_hi, z_lo)
                c_hi, c_lo = dd.excess_combine(t_hi, t_lo, -x_hi, -x_lo)
                t_hi = np.concatenate([a_hi, c_hi])
                t_lo = np.concatenate([a_lo, c_lo])
            row_hi.append(t_hi)
            row_lo.append(t_lo)
        his.append(row_hi)
        los.append(row_lo)
    return his, los, bounds


def support_masks(points: np.ndarray) -> np.ndarray:
    """Packed nonzero-digit masks ``(N, s)`` of digit matrices ``(N, s, n)``."""
    return pack_rows(np.asarray(points) != 0)


def _lookups(masks: np.ndarray, b: int, n: int, spec: WeightSpec):
    his, los, bounds = _tables(b, n, spec.key())
    s = masks.shape[1]
    for i in range(s):
        col = masks[:, i]
        for c, (lo_bit, hi_bit) in enumerate(bounds):
            idx = (col >> np.uint64(lo_bit)) & np.uint64((1 << (hi_bit - lo_bit)) - 1)
            idx = idx.astype(np.intp)
            yield his[i][c][idx], los[i][c][idx]


def excess_sum_dd(masks: np.ndarray, b: int, n: int, spec: WeightSpec,
                  with_bound: bool = False):
    """sum over points of (prod - 1), accurate to double-double per point.

    With ``with_bound`` also returns an upper bound on the absolute error
    of the sum, from a running bound on the magnitude of every
    intermediate ``p``.
    """
    p_hi = p_lo = mag = None
    steps = 0
    for t_hi, t_lo in _lookups(masks, b, n, spec):
        steps += 1
        if p_hi is None:
            p_hi, p_lo, mag = t_hi, t_lo, np.abs(t_hi)
        else:
            p_hi, p_lo = dd.excess_combine(p_hi, p_lo, t_hi, t_lo)
            if with_bound:
                a = np.abs(t_hi)
                mag = mag + a + mag * a
    total = math.fsum(itertools.chain(p_hi.tolist(), p_lo.tolist()))
    if not with_bound:
        return total
    # each table entry took <= CHUNK_DIGITS combines, each point <= steps more
    err = 4.0 * (steps + CHUNK_DIGITS) * DD_EPS * math.fsum(mag.tolist()) * (1 + 1e-12)
    return total, err


def excess_sum_fast(masks: np.ndarray, b: int, n: int, spec: WeightSpec) -> float:
    """Double-precision variant of :func:`excess_sum_dd` (search objective)."""
    p = None
    for t_hi, _ in _lookups(masks, b, n, spec):
        p = t_hi if p is None else p + t_hi + p * t_hi
    return math.fsum(p.tolist())


def _inversion_masks(net: DigitalNet, check: bool = True) -> np.ndarray:
    p = net.params
    if p.n > 64:
        raise NetError("inversion kernel supports n <= 64")
    if p.b == 2:
        if check:
            net.check_rank()
        return span_packed(net.packed_basis())
    return support_masks(enumerate_points(net) if check else span(net.basis, p.b, p.shape))


def wafom_inversion(net: DigitalNet, spec: WeightSpec) -> WafomValue:
    """W(P; nu) from the sum over P, O(s n b^m)."""
    _check_shapes(net, spec)
    p = net.params
    masks = _inversion_masks(net)
    if p.m == p.s * p.n:
        # P is the whole group, so the dual is {0}; skip the roundoff residue
        return _finish(0.0, "inversion")
    total, err = excess_sum_dd(masks, p.b, p.n, spec, with_bound=True)
    w2 = total / p.size
    cheap = p.size <= (HIGHPREC_LIMIT if spec.is_integral else 2 ** 12)
    if err > INVERSION_RTOL * abs(total) and cheap:
        # W^2 is within reach of the double-double roundoff: redo the same
        # sum exactly (integer weights) or at 256 bits
        return WafomValue(**{**wafom_highprec(net, spec).as_dict(), "method": "inversion"})
    return _finish(w2, "inversion")


def lg_wafom_fast(masks: np.ndarray, b: int, n: int, spec: WeightSpec) -> float:
    """lg W from precomputed support masks in plain double precision.

    Adequate for ranking nets down to lg W of about -22; use
    :func:`wafom_inversion` for reported values.
    """
    w2 = excess_sum_fast(masks, b, n, spec) / masks.shape[0]
    return 0.5 * math.log2(w2) if w2 > 0 else -math.inf


# ---------------------------------------------------------------------------
# oracle paths


def _span_chunks(basis: np.ndarray, b: int, shape, chunk: int = 2 ** 16):
    basis = np.asarray(basis, dtype=np.int64)
    k = 0
    while k < len(basis) and b ** (k + 1) <= chunk:
        k += 1
    low = span(basis[:k], b, shape)
    high = basis[k:]
    for coeffs in itertools.product(range(b), repeat=len(high)):
        off = np.zeros(shape, dtype=np.int64)
        for c, v in zip(coeffs, high):
            off = off + c * v
        yield (low + off) % b


def wafom_dual_bruteforce(net: DigitalNet, spec: WeightSpec) -> WafomValue:
    """W(P; nu) straight from its definition as a sum over P^perp minus zero."""
    _check_shapes(net, spec)
    p = net.params
    net.check_rank()
    dim = p.s * p.n - p.m
    if p.b ** dim > DUAL_LIMIT:
        raise TooLargeError(f"dual has b^(sn-m) = {p.b}^{dim} elements, limit is {DUAL_LIMIT}")
    D = dual(net)
    nu = spec.nu.ravel()
    logb = math.log(p.b)

    def terms():
        for elems in _span_chunks(D.basis, p.b, p.shape):
            flat = elems.reshape(len(elems), -1)
            nz = flat.any(axis=1)
            wts = (flat[nz] != 0) @ nu
            yield from np.exp(-2.0 * logb * wts).tolist()

    return _finish(math.fsum(terms()), "dual_bruteforce")


def _row_numerators(D: list[int], mask: int, b: int, n: int) -> int:
    out = 1
    for j in range(n):
        nonzero = (mask >> (n - 1 - j)) & 1
        out *= D[j] - 1 if nonzero else D[j] + b - 1
    return out


def wafom_highprec(net: DigitalNet, spec: WeightSpec) -> WafomValue:
    """Inversion formula evaluated exactly (integer weights) or at 256 bits.

    Test-side reference for the accumulation in :func:`wafom_inversion`.
    """
    _check_shapes(net, spec)
    p = net.params
    if p.size > HIGHPREC_LIMIT:
        raise TooLargeError(f"|P| = {p.size} exceeds {HIGHPREC_LIMIT}")
    points = enumerate_points(net)
    if p.m == p.s * p.n:
        return WafomValue(0.0, -math.inf, "highprec")
    masks = (points != 0)
    if spec.is_integral:
        nu = spec.nu.astype(np.int64)
        num_sum = 0
        den = 1
        rowD = [[p.b ** (2 * int(v)) for v in nu[i]] for i in range(p.s)]
        for i in range(p.s):
            for d in rowD[i]:
                den *= d
        caches = [dict() for _ in range(p.s)]
        packed = [[int(x) for x in col] for col in pack_rows(masks).T] if p.n <= 64 else None
        for k in range(p.size):
            term = 1
            for i in range(p.s):
                if packed is not None:
                    key = packed[i][k]
                else:
                    key = int("".join("1" if d else "0" for d in masks[k, i]), 2)
                val = caches[i].get(key)
                if val is None:
                    val = _row_numerators(rowD[i], key, p.b, p.n)
                    caches[i][key] = val
                term *= val
            num_sum += term
        w2 = Fraction(num_sum - p.size * den, p.size * den)
        if w2 < 0:
            raise AccumulationError("exact W^2 is negative: logic error")
        with mpmath.workprec(256):
            w = mpmath.sqrt(mpmath.mpf(w2.numerator) / w2.denominator)
            lg = mpmath.log(w, 2) if w > 0 else -mpmath.inf
            return WafomValue(float(w), float(lg), "highprec")
    with mpmath.workprec(256):
        b = mpmath.mpf(p.b)
        x = [[b ** (-2 * mpmath.mpf(float(v))) for v in row] for row in spec.nu]
        total = mpmath.mpf(0)
        for k in range(p.size):
            prod = mpmath.mpf(1)
            for i in range(p.s):
                for j in range(p.n):
                    eta = -1 if masks[k, i, j] else p.b - 1
                    prod *= 1 + eta * x[i][j]
            total += prod
        w2 = total / p.size - 1
        if w2 < -CLAMP_LIMIT:
            raise AccumulationError(f"accumulation failure: W^2 = {w2}")
        if w2 <= 0:
            return WafomValue(0.0, -math.inf, "highprec", clamped=w2 < 0)
        w = mpmath.sqrt(w2)
        return WafomValue(float(w), float(mpmath.log(w, 2)), "highprec")


METHODS = {
    "inversion": wafom_inversion,
    "dual": wafom_dual_bruteforce,
    "highprec": wafom_highprec,
}


def wafom(net: DigitalNet, spec: WeightSpec | str = "mu+h", method: str = "inversion") -> WafomValue:
    if isinstance(spec, str):
        spec = WeightSpec.by_name(spec, net.params.s, net.params.n)
    try:
        fn = METHODS[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; choose from {sorted(METHODS)}") from None
    return fn(net, spec)
