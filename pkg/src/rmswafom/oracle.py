"""Brute-force checks on the whole group G = Z_b^{s x n}.

Everything here tabulates functions on all b^(s n) group elements, so it is
only usable for tiny s*n.  Elements are indexed by their code, the C-order
ravel of the flattened digit matrix in shape ``(b,) * (s*n)``.  With that
order the code of X is also the C-order ravel of the cell multi-index
``(k_1, ..., k_s)``, ``k_i = sum_j x_ij b^(n-j)``, which the discretisation
uses directly.

Complex numbers appear only in this module.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .integrands import Integrand, NotDifferentiableError, evaluate
from .netcore import DigitalNet, DigitalShift, NetParams, dual, enumerate_points, span
from .wafom import WeightSpec, wafom_inversion

GROUP_LIMIT = 2 ** 24
ROMBERG_TOL = 1e-12
ROMBERG_MAX_LEVEL = 6


class GroupTooLarge(ValueError):
    pass


def _guard(b: int, s: int, n: int) -> int:
    size = b ** (s * n)
    if size > GROUP_LIMIT:
        mb = size * 16 / 2 ** 20
        raise GroupTooLarge(f"|G| = {b}^{s * n} exceeds {GROUP_LIMIT} (a complex table needs {mb:.0f} MiB)")
    return size


@dataclass(frozen=True)
class Group:
    b: int
    s: int
    n: int

    def __post_init__(self):
        _guard(self.b, self.s, self.n)

    @classmethod
    def of(cls, params: NetParams) -> "Group":
        return cls(params.b, params.s, params.n)

    @property
    def size(self) -> int:
        return self.b ** (self.s * self.n)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.s, self.n)

    @property
    def radix(self) -> np.ndarray:
        sn = self.s * self.n
        return self.b ** np.arange(sn - 1, -1, -1, dtype=np.int64)

    def encode(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.int64)
        return X.reshape(*X.shape[:-2], -1) @ self.radix

    def elements(self) -> np.ndarray:
        return _elements(self.b, self.s, self.n)

    def add_codes(self, codes: np.ndarray, g) -> np.ndarray:
        """Codes of (element + g) for every element code in ``codes``."""
        g = np.asarray(g, dtype=np.int64)
        if self.b == 2:
            return codes ^ self.encode(g)
        digits = self.elements()[codes].reshape(len(codes), -1)
        return ((digits + g.ravel()) % self.b) @ self.radix


@lru_cache(maxsize=8)
def _elements(b: int, s: int, n: int) -> np.ndarray:
    size = b ** (s * n)
    digits = np.array(np.unravel_index(np.arange(size), (b,) * (s * n))).T
    out = digits.reshape(size, s, n).astype(np.int64)
    out.flags.writeable = False
    return out


@dataclass(frozen=True, eq=False)
class GroupFunction:
    group: Group
    table: np.ndarray  # real, indexed by element code

    def __post_init__(self):
        if self.table.shape != (self.group.size,):
            raise ValueError("table must cover the whole group")

    def mean(self) -> float:
        return math.fsum(self.table.tolist()) / self.group.size

    def shifted(self, sigma) -> "GroupFunction":
        """F_sigma(g) = F(g + sigma)."""
        sig = sigma.sigma if isinstance(sigma, DigitalShift) else sigma
        idx = self.group.add_codes(np.arange(self.group.size), sig)
        return GroupFunction(self.group, self.table[idx])


@dataclass(frozen=True, eq=False)
class FourierTable:
    group: Group
    table: np.ndarray  # complex, indexed by character code


def random_function(group: Group, rng) -> GroupFunction:
    return GroupFunction(group, rng.standard_normal(group.size))


# ---------------------------------------------------------------------------
# n-digit discretisation


def _cell_means(f: Integrand, b: int, s: int, n: int, q: int) -> np.ndarray:
    """Tensor midpoint rule with q nodes per axis per cell, shape (b^n,)*s."""
    cells = b ** n
    h = 1.0 / (cells * q)
    nodes = (np.arange(cells * q) + 0.5) * h
    out = np.empty((cells,) * s)
    # slab over the first axis to bound memory
    for k in range(cells):
        first = nodes[k * q:(k + 1) * q]
        axes = [first] + [nodes] * (s - 1)
        grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        vals = evaluate(f, grid)
        vals = vals.reshape((q,) + sum(((cells, q) for _ in range(s - 1)), ()))
        # axes are (q, cells, q, cells, ...): average the q axes
        out[k] = vals.mean(axis=tuple(range(0, 2 * s, 2)))
    return out


def discretize(f: Integrand, params: NetParams, quad_cells: int = 1) -> GroupFunction:
    """f_n(X): cell averages of f by a fixed tensor midpoint rule."""
    if quad_cells < 1:
        raise ValueError("quad_cells must be >= 1")
    g = Group.of(params)
    if f.s != params.s:
        raise ValueError(f"integrand is {f.s}-dimensional, group has s={params.s}")
    return GroupFunction(g, _cell_means(f, g.b, g.s, g.n, quad_cells).ravel())


def discretize_converged(f: Integrand, params: NetParams, tol: float = ROMBERG_TOL,
                         max_level: int = ROMBERG_MAX_LEVEL) -> tuple[GroupFunction, float]:
    """Cell averages by Romberg extrapolation of the midpoint rule (q = 1, 2, 4, ...).

    Returns the table and the last change between successive diagonal
    entries (the achieved tolerance; may exceed ``tol`` when capped).
    """
    g = Group.of(params)
    rows: list[list[np.ndarray]] = []
    change = math.inf
    for level in range(max_level + 1):
        row = [_cell_means(f, g.b, g.s, g.n, 2 ** level)]
        for j in range(1, level + 1):
            prev = rows[-1][j - 1]
            row.append(row[j - 1] + (row[j - 1] - prev) / (4 ** j - 1))
        if rows:
            change = float(np.max(np.abs(row[-1] - rows[-1][-1])))
            if change < tol:
                rows.append(row)
                break
        rows.append(row)
    return GroupFunction(g, rows[-1][-1].ravel()), change


# ---------------------------------------------------------------------------
# Fourier analysis


@lru_cache(maxsize=None)
def _roots(b: int) -> np.ndarray:
    """omega_b ** k for k < b, with the parts that are exactly 0 or +-1 snapped."""
    z = np.exp(2j * np.pi * np.arange(b) / b)
    re = np.where(np.abs(z.real) < 1e-15, 0.0, z.real)
    im = np.where(np.abs(z.imag) < 1e-15, 0.0, z.imag)
    out = re + 1j * im
    out.flags.writeable = False
    return out


def omega(expo, b: int) -> np.ndarray:
    return _roots(b)[np.asarray(expo) % b]


def _character_matrix(b: int) -> np.ndarray:
    h, g = np.meshgrid(np.arange(b), np.arange(b), indexing="ij")
    return omega(h * g, b)


def pairing_value(h, g, b: int) -> complex:
    """h . g = omega_b ** sum_ij h_ij g_ij."""
    e = int(np.sum(np.asarray(h) * np.asarray(g))) % b
    return complex(omega(e, b))


def dft(F: GroupFunction) -> FourierTable:
    """F^(h) = |G|^-1 sum_g F(g) (h . g), factorised digit by digit."""
    g = F.group
    sn = g.s * g.n
    W = _character_matrix(g.b) / g.b
    T = F.table.astype(complex).reshape((g.b,) * sn)
    for axis in range(sn):
        T = np.moveaxis(np.tensordot(W, T, axes=([1], [axis])), 0, axis)
    return FourierTable(g, T.ravel())


def dft_direct(F: GroupFunction) -> FourierTable:
    """O(|G|^2) evaluation of the same transform."""
    g = F.group
    E = g.elements().reshape(g.size, -1)
    expo = (E @ E.T) % g.b
    vals = omega(expo, g.b) @ F.table / g.size
    return FourierTable(g, vals)


def character_sum(group: Group, g) -> complex:
    """sum over h in G^ of h . g (|G| when g = 0, else 0)."""
    E = group.elements().reshape(group.size, -1)
    expo = (E @ np.asarray(g).ravel()) % group.b
    return complex(omega(expo, group.b).sum())


def _dual_codes(net: DigitalNet) -> np.ndarray:
    g = Group.of(net.params)
    D = dual(net)
    return g.encode(span(D.basis, g.b, g.shape))


def poisson_check(F: GroupFunction, net: DigitalNet) -> tuple[float, float]:
    """(|P|^-1 sum_{g in P} F(g), sum_{h in P^perp} F^(h))."""
    g = F.group
    pts = g.encode(enumerate_points(net))
    lhs = math.fsum(F.table[pts].tolist()) / len(pts)
    Fh = dft(F).table[_dual_codes(net)]
    rhs = complex(Fh.sum())
    if abs(rhs.imag) > 1e-12:
        raise ArithmeticError(f"imaginary part {rhs.imag:.3e} of the dual sum does not vanish")
    return lhs, rhs.real


def shifted_estimates(F: GroupFunction, net: DigitalNet) -> np.ndarray:
    """I_{P + sigma}(F) for every sigma, indexed by sigma's code.

    Each average is a correctly rounded sum (math.fsum), so equal multisets
    of values give bit-identical estimates.
    """
    g = F.group
    pts = enumerate_points(net)
    rows = max(1, 2 ** 22 // len(pts))
    out = np.empty(g.size)
    for lo in range(0, g.size, rows):
        codes = np.arange(lo, min(lo + rows, g.size))
        vals = np.stack([F.table[g.add_codes(codes, p)] for p in pts], axis=1)
        out[lo:lo + len(codes)] = [math.fsum(r) for r in vals.tolist()]
    return out / len(pts)


def variance_exact(F: GroupFunction, net: DigitalNet) -> tuple[float, float]:
    """Shift variance two ways: over all sigma, and as sum over P^perp \\ {0} of |F^|^2."""
    est = shifted_estimates(F, net)
    mean = F.mean()
    var_shifts = math.fsum(((est - mean) ** 2).tolist()) / F.group.size
    dc = _dual_codes(net)
    sq = np.abs(dft(F).table[dc]) ** 2
    nz = dc != 0
    var_dual = math.fsum(sq[nz].tolist())
    return var_shifts, var_dual


def unbiasedness_check(F: GroupFunction, net: DigitalNet) -> tuple[float, float]:
    """(mean of I_{P+sigma}(F) over all sigma, I(F))."""
    est = shifted_estimates(F, net)
    return math.fsum(est.tolist()) / F.group.size, F.mean()


def shifted_fourier_check(F: GroupFunction, sigma: DigitalShift) -> float:
    """max_h |F_sigma^(h) - (h . sigma)^-1 F^(h)|."""
    g = F.group
    lhs = dft(F.shifted(sigma)).table
    E = g.elements().reshape(g.size, -1)
    expo = (E @ sigma.sigma.ravel()) % g.b
    rhs = omega(-expo, g.b) * dft(F).table
    return float(np.max(np.abs(lhs - rhs)))


# ---------------------------------------------------------------------------
# Walsh functions


def walsh_function(k, x, b: int, n: int) -> complex:
    """wal_k(x) = prod_i omega_b ** sum_j kappa_{i,j} xi_{i,j}, using n digits of x."""
    total = 0
    for ki, xi in zip(k, x):
        ki = int(ki)
        frac = float(xi)
        for j in range(n):
            frac *= b
            digit = int(math.floor(frac))
            frac -= digit
            total += (ki % b) * digit
            ki //= b
    return complex(omega(total, b))


def walsh_coefficient(F: GroupFunction, k) -> complex:
    """Walsh coefficient int f conj(wal_k) of a cell-constant function f = F.

    Summed over cells in their natural geometric order (midpoints), not over
    group elements, so it is independent of :func:`dft`.
    """
    g = F.group
    cells = g.b ** g.n
    vals = F.table.reshape((cells,) * g.s)
    total = 0j
    for idx in itertools.product(range(cells), repeat=g.s):
        mid = [(c + 0.5) / cells for c in idx]
        total += vals[idx] * walsh_function(k, mid, g.b, g.n).conjugate()
    return total / g.size


# ---------------------------------------------------------------------------
# bounds


def _require_b2(b: int) -> None:
    if b != 2:
        raise ValueError("the Walsh coefficient bound is stated for b = 2 only")


def walsh_bound_check(f: Integrand, params: NetParams) -> float:
    """max over nonzero A of |f_n^(A)| / (||f^(N(A))||_inf 2^-(mu(A)+h(A)))."""
    _require_b2(params.b)
    if f.bound is None:
        raise NotDifferentiableError(f"{f.id} has no derivative bounds")
    g = Group.of(params)
    F, _ = discretize_converged(f, params)
    Fh = np.abs(dft(F).table)
    E = g.elements()
    nz = E != 0
    N = nz.sum(axis=2)
    weight = WeightSpec.dick_hamming(g.s, g.n)
    mu_h = nz.reshape(g.size, -1) @ weight.nu.ravel()
    bounds_cache: dict = {}
    worst = 0.0
    for code in range(1, g.size):
        key = tuple(int(v) for v in N[code])
        if key not in bounds_cache:
            bounds_cache[key] = f.bound(key)
        denom = bounds_cache[key] * 2.0 ** -mu_h[code]
        if denom == 0.0:
            ratio = 0.0 if Fh[code] < 1e-13 else math.inf
        else:
            ratio = Fh[code] / denom
        worst = max(worst, ratio)
    return float(worst)


def max_derivative_bound(f: Integrand, n: int) -> float:
    """max over 0 <= N <= n, N != 0 of the sup-norm bound of f^(N)."""
    if f.bound is None:
        raise NotDifferentiableError(f"{f.id} has no derivative bounds")
    best = 0.0
    for N in itertools.product(range(n + 1), repeat=f.s):
        if any(N):
            best = max(best, f.bound(N))
    return best


def kh_rmse_check(f: Integrand, net: DigitalNet) -> tuple[float, float]:
    """(sqrt of the exact shift variance of f_n, max-derivative bound times W(P; mu+h))."""
    p = net.params
    _require_b2(p.b)
    F, _ = discretize_converged(f, p)
    var, _ = variance_exact(F, net)
    lhs = math.sqrt(max(var, 0.0))
    rhs = max_derivative_bound(f, p.n) * wafom_inversion(net, WeightSpec.dick_hamming(p.s, p.n)).w
    return lhs, rhs
