"""The eight test integrands f0..f7 on [0, 1)^s.

Each :class:`Integrand` evaluates vectorised over the last axis, knows its
exact integral and, for the smooth ones, sup-norm bounds of mixed partial
derivatives on [0, 1]^s.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable

import numpy as np

SMOOTH = "smooth"
CONTINUOUS = "continuous_nondifferentiable"
DISCONTINUOUS = "discontinuous"

IDS = tuple(f"f{k}" for k in range(8))


class NotDifferentiableError(ValueError):
    pass


class IntegrandError(RuntimeError):
    """Evaluation failed; the message names the offending point."""


@dataclass(frozen=True)
class Integrand:
    id: str
    s: int
    func: Callable[[np.ndarray], np.ndarray]
    exact_integral: float
    provenance: str
    smoothness: str
    bound: Callable[[tuple[int, ...]], float] | None = None
    enclosure: tuple[float, float] | None = None

    def __call__(self, x) -> np.ndarray:
        return evaluate(self, x)

    def derivative_bound(self, N) -> float:
        return derivative_bound(self, N)


def evaluate(f: Integrand, x) -> np.ndarray:
    """f at points ``x`` of shape ``(..., s)``; raises outside [0, 1)^s."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != f.s:
        raise ValueError(f"{f.id} is {f.s}-dimensional, got points of shape {x.shape}")
    if x.size and (x.min() < 0.0 or x.max() >= 1.0):
        raise ValueError(f"points must lie in [0, 1)^{f.s}")
    try:
        y = f.func(x)
    except Exception as exc:
        raise IntegrandError(f"{f.id} failed on a batch of points {x.reshape(-1, f.s)[:1]}...") from exc
    bad = ~np.isfinite(y)
    if bad.any():
        where = np.argwhere(bad)[0]
        raise IntegrandError(f"{f.id} is not finite at x = {x[tuple(where)].tolist()}")
    return y


# ---------------------------------------------------------------------------
# one-dimensional pieces


def tent(x):
    """T(x) = min_i |3x - 2i|: distance from 3x to the nearest even integer."""
    u = 3.0 * np.asarray(x)
    return np.abs(u - 2.0 * np.round(u / 2.0))


def sign_steps(x):
    """C(x) = (-1)**floor(3x)."""
    return np.where(np.floor(3.0 * np.asarray(x)) % 2 == 0, 1.0, -1.0)


# ---------------------------------------------------------------------------
# exact integrals


def sum_uniform_moment(k: int, s: int) -> Fraction:
    """E[(U_1 + ... + U_s)^k] for i.i.d. uniform U_i, exactly.

    Uses the exponential generating function sum_r t^r / (r+1)! of a single
    uniform, raised to the s-th power by repeated convolution.
    """
    single = [Fraction(1, math.factorial(r + 1)) for r in range(k + 1)]
    acc = [Fraction(1)] + [Fraction(0)] * k
    for _ in range(s):
        acc = [sum(acc[a] * single[r - a] for a in range(r + 1)) for r in range(k + 1)]
    return acc[k] * math.factorial(k)


@lru_cache(maxsize=None)
def gauss_1d_enclosure() -> tuple[Fraction, Fraction]:
    """Rational bounds on int_0^1 exp(x^2) dx = sum_k 1 / (k! (2k+1)).

    Terms shrink by a factor < 1/2 from k = 1 on, so the tail after the
    last kept term t is below t.
    """
    lo = Fraction(0)
    k = 0
    term = Fraction(1)
    while True:
        term = Fraction(1, math.factorial(k) * (2 * k + 1))
        lo += term
        if term < Fraction(1, 10 ** 30):
            break
        k += 1
    return lo, lo + term


def gauss_1d() -> float:
    lo, hi = gauss_1d_enclosure()
    return float((lo + hi) / 2)


# ---------------------------------------------------------------------------
# derivative bounds


def _check_index(N, s: int) -> tuple[int, ...]:
    N = tuple(int(v) for v in N)
    if len(N) != s or any(v < 0 for v in N):
        raise ValueError(f"multi-index must have {s} nonnegative entries, got {N}")
    return N


@lru_cache(maxsize=None)
def _gauss_poly(k: int) -> tuple[int, ...]:
    """Coefficients (low to high) of q_k with d^k/dx^k exp(x^2) = q_k(x) exp(x^2)."""
    q = [1]
    for _ in range(k):
        # q' + 2x q
        deriv = [i * c for i, c in enumerate(q)][1:] + [0, 0]
        shifted = [0] + [2 * c for c in q]
        q = [a + b for a, b in zip(deriv + [0] * (len(shifted) - len(deriv)), shifted)]
        while len(q) > 1 and q[-1] == 0:
            q.pop()
    return tuple(q)


def gauss_axis_bound(k: int) -> float:
    """sup over [0, 1] of |d^k/dx^k exp(x^2)|.

    q_k has nonnegative integer coefficients, so q_k(x) exp(x^2) is
    increasing on [0, 1] and the supremum is q_k(1) e, computed exactly.
    """
    return float(sum(_gauss_poly(k))) * math.e


@lru_cache(maxsize=None)
def _peak_poly(k: int) -> tuple[int, ...]:
    """p_k with d^k/dx^k (1 + x^2)^-1 = p_k(x) / (1 + x^2)^(k+1)."""
    p = np.polynomial.Polynomial([1])
    one_x2 = np.polynomial.Polynomial([1, 0, 1])
    x = np.polynomial.Polynomial([0, 1])
    for r in range(k):
        p = p.deriv() * one_x2 - 2 * (r + 1) * x * p
    return tuple(int(round(c)) for c in p.coef)


def peak_axis_bound(k: int) -> float:
    """sup over [0, 1] of |d^k/dx^k (1 + x^2)^-1|.

    Candidates are the endpoints and the real roots in [0, 1] of the next
    derivative's numerator; a relative margin of 1e-12 covers root error.
    """
    num = np.polynomial.Polynomial(_peak_poly(k))
    nxt = np.polynomial.Polynomial(_peak_poly(k + 1))
    cands = [0.0, 1.0]
    if nxt.degree() > 0:
        for r in nxt.roots():
            if abs(r.imag) < 1e-9 and -1e-12 <= r.real <= 1 + 1e-12:
                cands.append(min(max(r.real, 0.0), 1.0))
    vals = [abs(num(c)) / (1 + c * c) ** (k + 1) for c in cands]
    return max(vals) * (1 + 1e-12)


def derivative_bound(f: Integrand, N) -> float:
    """Upper bound on sup |f^(N)| over [0, 1]^s."""
    if f.bound is None:
        raise NotDifferentiableError(f"{f.id} is not differentiable ({f.smoothness})")
    return f.bound(_check_index(N, f.s))


def _poly_bound(s: int):
    def bound(N):
        k = sum(N)
        if k > 6:
            return 0.0
        return math.factorial(6) / math.factorial(6 - k) * float(s) ** (6 - k)
    return bound


def _exp_bound(a: float, s: int):
    return lambda N: a ** sum(N) * math.exp(a * s)


# ---------------------------------------------------------------------------
# registry


def make(fid: str, s: int) -> Integrand:
    """Build test function ``fid`` ('f0'..'f7') in dimension ``s``."""
    if s < 1:
        raise ValueError("dimension must be >= 1")
    if fid == "f0":
        return Integrand(fid, s, lambda x: x.sum(axis=-1) ** 6,
                         float(sum_uniform_moment(6, s)), "exact rational (moment convolution)",
                         SMOOTH, _poly_bound(s))
    if fid in ("f1", "f2"):
        a = 2.0 / 3.0 if fid == "f1" else 1.5
        return Integrand(fid, s, lambda x: np.exp(a * x.sum(axis=-1)),
                         ((math.exp(a) - 1.0) / a) ** s, "closed form", SMOOTH, _exp_bound(a, s))
    if fid == "f3":
        exact = (((complex(math.cos(1.0), math.sin(1.0)) - 1) / 1j) ** s).real
        return Integrand(fid, s, lambda x: np.cos(x.sum(axis=-1)), exact, "closed form",
                         SMOOTH, lambda N: 1.0)
    if fid == "f4":
        lo, hi = gauss_1d_enclosure()
        return Integrand(fid, s, lambda x: np.exp((x * x).sum(axis=-1)), gauss_1d() ** s,
                         "series with certified tail", SMOOTH,
                         lambda N: math.prod(gauss_axis_bound(k) for k in N),
                         enclosure=(float(lo) ** s, float(hi) ** s))
    if fid == "f5":
        return Integrand(fid, s, lambda x: np.prod(1.0 / (x * x + 1.0), axis=-1),
                         (math.pi / 4.0) ** s, "closed form", SMOOTH,
                         lambda N: math.prod(peak_axis_bound(k) for k in N))
    if fid == "f6":
        return Integrand(fid, s, lambda x: np.prod(tent(x), axis=-1), 0.5 ** s, "closed form",
                         CONTINUOUS)
    if fid == "f7":
        return Integrand(fid, s, lambda x: np.prod(sign_steps(x), axis=-1), (1.0 / 3.0) ** s,
                         "closed form", DISCONTINUOUS)
    raise KeyError(f"unknown integrand {fid!r}; choose from {', '.join(IDS)}")


def constant(c: float, s: int) -> Integrand:
    """f = c, handy for sanity checks."""
    return Integrand("const", s, lambda x: np.full(x.shape[:-1], float(c)), float(c), "trivial",
                     SMOOTH, lambda N: 0.0 if any(N) else abs(c))


def linear(s: int = 1) -> Integrand:
    """f(x) = x_1."""
    return Integrand("x1", s, lambda x: x[..., 0].copy(), 0.5, "trivial", SMOOTH,
                     lambda N: (1.0 if N[0] == 1 and not any(N[1:]) else
                                (0.0 if any(N) else 1.0)))
