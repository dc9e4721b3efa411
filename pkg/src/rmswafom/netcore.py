"""Digital nets over Z_b.

A digital net is a subgroup P of the additive group of s x n digit matrices
over Z_b (b prime).  Nets are stored by a basis of m matrices; |P| = b^m.

Digit matrices are plain integer arrays of shape ``(s, n)``.  Column ``j``
(0-based) holds the digit of weight ``b**-(j+1)`` in :func:`psi`.

For b = 2 a packed form is also available: each row is one ``uint64`` whose
bit ``n - 1 - j`` is digit ``j``, so that the row read as an integer divided
by ``2**n`` is exactly the coordinate ``psi`` returns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

MAX_PACKED_DIGITS = 64


class NetError(ValueError):
    """Invalid net data (bad parameters, shapes or a degenerate basis)."""


def is_prime(b: int) -> bool:
    if b < 2:
        return False
    return all(b % p for p in range(2, math.isqrt(b) + 1))


@dataclass(frozen=True)
class NetParams:
    b: int
    s: int
    n: int
    m: int

    def __post_init__(self):
        if not is_prime(self.b):
            raise NetError(f"base must be prime, got b={self.b}")
        if self.s < 1 or self.n < 1:
            raise NetError(f"need s >= 1 and n >= 1, got s={self.s}, n={self.n}")
        if not 0 <= self.m <= self.s * self.n:
            raise NetError(f"need 0 <= m <= s*n, got m={self.m}, s*n={self.s * self.n}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.s, self.n)

    @property
    def size(self) -> int:
        """Number of points, b**m."""
        return self.b ** self.m

    def with_m(self, m: int) -> "NetParams":
        return NetParams(self.b, self.s, self.n, m)


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


def as_digits(X, b: int, shape: tuple[int, int] | None = None) -> np.ndarray:
    """Validate and return ``X`` as an int64 digit matrix."""
    X = np.asarray(X)
    if X.ndim != 2:
        raise NetError(f"digit matrix must be 2-d, got shape {X.shape}")
    if shape is not None and X.shape != tuple(shape):
        raise NetError(f"shape mismatch: expected {tuple(shape)}, got {X.shape}")
    if X.size and (X.min() < 0 or X.max() >= b):
        raise NetError(f"digits must lie in 0..{b - 1}")
    return X.astype(np.int64)


# ---------------------------------------------------------------------------
# GF(b) linear algebra


def _row_reduce(M: np.ndarray, b: int) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form over GF(b).  Returns (R, pivot_columns)."""
    R = np.array(M, dtype=np.int64) % b
    rows, cols = R.shape
    pivots: list[int] = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        nz = np.nonzero(R[r:, c])[0]
        if nz.size == 0:
            continue
        p = r + nz[0]
        if p != r:
            R[[r, p]] = R[[p, r]]
        R[r] = (R[r] * pow(int(R[r, c]), -1, b)) % b
        others = np.nonzero(R[:, c])[0]
        others = others[others != r]
        if others.size:
            R[others] = (R[others] - np.outer(R[others, c], R[r])) % b
        pivots.append(c)
        r += 1
    return R, pivots


def rank_mod(M: np.ndarray, b: int) -> int:
    """Rank of an integer matrix over GF(b)."""
    if M.size == 0:
        return 0
    return len(_row_reduce(M, b)[1])


def nullspace_mod(M: np.ndarray, b: int) -> np.ndarray:
    """Basis (as rows) of {x : M x = 0 mod b}."""
    rows, cols = M.shape
    if rows == 0:
        return np.eye(cols, dtype=np.int64)
    R, pivots = _row_reduce(M, b)
    free = [c for c in range(cols) if c not in set(pivots)]
    out = np.zeros((len(free), cols), dtype=np.int64)
    for k, fc in enumerate(free):
        out[k, fc] = 1
        for r, pc in enumerate(pivots):
            out[k, pc] = (-R[r, fc]) % b
    return out


def _gf2_rank_ints(vectors: Iterable[int]) -> int:
    basis: list[int] = []
    for v in vectors:
        for w in basis:
            v = min(v, v ^ w)
        if v:
            basis.append(v)
    return len(basis)


# ---------------------------------------------------------------------------
# packing (b = 2)


def pack_rows(X: np.ndarray) -> np.ndarray:
    """Pack binary digit arrays ``(..., s, n)`` into ``(..., s)`` uint64 rows."""
    X = np.asarray(X)
    n = X.shape[-1]
    if n > MAX_PACKED_DIGITS:
        raise NetError(f"packed rows hold at most {MAX_PACKED_DIGITS} digits, got n={n}")
    weights = np.uint64(1) << np.arange(n - 1, -1, -1, dtype=np.uint64)
    return (X.astype(np.uint64) * weights).sum(axis=-1, dtype=np.uint64)


def unpack_rows(rows: np.ndarray, n: int) -> np.ndarray:
    """Inverse of :func:`pack_rows`."""
    rows = np.asarray(rows, dtype=np.uint64)
    shifts = np.arange(n - 1, -1, -1, dtype=np.uint64)
    return ((rows[..., None] >> shifts) & np.uint64(1)).astype(np.int64)


def packed_to_unit(rows: np.ndarray, n: int) -> np.ndarray:
    """Coordinates psi(X) from packed rows, truncated to 53 bits when n > 53."""
    rows = np.asarray(rows, dtype=np.uint64)
    if n > 53:
        rows = rows >> np.uint64(n - 53)
        n = 53
    return rows.astype(np.float64) * 2.0 ** -n


# ---------------------------------------------------------------------------
# nets


@dataclass(frozen=True, eq=False)
class DigitalNet:
    """A digital net given by a basis of ``m`` digit matrices of shape ``(s, n)``.

    The basis array has shape ``(m, s, n)``.  Construction checks digit
    ranges only; linear independence is checked by :meth:`check_rank` (and
    lazily by :func:`enumerate_points`).
    """

    params: NetParams
    basis: np.ndarray

    def __post_init__(self):
        p = self.params
        B = np.asarray(self.basis)
        if B.size == 0:
            B = np.zeros((0, p.s, p.n), dtype=np.int64)
        if B.shape != (p.m, p.s, p.n):
            raise NetError(f"basis shape {B.shape} does not match (m, s, n) = {(p.m, p.s, p.n)}")
        if B.size and (B.min() < 0 or B.max() >= p.b):
            raise NetError(f"basis digits must lie in 0..{p.b - 1}")
        object.__setattr__(self, "basis", _frozen(B.astype(np.int64)))

    @classmethod
    def from_basis(cls, basis, b: int = 2) -> "DigitalNet":
        B = np.asarray(basis, dtype=np.int64)
        if B.ndim != 3:
            raise NetError("basis must have shape (m, s, n)")
        m, s, n = B.shape
        return cls(NetParams(b, s, n, m), B)

    @classmethod
    def strict(cls, params: NetParams, basis) -> "DigitalNet":
        """Construct and reject rank-deficient bases."""
        net = cls(params, basis)
        net.check_rank()
        return net

    def __eq__(self, other):
        if not isinstance(other, DigitalNet):
            return NotImplemented
        return self.params == other.params and np.array_equal(self.basis, other.basis)

    def __hash__(self):
        return hash((self.params, self.basis.tobytes()))

    @property
    def b(self) -> int:
        return self.params.b

    @property
    def generator_matrix(self) -> np.ndarray:
        """The m x (s*n) matrix whose rows are the flattened basis."""
        return self.basis.reshape(self.params.m, self.params.s * self.params.n)

    def rank(self) -> int:
        p = self.params
        if p.b == 2 and p.n <= MAX_PACKED_DIGITS:
            return _gf2_rank_ints(_flat_int(v) for v in self.basis)
        return rank_mod(self.generator_matrix, p.b)

    def check_rank(self) -> None:
        if self.rank() != self.params.m:
            raise NetError("degenerate basis: generators are linearly dependent")

    def packed_basis(self) -> np.ndarray:
        """``(m, s)`` uint64 rows; b = 2 only."""
        if self.b != 2:
            raise NetError("packed rows require b = 2")
        return pack_rows(self.basis)

    def replace(self, k: int, v: np.ndarray) -> "DigitalNet":
        B = np.array(self.basis)
        B[k] = v
        return DigitalNet(self.params, B)


def _flat_int(v: np.ndarray) -> int:
    out = 0
    for d in np.asarray(v).ravel():
        out = (out << 1) | int(d)
    return out


@dataclass(frozen=True, eq=False)
class DigitalShift:
    sigma: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "sigma", _frozen(np.asarray(self.sigma, dtype=np.int64)))

    @classmethod
    def zero(cls, params: NetParams) -> "DigitalShift":
        return cls(np.zeros(params.shape, dtype=np.int64))


@dataclass(frozen=True, eq=False)
class DualNet:
    """Basis of P^perp, shape ``(s*n - m, s, n)``."""

    params: NetParams
    basis: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "basis", _frozen(self.basis))

    @property
    def dimension(self) -> int:
        return self.basis.shape[0]

    def elements(self) -> np.ndarray:
        """All b**(s*n - m) elements of the dual, shape ``(N, s, n)``."""
        return span(self.basis, self.params.b, self.params.shape)


def span(basis: np.ndarray, b: int, shape: tuple[int, int]) -> np.ndarray:
    """All combinations sum_k c_k basis[k] (mod b).

    Element index ``l = sum_k c_k b**k`` (first generator least significant),
    which reproduces the natural order of a digital sequence.
    """
    basis = np.asarray(basis, dtype=np.int64)
    pts = np.zeros((1,) + tuple(shape), dtype=np.int64)
    for v in basis:
        pts = np.concatenate([(pts + a * v) % b for a in range(b)])
    return pts


def span_packed(rows: np.ndarray) -> np.ndarray:
    """b = 2 span of packed generators ``(m, s)`` -> ``(2**m, s)``, same order as :func:`span`."""
    rows = np.asarray(rows, dtype=np.uint64)
    pts = np.zeros((1, rows.shape[1]), dtype=np.uint64)
    for v in rows:
        pts = np.concatenate([pts, pts ^ v])
    return pts


def enumerate_points(net: DigitalNet) -> np.ndarray:
    """All b**m points of the net as digit matrices, shape ``(b**m, s, n)``."""
    net.check_rank()
    return span(net.basis, net.b, net.params.shape)


def enumerate_packed(net: DigitalNet, check: bool = True) -> np.ndarray:
    """All 2**m points as packed rows, shape ``(2**m, s)``."""
    if check:
        net.check_rank()
    return span_packed(net.packed_basis())


def psi(X, b: int) -> np.ndarray:
    """Map digit matrices ``(..., s, n)`` to points of [0, 1)^s."""
    X = np.asarray(X)
    n = X.shape[-1]
    if b ** n <= 2 ** 53:
        # integer numerator, one rounding
        w = np.array([b ** (n - 1 - j) for j in range(n)], dtype=np.int64)
        return (X.astype(np.int64) @ w) / float(b ** n)
    w = float(b) ** -np.arange(1, n + 1)
    return X @ w


def phi(X, b: int) -> np.ndarray:
    """Map digit matrices ``(..., s, n)`` to integer vectors sum_j a_{i,j} b**(j-1)."""
    X = np.asarray(X, dtype=np.int64)
    n = X.shape[-1]
    w = np.array([b ** j for j in range(n)], dtype=object if b ** n > 2 ** 62 else np.int64)
    return X @ w


def shift(points, sigma: DigitalShift | np.ndarray, b: int) -> np.ndarray:
    """Digitwise addition mod b of ``sigma`` to each point."""
    points = np.asarray(points, dtype=np.int64)
    sig = sigma.sigma if isinstance(sigma, DigitalShift) else np.asarray(sigma, dtype=np.int64)
    if points.shape[-2:] != sig.shape:
        raise NetError(f"shape mismatch: points {points.shape[-2:]} vs shift {sig.shape}")
    return (points + sig) % b


def dual(net: DigitalNet) -> DualNet:
    """Basis of P^perp = {h : sum h_ij g_ij = 0 mod b for all g in P}."""
    p = net.params
    if not is_prime(p.b):
        raise NetError("dual computation requires prime base")
    M = net.generator_matrix
    null = nullspace_mod(M, p.b) if p.m else np.eye(p.s * p.n, dtype=np.int64)
    return DualNet(p, null.reshape(-1, p.s, p.n))


def pairing(H, G, b: int) -> np.ndarray:
    """Exponent of the character pairing: sum_ij h_ij g_ij mod b."""
    return np.einsum("...ij,...ij->...", np.asarray(H), np.asarray(G)) % b


# ---------------------------------------------------------------------------
# random nets


def _as_rng(rng_seed) -> np.random.Generator:
    if isinstance(rng_seed, np.random.Generator):
        return rng_seed
    return np.random.default_rng(rng_seed)


def random_net(params: NetParams, rng_seed=None, strict: bool = False) -> DigitalNet:
    """Net with i.i.d. uniform basis digits.

    By default linear independence is not checked (the chance of a dependent
    draw at experiment scale is negligible).  With ``strict=True`` a
    rank-deficient draw raises :class:`NetError`.
    """
    if params.m < 1:
        raise NetError("random_net needs m >= 1")
    rng = _as_rng(rng_seed)
    basis = rng.integers(0, params.b, size=(params.m, params.s, params.n))
    net = DigitalNet(params, basis)
    if strict:
        net.check_rank()
    return net


def random_full_rank_net(params: NetParams, rng_seed=None, max_tries: int = 1000) -> DigitalNet:
    """Redraw until the basis is independent (useful at small s*n)."""
    rng = _as_rng(rng_seed)
    if params.m == 0:
        return DigitalNet(params, np.zeros((0, params.s, params.n), dtype=np.int64))
    for _ in range(max_tries):
        net = random_net(params, rng)
        if net.rank() == params.m:
            return net
    raise NetError("could not draw an independent basis")


# ---------------------------------------------------------------------------
# net files


def _data_lines(text: str) -> list[list[str]]:
    out = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            out.append(line.split())
    return out


def format_net(net: DigitalNet, comment: str | None = None) -> str:
    p = net.params
    lines = []
    if comment:
        lines.extend(f"# {c}" for c in comment.splitlines())
    lines.append(f"{p.b} {p.s} {p.n} {p.m}")
    for k, v in enumerate(net.basis):
        lines.append(f"# generator {k + 1}")
        lines.extend(" ".join(str(int(d)) for d in row) for row in v)
    return "\n".join(lines) + "\n"


def parse_net(text: str) -> DigitalNet:
    rows = _data_lines(text)
    if not rows or len(rows[0]) != 4:
        raise NetError("net file must start with a header 'b s n m'")
    b, s, n, m = (int(t) for t in rows[0])
    params = NetParams(b, s, n, m)
    body = rows[1:]
    if len(body) != m * s:
        raise NetError(f"expected {m * s} digit rows, found {len(body)}")
    if any(len(r) != n for r in body):
        raise NetError(f"every digit row must have {n} entries")
    basis = np.array(body, dtype=np.int64).reshape(m, s, n)
    return DigitalNet(params, basis)


def write_net(net: DigitalNet, path, comment: str | None = None) -> None:
    Path(path).write_text(format_net(net, comment))


def read_net(path) -> DigitalNet:
    return parse_net(Path(path).read_text())


def parse_generator_matrices(text: str, b: int = 2, n: int | None = None,
                             m: int | None = None) -> DigitalNet:
    """Convert per-coordinate generator matrices into a net.

    The input holds one block per coordinate, blocks separated by blank
    lines; block i is a matrix with one row per digit (first row = digit of
    weight 1/b) and one column per generator.  Basis vector k gets row i
    equal to column k of block i.  ``n`` and ``m`` truncate to the leading
    rows and columns, i.e. the first b**m points at n-digit precision.
    """
    blocks: list[list[list[int]]] = [[]]
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            if blocks[-1]:
                blocks.append([])
            continue
        blocks[-1].append([int(t) for t in line.split()])
    blocks = [blk for blk in blocks if blk]
    if not blocks:
        raise NetError("no generator matrices found")
    mats = []
    for i, blk in enumerate(blocks):
        if len({len(r) for r in blk}) != 1:
            raise NetError(f"ragged rows in coordinate block {i + 1}")
        mats.append(np.array(blk, dtype=np.int64))
    rows_avail = min(M.shape[0] for M in mats)
    cols_avail = min(M.shape[1] for M in mats)
    n = rows_avail if n is None else n
    m = cols_avail if m is None else m
    if n > rows_avail or m > cols_avail:
        raise NetError(f"requested n={n}, m={m} but matrices are {rows_avail}x{cols_avail}")
    C = np.stack([M[:n, :m] for M in mats])  # (s, n, m)
    basis = np.transpose(C, (2, 0, 1)) % b
    return DigitalNet(NetParams(b, len(mats), n, m), basis)

