"""Randomised QMC with digital shifts.

The estimator for a net P and shift sigma is the plain average of f over
psi(P + sigma), i.e. f is sampled at the lower-left corner of each b^-n
cell.  Shifts come from counter-based Philox streams: shift number k of
stream ``stream`` under ``seed`` is drawn from the Philox block whose
counter is ``(0, 0, k, stream)``, so any subset of shifts can be drawn in any
order (or on any worker) and always comes out the same.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .integrands import Integrand, evaluate
from .netcore import (
    DigitalNet,
    DigitalShift,
    NetParams,
    enumerate_packed,
    enumerate_points,
    pack_rows,
    packed_to_unit,
    psi,
    shift,
)

BATCH_POINTS = 2 ** 20


@dataclass(frozen=True)
class QmcEstimate:
    value: float
    n_points: int


@dataclass(frozen=True)
class RmseReport:
    mean_of_estimates: float
    e_value: float
    lg_e: float
    n_shifts: int
    seed: int

    def as_dict(self) -> dict:
        return asdict(self)


def shift_stream(seed: int, index: int, stream: int = 0) -> np.random.Generator:
    if seed < 0 or index < 0 or stream < 0:
        raise ValueError("seed, index and stream must be nonnegative")
    return np.random.Generator(np.random.Philox(counter=[0, 0, index, stream], key=seed))


def draw_shift(params: NetParams, seed: int, index: int, stream: int = 0) -> DigitalShift:
    """Uniform sigma in Z_b^{s x n} from counter block (seed, index, stream)."""
    rng = shift_stream(seed, index, stream)
    return DigitalShift(rng.integers(0, params.b, size=params.shape))


class ShiftedNet:
    """Points of a net, kept in the cheapest form for repeated shifting."""

    def __init__(self, net: DigitalNet):
        self.net = net
        self.params = net.params
        if self.params.b == 2 and self.params.n <= 64:
            self.packed = enumerate_packed(net)
            self.digits = None
        else:
            self.packed = None
            self.digits = enumerate_points(net)

    def coordinates(self, sigmas: list[DigitalShift]) -> np.ndarray:
        """psi(P + sigma) for each sigma, shape ``(len(sigmas), b**m, s)``."""
        p = self.params
        if self.packed is not None:
            sig = pack_rows(np.stack([d.sigma for d in sigmas]))
            return packed_to_unit(self.packed[None, :, :] ^ sig[:, None, :], p.n)
        return np.stack([psi(shift(self.digits, d, p.b), p.b) for d in sigmas])

    def estimates(self, f: Integrand, sigmas: list[DigitalShift]) -> np.ndarray:
        per = max(1, BATCH_POINTS // self.params.size)
        out = []
        for k in range(0, len(sigmas), per):
            x = self.coordinates(sigmas[k:k + per])
            out.append(evaluate(f, x).mean(axis=-1))
        return np.concatenate(out) if out else np.zeros(0)


def qmc_integrate(net: DigitalNet, sigma: DigitalShift | None, f: Integrand) -> QmcEstimate:
    """Average of f over psi(P + sigma)."""
    sigma = sigma if sigma is not None else DigitalShift.zero(net.params)
    if sigma.sigma.shape != net.params.shape:
        raise ValueError(f"shift has shape {sigma.sigma.shape}, net needs {net.params.shape}")
    value = ShiftedNet(net).estimates(f, [sigma])[0]
    return QmcEstimate(float(value), net.params.size)


def summarize(estimates: np.ndarray, seed: int) -> RmseReport:
    """Sample mean and sample standard deviation (divisor n - 1)."""
    n = len(estimates)
    if n < 2:
        raise ValueError("need at least two shifts")
    mean = math.fsum(estimates.tolist()) / n
    var = math.fsum(((estimates - mean) ** 2).tolist()) / (n - 1)
    e = math.sqrt(var)
    return RmseReport(mean, e, math.log2(e) if e > 0 else -math.inf, n, seed)


def rmse_estimate(net: DigitalNet, f: Integrand, n_shifts: int, seed: int = 0,
                  stream: int = 0) -> RmseReport:
    """Estimate E(f; P) from ``n_shifts`` independent uniform digital shifts."""
    if n_shifts < 2:
        raise ValueError("n_shifts must be >= 2")
    sigmas = [draw_shift(net.params, seed, k, stream) for k in range(n_shifts)]
    return summarize(ShiftedNet(net).estimates(f, sigmas), seed)


def rmse_many(net: DigitalNet, fns: list[Integrand], n_shifts: int, seed: int = 0,
              stream: int = 0) -> dict[str, RmseReport]:
    """:func:`rmse_estimate` for several integrands sharing the same shifts."""
    if n_shifts < 2:
        raise ValueError("n_shifts must be >= 2")
    sigmas = [draw_shift(net.params, seed, k, stream) for k in range(n_shifts)]
    pts = ShiftedNet(net)
    return {f.id: summarize(pts.estimates(f, sigmas), seed) for f in fns}


def plain_error(net: DigitalNet, f: Integrand) -> float:
    """Signed unshifted error I_psi(P)(f) - I(f)."""
    if f.exact_integral is None:
        raise ValueError(f"{f.id} has no exact integral")
    return qmc_integrate(net, None, f).value - f.exact_integral
