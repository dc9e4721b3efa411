"""Small-group identity suite run by ``rmswafom verify``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import oracle
from .integrands import make
from .netcore import DigitalShift, NetParams, random_full_rank_net
from .wafom import WeightSpec, wafom_dual_bruteforce, wafom_inversion


@dataclass
class CheckResult:
    name: str
    max_dev: float
    tol: float
    cases: int

    @property
    def passed(self) -> bool:
        return self.max_dev <= self.tol


def _rel(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0 else abs(a - b) / scale


def _small_params(rng, bases=(2, 3), max_sn=12, max_size=2 ** 12) -> NetParams:
    while True:
        b = int(rng.choice(bases))
        s = int(rng.integers(1, 4))
        n = int(rng.integers(1, max_sn // s + 1))
        if s * n <= max_sn and b ** (s * n) <= max_size:
            return NetParams(b, s, n, int(rng.integers(0, s * n + 1)))


def identity_suite(seed: int = 0, cases: int = 20) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []

    dev = 0.0
    for _ in range(cases):
        p = _small_params(rng)
        net = random_full_rank_net(p, rng)
        for spec in (WeightSpec.dick(p.s, p.n), WeightSpec.dick_hamming(p.s, p.n)):
            dev = max(dev, _rel(wafom_inversion(net, spec).w, wafom_dual_bruteforce(net, spec).w))
    out.append(CheckResult("inversion formula vs dual enumeration (rel)", dev, 1e-12, cases))

    dev = 0.0
    for _ in range(3):
        g = oracle.Group(int(rng.choice((2, 3))), 1, 3)
        for x in g.elements():
            expect = g.size if not x.any() else 0
            dev = max(dev, abs(oracle.character_sum(g, x) - expect))
    out.append(CheckResult("character sum orthogonality", dev, 1e-9, 3))

    devs = {"poisson": 0.0, "variance": 0.0, "unbiased": 0.0, "shift": 0.0}
    for _ in range(cases):
        p = _small_params(rng, max_size=2 ** 10)
        net = random_full_rank_net(p, rng)
        g = oracle.Group.of(p)
        F = oracle.random_function(g, rng)
        lhs, rhs = oracle.poisson_check(F, net)
        devs["poisson"] = max(devs["poisson"], abs(lhs - rhs))
        a, b = oracle.variance_exact(F, net)
        devs["variance"] = max(devs["variance"], abs(a - b))
        a, b = oracle.unbiasedness_check(F, net)
        devs["unbiased"] = max(devs["unbiased"], abs(a - b))
        sigma = DigitalShift(rng.integers(0, p.b, size=p.shape))
        devs["shift"] = max(devs["shift"], oracle.shifted_fourier_check(F, sigma))
    out.append(CheckResult("Poisson summation", devs["poisson"], 1e-12, cases))
    out.append(CheckResult("shift variance = dual Fourier sum", devs["variance"], 1e-12, cases))
    out.append(CheckResult("shifted estimator is unbiased", devs["unbiased"], 1e-12, cases))
    out.append(CheckResult("shifted Fourier coefficients", devs["shift"], 1e-12, cases))

    worst = 0.0
    for fid, s, n in (("f1", 1, 3), ("f3", 2, 2), ("f1", 2, 2)):
        worst = max(worst, oracle.walsh_bound_check(make(fid, s), NetParams(2, s, n, 0)))
    out.append(CheckResult("Walsh coefficient bound (ratio - 1)", worst - 1.0, 1e-3, 3))

    worst = -np.inf
    f1 = make("f1", 1)
    for _ in range(5):
        net = random_full_rank_net(NetParams(2, 1, 3, int(rng.integers(1, 3))), rng)
        lhs, rhs = oracle.kh_rmse_check(f1, net)
        worst = max(worst, lhs - rhs)
    out.append(CheckResult("RMSE bound (lhs - rhs)", float(worst), 0.0, 5))
    return out
