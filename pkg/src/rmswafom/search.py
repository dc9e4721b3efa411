"""Search for digital nets with small W(P; mu+h).

Two searches are provided: the best of independent random nets, and
simulated annealing over bases.  Both minimise lg W under a fixed weight
(``mu+h`` unless told otherwise).  Nets found this way are not extensible in
m: the net for m + 1 does not contain the net for m.
"""

from __future__ import annotations

import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .netcore import (
    DigitalNet,
    NetError,
    NetParams,
    pack_rows,
    random_net,
    span,
    span_packed,
)
from .wafom import WeightSpec, lg_wafom_fast, support_masks, wafom_inversion

log = logging.getLogger(__name__)

MAX_RETRIES = 100
N_PROBES = 100


@dataclass(frozen=True)
class AnnealConfig:
    steps: int = 20000
    initial_temperature: float | None = None  # None: std of lg W over random probes
    cooling_rate: float = 0.98
    moves_per_temperature: int = 50
    seed: int = 0
    restarts: int = 1
    weight: str = "mu+h"
    checkpoint_every: int = 1000

    def __post_init__(self):
        if self.steps < 0 or self.restarts < 1 or self.moves_per_temperature < 1:
            raise ValueError("steps >= 0, restarts >= 1 and moves_per_temperature >= 1 required")
        if not 0 < self.cooling_rate < 1:
            raise ValueError("cooling_rate must lie in (0, 1)")
        if self.initial_temperature is not None and self.initial_temperature < 0:
            raise ValueError("initial_temperature must be >= 0")


@dataclass
class SearchResult:
    best_net: DigitalNet
    best_lg_w: float
    trace: list[tuple[int, float]] = field(default_factory=list)
    wall_time: float = 0.0
    evaluations: int = 0
    restart_index: int = 0


class Objective:
    """lg W(P; nu) for nets sharing one parameter set, double precision."""

    def __init__(self, params: NetParams, weight: str | WeightSpec = "mu+h"):
        self.params = params
        if isinstance(weight, str):
            weight = WeightSpec.by_name(weight, params.s, params.n)
        self.spec = weight
        self.calls = 0

    def __call__(self, net: DigitalNet) -> float:
        self.calls += 1
        p = self.params
        if p.b == 2:
            masks = span_packed(pack_rows(net.basis))
        else:
            masks = support_masks(span(net.basis, p.b, p.shape))
        return lg_wafom_fast(masks, p.b, p.n, self.spec)


def _stream(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(index,))))


def neighbor(net: DigitalNet, rng: np.random.Generator) -> tuple[DigitalNet, str]:
    """Random local move; returns (new_net, move_name).

    ``"flip"`` changes one digit of one generator to another value;
    ``"combine"`` adds one generator to another (same subgroup, new basis).
    Draws that lose rank are rejected and redrawn.
    """
    p = net.params
    for _ in range(MAX_RETRIES):
        B = np.array(net.basis)
        k = int(rng.integers(p.m))
        if p.m > 1 and rng.random() < 0.5:
            l = int(rng.integers(p.m - 1))
            l += l >= k
            B[k] = (B[k] + B[l]) % p.b
            return DigitalNet(p, B), "combine"
        i = int(rng.integers(p.s))
        j = int(rng.integers(p.n))
        B[k, i, j] = (B[k, i, j] + int(rng.integers(1, p.b))) % p.b
        cand = DigitalNet(p, B)
        if cand.rank() == p.m:
            return cand, "flip"
    raise NetError(f"no rank-preserving move found in {MAX_RETRIES} tries")


def _full_rank(params: NetParams, rng: np.random.Generator) -> DigitalNet:
    for _ in range(MAX_RETRIES):
        net = random_net(params, rng)
        if net.rank() == params.m:
            return net
    raise NetError("could not draw an independent basis")


def random_search(params: NetParams, count: int, seed=0, weight: str = "mu+h") -> SearchResult:
    """Best of ``count`` random nets drawn in sequence from one stream."""
    if count < 1:
        raise ValueError("count must be >= 1")
    t0 = time.perf_counter()
    rng = np.random.default_rng(seed)
    obj = Objective(params, weight)
    best, best_val, trace = None, math.inf, []
    for k in range(count):
        net = random_net(params, rng)
        val = obj(net)
        if best is None or val < best_val:
            best, best_val = net, val
            trace.append((k, val))
    exact = wafom_inversion(best, obj.spec).lg_w if best.rank() == params.m else best_val
    return SearchResult(best, exact, trace, time.perf_counter() - t0, obj.calls)


# ---------------------------------------------------------------------------
# annealing


@dataclass
class _State:
    step: int
    temperature: float
    current: DigitalNet
    current_val: float
    best: DigitalNet
    best_val: float
    trace: list
    evaluations: int
    rng: np.random.Generator


def _save_checkpoint(path: Path, params: NetParams, cfg: AnnealConfig, restart: int, st: _State) -> None:
    doc = {
        "format": "rmswafom-anneal-checkpoint/1",
        "params": asdict(params),
        "config": asdict(cfg),
        "restart_index": restart,
        "step": st.step,
        "temperature": st.temperature,
        "evaluations": st.evaluations,
        "rng_state": st.rng.bit_generator.state,
        "current_lg_w": st.current_val,
        "current_basis": st.current.basis.tolist(),
        "best_lg_w": st.best_val,
        "best_basis": st.best.basis.tolist(),
        "trace": st.trace,
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(doc, indent=1))
    tmp.replace(path)


def load_checkpoint(path) -> dict:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "rmswafom-anneal-checkpoint/1":
        raise ValueError(f"{path} is not an annealing checkpoint")
    return doc


def _restore(doc: dict, params: NetParams) -> _State:
    rng = np.random.Generator(np.random.PCG64())
    rng.bit_generator.state = doc["rng_state"]
    return _State(
        step=doc["step"],
        temperature=doc["temperature"],
        current=DigitalNet(params, np.array(doc["current_basis"], dtype=np.int64)),
        current_val=doc["current_lg_w"],
        best=DigitalNet(params, np.array(doc["best_basis"], dtype=np.int64)),
        best_val=doc["best_lg_w"],
        trace=[tuple(t) for t in doc["trace"]],
        evaluations=doc["evaluations"],
        rng=rng,
    )


def _initial_state(params: NetParams, cfg: AnnealConfig, obj: Objective, rng) -> _State:
    T = cfg.initial_temperature
    evals = 0
    if T is None:
        probes = [obj(_full_rank(params, rng)) for _ in range(N_PROBES)]
        evals += N_PROBES
        finite = [v for v in probes if math.isfinite(v)]
        T = float(np.std(finite)) if len(finite) > 1 else 1.0
    current = _full_rank(params, rng)
    val = obj(current)
    evals += 1
    return _State(0, T, current, val, current, val, [(0, val)], evals, rng)


def anneal_restart(params: NetParams, cfg: AnnealConfig, restart: int = 0,
                   checkpoint: str | Path | None = None, resume: bool = False) -> SearchResult:
    """One annealing run on the stream keyed by (cfg.seed, restart)."""
    if params.m < 1:
        raise ValueError("annealing needs m >= 1")
    t0 = time.perf_counter()
    obj = Objective(params, cfg.weight)
    ckpt = Path(checkpoint) if checkpoint else None
    if resume and ckpt is not None and ckpt.exists():
        st = _restore(load_checkpoint(ckpt), params)
        log.info("resuming restart %d from step %d", restart, st.step)
    else:
        st = _initial_state(params, cfg, obj, _stream(cfg.seed, restart))

    rng = st.rng
    while st.step < cfg.steps:
        st.step += 1
        cand, move = neighbor(st.current, rng)
        if move == "combine":
            val = st.current_val
        else:
            val = obj(cand)
            st.evaluations += 1
        delta = val - st.current_val
        u = rng.random()
        if st.temperature > 0:
            accept = delta <= 0 or u < math.exp(-delta / st.temperature)
        else:
            accept = delta < 0
        if accept:
            st.current, st.current_val = cand, val
            if val < st.best_val:
                st.best, st.best_val = cand, val
                st.trace.append((st.step, val))
        if st.step % cfg.moves_per_temperature == 0:
            st.temperature *= cfg.cooling_rate
        if ckpt is not None and cfg.checkpoint_every and st.step % cfg.checkpoint_every == 0:
            _save_checkpoint(ckpt, params, cfg, restart, st)

    if ckpt is not None:
        _save_checkpoint(ckpt, params, cfg, restart, st)
    final = wafom_inversion(st.best, obj.spec).lg_w
    trace = list(st.trace)
    if trace[-1][0] != st.step:
        trace.append((st.step, st.best_val))
    return SearchResult(st.best, final, trace, time.perf_counter() - t0, st.evaluations, restart)


def _restart_checkpoint(checkpoint, restart: int, restarts: int):
    if checkpoint is None:
        return None
    return Path(checkpoint) if restarts == 1 else Path(f"{checkpoint}.{restart}")


def _run_restart(args):
    params, cfg, k, ckpt, resume = args
    return anneal_restart(params, cfg, k, ckpt, resume)


def anneal(params: NetParams, cfg: AnnealConfig, checkpoint=None, resume: bool = False,
           workers: int = 1) -> SearchResult:
    """Simulated annealing with ``cfg.restarts`` independent restarts.

    Metropolis acceptance on lg W with geometric cooling.  The best restart
    wins; ties go to the lowest restart index.  Results do not depend on
    ``workers``.
    """
    jobs = [(params, cfg, k, _restart_checkpoint(checkpoint, k, cfg.restarts), resume)
            for k in range(cfg.restarts)]
    t0 = time.perf_counter()
    if workers > 1 and cfg.restarts > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_restart, jobs))
    else:
        results = [_run_restart(j) for j in jobs]
    best = min(results, key=lambda r: (r.best_lg_w, r.restart_index))
    best.evaluations = sum(r.evaluations for r in results)
    best.wall_time = time.perf_counter() - t0
    return best
