"""Correlation study over random nets and the searched-vs-external comparison."""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .integrands import IDS, make
from .netcore import DigitalNet, NetParams, random_net, read_net
from .qmc import rmse_many
from .search import AnnealConfig, anneal
from .wafom import WeightSpec, wafom_inversion


def fmt17(x: float) -> str:
    return "%.17g" % x


def fmt2(x: float | None) -> str:
    if x is None:
        return "-"
    return "%.2f" % x


@dataclass
class ScatterRecord:
    net_id: int
    lg_w: float
    lg_e: dict[str, float] = field(default_factory=dict)


@dataclass
class ComparisonRow:
    label: str  # "external" or "searched"
    s: int
    m: int
    lg_w: float | None
    lg_e: dict[str, float] = field(default_factory=dict)
    present: bool = True


def _net_rng(seed: int, net_id: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(net_id,))))


def _scatter_one(args) -> ScatterRecord:
    params, net_id, n_shifts, fns, seed, weight = args
    net = random_net(params, _net_rng(seed, net_id))
    spec = WeightSpec.by_name(weight, params.s, params.n)
    lg_w = wafom_inversion(net, spec).lg_w
    integrands = [make(f, params.s) for f in fns]
    reports = rmse_many(net, integrands, n_shifts, seed=seed, stream=net_id)
    return ScatterRecord(net_id, lg_w, {k: r.lg_e for k, r in reports.items()})


def scatter_experiment(params: NetParams, n_nets: int, n_shifts: int, fns: Sequence[str] = IDS,
                       seed: int = 0, workers: int = 1, weight: str = "mu+h") -> list[ScatterRecord]:
    """lg W and lg E(f) for ``n_nets`` random nets (net k drawn from stream (seed, k)).

    A net whose sampled estimates are all equal gets ``lg_e = -inf``; such
    pairs are dropped by :func:`correlations`.
    """
    if n_nets < 2:
        raise ValueError("n_nets must be >= 2")
    jobs = [(params, k, n_shifts, tuple(fns), seed, weight) for k in range(n_nets)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_scatter_one, jobs, chunksize=max(1, n_nets // (4 * workers))))
    return [_scatter_one(j) for j in jobs]


def correlation(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson correlation coefficient."""
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("xs and ys must be 1-d of equal length")
    if len(x) < 2:
        raise ValueError("need at least two pairs")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = math.fsum((dx * dx).tolist())
    syy = math.fsum((dy * dy).tolist())
    if sxx == 0 or syy == 0:
        raise ValueError("zero variance: correlation undefined")
    r = math.fsum((dx * dy).tolist()) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def _finite_pairs(records: Sequence[ScatterRecord], fn: str) -> tuple[list[float], list[float]]:
    xs, ys = [], []
    for r in records:
        e = r.lg_e.get(fn)
        if e is not None and math.isfinite(e) and math.isfinite(r.lg_w):
            xs.append(r.lg_w)
            ys.append(e)
    return xs, ys


def correlations(records: Sequence[ScatterRecord], fns: Sequence[str] | None = None) -> dict[str, float]:
    fns = fns or sorted(records[0].lg_e)
    return {fn: correlation(*_finite_pairs(records, fn)) for fn in fns}


def decile_gap(records: Sequence[ScatterRecord], fn: str) -> float:
    """median lg E over the worst-W decile minus that over the best-W decile."""
    xs, ys = _finite_pairs(records, fn)
    order = np.argsort(xs, kind="stable")
    k = max(1, len(order) // 10)
    ys = np.asarray(ys)
    return float(np.median(ys[order[-k:]]) - np.median(ys[order[:k]]))


def scatter_csv(records: Sequence[ScatterRecord], fns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["net_id", "lg_w"] + [f"lg_e_{f}" for f in fns])
    for r in sorted(records, key=lambda r: r.net_id):
        w.writerow([r.net_id, fmt17(r.lg_w)] + [fmt17(r.lg_e[f]) for f in fns])
    return buf.getvalue()


def read_scatter_csv(text: str) -> list[ScatterRecord]:
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for row in rows:
        lg_e = {k[len("lg_e_"):]: float(v) for k, v in row.items() if k.startswith("lg_e_")}
        out.append(ScatterRecord(int(row["net_id"]), float(row["lg_w"]), lg_e))
    return out


# ---------------------------------------------------------------------------
# comparison


def _row_for(label: str, net: DigitalNet, fns, n_shifts: int, seed: int, weight: str) -> ComparisonRow:
    p = net.params
    spec = WeightSpec.by_name(weight, p.s, p.n)
    lg_w = wafom_inversion(net, spec).lg_w
    reports = rmse_many(net, [make(f, p.s) for f in fns], n_shifts, seed=seed, stream=p.m)
    return ComparisonRow(label, p.s, p.m, lg_w, {k: r.lg_e for k, r in reports.items()})


def comparison_experiment(external_nets: Mapping[int, DigitalNet | str | Path | None],
                          search_cfg: AnnealConfig | None, fns: Sequence[str], n_shifts: int,
                          seed: int = 0, params: NetParams | None = None,
                          ms: Sequence[int] | None = None,
                          searched_nets: Mapping[int, DigitalNet] | None = None,
                          weight: str = "mu+h") -> list[ComparisonRow]:
    """For each m: lg W and lg E(f) of the external net and of a searched net.

    ``params`` supplies b, s, n for the search (its m is ignored).  Nets in
    ``searched_nets`` are used instead of running the search.  Both nets at
    a given m share the same shifts.
    """
    ms = sorted(ms if ms is not None else external_nets)
    rows: list[ComparisonRow] = []
    for m in ms:
        src = external_nets.get(m)
        ext = read_net(src) if isinstance(src, (str, Path)) and Path(src).exists() else (
            src if isinstance(src, DigitalNet) else None)
        if ext is None:
            s = params.s if params else 0
            rows.append(ComparisonRow("external", s, m, None, {}, present=False))
        else:
            rows.append(_row_for("external", ext, fns, n_shifts, seed, weight))
        if searched_nets and m in searched_nets:
            found = searched_nets[m]
        elif search_cfg is not None and params is not None:
            found = anneal(params.with_m(m), search_cfg).best_net
        else:
            continue
        rows.append(_row_for("searched", found, fns, n_shifts, seed, weight))
    return rows


def comparison_table(rows: Sequence[ComparisonRow], fns: Sequence[str]) -> str:
    """Plain-text table: one line per quantity, one column per m."""
    ms = sorted({r.m for r in rows})
    by = {(r.label, r.m): r for r in rows}
    head = ["quantity", "s"] + [f"m={m}" for m in ms]
    lines = [head]
    s = next((r.s for r in rows if r.s), 0)

    def line(name, label, get):
        vals = []
        for m in ms:
            r = by.get((label, m))
            vals.append(fmt2(get(r)) if r is not None and r.present else "-")
        lines.append([name, str(s)] + vals)

    for label, tag in (("external", "ext"), ("searched", "P")):
        line(f"lg W({tag})", label, lambda r: r.lg_w)
    for f in fns:
        for label, tag in (("external", "ext"), ("searched", "P")):
            line(f"lg E({f};{tag})", label, lambda r, f=f: r.lg_e.get(f))
    widths = [max(len(row[c]) for row in lines) for c in range(len(head))]
    return "\n".join(
        "  ".join(cell.ljust(widths[c]) if c == 0 else cell.rjust(widths[c]) for c, cell in enumerate(row))
        for row in lines) + "\n"


def comparison_csv(rows: Sequence[ComparisonRow], fns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["label", "s", "m", "present", "lg_w"] + [f"lg_e_{f}" for f in fns])
    for r in rows:
        w.writerow([r.label, r.s, r.m, int(r.present), "" if r.lg_w is None else fmt17(r.lg_w)]
                   + ["" if f not in r.lg_e else fmt17(r.lg_e[f]) for f in fns])
    return buf.getvalue()


def to_json(obj) -> str:
    """JSON with floats at 17 significant digits (non-finite as +-Infinity/NaN)."""
    def enc(o):
        if isinstance(o, bool) or o is None:
            return json.dumps(o)
        if isinstance(o, (float, np.floating)):
            o = float(o)
            if math.isnan(o):
                return "NaN"
            if math.isinf(o):
                return "Infinity" if o > 0 else "-Infinity"
            return fmt17(o)
        if isinstance(o, (int, np.integer)):
            return str(int(o))
        if isinstance(o, str):
            return json.dumps(o)
        if isinstance(o, Mapping):
            return "{" + ", ".join(f"{json.dumps(str(k))}: {enc(v)}" for k, v in o.items()) + "}"
        if isinstance(o, (list, tuple)):
            return "[" + ", ".join(enc(v) for v in o) + "]"
        if hasattr(o, "__dataclass_fields__"):
            return enc({k: getattr(o, k) for k in o.__dataclass_fields__})
        raise TypeError(f"cannot encode {type(o).__name__}")
    return enc(obj)
