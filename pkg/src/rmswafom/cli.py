"""Command line entry point: ``rmswafom <subcommand> ...``.

Exit status is 0 on success, 1 on a user error (bad flags, bad input
files) and 2 when an internal check fails.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import experiments as ex
from .integrands import IDS, make
from .netcore import (
    DigitalShift,
    NetError,
    NetParams,
    enumerate_points,
    parse_generator_matrices,
    psi,
    read_net,
    write_net,
)
from .qmc import draw_shift, rmse_estimate
from .search import AnnealConfig, anneal, random_search
from .wafom import AccumulationError, WeightSpec, wafom

log = logging.getLogger("rmswafom")


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Resolved settings of one invocation (flags over config file over defaults)."""

    subcommand: str
    params: NetParams | None
    weight: str | None
    seed: int | None
    paths: dict[str, str]
    workers: int
    options: dict

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> "RunConfig":
        d = {k: v for k, v in vars(args).items() if k not in ("func", "command", "config", "quiet")}
        raw = d.pop("params", None)
        params = None
        if raw is not None:
            params = NetParams(*raw) if len(raw) == 4 else NetParams(*raw, 0)
        if d.get("workers", 1) < 1:
            raise UsageError("--workers must be >= 1")
        if params is not None and d.get("weight") is not None:
            WeightSpec.by_name(d["weight"], params.s, params.n)
        path_keys = ("net", "out", "checkpoint", "input", "external_pattern")
        paths = {k: str(d.pop(k)) for k in path_keys if d.get(k) is not None}
        for k in path_keys:
            d.pop(k, None)
        return cls(args.command, params, d.pop("weight", None), d.pop("seed", None), paths,
                   d.pop("workers", 1), d)

    def as_dict(self) -> dict:
        out = asdict(self)
        if self.params is not None:
            out["params"] = [self.params.b, self.params.s, self.params.n, self.params.m]
        return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _int_expr(text: str) -> int:
    """Accept 1024, 2^10 or 2**10."""
    t = text.replace("**", "^")
    try:
        if "^" in t:
            base, exp = t.split("^")
            return int(base) ** int(exp)
        return int(t)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None


def _params(text: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if len(vals) not in (3, 4):
        raise argparse.ArgumentTypeError("expected b,s,n or b,s,n,m")
    return vals


def _fn_list(text: str) -> list[str]:
    fns = [f.strip() for f in text.split(",") if f.strip()]
    bad = [f for f in fns if f not in IDS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown integrand(s) {bad}; choose from {', '.join(IDS)}")
    return fns


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_wafom(a) -> int:
    net = read_net(a.net)
    spec = WeightSpec.by_name(a.weight, net.params.s, net.params.n)
    val = wafom(net, spec, a.method)
    if val.clamped:
        log.warning("negative radicand clamped to zero")
    if a.text:
        print(f"w = {val.w:.17g}\nlg_w = {val.lg_w:.17g}\nmethod = {val.method}")
    else:
        print(ex.to_json(val.as_dict()))
    return 0


def cmd_integrate(a) -> int:
    net = read_net(a.net)
    if a.dim is not None and a.dim != net.params.s:
        raise UsageError(f"--dim {a.dim} does not match the net's s = {net.params.s}")
    f = make(a.fn, net.params.s)
    rep = rmse_estimate(net, f, a.shifts, a.seed)
    doc = rep.as_dict()
    if a.exact:
        doc["exact_integral"] = f.exact_integral
        bias = abs(rep.mean_of_estimates - f.exact_integral)
        doc["lg_abs_bias"] = float(np.log2(bias)) if bias > 0 else float("-inf")
    print(ex.to_json(doc))
    return 0


def _need_m(p: tuple[int, ...]) -> NetParams:
    if len(p) != 4:
        raise UsageError("--params needs b,s,n,m")
    return NetParams(*p)


def cmd_scatter(a) -> int:
    params = _need_m(a.params)
    recs = ex.scatter_experiment(params, a.nets, a.shifts, a.fns, a.seed, a.workers, a.weight)
    _emit(ex.scatter_csv(recs, a.fns), a.out)
    corr = {}
    for f in a.fns:
        try:
            corr[f] = ex.correlations(recs, [f])[f]
        except ValueError:
            corr[f] = float("nan")
    if a.json:
        sys.stderr.write(ex.to_json({"correlation": corr}) + "\n")
    else:
        for f, r in corr.items():
            sys.stderr.write(f"corr(lg W, lg E({f})) = {r:.4f}\n")
    return 0


def cmd_compare(a) -> int:
    b, s, n = a.params[:3]
    params = NetParams(b, s, n, 0)
    ms = list(range(a.m_min, a.m_max + 1))
    external = {}
    for m in ms:
        path = Path(a.external_pattern.format(m=m)) if a.external_pattern else None
        external[m] = path if path is not None and path.exists() else None
        if external[m] is None:
            log.warning("no external net for m=%d", m)
    cfg = AnnealConfig(steps=a.steps, seed=a.seed, restarts=a.restarts, weight=a.weight)
    rows = ex.comparison_experiment(external, cfg, a.fns, a.shifts, a.seed, params, ms, weight=a.weight)
    if a.out:
        Path(a.out).write_text(ex.comparison_csv(rows, a.fns))
    if a.json:
        print(ex.to_json([r for r in rows]))
    else:
        sys.stdout.write(ex.comparison_table(rows, a.fns))
    return 0


def cmd_search(a) -> int:
    params = _need_m(a.params)
    if a.random:
        res = random_search(params, a.random, a.seed, a.weight)
    else:
        cfg = AnnealConfig(steps=a.steps, seed=a.seed, restarts=a.restarts, weight=a.weight,
                           initial_temperature=a.temperature, cooling_rate=a.cooling,
                           moves_per_temperature=a.moves_per_temperature,
                           checkpoint_every=a.checkpoint_every)
        res = anneal(params, cfg, a.checkpoint, a.resume, a.workers)
    if a.out:
        write_net(res.best_net, a.out, comment=f"lg W({a.weight}) = {res.best_lg_w:.17g}")
    print(ex.to_json({"best_lg_w": res.best_lg_w, "evaluations": res.evaluations,
                      "wall_time": res.wall_time, "out": a.out}))
    return 0


def cmd_verify(a) -> int:
    from .verify import identity_suite

    results = identity_suite(a.seed, a.cases)
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{status}  {r.name:45s} max_dev={r.max_dev:.3e}  tol={r.tol:.0e}  cases={r.cases}")
    return 0 if all(r.passed for r in results) else 2


def cmd_gen_points(a) -> int:
    net = read_net(a.net)
    pts = enumerate_points(net)
    if a.shift_seed is not None:
        sigma = draw_shift(net.params, a.shift_seed, 0)
    else:
        sigma = DigitalShift.zero(net.params)
    x = psi((pts + sigma.sigma) % net.params.b, net.params.b)
    lines = [",".join(f"x{i + 1}" for i in range(net.params.s))]
    lines += [",".join(ex.fmt17(v) for v in row) for row in x]
    _emit("\n".join(lines) + "\n", a.out)
    return 0


def cmd_ingest(a) -> int:
    net = parse_generator_matrices(Path(a.input).read_text(), a.b, a.n, a.m)
    write_net(net, a.out, comment=f"ingested from {Path(a.input).name}")
    print(ex.to_json({"b": net.params.b, "s": net.params.s, "n": net.params.n, "m": net.params.m,
                      "rank": net.rank(), "out": a.out}))
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rmswafom", description="Digital nets, W(P; nu) and shifted-QMC error experiments.")
    p.add_argument("--config", help="JSON file of default flag values")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("-q", "--quiet", action="store_true", help="log warnings only")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    q = sub.add_parser("wafom", help="W(P; weight) of a net file")
    q.add_argument("--net", required=True)
    q.add_argument("--weight", default="mu+h", help="mu, h, mu+h or a file with an s x n matrix")
    q.add_argument("--method", default="inversion", choices=["inversion", "dual", "highprec"])
    q.add_argument("--text", action="store_true", help="plain text instead of JSON")
    q.set_defaults(func=cmd_wafom)

    q = sub.add_parser("integrate", help="RMS error of a test function over shifted copies of a net")
    q.add_argument("--net", required=True)
    q.add_argument("--fn", required=True, choices=IDS)
    q.add_argument("--shifts", type=_int_expr, default=2 ** 10)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--dim", type=int, help="dimension s (defaults to the net's)")
    q.add_argument("--exact", action="store_true")
    q.set_defaults(func=cmd_integrate)

    q = sub.add_parser("scatter", help="lg W vs lg E over random nets (CSV)")
    q.add_argument("--params", type=_params, required=True, help="b,s,n,m")
    q.add_argument("--nets", type=int, default=1000)
    q.add_argument("--shifts", type=_int_expr, default=2 ** 10)
    q.add_argument("--fns", type=_fn_list, default=list(IDS))
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--weight", default="mu+h")
    q.add_argument("--out")
    q.add_argument("--json", action="store_true")
    q.set_defaults(func=cmd_scatter)

    q = sub.add_parser("compare", help="searched nets vs external nets, table by m")
    q.add_argument("--params", type=_params, required=True, help="b,s,n")
    q.add_argument("--m-min", type=int, default=8)
    q.add_argument("--m-max", type=int, default=15)
    q.add_argument("--external-pattern", help="net file path with {m}, e.g. nx/nx_m{m}.net")
    q.add_argument("--steps", type=int, default=20000)
    q.add_argument("--restarts", type=int, default=1)
    q.add_argument("--shifts", type=_int_expr, default=2 ** 10)
    q.add_argument("--fns", type=_fn_list, default=list(IDS))
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--weight", default="mu+h")
    q.add_argument("--out", help="CSV output")
    q.add_argument("--json", action="store_true")
    q.set_defaults(func=cmd_compare)

    q = sub.add_parser("search", help="find a net with small W")
    q.add_argument("--params", type=_params, required=True, help="b,s,n,m")
    q.add_argument("--steps", type=int, default=20000)
    q.add_argument("--restarts", type=int, default=1)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--weight", default="mu+h")
    q.add_argument("--temperature", type=float, default=None)
    q.add_argument("--cooling", type=float, default=0.98)
    q.add_argument("--moves-per-temperature", type=int, default=50)
    q.add_argument("--random", type=int, default=0, help="best of this many random nets instead")
    q.add_argument("--out")
    q.add_argument("--checkpoint")
    q.add_argument("--checkpoint-every", type=int, default=1000)
    q.add_argument("--resume", action="store_true")
    q.set_defaults(func=cmd_search)

    q = sub.add_parser("verify", help="run the small-group identity checks")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--cases", type=int, default=20)
    q.set_defaults(func=cmd_verify)

    q = sub.add_parser("gen-points", help="CSV of the (optionally shifted) points of a net")
    q.add_argument("--net", required=True)
    q.add_argument("--shift-seed", type=int)
    q.add_argument("--out")
    q.set_defaults(func=cmd_gen_points)

    q = sub.add_parser("ingest", help="convert per-coordinate generator matrices to a net file")
    q.add_argument("--in", dest="input", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--b", type=int, default=2)
    q.add_argument("--n", type=int)
    q.add_argument("--m", type=int)
    q.set_defaults(func=cmd_ingest)
    return p


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        cfg = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        parser.error(f"cannot read config {args.config}: {exc}")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions} | {a.dest for a in parser._actions}
    unknown = set(cfg) - known
    if unknown:
        parser.error(f"unknown config keys {sorted(unknown)}")
    for action in sub._actions:
        if action.dest in cfg and action.type is not None and isinstance(cfg[action.dest], str):
            cfg[action.dest] = action.type(cfg[action.dest])
    sub.set_defaults(**{k: v for k, v in cfg.items() if k in {a.dest for a in sub._actions}})
    parser.set_defaults(**{k: v for k, v in cfg.items() if k in {a.dest for a in parser._actions}})
    return parser.parse_args(argv)


def _setup_logging(quiet: bool) -> None:
    for h in list(log.handlers):
        log.removeHandler(h)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.WARNING if quiet else logging.INFO)
    log.propagate = False


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _setup_logging(args.quiet)
    try:
        run = RunConfig.from_args(args)
        log.info("resolved config: %s", json.dumps(run.as_dict(), default=str, sort_keys=True))
        return args.func(args)
    except (UsageError, NetError, ValueError, KeyError, OSError) as exc:
        print(f"rmswafom: error: {exc}", file=sys.stderr)
        return 1
    except (AssertionError, AccumulationError) as exc:
        print(f"rmswafom: internal error: {exc}", file=sys.stderr)
        return 2


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
