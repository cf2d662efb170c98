"""Command-line interface: ``lazyclock <subcommand> ...``.

Outputs are CSV (header row, times or abscissae in the first column) or
JSON. Exit codes: 0 success, 1 validation failure, 2 usage error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from typing import Callable, Optional, Sequence

import numpy as np

from . import clocks, harness, latent, laws, lazymart
from .clocks import ClockBatch, GridSpec
from .laws import CirParams, ClockLawParams
from .latent import LatentTransition, PathBatch
from .specfun import RngStream


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _default_seed() -> int:
    env = os.environ.get("LAZYCLOCK_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise UsageError(f"LAZYCLOCK_SEED must be an integer, got {env!r}")


# --------------------------------------------------------------------------
# Output helpers
# --------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _write_csv(header, rows, out) -> None:
    w = csv.writer(out, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
    w.writerow(header)
    for r in rows:
        w.writerow([c if isinstance(c, str) else _fmt(c) for c in r])


def _emit(text_fn: Callable[[io.TextIOBase], None], out_path: Optional[str]) -> None:
    if out_path is None or out_path == "-":
        text_fn(sys.stdout)
    else:
        with open(out_path, "w", newline="", encoding="utf-8") as fh:
            text_fn(fh)


def _table(times, columns, names, out_path, first="t"):
    rows = [[t] + [c[i] for c in columns] for i, t in enumerate(times)]
    _emit(lambda fh: _write_csv([first] + list(names), rows, fh), out_path)


def _json(obj, out_path):
    _emit(lambda fh: fh.write(json.dumps(obj, sort_keys=True) + "\n"), out_path)


def _clock_table(batch: ClockBatch, points: int, out_path, fmt):
    if fmt == "json":
        _json({"horizon": batch.horizon, "sync_times": [c.sync_times.tolist() for c in batch.clocks()]}, out_path)
        return
    ts = np.linspace(0.0, batch.horizon, points)
    cols = [c(ts) for c in batch.clocks()]
    _table(ts, cols, [f"path{i}" for i in range(batch.n_paths)], out_path)


def _path_table(pb: PathBatch, points: int, out_path, fmt):
    if fmt == "json":
        _json({"horizon": pb.horizon,
               "paths": [{"times": p.times.tolist(), "values": p.values.tolist()} for p in pb.paths()]}, out_path)
        return
    ts = np.linspace(0.0, pb.horizon, points)
    _table(ts, [p(ts) for p in pb.paths()], [f"path{i}" for i in range(pb.n_paths)], out_path)


def _grid(args) -> GridSpec:
    if args.steps is not None:
        return GridSpec(args.steps, args.horizon)
    return GridSpec.per_unit(args.horizon, harness.STEPS_PER_UNIT)


def _root(args) -> RngStream:
    seed = args.seed if args.seed is not None else _default_seed()
    return RngStream(seed, 0)


# --------------------------------------------------------------------------
# Subcommands
# --------------------------------------------------------------------------

def cmd_sample_clock(args) -> int:
    rng = _root(args).child("sample-clock", args.model)
    if args.model == "poisson":
        batch = clocks.sample_poisson_lazy_batch(args.lam, args.horizon, args.n_paths, rng)
    elif args.model == "brownian":
        batch = clocks.sample_brownian_lazy_batch(args.horizon, _grid(args), args.n_paths, rng,
                                                  args.barrier_a, args.barrier_b)
    else:
        x = clocks.sample_bessel_lazy_marginal(args.nu, args.horizon, rng, args.n_paths)
        if args.format == "json":
            _json({"t": args.horizon, "nu": args.nu, "samples": x.tolist()}, args.out)
        else:
            _table([args.horizon], [[v] for v in x], [f"path{i}" for i in range(x.size)], args.out)
        return 0
    _clock_table(batch, args.points, args.out, args.format)
    return 0


def _phi_lazy(args, rng, n):
    cb = clocks.sample_poisson_lazy_batch(args.lam, args.horizon, n, rng.child("clock"))
    lt = LatentTransition("phi", args.z0, eta=args.eta)
    return lazymart.lazy_compose_batch(lt, cb, rng.child("latent"))


def cmd_sample_path(args) -> int:
    rng = _root(args).child("sample-path", args.model)
    n, T = args.n_paths, args.horizon
    if args.model == "phi-lazy":
        pb = _phi_lazy(args, rng, n)
    elif args.model == "skellam":
        pb = latent.skellam_batch(args.lam, T, n, rng)
    elif args.model == "gammadiff":
        grid = _grid(args)
        z = latent.gammadiff_grid(args.a_shape, args.b_rate, grid, n, rng)
        pts = grid.n_steps
        offsets = np.arange(n + 1) * pts
        pb = PathBatch(T, np.zeros(n), offsets, np.tile(grid.times[1:], n), z[:, 1:].ravel())
    elif args.model == "g0diff":
        pb = latent.g0diff_batch(T, _grid(args), n, rng)
    elif args.model == "step":
        cb = clocks.sample_poisson_lazy_batch(args.lam, T, n, rng.child("jumps"))
        inc = latent.TwoPointIncrements(args.lower, args.upper)
        pb = latent.step_martingale_batch(inc, cb, args.z0, rng.child("increments"))
    else:
        pb = lazymart.correlated_lazy_batch(args.rho, T, _grid(args), n, rng)
    _path_table(pb, args.points, args.out, args.format)
    return 0


def _law_from_args(args) -> laws.Law:
    name = args.law
    t = args.t
    if name == "poisson-lazy":
        return laws.poisson_lazy_law(args.lam, t)
    if name == "arcsine":
        return laws.arcsine_law(t)
    if name == "affine-lastpassage":
        return laws.affine_lastpassage_law(args.barrier_a, args.barrier_b, t)
    if name == "bessel-lazy":
        return laws.bessel_lazy_law(args.nu, t)
    if name == "bridge-lastzero":
        return laws.bridge_lastzero_law(args.x, args.y, t)
    if name == "skellam":
        return laws.skellam_law(args.lam, t)
    if name == "gamma-diff":
        return laws.gamma_diff_law(args.a_shape, args.b_rate, t)
    if name == "g0diff":
        return laws.g0diff_law(t)
    if name == "phimart":
        return laws.phimart_law(args.z0, args.eta, t)
    if name == "phi-lazy":
        return laws.lazy_mixed_law(laws.phi_latent_cdf(args.z0, args.eta),
                                   ClockLawParams("poisson", t, lam=args.lam), args.z0, (0.0, 1.0))
    cir = CirParams(args.kappa, args.theta, args.sigma, args.lam0)
    if name == "cox-lazy":
        return laws.clock_law(ClockLawParams("cox_cir", t, cir=cir))
    if name == "phi-cox-lazy":
        return laws.lazy_mixed_law(laws.phi_latent_cdf(args.z0, args.eta),
                                   ClockLawParams("cox_cir", t, cir=cir), args.z0, (0.0, 1.0))
    raise UsageError(f"unknown law {name!r}")


LAW_IDS = ("poisson-lazy", "arcsine", "affine-lastpassage", "bessel-lazy", "bridge-lastzero", "skellam",
           "gamma-diff", "g0diff", "phimart", "phi-lazy", "cox-lazy", "phi-cox-lazy")


def _parse_grid(spec: str):
    try:
        lo, hi, n = spec.split(":")
        lo, hi, n = float(lo), float(hi), int(n)
    except ValueError:
        raise UsageError(f"--grid must look like lo:hi:n, got {spec!r}")
    if n < 1 or hi < lo:
        raise UsageError("--grid needs n >= 1 and hi >= lo")
    return np.linspace(lo, hi, n)


def cmd_cdf(args) -> int:
    xs = _parse_grid(args.grid)
    law = _law_from_args(args)
    F = np.asarray(law.cdf(xs), dtype=float)
    cols = [F, law.atom_mass(xs)]
    names = ["cdf", "atom"]
    _table(xs, [c.tolist() for c in cols], names, args.out, first="x")
    return 0


def cmd_moments(args) -> int:
    law = _law_from_args(args)
    if law.moment is None:
        raise UsageError(f"law {args.law!r} has no moment formula")
    ks = list(range(1, args.k_max + 1))
    _table(ks, [[law.moment(k) for k in ks]], ["moment"], args.out, first="k")
    return 0


def cmd_validate(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed()
    try:
        reports = harness.run_suite(args.suite, args.n_paths, seed, args.workers)
    except KeyError as exc:
        raise UsageError(str(exc.args[0]))
    _emit(lambda fh: fh.write("".join(r.to_json() + "\n" for r in reports)), args.out)
    return 0 if all(r.passed for r in reports) else 1


FIGURES = ("1a", "1b", "2a", "2b", "3a", "3b", "3c", "3d")


def cmd_figures(args) -> int:
    rng = _root(args).child("figures", args.which)
    which = args.which
    if which == "1a":
        batch = clocks.sample_poisson_lazy_batch(1.5, 5.0, args.n_paths, rng)
        _clock_table(batch, args.points, args.out, "csv")
    elif which == "1b":
        T = 5.0
        batch = clocks.sample_brownian_lazy_batch(T, GridSpec.per_unit(T, harness.STEPS_PER_UNIT), args.n_paths, rng)
        _clock_table(batch, args.points, args.out, "csv")
    elif which in ("2a", "2b"):
        eta, lam = (0.25, 0.2) if which == "2a" else (0.15, 0.5)
        T, z0 = 15.0, 0.5
        ts = np.linspace(0.0, T, args.points)
        cb = clocks.sample_poisson_lazy_batch(lam, T, args.n_paths, rng.child("clock"))
        lt = LatentTransition("phi", z0, eta=eta)
        # the latent on the output grid plus the sync times, drawn jointly
        merged = [np.union1d(ts[1:], c.sync_times) for c in cb.clocks()]
        offs = np.concatenate([[0], np.cumsum([m.size for m in merged])])
        vals = latent.latent_on_times(lt, offs, np.concatenate(merged), rng.child("latent"))
        cols, names = [], []
        for i, (m, c) in enumerate(zip(merged, cb.clocks())):
            v = np.concatenate([[z0], vals[offs[i]:offs[i + 1]]])
            mt = np.concatenate([[0.0], m])
            cols.append(v[np.searchsorted(mt, c(ts), side="right") - 1])
            names.append(f"lazy{i}")
        for i, m in enumerate(merged):
            v = np.concatenate([[z0], vals[offs[i]:offs[i + 1]]])
            mt = np.concatenate([[0.0], m])
            cols.append(v[np.searchsorted(mt, ts, side="right") - 1])
            names.append(f"latent{i}")
        _table(ts, cols, names, args.out)
    else:
        z0, eta, lam = harness.FIG3[which]
        zs = np.linspace(0.0, 1.0, args.points)
        cols, names = [], []
        for t in harness.FIG3_TIMES:
            cols.append(laws.phimart_cdf(zs, z0, eta, t))
            names.append(f"latent_t={t:g}")
            cols.append(laws.lazy_mixed_cdf(zs, laws.phi_latent_cdf(z0, eta), ClockLawParams("poisson", t, lam=lam), z0))
            names.append(f"lazy_t={t:g}")
        _table(zs, [np.asarray(c).tolist() for c in cols], names, args.out, first="z")
    return 0


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

def _positive_int(s):
    v = int(s)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _common(p, horizon=5.0, n_paths=4):
    p.add_argument("--horizon", "--t-max", dest="horizon", type=float, default=horizon)
    p.add_argument("--steps", type=_positive_int, default=None, help="grid steps (default 2000 per unit time)")
    p.add_argument("--n-paths", type=_positive_int, default=n_paths)
    p.add_argument("--points", type=_positive_int, default=501, help="output time points for CSV")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def _law_params(p):
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--lambda", dest="lam", type=float, default=1.0)
    p.add_argument("--nu", type=float, default=-0.5)
    p.add_argument("--barrier-a", type=float, default=0.0)
    p.add_argument("--barrier-b", type=float, default=0.0)
    p.add_argument("--x", type=float, default=1.0)
    p.add_argument("--y", type=float, default=1.0)
    p.add_argument("--a-shape", type=float, default=1.0)
    p.add_argument("--b-rate", type=float, default=2.0)
    p.add_argument("--z0", type=float, default=0.5)
    p.add_argument("--eta", type=float, default=0.25)
    p.add_argument("--kappa", type=float, default=0.5, help="CIR mean-reversion speed")
    p.add_argument("--theta", type=float, default=0.3)
    p.add_argument("--sigma", type=float, default=0.2)
    p.add_argument("--lam0", type=float, default=0.3)
    p.add_argument("--out", default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="lazyclock", description="Lazy clocks and piecewise-constant martingales.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("sample-clock", help="sample lazy clock paths")
    p.add_argument("--model", choices=("poisson", "brownian", "bessel-marginal"), required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=1.5)
    p.add_argument("--nu", type=float, default=-0.5)
    p.add_argument("--barrier-a", type=float, default=0.0)
    p.add_argument("--barrier-b", type=float, default=0.0)
    _common(p)
    p.set_defaults(func=cmd_sample_clock)

    p = sub.add_parser("sample-path", help="sample piecewise-constant martingale paths")
    p.add_argument("--model", choices=("phi-lazy", "skellam", "gammadiff", "g0diff", "step", "correlated"), required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=0.2)
    p.add_argument("--eta", type=float, default=0.25)
    p.add_argument("--z0", type=float, default=0.5)
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--a-shape", type=float, default=1.0)
    p.add_argument("--b-rate", type=float, default=2.0)
    p.add_argument("--lower", type=float, default=-1.0, help="step model: Z - z0 stays above this (a < 0)")
    p.add_argument("--upper", type=float, default=1.0, help="step model: Z - z0 stays below this (b > 0)")
    _common(p)
    p.set_defaults(func=cmd_sample_path)

    p = sub.add_parser("cdf", help="tabulate an analytic CDF")
    p.add_argument("--law", choices=LAW_IDS, required=True)
    p.add_argument("--grid", required=True, help="lo:hi:n")
    _law_params(p)
    p.set_defaults(func=cmd_cdf)

    p = sub.add_parser("moments", help="analytic moments of a law")
    p.add_argument("--law", choices=LAW_IDS, required=True)
    _law_params(p)
    p.add_argument("--k", dest="k_max", type=_positive_int, default=4, help="highest moment order")
    p.set_defaults(func=cmd_moments)

    p = sub.add_parser("validate", help="run Monte Carlo validation scenarios")
    p.add_argument("--suite", required=True, help="scenario id or 'all'")
    p.add_argument("--n-paths", type=_positive_int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("figures", help="CSV data for the sample-path and CDF figures")
    p.add_argument("--which", choices=FIGURES, required=True)
    p.add_argument("--n-paths", type=_positive_int, default=4)
    p.add_argument("--points", type=_positive_int, default=501)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_figures)
    return ap


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    # argparse reads "-3:3:41" as an option; glue a grid spec to its flag
    fixed, i = [], 0
    while i < len(argv):
        if argv[i] == "--grid" and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            fixed.append(f"--grid={argv[i + 1]}")
            i += 2
        else:
            fixed.append(argv[i])
            i += 1
    argv = fixed
    try:
        ap = build_parser()
        args = ap.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        return int(args.func(args))
    except UsageError as exc:
        print(f"lazyclock: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"lazyclock: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
