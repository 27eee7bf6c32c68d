"""Command-line experiment runner.

Subcommands: ``fixation``, ``duality``, ``equilibrium``, ``transitions``,
``conditions`` and ``sweep``. Results are CSV (default) or JSON rows, written
to ``--output`` or stdout. ``--config FILE`` reads ``key = value`` lines whose
keys are option names; explicit flags win. The worker count defaults to the
``CANNINGS_ASG_THREADS`` environment variable.

Exit codes: 0 success, 2 usage error, 3 property failure, 4 diagnostic
warning escalated by ``--strict``.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np
from scipy import stats as sps

from . import casp, duality, exact, forward, moran, paintbox
from .paintbox import PopulationParams, parse_weight_model
from .stats import (ParameterError, default_threads, derive_stream, normality_check_casp,
                    splitmix64, tv_distance)

log = logging.getLogger("cannings_asg")

EXIT_OK, EXIT_USAGE, EXIT_PROPERTY, EXIT_DIAGNOSTIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


class PropertyFailure(Exception):
    def __init__(self, message, rows):
        super().__init__(message)
        self.rows = rows


# ---------------------------------------------------------------- helpers

def _population(args) -> PopulationParams:
    if args.n is None:
        raise UsageError("--n is required")
    weights = parse_weight_model(args.weights)
    if args.s is not None and args.s_exponent is not None:
        raise UsageError("give exactly one of --s and --s-exponent")
    if args.s is not None:
        return PopulationParams(args.n, args.s, weights)
    if args.s_exponent is not None:
        return PopulationParams.from_exponent(args.n, args.s_exponent, weights)
    raise UsageError("one of --s or --s-exponent is required")


def _int_list(text):
    return [int(float(v)) for v in str(text).split(",") if v.strip()]


def _float_list(text):
    return [float(v) for v in str(text).split(",") if v.strip()]


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return "" if v is None else str(v)


def render(rows: list[dict], fmt: str) -> str:
    if fmt == "json":
        clean = [{k: (v.item() if isinstance(v, np.generic) else v) for k, v in r.items()}
                 for r in rows]
        return json.dumps(clean, indent=2) + "\n"
    buf = io.StringIO()
    if rows:
        fields = list(rows[0])
        for r in rows[1:]:
            fields += [k for k in r if k not in fields]
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: _fmt(r.get(k)) for k in fields})
    return buf.getvalue()


def emit(rows: list[dict], args) -> None:
    text = render(rows, args.format)
    if args.output in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(args.output).write_text(text)


def _fixation_row(p: PopulationParams, method, est, se, lo, hi, seed, extra=None):
    ref = moran.haldane_approx(p.s, p.rho2)
    row = {"N": p.n_pop, "s": p.s, "b": p.b, "weights": str(p.weights), "rho2": p.rho2,
           "method": method, "estimate": est, "stderr": se, "ci_lo": lo, "ci_hi": hi,
           "haldane_ref": ref, "ratio": est / ref if ref > 0 else math.nan, "seed": seed}
    row.update(extra or {})
    return row


# ---------------------------------------------------------------- commands

def fixation_rows(args, p: PopulationParams | None = None, seed: int | None = None) -> list[dict]:
    p = p or _population(args)
    seed = args.seed if seed is None else seed
    k0 = p.n_pop - 1 if args.k0 is None else args.k0
    t0 = time.perf_counter()
    extra = {}
    if args.mode == "forward":
        r = forward.estimate_fixation_forward(p, k0, args.replicates, args.max_gens, seed,
                                              args.threads)
        extra = {"censored": r.details["censored"], "flag": "unreliable"
                 if r.details["unreliable"] else ""}
        row = _fixation_row(p, "forward", r.point, r.stderr, *r.ci95, seed, extra)
    elif args.mode == "dual":
        cfg = casp.CaspParams(p, args.burn_in, args.thinning, args.samples, args.chains)
        r = casp.estimate_fixation_dual(cfg, seed, args.threads)
        extra = {"flag": "diagnostic" if r.details["flagged"] else ""}
        row = _fixation_row(p, "dual", r.point, r.stderr, *r.ci95, seed, extra)
    elif args.mode == "exact":
        if p.n_pop > exact.MAX_FORWARD_N:
            raise UsageError(f"exact mode needs N <= {exact.MAX_FORWARD_N}")
        try:
            m = exact.forward_transition_matrix(p)
        except ParameterError as exc:
            raise UsageError(f"exact mode unsupported for this model: {exc}") from exc
        v = exact.absorption_probability(m, k0, 0)
        row = _fixation_row(p, "exact", v, 0.0, v, v, seed)
    else:
        gamma = p.rho2 if args.gamma is None else args.gamma
        if p.s <= 0:
            raise UsageError("closed-form mode needs s > 0")
        v = moran.moran_fixation_exact(moran.MoranParams(p.n_pop, p.s, gamma))
        row = _fixation_row(p, "closed-form", v, 0.0, v, v, seed, {"gamma": gamma})
    if args.timing:
        row["wall_time"] = time.perf_counter() - t0
    return [row]


def cmd_fixation(args):
    rows = fixation_rows(args)
    return rows, any(r.get("flag") for r in rows)


def cmd_duality(args):
    p = _population(args)
    n = args.sample if args.sample is not None else 1
    k = args.k if args.k is not None else p.n_pop // 2 or 1
    base = {"N": p.n_pop, "s": p.s, "weights": str(p.weights), "g": args.g}
    if args.kind == "pathwise":
        summ = duality.run_pathwise_checks(p, args.g, args.replicates, args.seed, args.threads)
        rows = [dict(base, kind="pathwise", realizations=summ.realizations,
                     failures=summ.failures)]
        if summ.failures:
            if args.dump:
                summ.failing[0][1].to_json(args.dump)
            raise PropertyFailure("pathwise duality failed", rows)
        return rows, False
    base.update(k=k, sample=n)
    if args.kind == "exact":
        gap = exact.exact_duality_check(p, k, n, args.g)
        return [dict(base, kind="exact", lhs=gap.lhs, rhs=gap.rhs, gap=gap.gap)], False
    fn = duality.sampling_duality_mc if args.kind == "sampling" else duality.moment_duality_mc
    est = fn(p, k, n, args.g, args.replicates, args.seed, args.threads)
    return [dict(base, kind=args.kind, lhs=est.lhs.point, rhs=est.rhs.point,
                 lhs_se=est.lhs.stderr, rhs_se=est.rhs.stderr, combined_se=est.combined_se,
                 gap=abs(est.lhs.point - est.rhs.point), z=est.z_score)], False


def _write_histogram(path, values, counts):
    with open(path, "w") as fh:
        fh.write("value,count\n")
        for v, c in zip(values, counts):
            fh.write(f"{int(v)},{_fmt(c)}\n")


def cmd_equilibrium(args):
    p = _population(args)
    if p.s <= 0:
        raise UsageError("equilibrium needs s > 0")
    pmu = p.s / (p.rho2 / 2 + p.s)
    row = {"target": args.target, "N": p.n_pop, "s": p.s, "weights": str(p.weights),
           "mu_N": p.n_pop * pmu, "sigma_N": math.sqrt(p.n_pop * pmu * (1 - pmu))}
    flagged = False
    if args.target == "casp":
        cfg = casp.CaspParams(p, args.burn_in, args.thinning, args.samples, args.chains)
        smp = casp.sample_equilibrium(cfg, args.seed, args.threads)
        vals, counts = np.unique(smp.values, return_counts=True)
        chk = normality_check_casp(smp.values, p.n_pop, p.s, p.rho2)
        row.update(mean=float(smp.values.mean()), var=float(smp.values.var(ddof=1)),
                   ks_vs_normal=chk.ks, tv_vs_binomial_conditioned=None,
                   flag="diagnostic" if smp.flagged else "")
        flagged = smp.flagged
    else:
        gamma = p.rho2 if args.gamma is None else args.gamma
        mp = moran.MoranParams(p.n_pop, p.s, gamma)
        traj = moran.simulate_masp_embedded(mp, max(1, round(p.n_pop * mp.p_eq)), args.jumps,
                                            derive_stream(args.seed, 0))
        occ = moran.occupation_pmf(traj, mp)
        vals, counts = np.unique(traj, return_counts=True)
        k = np.arange(1, p.n_pop + 1)
        mean = float(occ @ k)
        row.update(mu_N=p.n_pop * mp.p_eq, sigma_N=math.sqrt(p.n_pop * mp.p_eq * (1 - mp.p_eq)),
                   mean=mean, var=float(occ @ k ** 2 - mean ** 2), ks_vs_normal=None,
                   tv_vs_binomial_conditioned=tv_distance(occ, moran.masp_equilibrium_pmf(mp)),
                   gamma=gamma, flag="")
    hist = args.histogram
    if hist is None and args.output not in (None, "-"):
        hist = str(Path(args.output).with_suffix("")) + ".hist.csv"
    if hist:
        _write_histogram(hist, vals, counts)
    return [row], flagged


def cmd_transitions(args):
    p = _population(args)
    k = args.k if args.k is not None else 1
    emp = casp.one_step_pmf_empirical(k, p, args.replicates, derive_stream(args.seed, 0))
    ref = casp.jump_rate_reference(k, p.n_pop, p.s, p.rho2, args.c_err)
    n = args.replicates
    big = float(sum(v for d, v in emp.items() if abs(d) >= 2))
    rows = []
    for name, got, want in (("p_up", emp.get(1, 0.0), ref.p_up),
                            ("p_down", emp.get(-1, 0.0), ref.p_down),
                            ("p_stay", emp.get(0, 0.0), ref.p_stay)):
        se = math.sqrt(max(got * (1 - got), 0.0) / n)
        tol = max(5 * se, ref.error_budget)
        rows.append({"N": p.n_pop, "s": p.s, "k": k, "quantity": name, "empirical": got,
                     "reference": want, "stderr": se, "budget": ref.error_budget,
                     "pass": abs(got - want) <= tol})
    rows.append({"N": p.n_pop, "s": p.s, "k": k, "quantity": "p_jump_ge_2", "empirical": big,
                 "reference": 0.0, "stderr": math.sqrt(big * (1 - big) / n),
                 "budget": ref.error_budget, "pass": big <= ref.error_budget})
    return rows, False


def cmd_conditions(args):
    model = parse_weight_model(args.weights)
    grid = _int_list(args.grid) if args.grid else None
    if not grid:
        raise UsageError("--grid is required")
    rep = paintbox.check_regularity(model, grid, args.k_const, derive_stream(args.seed, 0),
                                    max(args.replicates, 100_000))
    rows = [{"model": rep.model, "N": r.n_pop, "m2_scaled": r.m2_scaled,
             "m3_scaled": r.m3_scaled, "mohle": r.mohle, "h_N": r.h_n, "K": rep.k_const,
             "moment_bound_ok": r.moment_bound_ok, "k_min": r.k_min, "source": r.source}
            for r in rep.rows]
    return rows, False


def _sweep_key(row):
    return (str(int(float(row["N"]))), f"{float(row['b']):.12g}", str(row["weights"]))


def cmd_sweep(args):
    ns = _int_list(args.grid_n) if args.grid_n else []
    bs = _float_list(args.grid_b) if args.grid_b else []
    ws = [w for w in (args.grid_weights or args.weights).split(",") if w]
    if not ns or not bs or not ws:
        raise UsageError("sweep needs nonempty --grid-n, --grid-b and weights")
    points = [(n, b, w) for w in ws for n in ns for b in bs]
    out = None if args.output in (None, "-") else Path(args.output)
    done = set()
    old_rows = []
    if out is not None and out.exists() and out.stat().st_size:
        with open(out) as fh:
            old_rows = list(csv.DictReader(fh))
        done = {_sweep_key(r) for r in old_rows if not r.get("error")}
    todo = [(i, pt) for i, pt in enumerate(points)
            if (str(pt[0]), f"{pt[1]:.12g}", str(parse_weight_model(pt[2]))) not in done]

    def run(idx):
        i, (n, b, w) = todo[idx]
        seed = splitmix64(args.seed ^ splitmix64(i + 1)) >> 1
        try:
            p = PopulationParams.from_exponent(n, b, parse_weight_model(w))
            row = fixation_rows(args, p, seed)[0]
            row["b"] = b
            row["error"] = ""
        except (ParameterError, UsageError) as exc:
            row = {"N": n, "b": b, "weights": w, "error": str(exc)}
        return row

    # grid points run sequentially; each one parallelises its own replicates
    new_rows = [run(i) for i in range(len(todo))]
    if out is None:
        return new_rows, False
    rows = [r for r in old_rows if not r.get("error")] + new_rows
    args._already_written = True
    text = render(rows, "csv")
    out.write_text(text)
    return rows, False


COMMANDS = {"fixation": cmd_fixation, "duality": cmd_duality, "equilibrium": cmd_equilibrium,
            "transitions": cmd_transitions, "conditions": cmd_conditions, "sweep": cmd_sweep}


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file; flags override it")
    common.add_argument("--n", type=int)
    common.add_argument("--s", type=float)
    common.add_argument("--s-exponent", type=float, dest="s_exponent")
    common.add_argument("--weights", default="wf")
    common.add_argument("--gamma", type=float)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--replicates", type=int, default=10_000)
    common.add_argument("--threads", type=int, default=None)
    common.add_argument("--output", "-o")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--strict", action="store_true",
                        help="exit 4 when a diagnostic warning is raised")
    common.add_argument("--timing", action="store_true",
                        help="add a wall_time column (breaks byte reproducibility)")
    common.add_argument("--verbose", "-v", action="store_true")

    chain = argparse.ArgumentParser(add_help=False)
    chain.add_argument("--burn-in", type=int, dest="burn_in")
    chain.add_argument("--thinning", type=int)
    chain.add_argument("--samples", type=int, default=2000)
    chain.add_argument("--chains", type=int, default=1)

    fix = argparse.ArgumentParser(add_help=False)
    fix.add_argument("--mode", choices=("forward", "dual", "exact", "closed-form"), default="dual")
    fix.add_argument("--k0", type=int)
    fix.add_argument("--max-gens", type=int, dest="max_gens")

    parser = argparse.ArgumentParser(prog="cannings-asg", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("fixation", parents=[common, chain, fix], help="fixation probability")
    d = sub.add_parser("duality", parents=[common], help="duality checks")
    d.add_argument("--kind", choices=("pathwise", "sampling", "moment", "exact"), default="exact")
    d.add_argument("--k", type=int)
    d.add_argument("--sample", type=int)
    d.add_argument("--g", type=int, default=1)
    d.add_argument("--dump", help="write the first failing realisation as JSON")
    e = sub.add_parser("equilibrium", parents=[common, chain], help="equilibrium histograms")
    e.add_argument("--target", choices=("casp", "masp"), default="casp")
    e.add_argument("--jumps", type=int, default=1_000_000)
    e.add_argument("--histogram", help="histogram CSV path")
    t = sub.add_parser("transitions", parents=[common], help="one-step CASP transitions")
    t.add_argument("--k", type=int)
    t.add_argument("--c-err", type=float, default=10.0, dest="c_err")
    c = sub.add_parser("conditions", parents=[common], help="paintbox moment conditions")
    c.add_argument("--grid", help="comma-separated N values")
    c.add_argument("--k-const", type=float, default=8.0, dest="k_const")
    sw = sub.add_parser("sweep", parents=[common, chain, fix], help="fixation over a grid")
    sw.add_argument("--grid-n", dest="grid_n")
    sw.add_argument("--grid-b", dest="grid_b")
    sw.add_argument("--grid-weights", dest="grid_weights")
    return parser


def read_config(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"bad config line: {line!r}")
        key, val = (x.strip() for x in line.split("=", 1))
        out[key.replace("-", "_")] = val
    return out


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        cfg = read_config(args.config)
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in sub._actions}
        defaults = {}
        for key, val in cfg.items():
            if key not in known:
                raise UsageError(f"unknown config key {key!r}")
            act = known[key]
            if act.const is True and act.nargs == 0:
                defaults[key] = val.lower() in ("1", "true", "yes")
            else:
                defaults[key] = act.type(val) if act.type else val
        sub.set_defaults(**defaults)
        args = parser.parse_args(argv)
    if args.threads is None:
        args.threads = default_threads()
    return args


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        rows, flagged = COMMANDS[args.command](args)
    except (UsageError, ParameterError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PropertyFailure as exc:
        emit(exc.rows, args)
        print(f"property failure: {exc}", file=sys.stderr)
        return EXIT_PROPERTY
    if not getattr(args, "_already_written", False):
        emit(rows, args)
    if flagged:
        print("warning: equilibrium/censoring diagnostics flagged", file=sys.stderr)
        if args.strict:
            return EXIT_DIAGNOSTIC
    return EXIT_OK
