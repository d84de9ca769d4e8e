"""Command line entry point: ``ldamix <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 numerical check failure, 3 more
than a quarter of the replications failed.
"""

import argparse
import csv
import json
import logging
import math
import os
import sys

import numpy as np

from . import identifiability as ident
from . import inference as inf
from . import validation as val
from .models import MixingMeasure
from .plots import Figure
from .streams import make_rng

EXIT_OK, EXIT_USAGE, EXIT_CHECK, EXIT_DEGRADED = 0, 1, 2, 3
OUT_ENV = "LDAMIX_OUT"

MOMENT_DEFAULTS = {
    "alpha": [0.3, 0.3, 0.4],
    "x": [0.6, 0.7, 0.8],
    "N_max": 5,
    "m_grid": [100, 316, 1000, 3162, 10000],
    "replications": 16,
    "pairs": 100,
    "pairs_N_max": 10,
    "pairs_m": 1000,
    "seed": 20240501,
}

IDENTITY_DEFAULTS = {
    "decomposition": {"K": [1, 2, 3, 4], "N": [1, 2, 3, 4, 5], "samples": 20, "abar_range": [0.1, 10.0]},
    "correspondence": {"K": [1, 2, 3], "V": [2, 3], "N": [1, 2, 3, 4, 5], "abar": [0.3, 1.0, 4.0], "samples": 10},
    "seed": 20240501,
}

TABLE_DEFAULTS = {"restarts": 64, "over_fitted": True, "N_extra": 0, "seed": 20240501, "instances": None}

CONTRACT_DEFAULTS = {
    "runs": [
        {"experiment_id": "exact", "K_fit": 3, "r": 1, "steps": 1200},
        {"experiment_id": "over", "K_fit": 5, "r": 2, "steps": 800},
    ],
}
# Three random topics plus their mean, so four true atoms.
CONTRACT_FULL = {"V": 30, "K0": 3, "dependent_topic": True, "m_grid": [100, 316, 1000, 3162, 10000], "replications": 16}
CONTRACT_FULL_RUNS = [
    {"experiment_id": "exact", "K_fit": 4, "r": 1, "steps": 1200},
    {"experiment_id": "over", "K_fit": 6, "r": 2, "steps": 800},
]
ALLOCATION_FULL = {"V": 30, "K0": 3, "replications": 16}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_config(path):
    if path is None:
        return {}
    try:
        with open(path) as f:
            cfg = json.load(f)
    except (OSError, json.JSONDecodeError) as err:
        raise UsageError(f"cannot read config {path}: {err}")
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    return cfg


def _merge(defaults, overrides):
    out = json.loads(json.dumps(defaults))
    for k, v in overrides.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _out_dir(args):
    out = args.out or os.environ.get(OUT_ENV) or "results"
    os.makedirs(out, exist_ok=True)
    return out


def _write_csv(path, fields, rows):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow({k: _cell(r.get(k)) for k in fields})


def _cell(v):
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return " ".join(_cell(x) for x in v)
    if v is None:
        return ""
    return v


def _nonempty(name, seq):
    if not seq:
        raise UsageError(f"{name} must be nonempty")


def _print_config(cfg):
    print(json.dumps(cfg, indent=2, sort_keys=True))


# moments-validate

def cmd_moments_validate(args):
    cfg = _merge(MOMENT_DEFAULTS, _load_config(args.config))
    if args.seed is not None:
        cfg["seed"] = args.seed
    _nonempty("m_grid", cfg["m_grid"])
    if cfg["N_max"] < 1 or cfg["replications"] < 1:
        raise UsageError("N_max and replications must be positive")
    if args.dry_run:
        _print_config(cfg)
        return EXIT_OK
    out = _out_dir(args)
    alpha = np.asarray(cfg["alpha"], dtype=float)
    x = np.asarray(cfg["x"], dtype=float)
    rows, bad = val.moment_convergence(alpha, x, cfg["N_max"], cfg["m_grid"], cfg["replications"], cfg["seed"])
    failures = [(alpha, x) + b for b in bad]
    if cfg["pairs"]:
        prow, pbad = val.random_moment_pairs(cfg["pairs"], cfg["pairs_N_max"], cfg["pairs_m"], cfg["seed"])
        rows += prow
        failures += pbad
    fields = ["kind", "pair", "N", "m", "theoretical", "contraction", "empirical", "q25", "q75", "se"]
    _write_csv(os.path.join(out, "moments.csv"), fields, [vars(r) for r in rows])

    fig = Figure("Linear moments: Monte Carlo against recursion", "sample size m", "E[(q.x)^N]", logx=True)
    for N in range(1, cfg["N_max"] + 1):
        pts = [(r.m, r.empirical, r.q25, r.q75) for r in rows if r.kind == "convergence" and r.N == N]
        fig.scatter(f"N={N}", pts)
        fig.line("", pts[0][0], _theory(rows, N), pts[-1][0], _theory(rows, N), dashed=True)
    fig.save(os.path.join(out, "moments.svg"))
    rand = [r for r in rows if r.kind == "random"]
    if rand:
        sc = Figure("Random (x, alpha) pairs", "recursive moment", "Monte Carlo estimate")
        sc.scatter("pairs", [(r.theoretical, r.empirical, None, None) for r in rand])
        lo = min(r.theoretical for r in rand)
        hi = max(r.theoretical for r in rand)
        sc.line("", lo, lo, hi, hi, dashed=True)
        sc.save(os.path.join(out, "moments_pairs.svg"))

    for alpha_f, x_f, N, rec, con in failures:
        print(f"mismatch: alpha={list(alpha_f)} x={list(x_f)} N={N} recursion={rec!r} contraction={con!r}")
    print(f"{len(rows)} rows written to {os.path.join(out, 'moments.csv')}; {len(failures)} oracle mismatches")
    return EXIT_CHECK if failures else EXIT_OK


def _theory(rows, N):
    return next(r.theoretical for r in rows if r.kind == "convergence" and r.N == N)


# identity-check

def cmd_identity_check(args):
    cfg = _merge(IDENTITY_DEFAULTS, _load_config(args.config))
    if args.seed is not None:
        cfg["seed"] = args.seed
    d, c = cfg["decomposition"], cfg["correspondence"]
    for name, seq in (("decomposition.K", d["K"]), ("decomposition.N", d["N"]), ("correspondence.K", c["K"]),
                      ("correspondence.V", c["V"]), ("correspondence.N", c["N"]), ("correspondence.abar", c["abar"])):
        _nonempty(name, seq)
    cfg["fuzz"] = args.fuzz
    if args.dry_run:
        _print_config(cfg)
        return EXIT_OK
    out = _out_dir(args)
    cells = val.decomposition_grid(d["K"], d["N"], d["samples"], tuple(d["abar_range"]), cfg["seed"], args.fuzz)
    cells += val.correspondence_grid(c["K"], c["V"], c["N"], c["abar"], c["samples"], cfg["seed"], args.fuzz)
    rows = [dict(vars(cell), ok=cell.ok) for cell in cells]
    _write_csv(os.path.join(out, "identity.csv"), ["check", "K", "V", "N", "abar", "max_rel_error", "ok"], rows)
    for cell in cells:
        print(f"{cell.check:15s} K={cell.K} V={cell.V} N={cell.N} abar={cell.abar:g} max_rel_error={cell.max_rel_error:.3e}")
    worst = max(cells, key=lambda cell: cell.max_rel_error)
    if not worst.ok:
        print(f"FAIL worst cell: {worst.check} K={worst.K} V={worst.V} N={worst.N} abar={worst.abar:g} "
              f"error={worst.max_rel_error:.3e} > {val.IDENTITY_TOL:g}")
        return EXIT_CHECK
    print(f"all {len(cells)} cells within {val.IDENTITY_TOL:g}")
    return EXIT_OK


# identifiability-table

def _instances(cfg):
    if cfg["instances"] is None:
        return ident.table_instances()
    out = []
    for d in cfg["instances"]:
        G0 = MixingMeasure(d["weights"], d["topics"])
        out.append(ident.TableInstance(d["name"], d["condition"], G0, float(d.get("abar", 1.0))))
    return out


def cmd_identifiability_table(args):
    cfg = _merge(TABLE_DEFAULTS, _load_config(args.config))
    if args.seed is not None:
        cfg["seed"] = args.seed
    insts = _instances(cfg)
    _nonempty("instances", insts)
    if args.dry_run:
        _print_config(dict(cfg, instances=[{"name": t.name, "condition": t.condition, "abar": t.abar,
                                             "weights": t.G0.weights.tolist(), "topics": t.G0.atoms.tolist()}
                                            for t in insts]))
        return EXIT_OK
    out = _out_dir(args)
    rows = []
    for inst in insts:
        fits = [(inst.G0.K, inst.bound, "")]
        if cfg["over_fitted"]:
            a, b = inst.over_fitted_bounds(inst.G0.K + 1)
            fits.append((inst.G0.K + 1, max(a, b), f"{a}|{b}"))
        for K_fit, bound, alt in fits:
            for N in range(1, bound + 1 + cfg["N_extra"]):
                rep = ident.identifiability_probe(inst.G0, inst.abar, N, K_fit=K_fit, restarts=cfg["restarts"],
                                                  rng=make_rng(cfg["seed"], "table", inst.name, K_fit, N))
                row = {"instance": inst.name, "condition": inst.condition, "K0": inst.G0.K, "V": inst.G0.V,
                       "abar": inst.abar, "bound": bound, "candidate_bounds": alt, **rep.to_dict()}
                rows.append(row)
                print(f"{inst.name:15s} {rep.setting:15s} N={N} {rep.verdict:21s} residual={rep.best_residual:.2e}")
    fields = ["instance", "condition", "K0", "V", "abar", "setting", "K_fit", "N", "bound", "candidate_bounds",
              "verdict", "restarts", "best_residual", "best_tv", "best_separation"]
    _write_csv(os.path.join(out, "identifiability.csv"), fields, rows)
    with open(os.path.join(out, "identifiability.json"), "w") as f:
        json.dump(rows, f, indent=1, sort_keys=True)
    return EXIT_OK


# contract / allocation

def _fit_line(fig, label, slope, intercept, xs):
    if slope is None:
        return
    lo, hi = min(xs), max(xs)
    fig.line(label, lo, math.exp(intercept) * lo**slope, hi, math.exp(intercept) * hi**slope)


def cmd_contract(args):
    user = _load_config(args.config)
    base = dict(CONTRACT_FULL) if args.paper_scale else {}
    base.update({k: v for k, v in user.items() if k != "runs"})
    runs = user.get("runs", CONTRACT_FULL_RUNS if args.paper_scale else CONTRACT_DEFAULTS["runs"])
    _nonempty("runs", runs)
    cfgs = []
    for run in runs:
        d = dict(base, **run)
        if args.seed is not None:
            d["seed"] = args.seed
        try:
            cfg = inf.ContractionConfig.from_dict(d)
        except TypeError as err:
            raise UsageError(str(err))
        _nonempty("m_grid", cfg.m_grid)
        if cfg.replications < 1:
            raise UsageError("replications must be positive")
        cfgs.append(cfg)
    if args.dry_run:
        _print_config({"runs": [inf.config_dict(c) for c in cfgs], "jobs": args.jobs})
        return EXIT_OK
    out = _out_dir(args)
    rows, slopes, bands = [], [], []
    failed = total = 0
    fig = Figure("Posterior contraction", "number of documents m", "posterior mean W_r", logx=True, logy=True)
    for cfg in cfgs:
        res = inf.contraction_experiment(cfg, jobs=args.jobs)
        rows += res.rows
        failed += res.failures
        total += len(res.rows)
        slopes.append({"experiment_id": cfg.experiment_id, "r": cfg.r, "slope": res.slope,
                       "slope_se": res.slope_se, "intercept": res.intercept})
        b = [dict(x, experiment_id=cfg.experiment_id, r=cfg.r) for x in res.by_m()]
        bands += b
        fig.scatter(f"{cfg.experiment_id} (r={cfg.r})", [(x["m"], x["mean_w"], x["q25"], x["q75"]) for x in b])
        _fit_line(fig, f"slope {res.slope:.3f}" if res.slope is not None else "", res.slope, res.intercept, cfg.m_grid)
        print(f"{cfg.experiment_id}: slope={res.slope} se={res.slope_se} failures={res.failures}/{len(res.rows)}")
    _write_csv(os.path.join(out, "contract.csv"),
               ["experiment_id", "m", "replication", "r", "mean_w", "q25", "q75", "n_samples", "seed"], rows)
    _write_csv(os.path.join(out, "contract_slopes.csv"), ["experiment_id", "r", "slope", "slope_se", "intercept"], slopes)
    _write_csv(os.path.join(out, "contract_bands.csv"), ["experiment_id", "r", "m", "mean_w", "q25", "q75", "n"], bands)
    fig.save(os.path.join(out, "contract.svg"))
    return EXIT_DEGRADED if failed > 0.25 * total else EXIT_OK


def cmd_allocation(args):
    d = dict(ALLOCATION_FULL) if args.paper_scale else {}
    d.update(_load_config(args.config))
    if args.seed is not None:
        d["seed"] = args.seed
    try:
        cfg = inf.AllocationConfig.from_dict(d)
    except TypeError as err:
        raise UsageError(str(err))
    _nonempty("grid", cfg.grid)
    if args.dry_run:
        _print_config(dict(inf.config_dict(cfg), jobs=args.jobs))
        return EXIT_OK
    out = _out_dir(args)
    rows = inf.allocation_experiment(cfg, jobs=args.jobs)
    summary = inf.summarize_allocation(rows, cfg.grid)
    _write_csv(os.path.join(out, "allocation.csv"),
               ["experiment_id", "m", "n_extra", "replication", "error", "n_samples", "seed"], rows)
    _write_csv(os.path.join(out, "allocation_summary.csv"), ["m", "n_extra", "mean_error", "n"], summary)
    fig = Figure("Topic proportions of one document", "number of documents m", "mean posterior error",
                 logx=True, logy=True)
    fig.scatter("mean error", [(s["m"], s["mean_error"], None, None) for s in summary if np.isfinite(s["mean_error"])])
    fig.save(os.path.join(out, "allocation.svg"))
    for s in summary:
        print(f"m={s['m']} n_extra={s['n_extra']} mean_error={s['mean_error']:.4f} ({s['n']} replications)")
    failed = sum(not np.isfinite(r["error"]) for r in rows)
    return EXIT_DEGRADED if failed > 0.25 * len(rows) else EXIT_OK


COMMANDS = {
    "moments-validate": (cmd_moments_validate, "Recursive linear moments against Monte Carlo estimates."),
    "identity-check": (cmd_identity_check, "Moment decomposition and model correspondence identities."),
    "identifiability-table": (cmd_identifiability_table, "Numerical identifiability verdicts by document length."),
    "contract": (cmd_contract, "Posterior contraction experiment with a log-log slope fit."),
    "allocation": (cmd_allocation, "Posterior error of one document's topic proportions."),
}


def build_parser():
    p = _Parser(prog="ldamix", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, (_, help_) in COMMANDS.items():
        s = sub.add_parser(name, help=help_, description=help_)
        s.add_argument("--config", help="JSON file of parameters")
        s.add_argument("--seed", type=int, help="root seed overriding the config")
        s.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./results)")
        s.add_argument("--jobs", type=int, default=1, help="worker processes")
        s.add_argument("--paper-scale", action="store_true", help="use the full-size experiment configuration")
        s.add_argument("--dry-run", action="store_true", help="print the resolved configuration and exit")
        s.add_argument("--fuzz", type=float, default=0.0, help="relative perturbation injected into checks")
        s.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command][0](args)
    except UsageError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
