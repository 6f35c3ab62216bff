"""Command-line front end.

``cachecascade solve|simulate|compare SCENARIO... [--out DIR]`` and
``cachecascade validate FILE...``.  Exit status: 0 ok, 2 schema error,
3 solver failure, 4 simulation configuration error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import shutil
import sys
import tempfile

import numpy as np

from .cascade import evaluate_tandem
from .che import SolverError
from .miss_stream import NoMissStream, series_terms, write_stats_csv
from .scenario import Scenario, ScenarioError, load_scenario
from .schemas import OutputInvalid, validate_file
from .simulator import SimConfigError, ks_against_density, run_sim

__all__ = ["main", "build_parser"]

log = logging.getLogger("cachecascade")

EXIT_OK, EXIT_SCHEMA, EXIT_SOLVER, EXIT_SIM = 0, 2, 3, 4


def _clean(obj):
    """Round floats to 12 significant digits; non-finite floats become null."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return float(f"{v:.12g}") if math.isfinite(v) else None
    return obj


def _g6(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    return f"{v:.6g}"


class _Staging:
    """Write outputs into a hidden temp dir and move them into place on success."""

    def __init__(self, out):
        self.out = os.path.abspath(out)
        parent = os.path.dirname(self.out) or "."
        os.makedirs(parent, exist_ok=True)
        self.dir = tempfile.mkdtemp(prefix=".cachecascade-", dir=parent)

    def path(self, name):
        full = os.path.join(self.dir, name)
        os.makedirs(os.path.dirname(full), exist_ok=True)
        return full

    def write_json(self, name, doc):
        with open(self.path(name), "w") as fh:
            json.dump(_clean(doc), fh, indent=1, sort_keys=True)
            fh.write("\n")

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None:
            shutil.rmtree(self.dir, ignore_errors=True)
            return False
        if not os.path.exists(self.out):
            os.replace(self.dir, self.out)
            return False
        for root, _, files in os.walk(self.dir):
            rel = os.path.relpath(root, self.dir)
            dest = os.path.normpath(os.path.join(self.out, rel))
            os.makedirs(dest, exist_ok=True)
            for f in files:
                os.replace(os.path.join(root, f), os.path.join(dest, f))
        shutil.rmtree(self.dir, ignore_errors=True)
        return False


# solve -----------------------------------------------------------------------------


def _traced(sc: Scenario):
    return () if sc.simulation is None or sc.simulation.trace == "all" else sc.simulation.trace


def _solve(sc: Scenario, stage: _Staging, prefix=""):
    reports = evaluate_tandem(sc.tandem, sc.numerics)
    levels = []
    for rep in reports:
        doc = rep.to_dict()
        k = rep.level
        doc["table"] = None
        doc["densities"] = []
        doc["max_series_terms"] = None
        if not rep.empty:
            table = f"{prefix}level{k}.csv"
            write_stats_csv(stage.path(table), rep.stats)
            doc["table"] = table
            misses = rep.hit[rep.hit < 1]
            if misses.size and not rep.characteristic.degenerate:
                doc["max_series_terms"] = max(series_terms(float(h), sc.numerics.eps) for h in misses)
            for item in _traced(sc):
                if item not in set(int(i) for i in rep.ids):
                    continue
                try:
                    dens = rep.miss_density(item)
                except NoMissStream:
                    log.info("level %d item %d never misses: no density", k, item)
                    continue
                name = f"{prefix}pdf_L{k}_x{item}.csv"
                dens.to_csv(stage.path(name))
                doc["densities"].append(name)
        levels.append(doc)
    hits = f"{prefix}hits.csv"
    cat = sc.tandem.catalog
    with open(stage.path(hits), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x"] + [f"H_level{r.level}" for r in reports])
        cols = []
        for r in reports:
            m = dict(zip((int(i) for i in r.ids), r.hit))
            cols.append(m)
        for x in cat.ids:
            w.writerow([int(x)] + [_g6(m.get(int(x))) for m in cols])
    numerics = {k: getattr(sc.numerics, k) for k in ("eps", "grid_factor", "solver_tol", "rate_floor")}
    stage.write_json(f"{prefix}solve.json", {"kind": "solve", "scenario": sc.name, "numerics": numerics,
                                             "levels": levels, "hits_table": hits})
    return reports


# simulate --------------------------------------------------------------------------


def _require_sim(sc: Scenario):
    if sc.simulation is None:
        raise SimConfigError(f"{sc.path or sc.name}: scenario has no simulation block")
    return sc.simulation


def _simulate(sc: Scenario, stage: _Staging, prefix=""):
    rep = run_sim(_require_sim(sc))
    doc = {"kind": "simulate", "scenario": sc.name, **rep.to_dict()}
    for tr in doc["traces"]:
        tr["empty"] = tr["samples"] == 0
        if tr["empty"]:
            log.warning("traced item %d has no miss gaps at level %d", tr["item"], tr["level"])
    doc["traces_table"] = None
    if rep.gaps:
        name = f"{prefix}traces.csv"
        with open(stage.path(name), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["level", "item", "gap"])
            for (lvl, item), g in sorted(rep.gaps.items()):
                for v in g:
                    w.writerow([lvl, item, f"{v:.6g}"])
        doc["traces_table"] = name
    stage.write_json(f"{prefix}simulate.json", doc)
    return rep


# compare ---------------------------------------------------------------------------


def _compare(sc: Scenario, stage: _Staging, min_requests: int, prefix=""):
    sim_cfg = _require_sim(sc)
    reports = _solve(sc, stage, prefix)
    sim = _simulate(sc, stage, prefix)
    pos = {int(i): k for k, i in enumerate(sc.tandem.catalog.ids)}
    rows, level_docs, ks = [], [], []
    worst = []
    for rep in reports:
        k = rep.level
        req = sim.requests[k - 1]
        h_sim = sim.item_hit_ratio(k)
        model = dict(zip((int(i) for i in rep.ids), rep.hit))
        deltas = []
        for item, j in pos.items():
            if req[j] == 0:
                continue
            hm = model.get(item, math.nan)
            d = hm - h_sim[j]
            rows.append([k, item, hm, h_sim[j], d, int(req[j])])
            if req[j] >= min_requests and math.isfinite(d):
                deltas.append(abs(d))
        agg_sim = sim.hit_ratio(k)
        agg_d = rep.hit_ratio - agg_sim
        rows.append([k, "aggregate", rep.hit_ratio, agg_sim, agg_d, int(req.sum())])
        item_max = max(deltas) if deltas else math.nan
        worst.extend(deltas)
        level_docs.append({"level": k, "H_model": rep.hit_ratio, "H_sim": agg_sim, "delta": agg_d,
                           "max_abs_item_delta": item_max, "items_compared": len(deltas)})
        rng = np.random.default_rng(sim_cfg.seed + 7919 * k)
        for item in _traced(sc):
            g = sim.gaps.get((k, item), np.zeros(0))
            entry = {"level": k, "item": item, "samples": int(g.size), "statistic": None,
                     "pvalue": None, "below_tc": None}
            if g.size and not rep.empty and item in model:
                try:
                    dens = rep.miss_density(item)
                except NoMissStream:
                    dens = None
                if dens is not None:
                    res = ks_against_density(g, dens, rng)
                    entry.update(statistic=float(res.statistic), pvalue=float(res.pvalue),
                                 below_tc=float(np.mean(g < rep.t_c)))
            ks.append(entry)
    overall = max(worst) if worst else math.nan
    rows.append(["summary", "max_abs_delta", math.nan, math.nan, overall, len(worst)])
    table = f"{prefix}compare.csv"
    with open(stage.path(table), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["level", "item", "H_model", "H_sim", "delta", "sim_requests"])
        for r in rows:
            w.writerow([r[0], r[1], _g6(r[2]), _g6(r[3]), _g6(r[4]), r[5]])
    stage.write_json(f"{prefix}compare.json", {"kind": "compare", "scenario": sc.name, "levels": level_docs,
                                               "max_abs_delta": overall, "ks": ks, "table": table,
                                               "min_requests": min_requests})
    return level_docs


# driver ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    # verbosity flags are accepted before or after the subcommand
    flags = argparse.ArgumentParser(add_help=False)
    flags.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS,
                       help="more logging (repeatable)")
    flags.add_argument("-q", "--quiet", action="store_true", default=argparse.SUPPRESS,
                       help="only report errors")
    p = argparse.ArgumentParser(prog="cachecascade", parents=[flags],
                                description="Analytical and simulated hit ratios of LRU cache tandems.")
    p.set_defaults(verbose=0, quiet=False)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, many=False):
        sp.add_argument("scenario", nargs="+" if many else None, help="scenario YAML file")
        sp.add_argument("-o", "--out", default="out", help="output directory (default: ./out)")
        sp.add_argument("--seed", type=int, default=None, help="override simulation.seed")
        sp.add_argument("--eps", type=float, default=None, help="override numerics.eps")

    common(sub.add_parser("solve", parents=[flags], help="model: t_c, hit ratios, miss-stream tables"))
    common(sub.add_parser("simulate", parents=[flags], help="discrete-event simulation of the tandem"))
    cp = sub.add_parser("compare", parents=[flags], help="model vs simulation; several scenarios give a sweep")
    common(cp, many=True)
    cp.add_argument("--min-requests", type=int, default=1000,
                    help="items need this many simulated requests to enter max |delta| (default 1000)")
    vp = sub.add_parser("validate", parents=[flags],
                        help="check emitted files (or scenario files) against their schema")
    vp.add_argument("files", nargs="+")
    return p


def _load(path, args) -> Scenario:
    sc = load_scenario(path)
    if args.eps is not None and not 0 < args.eps <= 1e-3:
        raise ScenarioError("--eps must lie in (0, 1e-3]", path)
    return sc.with_overrides(seed=args.seed, eps=args.eps)


def _run(args) -> int:
    say = (lambda *a, **k: None) if args.quiet else print
    if args.command == "validate":
        status = EXIT_OK
        for f in args.files:
            try:
                name = validate_file(f)
                say(f"{f}: ok ({name})")
            except (OutputInvalid, OSError) as exc:
                print(f"{f}: INVALID: {exc}", file=sys.stderr)
                status = EXIT_SCHEMA
        return status

    if args.command == "compare":
        scenarios = [_load(p, args) for p in args.scenario]
        names = [s.name for s in scenarios]
        with _Staging(args.out) as stage:
            if len(scenarios) == 1:
                docs = _compare(scenarios[0], stage, args.min_requests)
                for d in docs:
                    say(f"level {d['level']}: H_model={d['H_model']:.6g} H_sim={d['H_sim']:.6g} "
                          f"delta={d['delta']:+.3g}")
            else:
                rows = []
                for i, sc in enumerate(scenarios):
                    tag = sc.name if names.count(sc.name) == 1 else f"{sc.name}-{i + 1}"
                    docs = _compare(sc, stage, args.min_requests, prefix=f"{tag}/")
                    cat = sc.tandem.catalog
                    for d in docs:
                        rows.append([tag, cat.family, cat.cv, d["level"], d["H_model"], d["H_sim"], d["delta"]])
                        say(f"{tag} level {d['level']}: H_model={d['H_model']:.6g} "
                              f"H_sim={d['H_sim']:.6g} delta={d['delta']:+.3g}")
                with open(stage.path("sweep.csv"), "w", newline="") as fh:
                    w = csv.writer(fh)
                    w.writerow(["scenario", "family", "cv", "level", "H_model", "H_sim", "delta"])
                    for r in rows:
                        w.writerow(r[:2] + [_g6(r[2]), r[3]] + [_g6(v) for v in r[4:]])
        return EXIT_OK

    sc = _load(args.scenario, args)
    with _Staging(args.out) as stage:
        if args.command == "solve":
            for rep in _solve(sc, stage):
                if rep.empty:
                    say(f"level {rep.level}: no traffic")
                elif rep.characteristic.degenerate:
                    say(f"level {rep.level}: degenerate (C >= items), all hits")
                else:
                    say(f"level {rep.level}: t_c={rep.t_c:.6g} H={rep.hit_ratio:.6g} "
                          f"H_origin_weighted={rep.hit_ratio_origin:.6g}")
        else:
            rep = _simulate(sc, stage)
            for k in range(1, rep.levels + 1):
                say(f"level {k}: H_sim={rep.hit_ratio(k):.6g} requests={int(rep.requests[k - 1].sum())}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.ERROR if args.quiet else (logging.WARNING, logging.INFO, logging.DEBUG)[min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA
    except SolverError as exc:
        diag = ", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}" for k, v in exc.diagnostics.items())
        print(f"error: solver failed: {exc} ({diag})", file=sys.stderr)
        return EXIT_SOLVER
    except SimConfigError as exc:
        print(f"error: simulation config: {exc}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
