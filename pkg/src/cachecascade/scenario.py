"""Scenario files (YAML, strict schema version 1).

A scenario describes the traffic, the tandem and the numerical and
simulation knobs in one file::

    version: 1
    traffic:
      items: 10000          # or `rates: [...]` / `rates_file: rates.csv`
      alpha: 0.8
      total_rate: 1000.0
      family: exponential   # exponential | hyperexp | lognormal
      cv: 1.0
    caches: [100, 100]
    numerics:               # optional
      eps: 1.0e-6
      grid_factor: 200
      solver_tol: 1.0e-9
      rate_floor: 1.0e-12
    simulation:             # optional, needed by simulate/compare
      seed: 1
      measured: 1000000
      warmup: 100000        # default max(10 * sum(C), 1e5)
      trace: [1, 2]

Unknown keys are rejected.  Errors carry the offending line number.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, replace

import yaml

from .cascade import Numerics, TandemScenario
from .distributions import FAMILIES
from .popularity import build_zipf_catalog, catalog_from_rates, read_rates_csv
from .simulator import SimConfig

__all__ = ["ScenarioError", "Scenario", "load_scenario", "parse_scenario"]


class ScenarioError(ValueError):
    """Schema violation in a scenario file, anchored to a line when known."""

    def __init__(self, message, path=None, line=None):
        self.path, self.line, self.reason = path, line, message
        where = f"{path or '<scenario>'}" + (f":{line}" if line is not None else "")
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class Scenario:
    """Parsed scenario: a tandem, its numerics and an optional simulation."""

    tandem: TandemScenario
    numerics: Numerics
    simulation: SimConfig | None
    name: str
    path: str | None = None
    raw: dict | None = None

    def with_overrides(self, seed=None, eps=None) -> "Scenario":
        out = self
        if eps is not None:
            out = replace(out, numerics=replace(out.numerics, eps=float(eps)))
        if seed is not None and out.simulation is not None:
            out = replace(out, simulation=replace(out.simulation, seed=int(seed)))
        return out


_TRAFFIC = {"items", "alpha", "total_rate", "family", "cv", "rates", "rates_file"}
_NUMERICS = {"eps", "grid_factor", "solver_tol", "rate_floor"}
_SIMULATION = {"seed", "measured", "warmup", "trace"}
_TOP = {"version", "name", "traffic", "caches", "numerics", "simulation"}


_CONSTRUCT = yaml.constructor.SafeConstructor()


_KIND = {int: "an integer", float: "a number", str: "a string"}


class _Reader:
    def __init__(self, path):
        self.path = path

    def fail(self, node, msg):
        line = node.start_mark.line + 1 if node is not None else None
        raise ScenarioError(msg, self.path, line)

    def mapping(self, node, allowed, where):
        if not isinstance(node, yaml.MappingNode):
            self.fail(node, f"{where} must be a mapping")
        out = {}
        for k, v in node.value:
            if not isinstance(k, yaml.ScalarNode):
                self.fail(k, f"{where}: keys must be plain names")
            if k.value not in allowed:
                self.fail(k, f"unknown key '{k.value}' in {where} (allowed: {', '.join(sorted(allowed))})")
            if k.value in out:
                self.fail(k, f"duplicate key '{k.value}' in {where}")
            out[k.value] = v
        return out

    def scalar(self, node, kind, where):
        if not isinstance(node, yaml.ScalarNode):
            self.fail(node, f"{where} must be {_KIND[kind]}")
        value = _CONSTRUCT.construct_object(node)
        if kind is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        if kind is float and isinstance(value, str):
            try:
                return float(value)
            except ValueError:
                pass
        if kind is int and isinstance(value, float) and value.is_integer():
            return int(value)
        if isinstance(value, bool) or not isinstance(value, kind):
            self.fail(node, f"{where} must be {_KIND[kind]}, got {node.value!r}")
        return value

    def sequence(self, node, kind, where):
        if not isinstance(node, yaml.SequenceNode):
            self.fail(node, f"{where} must be a list")
        return [self.scalar(v, kind, f"{where}[{i}]") for i, v in enumerate(node.value)], node.value


def parse_scenario(text: str, path=None) -> Scenario:
    """Parse scenario YAML text (see the module docstring for the schema)."""
    rd = _Reader(path)
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ScenarioError(f"not valid YAML: {getattr(exc, 'problem', exc)}", path,
                            mark.line + 1 if mark else None) from None
    if root is None:
        raise ScenarioError("empty scenario", path, 1)
    top = rd.mapping(root, _TOP, "scenario")
    for req in ("version", "traffic", "caches"):
        if req not in top:
            rd.fail(root, f"missing required key '{req}'")
    if rd.scalar(top["version"], int, "version") != 1:
        rd.fail(top["version"], "only schema version 1 is supported")
    name = rd.scalar(top["name"], str, "name") if "name" in top else \
        (os.path.splitext(os.path.basename(path))[0] if path else "scenario")

    tr = rd.mapping(top["traffic"], _TRAFFIC, "traffic")
    family = rd.scalar(tr["family"], str, "traffic.family") if "family" in tr else "exponential"
    if family not in FAMILIES:
        rd.fail(tr["family"], f"traffic.family must be one of {', '.join(FAMILIES)}")
    cv = rd.scalar(tr["cv"], float, "traffic.cv") if "cv" in tr else 1.0
    sources = [k for k in ("items", "rates", "rates_file") if k in tr]
    if len(sources) != 1:
        rd.fail(top["traffic"], "traffic needs exactly one of items, rates, rates_file")
    try:
        if "items" in tr:
            n = rd.scalar(tr["items"], int, "traffic.items")
            alpha = rd.scalar(tr["alpha"], float, "traffic.alpha") if "alpha" in tr else 0.8
            total = rd.scalar(tr["total_rate"], float, "traffic.total_rate") if "total_rate" in tr else 1000.0
            catalog = build_zipf_catalog(n, alpha, total, family, cv)
        else:
            for k in ("alpha", "total_rate"):
                if k in tr:
                    rd.fail(tr[k], f"traffic.{k} only applies with traffic.items")
            if "rates" in tr:
                rates, _ = rd.sequence(tr["rates"], float, "traffic.rates")
                ids = None
            else:
                fname = rd.scalar(tr["rates_file"], str, "traffic.rates_file")
                if path and not os.path.isabs(fname):
                    fname = os.path.join(os.path.dirname(path), fname)
                try:
                    ids, rates = read_rates_csv(fname)
                except OSError as exc:
                    rd.fail(tr["rates_file"], f"cannot read rates file: {exc.strerror}")
            catalog = catalog_from_rates(rates, family, cv, ids=ids)
    except ScenarioError:
        raise
    except ValueError as exc:
        anchor = tr["cv"] if "cv" in tr and "cv" in str(exc) else top["traffic"]
        rd.fail(anchor, f"traffic: {exc}")

    caps, cap_nodes = rd.sequence(top["caches"], int, "caches")
    if not caps:
        rd.fail(top["caches"], "caches must list at least one capacity")
    for c, node in zip(caps, cap_nodes):
        if c < 1:
            rd.fail(node, f"cache capacity must be >= 1, got {c}")
    tandem = TandemScenario(catalog, tuple(caps))

    numerics = Numerics()
    if "numerics" in top:
        nm = rd.mapping(top["numerics"], _NUMERICS, "numerics")
        kw = {}
        for key, kind in (("eps", float), ("grid_factor", int), ("solver_tol", float), ("rate_floor", float)):
            if key in nm:
                kw[key] = rd.scalar(nm[key], kind, f"numerics.{key}")
        if "eps" in kw and not 0 < kw["eps"] <= 1e-3:
            rd.fail(nm["eps"], "numerics.eps must lie in (0, 1e-3]")
        if "grid_factor" in kw and kw["grid_factor"] < 2:
            rd.fail(nm["grid_factor"], "numerics.grid_factor must be >= 2")
        for key in ("solver_tol", "rate_floor"):
            if key in kw and not kw[key] > 0:
                rd.fail(nm[key], f"numerics.{key} must be > 0")
        numerics = Numerics(**kw)

    sim = None
    if "simulation" in top:
        sm = rd.mapping(top["simulation"], _SIMULATION, "simulation")
        kw = {"scenario": tandem}
        if "seed" in sm:
            kw["seed"] = rd.scalar(sm["seed"], int, "simulation.seed")
        for key in ("measured", "warmup"):
            if key in sm:
                v = rd.scalar(sm[key], int, f"simulation.{key}")
                if v < (1 if key == "measured" else 0):
                    rd.fail(sm[key], f"simulation.{key} must be >= {1 if key == 'measured' else 0}")
                kw[key] = v
        if "trace" in sm:
            items, nodes = rd.sequence(sm["trace"], int, "simulation.trace")
            known = set(int(i) for i in catalog.ids)
            for i, node in zip(items, nodes):
                if i not in known:
                    rd.fail(node, f"traced item {i} is not in the catalog")
            kw["trace"] = tuple(items)
        sim = SimConfig(**kw)
    plain = yaml.safe_load(text)
    return Scenario(tandem, numerics, sim, name, path, plain)


def load_scenario(path) -> Scenario:
    """Read and parse a scenario file."""
    path = os.fspath(path)
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc.strerror}", path) from None
    return parse_scenario(text, path)
