"""Config-driven command line front end.

Each run reads one YAML file, executes one command and writes CSV/JSON
artifacts plus ``manifest.json`` (seed, canonical config, input and output
SHA-256 digests) to the output directory.  Failures write ``error.json``
and exit with a nonzero status.

Commands: ``simulate``, ``estimate``, ``bounds``, ``welfare``, ``swf``.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .bounds import _bound_matrices, envelope_transition_models
from .core import BudgetSet, MMUSpec, default_grid, format_float, jsonable
from .exceptions import ConfigError, WelfareError
from .oracle import SimulatedDataset, UtilitySpec, simulate_cross_section, simulate_panel
from .probability import (MonteCarloRUM, logit_choice_model, nw_choice_estimator,
                          nw_transition_estimator)
from .social import AversionFunction, PopulationSample, swf, swf_difference
from .welfare import (CHANGE_KINDS, LEVEL_KINDS, ConditioningMode, cv_distribution,
                      ev_distribution, level_distribution, mmu_cv_joint, mmu_ev_joint)

COMMANDS = ("simulate", "estimate", "bounds", "welfare", "swf")
SOURCES = ("logit", "monte-carlo", "kernel")
QUANTITIES = ("level", "cv", "ev", "mmu-cv-joint", "mmu-ev-joint")

DEFAULTS = {
    "seed": 0,
    "model": {"source": "logit", "alpha": None, "beta": 1.0, "draws": 1_000_000,
              "data": None, "bandwidth": "rule-of-thumb"},
    "analysis": {"p": None, "p_post": None, "y": None, "family": None,
                 "quantity": "level", "mode": None, "i": None, "j": None, "k": None,
                 "grid_size": 512, "grid": None, "w_grid": None, "z_grid": None,
                 "envelope": False},
    "simulate": {"kind": "cross-section", "count": 10_000, "price_jitter": 0.0,
                 "income_range": None},
    "swf": {"population": None, "aversion": "identity", "aversion_parameter": 1.0,
            "delta_p": None},
}


@dataclass
class RunConfig:
    """Validated run configuration with every default filled in."""

    command: str
    seed: int
    model: dict = field(default_factory=dict)
    analysis: dict = field(default_factory=dict)
    simulate: dict = field(default_factory=dict)
    swf: dict = field(default_factory=dict)
    base_dir: str = "."

    def to_dict(self) -> dict:
        """Canonical form; re-parsing it yields an equal config."""
        return {"command": self.command, "seed": self.seed, "model": self.model,
                "analysis": self.analysis, "simulate": self.simulate, "swf": self.swf}

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def resolve(self, path) -> Path:
        path = Path(path)
        return path if path.is_absolute() else Path(self.base_dir) / path

    @property
    def n(self) -> int:
        return len(self.model["alpha"]) if self.model["alpha"] is not None else len(self.analysis["p"])


def _floats(value, name, errors, *, allow_none=True):
    if value is None:
        if not allow_none:
            errors.append(f"{name}: required")
        return None
    try:
        out = [float(v) for v in value]
    except (TypeError, ValueError):
        errors.append(f"{name}: must be a list of numbers")
        return None
    if not np.all(np.isfinite(out)):
        errors.append(f"{name}: entries must be finite")
    return out


def _increasing(values, name, errors):
    if values is not None and np.any(np.diff(values) <= 0):
        errors.append(f"{name}: grid must be strictly increasing")


def parse_config_dict(raw: dict, base_dir=".") -> RunConfig:
    """Validate a config mapping, reporting every problem at once."""
    errors = []
    if not isinstance(raw, dict):
        raise ConfigError(["config must be a mapping"])
    unknown = set(raw) - {"command", "seed", "model", "analysis", "simulate", "swf"}
    errors.extend(f"{k}: unknown top-level field" for k in sorted(unknown))
    command = raw.get("command")
    if command not in COMMANDS:
        errors.append(f"command: must be one of {', '.join(COMMANDS)} (got {command!r})")
    try:
        seed = int(raw.get("seed", DEFAULTS["seed"]))
        if seed < 0 or seed >= 2 ** 64:
            errors.append("seed: must be an unsigned 64-bit integer")
    except (TypeError, ValueError):
        errors.append("seed: must be an integer")
        seed = 0

    sections = {}
    for name in ("model", "analysis", "simulate", "swf"):
        given = raw.get(name) or {}
        if not isinstance(given, dict):
            errors.append(f"{name}: must be a mapping")
            given = {}
        extra = set(given) - set(DEFAULTS[name])
        errors.extend(f"{name}.{k}: unknown field" for k in sorted(extra))
        merged = copy.deepcopy(DEFAULTS[name])
        merged.update({k: v for k, v in given.items() if k in DEFAULTS[name]})
        sections[name] = merged
    model, analysis, sim, sw = (sections[k] for k in ("model", "analysis", "simulate", "swf"))

    if model["source"] not in SOURCES:
        errors.append(f"model.source: must be one of {', '.join(SOURCES)}")
    model["alpha"] = _floats(model["alpha"], "model.alpha", errors,
                             allow_none=model["source"] == "kernel")
    try:
        model["beta"] = float(model["beta"]) if np.ndim(model["beta"]) == 0 else [float(b) for b in model["beta"]]
        if np.any(np.asarray(model["beta"]) <= 0):
            errors.append("model.beta: must be positive")
    except (TypeError, ValueError):
        errors.append("model.beta: must be a positive number or list")
    try:
        model["draws"] = int(model["draws"])
        if model["draws"] < 1:
            errors.append("model.draws: must be positive")
    except (TypeError, ValueError):
        errors.append("model.draws: must be an integer")
    if model["source"] == "kernel" or command == "estimate":
        if model["data"] is None:
            errors.append("model.data: required for kernel estimation")
        elif not (Path(base_dir) / model["data"]).is_file() and not Path(model["data"]).is_file():
            errors.append(f"model.data: file not found: {model['data']}")

    for key in ("p", "p_post", "grid", "w_grid", "z_grid"):
        analysis[key] = _floats(analysis[key], f"analysis.{key}", errors)
    for key in ("grid", "w_grid", "z_grid"):
        _increasing(analysis[key], f"analysis.{key}", errors)
    if analysis["y"] is not None:
        try:
            analysis["y"] = float(analysis["y"])
        except (TypeError, ValueError):
            errors.append("analysis.y: must be a number")
    needs_prices = command in ("estimate", "bounds", "welfare")
    if needs_prices:
        if analysis["p"] is None:
            errors.append("analysis.p: required")
        if analysis["y"] is None:
            errors.append("analysis.y: required")
    if command in ("bounds",) or (command == "welfare" and analysis["quantity"] != "level"):
        if analysis["p_post"] is None:
            errors.append("analysis.p_post: required")
    try:
        analysis["grid_size"] = int(analysis["grid_size"])
        if analysis["grid_size"] < 2:
            errors.append("analysis.grid_size: must be at least 2")
    except (TypeError, ValueError):
        errors.append("analysis.grid_size: must be an integer")
    if analysis["quantity"] not in QUANTITIES:
        errors.append(f"analysis.quantity: must be one of {', '.join(QUANTITIES)}")
    if analysis["mode"] is None:
        analysis["mode"] = "marginal-at-optimum" if analysis["quantity"] == "level" else "marginal"
    kinds = LEVEL_KINDS if analysis["quantity"] == "level" else CHANGE_KINDS
    if analysis["mode"] not in kinds:
        errors.append(f"analysis.mode: must be one of {', '.join(kinds)} for {analysis['quantity']}")
    for key in ("i", "j", "k"):
        if analysis[key] is not None:
            try:
                analysis[key] = int(analysis[key])
            except (TypeError, ValueError):
                errors.append(f"analysis.{key}: must be an integer")
    fam = analysis["family"]
    if fam is not None:
        if not isinstance(fam, dict) or fam.get("kind", "mmu") != "mmu":
            errors.append("analysis.family: only {kind: mmu, reference_prices: [...]} is supported")
        else:
            fam = {"kind": "mmu", "reference_prices": _floats(
                fam.get("reference_prices"), "analysis.family.reference_prices", errors, allow_none=False)}
            analysis["family"] = fam
    analysis["envelope"] = bool(analysis["envelope"])

    if sim["kind"] not in ("cross-section", "panel"):
        errors.append("simulate.kind: must be cross-section or panel")
    try:
        sim["count"] = int(sim["count"])
        sim["price_jitter"] = float(sim["price_jitter"])
        if sim["count"] < 1 or sim["price_jitter"] < 0:
            errors.append("simulate: count must be positive and price_jitter non-negative")
    except (TypeError, ValueError):
        errors.append("simulate: count and price_jitter must be numbers")
    sim["income_range"] = _floats(sim["income_range"], "simulate.income_range", errors)
    if sim["income_range"] is not None and len(sim["income_range"]) != 2:
        errors.append("simulate.income_range: must have two entries")
    if command == "simulate":
        if analysis["p"] is None:
            errors.append("analysis.p: required")
        if sim["income_range"] is None and analysis["y"] is None:
            errors.append("analysis.y or simulate.income_range: required")
        if sim["kind"] == "panel" and analysis["p_post"] is None:
            errors.append("analysis.p_post: required for panel simulation")
        if model["source"] == "kernel":
            errors.append("model.source: simulation needs a parametric model")

    if sw["aversion"] not in ("identity", "cara"):
        errors.append("swf.aversion: must be identity or cara")
    try:
        sw["aversion_parameter"] = float(sw["aversion_parameter"])
    except (TypeError, ValueError):
        errors.append("swf.aversion_parameter: must be a number")
    sw["delta_p"] = _floats(sw["delta_p"], "swf.delta_p", errors)
    pop = sw["population"]
    if command == "swf":
        if pop is None:
            errors.append("swf.population: required")
        elif isinstance(pop, str):
            if not (Path(base_dir) / pop).is_file() and not Path(pop).is_file():
                errors.append(f"swf.population: file not found: {pop}")
        elif isinstance(pop, dict):
            rows = pop.get("prices")
            if not rows or not all(isinstance(r, (list, tuple)) for r in rows):
                errors.append("swf.population.prices: list of price rows required")
            else:
                pop["prices"] = [_floats(r, "swf.population.prices", errors) for r in rows]
            pop["incomes"] = _floats(pop.get("incomes"), "swf.population.incomes", errors,
                                     allow_none=False)
            pop["weights"] = _floats(pop.get("weights"), "swf.population.weights", errors)
        else:
            errors.append("swf.population: must be a CSV path or a mapping")

    # one dimension across every section
    lengths = {}
    for name, val in (("model.alpha", model["alpha"]), ("analysis.p", analysis["p"]),
                      ("analysis.p_post", analysis["p_post"]), ("swf.delta_p", sw["delta_p"]),
                      ("analysis.family.reference_prices",
                       fam.get("reference_prices") if isinstance(fam, dict) else None)):
        if val is not None:
            lengths[name] = len(val)
    if isinstance(model["beta"], list):
        lengths["model.beta"] = len(model["beta"])
    if isinstance(pop, dict) and pop.get("prices"):
        widths = {len(r) for r in pop["prices"] if r is not None}
        if len(widths) == 1:
            lengths["swf.population.prices"] = widths.pop()
    if len(set(lengths.values())) > 1:
        errors.append("inconsistent number of alternatives: " +
                      ", ".join(f"{k} has {v}" for k, v in lengths.items()))
    n = next(iter(lengths.values()), None)
    if n is not None:
        for key in ("i", "j", "k"):
            v = analysis[key]
            if v is not None and not 0 <= v < n:
                errors.append(f"analysis.{key}: index {v} out of range for {n} alternatives")

    if errors:
        raise ConfigError(errors)
    return RunConfig(command, seed, model, analysis, sim, sw, str(base_dir))


def parse_config(path) -> RunConfig:
    """Read and validate a YAML run configuration."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError([f"cannot read config: {exc}"]) from exc
    except yaml.YAMLError as exc:
        raise ConfigError([f"invalid YAML: {exc}"]) from exc
    return parse_config_dict(raw, base_dir=path.parent)


# ---------------------------------------------------------------------------
# building blocks


def _spec(cfg: RunConfig) -> UtilitySpec:
    return UtilitySpec(n=len(cfg.model["alpha"]), alpha=cfg.model["alpha"], beta=cfg.model["beta"],
                       label="logit")


def _data(cfg: RunConfig) -> SimulatedDataset:
    return SimulatedDataset.from_csv(cfg.resolve(cfg.model["data"]))


def _models(cfg: RunConfig, need_transitions: bool):
    """Choice and (optionally) transition models for the configured source."""
    source = cfg.model["source"]
    if source == "kernel":
        data = _data(cfg)
        trans = None
        if need_transitions:
            if not data.is_panel:
                raise ConfigError(["model.data: transition probabilities need panel data"])
            trans = nw_transition_estimator(data, cfg.model["bandwidth"])
        return nw_choice_estimator(data, cfg.model["bandwidth"]), trans
    engine = MonteCarloRUM(_spec(cfg), cfg.model["draws"], cfg.seed)
    if source == "logit":
        beta = np.asarray(cfg.model["beta"], dtype=float)
        if beta.ndim:
            choice = engine.choice_model()
        else:
            choice = logit_choice_model(cfg.model["alpha"], float(beta))
    else:
        choice = engine.choice_model()
    return choice, (engine.transition_model() if need_transitions else None)


def _family(cfg: RunConfig, prices, income):
    fam = cfg.analysis["family"]
    ref = prices if fam is None else fam["reference_prices"]
    return MMUSpec(np.asarray(ref, dtype=float), float(income)).family()


def _write_csv(path: Path, header, rows):
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_float(v) if isinstance(v, float) else v for v in row])
    return path


def _write_json(path: Path, obj):
    path.write_text(json.dumps(jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def _digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# commands


def _cmd_simulate(cfg: RunConfig, out: Path):
    spec = _spec(cfg)
    a = cfg.analysis
    lo, hi = cfg.simulate["income_range"] or (a["y"], a["y"])
    jitter = cfg.simulate["price_jitter"]
    p = np.asarray(a["p"], dtype=float)
    count = cfg.simulate["count"]
    if cfg.simulate["kind"] == "panel":
        def y_sampler(rng, m):
            return rng.uniform(lo, hi, size=m)
        data = simulate_panel(spec, p, np.asarray(a["p_post"], dtype=float), y_sampler, count,
                              cfg.seed, price_jitter=jitter)
    else:
        def budgets(rng, m):
            prices = p + rng.uniform(-jitter, jitter, size=(m, p.size))
            return prices, rng.uniform(lo, hi, size=m)
        data = simulate_cross_section(spec, budgets, count, cfg.seed)
    return [data.to_csv(out / "data.csv")]


def _cmd_estimate(cfg: RunConfig, out: Path):
    data = _data(cfg)
    a = cfg.analysis
    choice = nw_choice_estimator(data, cfg.model["bandwidth"])
    queries = [("p", a["p"])] + ([("p_post", a["p_post"])] if a["p_post"] is not None else [])
    n = data.n
    rows = []
    for label, q in queries:
        probs = choice(np.asarray(q, dtype=float), a["y"])
        rows.append([label] + [float(v) for v in q] + [float(a["y"])] + [float(v) for v in probs])
    outputs = [_write_csv(out / "choice_probabilities.csv",
                          ["query"] + [f"p_{c}" for c in range(n)] + ["y"] +
                          [f"P_{c}" for c in range(n)], rows)]
    meta = {"choice": choice.metadata}
    if data.is_panel and a["p_post"] is not None:
        trans = nw_transition_estimator(data, cfg.model["bandwidth"])
        mat = trans(np.asarray(a["p"], dtype=float), np.asarray(a["p_post"], dtype=float), a["y"])
        outputs.append(_write_csv(out / "transition_probabilities.csv", ["i", "j", "value"],
                                  [[i, j, float(mat[i, j])] for i in range(n) for j in range(n)]))
        meta["transition"] = trans.metadata
    outputs.append(_write_json(out / "model.json", meta))
    return outputs


def _cmd_bounds(cfg: RunConfig, out: Path):
    a = cfg.analysis
    choice, _ = _models(cfg, need_transitions=False)
    p = np.asarray(a["p"], dtype=float)
    pp = np.asarray(a["p_post"], dtype=float)
    lower, upper = _bound_matrices(choice, p, pp, a["y"])
    n = p.size
    rows = [[i, j, float(lower[0, i, j]), float(upper[0, i, j])] for i in range(n) for j in range(n)]
    return [_write_csv(out / "bounds.csv", ["i", "j", "lower", "upper"], rows)]


def _curve(cfg: RunConfig, choice, trans):
    a = cfg.analysis
    p = np.asarray(a["p"], dtype=float)
    y = a["y"]
    mode = ConditioningMode(a["mode"], i=a["i"], j=a["j"])
    q = a["quantity"]
    if q == "level":
        pp = np.asarray(a["p_post"], dtype=float) if a["p_post"] is not None else None
        return level_distribution(_family(cfg, p, y), p, y, mode, k=a["k"], p_post=pp,
                                  choice=choice, trans=trans, grid=a["grid"],
                                  grid_size=a["grid_size"])
    fn = cv_distribution if q == "cv" else ev_distribution
    return fn(p, np.asarray(a["p_post"], dtype=float), y, mode, choice=choice, trans=trans,
              grid=a["grid"], grid_size=a["grid_size"])


def _needs_transitions(a) -> bool:
    if a["quantity"] == "level":
        return a["mode"] in ("joint", "conditional-on-post")
    if a["quantity"] in ("mmu-cv-joint", "mmu-ev-joint"):
        return a["mode"] != "marginal"
    simple = {"cv": ("marginal", "conditional-on-pre"), "ev": ("marginal", "conditional-on-post")}
    return a["mode"] not in simple[a["quantity"]]


def _cmd_welfare(cfg: RunConfig, out: Path):
    a = cfg.analysis
    need = _needs_transitions(a)
    choice, trans = _models(cfg, need_transitions=need)
    if a["quantity"] in ("mmu-cv-joint", "mmu-ev-joint"):
        p = np.asarray(a["p"], dtype=float)
        pp = np.asarray(a["p_post"], dtype=float)
        y = a["y"]
        w_grid = a["w_grid"] or default_grid(y - float(np.max(np.abs(p - pp))) - 1.0, y + 1.0, 16).tolist()
        z_grid = a["z_grid"] or default_grid(float(np.min(p - pp)), float(np.max(p - pp)), 16).tolist()
        mode = ConditioningMode(a["mode"], i=a["i"], j=a["j"])
        if a["quantity"] == "mmu-cv-joint":
            res = mmu_cv_joint(trans, p, pp, y, mode, w_grid, z_grid, choice=choice)
        else:
            res = mmu_ev_joint(trans, p, pp, y, w_grid, z_grid, mode, choice=choice)
        path = res.to_csv(out / "joint.csv")
        return [path, path.with_suffix(".json")]
    if a["envelope"]:
        if not need:
            raise ConfigError(["analysis.envelope: this mode needs no transition probabilities"])
        lower, upper = envelope_transition_models(choice)
        outputs = []
        for tag, model in (("lower", lower), ("upper", upper)):
            curve = _curve(cfg, choice, model)
            path = curve.to_csv(out / f"curve_{tag}.csv", header="w" if a["quantity"] == "level" else "z")
            outputs += [path, path.with_suffix(".json")]
        return outputs
    curve = _curve(cfg, choice, trans)
    path = curve.to_csv(out / "curve.csv", header="w" if a["quantity"] == "level" else "z")
    return [path, path.with_suffix(".json")]


def _population(cfg: RunConfig) -> PopulationSample:
    pop = cfg.swf["population"]
    if isinstance(pop, str):
        return PopulationSample.from_csv(cfg.resolve(pop))
    return PopulationSample.from_arrays(pop["prices"], pop["incomes"], pop.get("weights"))


def _cmd_swf(cfg: RunConfig, out: Path):
    population = _population(cfg)
    if cfg.model["source"] != "kernel" and population.n != len(cfg.model["alpha"]):
        raise ConfigError(["swf.population: width does not match model.alpha"])
    choice, _ = _models(cfg, need_transitions=False)
    aversion = (AversionFunction.identity() if cfg.swf["aversion"] == "identity"
                else AversionFunction.cara(cfg.swf["aversion_parameter"]))
    fam = cfg.analysis["family"]

    def family(b: BudgetSet):
        ref = b.prices if fam is None else fam["reference_prices"]
        return MMUSpec(np.asarray(ref, dtype=float), b.income).family()

    total, contributions = swf(choice, family, aversion, population,
                               grid_size=cfg.analysis["grid_size"], full_output=True)
    result = {"swf": total, "per_member_contributions": contributions.tolist()}
    if cfg.swf["delta_p"] is not None:
        result["swf_difference"] = swf_difference(choice, family, aversion, population,
                                                  cfg.swf["delta_p"],
                                                  grid_size=cfg.analysis["grid_size"])
    return [_write_json(out / "swf.json", result)]


_HANDLERS = {"simulate": _cmd_simulate, "estimate": _cmd_estimate, "bounds": _cmd_bounds,
             "welfare": _cmd_welfare, "swf": _cmd_swf}


def _inputs(cfg: RunConfig):
    paths = []
    if cfg.model["data"] is not None:
        paths.append(cfg.resolve(cfg.model["data"]))
    if isinstance(cfg.swf["population"], str):
        paths.append(cfg.resolve(cfg.swf["population"]))
    return {str(p): _digest(p) for p in paths if p.is_file()}


def run(cfg: RunConfig, out) -> int:
    """Execute ``cfg`` writing artifacts to ``out``; returns the exit status."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            outputs = _HANDLERS[cfg.command](cfg, out)
    except (WelfareError, ValueError) as exc:
        write_error(out, exc)
        return 1
    manifest = {
        "command": cfg.command,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "inputs": _inputs(cfg),
        "outputs": {Path(p).name: _digest(p) for p in outputs},
        "warnings": sorted({f"{w.category.__name__}: {w.message}" for w in caught}),
    }
    _write_json(out / "manifest.json", manifest)
    return 0


def write_error(out: Path, exc: Exception):
    record = {"error": type(exc).__name__, "message": str(exc),
              "errors": list(getattr(exc, "errors", [str(exc)]))}
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "error.json", record)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dcwelfare",
                                     description="Welfare distributions for discrete-choice models.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="YAML run configuration")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out", default="out", help="output directory")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = Path(args.out)
    try:
        path = Path(args.config)
        raw = yaml.safe_load(path.read_text()) if path.is_file() else None
        if raw is None:
            raise ConfigError([f"cannot read config: {args.config}"])
        if not isinstance(raw, dict):
            raise ConfigError(["config must be a mapping"])
        raw.setdefault("command", args.command)
        if raw["command"] != args.command:
            raise ConfigError([f"command: config says {raw['command']!r} but {args.command!r} was requested"])
        if args.seed is not None:
            raw["seed"] = args.seed
        cfg = parse_config_dict(raw, base_dir=path.parent)
    except (ConfigError, yaml.YAMLError) as exc:
        write_error(out, exc)
        print(f"error: {exc}", file=sys.stderr)
        return 2
    status = run(cfg, out)
    if status:
        print(f"error: see {out / 'error.json'}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
