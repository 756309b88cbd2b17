"""Command line driver: archivable JSON-configured experiment runs.

Every subcommand takes exactly two flags, --config PATH (a single JSON
document; unknown keys are rejected) and --out DIR.  Exit codes: 0 success,
1 runtime abort (simulation blow-up, boundary weights, wealth wipe-out),
2 configuration or input validation error.  SPT_THREADS caps simulation
parallelism; outputs are byte-identical for identical config + seed.
"""
from __future__ import annotations

import argparse
import csv
import json
import re
import sys
from pathlib import Path

import numpy as np

from . import analytics, bounds, markets
from .backtest import CostModel, RebalancePolicy, load_caps_csv, run_backtest
from .generators import generator_from_config
from .rules import make_rule

_RUNTIME_ERRORS = (ValueError, FloatingPointError, ArithmeticError, OverflowError)


class ConfigError(ValueError):
    """Invalid configuration or input data; maps to exit code 2."""


# ---------------------------------------------------------------------------
# config plumbing

_REQUIRED = object()


def _load_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return cfg


def _pop(cfg: dict, key: str, where: str, default=_REQUIRED):
    if key in cfg:
        return cfg.pop(key)
    if default is _REQUIRED:
        raise ConfigError(f"{where}: missing required key {key!r}")
    return default


def _done(cfg: dict, where: str) -> None:
    if cfg:
        raise ConfigError(f"{where}: unknown keys {sorted(cfg)}")


def _config_zone(fn, *args, **kwargs):
    """Run a builder whose failures are configuration errors."""
    try:
        return fn(*args, **kwargs)
    except ConfigError:
        raise
    except _RUNTIME_ERRORS as exc:
        raise ConfigError(str(exc)) from exc


def _build_model(cfg, where: str = "model") -> markets.ItoMarketSpec:
    if not isinstance(cfg, dict):
        raise ConfigError(f"{where}: must be an object")
    cfg = dict(cfg)
    kind = _pop(cfg, "kind", where)
    x0 = _pop(cfg, "x0", where, None)
    if kind == "vsm":
        n = int(_pop(cfg, "n", where))
        alpha = float(_pop(cfg, "alpha", where, 0.0))
        _done(cfg, where)
        return _config_zone(markets.vsm_spec, n, alpha, x0=x0)
    if kind == "gen_vsm":
        n = int(_pop(cfg, "n", where))
        alphas = _pop(cfg, "alphas", where)
        sigma = float(_pop(cfg, "sigma", where, 1.0))
        beta = float(_pop(cfg, "beta", where, 0.5))
        k = _pop(cfg, "k", where, None)
        _done(cfg, where)
        return _config_zone(markets.gen_vsm_spec, n, alphas, sigma=sigma, beta=beta,
                            k=k, x0=x0)
    if kind == "atlas":
        n = int(_pop(cfg, "n", where))
        g = float(_pop(cfg, "g", where))
        sigma = float(_pop(cfg, "sigma", where, 1.0))
        _done(cfg, where)
        return _config_zone(markets.atlas_spec, n, g, sigma, x0=x0)
    if kind == "hybrid_atlas":
        gamma = float(_pop(cfg, "gamma", where))
        gammas = _pop(cfg, "gammas", where)
        gs = _pop(cfg, "gs", where)
        sigmas = _pop(cfg, "sigmas", where)
        rho = _pop(cfg, "rho", where, None)
        _done(cfg, where)
        return _config_zone(markets.hybrid_atlas_spec, gamma, gammas, gs, sigmas,
                            rho=rho, x0=x0)
    if kind == "fkk_diverse":
        n = int(_pop(cfg, "n", where))
        delta = float(_pop(cfg, "delta", where))
        sigma = _pop(cfg, "sigma", where)
        gs = _pop(cfg, "gs", where)
        big_m = float(_pop(cfg, "big_m", where))
        _done(cfg, where)
        return _config_zone(markets.fkk_diverse_spec, n, delta, sigma, gs, big_m, x0=x0)
    if kind == "gbm":
        gammas = _pop(cfg, "gammas", where)
        sigma = _pop(cfg, "sigma", where)
        _done(cfg, where)
        return _config_zone(markets.gbm_spec, gammas, sigma,
                            x0=x0 if x0 is not None else np.ones(len(gammas)))
    raise ConfigError(f"{where}: unknown model kind {kind!r}")


def _build_grid(cfg, where: str = "grid") -> markets.SimGrid:
    if not isinstance(cfg, dict):
        raise ConfigError(f"{where}: must be an object")
    cfg = dict(cfg)
    horizon = float(_pop(cfg, "horizon", where))
    steps = int(_pop(cfg, "steps", where))
    scheme = _pop(cfg, "scheme", where, "euler-log")
    _done(cfg, where)
    return _config_zone(markets.SimGrid, horizon, steps, scheme)


def _load_market_file(file_str, where: str) -> markets.MarketPath:
    path = Path(file_str)
    if not path.exists():
        raise ConfigError(f"{where}: input file not found: {path}")
    with open(path, newline="") as fh:
        first = fh.readline()
    if not first.strip():
        raise ConfigError(f"{where}: {path} is empty")
    head = first.split(",")[0].strip().lower()
    if head == "date":
        return _config_zone(load_caps_csv, path)
    if head == "t":
        return _config_zone(markets.load_path_csv, path)
    raise ConfigError(
        f"{where}: {path} must start with a 'date' or 't' column, got {head!r}"
    )


class _SimulatedSource:
    """Deferred single-path simulation; runs in the runtime error zone."""

    def __init__(self, cfg: dict, where: str):
        cfg = dict(cfg)
        self.spec = _build_model(_pop(cfg, "model", where), f"{where}.model")
        self.grid = _build_grid(_pop(cfg, "grid", where), f"{where}.grid")
        self.seed = int(_pop(cfg, "seed", where))
        self.path_index = int(_pop(cfg, "path_index", where, 0))
        self.backend = _pop(cfg, "backend", where, "auto")
        _done(cfg, where)
        if self.path_index < 0:
            raise ConfigError(f"{where}: path_index must be >= 0")

    def realize(self) -> markets.MarketPath:
        paths = markets.simulate_paths(self.spec, self.grid, self.path_index + 1,
                                       self.seed, backend=self.backend)
        return paths[self.path_index]


def _market_source(value, where: str):
    """File path string -> loaded MarketPath (config zone); object -> deferred sim."""
    if isinstance(value, str):
        return _load_market_file(value, where)
    if isinstance(value, dict):
        return _SimulatedSource(value, where)
    raise ConfigError(f"{where}: expected a file path or a simulation object")


def _realize(source) -> markets.MarketPath:
    return source.realize() if isinstance(source, _SimulatedSource) else source


def _write_json(payload, path: Path) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_csv(path: Path, header: list, columns: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in zip(*columns):
            writer.writerow([repr(float(v)) for v in row])


def _stem(name: str, used: set) -> str:
    base = re.sub(r"[^A-Za-z0-9._-]+", "_", name).strip("_.") or "rule"
    stem, k = base, 2
    while stem in used:
        stem = f"{base}_{k}"
        k += 1
    used.add(stem)
    return stem


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(config: dict, out: Path) -> int:
    cfg = dict(config)
    where = "simulate config"
    spec = _build_model(_pop(cfg, "model", where))
    grid = _build_grid(_pop(cfg, "grid", where))
    n_paths = int(_pop(cfg, "n_paths", where, 1))
    seed = int(_pop(cfg, "seed", where))
    backend = _pop(cfg, "backend", where, "auto")
    _done(cfg, where)
    if n_paths < 1:
        raise ConfigError(f"{where}: n_paths must be >= 1, got {n_paths}")
    if grid.scheme == "exact-log-gbm" and spec.constant is None:
        raise ConfigError(f"{where}: scheme 'exact-log-gbm' needs constant coefficients")

    paths = markets.simulate_paths(spec, grid, n_paths, seed, backend=backend)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    diagnostics = {}
    for path in paths:
        name = f"path_{path.path_index:04d}.csv"
        markets.save_path_csv(path, out / name)
        files.append(name)
        for key, val in path.diagnostics.items():
            if isinstance(val, (int, np.integer)):
                diagnostics[key] = diagnostics.get(key, 0) + int(val)
    _write_json(
        {
            "spec_label": spec.label,
            "scheme": grid.scheme,
            "seed": seed,
            "n_paths": n_paths,
            "files": files,
            "diagnostics": diagnostics,
        },
        out / "manifest.json",
    )
    return 0


def cmd_decompose(config: dict, out: Path) -> int:
    cfg = dict(config)
    where = "decompose config"
    source = _market_source(_pop(cfg, "path", where), f"{where}.path")
    gen_cfg = _pop(cfg, "generator", where, None)
    rule_cfg = _pop(cfg, "rule", where, None)
    lt_method = _pop(cfg, "lt_method", where, "tanaka")
    _done(cfg, where)
    if (gen_cfg is None) == (rule_cfg is None):
        raise ConfigError(f"{where}: exactly one of 'generator' or 'rule' is required")
    gen = _config_zone(generator_from_config, gen_cfg) if gen_cfg is not None else None
    rule = _config_zone(make_rule, rule_cfg) if rule_cfg is not None else None

    path = _realize(source)
    out.mkdir(parents=True, exist_ok=True)
    if gen is not None:
        if gen.ranked:
            ledger = analytics.rank_master_decomposition(gen, path, lt_method=lt_method)
        else:
            ledger = analytics.master_decomposition(gen, path)
        _write_csv(
            out / "decomposition.csv",
            ["t", "lhs", "gterm", "drift_integral", "lt_term", "residual"],
            [ledger.times, ledger.lhs, ledger.gterm, ledger.drift_integral,
             ledger.lt_term, ledger.residual],
        )
        _write_json(ledger.terminal(), out / "terminal.json")
    else:
        pi_rows = rule.weights_path(path.times, path.weights())
        ledger = analytics.palwong_decomposition(path, pi_rows)
        pad = np.concatenate  # per-step arrays start contributing after t_0
        _write_csv(
            out / "palwong.csv",
            ["t", "lhs", "free_energy_cum", "cross_cum"],
            [ledger.times, ledger.lhs,
             pad([[0.0], np.cumsum(ledger.free_energy)]),
             pad([[0.0], np.cumsum(ledger.cross)])],
        )
        _write_json(ledger.terminal(), out / "terminal.json")
    return 0


def cmd_bounds(config: dict, out: Path) -> int:
    cfg = dict(config)
    where = "bounds config"
    entries = _pop(cfg, "bounds", where)
    _done(cfg, where)
    if not isinstance(entries, list) or not entries:
        raise ConfigError(f"{where}: 'bounds' must be a non-empty list")
    results = []
    for idx, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ConfigError(f"{where}: bounds[{idx}] must be an object")
        entry = dict(entry)
        kind = _pop(entry, "kind", f"{where}.bounds[{idx}]")
        try:
            hb = bounds.horizon_bound(kind, **entry)
        except _RUNTIME_ERRORS + (TypeError,) as exc:
            # TypeError covers misspelled or missing bound parameters
            raise ConfigError(f"{where}: bounds[{idx}]: {exc}") from exc
        results.append(hb.to_json())
    out.mkdir(parents=True, exist_ok=True)
    _write_json(results, out / "bounds.json")
    return 0


def cmd_backtest(config: dict, out: Path) -> int:
    cfg = dict(config)
    where = "backtest config"
    source = _market_source(_pop(cfg, "data", where), f"{where}.data")

    rule_cfgs = _pop(cfg, "rules", where, None)
    if rule_cfgs is None:
        rule_cfgs = [_pop(cfg, "rule", where)]
    elif "rule" in cfg:
        raise ConfigError(f"{where}: give either 'rule' or 'rules', not both")
    if not isinstance(rule_cfgs, list) or not rule_cfgs:
        raise ConfigError(f"{where}: 'rules' must be a non-empty list")

    costs_cfg = dict(_pop(cfg, "costs", where, {}))
    costs = _config_zone(
        CostModel,
        rate=float(_pop(costs_cfg, "rate", f"{where}.costs", 0.0)),
        round_trip=bool(_pop(costs_cfg, "round_trip", f"{where}.costs", False)),
    )
    _done(costs_cfg, f"{where}.costs")

    policy_cfg = dict(_pop(cfg, "policy", where, {}))
    pol_where = f"{where}.policy"
    pol_kind = _pop(policy_cfg, "kind", pol_where, "every_k_steps")
    if pol_kind == "every_k_steps":
        policy = _config_zone(RebalancePolicy, kind=pol_kind,
                              k=int(_pop(policy_cfg, "k", pol_where, 1)))
    else:
        policy = _config_zone(
            RebalancePolicy, kind=pol_kind,
            metric=_pop(policy_cfg, "metric", pol_where, "total_variation"),
            band=float(_pop(policy_cfg, "band", pol_where, 0.0)),
        )
    _done(policy_cfg, pol_where)
    _done(cfg, where)

    used: set = set()
    labeled = []
    for idx, rc in enumerate(rule_cfgs):
        if not isinstance(rc, dict):
            raise ConfigError(f"{where}: rules[{idx}] must be an object")
        rc = dict(rc)
        label = rc.pop("label", None)
        rule = _config_zone(make_rule, rc)
        labeled.append((_stem(label or rule.name, used), rule))

    path = _realize(source)
    out.mkdir(parents=True, exist_ok=True)
    summaries = {}
    relative = [("t", path.times)]
    for stem, rule in labeled:
        report = run_backtest(rule, path, costs, policy)
        report.save(out, stem)
        summaries[stem] = report.summary()
        relative.append((stem, report.wealth / report.market_wealth))
    _write_csv(
        out / "relative_wealth.csv",
        [name for name, _ in relative],
        [col for _, col in relative],
    )
    _write_json(summaries, out / "summary.json")
    return 0


def cmd_verify(config: dict, out: Path) -> int:
    cfg = dict(config)
    where = "verify config"
    spec = _build_model(_pop(cfg, "model", where))
    grid = _build_grid(_pop(cfg, "grid", where))
    n_paths = int(_pop(cfg, "n_paths", where, 1))
    seed = int(_pop(cfg, "seed", where))
    backend = _pop(cfg, "backend", where, "auto")
    gen = _config_zone(generator_from_config, _pop(cfg, "generator", where))
    lt_method = _pop(cfg, "lt_method", where, "tanaka")
    floor_cfg = _pop(cfg, "floor", where, 0.0)
    horizon = _pop(cfg, "horizon", where, None)
    _done(cfg, where)
    if n_paths < 1:
        raise ConfigError(f"{where}: n_paths must be >= 1, got {n_paths}")

    if isinstance(floor_cfg, (int, float)) and not isinstance(floor_cfg, bool):
        floor = float(floor_cfg)
        floor_desc = floor
    elif isinstance(floor_cfg, dict):
        fc = dict(floor_cfg)
        fw = f"{where}.floor"
        fkind = _pop(fc, "kind", fw)
        if fkind != "neg_p_nofail":
            raise ConfigError(f"{fw}: unknown floor kind {fkind!r}")
        args = {k: float(_pop(fc, k, fw)) for k in ("p", "eps", "delta")}
        args["n"] = int(_pop(fc, "n", fw))
        _done(fc, fw)
        floor = _config_zone(bounds.neg_p_floor, **args)
        floor_desc = {"kind": fkind, **{k: args[k] for k in sorted(args)}}
    else:
        raise ConfigError(f"{where}: floor must be a number or an object")
    if horizon is not None:
        horizon = float(horizon)
        if horizon > grid.horizon + 1e-12:
            raise ConfigError(
                f"{where}: horizon {horizon:g} exceeds the grid horizon {grid.horizon:g}"
            )

    paths = markets.simulate_paths(spec, grid, n_paths, seed, backend=backend)
    per_path = []
    n_pass = 0
    for path in paths:
        if gen.ranked:
            ledger = analytics.rank_master_decomposition(gen, path, lt_method=lt_method)
        else:
            ledger = analytics.master_decomposition(gen, path)
        check = bounds.pathwise_ra_check(ledger, floor, horizon)
        n_pass += bool(check["terminal_ok"])
        per_path.append(check)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(
        {
            "spec_label": spec.label,
            "generator": gen.name,
            "seed": seed,
            "n_paths": n_paths,
            "floor": floor_desc,
            "horizon": horizon,
            "n_pass": n_pass,
            "pass_rate": n_pass / n_paths,
            "per_path": per_path,
        },
        out / "verify.json",
    )
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "decompose": cmd_decompose,
    "bounds": cmd_bounds,
    "backtest": cmd_backtest,
    "verify": cmd_verify,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sptlab",
        description="Simulate equity market models, decompose portfolio "
        "performance, evaluate arbitrage horizon bounds, and backtest rules.",
        epilog="SPT_THREADS caps simulation parallelism (default 1).",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("simulate", "simulate market model paths to CSV"),
        ("decompose", "decompose a portfolio's log-relative performance"),
        ("bounds", "evaluate relative-arbitrage horizon bounds to JSON"),
        ("backtest", "run portfolio rules over cap data with costs"),
        ("verify", "check pathwise performance floors over an ensemble"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON experiment config")
        p.add_argument("--out", default=".", help="output directory (default: .)")
    args = parser.parse_args(argv)

    try:
        config = _load_json(args.config)
        return _COMMANDS[args.command](config, Path(args.out))
    except ConfigError as exc:
        print(f"sptlab {args.command}: config error: {exc}", file=sys.stderr)
        return 2
    except _RUNTIME_ERRORS as exc:
        print(f"sptlab {args.command}: aborted: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
