"""Command-line front end.

Every subcommand reads an optional YAML config, applies flag overrides,
runs with per-replicate streams derived from ``--seed`` and writes a CSV
(data, long format) and a JSON summary into ``--out``.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import platform
import sys
from dataclasses import asdict
from functools import partial
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .analysis import (ExponentialRegime, MixtureRegime, TwoPointRegime, check_limit_condition,
                       cN_asymptote, construct_mixture_wake_law, coupling_condition_holds,
                       merger_size_histogram, polya_same_color_prob, tail_exact_exponential,
                       tail_monte_carlo_exponential)
from .coalescent import RatesTable, first_merger_size_law, simulate_lambda_coalescent
from .core import (Degenerate, EtaMixture, ExponentialTail, LambdaMeasure, Mixture, ModelConfig,
                   SeedSpec, TwoPoint, derive_stream, replicate_map)
from .forward import step_generation
from .genealogy import ENGINES, estimate_cN, run_ancestral_process

SCHEMA_VERSION = 1
COMMANDS = ("forward", "genealogy", "coalescent", "verify", "construct")


class UsageError(Exception):
    pass


class ConfigError(ValueError):
    def __init__(self, path: str, msg: str):
        super().__init__(f"config error at {path or '<root>'}: {msg}")
        self.path = path


# ---------------------------------------------------------------------------
# Config parsing
# ---------------------------------------------------------------------------


def _get(d: dict, key: str, path: str, kind=float, default=...):
    if not isinstance(d, dict):
        raise ConfigError(path, "expected a mapping")
    p = f"{path}.{key}" if path else key
    if key not in d:
        if default is ...:
            raise ConfigError(p, "missing required field")
        return default
    v = d[key]
    try:
        if kind is int:
            if isinstance(v, bool) or (isinstance(v, float) and not v.is_integer()):
                raise TypeError
            return int(v)
        if kind is float:
            if isinstance(v, bool):
                raise TypeError
            return float(v)
        if kind is bool:
            if not isinstance(v, bool):
                raise TypeError
            return v
        if kind is list:
            if not isinstance(v, list):
                raise TypeError
            return v
        if kind is dict:
            if not isinstance(v, dict):
                raise TypeError
            return v
        return kind(v)
    except (TypeError, ValueError):
        raise ConfigError(p, f"expected {kind.__name__}, got {v!r}") from None


def _float_list(d, key, path, default=...):
    v = _get(d, key, path, list, default)
    p = f"{path}.{key}"
    try:
        return [float(x) for x in v]
    except (TypeError, ValueError):
        raise ConfigError(p, "expected a list of numbers") from None


def _int_list(d, key, path, default=...):
    return [int(x) for x in _float_list(d, key, path, default)]


def _pairs(v, path):
    try:
        return tuple((float(a), float(b)) for a, b in v)
    except (TypeError, ValueError):
        raise ConfigError(path, "expected a list of [value, weight] pairs") from None


def parse_wake(d: dict, path: str):
    kind = _get(d, "type", path, str)
    try:
        if kind == "two_point":
            return TwoPoint(_get(d, "omega", path), _get(d, "late_time", path))
        if kind == "exponential":
            return ExponentialTail(_get(d, "gamma", path), _get(d, "c", path, default=1.0),
                                   _get(d, "truncate_at", path))
        if kind == "mixture":
            return Mixture(_pairs(_get(d, "atoms", path, list), f"{path}.atoms"), _get(d, "horizon", path))
        if kind == "degenerate":
            return Degenerate(_get(d, "time", path))
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(path, str(e)) from None
    raise ConfigError(f"{path}.type", f"unknown wake law {kind!r}")


def parse_regime(d: dict, path: str):
    kind = _get(d, "type", path, str)
    try:
        if kind == "two_point":
            return TwoPointRegime(_get(d, "beta", path), _get(d, "kappa", path, default=1.0),
                                  _get(d, "omega_scale", path, default=1.0),
                                  _get(d, "omega_power", path, default=2.0))
        if kind == "exponential":
            return ExponentialRegime(_get(d, "a", path), _get(d, "c", path, default=1.0),
                                     _get(d, "lam", path, default=1.0), _get(d, "T_power", path, default=2.0))
        if kind == "mixture":
            return MixtureRegime(_pairs(_get(d, "eta", path, list, []), f"{path}.eta"),
                                 _get(d, "a1", path, default=0.0), _get(d, "a2", path, default=0.0),
                                 _get(d, "r", path, default=0.25))
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(path, str(e)) from None
    raise ConfigError(f"{path}.type", f"unknown regime {kind!r}")


def parse_model(cfg: dict):
    """``model`` (explicit) or ``regime`` plus ``N`` and optional ``summer``."""
    if "model" in cfg:
        m = _get(cfg, "model", "", dict)
        try:
            return ModelConfig(_get(m, "N", "model", int), _get(m, "lam", "model"),
                               _get(m, "t_spring", "model"), _get(m, "t_total", "model"),
                               parse_wake(_get(m, "wake", "model", dict), "model.wake"))
        except ValueError as e:
            if isinstance(e, ConfigError):
                raise
            raise ConfigError("model", str(e)) from None
    if "regime" in cfg:
        reg = parse_regime(_get(cfg, "regime", "", dict), "regime")
        N = _get(cfg, "N", "", int)
        try:
            if isinstance(reg, MixtureRegime):
                return reg.config(N)
            return reg.config(N, summer=_get(cfg, "summer", "", float, 0.0))
        except ValueError as e:
            raise ConfigError("regime", str(e)) from None
    raise ConfigError("model", "need either 'model' or 'regime'")


def parse_measure(d: dict, path: str) -> LambdaMeasure:
    kind = _get(d, "type", path, str)
    try:
        if kind == "kingman":
            return LambdaMeasure.kingman()
        if kind == "star":
            return LambdaMeasure.star()
        if kind == "beta":
            return LambdaMeasure.beta(_get(d, "a", path))
        if kind == "kappa":
            return LambdaMeasure.kappa(_get(d, "kappa", path), _get(d, "normalized", path, bool, True))
        if kind == "mixture":
            eta = _pairs(_get(d, "eta", path, list, []), f"{path}.eta")
            return LambdaMeasure(_get(d, "a0", path, default=0.0), _get(d, "a1", path, default=0.0),
                                 EtaMixture(eta) if eta else None)
    except ValueError as e:
        if isinstance(e, ConfigError):
            raise
        raise ConfigError(path, str(e)) from None
    raise ConfigError(f"{path}.type", f"unknown measure {kind!r}")


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return v


def write_csv(path: Path, header: list[str], rows, command: str, cfg: dict, seed: int):
    buf = io.StringIO()
    buf.write(f"# schema_version: {SCHEMA_VERSION}\n")
    buf.write(f"# command: {command}\n")
    buf.write(f"# config_sha256: {config_hash(cfg)}\n")
    buf.write(f"# master_seed: {seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    path.write_text(buf.getvalue())


def write_json(path: Path, command: str, cfg: dict, seed: int, results: dict, criteria: dict):
    doc = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "config": cfg,
        "config_sha256": config_hash(cfg),
        "master_seed": seed,
        "versions": {"dormcoal": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "results": results,
        "criteria": criteria,
        "all_pass": all(c["pass"] for c in criteria.values()) if criteria else None,
    }
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


def _clean(x):
    x = float(x)
    return None if math.isnan(x) else x


# ---------------------------------------------------------------------------
# Jobs (module level so they pickle for the process pool)
# ---------------------------------------------------------------------------


def _forward_job(i, config, seed):
    rec = step_generation(config, derive_stream(SeedSpec(seed, i)))
    nu = np.asarray(rec.x_total.nu, dtype=float)
    N = config.N
    pair = float(np.sum(nu * (nu - 1)) / (N * (N - 1))) if N > 1 else 0.0
    return (i, rec.x_spring.total, rec.x_total.total, int(rec.x_spring.x.max()),
            int(nu.max()), int(np.sum(nu == 0)), pair)


def _genealogy_job(i, config, seed, n, horizon, engine):
    t = run_ancestral_process(n, config, horizon, derive_stream(SeedSpec(seed, i)), engine=engine)
    events = [(len(p), day, sizes) for (_, p), (day, sizes) in zip(t.events[:-1], t.merger_log)]
    return i, t.days, t.absorbed, events


def _coalescent_job(i, measure, seed, n):
    t = simulate_lambda_coalescent(measure, n, derive_stream(SeedSpec(seed, i)))
    return i, [(time, len(p)) for time, p in t.events], t.absorbed


def _verify_job(item, seed):
    idx, check = item
    return idx, run_check(check, derive_stream(SeedSpec(seed, idx)))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_forward(cfg, seed, reps, workers):
    config = parse_model(cfg)
    res = replicate_map(partial(_forward_job, config=config, seed=seed), list(range(reps)), workers)
    header = ["generation", "total_spring", "total_end", "max_family_spring", "max_survivors",
              "extinct_families", "pair_same_parent"]
    pair = np.array([r[-1] for r in res])
    summary = {"generations": reps, "mean_pair_same_parent": float(pair.mean()),
               "stderr": float(pair.std(ddof=1) / math.sqrt(reps)) if reps > 1 else 0.0}
    return header, res, summary, {}


def cmd_genealogy(cfg, seed, reps, workers):
    config = parse_model(cfg)
    n = _get(cfg, "sample_size", "", int, 10)
    if not 1 <= n <= config.N:
        raise ConfigError("sample_size", f"need 1 <= sample_size <= N = {config.N}")
    horizon = _get(cfg, "horizon", "", int, 10**12)
    engine = _get(cfg, "engine", "", str, "auto")
    if engine not in ENGINES:
        raise ConfigError("engine", f"must be one of {ENGINES}")
    cn_reps = _get(cfg, "cn_replicates", "", int, 10**5)
    # c_N uses a stream index no trajectory uses
    cn = estimate_cN(config, cn_reps, derive_stream(SeedSpec(seed, 2**32)))
    job = partial(_genealogy_job, config=config, seed=seed, n=n, horizon=horizon, engine=engine)
    res = replicate_map(job, list(range(reps)), workers)
    rows = []
    hist = np.zeros(max(n - 1, 1), dtype=np.int64)
    for i, days, absorbed, events in res:
        for b, day, sizes in events:
            rows.append((i, day, day * cn.point, b, ";".join(map(str, sizes))))
            for k in sizes:
                hist[k - 2] += 1
    header = ["replicate", "day", "scaled_time", "blocks_before", "merger_sizes"]
    absorbed = [r[2] for r in res]
    summary = {"cN": asdict(cn), "trajectories": reps, "absorbed_fraction": float(np.mean(absorbed)),
               "merger_size_histogram": {str(k + 2): int(c) for k, c in enumerate(hist)}}
    return header, rows, summary, {}


def cmd_coalescent(cfg, seed, reps, workers):
    measure = parse_measure(_get(cfg, "measure", "", dict), "measure")
    n = _get(cfg, "sample_size", "", int, 10)
    b_max = _get(cfg, "b_max", "", int, max(n, 2))
    table = RatesTable.build(measure, b_max)
    rows = [("rate", b, k, "", table[b, k], table.method[b, k])
            for b in range(2, b_max + 1) for k in range(2, b + 1)]
    for b in range(2, b_max + 1):
        try:
            law = first_merger_size_law(measure, b)
        except ValueError:
            continue
        rows += [("first_merger_pmf", b, k, "", float(law[k - 2]), "") for k in range(2, b + 1)]
    res = replicate_map(partial(_coalescent_job, measure=measure, seed=seed, n=n), list(range(reps)), workers)
    for i, events, _ in res:
        rows += [("trajectory", blocks, "", i, t, "") for t, blocks in events]
    header = ["kind", "b", "k", "replicate", "value", "method"]
    times = [ev[-1][0] for _, ev, ab in res if ab]
    resid = table.consistency_residuals()
    summary = {"b_max": b_max, "max_consistency_residual": float(np.abs(resid).max()) if resid.size else 0.0,
               "mean_absorption_time": float(np.mean(times)) if times else None}
    criteria = {"consistency": {"pass": bool(resid.size == 0 or np.abs(resid).max() <= 1e-8),
                                "value": summary["max_consistency_residual"], "threshold": 1e-8}}
    return header, rows, summary, criteria


def run_check(check: dict, stream):
    """Run one verify check; returns ``(rows, summary, criteria)``."""
    kind = check["kind"]
    name = check.get("name", kind)
    if kind == "limit_condition":
        reg = check["regime_obj"]
        rep = check_limit_condition(reg.config, reg.target(), check["x_grid"], check["N_sweep"],
                                    check["replicates"], stream)
        rows = [(name,) + tuple(r) for r in rep.rows()]
        zmax = float(np.nanmax(np.abs(rep.z))) if np.isfinite(rep.z).any() else math.nan
        crit = {f"{name}:z": {"pass": bool(zmax <= 3), "value": _clean(zmax), "threshold": 3.0}}
        return rows, {"max_abs_z": _clean(zmax), "feasible": rep.feasible.tolist()}, crit
    if kind == "cN_sweep":
        reg = check["regime_obj"]
        rows, ratios = [], []
        for N in check["N_sweep"]:
            est = estimate_cN(reg.config(N), check["replicates"], stream)
            pred = cN_asymptote(reg, N)
            ratios.append(est.point / pred)
            rows += [(name, N, "", "cN", est.point), (name, N, "", "cN_se", est.stderr),
                     (name, N, "", "asymptote", pred), (name, N, "", "ratio", est.point / pred)]
        lo, hi = check.get("ratio_band", (0.9, 1.1))
        ok = lo <= ratios[-1] <= hi
        return rows, {"ratios": ratios}, {f"{name}:ratio": {"pass": bool(ok), "value": ratios[-1],
                                                              "threshold": [lo, hi]}}
    if kind == "tail":
        a, ks = check["a"], check["ks"]
        est, se = tail_monte_carlo_exponential(a, ks, check["draws"], stream)
        exact = tail_exact_exponential(a, ks)
        z = (est - exact) / np.where(se > 0, se, np.inf)
        rows = []
        for k, e, s, x, zz in zip(ks, est, se, np.atleast_1d(exact), z):
            rows += [(name, "", k, "mc", e), (name, "", k, "mc_se", s), (name, "", k, "exact", x),
                     (name, "", k, "z", zz)]
        ok = bool(np.all(np.abs(z) <= 3))
        return rows, {"max_abs_z": float(np.max(np.abs(z)))}, {f"{name}:z": {"pass": ok, "value": float(np.max(np.abs(z))), "threshold": 3.0}}
    if kind == "polya":
        r = polya_same_color_prob(check["M"], check["final_total"], check["replicates"], stream)
        ok = r.estimate <= r.bound + 3 * r.stderr
        rows = [(name, "", "", "estimate", r.estimate), (name, "", "", "stderr", r.stderr),
                (name, "", "", "bound", r.bound), (name, "", "", "exact", r.exact)]
        return rows, {"margin": r.margin}, {f"{name}:bound": {"pass": bool(ok), "value": r.estimate, "threshold": r.bound}}
    if kind == "coupling":
        T_power = check.get("T_power", 2.0)
        rep = coupling_condition_holds(check["gamma"], check["c"], lambda N: math.log(N) ** T_power,
                                       check["r"], check["N_sweep"])
        rows = []
        for N, lv, lr in zip(rep.N_values, rep.log_values, rep.logN_over_T):
            rows += [(name, N, "", "log_value", lv), (name, N, "", "logN_over_T", lr)]
        return rows, {"holds": rep.holds, "logN_over_T_to_zero": rep.log_ratio_to_zero}, {
            f"{name}:holds": {"pass": bool(rep.holds), "value": rep.log_values[-1], "threshold": None}}
    raise ValueError(f"unknown check kind {kind!r}")


def _parse_check(c, path, default_reps):
    kind = _get(c, "kind", path, str)
    out = {"kind": kind, "name": _get(c, "name", path, str, f"{kind}{path[path.rfind('['):]}")}
    if kind in ("limit_condition", "cN_sweep"):
        out["regime_obj"] = parse_regime(_get(c, "regime", path, dict), f"{path}.regime")
        out["N_sweep"] = _int_list(c, "N_sweep", path)
        out["replicates"] = _get(c, "replicates", path, int, default_reps)
        if kind == "limit_condition":
            out["x_grid"] = _float_list(c, "x_grid", path, [0.2, 0.4, 0.6, 0.8])
            if any(not 0 < x < 1 for x in out["x_grid"]):
                raise ConfigError(f"{path}.x_grid", "points must lie in (0, 1)")
        else:
            out["ratio_band"] = tuple(_float_list(c, "ratio_band", path, [0.9, 1.1]))
    elif kind == "tail":
        out.update(a=_get(c, "a", path), ks=_float_list(c, "ks", path, [1, 10, 100]),
                   draws=_get(c, "draws", path, int, default_reps))
    elif kind == "polya":
        out.update(M=_get(c, "M", path, int), final_total=_get(c, "final_total", path, int),
                   replicates=_get(c, "replicates", path, int, default_reps))
        if not 1 <= out["M"] <= out["final_total"]:
            raise ConfigError(path, "need 1 <= M <= final_total")
    elif kind == "coupling":
        out.update(gamma=_get(c, "gamma", path), c=_get(c, "c", path, default=1.0),
                   r=_get(c, "r", path, default=1.0), T_power=_get(c, "T_power", path, default=2.0),
                   N_sweep=_int_list(c, "N_sweep", path))
    else:
        raise ConfigError(f"{path}.kind", f"unknown check kind {kind!r}")
    return out


def cmd_verify(cfg, seed, reps, workers):
    raw = _get(cfg, "checks", "", list)
    checks = [_parse_check(c, f"checks[{i}]", reps) for i, c in enumerate(raw)]
    res = replicate_map(partial(_verify_job, seed=seed), list(enumerate(checks)), workers)
    rows, summary, criteria = [], {}, {}
    for idx, (r, s, c) in res:
        rows += r
        summary[checks[idx]["name"]] = s
        criteria.update(c)
    return ["check", "N", "x", "statistic", "value"], rows, summary, criteria


def cmd_construct(cfg, seed, reps, workers, out: Path | None = None):
    eta = _pairs(_get(cfg, "eta", "", list, []), "eta")
    a1 = _get(cfg, "a1", "", float, 0.0)
    a2 = _get(cfg, "a2", "", float, 0.0)
    r = _get(cfg, "r", "", float, 0.25)
    N = _get(cfg, "N", "", int)
    try:
        law, config = construct_mixture_wake_law(eta, a1, a2, r, N)
    except ValueError as e:
        raise ConfigError("N", str(e)) from None
    model = {"N": config.N, "lam": config.lam, "t_spring": config.t_spring, "t_total": config.t_total,
             "wake": {"type": "mixture", "atoms": [list(a) for a in law.atoms], "horizon": law.horizon}}
    if out is not None:
        text = yaml.safe_dump({"model": model, "sample_size": 10}, sort_keys=True)
        (out / "construct_model.yaml").write_text(text)
    rows = [("atom", s, w) for s, w in law.atoms]
    return ["kind", "sigma", "weight"], rows, {"model": model}, {}


HANDLERS = {"forward": cmd_forward, "genealogy": cmd_genealogy, "coalescent": cmd_coalescent,
            "verify": cmd_verify, "construct": cmd_construct}


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _seed(s: str) -> int:
    v = int(s, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="YAML config file")
    common.add_argument("--seed", type=_seed, help="master seed (unsigned 64-bit)")
    common.add_argument("--replicates", type=int, help="number of replicates")
    common.add_argument("--workers", type=int, help="worker processes (default $DORMCOAL_WORKERS or 1)")
    common.add_argument("--out", type=Path, help="output directory (default: current directory)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config field, dotted path, YAML value")
    p = _Parser(prog="dormcoal", description="Dormancy Cannings model simulator and coalescent checks.")
    p.add_argument("--version", action="version", version=f"dormcoal {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    helps = {"forward": "simulate generations forward",
             "genealogy": "ancestral trajectories and merger-size statistics",
             "coalescent": "merger rates, first-merger laws and coalescent trajectories",
             "verify": "limit-condition, c_N, tail, Polya and coupling checks",
             "construct": "build the mixture model for a target measure"}
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common], help=helps[name])
        if name == "genealogy":
            sp.add_argument("--sample-size", type=int, dest="sample_size")
            sp.add_argument("--engine", choices=ENGINES)
        if name == "construct":
            sp.add_argument("--N", type=int, dest="N")
    return p


def _apply_override(cfg: dict, item: str):
    if "=" not in item:
        raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
    key, val = item.split("=", 1)
    parts = key.split(".")
    d = cfg
    for k in parts[:-1]:
        d = d.setdefault(k, {})
        if not isinstance(d, dict):
            raise ConfigError(key, "cannot set a field inside a non-mapping")
    d[parts[-1]] = yaml.safe_load(val)


def load_config(path: Path | None) -> dict:
    if path is None:
        return {}
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as e:
        raise ConfigError("", f"cannot read {path}: {e.strerror}") from None
    except yaml.YAMLError as e:
        raise ConfigError("", f"malformed YAML: {e}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError("", "top level must be a mapping")
    return data


def run_command(argv=None) -> int:
    """Run the CLI; returns 0 on success, 1 on usage or config error, 2 on runtime error."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        sys.stderr.write(str(e))
        return 1
    except SystemExit as e:
        return int(e.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 1
    try:
        cfg = load_config(args.config)
        for item in args.set:
            _apply_override(cfg, item)
        for key in ("sample_size", "engine", "N"):
            if getattr(args, key, None) is not None:
                cfg[key] = getattr(args, key)
        seed = args.seed if args.seed is not None else _get(cfg, "master_seed", "", int, 0)
        reps = args.replicates if args.replicates is not None else _get(cfg, "replicates", "", int, 100)
        if reps < 1:
            raise ConfigError("replicates", "must be >= 1")
        cfg["master_seed"], cfg["replicates"] = seed, reps
        workers = args.workers if args.workers is not None else int(os.environ.get("DORMCOAL_WORKERS", "1"))
        out = args.out or Path(".")
        out.mkdir(parents=True, exist_ok=True)
        resolved = json.loads(json.dumps(cfg, default=str))
        if args.command == "construct":
            header, rows, summary, criteria = cmd_construct(cfg, seed, reps, workers, out)
        else:
            header, rows, summary, criteria = HANDLERS[args.command](cfg, seed, reps, max(1, workers))
    except UsageError as e:
        sys.stderr.write(f"{e}\n")
        return 1
    except ConfigError as e:
        sys.stderr.write(f"{e}\n")
        return 1
    except Exception as e:  # noqa: BLE001
        sys.stderr.write(f"runtime error: {type(e).__name__}: {e}\n")
        return 2
    write_csv(out / f"{args.command}.csv", header, rows, args.command, resolved, seed)
    write_json(out / f"{args.command}.json", args.command, resolved, seed, summary, criteria)
    return 0


def main():
    sys.exit(run_command())


if __name__ == "__main__":
    main()
