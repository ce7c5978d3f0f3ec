"""Command-line harness: one subcommand per experiment, CSV and JSON outputs.

Every CSV starts with a ``#`` comment block (config hash, seed, log base,
version, timestamp) followed by a long-format body. Bodies depend only on
the resolved config, so two runs with the same config agree byte for byte.
"""
from __future__ import annotations

import csv
import datetime as _dt
import hashlib
import io
import json
import math
import sys
from pathlib import Path

import click
import jsonschema
import numpy as np

from . import __version__
from .errors import ArgumentError, ModelError, NumericError, ResourceError, ZrpError
from .exact_engine import DEFAULT_STATE_CAP, audit_comparison_paths, birth_death_product_gap, restricted_gap, solve_poisson
from .metastable import compare, limit_chain, trend_table
from .simulate import SimConfig, run_replicas
from .superharmonic import superharmonic_check
from .testfn import capacity_upper_bound, profiles
from .walk import WalkSpec, capacity, complete_graph, equilibrium_potential, path_graph
from .zrp import ZrpModel, partition_tables, well_measure

__all__ = ["main", "run_subcommand", "resolve_config", "config_hash", "csv_body", "SCHEMA"]

_NUM = {"type": "number"}
_POS_INT = {"type": "integer", "minimum": 1}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "walk": {
            "oneOf": [
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["graph", "kappa"],
                    "properties": {
                        "graph": {"enum": ["complete", "path"]},
                        "kappa": {"type": "integer", "minimum": 2},
                        "rate": {"type": "number", "exclusiveMinimum": 0},
                    },
                },
                {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["rates"],
                    "properties": {
                        "rates": {
                            "type": "array",
                            "minItems": 2,
                            "items": {"type": "array", "items": {"type": "number", "minimum": 0}},
                        }
                    },
                },
            ]
        },
        "N": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 2}},
        "gamma": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "beta": {"type": ["number", "null"], "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "eps": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.0625},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "replicas": _POS_INT,
        "t_max": {"type": "number", "exclusiveMinimum": 0},
        "x0": {"type": "integer", "minimum": 0},
        "f": {"type": "array", "items": _NUM},
        "lam": {"type": "number", "minimum": 0},
        "m_max": {"type": "integer", "minimum": 2},
        "start": {"enum": ["E", "D", "E-D", "W"]},
    },
}

DEFAULT_N = {
    "walk": [],
    "measure": [1000],
    "poisson": [40, 80, 160],
    "capacity": [30, 60, 120],
    "gap": [50, 100, 200],
    "simulate": [200],
    "compare": [200],
    "superharmonic": [500],
    "all": [],
}

DEFAULTS = {
    "walk": {"graph": "complete", "kappa": 3},
    "gamma": None,
    "beta": None,
    "eps": 0.05,
    "seed": 0,
    "replicas": 10,
    "t_max": 1.0,
    "x0": 0,
    "lam": 0.0,
    "m_max": 64,
    "start": "E",
}


def _json_path(err: jsonschema.ValidationError) -> str:
    out = "$"
    for p in err.absolute_path:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def resolve_config(raw: dict | None, command: str, seed: int | None = None) -> dict:
    """Validate ``raw`` against the schema and fill defaults."""
    raw = {} if raw is None else raw
    e = jsonschema.exceptions.best_match(jsonschema.Draft202012Validator(SCHEMA).iter_errors(raw))
    if e is not None:
        raise ArgumentError(f"config {_json_path(e)}: {e.message}")
    cfg = {**DEFAULTS, "N": DEFAULT_N[command], **raw}
    if seed is not None:
        cfg["seed"] = int(seed)
    cfg["N"] = sorted(set(int(n) for n in cfg["N"]))
    spec = build_walk(cfg["walk"])
    if "f" not in cfg:
        cfg["f"] = [float(v) for v in np.linspace(1.0, -1.0, spec.kappa)]
    if len(cfg["f"]) != spec.kappa:
        raise ArgumentError(f"config $.f: needs {spec.kappa} entries")
    if cfg["x0"] >= spec.kappa:
        raise ArgumentError(f"config $.x0: must be below kappa = {spec.kappa}")
    if cfg["m_max"] & (cfg["m_max"] - 1):
        raise ArgumentError("config $.m_max: must be a power of two")
    return cfg


def config_hash(cfg: dict) -> str:
    text = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


def build_walk(w: dict) -> WalkSpec:
    if "rates" in w:
        r = np.array(w["rates"], dtype=float)
        if r.ndim != 2 or r.shape[0] != r.shape[1]:
            raise ArgumentError("config $.walk.rates: must be a square matrix")
        return WalkSpec(r.shape[0], r)
    make = complete_graph if w["graph"] == "complete" else path_graph
    return make(w["kappa"], w.get("rate", 1.0))


def _models(cfg: dict):
    spec = build_walk(cfg["walk"])
    return [ZrpModel(N, spec, cfg["gamma"], cfg["beta"]) for N in cfg["N"]]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_csv(path: Path, header: dict, columns: list[str], rows: list) -> None:
    buf = io.StringIO()
    for k, v in header.items():
        buf.write(f"# {k}: {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in columns])
    path.write_text(buf.getvalue())


def csv_body(path) -> str:
    """The CSV text without its comment header."""
    return "".join(line for line in Path(path).read_text().splitlines(keepends=True) if not line.startswith("#"))


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.bool_, bool)):
        return bool(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return None if math.isnan(v) or math.isinf(v) else v
    return v


def _rows(N, items: dict) -> list[dict]:
    return [{"N": N, "quantity": q, "value": v} for q, v in items.items()]


# ------------------------------------------------------------ subcommands


def _cmd_walk(cfg, ctx):
    spec = build_walk(cfg["walk"])
    rows, out = [], {"capacity": {}, "potential": {}}
    for x in range(spec.kappa):
        for y in range(x + 1, spec.kappa):
            c = capacity(spec, {x}, {y})
            h = equilibrium_potential(spec, {x}, {y}).values
            rows += _rows(None, {f"cap_{x}_{y}": c})
            rows += _rows(None, {f"h_{x}_{y}[{z}]": float(h[z]) for z in range(spec.kappa)})
            out["capacity"][f"{x},{y}"] = c
            out["potential"][f"{x},{y}"] = h.tolist()
    chain = limit_chain(spec)
    rows += _rows(None, {f"rZ_{x}_{y}": float(chain.rates[x, y]) for x in range(spec.kappa) for y in range(spec.kappa) if x != y})
    out["limit_chain"] = chain.to_dict()
    return rows, out, {}


def _cmd_measure(cfg, ctx):
    rows, out = [], {}
    for m in _models(cfg):
        t = partition_tables(m.N, m.kappa)
        vals = {
            "Z": t.Z,
            "mu_E": well_measure(m, "E"),
            "mu_D": well_measure(m, "D"),
            "mu_W": well_measure(m, "W"),
            "mu_Ehat": well_measure(m, "Ehat"),
            "mu_threshold_sqrtN": well_measure(m, "threshold", p=math.isqrt(m.N)),
        }
        if m.wells_disjoint:
            vals["mu_Delta"] = well_measure(m, "Delta")
        rows += _rows(m.N, vals)
        out[m.N] = vals
    return rows, out, {}


def _cmd_poisson(cfg, ctx):
    rows, out = [], {}
    f = np.array(cfg["f"])
    for m in _models(cfg):
        res = solve_poisson(m, f, lam=cfg["lam"], cap=ctx["cap_states"])
        vals = {"max_error": res.max_error, "energy": res.energy}
        vals.update({f"f_N[{x}]": float(res.f_N[x]) for x in range(m.kappa)})
        rows += _rows(m.N, vals)
        out[m.N] = {**vals, "diagnostics": res.diagnostics}
    return rows, out, {}


def _cmd_capacity(cfg, ctx):
    rows, out = [], {}
    prof = profiles(cfg["eps"])
    x = cfg["x0"]
    for m in _models(cfg):
        cb = capacity_upper_bound(m, x, prof, cap=ctx["cap_states"], with_exact=True)
        limit = float(limit_chain(m.walk).exit_rates[x]) / m.kappa
        vals = {
            "exact": cb.exact,
            "bound": cb.value,
            "raw_bound": cb.raw,
            "raw_admissible": cb.admissible,
            "ratio_to_limit": cb.exact / limit,
            "n_condition": cb.n_condition,
        }
        rows += _rows(m.N, vals)
        out[m.N] = vals
    return rows, out, {}


def _cmd_gap(cfg, ctx):
    rows, out = [], {}
    x0 = cfg["x0"]
    for m in _models(cfg):
        gap = restricted_gap(m, x0, cap=ctx["cap_states"])
        vals = {
            "ell": m.ell,
            "gap": gap,
            "gap_times_ell2": gap * m.ell**2,
            "birth_death_gap": birth_death_product_gap(m.ell, m.kappa),
        }
        if (m.ell + 1) ** (m.kappa - 1) <= 200_000:
            vals["paths_pass"] = audit_comparison_paths(m, x0).passed
        rows += _rows(m.N, vals)
        out[m.N] = vals
    return rows, out, {}


def _simulate(cfg, ctx):
    sim = SimConfig(cfg["seed"], cfg["replicas"], cfg["t_max"])
    res = {}
    for m in _models(cfg):
        res[m.N] = run_replicas(m, (cfg["start"], cfg["x0"]), sim, threads=ctx["threads"])
    return res


def _transition_rows(N, paths) -> list[dict]:
    rows = []
    for i, p in enumerate(paths):
        t = 0.0
        for j in range(1, len(p.labels)):
            t += p.durations[j - 1]
            rows.append(
                {"N": N, "replica": i, "t": t, "from_well": p.labels[j - 1], "to_well": p.labels[j], "delta_fraction": p.delta_fraction}
            )
    return rows


def _cmd_simulate(cfg, ctx):
    rows, out, trans = [], {}, []
    for N, paths in _simulate(cfg, ctx).items():
        vals = {
            "replicas": len(paths),
            "transitions": sum(p.n_transitions for p in paths),
            "events": sum(p.n_events for p in paths),
            "delta_fraction": sum(p.delta_time for p in paths) / sum(p.total_time for p in paths),
        }
        rows += _rows(N, vals)
        out[N] = vals
        trans += _transition_rows(N, paths)
    return rows, out, {"transitions": (["N", "replica", "t", "from_well", "to_well", "delta_fraction"], trans)}


def _cmd_compare(cfg, ctx):
    spec = build_walk(cfg["walk"])
    chain = limit_chain(spec)
    sims = _simulate(cfg, ctx)
    reports = {N: compare(paths, chain) for N, paths in sims.items()}
    rows = trend_table(reports)
    out = {"limit_chain": chain.to_dict(), "reports": {N: r.to_dict() for N, r in reports.items()}}
    trans = [r for N, paths in sims.items() for r in _transition_rows(N, paths)]
    return rows, out, {"transitions": (["N", "replica", "t", "from_well", "to_well", "delta_fraction"], trans)}


def _cmd_superharmonic(cfg, ctx):
    rows, out = [], {}
    for m in _models(cfg):
        v = superharmonic_check(m, cfg["x0"], m_max=cfg["m_max"])
        vals = {
            "passed": v.passed,
            "m_found": v.m_found,
            "margin": v.margin,
            "boundary_count_L": v.boundary_count_L,
            "boundary_count_2L": v.boundary_count_2L,
            "interior_size": v.interior_size,
        }
        vals.update({f"max_LF[m={mm}]": float(val) for mm, val in v.per_m.items()})
        vals.update({f"check_{name}": bool(c["passed"]) for name, c in v.checks.items()})
        rows += _rows(m.N, vals)
        out[m.N] = {**v.to_dict(), "checks": v.checks, "per_m": v.per_m}
    return rows, out, {}


def _cmd_all(cfg, ctx):
    from .acceptance import run_all

    results = run_all(threads=ctx["threads"], echo=ctx.get("echo"))
    rows = [{"N": None, "quantity": r.name, "value": r.passed and r.in_time} for r in results]
    out = {r.name: r.to_dict() for r in results}
    ctx["failed"] = not all(r.passed and r.in_time for r in results)
    return rows, out, {}


COMMANDS = {
    "walk": _cmd_walk,
    "measure": _cmd_measure,
    "poisson": _cmd_poisson,
    "capacity": _cmd_capacity,
    "gap": _cmd_gap,
    "simulate": _cmd_simulate,
    "compare": _cmd_compare,
    "superharmonic": _cmd_superharmonic,
    "all": _cmd_all,
}


def run_subcommand(
    command: str,
    raw_config: dict | None,
    out_dir,
    seed: int | None = None,
    threads: int = 1,
    cap_states: int = DEFAULT_STATE_CAP,
    echo=None,
) -> dict:
    """Run one subcommand and write ``<command>.csv`` and ``<command>.json`` into ``out_dir``."""
    if command not in COMMANDS:
        raise ArgumentError(f"unknown subcommand {command!r}")
    if threads < 1:
        raise ArgumentError("threads must be at least 1")
    cfg = resolve_config(raw_config, command, seed)
    digest = config_hash(cfg)
    ctx = {"threads": threads, "cap_states": cap_states, "echo": echo}
    rows, payload, extra = COMMANDS[command](cfg, ctx)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    stamp = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    header = {
        "config_sha256": digest,
        "seed": cfg["seed"],
        "log base": "natural",
        "zrpmeta": __version__,
        "generated": stamp,
    }
    _write_csv(out / f"{command}.csv", header, ["N", "quantity", "value"], rows)
    for name, (cols, extra_rows) in extra.items():
        _write_csv(out / f"{name}.csv", header, cols, extra_rows)
    doc = {
        "command": command,
        "version": __version__,
        "config": cfg,
        "config_sha256": digest,
        "generated": stamp,
        "results": _jsonable(payload),
    }
    (out / f"{command}.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return {"config": cfg, "results": payload, "failed": ctx.get("failed", False)}


# -------------------------------------------------------------------- click


def _load_config(path: str | None) -> dict | None:
    if path is None:
        return None
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ArgumentError(f"cannot read config {path}: {e.strerror}") from e
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ArgumentError(f"config {path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}") from e


def _exit_code(err: Exception) -> int:
    if isinstance(err, (ArgumentError, ModelError)):
        return 2
    if isinstance(err, ResourceError):
        return 3
    if isinstance(err, NumericError):
        return 4
    return 1


def _common(fn):
    opts = [
        click.option("--config", "config", type=click.Path(dir_okay=False), envvar="ZRPMETA_CONFIG", help="JSON config file."),
        click.option("--out", "out", type=click.Path(file_okay=False), default="zrpmeta-out", show_default=True, envvar="ZRPMETA_OUT", help="Output directory."),
        click.option("--seed", type=click.IntRange(0, 2**64 - 1), envvar="ZRPMETA_SEED", help="Root seed (overrides the config)."),
        click.option("--threads", type=click.IntRange(1), default=1, show_default=True, envvar="ZRPMETA_THREADS", help="Worker processes."),
        click.option("--cap-states", type=click.IntRange(1), default=DEFAULT_STATE_CAP, show_default=True, envvar="ZRPMETA_CAP_STATES", help="Largest state space to enumerate."),
    ]
    for o in reversed(opts):
        fn = o(fn)
    return fn


@click.group()
@click.version_option(__version__, prog_name="zrpmeta")
def main():
    """Exact computation, simulation and checks for critical zero-range processes."""


def _make(command: str, doc: str):
    @_common
    def cmd(config, out, seed, threads, cap_states):
        try:
            res = run_subcommand(command, _load_config(config), out, seed, threads, cap_states, echo=click.echo)
        except ZrpError as e:
            click.echo(f"error: {e}", err=True)
            sys.exit(_exit_code(e))
        click.echo(f"wrote {Path(out) / (command + '.csv')} and {command}.json")
        if res["failed"]:
            sys.exit(1)

    cmd.__doc__ = doc
    main.command(name=command)(cmd)


for _name, _doc in [
    ("walk", "Equilibrium potentials, capacities and limit rates of the walk."),
    ("measure", "Partition function and well measures for each N."),
    ("poisson", "Sweep of max |f_N - f| and the energy of the Poisson solution."),
    ("capacity", "Exact well capacity and its test-function upper bound."),
    ("gap", "Restricted spectral gaps against ell_N squared."),
    ("simulate", "Order paths and time fraction outside the wells."),
    ("compare", "Simulated order paths against the limit chain."),
    ("superharmonic", "Exhaustive super-harmonic verdict."),
    ("all", "Run the full acceptance suite."),
]:
    _make(_name, _doc)


if __name__ == "__main__":
    main()
