"""Acceptance suite: one function per criterion, shared by the CLI and the tests.

Every function returns a ``CriterionResult`` carrying a pass flag, the
numbers it was decided on and the wall time. Functions never raise on a
failed criterion; they report it.
"""
from __future__ import annotations

import itertools
import math
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .exact_engine import audit_comparison_paths, restricted_gap, solve_poisson
from .metastable import compare, limit_chain
from .simulate import SimConfig, run_replicas
from .superharmonic import superharmonic_check
from .testfn import capacity_upper_bound, profiles
from .walk import (
    WalkSpec,
    capacity,
    coefficient_tables,
    complete_graph,
    equilibrium_potential,
    flux_capacity,
    random_spec,
)
from .zrp import ZrpModel, partition_tables, stationary_weight, well_measure

__all__ = ["CriterionResult", "CRITERIA", "run_all", "ASYMMETRIC_RATES", "brute_force_partition"]

ASYMMETRIC_RATES = [[0.0, 1.0, 0.5], [1.0, 0.0, 2.0], [0.5, 2.0, 0.0]]


@dataclass
class CriterionResult:
    name: str
    passed: bool
    details: dict = field(default_factory=dict)
    seconds: float = 0.0
    limit: float | None = None

    @property
    def in_time(self) -> bool:
        return self.limit is None or self.seconds <= self.limit

    def line(self) -> str:
        flag = "PASS" if self.passed and self.in_time else "FAIL"
        return f"{flag}  {self.name}  ({self.seconds:.1f}s)"

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "seconds": self.seconds,
            "limit_seconds": self.limit,
            "details": self.details,
        }


def _timed(name: str, limit: float | None):
    def deco(fn: Callable[..., tuple[bool, dict]]):
        def run(**kw) -> CriterionResult:
            t0 = time.perf_counter()
            ok, details = fn(**kw)
            return CriterionResult(name, bool(ok), details, time.perf_counter() - t0, limit)

        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        run.criterion = name
        return run

    return deco


def _decreasing(v) -> bool:
    return all(b < a for a, b in zip(v[:-1], v[1:]))


def brute_force_partition(N: int, kappa: int) -> float:
    """Z by summing 1/prod a(eta_x) over every configuration."""
    total = math.fsum(
        stationary_weight((*c, N - sum(c)))
        for c in itertools.product(range(N + 1), repeat=kappa - 1)
        if sum(c) <= N
    )
    return N / math.log(N) ** (kappa - 1) * total


@_timed("partition normalization", 10.0)
def partition_normalization(**_) -> tuple[bool, dict]:
    """Partition sums against brute force and the two-site closed form."""
    worst_brute = 0.0
    for kappa in (2, 3, 4):
        for N in range(2, 13):
            worst_brute = max(worst_brute, abs(partition_tables(N, kappa).Z - brute_force_partition(N, kappa)))
    worst_closed = 0.0
    H = 0.0
    for N in range(2, 10_001):
        H += 1.0 / (N - 1)
        closed = 2.0 / math.log(N) * (1.0 + H)
        worst_closed = max(worst_closed, abs(partition_tables(N, 2).Z - closed))
    ok = worst_brute <= 1e-12 and worst_closed <= 1e-12
    return ok, {"max_error_brute_force": worst_brute, "max_error_closed_form": worst_closed}


@_timed("condensation", 60.0)
def condensation(**_) -> tuple[bool, dict]:
    """|3 mu(E^x) - 1| at N = 1e3 and 1e4 on the complete three-site graph."""
    errs = {}
    for N in (1000, 10_000):
        m = ZrpModel(N, complete_graph(3))
        errs[N] = abs(3.0 * well_measure(m, "E") - 1.0)
    v = [errs[1000], errs[10_000]]
    return _decreasing(v) and v[-1] <= 0.15, {"error": {str(k): e for k, e in errs.items()}, "target": 0.15}


@_timed("threshold tail", 60.0)
def threshold_tail(**_) -> tuple[bool, dict]:
    """mu{eta_x >= N - floor(sqrt N)} against 1/12 at N = 1e3 and 1e4."""
    rel = {}
    vals = {}
    for N in (1000, 10_000):
        m = ZrpModel(N, complete_graph(3))
        vals[N] = well_measure(m, "threshold", p=math.isqrt(N))
        rel[N] = abs(vals[N] * 12.0 - 1.0)
    v = [rel[1000], rel[10_000]]
    details = {"value": {str(k): x for k, x in vals.items()}, "relative_error": {str(k): x for k, x in rel.items()}}
    return _decreasing(v) and v[-1] <= 0.25, details


@_timed("potential identities", 5.0)
def potential_identities(seed: int = 20240601, **_) -> tuple[bool, dict]:
    """Reciprocity, flux formula, capacity symmetry and u row sums on random specs."""
    rng = np.random.default_rng(seed)
    worst = {"reciprocity": 0.0, "flux": 0.0, "symmetry": 0.0, "u_row_sums": 0.0}
    for _ in range(50):
        k = int(rng.integers(2, 9))
        spec = random_spec(k, rng)
        B = {int(rng.integers(k))}
        rest = [x for x in range(k) if x not in B]
        for x, y in itertools.combinations(rest, 2):
            hx = equilibrium_potential(spec, {x}, B).values
            hy = equilibrium_potential(spec, {y}, B).values
            d = abs(hx[y] / capacity(spec, {x}, B) - hy[x] / capacity(spec, {y}, B))
            worst["reciprocity"] = max(worst["reciprocity"], d)
        a, b = (int(v) for v in rng.choice(k, 2, replace=False))
        worst["flux"] = max(worst["flux"], abs(capacity(spec, {a}, {b}) - flux_capacity(spec, {a}, {b})))
        worst["symmetry"] = max(worst["symmetry"], abs(capacity(spec, {a}, {b}) - capacity(spec, {b}, {a})))
        x0 = int(rng.integers(k))
        others = [x for x in range(k) if x != x0]
        size = int(rng.integers(1, len(others) + 1))
        A = {int(v) for v in rng.choice(others, size, replace=False)}
        t = coefficient_tables(spec, x0, A)
        Ac = [y for y in range(k) if y not in A]
        for x in A:
            worst["u_row_sums"] = max(worst["u_row_sums"], abs(t.u[x, Ac].sum() - 1.0))
    return all(v <= 1e-10 for v in worst.values()), worst


@_timed("Poisson closeness", 300.0)
def poisson_closeness(**_) -> tuple[bool, dict]:
    """max |f_N - f| decreasing over N = 40, 80, 160 and bounded energy."""
    f = np.array([1.0, 0.0, -1.0])
    errs, energy = {}, {}
    for N in (40, 80, 160):
        res = solve_poisson(ZrpModel(N, complete_graph(3)), f)
        errs[N] = res.max_error
        energy[N] = res.energy
    e = list(energy.values())
    ratio = max(e) / min(e)
    ok_trend = _decreasing(list(errs.values()))
    details = {
        "max_error": {str(k): v for k, v in errs.items()},
        "energy": {str(k): v for k, v in energy.items()},
        "energy_ratio": ratio,
        "error_decreasing": ok_trend,
        "energy_bounded": ratio <= 3.0,
    }
    return ok_trend and ratio <= 3.0, details


@_timed("capacity bound", 600.0)
def capacity_bound(eps: float = 0.05, **_) -> tuple[bool, dict]:
    """Exact well capacity against the test-function bound and the limit rate."""
    spec = complete_graph(3)
    chain = limit_chain(spec)
    target = float(chain.exit_rates[0]) / spec.kappa
    prof = profiles(eps)
    exact, bound, raw, admissible = {}, {}, {}, {}
    for N in (30, 60, 120):
        m = ZrpModel(N, spec)
        cb = capacity_upper_bound(m, 0, prof, with_exact=True)
        exact[N], bound[N], raw[N], admissible[N] = cb.exact, cb.value, cb.raw, cb.admissible
    ex = list(exact.values())
    variation = max(ex) / min(ex)
    below = all(exact[N] <= bound[N] for N in exact)
    ratios = {N: exact[N] / target for N in exact}
    in_band = all(0.3 <= r <= 3.0 for r in ratios.values())
    details = {
        "exact": {str(k): v for k, v in exact.items()},
        "bound": {str(k): v for k, v in bound.items()},
        "raw_bound": {str(k): v for k, v in raw.items()},
        "raw_admissible": {str(k): v for k, v in admissible.items()},
        "variation": variation,
        "ratio_to_limit": {str(k): v for k, v in ratios.items()},
        "limit_rate": target,
    }
    return variation <= 2.0 and below and in_band, details


@_timed("spectral gap", 300.0)
def spectral_gap(**_) -> tuple[bool, dict]:
    """gap * ell^2 stable over N = 50, 100, 200 and comparison-path audits."""
    spec = complete_graph(3)
    prod = {}
    for N in (50, 100, 200):
        m = ZrpModel(N, spec)
        prod[N] = restricted_gap(m, 0) * m.ell**2
    v = list(prod.values())
    spread = max(v) / min(v)
    audits = {}
    for k, N in ((3, 30), (4, 20)):
        m = ZrpModel(N, complete_graph(k))
        for x0 in range(k):
            a = audit_comparison_paths(m, x0)
            audits[f"kappa={k},N={N},x0={x0}"] = a.passed
    ok = min(v) > 0 and spread <= 4.0 and all(audits.values())
    return ok, {"gap_times_ell2": {str(k): x for k, x in prod.items()}, "spread": spread, "path_audits": audits}


@_timed("super-harmonicity", 600.0)
def superharmonicity(**_) -> tuple[bool, dict]:
    """Exhaustive super-harmonic scan at N = 500 for two and three sites."""
    out = {}
    ok = True
    for k in (2, 3):
        m = ZrpModel(500, complete_graph(k), gamma=0.4, beta=0.5)
        v = superharmonic_check(m, 0, m_max=64)
        out[f"kappa={k}"] = {
            **v.to_dict(),
            "checks": {name: bool(c["passed"]) for name, c in v.checks.items()},
            "per_m_max": {str(mm): float(val) for mm, val in v.per_m.items()},
        }
        ok = ok and v.passed and v.m_found is not None and v.m_found <= 64
    return ok, out


@_timed("metastable dynamics", 1800.0)
def metastable_dynamics(seed: int = 7, replicas: int = 200, t_max: float = 2.0, threads: int = 1, **_) -> tuple[bool, dict]:
    """Trace-process statistics against the limit chain for N = 200, 400, 800."""
    spec = WalkSpec(3, np.array(ASYMMETRIC_RATES))
    chain = limit_chain(spec)
    reps = {}
    for N in (200, 400, 800):
        m = ZrpModel(N, spec)
        paths = run_replicas(m, ("E", 0), SimConfig(seed, replicas, t_max), threads=threads)
        reps[N] = compare(paths, chain)
    frac = [reps[N].delta_fraction for N in reps]
    tv = [reps[N].tv for N in reps]
    enough = all(r.transitions >= 500 for r in reps.values())
    a = _decreasing(frac)
    b = all(y <= x for x, y in zip(tv[:-1], tv[1:]))
    ratio = reps[800].holding_ratio
    c = bool(np.all((ratio >= 0.5) & (ratio <= 2.0)))
    details = {
        "transitions": {str(N): r.transitions for N, r in reps.items()},
        "delta_fraction": {str(N): r.delta_fraction for N, r in reps.items()},
        "tv": {str(N): r.tv for N, r in reps.items()},
        "holding_ratio_800": ratio.tolist(),
        "delta_decreasing": a,
        "tv_nonincreasing": b,
        "holding_in_band": c,
        "enough_transitions": enough,
    }
    return enough and a and b and c, details


@_timed("determinism", None)
def determinism(**_) -> tuple[bool, dict]:
    """Two runs of the same configs give byte-identical CSV bodies."""
    from .cli import csv_body, run_subcommand

    configs = {
        "measure": {"walk": {"graph": "complete", "kappa": 2}, "N": [100, 1000]},
        "walk": {"walk": {"graph": "complete", "kappa": 3}},
        "capacity": {"walk": {"graph": "complete", "kappa": 3}, "N": [20]},
        "simulate": {"walk": {"rates": ASYMMETRIC_RATES}, "N": [60], "replicas": 3, "t_max": 0.5, "seed": 11},
    }
    same = {}
    with tempfile.TemporaryDirectory() as tmp:
        for cmd, cfg in configs.items():
            bodies = []
            for run in range(2):
                out = Path(tmp) / f"{cmd}-{run}"
                run_subcommand(cmd, cfg, out)
                bodies.append({p.name: csv_body(p) for p in sorted(out.glob("*.csv"))})
            same[cmd] = bool(bodies[0]) and bodies[0] == bodies[1]
    return all(same.values()), same


CRITERIA = [
    partition_normalization,
    condensation,
    threshold_tail,
    potential_identities,
    poisson_closeness,
    capacity_bound,
    spectral_gap,
    superharmonicity,
    metastable_dynamics,
    determinism,
]


def run_all(threads: int = 1, seed: int | None = None, echo: Callable[[str], None] | None = None) -> list[CriterionResult]:
    results = []
    for fn in CRITERIA:
        kw = {"threads": threads}
        if seed is not None:
            kw["seed"] = seed
        res = fn(**kw)
        if echo is not None:
            echo(res.line())
        results.append(res)
    return results
