"""Event-driven simulation of the zero-range process.

A numba kernel consumes pre-drawn uniforms, two per event: one for the
exponential holding time and one for the (source, target) pair. Every
replica draws its uniforms from its own Philox stream, keyed by the
root seed and the replica index through numpy's SeedSequence, so results
do not depend on how replicas are scheduled.

Time is kept in unspeeded units internally; every reported duration is
divided by theta = N**2 log N.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numba
import numpy as np

from .errors import ArgumentError, ResourceError
from .zrp import ZrpModel, _check_config, sample_conditioned

__all__ = [
    "SimConfig",
    "EventStream",
    "OrderPath",
    "replica_rng",
    "kmc_run",
    "trace_and_order",
    "Atom",
    "Region",
    "well_region",
    "HittingStats",
    "hitting_experiment",
    "wilson_interval",
    "run_replicas",
]

BATCH = 1 << 16
FULL_EVENT_CAP = 50_000_000


@dataclass(frozen=True)
class SimConfig:
    """seed, replica count, horizon in theta units and record mode ("wells" or "full")."""

    seed: int = 0
    replicas: int = 1
    t_max: float = 1.0
    record: str = "wells"

    def __post_init__(self):
        if not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed < 2**64:
            raise ArgumentError("seed must be an unsigned 64-bit integer")
        if self.replicas < 1:
            raise ArgumentError("replicas must be at least 1")
        if not self.t_max > 0:
            raise ArgumentError("t_max must be positive")
        if self.record not in ("wells", "full"):
            raise ArgumentError("record must be 'wells' or 'full'")


def replica_rng(seed: int, replica: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), int(replica)])
    return np.random.Generator(np.random.Philox(ss))


def _rate_tables(model: ZrpModel):
    r = np.ascontiguousarray(model.walk.rates, dtype=np.float64)
    lam = r.sum(axis=1)
    return r, lam


@numba.njit(cache=True, inline="always")
def _g(n):
    if n <= 0:
        return 0.0
    if n == 1:
        return 1.0
    return n / (n - 1.0)


@numba.njit(cache=True)
def _label(eta, thresh):
    for x in range(eta.shape[0]):
        if eta[x] >= thresh:
            return x
    return -1


@numba.njit(cache=True)
def _kernel(eta, r, lam, thresh, t, t_end, u, seg_label, seg_time, label, full, ev_t, ev_x, ev_y):
    """Advance until t_end or the uniforms run out.

    Returns (t, events, segments, label, finished). A segment entry
    records the label left and the time it was left.
    """
    k = eta.shape[0]
    n_ev = 0
    n_seg = 0
    i = 0
    n_u = u.shape[0]
    while i + 1 < n_u:
        R = 0.0
        for x in range(k):
            R += _g(eta[x]) * lam[x]
        dt = -math.log(1.0 - u[i]) / R
        if t + dt >= t_end:
            return t_end, n_ev, n_seg, label, True
        t += dt
        target = u[i + 1] * R
        i += 2
        acc = 0.0
        src = -1
        dst = -1
        for x in range(k):
            gx = _g(eta[x])
            if gx == 0.0:
                continue
            for y in range(k):
                w = gx * r[x, y]
                if w == 0.0:
                    continue
                acc += w
                src = x
                dst = y
                if target < acc:
                    break
            if target < acc:
                break
        eta[src] -= 1
        eta[dst] += 1
        if full:
            ev_t[n_ev] = t
            ev_x[n_ev] = src
            ev_y[n_ev] = dst
        n_ev += 1
        new = label
        if label == -1:
            if eta[dst] >= thresh:
                new = dst
        elif label == src and eta[src] < thresh:
            new = -1
        if new != label:
            seg_label[n_seg] = label
            seg_time[n_seg] = t
            n_seg += 1
            label = new
    return t, n_ev, n_seg, label, False


@dataclass
class EventStream:
    """Output of one replica.

    ``segments`` lists (label, duration) with label -1 for time spent
    outside every well; durations are in theta units and sum to the
    horizon exactly.
    """

    model: ZrpModel
    eta0: np.ndarray
    eta_final: np.ndarray
    segments: list
    n_events: int
    t_total: float
    events: tuple | None = None  # (times, sources, targets) in unspeeded units


def kmc_run(model: ZrpModel, eta0, cfg: SimConfig, replica: int = 0, rng: np.random.Generator | None = None) -> EventStream:
    """Simulate one trajectory from ``eta0`` over [0, cfg.t_max] theta units."""
    if not model.wells_disjoint:
        raise ArgumentError("wells overlap at this N; well labels are ambiguous")
    eta = _check_config(eta0, model.N, model.kappa).copy()
    rng = replica_rng(cfg.seed, replica) if rng is None else rng
    r, lam = _rate_tables(model)
    thresh = model.N - model.ell
    theta = model.theta
    t_end = cfg.t_max * theta
    full = cfg.record == "full"
    seg_label = np.empty(BATCH, dtype=np.int64)
    seg_time = np.empty(BATCH, dtype=np.float64)
    ev_t = np.empty(BATCH if full else 1)
    ev_x = np.empty(BATCH if full else 1, dtype=np.int64)
    ev_y = np.empty(BATCH if full else 1, dtype=np.int64)
    label = int(_label(eta, thresh))
    t = 0.0
    last = 0.0
    segments = []
    chunks = []
    n_events = 0
    while True:
        u = rng.random(2 * BATCH)
        t, n_ev, n_seg, new_label, done = _kernel(
            eta, r, lam, thresh, t, t_end, u, seg_label, seg_time, label, full, ev_t, ev_x, ev_y
        )
        for j in range(n_seg):
            segments.append((int(seg_label[j]), (seg_time[j] - last) / theta))
            last = seg_time[j]
        if full and n_ev:
            chunks.append((ev_t[:n_ev].copy(), ev_x[:n_ev].copy(), ev_y[:n_ev].copy()))
        n_events += n_ev
        label = int(new_label)
        if full and n_events > FULL_EVENT_CAP:
            raise ResourceError(f"full event record exceeds {FULL_EVENT_CAP} events; use record='wells'")
        if done:
            break
    segments.append((label, (t_end - last) / theta))
    events = None
    if full:
        if chunks:
            events = tuple(np.concatenate([c[i] for c in chunks]) for i in range(3))
        else:
            events = (np.empty(0), np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64))
    return EventStream(model, np.asarray(eta0).copy(), eta.copy(), segments, n_events, cfg.t_max, events)


@dataclass(frozen=True)
class OrderPath:
    """Well labels visited by the trace process and the time spent in each.

    The first and last entries are censored by the start and the horizon.
    """

    labels: tuple
    durations: tuple
    delta_time: float
    total_time: float
    n_events: int

    @property
    def delta_fraction(self) -> float:
        return self.delta_time / self.total_time if self.total_time > 0 else 0.0

    @property
    def n_transitions(self) -> int:
        return max(0, len(self.labels) - 1)

    @property
    def degenerate(self) -> bool:
        return len(self.labels) == 0

    def transitions(self) -> list[tuple[int, int]]:
        return list(zip(self.labels[:-1], self.labels[1:]))

    def holding_times(self) -> list[tuple[int, float]]:
        """Uncensored sojourns: every entry except the first and the last."""
        return [(self.labels[i], self.durations[i]) for i in range(1, len(self.labels) - 1)]


def trace_and_order(stream: EventStream) -> OrderPath:
    labels: list[int] = []
    durations: list[float] = []
    delta = 0.0
    for lab, d in stream.segments:
        if lab < 0:
            delta += d
            continue
        if labels and labels[-1] == lab:
            durations[-1] += d
        else:
            labels.append(lab)
            durations.append(d)
    # drop zero-length entries that can only arise at the horizon
    keep = [i for i, d in enumerate(durations) if d > 0]
    labels = [labels[i] for i in keep]
    durations = [durations[i] for i in keep]
    merged_l: list[int] = []
    merged_d: list[float] = []
    for lab, d in zip(labels, durations):
        if merged_l and merged_l[-1] == lab:
            merged_d[-1] += d
        else:
            merged_l.append(lab)
            merged_d.append(d)
    return OrderPath(tuple(merged_l), tuple(merged_d), delta, stream.t_total, stream.n_events)


# ---------------------------------------------------------------- hitting times


@dataclass(frozen=True)
class Atom:
    """Threshold constraint eta_site >= threshold (sense +1) or < threshold (sense -1)."""

    site: int
    threshold: int
    sense: int = 1


@dataclass(frozen=True)
class Region:
    """Union of atoms."""

    name: str
    atoms: tuple

    def contains(self, eta) -> bool:
        for a in self.atoms:
            v = eta[a.site]
            if (a.sense > 0 and v >= a.threshold) or (a.sense < 0 and v < a.threshold):
                return True
        return False


def well_region(model: ZrpModel, kind: str, x: int) -> Region:
    """Named regions: E, D, W (wells at x), notW (complement of W^x), Ebreve (other wells)."""
    N = model.N
    if kind == "E":
        return Region(f"E{x}", (Atom(x, N - model.ell, 1),))
    if kind == "D":
        return Region(f"D{x}", (Atom(x, N - model.deep_width, 1),))
    if kind == "W":
        return Region(f"W{x}", (Atom(x, N - model.shallow_width, 1),))
    if kind == "notW":
        return Region(f"notW{x}", (Atom(x, N - model.shallow_width, -1),))
    if kind == "Ebreve":
        return Region(f"Ebreve{x}", tuple(Atom(y, N - model.ell, 1) for y in range(model.kappa) if y != x))
    raise ArgumentError(f"unknown region kind {kind!r}")


@numba.njit(cache=True)
def _hit_index(eta, a_site, a_thr, a_sense, a_region):
    for i in range(a_site.shape[0]):
        v = eta[a_site[i]]
        if (a_sense[i] > 0 and v >= a_thr[i]) or (a_sense[i] < 0 and v < a_thr[i]):
            return a_region[i]
    return -1


@numba.njit(cache=True)
def _hit_kernel(eta, r, lam, t, t_end, u, a_site, a_thr, a_sense, a_region):
    """Run until a region is hit, the horizon passes or the uniforms run out.

    Returns (t, events, status) with status >= 0 the region hit, -1 horizon,
    -2 more uniforms needed.
    """
    k = eta.shape[0]
    n_ev = 0
    i = 0
    n_u = u.shape[0]
    while i + 1 < n_u:
        R = 0.0
        for x in range(k):
            R += _g(eta[x]) * lam[x]
        dt = -math.log(1.0 - u[i]) / R
        if t + dt >= t_end:
            return t_end, n_ev, -1
        t += dt
        target = u[i + 1] * R
        i += 2
        acc = 0.0
        src = -1
        dst = -1
        for x in range(k):
            gx = _g(eta[x])
            if gx == 0.0:
                continue
            for y in range(k):
                w = gx * r[x, y]
                if w == 0.0:
                    continue
                acc += w
                src = x
                dst = y
                if target < acc:
                    break
            if target < acc:
                break
        eta[src] -= 1
        eta[dst] += 1
        n_ev += 1
        h = _hit_index(eta, a_site, a_thr, a_sense, a_region)
        if h >= 0:
            return t, n_ev, h
    return t, n_ev, -2


def wilson_interval(k: int, n: int, z: float = 1.959963984540054) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = k / n
    den = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass
class HittingStats:
    regions: list
    first_region: np.ndarray  # -1 for censored replicas
    times: np.ndarray  # theta units; horizon for censored replicas
    censored: int
    probabilities: dict = field(default_factory=dict)
    intervals: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "regions": [r.name for r in self.regions],
            "replicas": int(self.first_region.size),
            "censored": int(self.censored),
            "probabilities": self.probabilities,
            "wilson95": {k: list(v) for k, v in self.intervals.items()},
        }


def _start_state(model: ZrpModel, start, rng) -> np.ndarray:
    if isinstance(start, tuple) and len(start) == 2 and isinstance(start[0], str):
        kind, x = start
        N = model.N
        if kind == "E":
            return sample_conditioned(model, x, N - model.ell, N, rng)
        if kind == "D":
            return sample_conditioned(model, x, N - model.deep_width, N, rng)
        if kind == "E-D":
            return sample_conditioned(model, x, N - model.ell, N - model.deep_width - 1, rng)
        if kind == "W":
            return sample_conditioned(model, x, N - model.shallow_width, N, rng)
        raise ArgumentError(f"unknown start measure {kind!r}")
    return _check_config(start, model.N, model.kappa).copy()


def _one_hit(model: ZrpModel, start, regions: Sequence[Region], cfg: SimConfig, replica: int):
    rng = replica_rng(cfg.seed, replica)
    eta = _start_state(model, start, rng)
    a_site, a_thr, a_sense, a_region = [], [], [], []
    for i, reg in enumerate(regions):
        for a in reg.atoms:
            a_site.append(a.site)
            a_thr.append(a.threshold)
            a_sense.append(a.sense)
            a_region.append(i)
    a_site = np.array(a_site, dtype=np.int64)
    a_thr = np.array(a_thr, dtype=np.int64)
    a_sense = np.array(a_sense, dtype=np.int64)
    a_region = np.array(a_region, dtype=np.int64)
    h = int(_hit_index(eta, a_site, a_thr, a_sense, a_region))
    if h >= 0:
        return h, 0.0
    r, lam = _rate_tables(model)
    t_end = cfg.t_max * model.theta
    t = 0.0
    while True:
        u = rng.random(2 * BATCH)
        t, _, status = _hit_kernel(eta, r, lam, t, t_end, u, a_site, a_thr, a_sense, a_region)
        if status != -2:
            return int(status), t / model.theta


def _pool_map(fn, args, threads: int):
    if threads <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        futures = [ex.submit(fn, *a) for a in args]
        return [f.result() for f in futures]


def hitting_experiment(
    model: ZrpModel, start, targets: Sequence[Region], cfg: SimConfig, threads: int = 1
) -> HittingStats:
    """First region hit among ``targets`` and when, for each replica.

    ``start`` is a configuration or a pair (kind, x) with kind among E, D,
    E-D and W, meaning mu conditioned on that set at site x.
    """
    if not targets:
        raise ArgumentError("at least one target region is needed")
    targets = list(targets)
    res = _pool_map(_one_hit, [(model, start, targets, cfg, i) for i in range(cfg.replicas)], threads)
    first = np.array([h for h, _ in res], dtype=np.int64)
    times = np.array([t for _, t in res])
    n = first.size
    stats = HittingStats(targets, first, times, int(np.sum(first < 0)))
    for i, reg in enumerate(targets):
        k = int(np.sum(first == i))
        stats.probabilities[reg.name] = k / n
        stats.intervals[reg.name] = wilson_interval(k, n)
    return stats


def _one_run(model: ZrpModel, start, cfg: SimConfig, replica: int) -> OrderPath:
    rng = replica_rng(cfg.seed, replica)
    eta0 = _start_state(model, start, rng)
    return trace_and_order(kmc_run(model, eta0, cfg, replica, rng=rng))


def run_replicas(model: ZrpModel, start, cfg: SimConfig, threads: int = 1) -> list[OrderPath]:
    """Order paths of ``cfg.replicas`` independent trajectories (wells mode)."""
    cfg = SimConfig(cfg.seed, cfg.replicas, cfg.t_max, "wells")
    return _pool_map(_one_run, [(model, start, cfg, i) for i in range(cfg.replicas)], threads)
