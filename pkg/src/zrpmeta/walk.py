"""Potential theory for the underlying random walk on a finite site set.

The walk jumps from x to y at rate r(x, y) with r symmetric, so the
uniform measure m(x) = 1/kappa is invariant and reversible. Everything
here is dense linear algebra on at most a few dozen sites.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ArgumentError, ModelError

__all__ = [
    "WalkSpec",
    "PotentialVector",
    "CoefficientTables",
    "complete_graph",
    "path_graph",
    "random_spec",
    "equilibrium_potential",
    "capacity",
    "flux_capacity",
    "dirichlet_form",
    "coefficient_tables",
]

RESIDUAL_TOL = 1e-10


@dataclass(frozen=True)
class WalkSpec:
    """Symmetric jump rates on sites 0..kappa-1.

    Parameters
    ----------
    kappa : int
        Number of sites, at least 2.
    rates : array_like, shape (kappa, kappa)
        Nonnegative symmetric rates with zero diagonal.
    labels : sequence of str, optional
        External names for the sites; only used for I/O.
    """

    kappa: int
    rates: np.ndarray
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if not isinstance(self.kappa, (int, np.integer)) or self.kappa < 2:
            raise ArgumentError(f"kappa must be an integer >= 2, got {self.kappa!r}")
        r = np.array(self.rates, dtype=float)
        if r.shape != (self.kappa, self.kappa):
            raise ArgumentError(f"rates must be {self.kappa}x{self.kappa}, got shape {r.shape}")
        if not np.all(np.isfinite(r)) or np.any(r < 0):
            raise ArgumentError("rates must be finite and nonnegative")
        if np.any(np.diag(r) != 0):
            raise ArgumentError("rates must have zero diagonal")
        if not np.array_equal(r, r.T):
            raise ArgumentError("rates must be symmetric: r(x,y) = r(y,x)")
        r.setflags(write=False)
        object.__setattr__(self, "kappa", int(self.kappa))
        object.__setattr__(self, "rates", r)
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != self.kappa or len(set(labels)) != self.kappa:
                raise ArgumentError("labels must be kappa distinct strings")
            object.__setattr__(self, "labels", labels)
        if not _connected(r):
            raise ModelError("rate graph is not connected")

    @property
    def m(self) -> np.ndarray:
        return np.full(self.kappa, 1.0 / self.kappa)

    @property
    def sites(self) -> range:
        return range(self.kappa)

    def generator(self) -> np.ndarray:
        """Dense generator matrix of the walk; rows sum to zero exactly."""
        L = self.rates.copy()
        L[np.diag_indices(self.kappa)] = -self.rates.sum(axis=1)
        return L

    def to_dict(self) -> dict:
        d = {"kappa": self.kappa, "rates": self.rates.tolist()}
        if self.labels is not None:
            d["labels"] = list(self.labels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "WalkSpec":
        if not isinstance(d, dict) or "kappa" not in d or "rates" not in d:
            raise ArgumentError("walk spec needs keys 'kappa' and 'rates'")
        return cls(d["kappa"], np.asarray(d["rates"], dtype=float), d.get("labels"))

    @classmethod
    def from_json(cls, text: str) -> "WalkSpec":
        return cls.from_dict(json.loads(text))

    def scaled(self, c: float) -> "WalkSpec":
        return WalkSpec(self.kappa, c * self.rates, self.labels)

    def permuted(self, perm: Sequence[int]) -> "WalkSpec":
        """Relabel sites: new site i is old site perm[i]."""
        p = np.asarray(perm)
        return WalkSpec(self.kappa, self.rates[np.ix_(p, p)])

    def __eq__(self, other):
        return (
            isinstance(other, WalkSpec)
            and self.kappa == other.kappa
            and np.array_equal(self.rates, other.rates)
            and self.labels == other.labels
        )

    def __hash__(self):
        return hash((self.kappa, self.rates.tobytes(), self.labels))


def _connected(r: np.ndarray) -> bool:
    n = r.shape[0]
    seen = {0}
    queue = deque([0])
    while queue:
        x = queue.popleft()
        for y in np.flatnonzero(r[x] > 0):
            if int(y) not in seen:
                seen.add(int(y))
                queue.append(int(y))
    return len(seen) == n


def complete_graph(kappa: int, rate: float = 1.0) -> WalkSpec:
    r = np.full((kappa, kappa), float(rate))
    np.fill_diagonal(r, 0.0)
    return WalkSpec(kappa, r)


def path_graph(kappa: int, rate: float = 1.0) -> WalkSpec:
    r = np.zeros((kappa, kappa))
    for i in range(kappa - 1):
        r[i, i + 1] = r[i + 1, i] = rate
    return WalkSpec(kappa, r)


def random_spec(kappa: int, rng: np.random.Generator, density: float = 0.5) -> WalkSpec:
    """Connected symmetric rates: a random spanning tree plus extra edges.

    Rates are drawn uniformly from [0.1, 2]; each non-tree pair becomes an
    edge with probability ``density``.
    """
    if kappa < 2:
        raise ArgumentError("kappa must be at least 2")
    r = np.zeros((kappa, kappa))
    order = rng.permutation(kappa)
    for i in range(1, kappa):
        a, b = int(order[i]), int(order[rng.integers(i)])
        r[a, b] = r[b, a] = rng.uniform(0.1, 2.0)
    for a in range(kappa):
        for b in range(a + 1, kappa):
            if r[a, b] == 0 and rng.random() < density:
                r[a, b] = r[b, a] = rng.uniform(0.1, 2.0)
    return WalkSpec(kappa, r)


@dataclass(frozen=True)
class PotentialVector:
    values: np.ndarray
    source: frozenset
    sink: frozenset
    residual: float = 0.0


def _site_set(spec: WalkSpec, sites: Iterable[int], name: str) -> frozenset:
    if isinstance(sites, (int, np.integer)):
        sites = [sites]
    s = frozenset(int(x) for x in sites)
    if not s:
        raise ArgumentError(f"{name} must be nonempty")
    if min(s) < 0 or max(s) >= spec.kappa:
        raise ArgumentError(f"{name} contains a site outside 0..{spec.kappa - 1}")
    return s


def equilibrium_potential(spec: WalkSpec, A, B) -> PotentialVector:
    """Probability of hitting A before B, as a function of the start site.

    Solved by dense LU on the sites outside A and B.
    """
    A = _site_set(spec, A, "A")
    B = _site_set(spec, B, "B")
    if A & B:
        raise ArgumentError("A and B must be disjoint")
    k = spec.kappa
    h = np.zeros(k)
    h[list(A)] = 1.0
    interior = [x for x in range(k) if x not in A and x not in B]
    L = spec.generator()
    if interior:
        Lii = L[np.ix_(interior, interior)]
        rhs = -L[np.ix_(interior, sorted(A))].sum(axis=1)
        h[interior] = np.linalg.solve(Lii, rhs)
        res = np.max(np.abs((L @ h)[interior]))
        if res > RESIDUAL_TOL * max(1.0, np.abs(L).max()):
            raise ModelError(f"harmonic solve residual {res:.3e} too large")
    else:
        res = 0.0
    h.setflags(write=False)
    return PotentialVector(h, A, B, float(res))


def dirichlet_form(spec: WalkSpec, f, g=None) -> float:
    """(1/2) sum_{x,y} m(x) r(x,y) (f(y)-f(x)) (g(y)-g(x))."""
    f = np.asarray(f, dtype=float)
    g = f if g is None else np.asarray(g, dtype=float)
    df = f[None, :] - f[:, None]
    dg = g[None, :] - g[:, None]
    return 0.5 * float(np.sum(spec.m[:, None] * spec.rates * df * dg))


def capacity(spec: WalkSpec, A, B) -> float:
    """Dirichlet form of the equilibrium potential between A and B."""
    return dirichlet_form(spec, equilibrium_potential(spec, A, B).values)


def flux_capacity(spec: WalkSpec, A, B) -> float:
    """Capacity computed as the outgoing flux -sum_{x in A} m(x) (L h)(x)."""
    pv = equilibrium_potential(spec, A, B)
    Lh = spec.generator() @ pv.values
    return -float(sum(spec.m[x] * Lh[x] for x in pv.source))


@dataclass(frozen=True)
class CoefficientTables:
    """Coefficient families attached to a subset A of S minus x0.

    ``b`` and ``u`` are full kappa x kappa arrays; entries outside A x A
    (for b) or A x A^c (for u) are zero.
    """

    x0: int
    A: frozenset
    b: np.ndarray
    u: np.ndarray
    z: np.ndarray
    caps: dict = field(default_factory=dict)


def coefficient_tables(spec: WalkSpec, x0: int, A) -> CoefficientTables:
    k = spec.kappa
    if not 0 <= int(x0) < k:
        raise ArgumentError("x0 outside the site set")
    x0 = int(x0)
    A = _site_set(spec, A, "A")
    if x0 in A:
        raise ArgumentError("A must be a subset of S minus x0")
    Ac = frozenset(range(k)) - A
    L = spec.generator()
    m = spec.m
    b = np.zeros((k, k))
    u = np.zeros((k, k))
    caps = {}
    for x in sorted(A):
        pv = equilibrium_potential(spec, {x}, Ac)
        cap = dirichlet_form(spec, pv.values)
        caps[x] = cap
        b[x, :] = pv.values / (k * cap)
        Lh = L @ pv.values
        for y in sorted(Ac):
            u[x, y] = m[x] * Lh[y] / cap
    # b vanishes off A x A because h_{x,A^c} vanishes on A^c
    b[:, sorted(Ac)] = 0.0
    bd = np.diag(b)
    z = 0.5 * np.sum(spec.rates * (bd[:, None] + bd[None, :] - 2.0 * b), axis=1)
    for arr in (b, u, z):
        arr.setflags(write=False)
    return CoefficientTables(x0, A, b, u, z, caps)
