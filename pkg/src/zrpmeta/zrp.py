"""Critical zero-range process: rates, stationary measure, wells.

A site holding n particles releases one at rate g(n) = n/(n-1) (g(1) = 1,
g(0) = 0); the particle jumps to y with the walk rate r(x, y). The
stationary law is mu(eta) proportional to 1/prod_x a(eta_x) with
a(0) = 1 and a(n) = n. Logarithms are natural throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numba
import numpy as np

from .errors import ArgumentError, ResourceError
from .walk import WalkSpec

__all__ = [
    "g_rate",
    "a_weight",
    "stationary_weight",
    "ZrpModel",
    "MeasureTables",
    "partition_tables",
    "well_measure",
    "Membership",
    "classify",
    "sample_well",
    "sample_conditioned",
    "WELL_FAMILIES",
]

DEFAULT_BETA = 0.5
PARTITION_CAP = 10_000_000
WELL_FAMILIES = ("E", "D", "W", "Ehat", "Delta", "threshold")


def g_rate(n: int) -> float:
    if n <= 0:
        return 0.0
    if n == 1:
        return 1.0
    return n / (n - 1)


def a_weight(n: int) -> int:
    return n if n >= 1 else 1


def stationary_weight(eta: Sequence[int]) -> float:
    """Unnormalized stationary weight 1/prod_x a(eta_x)."""
    w = 1.0
    for n in eta:
        w /= a_weight(int(n))
    return w


def _check_config(eta, N=None, kappa=None) -> np.ndarray:
    e = np.asarray(eta)
    if e.ndim != 1 or not np.issubdtype(e.dtype, np.integer) or np.any(e < 0):
        raise ArgumentError("configuration must be a vector of nonnegative integers")
    if kappa is not None and e.size != kappa:
        raise ArgumentError(f"configuration has {e.size} sites, expected {kappa}")
    if N is not None and int(e.sum()) != N:
        raise ArgumentError(f"configuration holds {int(e.sum())} particles, expected {N}")
    return e.astype(np.int64)


@dataclass(frozen=True)
class ZrpModel:
    """N particles on the sites of ``walk``.

    gamma and beta set the deep well width floor(N**gamma) and the shallow
    well width floor(N / log(N)**beta). The ordinary well width is
    ell = floor(N / log N) and the time scale is theta = N**2 log N.
    """

    N: int
    walk: WalkSpec
    gamma: float | None = None
    beta: float | None = None

    def __post_init__(self):
        if not isinstance(self.N, (int, np.integer)) or self.N < 2:
            raise ArgumentError(f"N must be an integer >= 2, got {self.N!r}")
        object.__setattr__(self, "N", int(self.N))
        k = self.walk.kappa
        gamma = min(0.4, 1.0 / k) if self.gamma is None else float(self.gamma)
        beta = DEFAULT_BETA if self.beta is None else float(self.beta)
        if not 0 < gamma < 2.0 / k:
            raise ArgumentError(f"gamma must lie in (0, 2/kappa) = (0, {2.0 / k:.4g}), got {gamma}")
        if not 0 < beta < 1:
            raise ArgumentError(f"beta must lie in (0, 1), got {beta}")
        object.__setattr__(self, "gamma", gamma)
        object.__setattr__(self, "beta", beta)

    @property
    def kappa(self) -> int:
        return self.walk.kappa

    @property
    def log_n(self) -> float:
        return math.log(self.N)

    @property
    def ell(self) -> int:
        return int(math.floor(self.N / self.log_n))

    @property
    def deep_width(self) -> int:
        return int(math.floor(self.N ** self.gamma))

    @property
    def shallow_width(self) -> int:
        return int(math.floor(self.N / self.log_n ** self.beta))

    @property
    def theta(self) -> float:
        return self.N ** 2 * self.log_n

    @property
    def wells_disjoint(self) -> bool:
        return 2 * (self.N - self.ell) > self.N

    def to_dict(self) -> dict:
        return {"N": self.N, "walk": self.walk.to_dict(), "gamma": self.gamma, "beta": self.beta}

    @classmethod
    def from_dict(cls, d: dict) -> "ZrpModel":
        if not isinstance(d, dict) or "N" not in d or "walk" not in d:
            raise ArgumentError("model needs keys 'N' and 'walk'")
        return cls(d["N"], WalkSpec.from_dict(d["walk"]), d.get("gamma"), d.get("beta"))

    def with_n(self, N: int) -> "ZrpModel":
        return ZrpModel(N, self.walk, self.gamma, self.beta)

    @cached_property
    def tables(self) -> "MeasureTables":
        return partition_tables(self.N, self.kappa)


@numba.njit(cache=True)
def _kahan_convolve(a, b, n):
    # c[M] = sum_{i=0}^{M} a[M-i] b[i], compensated
    out = np.zeros(n + 1)
    for M in range(n + 1):
        s = 0.0
        comp = 0.0
        for i in range(M + 1):
            y = a[M - i] * b[i] - comp
            t = s + y
            comp = (t - s) - y
            s = t
        out[M] = s
    return out


def _inv_a(n: int, cutoff: int | None = None) -> np.ndarray:
    w = 1.0 / np.maximum(np.arange(n + 1, dtype=float), 1.0)
    if cutoff is not None:
        w[cutoff + 1:] = 0.0
    return w


@dataclass(frozen=True)
class MeasureTables:
    """Partial partition sums S_k(M) = sum over k-site configurations of M particles of 1/a.

    ``S[k-1, M]`` holds S_k(M) for k = 1..kappa-1; ``total`` is S_kappa(N)
    and ``Z`` the normalized constant N / log(N)**(kappa-1) * total.
    """

    N: int
    kappa: int
    S: np.ndarray
    total: float

    @property
    def Z(self) -> float:
        return self.N / math.log(self.N) ** (self.kappa - 1) * self.total


def partition_tables(N: int, kappa: int, cap: int = PARTITION_CAP) -> MeasureTables:
    if N < 2:
        raise ArgumentError("N must be at least 2")
    if kappa < 2:
        raise ArgumentError("kappa must be at least 2")
    if N > cap:
        raise ResourceError(f"N={N} exceeds the partition table cap {cap}")
    w = _inv_a(N)
    S = np.empty((kappa - 1, N + 1))
    S[0] = w
    for k in range(1, kappa - 1):
        S[k] = _kahan_convolve(S[k - 1], w, N)
    total = math.fsum((S[kappa - 2][::-1] * w).tolist())
    S.setflags(write=False)
    return MeasureTables(N, kappa, S, total)


def _upper_tail(model: ZrpModel, p: int) -> float:
    """mu{eta_x >= N - p} by summing over the occupation of x."""
    N = model.N
    t = model.tables
    Sk = t.S[model.kappa - 2]
    terms = (Sk[N - j] / a_weight(j) for j in range(N - p, N + 1))
    return math.fsum(terms) / t.total


def _ehat_measure(model: ZrpModel) -> float:
    N, k, ell = model.N, model.kappa, model.ell
    wl = _inv_a(N, cutoff=ell)
    top = min(N, (k - 1) * ell)
    T = wl[: top + 1].copy()
    for _ in range(k - 2):
        T = _kahan_convolve(T, wl[: top + 1], top)
    terms = (T[N - j] / a_weight(j) for j in range(max(0, N - top), N + 1))
    return math.fsum(terms) / model.tables.total


def well_measure(model: ZrpModel, family: str, x: int = 0, p: int | None = None) -> float:
    """Exact stationary probability of a well.

    family is one of E, D, W (tail events at x), Ehat (all other sites
    hold at most ell), Delta (outside every E well) or threshold, which
    needs ``p`` and returns mu{eta_x >= N - p}. The measure is exchangeable,
    so the value does not depend on x beyond validation.
    """
    if not 0 <= int(x) < model.kappa:
        raise ArgumentError("site outside the site set")
    if family == "E":
        return _upper_tail(model, model.ell)
    if family == "D":
        return _upper_tail(model, model.deep_width)
    if family == "W":
        return _upper_tail(model, model.shallow_width)
    if family == "threshold":
        if p is None or p < 0 or p >= model.N:
            raise ArgumentError(f"threshold p must satisfy 0 <= p < N, got {p!r}")
        return _upper_tail(model, int(p))
    if family == "Ehat":
        return _ehat_measure(model)
    if family == "Delta":
        if not model.wells_disjoint:
            raise ArgumentError("wells overlap at this N; Delta is not 1 - sum of well masses")
        return 1.0 - model.kappa * _upper_tail(model, model.ell)
    raise ArgumentError(f"unknown well family {family!r}; expected one of {WELL_FAMILIES}")


@dataclass(frozen=True)
class Membership:
    E: tuple[bool, ...]
    D: tuple[bool, ...]
    W: tuple[bool, ...]
    Ehat: tuple[bool, ...]
    delta: bool
    x0: int | None = None
    u_status: str | None = None  # "interior", "boundary" or "outside"


def neighbors(walk: WalkSpec, eta: np.ndarray):
    """Distinct configurations sigma^{x,y} eta over r(x,y) > 0, eta_x > 0."""
    r = walk.rates
    for x in range(walk.kappa):
        if eta[x] == 0:
            continue
        for y in range(walk.kappa):
            if r[x, y] > 0:
                z = eta.copy()
                z[x] -= 1
                z[y] += 1
                yield z


def _in_core(model: ZrpModel, eta, x0: int) -> bool:
    n = eta[x0]
    return model.N - model.shallow_width <= n < model.N - model.deep_width


def _in_u(model: ZrpModel, eta, x0: int) -> bool:
    if _in_core(model, eta, x0):
        return True
    return any(_in_core(model, z, x0) for z in neighbors(model.walk, eta))


def classify(model: ZrpModel, eta, x0: int | None = None) -> Membership:
    e = _check_config(eta, model.N, model.kappa)
    N = model.N
    E = tuple(bool(e[x] >= N - model.ell) for x in model.walk.sites)
    D = tuple(bool(e[x] >= N - model.deep_width) for x in model.walk.sites)
    W = tuple(bool(e[x] >= N - model.shallow_width) for x in model.walk.sites)
    Eh = tuple(
        bool(all(e[y] <= model.ell for y in model.walk.sites if y != x)) for x in model.walk.sites
    )
    status = None
    if x0 is not None:
        if _in_u(model, e, x0):
            inner = all(_in_u(model, z, x0) for z in neighbors(model.walk, e))
            status = "interior" if inner else "boundary"
        else:
            status = "outside"
    return Membership(E, D, W, Eh, not any(E), x0, status)


def sample_well(model: ZrpModel, x: int, rng: np.random.Generator) -> np.ndarray:
    """Exact draw from mu conditioned on the well E^x."""
    return sample_conditioned(model, x, model.N - model.ell, model.N, rng)


def sample_conditioned(model: ZrpModel, x: int, lo: int, hi: int, rng: np.random.Generator) -> np.ndarray:
    """Exact draw from mu conditioned on lo <= eta_x <= hi."""
    N, k = model.N, model.kappa
    lo, hi = max(int(lo), 0), min(int(hi), N)
    if lo > hi:
        raise ArgumentError("empty occupation range")
    if not 0 <= x < k:
        raise ArgumentError("site outside the site set")
    S = model.tables.S
    js = np.arange(lo, hi + 1)
    w = S[k - 2][N - js] / np.maximum(js, 1)
    j = int(js[_pick(w, rng.random())])
    eta = np.zeros(k, dtype=np.int64)
    eta[x] = j
    others = [y for y in range(k) if y != x]
    M = N - j
    for idx, y in enumerate(others[:-1]):
        rest = k - 2 - idx  # sites still to fill after y
        vs = np.arange(M + 1)
        w = S[rest - 1][M - vs] / np.maximum(vs, 1)
        v = int(_pick(w, rng.random()))
        eta[y] = v
        M -= v
    eta[others[-1]] = M
    return eta


def _pick(weights: np.ndarray, u: float) -> int:
    c = np.cumsum(weights)
    return int(min(np.searchsorted(c, u * c[-1], side="right"), len(c) - 1))
