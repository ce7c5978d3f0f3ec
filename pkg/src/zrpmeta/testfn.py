"""Cutoff profiles, tube geometry and the test functions U_{x,y} and V^g.

All evaluators are vectorized over arrays of configurations with shape
(n, kappa). ``eps`` controls the width of the enlarged valleys and of the
tubes joining them.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ResourceError
from .exact_engine import DEFAULT_STATE_CAP, StateIndex, assemble_generator, exact_capacity, region_mask
from .walk import WalkSpec, equilibrium_potential
from .zrp import ZrpModel

__all__ = [
    "CutoffProfile",
    "profiles",
    "RegionAtlas",
    "enumeration",
    "u_xy",
    "band_ramp",
    "v_g",
    "CapacityBound",
    "capacity_upper_bound",
    "lipschitz_constant",
]


@dataclass(frozen=True)
class CutoffProfile:
    """Nondecreasing bijection phi of [0, 1] and its smoothed step Phi.

    phi vanishes on [0, 3 eps], is linear with slope 1/(1 - 8 eps) on
    [5 eps, 1 - 5 eps] and equals 1 on [1 - 3 eps, 1]. On [3 eps, 5 eps]
    the C1 cubic Hermite bridge between the flat and linear pieces
    degenerates to the parabola slope * (t - 3 eps)**2 / (4 eps); the
    upper side follows from phi(t) = 1 - phi(1 - t).
    """

    eps: float

    @property
    def slope(self) -> float:
        return 1.0 / (1.0 - 8.0 * self.eps)

    def _lower(self, t):
        e, s = self.eps, self.slope
        return np.where(
            t <= 3 * e,
            0.0,
            np.where(t < 5 * e, s * (t - 3 * e) ** 2 / (4 * e), s * (t - 4 * e)),
        )

    def _dlower(self, t):
        e, s = self.eps, self.slope
        return np.where(t <= 3 * e, 0.0, np.where(t < 5 * e, s * (t - 3 * e) / (2 * e), s))

    def phi(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
        return np.where(t <= 0.5, self._lower(t), 1.0 - self._lower(1.0 - t))

    def dphi(self, t):
        t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
        return np.where(t <= 0.5, self._dlower(t), self._dlower(1.0 - t))

    def Phi(self, t):
        p = self.phi(t)
        return 3 * p**2 - 2 * p**3

    def dPhi(self, t):
        p = self.phi(t)
        return 6 * p * (1 - p) * self.dphi(t)


def profiles(eps: float) -> CutoffProfile:
    if not 0 < eps <= 1 / 16:
        raise ArgumentError(f"eps must lie in (0, 1/16], got {eps!r}")
    return CutoffProfile(float(eps))


def _states(states) -> np.ndarray:
    s = np.asarray(states)
    if s.ndim == 1:
        s = s[None, :]
    return s


class RegionAtlas:
    """Membership masks for the valleys, tubes and their unions."""

    def __init__(self, model: ZrpModel, eps: float):
        self.model = model
        self.eps = float(eps)
        self.N = model.N
        self.kappa = model.kappa
        self.pairs = list(itertools.combinations(range(self.kappa), 2))

    def V(self, s, x):
        return _states(s)[:, x] >= self.N * (1 - 2 * self.eps)

    def Vhat(self, s, x):
        return _states(s)[:, x] >= self.N * (1 - 4 * self.eps)

    def T(self, s, x, y):
        s = _states(s)
        return s[:, x] + s[:, y] >= self.N - self.model.ell

    def That(self, s, x, y):
        s = _states(s)
        return s[:, x] + s[:, y] >= self.N * (1 - 3 * self.eps)

    def J(self, s, x, y):
        return self.T(s, x, y) & ~self.V(s, x) & ~self.V(s, y)

    def Jhat(self, s, x, y):
        return self.That(s, x, y) & ~self.Vhat(s, x) & ~self.Vhat(s, y)

    def K(self, s, x, y):
        s = _states(s)
        low = (s[:, x] < 6 * self.N * self.eps) | (s[:, y] < 6 * self.N * self.eps)
        return self.J(s, x, y) & low

    def L(self, s, x, y):
        s = _states(s)
        high = (s[:, x] >= 6 * self.N * self.eps) & (s[:, y] >= 6 * self.N * self.eps)
        return self.J(s, x, y) & high

    def G(self, s):
        s = _states(s)
        out = np.zeros(s.shape[0], dtype=bool)
        for x in range(self.kappa):
            out |= self.V(s, x)
        for x, y in self.pairs:
            out |= self.J(s, x, y)
        return out

    def Ghat(self, s):
        s = _states(s)
        out = np.zeros(s.shape[0], dtype=bool)
        for x in range(self.kappa):
            out |= self.Vhat(s, x)
        for x, y in self.pairs:
            out |= self.Jhat(s, x, y)
        return out


def enumeration(spec: WalkSpec, x: int, y: int) -> tuple[list[int], np.ndarray]:
    """Sites ordered from x to y by decreasing h_{x,y}.

    For x < y ties are broken by increasing index; the order for (y, x)
    is the exact reversal, so U_{y,x} = 1 - U_{x,y} identically.
    """
    if x == y:
        raise ArgumentError("x and y must differ")
    if x > y:
        order, _ = enumeration(spec, y, x)
        h = equilibrium_potential(spec, {x}, {y}).values
        return order[::-1], h
    h = equilibrium_potential(spec, {x}, {y}).values
    order = sorted(range(spec.kappa), key=lambda z: (-h[z], z))
    return order, h


def u_xy(spec: WalkSpec, x: int, y: int, profile: CutoffProfile, states) -> np.ndarray:
    s = _states(states).astype(float)
    N = s[0].sum()
    order, h = enumeration(spec, x, y)
    partial = np.cumsum(s[:, order], axis=1) / N
    out = np.zeros(s.shape[0])
    for j in range(spec.kappa - 1):
        out += (h[order[j]] - h[order[j + 1]]) * profile.Phi(partial[:, j])
    return out


def band_ramp(model: ZrpModel, eps: float, states) -> np.ndarray:
    """Cutoff equal to 1 on the union of valleys and tubes and 0 off its enlargement.

    It is the larger of a valley term, linear in eta_x between N(1 - 4 eps)
    and N(1 - 2 eps), and a pair term, linear in eta_x + eta_y between
    N(1 - 3 eps) and N - ell. When N - ell <= N(1 - 3 eps) the pair term
    degenerates to the indicator of the enlarged tube.
    """
    s = _states(states).astype(float)
    N, k = model.N, model.kappa
    lo_v, hi_v = N * (1 - 4 * eps), N * (1 - 2 * eps)
    out = np.clip((s - lo_v) / (hi_v - lo_v), 0.0, 1.0).max(axis=1)
    lo_p, hi_p = N * (1 - 3 * eps), float(N - model.ell)
    for x, y in itertools.combinations(range(k), 2):
        t = s[:, x] + s[:, y]
        if hi_p > lo_p:
            r = np.clip((t - lo_p) / (hi_p - lo_p), 0.0, 1.0)
        else:
            r = (t >= lo_p).astype(float)
        out = np.maximum(out, r)
    return out


def v_g(model: ZrpModel, g, profile: CutoffProfile, states) -> np.ndarray:
    """Test function equal to g(x) near the valley of x, interpolated along tubes.

    Between the union of valleys and tubes and its enlargement the value
    is the tube formula for the pair carrying the most particles
    (lexicographic tie-break) times ``band_ramp``.
    """
    g = np.asarray(g, dtype=float)
    if g.shape != (model.kappa,):
        raise ArgumentError("g must have one value per site")
    s = _states(states)
    atlas = RegionAtlas(model, profile.eps)
    out = np.zeros(s.shape[0])
    done = np.zeros(s.shape[0], dtype=bool)
    for x in range(model.kappa):
        m = atlas.V(s, x) & ~done
        out[m] = g[x]
        done |= m
    for x, y in atlas.pairs:
        m = atlas.J(s, x, y) & ~done
        if np.any(m):
            out[m] = g[y] + (g[x] - g[y]) * u_xy(model.walk, x, y, profile, s[m])
        done |= m
    band = atlas.Ghat(s) & ~done
    if np.any(band):
        sb = s[band]
        sums = np.array([sb[:, x] + sb[:, y] for x, y in atlas.pairs])
        best = np.argmax(sums, axis=0)
        vals = np.zeros(sb.shape[0])
        for p, (x, y) in enumerate(atlas.pairs):
            m = best == p
            if np.any(m):
                vals[m] = g[y] + (g[x] - g[y]) * u_xy(model.walk, x, y, profile, sb[m])
        out[band] = vals * band_ramp(model, profile.eps, sb)
    return out


@dataclass(frozen=True)
class CapacityBound:
    """Dirichlet-principle bound on cap_N(E^x, Ebreve^x).

    ``value`` is the speeded Dirichlet form of V^{chi_x} after imposing
    1 on E^x and 0 on the other wells, which makes it an admissible test
    function at every N. ``raw`` is the form of V^{chi_x} itself and
    ``admissible`` records whether it already satisfied both constraints
    and ``n_condition`` whether 1/N <= eps/2, the range where the tube
    construction is meant to apply. Neither flag blocks the computation.
    """

    value: float
    raw: float
    admissible: bool
    exact: float | None = None
    n_condition: bool = True


def capacity_upper_bound(
    model: ZrpModel,
    x: int,
    profile: CutoffProfile,
    cap: int = DEFAULT_STATE_CAP,
    with_exact: bool = False,
    generator=None,
) -> CapacityBound:
    gen = generator if generator is not None else assemble_generator(model, speeded=True, cap=cap)
    st = gen.states
    chi = np.zeros(model.kappa)
    chi[x] = 1.0
    V = v_g(model, chi, profile, st)
    A = region_mask(model, st, "E", x)
    B = region_mask(model, st, "Ebreve", x)
    admissible = bool(np.all(V[A] == 1.0) and np.all(V[B] == 0.0))
    raw = gen.dirichlet(V)
    F = V.copy()
    F[A] = 1.0
    F[B] = 0.0
    value = gen.dirichlet(F)
    exact = exact_capacity(model, A, B, generator=gen) if with_exact else None
    return CapacityBound(value, raw, admissible, exact, 1.0 / model.N <= profile.eps / 2)


def lipschitz_constant(model: ZrpModel, g, profile: CutoffProfile, cap: int = DEFAULT_STATE_CAP) -> float:
    """max over neighbouring configurations of N |V^g(sigma eta) - V^g(eta)| / ||g||_inf."""
    idx = StateIndex(model.N, model.kappa)
    if idx.size > cap:
        raise ResourceError(f"{idx.size} configurations exceed the cap {cap}")
    st = idx.enumerate()
    V = v_g(model, g, profile, st)
    gnorm = float(np.max(np.abs(g)))
    if gnorm == 0:
        return 0.0
    worst = 0.0
    r = model.walk.rates
    for z in range(model.kappa):
        for w in range(model.kappa):
            if z == w or r[z, w] <= 0:
                continue
            m = st[:, z] > 0
            tgt = st[m].copy()
            tgt[:, z] -= 1
            tgt[:, w] += 1
            j = idx.rank(tgt)
            worst = max(worst, float(np.max(np.abs(V[j] - V[m]))))
    return model.N * worst / gnorm
