"""Exact linear algebra on the configuration simplex H_N.

Configurations are ranked lexicographically through the combinatorial
number system, so every set of states is an integer array of ranks and
the generator is a scipy CSR matrix. The chain is reversible, so solves
run in the mu-weighted inner product where the generator is symmetric.
"""
from __future__ import annotations

import math
import struct
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ArgumentError, NumericError, ResourceError
from .walk import WalkSpec, capacity as walk_capacity
from .zrp import ZrpModel

__all__ = [
    "StateIndex",
    "SparseGenerator",
    "assemble_generator",
    "region_mask",
    "restricted_states",
    "PoissonResult",
    "solve_poisson",
    "exact_capacity",
    "restricted_gap",
    "birth_death_product_gap",
    "symmetric_gap",
    "comparison_path",
    "walk_path",
    "PathAudit",
    "audit_comparison_paths",
    "dump_triplets",
    "load_triplets",
    "DEFAULT_STATE_CAP",
    "DENSE_LIMIT",
]

DEFAULT_STATE_CAP = 2_000_000
DENSE_LIMIT = 5000


class StateIndex:
    """Lexicographic ranking of compositions of N into kappa parts."""

    def __init__(self, N: int, kappa: int):
        if N < 0 or kappa < 1:
            raise ArgumentError("need N >= 0 and kappa >= 1")
        self.N = int(N)
        self.kappa = int(kappa)
        # binom[n, s] = C(n, s) for n <= N + kappa, s <= kappa
        nmax = self.N + self.kappa + 1
        b = np.zeros((nmax + 1, self.kappa + 1), dtype=np.int64)
        b[:, 0] = 1
        for n in range(1, nmax + 1):
            b[n, 1:] = b[n - 1, 1:] + b[n - 1, :-1]
        self._binom = b
        self.size = math.comb(self.N + self.kappa - 1, self.kappa - 1)

    def _count(self, n, s):
        # compositions of n into s parts: C(n+s-1, s-1)
        return self._binom[n + s - 1, s - 1]

    def rank(self, states) -> np.ndarray:
        st = np.atleast_2d(np.asarray(states, dtype=np.int64))
        k = self.kappa
        R = np.full(st.shape[0], self.N, dtype=np.int64)
        out = np.zeros(st.shape[0], dtype=np.int64)
        b = self._binom
        for i in range(k - 1):
            s = k - i - 1  # sites after position i
            t = st[:, i]
            # sum_{v<t} C(R-v+s-1, s-1) = C(R+s, s) - C(R-t+s, s)
            out += b[R + s, s] - b[R - t + s, s]
            R = R - t
        return out

    def unrank(self, r: int) -> np.ndarray:
        r = int(r)
        if not 0 <= r < self.size:
            raise ArgumentError("rank out of range")
        k = self.kappa
        eta = np.zeros(k, dtype=np.int64)
        R = self.N
        for i in range(k - 1):
            s = k - i - 1
            v = 0
            while True:
                c = int(self._count(R - v, s))
                if r < c:
                    break
                r -= c
                v += 1
            eta[i] = v
            R -= v
        eta[k - 1] = R
        return eta

    def enumerate(self) -> np.ndarray:
        """All configurations in rank order, shape (size, kappa)."""
        return _compositions(self.N, self.kappa)


def _compositions(N: int, k: int) -> np.ndarray:
    if k == 1:
        return np.array([[N]], dtype=np.int64)
    blocks = []
    for v in range(N + 1):
        rest = _compositions(N - v, k - 1)
        blocks.append(np.hstack([np.full((rest.shape[0], 1), v, dtype=np.int64), rest]))
    return np.vstack(blocks)


def _g_vec(n: np.ndarray) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    out = np.zeros_like(n)
    out[n == 1] = 1.0
    big = n >= 2
    out[big] = n[big] / (n[big] - 1.0)
    return out


def _weights(states: np.ndarray) -> np.ndarray:
    a = np.maximum(states, 1).astype(float)
    return 1.0 / np.prod(a, axis=1)


@dataclass
class SparseGenerator:
    """Generator restricted to ``states``, with jumps leaving them deleted.

    ``L`` is CSR; ``mu`` is the stationary law normalized on ``states``.
    If ``speeded`` the rates are multiplied by theta.
    """

    model: ZrpModel
    states: np.ndarray
    ranks: np.ndarray
    L: sp.csr_matrix
    mu: np.ndarray
    speeded: bool
    restricted: bool = False
    _offdiag: tuple | None = field(default=None, repr=False)

    @property
    def size(self) -> int:
        return self.states.shape[0]

    def index_of(self, states) -> np.ndarray:
        """Local indices of configurations; -1 for those not in the set."""
        idx = StateIndex(self.model.N, self.model.kappa)
        r = idx.rank(states)
        pos = np.searchsorted(self.ranks, r)
        pos = np.minimum(pos, self.size - 1)
        return np.where(self.ranks[pos] == r, pos, -1)

    def offdiag(self):
        if self._offdiag is None:
            C = self.L.tocoo()
            keep = C.row != C.col
            self._offdiag = (C.row[keep], C.col[keep], C.data[keep])
        return self._offdiag

    def dirichlet(self, F, G=None) -> float:
        """(1/2) sum mu(eta) L(eta,zeta) (F(zeta)-F(eta)) (G(zeta)-G(eta))."""
        F = np.asarray(F, dtype=float)
        G = F if G is None else np.asarray(G, dtype=float)
        i, j, w = self.offdiag()
        return 0.5 * float(np.sum(self.mu[i] * w * (F[j] - F[i]) * (G[j] - G[i])))

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.L.sum(axis=1)).ravel()

    def symmetrized(self) -> sp.csr_matrix:
        """D^{1/2} (-L) D^{-1/2}, symmetric positive semidefinite."""
        s = np.sqrt(self.mu)
        S = sp.diags(s) @ (-self.L) @ sp.diags(1.0 / s)
        S = 0.5 * (S + S.T)
        return S.tocsr()


def region_mask(model: ZrpModel, states: np.ndarray, kind: str, x: int | None = None) -> np.ndarray:
    """Vectorized membership in the named wells.

    kind: E, D, W, Ehat, Ebreve (union of E^y over y != x), Delta,
    core (W minus D at x).
    """
    N = model.N
    k = model.kappa
    if kind == "Delta":
        return ~np.any(states >= N - model.ell, axis=1)
    if x is None or not 0 <= x < k:
        raise ArgumentError(f"region {kind!r} needs a site")
    col = states[:, x]
    if kind == "E":
        return col >= N - model.ell
    if kind == "D":
        return col >= N - model.deep_width
    if kind == "W":
        return col >= N - model.shallow_width
    if kind == "core":
        return (col >= N - model.shallow_width) & (col < N - model.deep_width)
    others = [y for y in range(k) if y != x]
    if kind == "Ehat":
        return np.all(states[:, others] <= model.ell, axis=1)
    if kind == "Ebreve":
        return np.any(states[:, others] >= N - model.ell, axis=1)
    raise ArgumentError(f"unknown region kind {kind!r}")


def restricted_states(model: ZrpModel, x0: int, ell: int | None = None) -> np.ndarray:
    """States of Ehat^{x0}: every site but x0 holds at most ell particles.

    Built through the bijection omega -> (N - |omega|, omega) on
    {0..ell}^{S_0}, returned in rank order.
    """
    ell = model.ell if ell is None else int(ell)
    k = model.kappa
    grids = np.meshgrid(*[np.arange(ell + 1)] * (k - 1), indexing="ij")
    omega = np.stack([g.ravel() for g in grids], axis=1).astype(np.int64)
    top = model.N - omega.sum(axis=1)
    omega = omega[top >= 0]
    top = top[top >= 0]
    states = np.insert(omega, x0, top, axis=1)
    idx = StateIndex(model.N, k)
    order = np.argsort(idx.rank(states), kind="stable")
    return states[order]


def assemble_generator(
    model: ZrpModel,
    speeded: bool = False,
    restriction: np.ndarray | Callable | None = None,
    cap: int = DEFAULT_STATE_CAP,
) -> SparseGenerator:
    """Sparse generator on H_N, or on a subset with outgoing jumps deleted.

    ``restriction`` may be an array of configurations or a predicate
    mapping a (n, kappa) state array to a boolean mask.
    """
    idx = StateIndex(model.N, model.kappa)
    if restriction is None or callable(restriction):
        if idx.size > cap:
            raise ResourceError(f"|H_N| = {idx.size} exceeds the state cap {cap}")
        states = idx.enumerate()
        if callable(restriction):
            states = states[np.asarray(restriction(states), dtype=bool)]
    else:
        states = np.asarray(restriction, dtype=np.int64)
        if states.shape[0] > cap:
            raise ResourceError(f"restricted set of {states.shape[0]} states exceeds the cap {cap}")
    restricted = restriction is not None
    if states.shape[0] == 0:
        raise ArgumentError("empty state set")
    ranks = idx.rank(states)
    order = np.argsort(ranks, kind="stable")
    states, ranks = states[order], ranks[order]
    n = states.shape[0]
    r = model.walk.rates
    scale = model.theta if speeded else 1.0
    rows, cols, vals = [], [], []
    gx_all = _g_vec(states)
    for x in range(model.kappa):
        src = np.flatnonzero(states[:, x] > 0)
        if src.size == 0:
            continue
        for y in range(model.kappa):
            if r[x, y] <= 0:
                continue
            tgt = states[src].copy()
            tgt[:, x] -= 1
            tgt[:, y] += 1
            tr = idx.rank(tgt)
            pos = np.minimum(np.searchsorted(ranks, tr), n - 1)
            ok = ranks[pos] == tr
            rows.append(src[ok])
            cols.append(pos[ok])
            vals.append(scale * r[x, y] * gx_all[src[ok], x])
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    out = np.bincount(rows, weights=vals, minlength=n)
    L = sp.coo_matrix(
        (np.concatenate([vals, -out]), (np.concatenate([rows, np.arange(n)]), np.concatenate([cols, np.arange(n)]))),
        shape=(n, n),
    ).tocsr()
    w = _weights(states)
    mu = w / math.fsum(w)
    return SparseGenerator(model, states, ranks, L, mu, speeded, restricted)


# ---------------------------------------------------------------- solvers


def _pcg(apply_A, b, diag, tol, maxiter, deflate=None, check=None):
    """Jacobi-preconditioned CG; ``deflate`` is a unit vector projected out."""

    def proj(v):
        if deflate is None:
            return v
        return v - deflate * (deflate @ v)

    b = proj(b)
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b)
    if bnorm == 0:
        return x, 0.0, 0
    r = b.copy()
    Minv = 1.0 / diag
    z = proj(Minv * r)
    p = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        Ap = apply_A(p)
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        if it % 50 == 0:
            r = proj(b - apply_A(x))  # refresh against drift
        res = np.linalg.norm(r) / bnorm
        if res <= tol and (check is None or check(x)):
            return proj(x), res, it
        z = proj(Minv * r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise NumericError(f"CG did not converge in {maxiter} iterations; relative residual {res:.3e}")


@dataclass
class PoissonResult:
    F: np.ndarray
    f_N: np.ndarray
    max_error: float
    energy: float
    diagnostics: dict
    generator: SparseGenerator


def limit_generator_action(spec: WalkSpec, f) -> np.ndarray:
    """(L_Z f)(x) = sum_y r_Z(x,y) (f(y) - f(x)) with r_Z = 6 kappa cap_X."""
    k = spec.kappa
    f = np.asarray(f, dtype=float)
    out = np.zeros(k)
    for x in range(k):
        for y in range(k):
            if x != y:
                out[x] += 6 * k * walk_capacity(spec, {x}, {y}) * (f[y] - f[x])
    return out


def solve_poisson(
    model: ZrpModel,
    f,
    lam: float = 0.0,
    cap: int = DEFAULT_STATE_CAP,
    tol: float = 1e-9,
    maxiter: int = 200_000,
    method: str = "auto",
    generator: SparseGenerator | None = None,
) -> PoissonResult:
    """Solve (-lam + theta L_N) F = G with G = sum_x (-lam f + L_Z f)(x) 1{E^x}.

    At lam = 0 the constant mode is deflated and F is shifted so that
    sum_x f_N(x) = sum_x f(x), where f_N(x) is the mean of F under mu
    conditioned on E^x.
    """
    if lam < 0:
        raise ArgumentError("lambda must be nonnegative")
    f = np.asarray(f, dtype=float)
    k = model.kappa
    if f.shape != (k,):
        raise ArgumentError(f"f must have length {k}")
    if not model.wells_disjoint:
        raise ArgumentError("wells overlap at this N")
    gen = generator if generator is not None else assemble_generator(model, speeded=True, cap=cap)
    if not gen.speeded or gen.restricted:
        raise ArgumentError("Poisson solve needs the full speeded generator")
    st, mu = gen.states, gen.mu
    coef = -lam * f + limit_generator_action(model.walk, f)
    masks = [region_mask(model, st, "E", x) for x in range(k)]
    G = np.zeros(gen.size)
    for x in range(k):
        G[masks[x]] = coef[x]
    s = np.sqrt(mu)
    S = gen.symmetrized()
    n = gen.size
    b = -s * G
    use_dense = method == "dense" or (method == "auto" and n < DENSE_LIMIT)
    Gnorm = float(np.max(np.abs(G))) if n else 0.0
    if use_dense:
        A = S.toarray() + lam * np.eye(n)
        if lam == 0:
            A += np.outer(s, s)
        y = np.linalg.solve(A, b)
        iters, method_used = 0, "dense-lu"
    else:
        diag = S.diagonal() + lam
        diag = np.where(diag > 0, diag, 1.0)

        def apply_A(v):
            return S @ v + lam * v

        def sup_ok(y):
            F = y / s
            return np.max(np.abs(gen.L @ F - lam * F - G)) <= 1e-8 * max(Gnorm, 1e-300)

        y, _, iters = _pcg(apply_A, b, diag, tol, maxiter, deflate=s if lam == 0 else None, check=sup_ok)
        method_used = "pcg"
    F = y / s
    fN = np.array([mu[m] @ F[m] / mu[m].sum() for m in masks])
    if lam == 0:
        shift = (f.sum() - fN.sum()) / k
        F = F + shift
        fN = fN + shift
    resid = gen.L @ F - lam * F - G
    rel_sup = float(np.max(np.abs(resid)) / Gnorm) if Gnorm > 0 else float(np.max(np.abs(resid)))
    energy = gen.dirichlet(F)
    diag_info = {
        "method": method_used,
        "iterations": iters,
        "states": n,
        "relative_sup_residual": rel_sup,
        "energy_identity_gap": float(lam * (mu @ F**2) + energy + mu @ (F * G)),
    }
    if Gnorm > 0 and rel_sup > max(1e-8, 10 * tol):
        raise NumericError(f"Poisson residual {rel_sup:.3e} above tolerance")
    return PoissonResult(F, fN, float(np.max(np.abs(fN - f))), energy, diag_info, gen)


def exact_capacity(
    model: ZrpModel,
    A,
    B,
    generator: SparseGenerator | None = None,
    cap: int = DEFAULT_STATE_CAP,
    tol: float = 1e-11,
    return_potential: bool = False,
):
    """cap_N(A, B): speeded Dirichlet form of the equilibrium potential.

    A and B are boolean masks over the states of ``generator`` (the full
    speeded generator by default) or predicates on the state array.
    """
    gen = generator if generator is not None else assemble_generator(model, speeded=True, cap=cap)
    if not gen.speeded:
        raise ArgumentError("capacity uses the speeded generator")
    mA = np.asarray(A(gen.states) if callable(A) else A, dtype=bool)
    mB = np.asarray(B(gen.states) if callable(B) else B, dtype=bool)
    if mA.shape != (gen.size,) or mB.shape != (gen.size,):
        raise ArgumentError("A and B must be masks over the generator states")
    if not mA.any() or not mB.any():
        raise ArgumentError("A and B must be nonempty")
    if np.any(mA & mB):
        raise ArgumentError("A and B must be disjoint")
    h = mA.astype(float)
    C = ~(mA | mB)
    if C.any():
        # symmetric system: (mu (-L))_CC h_C = (mu L)_CA 1
        M = (sp.diags(gen.mu) @ (-gen.L)).tocsr()
        M = 0.5 * (M + M.T)
        ci = np.flatnonzero(C)
        Mcc = M[ci][:, ci].tocsr()
        rhs = -(M[ci][:, np.flatnonzero(mA)] @ np.ones(int(mA.sum())))
        if ci.size < DENSE_LIMIT:
            hc = np.linalg.solve(Mcc.toarray(), rhs)
        else:
            d = Mcc.diagonal()
            # scale rows/cols to unit diagonal before CG
            sc = 1.0 / np.sqrt(d)
            Ms = sp.diags(sc) @ Mcc @ sp.diags(sc)
            ys, _, _ = _pcg(lambda v: Ms @ v, sc * rhs, np.ones_like(d), tol, 500_000)
            hc = sc * ys
        h[ci] = hc
    value = gen.dirichlet(h)
    if return_potential:
        return value, h
    return value


# ------------------------------------------------------------ spectral gap


def symmetric_gap(S: sp.spmatrix, v0: np.ndarray, tol: float = 1e-10, block: int = 4, maxiter: int = 2000) -> float:
    """Smallest eigenvalue of the PSD matrix S on the complement of v0.

    Block inverse iteration with a small positive shift and Rayleigh-Ritz
    projection; v0 (the known null vector) is projected out each step.
    """
    n = S.shape[0]
    v0 = v0 / np.linalg.norm(v0)
    if n <= 1:
        raise NumericError("need at least two states")
    if n <= 400:
        w = np.linalg.eigvalsh(S.toarray() if sp.issparse(S) else S)
        return float(np.sort(w)[1])
    scale = float(np.max(np.abs(S.diagonal())))
    tau = 1e-7 * scale
    lu = spla.splu((S + tau * sp.identity(n)).tocsc())
    rng = np.random.default_rng(12345)
    k = min(block, n - 1)
    V = rng.standard_normal((n, k))
    prev = np.inf
    for it in range(maxiter):
        V -= np.outer(v0, v0 @ V)
        V, _ = np.linalg.qr(V)
        W = lu.solve(V)
        W -= np.outer(v0, v0 @ W)
        W, _ = np.linalg.qr(W)
        H = W.T @ (S @ W)
        vals, vecs = np.linalg.eigh(0.5 * (H + H.T))
        V = W @ vecs
        lam = vals[0]
        res = np.linalg.norm(S @ V[:, 0] - lam * V[:, 0])
        if abs(lam - prev) <= 1e-13 * abs(lam) and res <= tol * max(abs(lam), 1e-300) * 100:
            return float(lam)
        if res <= 1e-8 * abs(lam) and abs(lam - prev) <= tol * abs(lam):
            return float(lam)
        prev = lam
    raise NumericError(f"inverse iteration did not converge; residual {res:.3e}")


def restricted_gap(model: ZrpModel, x0: int, ell: int | None = None, cap: int = DEFAULT_STATE_CAP) -> float:
    """Spectral gap of the unspeeded process restricted to Ehat^{x0}.

    ``ell`` overrides the well width (the default is the model's ell).
    """
    ell_v = model.ell if ell is None else int(ell)
    if (ell_v + 1) ** (model.kappa - 1) > cap:
        raise ResourceError("restricted state space exceeds the cap")
    states = restricted_states(model, x0, ell_v)
    gen = assemble_generator(model, speeded=False, restriction=states, cap=cap)
    return symmetric_gap(gen.symmetrized(), np.sqrt(gen.mu))


def birth_death_product_gap(ell: int, kappa: int) -> float:
    """Gap of the product over kappa-1 coordinates of the birth-death chain
    on {0..ell} with up rate 1 and down rate g(i)."""
    n = ell + 1
    i = np.arange(n)
    up = np.where(i < ell, 1.0, 0.0)
    down = _g_vec(i)
    Q = sp.diags([up[:-1], down[1:]], [1, -1], shape=(n, n)).tolil()
    Q.setdiag(-(up + down))
    Q = Q.tocsr()
    phi = 1.0 / np.maximum(i, 1)
    phi /= phi.sum()
    eye = sp.identity(n, format="csr")
    L = sp.csr_matrix((n ** (kappa - 1), n ** (kappa - 1)))
    pi = np.ones(1)
    for c in range(kappa - 1):
        term = sp.identity(1, format="csr")
        for d in range(kappa - 1):
            term = sp.kron(term, Q if d == c else eye, format="csr")
        L = L + term
        pi = np.kron(pi, phi)
    s = np.sqrt(pi)
    S = sp.diags(s) @ (-L) @ sp.diags(1.0 / s)
    S = 0.5 * (S + S.T)
    return symmetric_gap(S.tocsr(), s)


# -------------------------------------------------------- comparison paths


def walk_path(spec: WalkSpec, a: int, b: int) -> list[int]:
    """Shortest walk path from a to b (BFS, smallest index first)."""
    prev = {a: None}
    q = deque([a])
    while q:
        u = q.popleft()
        if u == b:
            break
        for v in np.flatnonzero(spec.rates[u] > 0):
            v = int(v)
            if v not in prev:
                prev[v] = u
                q.append(v)
    path = [b]
    while path[-1] != a:
        path.append(prev[path[-1]])
    return path[::-1]


def _move(eta: np.ndarray, a: int, b: int) -> np.ndarray:
    z = eta.copy()
    z[a] -= 1
    z[b] += 1
    return z


def comparison_path(model: ZrpModel, x0: int, eta, x: int, ell: int | None = None) -> list[np.ndarray]:
    """Path inside Ehat^{x0} from eta to sigma^{x0,x} eta.

    The particle is pushed along a fixed shortest walk path from x0 to x;
    whenever the next sites hold exactly ell particles, the block is
    crossed by shifting one particle forward at its far end first.
    """
    ell = model.ell if ell is None else int(ell)
    eta = np.asarray(eta, dtype=np.int64)
    k = model.kappa
    if x == x0 or not 0 <= x < k:
        raise ArgumentError("x must be a site different from x0")
    others = [y for y in range(k) if y != x0]
    if eta.sum() != model.N or np.any(eta < 0):
        raise ArgumentError("not a configuration of N particles")
    if np.any(eta[others] > ell):
        raise ArgumentError("eta is not in Ehat^{x0}")
    if eta[x0] == 0 or eta[x] + 1 > ell:
        raise ArgumentError("sigma^{x0,x} eta is not in Ehat^{x0}")
    v = walk_path(model.walk, x0, x)
    m = len(v) - 1
    cur = eta.copy()
    out = [cur]
    kpos = 0  # index on v of the carried particle
    while kpos < m:
        nxt = kpos + 1
        if eta[v[nxt]] < ell:
            cur = _move(cur, v[kpos], v[nxt])
            out.append(cur)
            kpos = nxt
            continue
        p = nxt
        q = p
        while q + 1 <= m and eta[v[q + 1]] == ell:
            q += 1
        if q >= m:
            raise ArgumentError("endpoint blocked")  # excluded by the precondition
        for j in range(q, p - 1, -1):
            cur = _move(cur, v[j], v[j + 1])
            out.append(cur)
        cur = _move(cur, v[kpos], v[p])
        out.append(cur)
        kpos = q + 1
    return out


@dataclass
class PathAudit:
    paths: int
    max_length: int
    all_neighbors: bool
    all_inside: bool
    no_repeats: bool
    max_mu_ratio: float
    max_congestion: int
    kappa: int

    @property
    def passed(self) -> bool:
        k = self.kappa
        return (
            self.max_length <= k
            and self.all_neighbors
            and self.all_inside
            and self.no_repeats
            and self.max_mu_ratio <= 4.0
            and self.max_congestion <= 2 * k**4
        )


def audit_comparison_paths(model: ZrpModel, x0: int, ell: int | None = None) -> PathAudit:
    """Build every comparison path on Ehat^{x0} and check its properties."""
    ell_v = model.ell if ell is None else int(ell)
    states = restricted_states(model, x0, ell_v)
    k = model.kappa
    r = model.walk.rates
    others = [y for y in range(k) if y != x0]
    counts: dict = {}
    n_paths = 0
    max_len = 0
    neighbors_ok = inside_ok = distinct_ok = True
    worst = 0.0
    for eta in states:
        w_eta = 1.0 / np.prod(np.maximum(eta, 1))
        for x in others:
            if eta[x0] == 0 or eta[x] + 1 > ell_v:
                continue
            path = comparison_path(model, x0, eta, x, ell_v)
            n_paths += 1
            max_len = max(max_len, len(path) - 1)
            keys = [tuple(int(c) for c in p) for p in path]
            if len(set(keys)) != len(keys):
                distinct_ok = False
            for p in path:
                if np.any(p[others] > ell_v) or np.any(p < 0):
                    inside_ok = False
                worst = max(worst, w_eta * np.prod(np.maximum(p, 1)))
            for a, b in zip(keys[:-1], keys[1:]):
                d = np.subtract(b, a)
                src = np.flatnonzero(d == -1)
                dst = np.flatnonzero(d == 1)
                if not (np.abs(d).sum() == 2 and src.size == 1 and dst.size == 1 and r[src[0], dst[0]] > 0):
                    neighbors_ok = False
                counts[(a, b)] = counts.get((a, b), 0) + 1
    return PathAudit(
        n_paths, max_len, neighbors_ok, inside_ok, distinct_ok, float(worst), max(counts.values(), default=0), k
    )


# ----------------------------------------------------------------- dumps

_MAGIC = b"ZRPGEN01"


def dump_triplets(gen: SparseGenerator, path) -> None:
    """Write the generator as little-endian triplets.

    Layout: 8-byte magic, uint64 n, uint64 nnz, uint8 speeded flag,
    7 pad bytes, then nnz int64 rows, nnz int64 cols, nnz float64 values.
    """
    C = gen.L.tocoo()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<QQB7x", gen.size, C.nnz, int(gen.speeded)))
        fh.write(C.row.astype("<i8").tobytes())
        fh.write(C.col.astype("<i8").tobytes())
        fh.write(C.data.astype("<f8").tobytes())


def load_triplets(path) -> tuple[sp.csr_matrix, bool]:
    with open(path, "rb") as fh:
        if fh.read(8) != _MAGIC:
            raise ArgumentError("not a generator dump")
        n, nnz, speeded = struct.unpack("<QQB7x", fh.read(24))
        rows = np.frombuffer(fh.read(8 * nnz), dtype="<i8")
        cols = np.frombuffer(fh.read(8 * nnz), dtype="<i8")
        vals = np.frombuffer(fh.read(8 * nnz), dtype="<f8")
    return sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr(), bool(speeded)
