"""Quadratic forms, the min-corrector and the super-harmonic function F_m.

Fix a site x0 and S0 = S minus x0. For each subset A of S0 the walk
coefficient tables give a quadratic form P^A on configurations; the
corrector W_l takes the minimum of P^A - c_A l**2 over proper subsets
(the empty set contributes 0), and F_m sums l**-1 (P - W_l)**(1/2)
for l = 2..m. The check evaluates the unspeeded generator applied to
F_m on every configuration with x0 in its shallow but not its deep well.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, ModelError, NumericError
from .exact_engine import StateIndex, _g_vec
from .walk import CoefficientTables, WalkSpec, coefficient_tables
from .zrp import ZrpModel

__all__ = [
    "ConstantsLedger",
    "build_ledger",
    "QuadraticFamily",
    "UScan",
    "scan_u",
    "superharmonic_check",
    "Verdict",
    "DEFAULT_SEPARATION",
]

# Relative spacing between the c_A constants; see build_ledger.
DEFAULT_SEPARATION = 2.0**-20
TIE_TOL = 1e-9


def _subsets(items, proper=False, nonempty=True):
    items = sorted(items)
    out = []
    top = len(items) - 1 if proper else len(items)
    for k in range(1 if nonempty else 0, top + 1):
        out.extend(frozenset(c) for c in itertools.combinations(items, k))
    return out


@dataclass(frozen=True)
class ConstantsLedger:
    spec: WalkSpec
    x0: int
    tables: dict  # frozenset -> CoefficientTables, every nonempty B in S0
    alpha: dict
    beta: dict
    c: dict  # proper nonempty A -> c_A
    c0: dict  # larger sets -> c_B^0
    a_max: float
    C0: float
    gamma1: float
    separation: float

    @property
    def S0(self) -> frozenset:
        return frozenset(range(self.spec.kappa)) - {self.x0}

    @property
    def proper(self) -> list:
        return _subsets(self.S0, proper=True)

    @property
    def c_max(self) -> float:
        return max(self.c.values(), default=0.0)


def build_ledger(spec: WalkSpec, x0: int, separation: float = DEFAULT_SEPARATION) -> ConstantsLedger:
    """Instantiate alpha_B, beta_B and c_A and assert their inequalities.

    alpha_B = max(2 C0 a, 9/8 max_x b^B_xx) and beta_B = C0 kappa a + 1
    with C0 = kappa**2 and a the largest coefficient over all subsets.
    Singletons get c = 1 + rank * separation; a larger set B gets
    c_B = c_B^0 (1 + (1 + rank) * separation) where rank is the index
    of B in the (size, lexicographic) ordering of proper subsets.
    """
    k = spec.kappa
    if not 0 <= x0 < k:
        raise ArgumentError("x0 outside the site set")
    if separation <= 0:
        raise ArgumentError("separation must be positive")
    S0 = frozenset(range(k)) - {x0}
    tabs = {B: coefficient_tables(spec, x0, B) for B in _subsets(S0)}
    a_max = max(float(t.b.max()) for t in tabs.values())
    C0 = float(k * k)
    alpha, beta = {}, {}
    for B, t in tabs.items():
        bd = max(t.b[x, x] for x in B)
        alpha[B] = max(2 * C0 * a_max, bd * 9.0 / 8.0)
        beta[B] = C0 * k * a_max + 1.0
        if not all(alpha[B] > t.b[x, x] for x in B):
            raise ModelError("alpha_B does not dominate the diagonal of b^B")
    proper = _subsets(S0, proper=True)
    rank = {A: i for i, A in enumerate(proper)}
    c, c0 = {}, {}
    for A in proper:
        if len(A) == 1:
            c[A] = 1.0 + rank[A] * separation
            continue
        best = 0.0
        for sub in _subsets(A, proper=True):
            bs = tabs[sub].b
            for x in sub:
                best = max(best, 2 * alpha[A] * c[sub] / bs[x, x] + beta[A])
        c0[A] = best
        c[A] = best * (1.0 + (1 + rank[A]) * separation)
        if not c[A] > best:
            raise ModelError("c_B must exceed c_B^0")
    vals = list(c.values())
    if len(set(vals)) != len(vals):
        raise ModelError("the constants c_A are not pairwise distinct")
    gamma1 = 1.0
    for A in proper:
        bmin = min(tabs[A].b[x, x] for x in A)
        gamma1 = max(gamma1, 2.0 * math.sqrt(c[A] / bmin) * (1 + 1e-9))
    return ConstantsLedger(spec, x0, tabs, alpha, beta, c, c0, a_max, C0, gamma1, separation)


def domination_sides(ledger: ConstantsLedger, B0, B, eta) -> tuple[float, float]:
    """Left and right sides of the quadratic-form domination for B0 in B."""
    b = ledger.tables[frozenset(B)].b
    e = np.asarray(eta, dtype=float)
    B0 = sorted(B0)
    lhs = 0.5 * sum(b[x, x] * e[x] * (e[x] - 1) for x in B0)
    lhs += sum(b[x, y] * e[x] * e[y] for x, y in itertools.combinations(B0, 2))
    rhs = ledger.alpha[frozenset(B)] * sum(e[x] * (e[x] - 1) for x in B0) + ledger.beta[frozenset(B)]
    return lhs, rhs


class QuadraticFamily:
    """Vectorized evaluators; every method takes states of shape (n, kappa)."""

    def __init__(self, ledger: ConstantsLedger):
        self.ledger = ledger
        self.kappa = ledger.spec.kappa
        self.proper = ledger.proper  # excludes the empty set
        self.S0 = ledger.S0

    def _b(self, A) -> np.ndarray:
        A = frozenset(A)
        if not A:
            return np.zeros((self.kappa, self.kappa))
        return self.ledger.tables[A].b

    def q_form(self, A, states) -> np.ndarray:
        s = np.asarray(states, dtype=float)
        return 0.5 * np.einsum("ni,ij,nj->n", s, self._b(A), s)

    def u_form(self, A, states) -> np.ndarray:
        s = np.asarray(states, dtype=float)
        return 0.5 * s @ np.diag(self._b(A))

    def p_form(self, A, states) -> np.ndarray:
        return self.q_form(A, states) - self.u_form(A, states)

    def p(self, states) -> np.ndarray:
        return self.p_form(self.S0, states)

    def p_ell(self, A, states, ell: int) -> np.ndarray:
        A = frozenset(A)
        if not A:
            return np.zeros(np.atleast_2d(states).shape[0])
        return self.p_form(A, states) - self.ledger.c[A] * ell**2

    def proper_forms(self, states) -> np.ndarray:
        """P^A for every proper nonempty A, shape (n_sets, n)."""
        n = np.atleast_2d(states).shape[0]
        if not self.proper:
            return np.zeros((0, n))
        return np.array([self.p_form(A, states) for A in self.proper])

    def w_corrector(self, states, ell: int, forms: np.ndarray | None = None):
        """Return (W_l values, active mask of shape (n_sets + 1, n)).

        Row 0 of the mask is the empty set, row i+1 is ``self.proper[i]``.
        """
        n = np.atleast_2d(states).shape[0]
        forms = self.proper_forms(states) if forms is None else forms
        cs = np.array([self.ledger.c[A] for A in self.proper])
        vals = np.vstack([np.zeros((1, n)), forms - (cs * ell**2)[:, None]])
        W = vals.min(axis=0)
        tol = TIE_TOL * np.maximum(1.0, np.abs(W))
        return W, vals <= W + tol

    def h_ell(self, states, ell: int, forms=None, P=None) -> np.ndarray:
        P = self.p(states) if P is None else P
        W, _ = self.w_corrector(states, ell, forms)
        return P - W

    def f_m(self, states, m: int) -> np.ndarray:
        if m < 2:
            raise ArgumentError("m must be at least 2")
        forms = self.proper_forms(states)
        P = self.p(states)
        total = np.zeros_like(P)
        for ell in range(2, m + 1):
            h = self.h_ell(states, ell, forms, P)
            if np.any(h <= 0):
                raise NumericError("P - W_l is not positive; N is below the validity range")
            total += np.sqrt(h) / ell
        return total


@dataclass
class UScan:
    """Configurations of the closure U of {N - w <= eta_x0 < N - d}."""

    model: ZrpModel
    x0: int
    states: np.ndarray
    interior: np.ndarray  # mask
    nbr: np.ndarray  # (n, kappa, kappa) local index of sigma^{x,y} eta, -1 if outside
    rates: np.ndarray  # (n, kappa, kappa) g(eta_x) r(x, y)


def scan_u(model: ZrpModel, x0: int) -> UScan:
    N, k = model.N, model.kappa
    lo = N - model.shallow_width - 1
    hi = N - model.deep_width
    # all configurations with eta_x0 in [lo, hi]
    blocks = []
    for top in range(max(lo, 0), min(hi, N) + 1):
        rest = StateIndex(N - top, k - 1).enumerate()
        blocks.append(np.insert(rest, x0, top, axis=1))
    cand = np.vstack(blocks)
    idx = StateIndex(N, k)
    ranks = idx.rank(cand)
    order = np.argsort(ranks)
    cand, ranks = cand[order], ranks[order]
    n = cand.shape[0]
    r = model.walk.rates
    nbr = np.full((n, k, k), -1, dtype=np.int64)
    gx = _g_vec(cand)
    rates = np.zeros((n, k, k))
    for x in range(k):
        for y in range(k):
            if x == y or r[x, y] <= 0:
                continue
            can = cand[:, x] > 0
            tgt = cand.copy()
            tgt[can, x] -= 1
            tgt[can, y] += 1
            tr = idx.rank(tgt)
            pos = np.minimum(np.searchsorted(ranks, tr), n - 1)
            nbr[:, x, y] = np.where(ranks[pos] == tr, pos, -1)
            rates[:, x, y] = gx[:, x] * r[x, y]
    top = cand[:, x0]
    core = (top >= N - model.shallow_width) & (top < N - model.deep_width)
    # closure: in core or some jump lands in core; sigma with eta_x = 0 is eta itself
    closure = core.copy()
    hit = np.zeros(n, dtype=bool)
    for x in range(k):
        for y in range(k):
            if x == y or r[x, y] <= 0:
                continue
            j = nbr[:, x, y]
            hit |= (j >= 0) & core[np.maximum(j, 0)]
    closure |= hit
    keep = closure
    # interior: every jump stays in the closure
    inner = closure.copy()
    for x in range(k):
        for y in range(k):
            if x == y or r[x, y] <= 0:
                continue
            j = nbr[:, x, y]
            inner &= (j >= 0) & closure[np.maximum(j, 0)]
    new = -np.ones(n, dtype=np.int64)
    new[keep] = np.arange(int(keep.sum()))
    nb = nbr[keep]
    nb = np.where(nb >= 0, new[np.maximum(nb, 0)], -1)
    return UScan(model, x0, cand[keep], inner[keep], nb, rates[keep])


def _apply_generator(scan: UScan, values: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """(L_N v)(eta) for eta in ``rows``; the sigma of an empty site is eta itself."""
    out = np.zeros(rows.size)
    k = scan.model.kappa
    for x in range(k):
        for y in range(k):
            j = scan.nbr[rows, x, y]
            w = scan.rates[rows, x, y]
            active = w > 0
            if not np.any(active):
                continue
            if np.any(j[active] < 0):
                raise ModelError("a jump from an interior configuration left the closure")
            out[active] += w[active] * (values[j[active]] - values[rows[active]])
    return out


@dataclass
class Verdict:
    m_found: int | None
    margin: float | None
    worst_eta: list
    worst_value: float
    per_m: dict
    boundary_count_L: int
    boundary_count_2L: int
    sandwich: dict
    checks: dict = field(default_factory=dict)
    interior_size: int = 0

    @property
    def passed(self) -> bool:
        return self.m_found is not None and all(v["passed"] for v in self.checks.values())

    def to_dict(self) -> dict:
        return {
            "m_found": self.m_found,
            "margin": self.margin,
            "worst_eta": self.worst_eta,
            "boundary_count_L": self.boundary_count_L,
            "boundary_count_2L": self.boundary_count_2L,
            "sandwich": self.sandwich,
        }


def _jump_gap_bound(ledger: ConstantsLedger, ell: int) -> float:
    # Taylor bound around the crossing point: gradient on {eta_z <= gamma1 l + 1} plus Hessian
    k, a = ledger.spec.kappa, ledger.a_max
    grad = k**1.5 * a * (ledger.gamma1 * ell + 1) + 0.5 * math.sqrt(k) * a
    return 2.0 * (math.sqrt(2.0) * grad + k * a)


def superharmonic_check(
    model: ZrpModel,
    x0: int,
    m_max: int = 256,
    ledger: ConstantsLedger | None = None,
    separation: float = DEFAULT_SEPARATION,
    form_slack: float = 0.5,
) -> Verdict:
    """Exhaustive check of L_N F_m < 0 on the interior of U, m = 2, 4, ..., m_max.

    Also audits the generator identities, the quadratic-form bounds,
    the corrector bounds and the boundary counts on the same scan.
    """
    if m_max < 2 or m_max & (m_max - 1):
        raise ArgumentError("m_max must be a power of two >= 2")
    ledger = build_ledger(model.walk, x0, separation) if ledger is None else ledger
    fam = QuadraticFamily(ledger)
    scan = scan_u(model, x0)
    st = scan.states
    N, k = model.N, model.kappa
    n = st.shape[0]
    inner = np.flatnonzero(scan.interior)
    if inner.size == 0:
        raise ModelError("the interior of U is empty at this N")
    S0 = sorted(ledger.S0)
    s0sum = st[:, S0].sum(axis=1).astype(float)
    depth = (N - st[inner, x0]).astype(float)
    P = fam.p(st)
    forms = fam.proper_forms(st)
    checks = {}

    # generator identities for every nonempty A in S0 and every x
    r = model.walk.rates
    worst_id = 0.0
    worst_formula = 0.0
    lower_ok = True
    for A in _subsets(ledger.S0):
        t = ledger.tables[A]
        PA = fam.p_form(A, st)
        for x in range(k):
            acc = np.zeros(inner.size)
            for y in range(k):
                if x == y or r[x, y] <= 0:
                    continue
                j = scan.nbr[inner, x, y]
                acc += r[x, y] * np.where(st[inner, x] > 0, PA[np.maximum(j, 0)] - PA[inner], 0.0)
            has = st[inner, x] >= 1
            if x in A:
                expect = 1.0 - st[inner, x]
            else:
                expect = st[inner][:, sorted(A)] @ t.u[sorted(A), x]
            worst_id = max(worst_id, float(np.max(np.abs(acc - expect)[has], initial=0.0)))
        LPA = _apply_generator(scan, PA, inner)
        g = _g_vec(st[inner])
        formula = np.zeros(inner.size)
        Al = sorted(A)
        for x in range(k):
            if x in A:
                formula += g[:, x] * (1.0 - st[inner, x])
            else:
                formula += g[:, x] * (st[inner][:, Al] @ t.u[Al, x])
        worst_formula = max(worst_formula, float(np.max(np.abs(LPA - formula))))
        offA = [x for x in range(k) if x not in A]
        cond = np.all(st[inner][:, offA] >= 2, axis=1)
        ones = (st[inner][:, Al] == 1).sum(axis=1)
        if np.any(LPA[cond] < ones[cond] - 1e-8):
            lower_ok = False
    scale = max(1.0, float(np.max(s0sum)))
    checks["generator_identities"] = {"max_error": worst_id, "passed": worst_id <= 1e-9 * scale}
    checks["generator_formula"] = {"max_error": worst_formula, "passed": worst_formula <= 1e-9 * scale**2}
    checks["generator_lower_bound"] = {"passed": lower_ok}

    # quadratic-form sandwich on U
    bS = ledger.tables[ledger.S0].b
    lam = min(bS[x, x] for x in S0)
    c1 = lam / (2 * (k - 1)) * (1 - form_slack)
    c2 = 0.5 * float(np.max(bS))
    ratio = P / np.maximum(s0sum, 1.0) ** 2
    checks["quadratic_bounds"] = {
        "c1": c1,
        "c2": c2,
        "min_ratio": float(ratio.min()),
        "max_ratio": float(ratio.max()),
        "passed": bool(np.all(P >= c1 * s0sum**2) and np.all(P <= c2 * s0sum**2 + 1e-9)),
    }

    # corrector, active sets and boundaries for l = 2 .. 2 m_max
    L2 = 2 * m_max
    sets = [frozenset()] + fam.proper
    Cmax = ledger.c_max
    w_ok = zero_ok = gamma_ok = True
    jump_ratio = 0.0
    jump_ok = True
    bcount = np.zeros(n, dtype=np.int64)
    bcount_L = None
    zero_sets = [frozenset(x for x in S0 if st[i, x] == 0) for i in range(n)]
    zero_mask = np.array([[set(z) <= set(A) for A in sets] for z in zero_sets])  # (n, n_sets+1)
    has_zero = np.array([len(z) > 0 and len(z) < len(S0) for z in zero_sets])
    inner_set = np.zeros(n, dtype=bool)
    inner_set[inner] = True
    sqrt_terms = {}
    for ell in range(2, L2 + 1):
        W, active = fam.w_corrector(st, ell, forms)
        if np.any(W > 1e-9) or np.any(W < -Cmax * ell**2 - 1e-9):
            w_ok = False
        act = active.T  # (n, n_sets+1)
        if np.any(act[has_zero] & ~zero_mask[has_zero]):
            zero_ok = False
        for i, A in enumerate(sets):
            if not A:
                continue
            rows = act[:, i]
            if np.any(st[rows][:, sorted(A)] >= ledger.gamma1 * ell):
                gamma_ok = False
        # boundary of each D_l(A): in D_l(A) with a jump leaving it
        on_bd = np.zeros(n, dtype=bool)
        vals = np.vstack([np.zeros((1, n)), forms - np.array([ledger.c[A] for A in fam.proper])[:, None] * ell**2])
        for x in range(k):
            for y in range(k):
                if x == y or r[x, y] <= 0:
                    continue
                j = scan.nbr[:, x, y]
                moves = (st[:, x] > 0) & (j >= 0)
                jj = np.maximum(j, 0)
                leave = act & ~act[jj]
                leave &= moves[:, None]
                outside = (st[:, x] > 0) & (j < 0)
                bd = leave.any(axis=1) | (outside & act.any(axis=1))
                on_bd |= bd
                # jump gaps on interior configurations: eta in D(A), sigma eta in D(B), B != A
                sel = np.flatnonzero(inner_set & moves)
                if sel.size:
                    a_act = act[sel]
                    b_act = act[jj[sel]]
                    for ia in range(len(sets)):
                        for ib in range(len(sets)):
                            if ia == ib:
                                continue
                            pair = a_act[:, ia] & b_act[:, ib]
                            if not np.any(pair):
                                continue
                            rows_ = sel[pair]
                            d1 = np.abs(vals[ib, rows_] - vals[ia, rows_])
                            d2 = np.abs(vals[ib, jj[rows_]] - vals[ia, jj[rows_]])
                            worst = float(max(d1.max(), d2.max()))
                            jump_ratio = max(jump_ratio, worst / ell)
                            if worst > _jump_gap_bound(ledger, ell):
                                jump_ok = False
        bcount += on_bd
        if ell == m_max:
            bcount_L = bcount.copy()
        if ell <= m_max:
            h = P - W
            if np.any(h <= 0):
                raise NumericError("P - W_l is not positive; N is below the validity range")
            sqrt_terms[ell] = np.sqrt(h)
    checks["corrector_bounds"] = {"passed": w_ok}
    checks["zero_sites_active"] = {"passed": zero_ok}
    checks["active_sets_small"] = {"gamma1": ledger.gamma1, "passed": gamma_ok}
    checks["boundary_jumps"] = {"max_ratio": jump_ratio, "bound_at_l2": _jump_gap_bound(ledger, 2) / 2, "passed": jump_ok}
    bL = int(bcount_L[inner].max())
    b2L = int(bcount[inner].max())
    checks["boundary_count_stable"] = {"L": m_max, "count_L": bL, "count_2L": b2L, "passed": b2L <= bL}

    # L_N F_m over the interior for m = 2, 4, ..., m_max
    F = np.zeros(n)
    per_m = {}
    m_found = None
    margin = None
    worst_eta: list = []
    worst_value = math.inf
    m = 2
    for ell in range(2, m_max + 1):
        F += sqrt_terms[ell] / ell
        if ell == m:
            LF = _apply_generator(scan, F, inner)
            scaled = depth * LF
            i = int(np.argmax(scaled))
            per_m[m] = float(scaled[i])
            if scaled[i] < worst_value or m_found is None:
                worst_value = float(scaled[i])
                worst_eta = st[inner[i]].tolist()
            if m_found is None and scaled[i] < 0:
                m_found = m
                margin = float(scaled[i])
                worst_eta = st[inner[i]].tolist()
                Fm = F[inner].copy()
            m *= 2
    if m_found is None:
        Fm = F[inner].copy()
    ratio = Fm / depth
    sandwich = {"c1": float(ratio.min()), "c2": float(ratio.max())}
    return Verdict(m_found, margin, worst_eta, worst_value, per_m, bL, b2L, sandwich, checks, int(inner.size))
