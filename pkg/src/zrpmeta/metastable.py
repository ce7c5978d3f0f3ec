"""The limiting condensate chain and its comparison with simulated order paths."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ArgumentError
from .simulate import OrderPath
from .walk import WalkSpec, capacity

__all__ = ["LimitChain", "limit_chain", "ComparisonReport", "compare", "trend_table"]


@dataclass(frozen=True)
class LimitChain:
    """Condensate chain with rates r_Z(x, y) = 6 kappa cap(x, y).

    Parameters
    ----------
    rates : ndarray, shape (kappa, kappa)
        Symmetric jump rates with zero diagonal.
    """

    rates: np.ndarray

    @property
    def kappa(self) -> int:
        return self.rates.shape[0]

    @property
    def exit_rates(self) -> np.ndarray:
        return self.rates.sum(axis=1)

    @property
    def mean_holding(self) -> np.ndarray:
        return 1.0 / self.exit_rates

    @property
    def jump_law(self) -> np.ndarray:
        return self.rates / self.exit_rates[:, None]

    def to_dict(self) -> dict:
        return {
            "rates": self.rates.tolist(),
            "mean_holding": self.mean_holding.tolist(),
            "jump_law": self.jump_law.tolist(),
        }


def limit_chain(spec: WalkSpec) -> LimitChain:
    k = spec.kappa
    r = np.zeros((k, k))
    for x in range(k):
        for y in range(x + 1, k):
            r[x, y] = r[y, x] = 6.0 * k * capacity(spec, {x}, {y})
    r.setflags(write=False)
    return LimitChain(r)


@dataclass
class ComparisonReport:
    """Empirical order-path statistics against the limit chain.

    Holding times are in theta units; ``tv`` is the total-variation
    distance between the empirical and exact embedded jump laws, averaged
    over sites with weights proportional to their departure counts.
    """

    transitions: int
    counts: np.ndarray
    holding_mean: np.ndarray
    holding_ci: np.ndarray  # (kappa, 2), normal approximation
    holding_n: np.ndarray
    exact_holding: np.ndarray
    tv: float
    tv_per_site: np.ndarray
    delta_fraction: float
    degenerate: bool = False

    @property
    def holding_ratio(self) -> np.ndarray:
        return self.holding_mean / self.exact_holding

    def to_dict(self) -> dict:
        return {
            "transitions": int(self.transitions),
            "counts": self.counts.tolist(),
            "holding_mean": _nan_list(self.holding_mean),
            "holding_ci": [_nan_list(r) for r in self.holding_ci],
            "holding_n": self.holding_n.tolist(),
            "exact_holding": self.exact_holding.tolist(),
            "holding_ratio": _nan_list(self.holding_ratio),
            "tv": None if math.isnan(self.tv) else self.tv,
            "tv_per_site": _nan_list(self.tv_per_site),
            "delta_fraction": self.delta_fraction,
            "degenerate": self.degenerate,
        }


def _nan_list(a) -> list:
    return [None if (isinstance(v, float) and math.isnan(v)) else float(v) for v in np.asarray(a, dtype=float)]


def compare(paths: Sequence[OrderPath], chain: LimitChain) -> ComparisonReport:
    k = chain.kappa
    counts = np.zeros((k, k), dtype=np.int64)
    hold: list[list[float]] = [[] for _ in range(k)]
    delta = total = 0.0
    for p in paths:
        for a, b in p.transitions():
            if not (0 <= a < k and 0 <= b < k):
                raise ArgumentError("order path label outside the site set")
            counts[a, b] += 1
        for x, d in p.holding_times():
            hold[x].append(d)
        delta += p.delta_time
        total += p.total_time
    n_tr = int(counts.sum())
    mean = np.full(k, np.nan)
    ci = np.full((k, 2), np.nan)
    n_h = np.array([len(h) for h in hold])
    for x in range(k):
        if hold[x]:
            h = np.asarray(hold[x])
            mean[x] = h.mean()
            se = h.std(ddof=1) / math.sqrt(h.size) if h.size > 1 else math.inf
            ci[x] = (mean[x] - 1.96 * se, mean[x] + 1.96 * se)
    law = chain.jump_law
    tv_site = np.full(k, np.nan)
    out = counts.sum(axis=1)
    for x in range(k):
        if out[x]:
            tv_site[x] = 0.5 * float(np.abs(counts[x] / out[x] - law[x]).sum())
    tv = float(np.nansum(tv_site * out) / out.sum()) if out.sum() else math.nan
    frac = delta / total if total > 0 else 0.0
    return ComparisonReport(n_tr, counts, mean, ci, n_h, chain.mean_holding, tv, tv_site, frac, n_tr == 0)


def trend_table(reports: dict) -> list[dict]:
    """Long-format rows (N, quantity, value) from {N: ComparisonReport}."""
    rows = []
    for N in sorted(reports):
        rep = reports[N]
        rows.append({"N": N, "quantity": "transitions", "value": rep.transitions})
        rows.append({"N": N, "quantity": "delta_fraction", "value": rep.delta_fraction})
        rows.append({"N": N, "quantity": "tv", "value": rep.tv})
        for x in range(len(rep.holding_mean)):
            rows.append({"N": N, "quantity": f"holding_ratio_{x}", "value": float(rep.holding_ratio[x])})
    return rows
