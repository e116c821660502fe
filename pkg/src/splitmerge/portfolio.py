"""Portfolio rules, wealth updates, and event-time weight transfers.

A rule maps the market state to per-company investment proportions pi_1..pi_N
(bounded by K_pi); pi_0 = 1 - sum(pi) sits in a zero-interest money market.
Between events wealth compounds discretely with realized cap returns,

    V' = V * (1 + sum_i pi_i * r_i),      r_i = X_i(t+dt)/X_i(t) - 1,

which makes the market portfolio identity V^mu = C(t)/C(0) telescope exactly
up to rounding. Wealth never jumps at an event; instead the departing
company's allocation moves to its successors:

  merger (A): the merged company inherits pi_i + pi_j;
  split (B):  each child inherits pi_i scaled by its share of the parent cap,
              the smaller piece taking the exact remainder so the total
              allocation is conserved to the last bit.

Rank-based rules inherit the lexicographic tie-breaking of the ranking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import MarketState, assign_ranks, market_weights

__all__ = [
    "PortfolioRule",
    "WealthError",
    "RULE_KINDS",
    "money_market_weight",
    "wealth_step",
    "transfer_on_merger",
    "transfer_on_split",
    "relative_arbitrage_probe",
    "ArbitrageProbe",
]

RULE_KINDS = ("cash", "market", "equal", "rank", "name")


class WealthError(RuntimeError):
    """Wealth hit zero or below: dt too coarse for the leverage used."""


@dataclass(frozen=True)
class PortfolioRule:
    """A named bounded portfolio rule.

    kind "cash" holds only the money market; "market" holds mu; "equal" puts
    1/N in every company; "rank" concentrates on the company at 0-based rank
    ``k``; "name" on fixed company position ``k`` (only meaningful while no
    event renumbers positions).
    """

    kind: str
    k: int = 0

    def __post_init__(self) -> None:
        if self.kind not in RULE_KINDS:
            raise ValueError(f"unknown portfolio rule kind {self.kind!r}")
        if self.k < 0:
            raise ValueError(f"rule target must be >= 0, got {self.k}")

    @property
    def name(self) -> str:
        if self.kind == "rank":
            return f"rank-{self.k + 1}"
        if self.kind == "name":
            return f"name-{self.k + 1}"
        return self.kind

    @property
    def bound(self) -> float:
        """K_pi: sup over states of max |pi_i|."""
        return 0.0 if self.kind == "cash" else 1.0

    def weights(self, state: MarketState) -> np.ndarray:
        n = state.n
        if self.kind == "cash":
            return np.zeros(n)
        if self.kind == "market":
            return market_weights(state.caps)
        if self.kind == "equal":
            return np.full(n, 1.0 / n)
        pi = np.zeros(n)
        if self.k >= n:
            # the targeted rank or company no longer exists (the market
            # shrank through mergers); hold the money market instead
            return pi
        if self.kind == "rank":
            pi[assign_ranks(state.caps).rank_to_index[self.k]] = 1.0
        else:
            pi[self.k] = 1.0
        return pi


def money_market_weight(pi: np.ndarray) -> float:
    """pi_0 = 1 - sum_i pi_i (left-to-right sum)."""
    acc = np.float64(0.0)
    for k in range(pi.shape[0]):
        acc = acc + pi[k]
    return float(1.0 - acc)


def wealth_step(v: float, pi: np.ndarray, returns: np.ndarray) -> float:
    """V' = V * (1 + sum pi_i r_i); raises WealthError if V' <= 0."""
    acc = np.float64(0.0)
    for k in range(pi.shape[0]):
        acc = acc + pi[k] * returns[k]
    out = v * (1.0 + acc)
    if not out > 0.0:
        raise WealthError(
            f"wealth {out:g} <= 0 after step return {float(acc):g}; "
            "the time step is too coarse for this rule's leverage"
        )
    return float(out)


def transfer_on_merger(pi: np.ndarray, i: int, j: int) -> np.ndarray:
    """Rule (A): the merged company (appended) inherits pi_i + pi_j."""
    n = pi.shape[0]
    if not 0 <= i < j < n:
        raise ValueError(f"bad merger pair ({i}, {j}) for N={n}")
    keep = np.concatenate([pi[:i], pi[i + 1 : j], pi[j + 1 :]])
    return np.concatenate([keep, [pi[i] + pi[j]]])


def transfer_on_split(
    pi: np.ndarray, i: int, caps_before: np.ndarray, caps_after: np.ndarray
) -> np.ndarray:
    """Rule (B): children inherit pi_i in proportion to their cap share.

    The first child takes pi_i * X_child/X_parent, the second the exact
    remainder (equal to its own cap share in exact arithmetic), so the total
    allocation is conserved bit-exactly.
    """
    n = pi.shape[0]
    if not 0 <= i < n:
        raise ValueError(f"split position {i} out of range for N={n}")
    if caps_after.shape[0] != n + 1:
        raise ValueError("caps_after must hold one more company than pi")
    first = pi[i] * (caps_after[n - 1] / caps_before[i])
    second = pi[i] - first
    return np.concatenate([pi[:i], pi[i + 1 :], [first, second]])


@dataclass(frozen=True)
class ArbitrageProbe:
    """Empirical comparison of two rules over a fixed horizon."""

    p_ge: float
    p_gt: float
    ci_ge: tuple[float, float]
    ci_gt: tuple[float, float]
    paths: int


def relative_arbitrage_probe(
    params,
    initial_caps,
    rule: PortfolioRule,
    other: PortfolioRule,
    horizon: float,
    paths: int,
    seed: int,
) -> ArbitrageProbe:
    """Monte Carlo frequencies of V^pi(T) >= V^rho(T) and strict >.

    Purely diagnostic: no bounded rule is expected to dominate another with
    probability one over a finite horizon.
    """
    from .bounds import wilson_interval
    from .engine import EngineRun, run_paths

    run = run_paths(
        EngineRun(
            params=params,
            initial_caps=np.asarray(initial_caps, dtype=np.float64),
            horizon=horizon,
            n_paths=paths,
            seed=seed,
            rules=(rule, other),
        )
    )
    va = run.final_wealth[0]
    vb = run.final_wealth[1]
    ge = int(np.count_nonzero(va >= vb))
    gt = int(np.count_nonzero(va > vb))
    return ArbitrageProbe(
        p_ge=ge / paths,
        p_gt=gt / paths,
        ci_ge=wilson_interval(ge, paths),
        ci_gt=wilson_interval(gt, paths),
        paths=paths,
    )
