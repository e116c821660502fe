"""Split and merger events: detection, sampling, renaming, suppression.

Renaming keeps the written 1-based position semantics: a split at position i
removes that company and appends its two children at positions N and N+1
(sizes xi*X_i and the exact remainder X_i - xi*X_i); a merger of i < j
removes both and appends their sum at position N-1. Positions between shift
left to close the gaps. Arrays here are 0-based; the event log serializes
1-based positions.

The exact-remainder child makes total capitalization conservation exact: with
xi in [1/2, 1-eps0] the subtraction X_i - xi*X_i is exact (Sterbenz), so the
multiset sum is preserved to the last bit for splits and to one rounding of
X_i + X_j for mergers.

The merger clock of rate lambda_N is realized per step: the engine draws one
uniform per diffusion step and rings when u < 1 - exp(-lambda_N dt). Because
the exponential law is memoryless, this equals redrawing an exponential
holding time after every event.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .params import ModelParams

__all__ = [
    "EventRecord",
    "MergerClock",
    "clock_rate",
    "clock_rate_row",
    "detect_split",
    "draw_split_fraction",
    "apply_split",
    "split_children",
    "sample_merger_pair",
    "pair_count",
    "merger_suppressed",
    "apply_merger",
]


def clock_rate(n: int, params: ModelParams) -> float:
    """Merger clock rate lambda_N: 0 for N = 2, c * N**alpha for N >= 3."""
    if n < 2:
        raise ValueError(f"no market with fewer than 2 companies, got N={n}")
    if n == 2:
        return 0.0
    return params.clock_c * float(n) ** params.clock_alpha


def clock_rate_row(params: ModelParams) -> np.ndarray:
    """lambda_N for N = 0..n_max as an array (entries below N=3 are 0)."""
    lam = np.zeros(params.n_max + 1, dtype=np.float64)
    for n in range(3, params.n_max + 1):
        lam[n] = clock_rate(n, params)
    return lam


@dataclass(frozen=True)
class MergerClock:
    """Exponential merger clock at rate lambda_N, realized stepwise."""

    rate: float

    def step_ring_probability(self, dt: float) -> float:
        return float(-np.expm1(-self.rate * dt))

    def rings(self, u: float, dt: float) -> bool:
        return u < self.step_ring_probability(dt)


@dataclass(frozen=True)
class EventRecord:
    """One composition change. Positions i, j are 1-based; xi is None for
    mergers, j is None for splits."""

    path: int
    t: float
    kind: str  # "split" | "merger" | "suppressed_merger"
    i: int
    j: int | None
    xi: float | None
    n_before: int
    n_after: int

    def to_json(self) -> str:
        # coerce numpy scalars so the encoding never depends on the caller
        return json.dumps(
            {
                "path": int(self.path),
                "t": float(self.t),
                "kind": self.kind,
                "i": int(self.i),
                "j": None if self.j is None else int(self.j),
                "xi": None if self.xi is None else float(self.xi),
                "n_before": int(self.n_before),
                "n_after": int(self.n_after),
            }
        )


def detect_split(weights: np.ndarray, delta: float) -> int | None:
    """0-based index of the (unique) company with mu_i >= 1 - delta, if any.

    At most one index can qualify since 1 - delta > 1/2. Detection is
    post-step first crossing, so the weight may overshoot by O(sqrt(dt)).
    """
    i = int(np.argmax(weights))
    if weights[i] >= 1.0 - delta:
        return i
    return None


def draw_split_fraction(params: ModelParams, rng: np.random.Generator) -> float:
    xi = params.split_dist.sample(rng, params.eps0)
    if not 0.5 <= xi <= 1.0 - params.eps0:
        raise RuntimeError(f"split fraction {xi} outside [1/2, 1-eps0]")
    return xi


def split_children(cap: float, xi: float) -> tuple[float, float]:
    """(xi*cap, exact remainder). The pieces sum to cap with zero error."""
    first = xi * cap
    return first, cap - first


def apply_split(caps: np.ndarray, i: int, xi: float) -> np.ndarray:
    """Replace company i by children of fractions xi and 1 - xi (appended)."""
    n = caps.shape[0]
    if not 0 <= i < n:
        raise ValueError(f"split position {i} out of range for N={n}")
    c1, c2 = split_children(float(caps[i]), xi)
    return np.concatenate([caps[:i], caps[i + 1 :], [c1, c2]])


def pair_count(n: int) -> int:
    """m_N = C(N-1, 2): number of eligible merger pairs."""
    return math.comb(n - 1, 2)


def sample_merger_pair(
    caps: np.ndarray, rng: np.random.Generator
) -> tuple[int, int]:
    """Uniform pair of distinct non-top companies (0-based, i < j).

    The excluded company is the top-ranked one, ties resolved to the lowest
    index. Consumes exactly one integer draw.
    """
    n = caps.shape[0]
    if n < 3:
        raise ValueError(f"merger pairs need N >= 3, got N={n}")
    top = int(np.argmax(caps))
    eligible = [k for k in range(n) if k != top]
    r = int(rng.integers(pair_count(n)))
    m = len(eligible)
    for a in range(m - 1):
        block = m - 1 - a
        if r < block:
            return eligible[a], eligible[a + 1 + r]
        r -= block
    raise AssertionError("pair unranking fell off the end")


def merger_suppressed(
    weights: np.ndarray, i: int, j: int, delta: float
) -> bool:
    """True iff the merged company would itself reach the split threshold.

    Cannot happen for N >= 3 with delta < 1/6: the largest eligible pick has
    weight <= 1/2 and the second <= 1/3, so the sum stays <= 5/6 < 1 - delta.
    Kept as a defensive branch; occurrences are logged and counted.
    """
    return weights[i] + weights[j] >= 1.0 - delta


def apply_merger(caps: np.ndarray, i: int, j: int) -> np.ndarray:
    """Replace companies i < j by one of cap X_i + X_j (appended)."""
    n = caps.shape[0]
    if not 0 <= i < j < n:
        raise ValueError(f"bad merger pair ({i}, {j}) for N={n}")
    merged = float(caps[i]) + float(caps[j])
    keep = np.concatenate([caps[:i], caps[i + 1 : j], caps[j + 1 :]])
    return np.concatenate([keep, [merged]])


def post_split_weight_cap(params: ModelParams) -> float:
    """1 - delta0: the largest weight reachable immediately after a split at
    the exact boundary (children <= (1-eps0)(1-delta), others <= delta)."""
    return (1.0 - params.delta) * (1.0 - params.eps0)
