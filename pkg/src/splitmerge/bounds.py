"""Analytic bounds on event races and company-count explosion.

The regulated market trades off two opposing moves: the top weight
diffusing up to the split threshold ``1 - delta``, and the merger clock
(rate ``lambda_N``) pulling the company count back down.  Everything
here quantifies that race:

* ``split_before_clock_bound`` - closed-form upper bound on the
  probability that a split happens before an independent exponential
  clock rings, as a function of the starting top weight.
* ``rbm_hit_before_exp`` - the exact hitting probability for the
  comparison process (a reflected Brownian motion with variance rate
  ``2 sigma_bar^2``) from which the bound is derived.
* ``double_jump_bound`` - specialization to a freshly split market,
  whose top weight is at most ``1 - delta0``: an upper bound on the
  probability that the *next* event is another split.
* ``explosion_bound_terms`` - two-term bound on the probability that
  the company count doubles from L to 2L within [0, T].

Each closed form ships with a Monte Carlo estimator that measures the
same probability by simulation, so the bounds can be verified rather
than trusted (``estimate_split_before_clock``, ``simulate_rbm_hit``,
``estimate_double_jump``, ``tail_of_max_count``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .dynamics import market_weights
from .events import clock_rate
from .params import ModelParams
from .streams import PROBE, path_generator

PROBE_BLOCK = 4096  # paths per probe block; one generator per block


# ---------------------------------------------------------------------------
# interval arithmetic for frequencies


def wilson_interval(k: int, n: int, z: float = 3.0) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion.

    Stays inside [0, 1] and behaves sensibly at k = 0 and k = n, which
    is why it is used for the tail frequencies where counts can be tiny.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    if not 0 <= k <= n:
        raise ValueError("k must lie in [0, n]")
    p = k / n
    z2 = z * z
    denom = 1.0 + z2 / n
    center = (p + z2 / (2.0 * n)) / denom
    half = z * math.sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom
    # center - half is exactly 0 at k = 0 (and 1 at k = n) in real
    # arithmetic; pin the endpoints so roundoff cannot leak past them
    lo = 0.0 if k == 0 else max(0.0, center - half)
    hi = 1.0 if k == n else min(1.0, center + half)
    return lo, hi


@dataclass(frozen=True)
class TailEstimate:
    hits: int
    paths: int
    phat: float
    se: float
    ci_low: float
    ci_high: float

    @classmethod
    def from_counts(cls, hits: int, paths: int, z: float = 3.0) -> "TailEstimate":
        phat = hits / paths
        se = math.sqrt(phat * (1.0 - phat) / paths)
        lo, hi = wilson_interval(hits, paths, z)
        return cls(hits=hits, paths=paths, phat=phat, se=se, ci_low=lo, ci_high=hi)


# ---------------------------------------------------------------------------
# split-before-clock race


def split_before_clock_bound(
    mu1: float, delta: float, sigma_bar: float, lam: float
) -> float:
    """Upper bound on P(top weight reaches 1 - delta before Exp(lam)).

    ``2 * ((mu1 v 1/2) / (1 - delta)) ** (sqrt(lam) / sigma_bar)``.
    The top log-weight is dominated by a reflected Brownian motion with
    variance rate ``2 sigma_bar^2`` started at ``log(2 mu1) v 0``; the
    cosh hitting probability (:func:`rbm_hit_before_exp`) is then
    bounded by twice the exponential ratio.  At lam = 0 the bound is 2
    (vacuous: with no clock the threshold is eventually hit).
    """
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    if sigma_bar <= 0.0:
        raise ValueError("sigma_bar must be positive")
    if lam < 0.0:
        raise ValueError("lam must be nonnegative")
    base = max(mu1, 0.5) / (1.0 - delta)
    return 2.0 * base ** (math.sqrt(lam) / sigma_bar)


def rbm_hit_before_exp(x: float, y: float, sigma_bar: float, lam: float) -> float:
    """P(reflected BM from x hits y before an independent Exp(lam) rings).

    The process is ``|B|`` with ``d<B> = 2 sigma_bar^2 dt``, reflected at
    the origin.  Solving ``sigma_bar^2 u'' = lam u`` with ``u'(0) = 0``,
    ``u(y) = 1`` gives ``cosh(x sqrt(lam)/sigma_bar) /
    cosh(y sqrt(lam)/sigma_bar)``.  Evaluated in exponential-ratio form
    so large arguments cannot overflow.
    """
    if y <= 0.0:
        raise ValueError("y must be positive")
    if not 0.0 <= x:
        raise ValueError("x must be nonnegative")
    if sigma_bar <= 0.0:
        raise ValueError("sigma_bar must be positive")
    if lam < 0.0:
        raise ValueError("lam must be nonnegative")
    if x >= y:
        return 1.0
    if lam == 0.0:
        return 1.0
    s = math.sqrt(lam) / sigma_bar
    # cosh(xs)/cosh(ys) = exp((x-y)s) * (1 + exp(-2xs)) / (1 + exp(-2ys))
    return (
        math.exp((x - y) * s)
        * (1.0 + math.exp(-2.0 * x * s))
        / (1.0 + math.exp(-2.0 * y * s))
    )


def estimate_split_before_clock(
    params: ModelParams,
    initial_caps: np.ndarray,
    lam: float,
    n_paths: int,
    seed: int,
    max_steps: int | None = None,
) -> TailEstimate:
    """Measure P(split before clock) by simulating the pure diffusion.

    Races the market diffusion (no events applied) against an
    independent Exp(lam) clock drawn up front per path.  A path is a
    hit when the top weight first reaches ``1 - delta`` at a step
    boundary no later than the step during which the clock rings; ties
    go to the split, matching the engine's boundary semantics.  With
    ``lam == 0`` a ``max_steps`` horizon is required and unresolved
    paths count as misses.
    """
    params.require_valid()
    caps0 = np.asarray(initial_caps, dtype=np.float64)
    n = len(caps0)
    if lam < 0.0:
        raise ValueError("lam must be nonnegative")
    if lam == 0.0 and max_steps is None:
        raise ValueError("lam == 0 requires max_steps")
    dt = params.dt
    gdt = params.drift.row(n) * dt
    ssq = params.vol.row(n) * np.sqrt(np.float64(dt))
    thr = 1.0 - params.delta

    hits = 0
    for b, blk_start in enumerate(range(0, n_paths, PROBE_BLOCK)):
        m = min(PROBE_BLOCK, n_paths - blk_start)
        gen = path_generator(seed, b, PROBE)
        if lam > 0.0:
            eta = gen.exponential(scale=1.0 / lam, size=m)
            eta_steps = np.ceil(eta / dt).astype(np.int64)
        else:
            eta_steps = np.full(m, np.iinfo(np.int64).max, dtype=np.int64)
        caps = np.tile(caps0, (m, 1))
        alive = np.arange(m)
        step = 0
        while alive.size:
            step += 1
            if max_steps is not None and step > max_steps:
                break
            z = gen.standard_normal((alive.size, n))
            ranks = np.argsort(np.argsort(-caps, axis=1, kind="stable"), axis=1)
            caps = caps * np.exp(gdt[ranks] + ssq[ranks] * z)
            tot = caps.sum(axis=1)
            mu1 = caps.max(axis=1) / tot
            ev = eta_steps[alive]
            hit_now = (mu1 >= thr) & (step <= ev)
            miss_now = ~hit_now & (step >= ev)
            hits += int(np.count_nonzero(hit_now))
            keep = ~(hit_now | miss_now)
            if not keep.all():
                caps = caps[keep]
                alive = alive[keep]
    return TailEstimate.from_counts(hits, n_paths)


def simulate_rbm_hit(
    x: float,
    y: float,
    sigma_bar: float,
    lam: float,
    n_paths: int,
    dt: float,
    seed: int,
    bridge: bool = True,
    max_steps: int | None = None,
) -> TailEstimate:
    """Monte Carlo oracle for :func:`rbm_hit_before_exp`.

    Simulates the unreflected walk ``b += sigma_bar sqrt(2 dt) Z`` (the
    reflected process is |b|, so hitting y from inside means exiting
    the interval (-y, y)) and an independent per-step kill with
    probability ``1 - exp(-lam dt)``.  With ``bridge=True`` a Brownian
    bridge correction catches within-step crossings of either barrier,
    removing the O(sqrt(dt)) discretization bias of boundary sampling;
    ``bridge=False`` keeps the plain biased-low scheme for comparison.
    Hits take precedence over kills within a step (an O(dt) bias).
    """
    if not 0.0 <= x < y:
        raise ValueError("need 0 <= x < y")
    if sigma_bar <= 0.0 or dt <= 0.0:
        raise ValueError("sigma_bar and dt must be positive")
    if lam <= 0.0 and max_steps is None:
        raise ValueError("lam <= 0 requires max_steps")
    sd = sigma_bar * math.sqrt(2.0 * dt)
    var_step = 2.0 * sigma_bar * sigma_bar * dt
    pkill = -math.expm1(-lam * dt) if lam > 0.0 else 0.0

    hits = 0
    for blk, blk_start in enumerate(range(0, n_paths, PROBE_BLOCK)):
        m = min(PROBE_BLOCK, n_paths - blk_start)
        gen = path_generator(seed, blk, PROBE)
        b = np.full(m, float(x))
        step = 0
        while b.size:
            step += 1
            if max_steps is not None and step > max_steps:
                break
            z = gen.standard_normal(b.size)
            u_kill = gen.random(b.size)
            u_bridge = gen.random(b.size)
            b_new = b + sd * z
            crossed = np.abs(b_new) >= y
            if bridge:
                inside = ~crossed
                with np.errstate(over="ignore"):
                    p_up = np.exp(-2.0 * (y - b) * (y - b_new) / var_step)
                    p_dn = np.exp(-2.0 * (y + b) * (y + b_new) / var_step)
                    p_cross = 1.0 - (1.0 - p_up) * (1.0 - p_dn)
                crossed = crossed | (inside & (u_bridge < p_cross))
            killed = u_kill < pkill
            hit_now = crossed
            miss_now = ~crossed & killed
            hits += int(np.count_nonzero(hit_now))
            keep = ~(hit_now | miss_now)
            b = b_new[keep]
    return TailEstimate.from_counts(hits, n_paths)


# ---------------------------------------------------------------------------
# consecutive splits (double jump)


def double_jump_alpha1(delta: float, delta0: float, sigma_bar: float) -> float:
    """alpha_1 = (log(1 - delta) - log((1 - delta0) v 1/2)) / sigma_bar.

    The log-distance from the worst post-split top weight up to the
    split threshold, in units of the volatility bound.
    """
    if not 0.0 < delta < 1.0 or not 0.0 < delta0 < 1.0:
        raise ValueError("delta and delta0 must lie in (0, 1)")
    if delta0 <= delta:
        raise ValueError("delta0 must exceed delta")
    if sigma_bar <= 0.0:
        raise ValueError("sigma_bar must be positive")
    floor = max(1.0 - delta0, 0.5)
    return (math.log(1.0 - delta) - math.log(floor)) / sigma_bar


def double_jump_bound(
    delta: float, delta0: float, sigma_bar: float, lam: float
) -> float:
    """p_N = 2 exp(-alpha_1 sqrt(lam_N)): bound on a split racing the
    clock from a freshly split state (top weight <= 1 - delta0)."""
    a1 = double_jump_alpha1(delta, delta0, sigma_bar)
    if lam < 0.0:
        raise ValueError("lam must be nonnegative")
    return 2.0 * math.exp(-a1 * math.sqrt(lam))


def double_jump_bound_ratio_form(
    delta: float, delta0: float, sigma_bar: float, lam: float
) -> float:
    """Same bound written as the lemma's ratio power; must agree with
    :func:`double_jump_bound` to roundoff (an algebraic identity)."""
    if lam < 0.0:
        raise ValueError("lam must be nonnegative")
    floor = max(1.0 - delta0, 0.5)
    return 2.0 * (floor / (1.0 - delta)) ** (math.sqrt(lam) / sigma_bar)


@dataclass
class DoubleJumpStat:
    level: int
    segments: int = 0
    doubles: int = 0
    censored: int = 0

    @property
    def phat(self) -> float:
        return self.doubles / self.segments if self.segments else float("nan")

    @property
    def se(self) -> float:
        if not self.segments:
            return float("nan")
        p = self.phat
        return math.sqrt(p * (1.0 - p) / self.segments)


class DoubleJumpCollector:
    """Event-sink that scores consecutive-split races.

    A segment opens when a path enters level N (one of ``targets``) via
    a split no later than ``horizon - margin[N]``; it closes at that
    path's next event: another split scores a double jump, a merger or
    a suppressed merger means the clock won.  Segments still open when
    the run ends are censored and excluded (the margin keeps them
    rare).  Feed it to ``EngineRun(event_sink=...)`` with workers=1.
    """

    def __init__(
        self,
        targets: tuple[int, ...],
        horizon: float,
        params: ModelParams,
        margin_factor: float = 10.0,
    ) -> None:
        self.stats = {n: DoubleJumpStat(level=n) for n in targets}
        self.horizon = horizon
        self.margins = {
            n: margin_factor / clock_rate(n, params) for n in targets
        }
        self._open: dict[int, int] = {}  # path -> level of open segment

    def __call__(self, rec) -> None:
        path = rec.path
        lvl = self._open.pop(path, None)
        if lvl is not None:
            st = self.stats[lvl]
            st.segments += 1
            if rec.kind == "split":
                st.doubles += 1
        if (
            rec.kind == "split"
            and rec.n_after in self.stats
            and rec.t <= self.horizon - self.margins[rec.n_after]
        ):
            self._open[path] = rec.n_after

    def finalize(self) -> dict[int, DoubleJumpStat]:
        for lvl in self._open.values():
            self.stats[lvl].censored += 1
        self._open.clear()
        return self.stats


def estimate_double_jump(
    params: ModelParams,
    initial_caps: np.ndarray,
    horizon: float,
    n_paths: int,
    seed: int,
    targets: tuple[int, ...] = (3, 4, 5),
) -> dict[int, DoubleJumpStat]:
    """Run the engine and harvest consecutive-split frequencies."""
    from .engine import EngineRun, run_paths

    collector = DoubleJumpCollector(targets, horizon, params)
    run_paths(
        EngineRun(
            params=params,
            initial_caps=np.asarray(initial_caps, dtype=np.float64),
            horizon=horizon,
            n_paths=n_paths,
            seed=seed,
            event_sink=collector,
        )
    )
    return collector.finalize()


# ---------------------------------------------------------------------------
# company-count explosion


def rate_function(s: float) -> float:
    """H(s) = s - 1 - log s, the Poisson Chernoff exponent (H(1) = 0)."""
    if s <= 0.0:
        raise ValueError("s must be positive")
    return s - 1.0 - math.log(s)


@lru_cache(maxsize=1)
def rate_domain_root() -> float:
    """The root s0 in (0, 1/2) of s - 1 - (1/2) log s.

    ``H(s) >= -(1/2) log s`` holds exactly on (0, s0]; the inequality
    fails beyond it (already at s = 1/2), which is what limits the
    regime where the explosion tail decays by halving arguments.
    """
    f = lambda s: s - 1.0 - 0.5 * math.log(s)
    lo, hi = 1e-12, 0.5
    if not (f(lo) > 0.0 and f(hi) < 0.0):
        raise AssertionError("bracketing failed")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class ExplosionBound:
    log_sigma1: float
    log_sigma2: float
    lam_low: float   # min clock rate over levels L+1 .. 2L-1
    lam_high: float  # max clock rate over levels 3 .. 2L-1

    @property
    def sigma1(self) -> float:
        return math.exp(self.log_sigma1)

    @property
    def sigma2(self) -> float:
        return math.exp(self.log_sigma2)

    @property
    def log_total(self) -> float:
        return float(np.logaddexp(self.log_sigma1, self.log_sigma2))

    @property
    def total(self) -> float:
        return math.exp(self.log_total)


def explosion_bound_terms(
    L: int, u: float, T: float, params: ModelParams
) -> ExplosionBound:
    """Two-term bound on P(company count reaches 2L by time T | N(0) <= L).

    The first term controls trajectories with at most ``u`` events: each
    of the L net upward crossings from level L to 2L costs a
    double-jump factor, giving

        sigma1 = (3u)^L / L! * 2^(L-1) * exp(-alpha_1 (L-1) sqrt(lam_low)),

    with ``lam_low`` the smallest clock rate on the levels that must be
    crossed.  The second term is the Poisson Chernoff tail for seeing
    more than ``u`` events by T at the fastest rate ``lam_high``:

        sigma2 = exp(-u * H(T lam_high / u)),

    valid when ``u`` exceeds both ``L`` and ``T lam_high`` (so the
    argument of H lies in (0, 1)).  Everything is computed in logs via
    ``lgamma``; exponentiation is left to the caller's properties.
    """
    params.require_valid()
    if L < 2:
        raise ValueError("L must be at least 2")
    if 2 * L > params.n_max:
        raise ValueError("2L exceeds n_max; the doubling event is truncated")
    if T <= 0.0:
        raise ValueError("T must be positive")
    lam_low = min(clock_rate(n, params) for n in range(L + 1, 2 * L))
    lam_high = max(clock_rate(n, params) for n in range(3, 2 * L))
    if u <= max(L, T * lam_high):
        raise ValueError(
            f"u must exceed max(L, T*lam_high) = {max(L, T * lam_high)!r}"
        )
    sigma_bar = params.sigma_range()[1]
    a1 = double_jump_alpha1(params.delta, params.delta0, sigma_bar)
    log_sigma1 = (
        L * math.log(3.0 * u)
        - math.lgamma(L + 1.0)
        + (L - 1.0) * math.log(2.0)
        - a1 * (L - 1.0) * math.sqrt(lam_low)
    )
    s = T * lam_high / u
    log_sigma2 = -u * rate_function(s)
    return ExplosionBound(
        log_sigma1=log_sigma1,
        log_sigma2=log_sigma2,
        lam_low=lam_low,
        lam_high=lam_high,
    )


@dataclass
class TailCurve:
    """Empirical tail of max_t N(t) on a grid of levels."""

    u_grid: tuple[int, ...]
    estimates: dict[int, TailEstimate] = field(default_factory=dict)
    peak: int = 0  # largest company count seen on any path
    exploded: int = 0  # paths stopped by the hard cap

    def log_slope(self, u: int) -> float:
        """-log phat(u) / u; +inf when no path reached u."""
        est = self.estimates[u]
        if est.hits == 0:
            return float("inf")
        return -math.log(est.phat) / u + 0.0  # normalize -0.0 at phat = 1

    def monotone_on_disjoint_pairs(self) -> tuple[bool, list[tuple[int, int]]]:
        """Check -log phat(u)/u is nondecreasing across adjacent levels
        whose Wilson intervals are disjoint; zero-hit levels are skipped
        (their slope is infinite, carrying no information).  Returns the
        verdict and the list of compared pairs."""
        levels = [u for u in self.u_grid if self.estimates[u].hits > 0]
        pairs = []
        ok = True
        for a, b in zip(levels, levels[1:]):
            ea, eb = self.estimates[a], self.estimates[b]
            if ea.ci_low > eb.ci_high or eb.ci_low > ea.ci_high:
                pairs.append((a, b))
                if self.log_slope(a) > self.log_slope(b):
                    ok = False
        return ok, pairs


def tail_of_max_count(
    params: ModelParams,
    initial_caps: np.ndarray,
    horizon: float,
    n_paths: int,
    seed: int,
    u_grid: tuple[int, ...],
    workers: int = 1,
) -> TailCurve:
    """Estimate P(max_t N(t) >= u) on a grid of levels u."""
    from .engine import EngineRun, run_paths

    res = run_paths(
        EngineRun(
            params=params,
            initial_caps=np.asarray(initial_caps, dtype=np.float64),
            horizon=horizon,
            n_paths=n_paths,
            seed=seed,
            workers=workers,
        )
    )
    curve = TailCurve(
        u_grid=tuple(u_grid),
        peak=int(res.max_n.max()),
        exploded=int(np.count_nonzero(res.status == 1)),
    )
    for u in curve.u_grid:
        hits = int(np.count_nonzero(res.max_n >= u))
        curve.estimates[u] = TailEstimate.from_counts(hits, n_paths)
    return curve
