#!/usr/bin/env python3
"""Race the top weight against the merger clock and tabulate the bound.

For a reflected-walk upper bound to be worth anything the estimate has
to sit below it at every rate, and both have to fall as the clock gets
faster.  Five equal names, delta = 0.13, lambda swept over a decade.
"""

import argparse

import numpy as np

from splitmerge import (
    ModelParams,
    RankTable,
    estimate_split_before_clock,
    split_before_clock_bound,
)

ap = argparse.ArgumentParser()
ap.add_argument("--paths", type=int, default=20_000)
ap.add_argument("--seed", type=int, default=13)
args = ap.parse_args()

params = ModelParams(
    drift=RankTable(0.0, 0.0),
    vol=RankTable(1.0, 0.0),
    delta=0.13,
    eps0=4.0 / 9.0,
    clock_c=2.0,
    clock_alpha=1.0,
    dt=1e-3,
)
caps0 = np.array([4.0, 1.0, 1.0, 1.0, 1.0])  # mu_1 = 1/2
sigma_bar = params.sigma_range()[1]

print(f"P(split before Exp(lam) clock), mu_1 = 0.5, delta = {params.delta}")
print(f"{'lam':>6}  {'estimate':>10}  {'3 se':>8}  {'bound':>8}")
for lam in (4.0, 9.0, 16.0, 25.0, 40.0):
    est = estimate_split_before_clock(
        params, caps0, lam, n_paths=args.paths, seed=args.seed
    )
    bound = split_before_clock_bound(0.5, params.delta, sigma_bar, lam)
    ok = "" if est.phat <= bound + 3 * est.se else "  <-- VIOLATED"
    print(f"{lam:>6g}  {est.phat:>10.5f}  {3 * est.se:>8.5f}  {bound:>8.5f}{ok}")
