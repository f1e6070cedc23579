"""Monte Carlo value of the optimal policy across seeds.

Prints the z-score of each seed against the closed-form value and the
mean z over all seeds. A healthy estimator gives mean z near 0.

    python3 scripts/seed_study.py --seeds 12 --paths 4000
"""

from __future__ import annotations

import argparse
import math

import numpy as np

from merton_verify import merton_solution
from merton_verify.market import AgentParams, MarketParams
from merton_verify.paths import SimConfig, default_horizon, mc_value, optimal_policy


def main() -> None:
    p = argparse.ArgumentParser()
    p.add_argument("--seeds", type=int, default=12)
    p.add_argument("--paths", type=int, default=4000)
    p.add_argument("--dt", type=float, default=0.02)
    p.add_argument("--R", type=float, default=2.0)
    p.add_argument("--delta", type=float, default=0.05)
    args = p.parse_args()

    m = MarketParams(r=0.02, mu=0.08, sigma=0.2)
    a = AgentParams(R=args.R, delta=args.delta)
    target = float(merton_solution(m, a).value_at(1.0))
    pol = optimal_policy(m, a)
    T = math.ceil(default_horizon(pol.pi, pol.xi, m, a) / args.dt) * args.dt
    zs = []
    for seed in range(args.seeds):
        est = mc_value(1.0, pol, SimConfig(seed, args.paths, args.dt, T), m, a)
        z = (est.mean - target) / est.std_error
        zs.append(z)
        print(f"seed={seed:3d} mean={est.mean:.6f} se={est.std_error:.6f} z={z:+.2f}")
    zs = np.array(zs)
    print(f"target={target:.6f} mean_z={zs.mean():+.3f} sd_z={zs.std(ddof=1):.3f}")


if __name__ == "__main__":
    main()
