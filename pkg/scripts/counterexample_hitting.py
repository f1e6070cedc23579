"""Hitting statistics and probe means for both counterexample strategies.

    python3 scripts/counterexample_hitting.py --paths 2000 --dt 1e-4
"""

from __future__ import annotations

import argparse
import json

from merton_verify.counterexamples import counterexample_fast_consumption, counterexample_wild
from merton_verify.market import AgentParams, MarketParams
from merton_verify.paths import SimConfig


def main() -> None:
    p = argparse.ArgumentParser()
    p.add_argument("--paths", type=int, default=2000)
    p.add_argument("--dt", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=11)
    args = p.parse_args()

    m = MarketParams(r=0.02, mu=0.08, sigma=0.2)
    a = AgentParams(R=2.0, delta=0.05)
    cfg = SimConfig(args.seed, args.paths, args.dt, 1.0)
    for name, fn in (("wild", counterexample_wild), ("fast", counterexample_fast_consumption)):
        res = fn(1.0, cfg, m, a)
        print(name, json.dumps(res.stats.to_json(), sort_keys=True))
        for t, e in zip(res.probe_times, res.probes):
            print(f"  E[N] at t={t:.6f}: {e.mean:+.4f} +/- {e.std_error:.4f}")


if __name__ == "__main__":
    main()
