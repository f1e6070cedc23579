"""Value with a bankruptcy penalty P as P decreases, against the unconstrained value.

    python3 scripts/klss_limit.py
"""

from __future__ import annotations

from merton_verify import merton_solution
from merton_verify.closed_form import bankruptcy_value
from merton_verify.market import AgentParams, MarketParams


def main() -> None:
    m = MarketParams(r=0.02, mu=0.08, sigma=0.2)
    a = AgentParams(R=2.0, delta=0.05)
    x = 1.0
    v_hat = float(merton_solution(m, a).value_at(x))
    print(f"unconstrained value at x={x}: {v_hat:.10f}")
    for k in range(1, 11):
        P = -(10.0 ** k)
        bv = bankruptcy_value(P, m, a)
        v = float(bv.value_at(x))
        print(f"P=-1e{k:<2d} value={v:.10f} rel_gap={abs(v - v_hat) / abs(v_hat):.3e} "
              f"inversion_residual={float(bv.inversion_residual(x)):.1e}")


if __name__ == "__main__":
    main()
