"""Critical incumbent power against the attack-to-benchmark reward ratio.

For quadratic costs and a constant reward ratio rho the threshold has the
closed form H / (1 + rho + sqrt(rho^2 - 1)); the numerical solver is run
alongside it.  A last row uses the congested fee market's reward curve.
Writes CSV to stdout.
"""

import math
import sys

import numpy as np

from majattack.attack import break_even_power, critical_incumbent_power, power_family
from majattack.core import Uniform
from majattack.fees import FeeMarket
from majattack.runner import format_rows, to_csv

COLS = ("schema_version", "reward_curve", "rho", "h_hat", "h_hat_closed_form", "residual")


def main() -> int:
    H, reward = 100.0, 100.0
    fam = power_family(2.0, H, reward)
    rows = []
    for rho in np.round(np.linspace(1.05, 3.0, 14), 4):
        h = critical_incumbent_power(fam, H, 1.0, reward, rho * reward)
        rows.append(
            {
                "schema_version": "1",
                "reward_curve": "constant",
                "rho": float(rho),
                "h_hat": h,
                "h_hat_closed_form": H / (1 + rho + math.sqrt(rho * rho - 1)),
                "residual": h + break_even_power(fam(h), H, reward, rho * reward, h) - H,
            }
        )
    m = FeeMarket(20.0, 5, Uniform(0.0, 1.0), 1.0)
    R = 1.0
    rew = R + m.per_block()
    rt = lambda x: R + m.per_block(H / x)
    fam = power_family(2.0, H, rew)
    h = critical_incumbent_power(fam, H, 1.0, rew, rt)
    rows.append(
        {
            "schema_version": "1",
            "reward_curve": "fee_market",
            "rho": None,
            "h_hat": h,
            "h_hat_closed_form": None,
            "residual": h + break_even_power(fam(h), H, rew, rt, h) - H,
        }
    )
    sys.stdout.write(to_csv(format_rows(rows, COLS), COLS))
    return 0


if __name__ == "__main__":
    sys.exit(main())
