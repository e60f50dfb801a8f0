#!/usr/bin/env python3
"""Print the optimal-radius theory table for a range of dimensions.

Columns: dimension, optimal radius c_d, its shift L_d = c_d^2 - d, the
squared coefficient of variation at c_d and at sqrt(d+1), the sandwich
bounds, and the chi-squared mass enclosed by the optimal ellipsoid
(which approaches 1/2 as the dimension grows).
"""

import argparse
import math

from thames.radius import optimal_radius, regularized_gamma_p, scv_bounds, scv_normal


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--dmax", type=int, default=100)
    args = parser.parse_args()

    print(f"{'d':>4} {'c_d':>9} {'L_d':>8} {'scv(c_d)':>10} "
          f"{'scv(sqrt(d+1))':>15} {'lower':>8} {'upper':>8} {'hpd':>7}")
    for d in range(1, args.dmax + 1):
        opt = optimal_radius(d)
        lower, upper = scv_bounds(d)
        hpd = regularized_gamma_p(0.5 * d, 0.5 * opt.c_d ** 2)
        at_sqrt = scv_normal(d, math.sqrt(d + 1.0))
        print(f"{d:>4} {opt.c_d:>9.4f} {opt.l_d:>8.4f} {opt.scv_at_opt:>10.4f} "
              f"{at_sqrt:>15.4f} {lower:>8.4f} {upper:>8.4f} {hpd:>7.4f}")


if __name__ == "__main__":
    main()
