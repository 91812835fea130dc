"""Independent oracle for the Anderson fixture.

Enumerates all 2^n sign sequences for E = 0, lambda = 1, eps_i = +-1 with plain
integer 2x2 matrices (no nalo code) and writes the exact concentration
probability of g_n ... g_1 for n = 1..16.

    python tests/oracles/anderson_oracle.py > tests/fixtures/anderson_rho.json
"""

import itertools
import json
from collections import Counter
from fractions import Fraction


def transfer(eps):
    # [[E + lambda eps, -1], [1, 0]] with E = 0, lambda = 1
    return (eps, -1, 1, 0)


def mul(x, y):
    a, b, c, d = x
    e, f, g, h = y
    return (a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h)


def rho(n):
    counts = Counter()
    for signs in itertools.product((1, -1), repeat=n):
        acc = (1, 0, 0, 1)
        for s in signs:
            acc = mul(transfer(s), acc)
        counts[acc] += 1
    return Fraction(max(counts.values()), 2**n)


if __name__ == "__main__":
    out = {"E": "0", "lambda": "1", "eps": ["1", "-1"], "weights": ["1/2", "1/2"],
           "rho": {str(n): str(rho(n)) for n in range(1, 17)}}
    print(json.dumps(out, indent=1))
