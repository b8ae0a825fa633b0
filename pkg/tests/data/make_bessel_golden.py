"""Regenerate ``bessel_golden.json`` from high-precision ascending series.

The series are summed in mpmath at 60 significant digits and cross-checked
against mpmath's own Bessel routines before writing.

    python3 tests/data/make_bessel_golden.py
"""

import json
from pathlib import Path

import mpmath as mp

mp.mp.dps = 60

ARGUMENTS = ["0.05", "0.3", "1", "2.5", "4", "6.2", "8", "8.5", "11", "12.5",
             "17", "23.4", "31", "42", "50", "60"]
J_ORDERS = {"0": mp.mpf(0), "1": mp.mpf(1), "2/3": mp.mpf(2) / 3}
Y_ORDERS = [0, 1, 2, 3, 4]


def series_j(nu, x):
    half = x / 2
    total = mp.mpf(0)
    m = 0
    while True:
        term = (-1) ** m * half ** (2 * m + nu) / (mp.factorial(m) * mp.gamma(m + nu + 1))
        total += term
        if m > 10 and abs(term) < mp.mpf(10) ** (-mp.mp.dps + 5):
            return total
        m += 1


def series_y(n, x):
    half = x / 2
    out = 2 / mp.pi * series_j(n, x) * mp.log(half)
    out -= sum(mp.factorial(n - k - 1) / mp.factorial(k) * half ** (2 * k - n) for k in range(n)) / mp.pi
    tail = mp.mpf(0)
    k = 0
    while True:
        term = (mp.digamma(k + 1) + mp.digamma(n + k + 1)) * (-half * half) ** k / (
            mp.factorial(k) * mp.factorial(n + k))
        tail += term
        if k > 10 and abs(term) < mp.mpf(10) ** (-mp.mp.dps + 5):
            break
        k += 1
    return out - half**n * tail / mp.pi


def main():
    data = {"arguments": [float(mp.mpf(a)) for a in ARGUMENTS], "J": {}, "Y": {}}
    for label, nu in J_ORDERS.items():
        vals = []
        for a in ARGUMENTS:
            x = mp.mpf(a)
            v = series_j(nu, x)
            assert abs(v - mp.besselj(nu, x)) < mp.mpf(10) ** -30
            vals.append(float(v))
        data["J"][label] = vals
    for n in Y_ORDERS:
        vals = []
        for a in ARGUMENTS:
            x = mp.mpf(a)
            v = series_y(n, x)
            assert abs(v - mp.bessely(n, x)) < mp.mpf(10) ** -30
            vals.append(float(v))
        data["Y"][str(n)] = vals
    out = Path(__file__).with_name("bessel_golden.json")
    out.write_text(json.dumps(data, indent=1) + "\n")
    print(f"wrote {out}")


if __name__ == "__main__":
    main()
