"""Regenerate tests/data/ml_reference.json.

Values of E_{rho,mu}(z) with 30 significant digits from mpmath: the power
series at working precision scaled to the cancellation when
|z|^(1/rho) <= 300, the asymptotic series (truncated far below 1e-35)
beyond that.
"""

import json
from pathlib import Path

import mpmath as mp

OUT = Path(__file__).resolve().parents[1] / "tests" / "data" / "ml_reference.json"
SERIES_LIMIT = 300.0


def series(rho, mu, z):
    X = abs(z) ** (1.0 / rho) if z else 0.0
    dps = 40 + int(X / 2.3) + 10
    with mp.workdps(dps):
        zz, r, m = mp.mpf(z), mp.mpf(rho), mp.mpf(mu)
        eps = mp.mpf(10) ** (-dps)
        s, k, p = mp.mpf(0), 0, mp.mpf(1)
        while True:
            t = p * mp.rgamma(r * k + m)
            s += t
            if k > 5 and abs(t) < eps * (1 + abs(s)) and r * k + m > X + 5:
                return +s
            k += 1
            p *= zz


def asymptotic(rho, mu, z):
    with mp.workdps(50):
        zz, r, m = mp.mpf(z), mp.mpf(rho), mp.mpf(mu)
        s = mp.mpf(0)
        for k in range(1, 400):
            s += -(zz ** (-k)) * mp.rgamma(m - r * k)
            # 1/Gamma vanishes at poles, so stop on the envelope |1/Gamma(x)| <= Gamma(1+|x|)
            if abs(zz) ** (-k) * mp.gamma(1 + abs(m - r * k)) < mp.mpf(10) ** -45:
                break
        else:
            raise RuntimeError(f"asymptotic series did not settle for {rho}, {mu}, {z}")
        return +s


def value(rho, mu, z):
    if rho == 1.0 and mu == 1.0:
        with mp.workdps(50):
            return mp.exp(mp.mpf(z))
    if z < 0 and abs(z) ** (1.0 / rho) > SERIES_LIMIT:
        return asymptotic(rho, mu, z)
    return series(rho, mu, z)


def main() -> None:
    rows = []
    for rho in (0.1, 0.3, 0.5, 0.8, 1.0):
        for mu in sorted({rho, 1.0, rho + 1.0, rho + 2.0}):
            zs = [0.0, -0.3, -1.0, -2.5, -7.0, -20.0, -60.0, -250.0, -3000.0, 0.5, 1.0, 3.0]
            for z in zs:
                if rho <= 0.1 and 1.5 < abs(z) < 1e3:
                    continue  # neither branch of the reference is cheap here
                if z > 0 and z ** (1.0 / rho) > 200:
                    continue
                v = value(rho, mu, z)
                rows.append({"rho": rho, "mu": mu, "z": z, "value": mp.nstr(v, 30, strip_zeros=False)})
    OUT.write_text(json.dumps(rows, indent=1) + "\n")
    print(f"wrote {len(rows)} values to {OUT}")


if __name__ == "__main__":
    main()
