"""Regenerate tests/data/mlf_oracle.csv from the mpmath reference."""

import csv
from pathlib import Path

from mlf_oracle import ml_oracle

ALPHAS = (1.1, 1.5, 1.9)
ZS = (0.0, -0.5, -2.0, -5.0, -7.3, -10.0, -30.0, -47.0, -100.0, -300.0,
      -1e3, -4.2e3, -1e4, -1e5, -1e6)


def betas(alpha):
    return (1.0, 2.0, alpha, alpha + 1.0, alpha + 2.0)


def main():
    out = Path(__file__).resolve().parents[1] / "tests" / "data" / "mlf_oracle.csv"
    rows = []
    for a in ALPHAS:
        for b in betas(a):
            for z in ZS:
                value, digits = ml_oracle(a, b, z)
                rows.append((repr(a), repr(b), repr(z), f"{float(value):.17g}", digits))
    with out.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "beta", "z", "value", "oracle-digits"])
        w.writerows(rows)
    print(f"wrote {len(rows)} rows to {out}")


if __name__ == "__main__":
    main()
