"""Extended-precision reference values of E_{alpha,beta}(z) for z <= 0.

Independent of the package: plain mpmath, power series with a working
precision large enough to absorb the cancellation, and for very large
arguments the algebraic expansion plus the two pole residues at 50 digits.
"""

import mpmath as mp

SERIES_LIMIT = 120


def ml_oracle(alpha, beta, z):
    """Return ``(value, digits)`` for real ``z <= 0``."""
    alpha = mp.mpf(alpha)
    beta = mp.mpf(beta)
    z = mp.mpf(z)
    x = -z
    if x == 0:
        return mp.rgamma(beta), 30
    r0 = x ** (1 / alpha)
    if r0 <= SERIES_LIMIT:
        # largest term ~ exp(r0); keep 40 digits beyond it
        dps = int(float(r0) / 2.3) + 40
        with mp.workdps(dps):
            acc = mp.mpf(0)
            k = 0
            while True:
                term = z**k * mp.rgamma(alpha * k + beta)
                acc += term
                if k > 10 and abs(term) < mp.mpf(10) ** (-dps + 5) * max(abs(acc), mp.mpf(10) ** -300):
                    break
                k += 1
            return +acc, 30
    with mp.workdps(50):
        pole = r0 * mp.expj(mp.pi / alpha)
        res = 2 / alpha * mp.re(pole ** (1 - beta) * mp.exp(pole))
        acc = mp.mpf(0)
        for k in range(1, int(r0 / alpha) + 1):
            acc += z ** (-k) * mp.rgamma(beta - alpha * k)
        return res - acc, 30
