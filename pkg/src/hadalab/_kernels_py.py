"""Pure-numpy fallbacks for the compiled kernels in ``_accel``.

``seg_add`` must accumulate in the order of ``targets``; ``np.add.at``
guarantees exactly that (unbuffered, element-by-element in index order), so
fallback and compiled path produce bit-identical convolutions.
"""

import numpy as np


def seg_add(targets, products, out):
    np.add.at(out, targets, products)


def square_bracket(k):
    p = np.arange(k + 1, dtype=np.float64)
    q = k - p
    return (k * k + 1.0) * np.sum(1.0 / ((p * p + 1.0) * (q * q + 1.0)))


def square_bracket_sweep(k_max):
    best = 0.0
    arg = 0
    for k in range(k_max + 1):
        s = square_bracket(k)
        if s > best:
            best = s
            arg = k
    return best, arg


def cross_bracket(n, p_lo, p_hi):
    p = np.arange(p_lo, p_hi + 1, dtype=np.float64)
    q = n - p
    return (n * n + 1.0) * np.sum(1.0 / ((p * p + 1.0) * (q * q + 1.0)))
