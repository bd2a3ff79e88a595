"""Built-in model problems.

Three families, one per admissible-regularity regime:

* ``cauchy-riemann``: the rotation symbol, simple eigenvalue i, smooth
  branch, curvature degenerate (constant symbol).
* ``jordan-elliptic``: a defective double eigenvalue i (a 2x2 complex Jordan
  block realified to 4x4); only the baseline assumptions hold.
* ``max-flat``: the rotation symbol scaled by 1 - t^2 - |x|^2, whose branch
  has a strict interior maximum of its imaginary part at the origin.

All carry the quadratic source F(u) = u_1 * Id so the nonlinear solver has a
genuinely coupled fixed-point problem.
"""

from __future__ import annotations

import numpy as np

from .symbol import MatrixPolynomial, SymbolFamily, family_from_json

ROT2 = np.array([[0.0, -1.0], [1.0, 0.0]])


def _quadratic_source(d: int, N: int) -> MatrixPolynomial:
    c = [0] * N
    c[0] = 1
    return MatrixPolynomial(d, N, [(np.eye(N), 0, (0,) * d, tuple(c))])


def cauchy_riemann() -> SymbolFamily:
    A1 = MatrixPolynomial(1, 2, [(ROT2, 0, (0,), (0, 0))])
    return SymbolFamily(d=1, N=2, A=[A1], F=_quadratic_source(1, 2),
                        xi0=np.array([1.0]), name="cauchy-riemann")


def jordan_elliptic() -> SymbolFamily:
    # realification of the complex 2x2 block [[i, 1], [0, i]]
    X = np.array([[0.0, 1.0], [0.0, 0.0]])
    Y = np.eye(2)
    J = np.block([[X, -Y], [Y, X]])
    A1 = MatrixPolynomial(1, 4, [(J, 0, (0,), (0, 0, 0, 0))])
    return SymbolFamily(d=1, N=4, A=[A1], F=_quadratic_source(1, 4),
                        xi0=np.array([1.0]), name="jordan-elliptic")


def max_flat() -> SymbolFamily:
    zeros_u = (0, 0)
    A1 = MatrixPolynomial(1, 2, [
        (ROT2, 0, (0,), zeros_u),
        (-ROT2, 2, (0,), zeros_u),   # -t^2
        (-ROT2, 0, (2,), zeros_u),   # -x^2
    ])
    return SymbolFamily(d=1, N=2, A=[A1], F=_quadratic_source(1, 2),
                        xi0=np.array([1.0]), name="max-flat")


BUILTIN = {
    "cauchy-riemann": cauchy_riemann,
    "jordan-elliptic": jordan_elliptic,
    "max-flat": max_flat,
}


def get_model(name: str) -> SymbolFamily:
    """Resolve a built-in model name or a ``file:<path>`` JSON description."""
    if name in BUILTIN:
        return BUILTIN[name]()
    if name.startswith("file:"):
        return family_from_json(name[5:])
    raise KeyError(f"unknown model {name!r}; "
                   f"builtins: {', '.join(sorted(BUILTIN))} or file:<path>")
