"""Truncated multivariate power series and the model comparison series.

Coefficients are stored densely over all multi-indices of total order up to
the truncation order, in graded lexicographic order. Products are truncated
Cauchy convolutions whose accumulation order is fixed (pairs sorted by target
index, then left factor), so they are reproducible bit-for-bit and match a
naive double-loop oracle exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import lru_cache

import numpy as np

from . import kernels

SAFETY = 0.99  # margin absorbing the analytic tails of the constant sweeps

# sum over the integers of 1/(p^2+1), twice resp. once-sided: the exact
# k -> infinity limits of the two bracket sweeps below
_CROSS_LIMIT = 2.0 * math.pi / math.tanh(math.pi)
_SQUARE_LIMIT = 1.0 + math.pi / math.tanh(math.pi)


class ShapeMismatchError(ValueError):
    pass


class GridMismatchError(ValueError):
    pass


class SeriesDivergedError(ValueError):
    """Raised when the model series is evaluated at or past its radius."""


# ---------------------------------------------------------------------------
# multi-index bookkeeping


@lru_cache(maxsize=None)
def multi_indices(d: int, order: int) -> tuple[tuple[int, ...], ...]:
    """All k in N^d with |k| <= order, graded lexicographic."""
    if d < 1:
        raise ValueError("dim_x must be >= 1")
    out = []

    def rec(prefix, remaining, slots):
        if slots == 1:
            out.append(prefix + (remaining,))
            return
        for v in range(remaining + 1):
            rec(prefix + (v,), remaining - v, slots - 1)

    for total in range(order + 1):
        block = []

        def rec2(prefix, used, slots):
            if slots == 1:
                block.append(prefix + (total - used,))
                return
            for v in range(total - used + 1):
                rec2(prefix + (v,), used + v, slots - 1)

        rec2((), 0, d)
        block.sort()
        out.extend(block)
    return tuple(out)


@lru_cache(maxsize=None)
def index_positions(d: int, order: int) -> dict[tuple[int, ...], int]:
    return {k: i for i, k in enumerate(multi_indices(d, order))}


def n_indices(d: int, order: int) -> int:
    return len(multi_indices(d, order))


@dataclass(frozen=True)
class ConvTable:
    """Pair lists (I, J) -> T for the truncated Cauchy product.

    Sorted by (T, I, J): per output slot the accumulation runs over the left
    index in increasing order, matching a row-major double loop.
    """

    I: np.ndarray
    J: np.ndarray
    T: np.ndarray
    n_out: int


@lru_cache(maxsize=None)
def conv_table(d: int, order_a: int, order_b: int, order_out: int) -> ConvTable:
    idx_a = multi_indices(d, order_a)
    idx_b = multi_indices(d, order_b)
    pos_out = index_positions(d, order_out)
    rows = []
    for i, ka in enumerate(idx_a):
        if sum(ka) > order_out:
            break
        for j, kb in enumerate(idx_b):
            ks = tuple(x + y for x, y in zip(ka, kb))
            t = pos_out.get(ks)
            if t is not None:
                rows.append((t, i, j))
    rows.sort()
    arr = np.asarray(rows, dtype=np.intp).reshape(-1, 3)
    return ConvTable(
        I=np.ascontiguousarray(arr[:, 1]),
        J=np.ascontiguousarray(arr[:, 2]),
        T=np.ascontiguousarray(arr[:, 0]),
        n_out=len(pos_out),
    )


@lru_cache(maxsize=None)
def derive_table(d: int, order: int, axis: int):
    """(dst, src, factor) arrays for the formal derivative along one axis."""
    if not 0 <= axis < d:
        raise ValueError(f"axis {axis} out of range for dim {d}")
    pos_src = index_positions(d, order)
    idx_out = multi_indices(d, order - 1) if order >= 1 else ()
    dst, src, fac = [], [], []
    for t, k in enumerate(idx_out):
        up = list(k)
        up[axis] += 1
        dst.append(t)
        src.append(pos_src[tuple(up)])
        fac.append(up[axis])
    return (
        np.asarray(dst, dtype=np.intp),
        np.asarray(src, dtype=np.intp),
        np.asarray(fac, dtype=np.float64),
    )


@lru_cache(maxsize=None)
def shift_table(d: int, order: int, shift: tuple[int, ...]):
    """(dst, src) arrays for multiplication by the monomial x^shift."""
    pos = index_positions(d, order)
    dst, src = [], []
    for i, k in enumerate(multi_indices(d, order)):
        ks = tuple(a + b for a, b in zip(k, shift))
        t = pos.get(ks)
        if t is not None:
            dst.append(t)
            src.append(i)
    return np.asarray(dst, dtype=np.intp), np.asarray(src, dtype=np.intp)


# ---------------------------------------------------------------------------
# the series object


@dataclass
class PowerSeriesX:
    """Truncated power series in x, optionally sampled on a time grid.

    ``coeffs`` has shape (n_idx, *value) without a grid and
    (n_idx, n_times, *value) with one; value is scalar (), vector (N,) or
    matrix (N, N).
    """

    dim_x: int
    trunc_order: int
    coeffs: np.ndarray
    time_grid: np.ndarray | None = None

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.complex128)
        want = n_indices(self.dim_x, self.trunc_order)
        if self.coeffs.shape[0] != want:
            raise ShapeMismatchError(
                f"expected {want} coefficient rows for d={self.dim_x}, "
                f"K={self.trunc_order}, got {self.coeffs.shape[0]}"
            )
        if self.time_grid is not None:
            self.time_grid = np.asarray(self.time_grid, dtype=np.float64)
            if self.time_grid.ndim != 1 or np.any(np.diff(self.time_grid) <= 0):
                raise GridMismatchError("time grid must be strictly increasing")
            if self.coeffs.ndim < 2 or self.coeffs.shape[1] != self.time_grid.size:
                raise ShapeMismatchError("coefficients do not match the time grid")
            if self.coeffs.ndim > 4:
                raise ShapeMismatchError("value rank must be <= 2")
        elif self.coeffs.ndim > 3:
            raise ShapeMismatchError("value rank must be <= 2")

    @property
    def value_shape(self) -> tuple[int, ...]:
        off = 1 if self.time_grid is None else 2
        return self.coeffs.shape[off:]

    @property
    def kind(self) -> str:
        return {0: "scalar", 1: "vector", 2: "matrix"}[len(self.value_shape)]

    @property
    def indices(self):
        return multi_indices(self.dim_x, self.trunc_order)

    def copy(self) -> "PowerSeriesX":
        return PowerSeriesX(self.dim_x, self.trunc_order, self.coeffs.copy(),
                            None if self.time_grid is None else self.time_grid.copy())

    def coefficient(self, k: tuple[int, ...]) -> np.ndarray:
        return self.coeffs[index_positions(self.dim_x, self.trunc_order)[k]]


def zeros(d: int, order: int, value_shape=(), time_grid=None) -> PowerSeriesX:
    n = n_indices(d, order)
    if time_grid is None:
        c = np.zeros((n, *value_shape), dtype=np.complex128)
    else:
        c = np.zeros((n, len(time_grid), *value_shape), dtype=np.complex128)
    return PowerSeriesX(d, order, c, time_grid)


def from_coeff_dict(d: int, order: int, entries: dict, value_shape=(),
                    time_grid=None) -> PowerSeriesX:
    ps = zeros(d, order, value_shape, time_grid)
    pos = index_positions(d, order)
    for k, v in entries.items():
        ps.coeffs[pos[tuple(k)]] = v
    return ps


def _check_compat(a: PowerSeriesX, b: PowerSeriesX):
    if a.dim_x != b.dim_x:
        raise ShapeMismatchError("dim_x mismatch")
    ga, gb = a.time_grid, b.time_grid
    if (ga is None) != (gb is None):
        raise GridMismatchError("one operand has a time grid, the other not")
    if ga is not None and (ga.shape != gb.shape or not np.array_equal(ga, gb)):
        raise GridMismatchError("time grids differ")


def _conv_accumulate(prod: np.ndarray, table: ConvTable) -> np.ndarray:
    """Scatter-add pair products into output slots in fixed (target,
    left-index) order via the selected kernel."""
    P = prod.shape[0]
    flat = np.ascontiguousarray(prod.reshape(P, -1))
    out = np.zeros((table.n_out, flat.shape[1]), dtype=np.complex128)
    kernels.seg_add(table.T, flat, out)
    return out.reshape(table.n_out, *prod.shape[1:])


def conv_arrays(a: np.ndarray, b: np.ndarray, table: ConvTable) -> np.ndarray:
    """Matrix-contraction convolution:
    a (n_a, T, r, m) x b (n_b, T, m, c) -> (n_out, T, r, c)."""
    return _conv_accumulate(np.matmul(a[table.I], b[table.J]), table)


def conv_arrays_ew(a: np.ndarray, b: np.ndarray, table: ConvTable) -> np.ndarray:
    """Elementwise (broadcasting) convolution; used for scalar scaling and
    componentwise vector products so pair products are plain multiplies,
    bit-identical to a naive double loop."""
    return _conv_accumulate(a[table.I] * b[table.J], table)


def ps_mul(a: PowerSeriesX, b: PowerSeriesX, order_out: int | None = None) -> PowerSeriesX:
    """Truncated Cauchy product with value semantics by operand kind:

    scalar*any and any*scalar scale, matrix*matrix composes, matrix*vector
    applies, vector*vector multiplies componentwise.
    """
    _check_compat(a, b)
    kout = min(a.trunc_order, b.trunc_order) if order_out is None else order_out
    table = conv_table(a.dim_x, a.trunc_order, b.trunc_order, kout)
    grid = a.time_grid
    has_grid = grid is not None
    ka, kb = a.kind, b.kind
    va, vb = a.value_shape, b.value_shape

    def finish(out):
        if not has_grid:
            out = out[:, 0]
        return PowerSeriesX(a.dim_x, kout, out, grid)

    ca = a.coeffs if has_grid else a.coeffs[:, None]
    cb = b.coeffs if has_grid else b.coeffs[:, None]
    if ka == "scalar":
        lead = ca.reshape(ca.shape[:2] + (1,) * len(vb))
        return finish(conv_arrays_ew(lead, cb, table))
    if kb == "scalar":
        trail = cb.reshape(cb.shape[:2] + (1,) * len(va))
        return finish(conv_arrays_ew(ca, trail, table))
    if ka == "vector" and kb == "vector":
        if va != vb:
            raise ShapeMismatchError(f"component mismatch {va} vs {vb}")
        return finish(conv_arrays_ew(ca, cb, table))
    if ka == "matrix" and kb == "matrix":
        if va[1] != vb[0]:
            raise ShapeMismatchError(f"cannot compose {va} with {vb}")
        return finish(conv_arrays(ca, cb, table))
    if ka == "matrix" and kb == "vector":
        if va[1] != vb[0]:
            raise ShapeMismatchError(f"cannot apply {va} to {vb}")
        return finish(conv_arrays(ca, cb[..., None], table)[..., 0])
    if ka == "vector" and kb == "matrix":
        if va[0] != vb[0]:
            raise ShapeMismatchError(f"cannot apply {va} to {vb}")
        return finish(conv_arrays(ca[:, :, None, :], cb, table)[:, :, 0, :])
    raise ShapeMismatchError(f"unsupported kinds {ka} * {kb}")


def ps_derive(a: PowerSeriesX, axis: int) -> PowerSeriesX:
    """Formal derivative along one x axis; the truncation order drops by one
    since the top-order coefficients of the derivative are not determined by
    the stored data."""
    if a.trunc_order == 0:
        return zeros(a.dim_x, 0, a.value_shape, a.time_grid)
    dst, src, fac = derive_table(a.dim_x, a.trunc_order, axis)
    shape_tail = a.coeffs.shape[1:]
    out = np.zeros((n_indices(a.dim_x, a.trunc_order - 1), *shape_tail),
                   dtype=np.complex128)
    fac_b = fac.reshape((-1,) + (1,) * len(shape_tail))
    out[dst] = fac_b * a.coeffs[src]
    return PowerSeriesX(a.dim_x, a.trunc_order - 1, out, a.time_grid)


def ps_pad(a: PowerSeriesX, order: int) -> PowerSeriesX:
    """Re-embed into a larger truncation order, zero-filling the new top."""
    if order < a.trunc_order:
        raise ValueError("pad target below current order")
    if order == a.trunc_order:
        return a
    out = zeros(a.dim_x, order, a.value_shape, a.time_grid)
    out.coeffs[: a.coeffs.shape[0]] = a.coeffs
    return out


def ps_shift_monomial(a: PowerSeriesX, shift: tuple[int, ...]) -> PowerSeriesX:
    """Multiply by the monomial x^shift, discarding overflowing orders."""
    if all(s == 0 for s in shift):
        return a.copy()
    dst, src = shift_table(a.dim_x, a.trunc_order, tuple(shift))
    out = zeros(a.dim_x, a.trunc_order, a.value_shape, a.time_grid)
    out.coeffs[dst] = a.coeffs[src]
    return out


def eval_series(a: PowerSeriesX, x) -> np.ndarray:
    """Evaluate at point(s) x, accumulating by descending total degree.

    x has shape (d,) or (S, d); returns (*batch, [T,] *value).
    """
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    idx = np.asarray(a.indices, dtype=np.int64)  # (n_idx, d)
    # monomials x^k for every sample and index
    mono = np.prod(x[:, None, :] ** idx[None, :, :], axis=2)  # (S, n_idx)
    orders = idx.sum(axis=1)
    tail = a.coeffs.shape[1:]
    res = np.zeros((x.shape[0], *tail), dtype=np.complex128)
    for deg in range(a.trunc_order, -1, -1):
        sel = orders == deg
        if not np.any(sel):
            continue
        res += np.tensordot(mono[:, sel], a.coeffs[sel], axes=(1, 0))
    return res


# ---------------------------------------------------------------------------
# the model series


@dataclass
class ModelMajorant:
    """Comparison envelope C * Phi(R X + rho t): a one-variable series with
    slowly decaying coefficients, composed radially in the x variables."""

    C: float
    R: float
    rho: float
    c0: float
    p_trunc: int = 100_000
    rel_tol: float = 1e-12

    def __post_init__(self):
        if self.C < 0 or self.R <= 0 or self.rho < 0:
            raise ValueError("need C >= 0, R > 0, rho >= 0")


def _radial_sums(max_order: int, z: float, c0: float, rel_tol: float,
                 p_cap: int) -> np.ndarray:
    """S(kappa) = sum_p c0 * binom(kappa+p, p) z^p / ((kappa+p)^2 + 1) for
    kappa = 0..max_order, with a geometric tail certificate < rel_tol."""
    if z < 0:
        raise ValueError("negative time")
    if z >= 1.0:
        raise SeriesDivergedError(
            f"model series evaluated at rho*t = {z:.6g} >= 1 "
            "(maximal regularity time exceeded)")
    kappa = np.arange(max_order + 1, dtype=np.float64)
    term = c0 / (kappa**2 + 1.0)
    total = term.copy()
    if z == 0.0:
        return total
    active = np.ones_like(term, dtype=bool)
    p = 0
    while np.any(active) and p < p_cap:
        kp = kappa + p
        ratio = z * (kp + 1.0) / (p + 1.0) * (kp**2 + 1.0) / ((kp + 1.0) ** 2 + 1.0)
        term = term * ratio
        total += np.where(active, term, 0.0)
        # once the crude ratio bound drops below 1 the tail is geometric
        rbound = z * (kappa + p + 2.0) / (p + 2.0)
        safe = np.where(rbound < 1.0, 1.0 - rbound, 1.0)
        done = (rbound < 1.0) & (term * rbound / safe < rel_tol * total)
        active &= ~done
        p += 1
    if np.any(active):
        raise SeriesDivergedError("p-sum did not certify its tail below tolerance")
    return total


def _multinomial(k: tuple[int, ...]) -> float:
    """|k|! / prod k_i!; exact integer arithmetic, lgamma past float range."""
    tot = sum(k)
    if tot <= 170:
        v = math.factorial(tot)
        for ki in k:
            v //= math.factorial(ki)
        return float(v)
    lg = math.lgamma(tot + 1) - sum(math.lgamma(ki + 1) for ki in k)
    return math.exp(lg) if lg < 700 else math.inf


def phi_coefficient(k: tuple[int, ...], t: float, m: ModelMajorant) -> float:
    """Coefficient of x^k in Phi(R X + rho t) (amplitude C not included)."""
    k = tuple(int(v) for v in k)
    kappa = sum(k)
    s = _radial_sums(kappa, m.rho * t, m.c0, m.rel_tol, m.p_trunc)[kappa]
    return (m.R ** kappa) * _multinomial(k) * s


def phi_table(d: int, order: int, times, m: ModelMajorant) -> np.ndarray:
    """Phi_k(t) for all |k| <= order and all t in ``times``; shape (n_idx, T)."""
    times = np.atleast_1d(np.asarray(times, dtype=np.float64))
    idx = multi_indices(d, order)
    kap = np.array([sum(k) for k in idx], dtype=np.int64)
    multi = np.array([_multinomial(k) for k in idx])
    rad = np.empty((order + 1, times.size))
    for j, t in enumerate(times):
        rad[:, j] = _radial_sums(order, m.rho * t, m.c0, m.rel_tol, m.p_trunc)
    rk = m.R ** kap.astype(np.float64)
    return (rk * multi)[:, None] * rad[kap]


def phi_series(d: int, order: int, times, m: ModelMajorant) -> PowerSeriesX:
    """The model series itself as a PowerSeriesX (scalar values)."""
    tab = phi_table(d, order, times, m)
    if times is None or np.ndim(times) == 0:
        pass
    grid = np.atleast_1d(np.asarray(times, dtype=np.float64))
    return PowerSeriesX(d, order, tab.astype(np.complex128), grid)


def compose_radial(coeff_fn, d: int, order: int, t: float, R: float,
                   rho: float, p_trunc: int = 100_000,
                   rel_tol: float = 1e-12) -> PowerSeriesX:
    """Compose a one-variable series a(z) = sum_j a_j z^j into
    a(R x_1 + ... + R x_d + rho t); reference oracle for tests.

    Direct summation: coefficient at k is
    R^{|k|} sum_p a_{|k|+p} multinom(|k|+p; k, p) (rho t)^p.
    """
    z = rho * t
    if z >= 1:
        raise SeriesDivergedError("composition evaluated past the radius")
    idx = multi_indices(d, order)
    out = np.zeros(len(idx), dtype=np.complex128)
    for i, k in enumerate(idx):
        kappa = sum(k)
        mult = _multinomial(k)
        acc = 0.0
        zp = 1.0
        for p in range(p_trunc):
            a = coeff_fn(kappa + p)
            binp = math.comb(kappa + p, p)
            term = a * binp * zp
            acc += term
            if z == 0.0:
                break
            zp *= z
            if p > 4 and abs(a) * binp * zp < rel_tol * max(abs(acc), 1e-300) * (1 - z):
                break
        out[i] = (R ** kappa) * mult * acc
    return PowerSeriesX(d, order, out.reshape(-1, 1),
                        np.asarray([t], dtype=np.float64))


@dataclass
class MajorizeReport:
    ok: bool
    worst_index: tuple[int, ...] | None = None
    worst_time: float | None = None
    worst_ratio: float = 0.0

    def __bool__(self):
        return self.ok


def majorizes(phi: PowerSeriesX, m: ModelMajorant, times=None,
              slack: float = 1e-12) -> MajorizeReport:
    """Entrywise |phi_k(t)| <= C * Phi_k(t) on every stored index and time.

    Matrix and vector values are compared entrywise (max norm). Returns the
    worst violating (k, t, ratio) when the domination fails.
    """
    if times is None:
        times = phi.time_grid if phi.time_grid is not None else np.array([0.0])
    times = np.atleast_1d(np.asarray(times, dtype=np.float64))
    if m.rho * times.max() >= 1.0:
        raise SeriesDivergedError("rho * max(times) must stay below 1")
    tab = m.C * phi_table(phi.dim_x, phi.trunc_order, times, m)  # (n_idx, T)

    c = phi.coeffs
    if phi.time_grid is None:
        c = c[:, None]
    mags = np.abs(c)
    while mags.ndim > 2:
        mags = mags.max(axis=-1)
    # mags: (n_idx, T)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(mags == 0, 0.0, mags / np.maximum(tab, 1e-300))
    worst_flat = int(np.argmax(ratio))
    wi, wt = np.unravel_index(worst_flat, ratio.shape)
    worst = float(ratio[wi, wt])
    ok = worst <= 1.0 + slack
    return MajorizeReport(ok, phi.indices[wi], float(times[wt]), worst)


# ---------------------------------------------------------------------------
# universal constants


@dataclass
class UniversalConstants:
    c0: float
    c1: float
    k_max: int
    n_max: int
    timestamp: str = ""
    meta: dict = field(default_factory=dict)


def derive_c0(k_max: int) -> tuple[float, dict]:
    """Largest safe amplitude making the squared model series dominated by
    itself: 0.99 / sup_k (k^2+1) sum_p 1/((p^2+1)((k-p)^2+1)).

    The sweep witnesses the supremum (attained at small k; the bracket decays
    to its analytic limit afterwards, which is also guarded against).
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    best, arg = kernels.square_bracket_sweep(int(k_max))
    sup = max(best, _SQUARE_LIMIT)
    return SAFETY / sup, {"bracket_max": best, "argmax": int(arg),
                          "analytic_limit": _SQUARE_LIMIT}


def _cross_window(n: int, tail_rel: float = 1e-10) -> int:
    """One-sided window width making the dropped tail of the cross bracket
    below tail_rel (tail <= 2(n^2+1)/(3 w^3), cf. the integral of 1/p^4)."""
    w = (2.0 * (n * n + 1.0) / (3.0 * tail_rel)) ** (1.0 / 3.0)
    return max(2000, int(math.ceil(w)))


def cross_bracket_value(n: int, tail_rel: float = 1e-10) -> tuple[float, float]:
    """(n^2+1) * sum_{p in Z} 1/((p^2+1)((n-p)^2+1)), windowed, with a
    rigorous upper bound on the dropped tail."""
    w = _cross_window(n, tail_rel)
    val = kernels.cross_bracket(int(n), -w, int(n) + w)
    tail = 2.0 * (n * n + 1.0) / (3.0 * float(w) ** 3)
    return val, tail


def derive_c1(n_max: int) -> tuple[float, dict]:
    """Largest safe constant for the mode-convolution inequality
    sum_p c1/(p^2+1) * c1/((n-p)^2+1) <= c1/(n^2+1)."""
    if n_max < 1:
        raise ValueError("n_max must be >= 1")
    best = 0.0
    arg = 0
    for n in range(n_max + 1):
        val, tail = cross_bracket_value(n)
        if val + tail > best:
            best = val + tail
            arg = n
    sup = max(best, _CROSS_LIMIT)
    return SAFETY / sup, {"bracket_max": best, "argmax": int(arg),
                          "analytic_limit": _CROSS_LIMIT}


CONSTANTS_SCHEMA = {
    "type": "object",
    "required": ["c0", "c1", "k_max", "n_max", "timestamp"],
    "properties": {
        "c0": {"type": "number", "exclusiveMinimum": 0},
        "c1": {"type": "number", "exclusiveMinimum": 0},
        "k_max": {"type": "integer", "minimum": 1},
        "n_max": {"type": "integer", "minimum": 1},
        "timestamp": {"type": "string"},
    },
}


def derive_constants(k_max: int = 20_000, n_max: int = 2_000) -> UniversalConstants:
    c0, m0 = derive_c0(k_max)
    c1, m1 = derive_c1(n_max)
    return UniversalConstants(
        c0=c0, c1=c1, k_max=k_max, n_max=n_max,
        timestamp=datetime.now(timezone.utc).isoformat(),
        meta={"c0_sweep": m0, "c1_sweep": m1, "safety": SAFETY},
    )


def save_constants(consts: UniversalConstants, path) -> None:
    doc = {"c0": consts.c0, "c1": consts.c1, "k_max": consts.k_max,
           "n_max": consts.n_max, "timestamp": consts.timestamp,
           "meta": consts.meta}
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_constants(path) -> UniversalConstants:
    import jsonschema

    with open(path) as fh:
        doc = json.load(fh)
    jsonschema.validate(doc, CONSTANTS_SCHEMA)
    return UniversalConstants(c0=doc["c0"], c1=doc["c1"], k_max=doc["k_max"],
                              n_max=doc["n_max"], timestamp=doc["timestamp"],
                              meta=doc.get("meta", {}))


def default_constants() -> UniversalConstants:
    """The frozen constants shipped with the package."""
    from importlib.resources import files

    return load_constants(files("hadalab").joinpath("data/constants.json"))


def constants_hash(consts: UniversalConstants) -> str:
    """Hash of the reproducible fields (the timestamp is excluded)."""
    import hashlib

    key = json.dumps({"c0": consts.c0, "c1": consts.c1,
                      "k_max": consts.k_max, "n_max": consts.n_max},
                     sort_keys=True)
    return hashlib.sha256(key.encode()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# fitting an envelope to an analytic coefficient oracle


class MajorantFitError(RuntimeError):
    pass


@dataclass
class MajorantFit:
    C_H: float
    R_H: float
    rho_H: float
    a_H: float
    max_ratio_by_order: list


def _fit_envelope_ratios(oracle, fit_orders, d, N, R, rho, a, c0):
    o_t, o_x, o_u = fit_orders
    ratios = {}
    for k1 in range(o_t + 1):
        for k2 in multi_indices(d, o_x):
            for k3 in multi_indices(N, o_u):
                coef = np.asarray(oracle(k1, k2, k3))
                mag = float(np.max(np.abs(coef))) if coef.size else 0.0
                p = k1 + sum(k2)
                env = (c0 / (p * p + 1.0) * _multinomial((k1, *k2))
                       * (rho ** k1) * (R ** sum(k2)) * (a ** sum(k3)))
                tot = k1 + sum(k2) + sum(k3)
                ratios[tot] = max(ratios.get(tot, 0.0), mag / env)
    return [ratios[m] for m in sorted(ratios)]


def fit_analytic_majorant(coeff_oracle, fit_orders, d: int, N: int, c0: float,
                          ladder=None) -> MajorantFit:
    """Fit (C_H, R_H, rho_H, a_H) so the oracle's Taylor coefficients are
    dominated by C_H * Phi(R_H X + rho_H t) * prod_j (1 - a_H u_j)^{-1}.

    Candidates come from dyadic ladders; a candidate is rejected when the
    per-total-order worst ratio keeps growing through the top orders (the
    oracle is then not analytic at the claimed radius). Among accepted
    candidates the least C_H wins, ties resolved toward the smallest
    (a_H, R_H, rho_H).
    """
    if ladder is None:
        ladder = [2.0 ** i for i in range(-3, 7)]
    best = None
    for a in ladder:
        for R in ladder:
            for rho in ladder:
                seq = _fit_envelope_ratios(coeff_oracle, fit_orders, d, N,
                                           R, rho, a, c0)
                C_H = max(seq)
                half = len(seq) // 2
                top = max(seq[half:]) if seq[half:] else 0.0
                bottom = max(seq[: half + 1])
                if len(seq) > 1 and top > bottom * (1 + 1e-9):
                    continue  # ratios still growing at the top orders
                if best is None or C_H < best.C_H * (1 - 1e-12):
                    best = MajorantFit(C_H, R, rho, a, seq)
    if best is None:
        raise MajorantFitError(
            "no ladder candidate dominates the oracle: not analytic at the "
            "claimed radius")
    return best
