"""Trigonometric series with power-series coefficients and their weighted
norms.

A series u(s, x, theta) = sum_n u_n(s, x) e^{i n theta} is stored as one
complex array over (mode, x-index, time, component). The norm at fixed time
divides each stored coefficient by its envelope

    c1/(n^2+1) * exp(-(M' - int_0^s gamma) <n>) * Phi_k(eps s),

with <n> = sqrt(n^2+1) and gamma the upper growth rate plus the margin beta,
and takes the maximum ratio; the global norm is the maximum over the grid.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .series import (GridMismatchError, ModelMajorant, PowerSeriesX,
                     ShapeMismatchError, UniversalConstants, n_indices,
                     phi_table)
from .symbol import RateCase, RateFunction


@dataclass
class SpaceNormParams:
    """Everything the weighted norm depends on."""

    R: float
    rho: float
    M_prime: float
    beta: float
    omega: float
    m: int
    eps: float
    rate_case: RateCase
    gamma0: float

    def __post_init__(self):
        if min(self.R, self.rho, self.beta) <= 0 or self.M_prime <= 0:
            raise ValueError("R, rho, beta, M' must be positive")
        if self.omega < 0:
            raise ValueError("omega must be >= 0")
        if self.rate_case is RateCase.GENERAL and self.m > 1 and self.omega == 0:
            raise ValueError("GENERAL with multiplicity > 1 needs omega > 0")

    def rates(self, r: float = 0.0, im_lambda=None) -> RateFunction:
        return RateFunction(case=self.rate_case, gamma0=self.gamma0,
                            eps=self.eps, R_inv=1.0 / self.R, r=r,
                            omega=self.omega, m=self.m, im_lambda=im_lambda)

    def int_gamma(self, s):
        """integral over [0, s] of (gamma_sharp + beta), closed form."""
        s = np.asarray(s, dtype=float)
        return self.rates().int_gamma_sharp(s) + self.beta * s

    def omega_factor(self) -> float:
        if self.rate_case is RateCase.GENERAL and self.m > 1:
            return self.omega ** (-(self.m - 1))
        return 1.0


@dataclass
class TimeBudget:
    s_bar_1: float
    s_bar: float
    grid_step: float
    regularity_limited: bool = False


def growth_time(p: SpaceNormParams, grid_steps: int = 512,
                rel_tol: float = 1e-12) -> TimeBudget:
    """Solve int_0^{s1} gamma = M' by bisection, then cap by the maximal
    regularity time 1/(eps rho)."""
    target = p.M_prime
    hi = 1.0
    while p.int_gamma(hi) < target:
        hi *= 2.0
        if hi > 1e18:
            raise RuntimeError("growth time bracket failed")
    lo = 0.0
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        if p.int_gamma(mid) < target:
            lo = mid
        else:
            hi = mid
    s1 = 0.5 * (lo + hi)
    t_reg = 1.0 / (p.eps * p.rho)
    limited = t_reg < s1
    s_bar = min(s1, t_reg)
    return TimeBudget(s_bar_1=s1, s_bar=s_bar, grid_step=s_bar / grid_steps,
                      regularity_limited=limited)


def weight(n: int, s: float, p: SpaceNormParams, consts: UniversalConstants,
           s_bar: float | None = None) -> float:
    """Mode weight c1/(n^2+1) exp(-(M' - int gamma) <n>); the x-side factor
    Phi is applied separately by the norm."""
    if s_bar is not None and s > s_bar * (1 + 1e-12):
        raise ValueError(f"weight undefined past the final time {s_bar:g}")
    bracket = np.sqrt(n * n + 1.0)
    return consts.c1 / (n * n + 1.0) * np.exp(-(p.M_prime - p.int_gamma(s)) * bracket)


# ---------------------------------------------------------------------------
# trigonometric series


@dataclass
class TrigSeries:
    """Fourier-in-theta series whose modes are truncated series in x sampled
    on a shared time grid. ``modes`` has shape
    (2 n_max + 1, n_idx, n_times, *value); row i holds mode n = i - n_max."""

    n_max: int
    dim_x: int
    trunc_order: int
    time_grid: np.ndarray
    modes: np.ndarray
    real_pair: bool = False

    def __post_init__(self):
        self.time_grid = np.asarray(self.time_grid, dtype=np.float64)
        self.modes = np.asarray(self.modes, dtype=np.complex128)
        want = (2 * self.n_max + 1, n_indices(self.dim_x, self.trunc_order),
                self.time_grid.size)
        if self.modes.shape[: 3] != want:
            raise ShapeMismatchError(
                f"mode array {self.modes.shape[:3]} != {want}")
        if self.modes.ndim - 3 > 2:
            raise ShapeMismatchError("value rank must be <= 2")

    @property
    def value_shape(self):
        return self.modes.shape[3:]

    @property
    def kind(self) -> str:
        return {0: "scalar", 1: "vector", 2: "matrix"}[len(self.value_shape)]

    def mode(self, n: int) -> np.ndarray:
        if abs(n) > self.n_max:
            raise IndexError(f"mode {n} beyond truncation {self.n_max}")
        return self.modes[n + self.n_max]

    def mode_series(self, n: int) -> PowerSeriesX:
        return PowerSeriesX(self.dim_x, self.trunc_order, self.mode(n),
                            self.time_grid)

    def copy(self) -> "TrigSeries":
        return TrigSeries(self.n_max, self.dim_x, self.trunc_order,
                          self.time_grid.copy(), self.modes.copy(),
                          self.real_pair)

    def __add__(self, other: "TrigSeries") -> "TrigSeries":
        _check_ts_compat(self, other)
        return TrigSeries(self.n_max, self.dim_x, self.trunc_order,
                          self.time_grid, self.modes + other.modes)

    def __sub__(self, other: "TrigSeries") -> "TrigSeries":
        _check_ts_compat(self, other)
        return TrigSeries(self.n_max, self.dim_x, self.trunc_order,
                          self.time_grid, self.modes - other.modes)

    def scaled(self, a: complex) -> "TrigSeries":
        return TrigSeries(self.n_max, self.dim_x, self.trunc_order,
                          self.time_grid, a * self.modes)


def ts_zeros(n_max: int, dim_x: int, trunc_order: int, time_grid,
             value_shape=()) -> TrigSeries:
    grid = np.asarray(time_grid, dtype=np.float64)
    shape = (2 * n_max + 1, n_indices(dim_x, trunc_order), grid.size,
             *value_shape)
    return TrigSeries(n_max, dim_x, trunc_order, grid,
                      np.zeros(shape, dtype=np.complex128))


def _check_ts_compat(u: TrigSeries, v: TrigSeries):
    if u.dim_x != v.dim_x or u.trunc_order != v.trunc_order \
            or u.n_max != v.n_max:
        raise ShapeMismatchError("trig series truncations differ")
    if not np.array_equal(u.time_grid, v.time_grid):
        raise GridMismatchError("trig series grids differ")


def ts_product(u: TrigSeries, v: TrigSeries) -> TrigSeries:
    """Fourier convolution in the mode index of truncated x-products; output
    modes beyond the common truncation are discarded. Value semantics follow
    ps_mul (componentwise for vector*vector, composition for matrices)."""
    from .series import ps_mul

    _check_ts_compat(u, v)
    nm = u.n_max
    # output value shape by probing one slice product
    sample = ps_mul(u.mode_series(0), v.mode_series(0))
    out = ts_zeros(nm, u.dim_x, u.trunc_order, u.time_grid,
                   sample.value_shape)
    for p in range(-nm, nm + 1):
        up = u.mode(p)
        if not np.any(up):
            continue
        for q in range(-nm, nm + 1):
            n = p + q
            if abs(n) > nm:
                continue
            vq = v.mode(q)
            if not np.any(vq):
                continue
            prod = ps_mul(u.mode_series(p), v.mode_series(q))
            out.mode(n)[...] += prod.coeffs
    return out


def apply_dtheta(u: TrigSeries) -> TrigSeries:
    """d/dtheta: mode n scales by i n, exactly."""
    ns = np.arange(-u.n_max, u.n_max + 1, dtype=np.float64)
    scale = (1j * ns).reshape((-1,) + (1,) * (u.modes.ndim - 1))
    return TrigSeries(u.n_max, u.dim_x, u.trunc_order, u.time_grid,
                      scale * u.modes)


def apply_dx(u: TrigSeries, axis: int, pad: bool = True) -> TrigSeries:
    """d/dx_axis mode by mode; with ``pad`` the result is re-embedded at the
    original truncation order (top coefficients unresolved, zero-filled)."""
    from .series import ps_derive, ps_pad

    out_modes = []
    for i in range(2 * u.n_max + 1):
        ser = PowerSeriesX(u.dim_x, u.trunc_order, u.modes[i], u.time_grid)
        der = ps_derive(ser, axis)
        if pad:
            der = ps_pad(der, u.trunc_order)
        out_modes.append(der.coeffs)
    order = u.trunc_order if pad else max(u.trunc_order - 1, 0)
    return TrigSeries(u.n_max, u.dim_x, order, u.time_grid,
                      np.stack(out_modes))


def eval_trig(u: TrigSeries, s_index: int, x, theta) -> np.ndarray:
    """Pointwise value at grid time s_index, points x (S,d) and angles theta
    (A,): returns (S, A, *value)."""
    from .series import eval_series

    x = np.atleast_2d(np.asarray(x, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    ns = np.arange(-u.n_max, u.n_max + 1)
    phases = np.exp(1j * np.outer(ns, theta))  # (modes, A)
    vals = []
    for i in range(2 * u.n_max + 1):
        ser = PowerSeriesX(u.dim_x, u.trunc_order,
                           u.modes[i, :, s_index], None)
        vals.append(eval_series(ser, x))  # (S, *value)
    vals = np.stack(vals)  # (modes, S, *value)
    return np.tensordot(phases, vals, axes=(0, 0)).swapaxes(0, 1)


def eval_trig_paired(u: TrigSeries, s_index: int, x, theta) -> np.ndarray:
    """Like eval_trig but with one angle per point: x (S,d), theta (S,),
    returning (S, *value)."""
    from .series import eval_series

    x = np.atleast_2d(np.asarray(x, dtype=float))
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    ns = np.arange(-u.n_max, u.n_max + 1)
    phases = np.exp(1j * np.outer(ns, theta))  # (modes, S)
    vals = []
    for i in range(2 * u.n_max + 1):
        ser = PowerSeriesX(u.dim_x, u.trunc_order,
                           u.modes[i, :, s_index], None)
        vals.append(eval_series(ser, x))  # (S, *value)
    vals = np.stack(vals)  # (modes, S, *value)
    ph = phases.reshape(phases.shape + (1,) * (vals.ndim - 2))
    return (ph * vals).sum(axis=0)


# ---------------------------------------------------------------------------
# the norm frame: grid plus cached envelope tables


@dataclass
class SpaceFrame:
    """A time grid over [0, s_bar] with the envelope tables the norms need."""

    params: SpaceNormParams
    consts: UniversalConstants
    budget: TimeBudget
    grid: np.ndarray
    phi: ModelMajorant = field(init=False)
    phi_tab: np.ndarray = field(init=False, default=None)
    _weights: dict = field(init=False, default_factory=dict)
    dim_x: int = 1
    trunc_order: int = 12

    def __post_init__(self):
        self.phi = ModelMajorant(C=1.0, R=self.params.R, rho=self.params.rho,
                                 c0=self.consts.c0)
        # Phi_k at the slow times eps * s_j
        self.phi_tab = phi_table(self.dim_x, self.trunc_order,
                                 self.params.eps * self.grid, self.phi)

    @classmethod
    def build(cls, params: SpaceNormParams, consts: UniversalConstants,
              dim_x: int, trunc_order: int, grid_steps: int = 512):
        budget = growth_time(params, grid_steps)
        s_end = budget.s_bar
        if budget.regularity_limited:
            # the envelope diverges exactly at the regularity time; keep the
            # grid strictly inside it
            s_end *= 1.0 - 1e-3
        grid = np.linspace(0.0, s_end, grid_steps + 1)
        return cls(params=params, consts=consts, budget=budget, grid=grid,
                   dim_x=dim_x, trunc_order=trunc_order)

    def weight_rows(self, n_max: int) -> np.ndarray:
        """Weights for all modes |n| <= n_max on the grid; (2n+1, T)."""
        if n_max not in self._weights:
            ns = np.arange(-n_max, n_max + 1, dtype=np.float64)
            br = np.sqrt(ns**2 + 1.0)
            deficit = self.params.M_prime - self.params.int_gamma(self.grid)
            w = (self.consts.c1 / (ns**2 + 1.0))[:, None] \
                * np.exp(-np.outer(br, deficit))
            self._weights[n_max] = w
        return self._weights[n_max]

    def envelope(self, n_max: int) -> np.ndarray:
        """Full envelope (2n+1, n_idx, T): weight * Phi_k(eps s)."""
        w = self.weight_rows(n_max)  # (modes, T)
        return w[:, None, :] * self.phi_tab[None, :, :]


def _ratio_array(u: TrigSeries, frame: SpaceFrame) -> np.ndarray:
    """|coefficient| / envelope, entrywise max over value components;
    shape (modes, n_idx, T)."""
    mags = np.abs(u.modes)
    while mags.ndim > 3:
        mags = mags.max(axis=-1)
    env = frame.envelope(u.n_max)
    return mags / np.maximum(env, 1e-300)


def norm_es(u: TrigSeries, frame: SpaceFrame, s_index: int) -> float:
    """Fixed-time norm: max over stored (n, k) of coefficient over envelope."""
    return float(_ratio_array(u, frame)[:, :, s_index].max(initial=0.0))


def norm_e(u: TrigSeries, frame: SpaceFrame) -> float:
    """sup over the grid of the fixed-time norms."""
    return float(_ratio_array(u, frame).max(initial=0.0))


def norm_e_argmax(u: TrigSeries, frame: SpaceFrame):
    """(norm, mode, index, s) of the attaining coefficient."""
    r = _ratio_array(u, frame)
    flat = int(np.argmax(r))
    i, k, j = np.unravel_index(flat, r.shape)
    from .series import multi_indices

    return (float(r[i, k, j]), int(i - u.n_max),
            multi_indices(u.dim_x, u.trunc_order)[k], float(frame.grid[j]))
