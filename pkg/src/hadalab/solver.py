"""Free solution, the three source operators and the Picard iteration.

The fixed-point equation is u = f + T(u) with T assembled from three
time-integrated kernels: the symbol's u-dependence acting on the theta
derivative, the slow-coefficient transport acting on the x derivatives, and
the zeroth-order factor acting on u itself. Polynomial symbols are evaluated
on trigonometric series exactly, term by term.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .series import shift_table
from .spaces import (SpaceFrame, TrigSeries, apply_dtheta, apply_dx,
                     eval_trig, norm_e, ts_product, ts_zeros)
from .propagator import PropagatorModes, apply_propagator, duhamel_apply
from .symbol import MatrixPolynomial, RateFunction, SymbolFamily, SymbolSpectrum


class SolverError(RuntimeError):
    code = "SOLVER_ERROR"


class KTooLargeError(SolverError):
    code = "K_TOO_LARGE"


class NoConvergenceError(SolverError):
    code = "NO_CONVERGENCE"


class NormEscapeError(SolverError):
    code = "NORM_ESCAPE"


# ---------------------------------------------------------------------------
# free solution


@dataclass
class FreeSolution:
    f: TrigSeries
    M_eps: float
    amplitude: float
    e_plus: np.ndarray
    norm: float = 0.0


def build_free_solution(spec: SymbolSpectrum, P: PropagatorModes,
                        frame: SpaceFrame, M_eps: float,
                        n_max: int) -> FreeSolution:
    """Polarized two-mode datum of amplitude e^{-M}, pushed along the
    propagator from time zero to the whole grid."""
    amp = float(np.exp(-M_eps))
    e_plus = spec.e_plus
    e_minus = np.conj(e_plus)
    h = ts_zeros(n_max, frame.dim_x, frame.trunc_order, frame.grid,
                 (len(e_plus),))
    h.mode(-1)[0, :] = e_plus * amp   # x-constant coefficient, all times
    h.mode(+1)[0, :] = e_minus * amp
    f = apply_propagator(P, h, j_from=0)
    f.real_pair = True
    free = FreeSolution(f=f, M_eps=M_eps, amplitude=amp, e_plus=e_plus)
    free.norm = norm_e(f, frame)
    return free


def growth_exponent_fit(u: TrigSeries) -> float:
    """Least-squares slope of log |u(s)| at the distinguished point x = 0
    (the constant-in-x coefficient, maximized over modes and components);
    for the free solution this recovers the leading growth rate."""
    prof = np.abs(u.modes[:, 0]).reshape(
        2 * u.n_max + 1, u.time_grid.size, -1)
    prof = prof.max(axis=(0, 2))  # collapse modes and components
    mask = prof > 0
    s = u.time_grid[mask]
    y = np.log(prof[mask])
    A = np.vstack([s, np.ones_like(s)]).T
    slope, _ = np.linalg.lstsq(A, y, rcond=None)[0]
    return float(slope)


# ---------------------------------------------------------------------------
# polynomial evaluation on trigonometric series


def ts_unit_scalar(n_max: int, dim_x: int, trunc_order: int, grid) -> TrigSeries:
    one = ts_zeros(n_max, dim_x, trunc_order, grid, ())
    one.mode(0)[0, :] = 1.0
    return one


def ts_component(u: TrigSeries, comp: int) -> TrigSeries:
    return TrigSeries(u.n_max, u.dim_x, u.trunc_order, u.time_grid,
                      u.modes[..., comp])


def ts_shift_monomial(u: TrigSeries, shift) -> TrigSeries:
    if all(v == 0 for v in shift):
        return u
    dst, src = shift_table(u.dim_x, u.trunc_order, tuple(shift))
    out = ts_zeros(u.n_max, u.dim_x, u.trunc_order, u.time_grid,
                   u.value_shape)
    out.modes[:, dst] = u.modes[:, src]
    return out


def eval_poly_on_series(poly: MatrixPolynomial, eps: float, u: TrigSeries,
                        frame: SpaceFrame) -> TrigSeries:
    """Matrix-valued series H(eps s, x, eps u(s,x,theta)) for a polynomial H.

    Exact: each monomial contributes its time profile, an x-monomial shift
    and a product of scaled solution components.
    """
    nm, d, K, grid = u.n_max, u.dim_x, u.trunc_order, u.time_grid
    N = poly.N
    out = ts_zeros(nm, d, K, grid, (N, N))
    ts_profile_cache: dict[int, np.ndarray] = {}
    upow_cache: dict[tuple, TrigSeries] = {}

    def u_power(c: tuple) -> TrigSeries:
        if c in upow_cache:
            return upow_cache[c]
        acc = ts_unit_scalar(nm, d, K, grid)
        for comp, cl in enumerate(c):
            for _ in range(cl):
                acc = ts_product(acc, ts_component(u, comp).scaled(eps))
        upow_cache[c] = acc
        return acc

    for C, a, b, c in poly.terms:
        if a not in ts_profile_cache:
            ts_profile_cache[a] = (eps * grid) ** a
        profile = ts_profile_cache[a]
        scal = u_power(c)
        scal = ts_shift_monomial(scal, b)
        block = scal.modes[..., None, None] * C[None, None, None, :, :]
        out.modes += block * profile[None, None, :, None, None]
    return out


# ---------------------------------------------------------------------------
# source operators


@dataclass
class SourceOperators:
    """The three integrated kernels, bound to one scenario."""

    fam: SymbolFamily
    frame: SpaceFrame
    P: PropagatorModes
    eps: float
    couple_theta: bool = True
    couple_x: bool = True
    couple_u: bool = True
    quadrature: str = "trapezoid"
    ball_limit: float = 1.0
    _A_u: list = field(init=False, default=None)

    def __post_init__(self):
        self._A_u = self.fam.principal().u_gradient_split()

    def _check_ball(self, u: TrigSeries):
        nrm = norm_e(u, self.frame)
        if nrm >= self.ball_limit:
            raise NormEscapeError(
                f"iterate norm {nrm:.3g} escaped the working ball "
                f"(limit {self.ball_limit:.3g})")
        return nrm

    def op_t_theta(self, u: TrigSeries) -> TrigSeries:
        """Integral of U(s',s) (A - Abar)(eps u) d_theta u over [0, s]."""
        self._check_ball(u)
        mat = None
        for j, Aj in enumerate(self._A_u):
            if not Aj.terms:
                continue
            coeff = eval_poly_on_series(Aj, self.eps, u, self.frame)
            uj = ts_component(u, j).scaled(self.eps)
            term = ts_product(uj, coeff)
            mat = term if mat is None else mat + term
        if mat is None:
            return ts_zeros(u.n_max, u.dim_x, u.trunc_order, u.time_grid,
                            u.value_shape)
        kernel = ts_product(mat, apply_dtheta(u))
        return duhamel_apply(self.P, kernel, self.quadrature)

    def op_t_x(self, u: TrigSeries) -> TrigSeries:
        """Integral of U(s',s) eps sum_j A_j d_{x_j} u over [0, s]."""
        self._check_ball(u)
        kernel = None
        for j in range(self.fam.d):
            du = apply_dx(u, j, pad=True)
            if not np.any(du.modes):
                continue
            coeff = eval_poly_on_series(self.fam.A[j], self.eps, u, self.frame)
            term = ts_product(coeff, du).scaled(self.eps)
            kernel = term if kernel is None else kernel + term
        if kernel is None:
            return ts_zeros(u.n_max, u.dim_x, u.trunc_order, u.time_grid,
                            u.value_shape)
        return duhamel_apply(self.P, kernel, self.quadrature)

    def op_t_u(self, u: TrigSeries) -> TrigSeries:
        """Integral of U(s',s) eps F(eps u) u over [0, s]."""
        self._check_ball(u)
        if not self.fam.F.terms:
            return ts_zeros(u.n_max, u.dim_x, u.trunc_order, u.time_grid,
                            u.value_shape)
        coeff = eval_poly_on_series(self.fam.F, self.eps, u, self.frame)
        kernel = ts_product(coeff, u).scaled(self.eps)
        return duhamel_apply(self.P, kernel, self.quadrature)

    def __call__(self, u: TrigSeries) -> TrigSeries:
        tot = ts_zeros(u.n_max, u.dim_x, u.trunc_order, u.time_grid,
                       u.value_shape)
        if self.couple_theta:
            tot = tot + self.op_t_theta(u)
        if self.couple_x:
            tot = tot + self.op_t_x(u)
        if self.couple_u:
            tot = tot + self.op_t_u(u)
        return tot


def contraction_constant(frame: SpaceFrame, norm_f_envelope: float) -> float:
    """Scheduled contraction proxy omega^{-(m-1)} (beta^{-1} eps |||f||| +
    R/rho), with the free-solution norm taken from its scheduled envelope
    omega^{-(m-1)} e^{M'-M}; the measured norm is reported separately."""
    p = frame.params
    om = p.omega_factor()
    return om * (p.eps / p.beta * norm_f_envelope + p.R / p.rho)


def free_norm_envelope(frame: SpaceFrame, M_eps: float) -> float:
    p = frame.params
    return p.omega_factor() * float(np.exp(p.M_prime - M_eps))


# ---------------------------------------------------------------------------
# Picard iteration


@dataclass
class PicardState:
    u: TrigSeries
    j: int
    residuals: list
    K_eps: float
    norm_f: float
    norm_u: float
    converged: bool
    trace: list


def picard_solve(T_op, free: FreeSolution, frame: SpaceFrame,
                 K_eps: float, tol: float = 1e-8, j_max: int = 60,
                 gate: bool = True) -> PicardState:
    """Iterate u <- f + T(u) from u = f until the update norm drops below
    tol * |||f|||.

    The gate refuses to start when the scheduled contraction constant is not
    below one half (the smallness hypothesis of the fixed-point argument at
    the working epsilon).
    """
    if gate and not K_eps < 0.5:
        raise KTooLargeError(
            f"scheduled contraction constant K = {K_eps:.4g} >= 1/2")
    f = free.f
    norm_f = free.norm if free.norm > 0 else norm_e(f, frame)
    u = f.copy()
    residuals = []
    trace = []
    for j in range(1, j_max + 1):
        u_next = f + T_op(u)
        res = norm_e(u_next - u, frame)
        norm_u = norm_e(u_next, frame)
        residuals.append(res)
        trace.append({"j": j, "residual": res, "K_eps": K_eps,
                      "norm_u": norm_u})
        u = u_next
        if res <= tol * norm_f:
            return PicardState(u=u, j=j, residuals=residuals, K_eps=K_eps,
                               norm_f=norm_f, norm_u=norm_u, converged=True,
                               trace=trace)
    raise NoConvergenceError(
        f"no convergence after {j_max} iterations; last residual "
        f"{residuals[-1]:.3e} vs target {tol * norm_f:.3e}")


def fixed_point_residual(state: PicardState, T_op, free: FreeSolution,
                         frame: SpaceFrame) -> float:
    """|||u - f - T(u)|||, the discrete self-consistency of the limit."""
    r = state.u - free.f - T_op(state.u)
    return norm_e(r, frame)


# ---------------------------------------------------------------------------
# pointwise lower-bound check near the final time


def lower_bound_check(u: TrigSeries, f: TrigSeries, frame: SpaceFrame,
                      rate: RateFunction, M_eps: float, r: float,
                      window: tuple | None = None, n_theta: int = 16,
                      n_x: int = 8) -> dict:
    """Sample (s, x, theta) in the late-time window and a small ball,
    measuring |u - f| against the lower-rate envelope and checking that the
    solution retains at least half of the free solution pointwise."""
    from .propagator import halton_ball

    grid = frame.grid
    s_hi = grid[-1]
    s_lo = max(0.0, s_hi - 1.0) if window is None else window[0]
    s_hi = s_hi if window is None else window[1]
    j_sel = np.nonzero((grid >= s_lo - 1e-12) & (grid <= s_hi + 1e-12))[0]
    if j_sel.size > 24:
        j_sel = j_sel[np.linspace(0, j_sel.size - 1, 24).astype(int)]
    xs = halton_ball(u.dim_x, r, n_x, l1=False)
    thetas = np.linspace(0.0, 2 * np.pi, n_theta, endpoint=False)
    om = rate.omega_factor()
    amp = np.exp(-M_eps)
    worst_C = 0.0
    min_ratio = np.inf
    for j in j_sel:
        env = om * amp * float(np.exp(rate.int_gamma_flat(grid[j])))
        uv = eval_trig(u, int(j), xs, thetas)
        fv = eval_trig(f, int(j), xs, thetas)
        mag_u = np.linalg.norm(uv, axis=-1)
        mag_f = np.linalg.norm(fv, axis=-1)
        dv = np.linalg.norm(uv - fv, axis=-1)
        worst_C = max(worst_C, float(dv.max() / env))
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(mag_f > 0, mag_u / np.maximum(mag_f, 1e-300), np.inf)
        min_ratio = min(min_ratio, float(ratio.min()))
    return {"C_eps": worst_C, "min_u_over_f": min_ratio,
            "passed": bool(min_ratio >= 0.5),
            "window": (float(s_lo), float(s_hi)), "r": r}
