"""Parameter schedules, Gevrey norms of the oscillatory data, L2 norms on
conical domains, and the instability ratio.

Schedules hand back, for each epsilon, the complete bundle of space-time
weights the solver runs under; they are chosen so the scheduled contraction
constant decreases along a sweep and the final time tracks eps^{-delta}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .spaces import SpaceNormParams, growth_time
from .symbol import RateCase, gevrey_ceiling


class ScheduleError(ValueError):
    pass


class IndexOutOfRange(ScheduleError):
    """Requested regularity index above the admissible ceiling."""


@dataclass
class ScenarioParams:
    eps: float
    delta: float
    sigma: float
    c: float
    alpha: float
    case: RateCase
    m: int
    gamma0: float
    omega: float = 0.0
    beta: float = 0.0
    R: float = 0.0
    rho: float = 0.0
    M: float = 0.0
    M_prime: float = 0.0
    s_bar: float = 0.0
    s_bar_1: float = 0.0
    regularity_limited: bool = False
    flags: list = field(default_factory=list)

    def norm_params(self) -> SpaceNormParams:
        return SpaceNormParams(R=self.R, rho=self.rho, M_prime=self.M_prime,
                               beta=self.beta, omega=self.omega, m=self.m,
                               eps=self.eps, rate_case=self.case,
                               gamma0=self.gamma0)


def select_parameters(eps: float, delta: float, case: RateCase, m: int,
                      gamma0: float = 1.0, sigma: float = 0.0,
                      c: float = 1.0, alpha: float = 1.0,
                      grid_steps: int = 512,
                      strict: bool = True) -> ScenarioParams:
    """Derive (omega, beta, R, rho, M, M') for one epsilon and case.

    GENERAL keeps the reference powers omega = beta = 1/R = eps^delta and
    1/rho = eps^{(1+(m-1)delta)/2}. The two refined cases keep beta =
    eps^delta and M' = M but place (1/R, 1/rho) inside their admissible
    window with a tilt toward the regularity端 so that R/rho is small
    already at moderate eps; any fixed exponents inside the window give the
    same asymptotics.
    """
    if not 0 < eps < 1:
        raise ScheduleError("eps must lie in (0, 1)")
    ceiling = gevrey_ceiling(case, m)
    if not 0 < delta < ceiling:
        raise IndexOutOfRange(
            f"delta = {delta:g} outside (0, {ceiling:g}) for case "
            f"{case.value} with multiplicity {m}")
    if sigma and not sigma < delta:
        raise ScheduleError("need sigma < delta")
    M = eps ** (-delta)
    log_eps = abs(math.log(eps))
    if case is RateCase.GENERAL:
        omega = beta = eps ** delta
        R = eps ** (-delta)
        rho = eps ** (-(1 + (m - 1) * delta) / 2.0)
        M_prime = M - max(0.0, (2 * m - 1) * delta - 1.0) * log_eps
    elif case is RateCase.SEMISIMPLE:
        omega = 0.0
        beta = eps ** delta
        R = eps ** (-delta)
        rho = eps ** (-(delta + 0.95 * (1 - 2 * delta)))
        M_prime = M
    else:  # MAXIMAL
        omega = 1.0
        beta = eps ** delta
        R = eps ** (-(1 - delta) / 2.0)
        rho = eps ** (-7.0 * (1 - delta) / 8.0)
        M_prime = M
    p = ScenarioParams(eps=eps, delta=delta, sigma=sigma, c=c, alpha=alpha,
                       case=case, m=m, gamma0=gamma0, omega=omega, beta=beta,
                       R=R, rho=rho, M=M, M_prime=M_prime)
    budget = growth_time(p.norm_params(), grid_steps)
    p.s_bar = budget.s_bar
    p.s_bar_1 = budget.s_bar_1
    p.regularity_limited = budget.regularity_limited
    if budget.regularity_limited:
        p.flags.append("REGULARITY_LIMITED")
    scale = p.s_bar * eps ** delta
    if not 0.5 <= scale <= 2.0:
        msg = (f"final time off scale: s_bar * eps^delta = {scale:.3g} "
               f"outside [0.5, 2] at eps = {eps:g}")
        if strict:
            raise ScheduleError(msg)
        p.flags.append("S_BAR_OFF_SCALE")
    if not eps * p.rho * p.s_bar < 1.0 + 1e-12:
        p.flags.append("REGULARITY_EXHAUSTED")
    return p


def scheduled_contraction(p: ScenarioParams) -> float:
    """K(eps) with the free-solution norm replaced by its scheduled envelope
    omega^{-(m-1)} e^{M'-M} (constants dropped)."""
    om = p.omega ** (-(p.m - 1)) if (p.case is RateCase.GENERAL and p.m > 1) else 1.0
    f_env = om * math.exp(p.M_prime - p.M)
    return om * (p.eps / p.beta * f_env + p.R / p.rho)


# ---------------------------------------------------------------------------
# Gevrey norms of the oscillatory datum


@dataclass
class GevreyNorms:
    closed_form: float
    direct: float
    argmax_order: int


def gevrey_norm_oscillatory(eps: float, sigma: float, c: float,
                            amplitude: float, M: float,
                            xi_max: float = 1.0,
                            k_cap: int | None = None) -> GevreyNorms:
    """Norm of amplitude * eps * e^{-M} * oscillation(x / eps).

    closed_form is the analytic envelope amplitude*eps*exp(-M +
    eps^{-sigma}/(sigma c^sigma)); direct maximizes the defining quotient
    over derivative orders in log space. Both are returned; the closed form
    upper-bounds the direct value by construction.
    """
    if k_cap is None:
        k_cap = 4 * math.ceil(eps ** (-sigma) * c ** (-sigma)) + 4
    log_closed = math.log(amplitude) + math.log(eps) - M \
        + eps ** (-sigma) / (sigma * c ** sigma)
    ks = np.arange(k_cap + 1, dtype=np.float64)
    from scipy.special import gammaln

    if xi_max > 0:
        exponents = ks * (math.log(xi_max) - math.log(eps * c)) \
            - gammaln(ks + 1.0) / sigma
    else:  # non-oscillating datum: only the zeroth order contributes
        exponents = np.full_like(ks, -np.inf)
        exponents[0] = 0.0
    top = float(exponents.max())
    near = np.nonzero(exponents >= top - 1e-12)[0]
    log_direct = math.log(amplitude) + math.log(eps) - M + top
    return GevreyNorms(closed_form=math.exp(log_closed),
                       direct=math.exp(log_direct),
                       argmax_order=int(near[-1]))


# ---------------------------------------------------------------------------
# L2 over conical space-time domains


def _gl_nodes(a: float, b: float, n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * x, half * w


def l2_norm_on_cone(u_phys, R: float, rho: float, d: int = 1,
                    n_quad: int = 32, t_cap: float | None = None) -> float:
    """L2 norm of a physical field over {R |x|_1 + rho t < 1, t >= 0},
    by mapped tensor Gauss-Legendre quadrature (d <= 2).

    ``u_phys(t, X)`` takes a scalar time and points (S, d) and returns
    (S, ...) values; components are summed in quadrature.
    """
    if R <= 0 or rho <= 0:
        raise ValueError("need R > 0 and rho > 0")
    if d not in (1, 2):
        raise NotImplementedError("cone quadrature implemented for d <= 2")
    t_hi = 1.0 / rho if t_cap is None else min(t_cap, 1.0 / rho)
    ts, wt = _gl_nodes(0.0, t_hi, n_quad)
    total = 0.0
    for t, w_t in zip(ts, wt):
        width = (1.0 - rho * t) / R
        if width <= 0:
            continue
        if d == 1:
            xs, wx = _gl_nodes(-width, width, n_quad)
            vals = np.asarray(u_phys(t, xs[:, None]))
            mags = np.abs(vals.reshape(vals.shape[0], -1)) ** 2
            total += w_t * float(wx @ mags.sum(axis=1))
        else:
            # split at the kink of the diamond slice so the outer rule sees
            # a smooth integrand on each half
            inner = 0.0
            for a, b in ((-width, 0.0), (0.0, width)):
                x1, w1 = _gl_nodes(a, b, n_quad)
                for x1i, w1i in zip(x1, w1):
                    rem = width - abs(x1i)
                    x2, w2 = _gl_nodes(-rem, rem, n_quad)
                    pts = np.column_stack([np.full_like(x2, x1i), x2])
                    vals = np.asarray(u_phys(t, pts))
                    mags = np.abs(vals.reshape(vals.shape[0], -1)) ** 2
                    inner += w1i * float(w2 @ mags.sum(axis=1))
            total += w_t * inner
    return math.sqrt(total)


def physical_field(u, frame, eps: float, xi0: np.ndarray):
    """Reconstruct the physical field from the oscillatory profile:
    value(t, x) = eps * u(t/eps, x, x.xi0/eps); linear in time between grid
    snapshots."""
    from .spaces import eval_trig_paired

    grid = frame.grid

    def field(t: float, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        s = t / eps
        j = int(np.clip(np.searchsorted(grid, s) - 1, 0, grid.size - 2))
        lam = (s - grid[j]) / (grid[j + 1] - grid[j])
        lam = min(max(lam, 0.0), 1.0)
        thetas = (X @ xi0) / eps
        lo = eval_trig_paired(u, j, X, thetas)
        hi = eval_trig_paired(u, j + 1, X, thetas)
        return eps * ((1 - lam) * lo + lam * hi)

    return field


# ---------------------------------------------------------------------------
# the final ratio


@dataclass
class RatioRow:
    ratio: float
    envelope: float


def instability_envelope(eps: float, delta: float, sigma: float, c: float,
                         alpha: float, d: int, m: int) -> float:
    """Predicted lower envelope of the instability ratio,
    eps^{1+(d+1)/2 - delta(2m+1) - alpha} exp(-alpha c eps^{-sigma} +
    alpha eps^{-delta})."""
    expo = 1.0 + (d + 1) / 2.0 - delta * (2 * m + 1) - alpha
    return eps ** expo * math.exp(-alpha * c * eps ** (-sigma)
                                  + alpha * eps ** (-delta))


def instability_ratio(norm_u_l2: float, norm_h: float, alpha: float,
                      eps: float, delta: float, sigma: float, c: float,
                      d: int, m: int) -> RatioRow:
    """Measured ratio against the predicted envelope (reported side by
    side; the envelope's amplitude convention follows the final-display
    form, whose data-norm bound differs from the sharp one, so only sign
    and trend comparisons are meaningful)."""
    return RatioRow(ratio=norm_u_l2 / norm_h ** alpha,
                    envelope=instability_envelope(eps, delta, sigma, c,
                                                  alpha, d, m))
