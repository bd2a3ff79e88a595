"""Solver tests: free solution, source operators, Picard iteration and the
late-time lower bound."""

import numpy as np
import pytest

from hadalab import metrology, models, series, solver, symbol
from hadalab.propagator import frame_abar, integrate_modes
from hadalab.solver import (KTooLargeError, NoConvergenceError,
                            NormEscapeError, SourceOperators,
                            build_free_solution, eval_poly_on_series,
                            fixed_point_residual, free_norm_envelope,
                            growth_exponent_fit, lower_bound_check,
                            picard_solve, ts_component, ts_unit_scalar)
from hadalab.spaces import (SpaceFrame, SpaceNormParams, TimeBudget,
                            apply_dx, norm_e, norm_es, ts_product, ts_zeros)
from hadalab.symbol import MatrixPolynomial, RateCase, SymbolFamily

CONSTS = series.default_constants()
ROT2 = np.array([[0.0, -1.0], [1.0, 0.0]])


def cr_setup(eps=2.0 ** -6, delta=0.3, K_x=4, steps=128, n_max=6,
             substeps=2):
    fam = models.cauchy_riemann()
    spec = symbol.classify(fam)
    params = metrology.select_parameters(eps, delta, spec.case, spec.m,
                                         gamma0=spec.gamma0, sigma=0.2)
    frame = SpaceFrame.build(params.norm_params(), CONSTS, fam.d, K_x, steps)
    P = integrate_modes(frame_abar(fam, frame),
                        range(-n_max, n_max + 1), frame.grid, fam.d, K_x,
                        substeps=substeps)
    free = build_free_solution(spec, P, frame, params.M, n_max)
    return fam, spec, params, frame, P, free


def test_free_solution_datum():
    fam, spec, params, frame, P, free = cr_setup()
    amp = np.exp(-params.M)
    assert np.allclose(free.f.mode(-1)[0, 0], amp * spec.e_plus, atol=1e-14)
    assert np.allclose(free.f.mode(+1)[0, 0], amp * np.conj(spec.e_plus),
                       atol=1e-14)
    others = [n for n in range(-6, 7) if abs(n) != 1]
    for n in others:
        assert np.all(free.f.mode(n)[:, 0] == 0)


def test_free_solution_growth_exponent():
    _, spec, _, _, _, free = cr_setup()
    fit = growth_exponent_fit(free.f)
    assert abs(fit - spec.gamma0) / spec.gamma0 < 0.05


def test_free_solution_norm_envelope():
    # |||f||| <= (2 / (c0 c1)) om_fac exp(sqrt(2) M' - M): the mode-one
    # bracket is sqrt(2) under the <n> = sqrt(n^2+1) weight convention
    _, spec, params, frame, P, free = cr_setup()
    bound = (2.0 / (CONSTS.c0 * CONSTS.c1)
             * np.exp(np.sqrt(2.0) * params.M_prime - params.M))
    assert free.norm <= bound * (1 + 1e-9)
    assert free.norm >= 0.25 * bound  # attained up to the polarization size


def test_scalar_toy_kernel_and_picard():
    """Staged constant coupling: T(u)(s) = integral of kappa u; the limit of
    the iteration from a constant datum is the exponential."""
    kappa = 0.3
    grid = np.linspace(0.0, 2.0, 1025)
    p = SpaceNormParams(R=1.0, rho=1.0, M_prime=3.0, beta=1.0, omega=0.0,
                        m=1, eps=0.1, rate_case=RateCase.SEMISIMPLE,
                        gamma0=1.0)
    frame = SpaceFrame(params=p, consts=CONSTS,
                       budget=TimeBudget(2.0, 2.0, 2.0 / 1024),
                       grid=grid, dim_x=1, trunc_order=0)
    h = ts_zeros(0, 1, 0, grid, (1,))
    h.mode(0)[0, :] = 1.0
    free = solver.FreeSolution(f=h, M_eps=0.0, amplitude=1.0,
                               e_plus=np.array([1.0]))
    free.norm = norm_e(h, frame)

    def T_op(u):
        out = ts_zeros(0, 1, 0, grid, (1,))
        g = u.mode(0)[0, :, 0]
        dt = np.diff(grid)
        acc = np.zeros_like(g)
        acc[1:] = np.cumsum(0.5 * (g[1:] + g[:-1]) * dt)
        out.mode(0)[0, :, 0] = kappa * acc
        return out

    # the kernel itself reproduces the running integral of u
    tu = T_op(free.f)
    assert np.allclose(tu.mode(0)[0, :, 0], kappa * grid, rtol=1e-6)

    state = picard_solve(T_op, free, frame, K_eps=0.3, tol=1e-12, j_max=60)
    got = state.u.mode(0)[0, :, 0].real
    want = np.exp(kappa * grid)
    assert np.max(np.abs(got - want) / want) < 1e-6
    # residual contraction bounded by the factor kappa * s_bar, and the
    # updates (factorial tail of the exponential) keep shrinking
    ratios = [b / a for a, b in zip(state.residuals, state.residuals[1:])
              if a > 1e-14]
    assert 0 < ratios[0] <= kappa * grid[-1]
    assert all(r < 1 for r in ratios)


def test_ops_vanish_on_zero():
    fam, spec, params, frame, P, free = cr_setup()
    ops = SourceOperators(fam=fam, frame=frame, P=P, eps=params.eps,
                          ball_limit=10 * free.norm)
    z = ts_zeros(6, 1, frame.trunc_order, frame.grid, (2,))
    for op in (ops.op_t_theta, ops.op_t_x, ops.op_t_u):
        assert np.all(op(z).modes == 0)


def test_mode_support_linear_control():
    # couplings off except the trivial ones: support stays on modes +-1
    fam, spec, params, frame, P, free = cr_setup()
    ops = SourceOperators(fam=fam, frame=frame, P=P, eps=params.eps,
                          couple_u=False, ball_limit=10 * free.norm)
    state = picard_solve(ops, free, frame, K_eps=0.1, tol=1e-10, j_max=10)
    for n in range(-6, 7):
        if abs(n) != 1:
            assert np.all(state.u.mode(n) == 0)
    assert np.array_equal(state.u.modes, free.f.modes)  # exact fixed point


def test_zero_datum_zero_solution():
    fam, spec, params, frame, P, free = cr_setup()
    free.f.modes[:] = 0.0
    free.norm = 0.0
    ops = SourceOperators(fam=fam, frame=frame, P=P, eps=params.eps,
                          ball_limit=1.0)
    state = picard_solve(ops, free, frame, K_eps=0.1, tol=1e-10, j_max=5)
    assert np.all(state.u.modes == 0)


def test_quadratic_source_populates_modes():
    fam, spec, params, frame, P, free = cr_setup()
    ops = SourceOperators(fam=fam, frame=frame, P=P, eps=params.eps,
                          ball_limit=max(1.0, 2.5 * free.norm))
    state = picard_solve(ops, free, frame, K_eps=0.2, tol=1e-8, j_max=30)
    assert np.any(state.u.mode(0) != 0)
    assert np.any(state.u.mode(2) != 0)
    res = fixed_point_residual(state, ops, free, frame)
    assert res <= 10 * 1e-8 * free.norm


def test_picard_trace_is_json():
    import json

    fam, spec, params, frame, P, free = cr_setup()
    ops = SourceOperators(fam=fam, frame=frame, P=P, eps=params.eps,
                          ball_limit=max(1.0, 2.5 * free.norm))
    state = picard_solve(ops, free, frame, K_eps=0.2, tol=1e-6, j_max=30)
    doc = json.loads(json.dumps(state.trace))
    assert {"j", "residual", "K_eps", "norm_u"} <= set(doc[0])


def test_norm_escape_gate():
    fam, spec, params, frame, P, free = cr_setup()
    ops = SourceOperators(fam=fam, frame=frame, P=P, eps=params.eps,
                          ball_limit=1.0)
    big = free.f.scaled(10.0 / max(free.norm, 1e-30))
    with pytest.raises(NormEscapeError):
        ops.op_t_u(big)


def test_k_gate_refuses():
    fam, spec, params, frame, P, free = cr_setup()
    ops = SourceOperators(fam=fam, frame=frame, P=P, eps=params.eps,
                          ball_limit=10 * free.norm)
    with pytest.raises(KTooLargeError):
        picard_solve(ops, free, frame, K_eps=0.61, tol=1e-8, j_max=5)


def test_no_convergence_error():
    fam, spec, params, frame, P, free = cr_setup()
    ops = SourceOperators(fam=fam, frame=frame, P=P, eps=params.eps,
                          ball_limit=max(1.0, 2.5 * free.norm))
    with pytest.raises(NoConvergenceError):
        picard_solve(ops, free, frame, K_eps=0.2, tol=1e-14, j_max=1)


# ---------------------------------------------------------------------------
# a family with genuine u-dependence in the first-order part


def u_coupled_family(strength=0.25):
    zu = (0, 0)
    A1 = MatrixPolynomial(1, 2, [(ROT2, 0, (0,), zu),
                                 (strength * ROT2, 0, (0,), (1, 0))])
    return SymbolFamily(d=1, N=2, A=[A1], F=models._quadratic_source(1, 2),
                        xi0=np.array([1.0]), name="cr-u-coupled")


def test_u_gradient_split_consistency():
    fam = u_coupled_family()
    A = fam.principal()
    grads = A.u_gradient_split()
    rng = np.random.default_rng(10)
    for _ in range(5):
        t, x, u = rng.uniform(0, 0.3), rng.uniform(-0.3, 0.3, 1), \
            rng.uniform(-0.4, 0.4, 2)
        lhs = A.eval(t, x, u) - fam.frozen_symbol().eval(t, x, u)
        rhs = sum(u[j] * grads[j].eval(t, x, u) for j in range(2))
        assert np.allclose(lhs, rhs, atol=1e-13)


def test_eval_poly_on_series_constant_and_linear():
    fam, spec, params, frame, P, free = cr_setup()
    eps = params.eps
    # constant polynomial evaluates to the constant matrix at every slot
    const = MatrixPolynomial(1, 2, [(ROT2, 0, (0,), (0, 0))])
    got = eval_poly_on_series(const, eps, free.f, frame)
    assert np.allclose(got.mode(0)[0, :], ROT2)
    # u-linear polynomial evaluates to eps * u_1 * C across modes
    lin = MatrixPolynomial(1, 2, [(ROT2, 0, (0,), (1, 0))])
    got = eval_poly_on_series(lin, eps, free.f, frame)
    u1 = ts_component(free.f, 0)
    for n in (-1, 0, 1):
        want = eps * u1.mode(n)[..., None, None] * ROT2
        assert np.allclose(got.mode(n), want, atol=1e-14)


def test_operator_norm_bounds_within_cap():
    """Measured constants of the three integrated kernels stay below the cap
    on random elements of the working ball."""
    eps = 2.0 ** -6
    fam = u_coupled_family()
    spec = symbol.classify(fam)
    params = metrology.select_parameters(eps, 0.3, spec.case, spec.m,
                                         gamma0=spec.gamma0, sigma=0.2)
    frame = SpaceFrame.build(params.norm_params(), CONSTS, fam.d, 4, 128)
    P = integrate_modes(frame_abar(fam, frame), range(-4, 5), frame.grid,
                        fam.d, 4, substeps=2)
    ops = SourceOperators(fam=fam, frame=frame, P=P, eps=eps, ball_limit=1.0)
    rng = np.random.default_rng(11)
    p = frame.params
    om = p.omega_factor()
    C_cap = 10.0
    for _ in range(5):
        u = ts_zeros(4, 1, 4, frame.grid, (2,))
        u.modes[:] = (rng.standard_normal(u.modes.shape)
                      + 1j * rng.standard_normal(u.modes.shape))
        u.modes *= frame.envelope(4)[..., None]
        u.modes *= 0.5 / norm_e(u, frame)  # inside the working ball
        nu = norm_e(u, frame)
        t_th = norm_e(ops.op_t_theta(u), frame)
        t_x = norm_e(ops.op_t_x(u), frame)
        t_u = norm_e(ops.op_t_u(u), frame)
        assert t_th <= C_cap * om / p.beta * eps * nu ** 2
        assert t_x <= C_cap * om * p.R / p.rho * nu
        assert t_u <= C_cap * om / p.beta * eps * nu ** 2


def test_regularization_by_integration():
    """The x derivative leaves the envelope by an unbounded-order factor,
    yet its time integral against the propagator stays within R/rho."""
    eps = 2.0 ** -6
    fam = models.max_flat()
    spec = symbol.classify(fam)
    params = metrology.select_parameters(eps, 0.3, spec.case, spec.m,
                                         gamma0=spec.gamma0, sigma=0.2)
    frame = SpaceFrame.build(params.norm_params(), CONSTS, fam.d, 6, 128)
    P = integrate_modes(frame_abar(fam, frame), range(-2, 3), frame.grid,
                        fam.d, 6, substeps=2)
    # single mode saturating the envelope in x
    u = ts_zeros(2, 1, 6, frame.grid, (2,))
    u.modes[:] = frame.envelope(2)[..., None] * 0.5
    nu = norm_e(u, frame)
    amp_dx = norm_e(apply_dx(u, 0), frame) / nu
    ops = SourceOperators(fam=fam, frame=frame, P=P, eps=eps, ball_limit=1.0)
    amp_tx = norm_e(ops.op_t_x(u), frame) / nu
    p = frame.params
    assert amp_dx > 2.0 * p.R / p.rho  # derivative breaks the envelope scale
    assert amp_tx <= 10.0 * p.R / p.rho  # integration restores it


def test_lower_bound_couplings_off():
    fam, spec, params, frame, P, free = cr_setup()
    rate = symbol.make_rates(spec, params.R, params.eps, params.omega,
                             params.eps)
    rep = lower_bound_check(free.f, free.f, frame, rate, params.M,
                            r=params.eps)
    assert rep["C_eps"] == 0.0
    assert rep["passed"]


def test_lower_bound_trend_in_eps():
    # the measured closeness constant shrinks when eps is halved
    cs = []
    for eps in (2.0 ** -6, 2.0 ** -7):
        fam, spec, params, frame, P, free = cr_setup(eps=eps, substeps=4)
        ops = SourceOperators(fam=fam, frame=frame, P=P, eps=eps,
                              ball_limit=max(1.0, 2.5 * free.norm))
        state = picard_solve(ops, free, frame, K_eps=0.2, tol=1e-9,
                             j_max=30)
        rate = symbol.make_rates(spec, params.R, eps, params.omega, eps)
        rep = lower_bound_check(state.u, free.f, frame, rate, params.M,
                                r=eps)
        assert rep["passed"]
        cs.append(rep["C_eps"])
    assert cs[1] < cs[0]


def test_lower_bound_maximal_case():
    eps = 2.0 ** -8
    fam = models.max_flat()
    spec = symbol.classify(fam)
    params = metrology.select_parameters(eps, 0.3, spec.case, spec.m,
                                         gamma0=spec.gamma0, sigma=0.2)
    frame = SpaceFrame.build(params.norm_params(), CONSTS, fam.d, 6, 256)
    P = integrate_modes(frame_abar(fam, frame), range(-6, 7), frame.grid,
                        fam.d, 6, substeps=4)
    free = build_free_solution(spec, P, frame, params.M, 6)
    k = metrology.scheduled_contraction(params)
    assert k < 0.5
    ops = SourceOperators(fam=fam, frame=frame, P=P, eps=eps,
                          ball_limit=max(1.0, 2.5 * free.norm))
    state = picard_solve(ops, free, frame, K_eps=k, tol=1e-8, j_max=40)
    im_lam = symbol.branch_im_lambda(fam, spec, eps * params.s_bar)
    rate = symbol.make_rates(spec, params.R, eps, params.omega, eps,
                             im_lambda=im_lam)
    rep = lower_bound_check(state.u, free.f, frame, rate, params.M, r=eps)
    assert rep["passed"]
