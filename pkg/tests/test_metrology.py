"""Schedule, Gevrey-norm, cone-quadrature and ratio tests."""

import math

import numpy as np
import pytest

from hadalab import metrology
from hadalab.metrology import (GevreyNorms, IndexOutOfRange, ScheduleError,
                               gevrey_norm_oscillatory, instability_envelope,
                               instability_ratio, l2_norm_on_cone,
                               scheduled_contraction, select_parameters)
from hadalab.symbol import RateCase

SWEEP = [2.0 ** -k for k in range(4, 11)]


def test_general_schedule_reference_values():
    eps, delta = 1e-2, 0.3
    p = select_parameters(eps, delta, RateCase.GENERAL, m=1)
    # reference powers: omega = beta = 1/R = eps^delta, 1/rho = eps^{1/2}
    assert p.omega == pytest.approx(10 ** -0.6, rel=1e-12)
    assert p.beta == pytest.approx(10 ** -0.6, rel=1e-12)
    assert 1.0 / p.R == pytest.approx(10 ** -0.6, rel=1e-12)
    assert 1.0 / p.rho == pytest.approx(1e-1, rel=1e-12)
    # 1 - (2m-1) delta = 0.7 > 0, so no logarithmic correction
    assert p.M_prime == p.M == pytest.approx(eps ** -delta, rel=1e-12)


def test_ceiling_rejections():
    with pytest.raises(IndexOutOfRange, match="1/3|0.333"):
        select_parameters(1e-2, 0.4, RateCase.GENERAL, m=2)
    # the message reports the ceiling
    try:
        select_parameters(1e-2, 0.4, RateCase.GENERAL, m=2)
    except IndexOutOfRange as exc:
        assert "0.333" in str(exc)
    with pytest.raises(IndexOutOfRange):
        select_parameters(1e-2, 0.55, RateCase.SEMISIMPLE, m=1)
    # the curvature-refined case accepts indices up to 2/3
    p = select_parameters(1e-2, 0.6, RateCase.MAXIMAL, m=1)
    assert p.case is RateCase.MAXIMAL
    with pytest.raises(IndexOutOfRange):
        select_parameters(1e-2, 0.7, RateCase.MAXIMAL, m=1)


def test_sigma_below_delta_enforced():
    with pytest.raises(ScheduleError):
        select_parameters(1e-2, 0.3, RateCase.SEMISIMPLE, m=1, sigma=0.35)


def test_schedule_window_and_k_decrease():
    for case, delta, sweep in (
            (RateCase.SEMISIMPLE, 0.3, SWEEP),
            (RateCase.GENERAL, 0.25, [2.0 ** -k for k in range(7, 14)]),
            (RateCase.MAXIMAL, 0.3, SWEEP),
            (RateCase.MAXIMAL, 0.6, SWEEP)):
        m = 2 if case is RateCase.GENERAL else 1
        ks = []
        for eps in sweep:
            p = select_parameters(eps, delta, case, m=m)
            assert 0.5 <= p.s_bar * eps ** delta <= 2.0
            assert eps * p.rho * p.s_bar < 1.0 + 1e-12
            ks.append(scheduled_contraction(p))
        assert all(b < a for a, b in zip(ks, ks[1:]))


def test_general_constraint_chain():
    # numerical ordering eps^{1-delta} < 1/rho < eps^{(m-1)delta} / R
    for m, delta in ((1, 0.3), (2, 0.25)):
        for eps in [2.0 ** -k for k in range(7, 14)]:
            p = select_parameters(eps, delta, RateCase.GENERAL, m=m)
            lo = eps ** (1 - delta)
            mid = 1.0 / p.rho
            hi = eps ** ((m - 1) * delta) / p.R
            assert lo < mid < hi


def test_gevrey_norm_limit_case():
    gn = gevrey_norm_oscillatory(1.0, 0.999, 1.0, amplitude=1.0, M=0.0)
    # closed-form exponent tends to 1 and the direct argmax sits near k = 1
    assert math.log(gn.closed_form) == pytest.approx(1.0, rel=1e-2)
    assert gn.argmax_order == 1


def test_gevrey_norm_closed_form_dominates():
    # the closed form is an upper envelope; the direct sup is attained at the
    # frozen order computed by the same log-space oracle
    eps, sigma, c = 1e-2, 0.5, 1.0
    M = eps ** -0.6
    gn = gevrey_norm_oscillatory(eps, sigma, c, amplitude=1.0, M=M)
    # closed-form exponent eps^{-sigma}/(sigma c^sigma) = 20
    assert math.log(gn.closed_form) - (math.log(eps) - M) == pytest.approx(20.0)
    assert gn.direct <= gn.closed_form
    # independent discrete-sup oracle
    best = max(k * abs(math.log(eps * c)) - math.lgamma(k + 1) / sigma
               for k in range(200))
    want = math.exp(math.log(eps) - M + best)
    assert gn.direct == pytest.approx(want, rel=1e-12)
    assert gn.argmax_order == 10  # optimizer near eps^{-sigma}


def test_gevrey_norm_constant_datum():
    gn = gevrey_norm_oscillatory(1.0, 0.5, 1.0, amplitude=3.5, M=0.0,
                                 xi_max=0.0)
    assert gn.direct == pytest.approx(3.5, rel=1e-12)
    assert gn.argmax_order == 0


def test_l2_cone_volume():
    one = lambda t, X: np.ones((X.shape[0],))
    assert l2_norm_on_cone(one, 1.0, 1.0, d=1) == pytest.approx(1.0, abs=1e-10)
    for R, rho in ((2.0, 1.0), (4.0, 8.0), (0.5, 3.0)):
        got = l2_norm_on_cone(one, R, rho, d=1)
        assert got ** 2 == pytest.approx(1.0 / (R * rho), rel=1e-12)
    # d = 2: the slice is a diamond of area 2 w^2
    got = l2_norm_on_cone(one, 2.0, 3.0, d=2)
    want = 2.0 / (3 * 2.0 ** 2 * 3.0)
    assert got ** 2 == pytest.approx(want, rel=1e-10)


def test_l2_cone_oscillatory_modulus():
    eps = 1e-3
    osc = lambda t, X: np.exp(1j * X[:, 0] / eps)
    got = l2_norm_on_cone(osc, 1.0, 1.0, d=1)
    assert got == pytest.approx(1.0, rel=1e-10)


def test_l2_cone_rejects_bad_params():
    with pytest.raises(ValueError):
        l2_norm_on_cone(lambda t, X: np.ones(X.shape[0]), -1.0, 1.0)


def test_envelope_boundary_case_no_divergence():
    # alpha = 1, sigma = delta, c = 1: the exponentials cancel and only the
    # polynomial prefactor remains, which must not blow up along the sweep
    vals = [instability_envelope(e, 0.3, 0.3, 1.0, 1.0, d=1, m=1)
            for e in SWEEP]
    assert all(v <= vals[0] * (1 + 1e-12) for v in vals)
    want = [e ** (1 + 1.0 - 0.3 * 3 - 1.0) for e in SWEEP]
    assert np.allclose(vals, want, rtol=1e-12)


def test_envelope_increases_for_strict_inequality():
    vals = [instability_envelope(e, 0.3, 0.2, 1.0, 1.0, d=1, m=1)
            for e in SWEEP]
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_instability_ratio_assembly():
    rr = instability_ratio(norm_u_l2=2.0e-3, norm_h=0.1, alpha=0.5,
                           eps=2.0 ** -6, delta=0.3, sigma=0.2, c=1.0,
                           d=1, m=1)
    assert rr.ratio == pytest.approx(2.0e-3 / 0.1 ** 0.5, rel=1e-12)
    assert rr.envelope == pytest.approx(
        instability_envelope(2.0 ** -6, 0.3, 0.2, 1.0, 0.5, 1, 1), rel=1e-12)
