"""Series kernel tests: convolution against a naive double-loop oracle,
the model envelope, domination checks, and the derived constants."""

import json
import math

import numpy as np
import pytest

from hadalab import kernels, series
from hadalab.series import (ModelMajorant, PowerSeriesX, SeriesDivergedError,
                            compose_radial, conv_table, derive_c0, derive_c1,
                            eval_series, fit_analytic_majorant,
                            from_coeff_dict, index_positions, majorizes,
                            multi_indices, phi_coefficient, phi_series,
                            phi_table, ps_derive, ps_mul, ps_pad,
                            ps_shift_monomial, zeros)

C0 = series.default_constants().c0
C1 = series.default_constants().c1


# ---------------------------------------------------------------------------
# oracle: plain double-loop truncated convolution


def brute_mul(a: PowerSeriesX, b: PowerSeriesX, kout=None) -> PowerSeriesX:
    """Naive double loop over index pairs; per-pair products are numpy array
    operations (1-element slices for scalars) so the arithmetic path is the
    ufunc loop in both oracle and implementation."""
    kout = min(a.trunc_order, b.trunc_order) if kout is None else kout
    pos = index_positions(a.dim_x, kout)
    grid = a.time_grid
    ka, kb = a.kind, b.kind
    if ka == "matrix" and kb in ("matrix", "vector"):
        def prod(i, j):
            if kb == "vector":
                return np.matmul(a.coeffs[i], b.coeffs[j][..., None])[..., 0]
            return np.matmul(a.coeffs[i], b.coeffs[j])
        shape = ((a.value_shape[0], b.value_shape[1]) if kb == "matrix"
                 else (a.value_shape[0],))
    else:
        na, nb = len(a.value_shape), len(b.value_shape)

        def prod(i, j):
            xa = a.coeffs[i:i + 1]
            xb = b.coeffs[j:j + 1]
            if na == 0 and nb > 0:
                xa = xa.reshape(xa.shape + (1,) * nb)
            if nb == 0 and na > 0:
                xb = xb.reshape(xb.shape + (1,) * na)
            return (xa * xb)[0]
        shape = b.value_shape if ka == "scalar" else a.value_shape
    out = zeros(a.dim_x, kout, shape, grid)
    for i, ki in enumerate(a.indices):
        for j, kj in enumerate(b.indices):
            t = tuple(p + q for p, q in zip(ki, kj))
            if t in pos:
                out.coeffs[pos[t]] += prod(i, j)
    return out


def random_series(rng, d, K, shape=(), grid=None):
    n = series.n_indices(d, K)
    tail = (len(grid),) if grid is not None else ()
    c = rng.standard_normal((n, *tail, *shape)) \
        + 1j * rng.standard_normal((n, *tail, *shape))
    return PowerSeriesX(d, K, c, grid)


def test_multi_index_order():
    idx = multi_indices(2, 2)
    assert idx == ((0, 0), (0, 1), (1, 0), (0, 2), (1, 1), (2, 0))
    assert series.n_indices(2, 12) == 91
    for k in multi_indices(3, 5):
        assert all(v >= 0 for v in k)


def test_ps_mul_polynomial_identity():
    # (1 + x)(1 - x) = 1 - x^2 at truncation 2
    a = from_coeff_dict(1, 2, {(0,): 1.0, (1,): 1.0})
    b = from_coeff_dict(1, 2, {(0,): 1.0, (1,): -1.0})
    c = ps_mul(a, b)
    assert c.coefficient((0,)) == 1.0
    assert c.coefficient((1,)) == 0.0
    assert c.coefficient((2,)) == -1.0


def test_ps_mul_annihilator():
    rng = np.random.default_rng(0)
    a = random_series(rng, 2, 3)
    z = zeros(2, 3)
    assert np.all(ps_mul(a, z).coeffs == 0)
    assert np.all(ps_mul(z, a).coeffs == 0)


@pytest.mark.parametrize("d,shape_a,shape_b", [
    (1, (), ()), (2, (), ()), (1, (2, 2), (2,)), (2, (2, 2), (2, 2)),
    (1, (3,), (3,)), (2, (), (2,)),
])
def test_ps_mul_matches_bruteforce_exactly(d, shape_a, shape_b):
    rng = np.random.default_rng(42)
    for K in (0, 1, 3, 6):
        for grid in (None, np.array([0.0, 0.5, 1.5])):
            a = random_series(rng, d, K, shape_a, grid)
            b = random_series(rng, d, K, shape_b, grid)
            got = ps_mul(a, b)
            want = brute_mul(a, b)
            assert np.array_equal(got.coeffs, want.coeffs)  # bitwise


def test_ps_mul_grid_mismatch():
    a = random_series(np.random.default_rng(1), 1, 2)
    b = random_series(np.random.default_rng(2), 1, 2,
                      grid=np.array([0.0, 1.0]))
    with pytest.raises(series.GridMismatchError):
        ps_mul(a, b)


def test_ps_mul_shape_mismatch():
    rng = np.random.default_rng(3)
    a = random_series(rng, 1, 2, (2, 2))
    b = random_series(rng, 1, 2, (3,))
    with pytest.raises(series.ShapeMismatchError):
        ps_mul(a, b)


def test_ps_derive_monomial():
    a = from_coeff_dict(1, 3, {(2,): 1.0})  # x^2
    d = ps_derive(a, 0)
    assert d.trunc_order == 2
    assert d.coefficient((1,)) == 2.0
    const = from_coeff_dict(1, 3, {(0,): 5.0})
    assert np.all(ps_derive(const, 0).coeffs[1:] == 0)
    assert ps_derive(const, 0).coefficient((0,)) == 0.0


def test_ps_derive_model_series():
    # d/dx_1 of the composed model equals R times the composed derivative
    m = ModelMajorant(C=1.0, R=1.5, rho=0.8, c0=C0)
    t = 0.4
    phi = compose_radial(lambda j: C0 / (j * j + 1.0), 2, 6, t, m.R, m.rho)
    dphi = ps_derive(phi, 0)
    phip = compose_radial(lambda j: C0 * (j + 1) / ((j + 1) ** 2 + 1.0),
                          2, 5, t, m.R, m.rho)
    assert np.allclose(dphi.coeffs, m.R * phip.coeffs, rtol=1e-12)


def test_phi_coefficient_values():
    m = ModelMajorant(C=1.0, R=1.0, rho=1.0, c0=C0)
    assert phi_coefficient((0,), 0.0, m) == pytest.approx(C0, rel=1e-14)
    m2 = ModelMajorant(C=1.0, R=2.0, rho=1.0, c0=C0)
    assert phi_coefficient((1,), 0.0, m2) == pytest.approx(C0, rel=1e-14)
    # reference summation oracle, 200 terms
    ref = sum(C0 * 0.5 ** p / (p * p + 1.0) for p in range(200))
    assert phi_coefficient((0,), 0.5, m) == pytest.approx(ref, rel=1e-12)


def test_phi_diverges_at_radius():
    m = ModelMajorant(C=1.0, R=1.0, rho=1.0, c0=C0)
    with pytest.raises(SeriesDivergedError):
        phi_coefficient((0,), 1.0, m)


def test_phi_matches_compose_radial():
    m = ModelMajorant(C=1.0, R=2.0, rho=0.5, c0=C0)
    t = 0.7
    tab = phi_table(2, 5, [t], m)[:, 0]
    ref = compose_radial(lambda j: C0 / (j * j + 1.0), 2, 5, t, m.R, m.rho)
    assert np.allclose(tab, ref.coeffs[:, 0].real, rtol=1e-11)


def test_phi_monotone_in_R_rho_t():
    base = ModelMajorant(C=1.0, R=1.0, rho=0.5, c0=C0)
    bigger = ModelMajorant(C=1.0, R=1.5, rho=0.9, c0=C0)
    ts = [0.0, 0.3, 0.9]
    tab0 = phi_table(2, 8, ts, base)
    tab1 = phi_table(2, 8, ts, bigger)
    assert np.all(tab0 <= tab1 * (1 + 1e-12))
    assert np.all(np.diff(tab0, axis=1) >= -1e-15)  # increasing in t


def test_majorizes_reflexive_and_zero():
    m = ModelMajorant(C=1.0, R=1.0, rho=0.5, c0=C0)
    grid = np.array([0.0, 0.4, 0.9])
    phi = phi_series(1, 8, grid, m)
    rep = majorizes(phi, m)
    assert rep.ok and rep.worst_ratio == pytest.approx(1.0, abs=1e-14)
    z = zeros(1, 8, (), grid)
    assert majorizes(z, m).ok


def test_majorizes_reports_violation():
    m = ModelMajorant(C=1.0, R=1.0, rho=0.5, c0=C0)
    grid = np.array([0.0, 0.4])
    phi = phi_series(1, 5, grid, m)
    pos = index_positions(1, 5)[(3,)]
    phi.coeffs[pos, 1] *= 1.01
    rep = majorizes(phi, m)
    assert not rep.ok
    assert rep.worst_index == (3,)
    assert rep.worst_time == pytest.approx(0.4)
    assert rep.worst_ratio == pytest.approx(1.01, rel=1e-12)


def test_majoring_relation_reflexive_transitive():
    rng = np.random.default_rng(7)
    m = ModelMajorant(C=1.0, R=1.0, rho=0.0, c0=C0)
    tab = phi_table(1, 6, [0.0], m)[:, 0]
    for _ in range(20):
        f1 = rng.uniform(0.1, 0.9, size=tab.shape)
        f2 = rng.uniform(0.1, 0.9, size=tab.shape)
        a = (f1 * f2 * tab).astype(complex)  # a <= b <= Phi
        b = f1 * tab
        assert np.all(np.abs(a) <= b)
        assert np.all(b <= tab * (1 + 1e-15))
        assert np.all(np.abs(a) <= tab)  # transitivity lands on the model


def test_phi_squared_dominated():
    # the defining property of the amplitude constant, checked via ps_mul
    m = ModelMajorant(C=1.0, R=1.0, rho=0.5, c0=C0)
    grid = np.array([0.0, 0.5, 1.2])
    phi = phi_series(1, 200, grid, m)
    prod = ps_mul(phi, phi)
    assert majorizes(prod, m).ok
    # multivariate composition inherits it
    m2 = ModelMajorant(C=1.0, R=2.0, rho=1.0, c0=C0)
    grid2 = np.array([0.0, 0.4])
    phi2 = phi_series(2, 10, grid2, m2)
    assert majorizes(ps_mul(phi2, phi2), m2).ok


def test_derive_c0_values():
    # single-term hand values
    assert kernels.square_bracket(0) == pytest.approx(1.0)
    assert kernels.square_bracket(1) == pytest.approx(2.0)
    c0, meta = derive_c0(2000)
    assert c0 == pytest.approx(0.20922171423467398, rel=1e-12)
    assert meta["argmax"] == 9
    c0b, _ = derive_c0(4000)
    assert abs(c0b - c0) / c0 < 0.01  # stability under doubling


def test_derive_c0_rejects_bad_kmax():
    with pytest.raises(ValueError):
        derive_c0(0)


def test_derive_c1_symmetry_and_recheck():
    v_pos, _ = series.cross_bracket_value(7)
    v_neg, _ = series.cross_bracket_value(-7)
    assert v_pos == pytest.approx(v_neg, rel=1e-12)
    c1, meta = derive_c1(300)
    assert c1 == pytest.approx(C1, rel=1e-6)
    for n in range(0, 301, 25):
        val, tail = series.cross_bracket_value(n)
        assert c1 * (val + tail) <= 1.0


def test_constants_roundtrip(tmp_path):
    consts = series.derive_constants(k_max=500, n_max=50)
    p = tmp_path / "c.json"
    series.save_constants(consts, p)
    back = series.load_constants(p)
    assert back.c0 == consts.c0 and back.c1 == consts.c1
    # idempotence of the reproducible fields
    again = series.derive_constants(k_max=500, n_max=50)
    assert (again.c0, again.c1) == (consts.c0, consts.c1)
    assert series.constants_hash(again) == series.constants_hash(consts)
    # schema rejects a broken file
    doc = json.loads(p.read_text())
    del doc["c0"]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    with pytest.raises(Exception):
        series.load_constants(bad)


def test_eval_series_against_monomials():
    rng = np.random.default_rng(11)
    a = random_series(rng, 2, 4)
    x = np.array([0.3, -0.2])
    want = sum(a.coeffs[i] * x[0] ** k[0] * x[1] ** k[1]
               for i, k in enumerate(a.indices))
    got = eval_series(a, x)[0]
    assert got == pytest.approx(want, rel=1e-12)


def test_shift_and_pad():
    a = from_coeff_dict(1, 3, {(0,): 2.0, (1,): 1.0})
    s = ps_shift_monomial(a, (2,))
    assert s.coefficient((2,)) == 2.0
    assert s.coefficient((3,)) == 1.0
    p = ps_pad(ps_derive(a, 0), 3)
    assert p.trunc_order == 3
    assert p.coefficient((0,)) == 1.0


def test_backends_agree_bitwise():
    try:
        compiled = kernels.get_backend("compiled")
    except ImportError:
        pytest.skip("compiled backend not built")
    python = kernels.get_backend("python")
    rng = np.random.default_rng(13)
    prod = (rng.standard_normal((40, 7))
            + 1j * rng.standard_normal((40, 7)))
    tgt = np.sort(rng.integers(0, 9, size=40)).astype(np.intp)
    out_c = np.zeros((9, 7), dtype=np.complex128)
    out_p = np.zeros((9, 7), dtype=np.complex128)
    compiled.seg_add(tgt, prod, out_c)
    python.seg_add(tgt, prod, out_p)
    assert np.array_equal(out_c, out_p)
    assert compiled.square_bracket(50) == pytest.approx(
        python.square_bracket(50), rel=1e-13)
    assert compiled.cross_bracket(10, -500, 510) == pytest.approx(
        python.cross_bracket(10, -500, 510), rel=1e-13)


# ---------------------------------------------------------------------------
# envelope fitting


def test_fit_constant_matrix():
    A0 = np.array([[0.0, -1.0], [1.0, 0.0]])

    def oracle(k1, k2, k3):
        if k1 == 0 and sum(k2) == 0 and sum(k3) == 0:
            return A0
        return np.zeros((2, 2))

    fit = fit_analytic_majorant(oracle, (2, 2, 2), d=1, N=2, c0=C0)
    assert fit.C_H == pytest.approx(1.0 / C0, rel=1e-12)
    assert fit.R_H == 0.125 and fit.rho_H == 0.125 and fit.a_H == 0.125


def test_fit_geometric_growth_needs_a2():
    # H(u) = 1/(1 - 2u): coefficients 2^k, scalar, no t or x dependence
    def oracle(k1, k2, k3):
        if k1 == 0 and sum(k2) == 0:
            return np.array([[2.0 ** k3[0]]])
        return np.zeros((1, 1))

    fit = fit_analytic_majorant(oracle, (0, 0, 8), d=1, N=1, c0=C0)
    assert fit.a_H == 2.0
    assert fit.C_H == pytest.approx(1.0 / C0, rel=1e-12)


def test_fit_linear_symbol_bound_holds():
    # H = t + x_1 + u_1: all coefficients at most one
    def oracle(k1, k2, k3):
        tot = (k1, sum(k2), sum(k3))
        if sorted(tot) == [0, 0, 1]:
            return np.array([[1.0]])
        return np.zeros((1, 1))

    fit = fit_analytic_majorant(oracle, (2, 2, 2), d=1, N=1, c0=C0)
    # re-verify the fitted bound on all sampled coefficients
    for k1 in range(3):
        for k2 in multi_indices(1, 2):
            for k3 in multi_indices(1, 2):
                coef = abs(oracle(k1, k2, k3)).max()
                p = k1 + sum(k2)
                env = (fit.C_H * C0 / (p * p + 1.0)
                       * series._multinomial((k1, *k2))
                       * fit.rho_H ** k1 * fit.R_H ** sum(k2)
                       * fit.a_H ** sum(k3))
                assert coef <= env * (1 + 1e-12)


def test_fit_rejects_superexponential():
    def oracle(k1, k2, k3):
        if k1 == 0 and sum(k2) == 0:
            return np.array([[float(math.factorial(k3[0])) ** 2]])
        return np.zeros((1, 1))

    with pytest.raises(series.MajorantFitError):
        fit_analytic_majorant(oracle, (0, 0, 10), d=1, N=1, c0=C0,
                              ladder=[0.5, 1.0, 2.0, 4.0])
