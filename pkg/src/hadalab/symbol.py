"""Principal symbol assembly, frozen-spectrum analysis and growth rates.

Symbol families carry polynomial coefficient data in (t, x, u); everything
downstream (ellipticity, branch tracking, curvature data, rates) is exact
polynomial algebra plus dense linear algebra on small matrices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.linalg as sla

IMAG_TOL = 1e-10
GAP_TOL = 1e-8
DEF_TOL = 1e-8
CLUSTER_RADIUS = 1e-6


class RateCase(Enum):
    GENERAL = "GENERAL"
    SEMISIMPLE = "SEMISIMPLE"
    MAXIMAL = "MAXIMAL"


class SymbolError(RuntimeError):
    pass


class NotElliptic(SymbolError):
    pass


class BranchLost(SymbolError):
    """Eigenvalue continuation could not follow the branch."""


# ---------------------------------------------------------------------------
# polynomial coefficient oracles


@dataclass
class MatrixPolynomial:
    """sum over terms of C * t^a * x^b * u^c with constant matrices C."""

    d: int
    N: int
    terms: list  # [(C (N,N) ndarray, a int, b tuple[d], c tuple[N])]

    def __post_init__(self):
        norm = []
        for C, a, b, c in self.terms:
            C = np.asarray(C, dtype=np.complex128)
            if C.shape != (self.N, self.N):
                raise ValueError("coefficient matrix has wrong shape")
            norm.append((C, int(a), tuple(int(v) for v in b),
                         tuple(int(v) for v in c)))
        self.terms = norm

    def eval(self, t: float, x, u) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        out = np.zeros((self.N, self.N), dtype=np.complex128)
        for C, a, b, c in self.terms:
            w = t ** a
            for xl, bl in zip(x, b):
                w *= xl ** bl
            for ul, cl in zip(u, c):
                w *= ul ** cl
            out += w * C
        return out

    def at_u_zero(self) -> "MatrixPolynomial":
        return MatrixPolynomial(self.d, self.N,
                                [(C, a, b, c) for C, a, b, c in self.terms
                                 if sum(c) == 0])

    def u_free(self) -> bool:
        return all(sum(c) == 0 for _, _, _, c in self.terms)

    def coefficient(self, a: int, b: tuple, c: tuple) -> np.ndarray:
        out = np.zeros((self.N, self.N), dtype=np.complex128)
        for C, ta, tb, tc in self.terms:
            if ta == a and tb == tuple(b) and tc == tuple(c):
                out += C
        return out

    def tx_derivative_at_origin(self, i: int) -> np.ndarray:
        """d/dz_i at (t,x,u)=(0,0,0) where z_0 = t and z_i = x_i for i >= 1."""
        if i == 0:
            return self.coefficient(1, (0,) * self.d, (0,) * self.N)
        e = [0] * self.d
        e[i - 1] = 1
        return self.coefficient(0, tuple(e), (0,) * self.N)

    def tx_second_derivative_at_origin(self, i: int, j: int) -> np.ndarray:
        """d^2/dz_i dz_j at the origin (includes the 2! for repeated axes)."""
        a, b = [0, [0] * self.d]
        for idx in (i, j):
            if idx == 0:
                a += 1
            else:
                b[idx - 1] += 1
        import math

        fac = math.factorial(a)
        for bl in b:
            fac *= math.factorial(bl)
        return fac * self.coefficient(a, tuple(b), (0,) * self.N)

    def u_gradient_split(self) -> list:
        """Polynomials G_j with P(t,x,u) - P(t,x,0) = sum_j u_j G_j(t,x,u).

        Each monomial with a u factor is assigned to its first active
        component; exact for polynomials.
        """
        grads = [[] for _ in range(self.N)]
        for C, a, b, c in self.terms:
            if sum(c) == 0:
                continue
            j = next(l for l, cl in enumerate(c) if cl > 0)
            cc = list(c)
            cc[j] -= 1
            grads[j].append((C, a, b, tuple(cc)))
        return [MatrixPolynomial(self.d, self.N, g) for g in grads]

    def scaled(self, s: complex) -> "MatrixPolynomial":
        return MatrixPolynomial(self.d, self.N,
                                [(s * C, a, b, c) for C, a, b, c in self.terms])

    @staticmethod
    def sum_of(polys) -> "MatrixPolynomial":
        polys = list(polys)
        d, N = polys[0].d, polys[0].N
        terms = [t for p in polys for t in p.terms]
        return MatrixPolynomial(d, N, terms)


@dataclass
class SymbolFamily:
    """First-order coefficient matrices A_j, zeroth-order factor F, and the
    distinguished unit frequency."""

    d: int
    N: int
    A: list  # d MatrixPolynomials
    F: MatrixPolynomial
    xi0: np.ndarray
    name: str = ""

    def __post_init__(self):
        self.xi0 = np.asarray(self.xi0, dtype=float)
        if self.xi0.shape != (self.d,):
            raise ValueError("xi0 has wrong dimension")
        if abs(np.linalg.norm(self.xi0) - 1.0) > 1e-12:
            raise ValueError("xi0 must be a unit vector")
        if len(self.A) != self.d:
            raise ValueError("need one coefficient matrix per space dimension")

    def principal(self) -> MatrixPolynomial:
        """A(t,x,u) = sum_j A_j(t,x,u) xi0_j."""
        return MatrixPolynomial.sum_of(
            [self.A[j].scaled(self.xi0[j]) for j in range(self.d)])

    def frozen_symbol(self) -> MatrixPolynomial:
        """The symbol along the branch point: A(t, x, u=0)."""
        return self.principal().at_u_zero()

    def A0(self) -> np.ndarray:
        return self.principal().eval(0.0, np.zeros(self.d), np.zeros(self.N))


# ---------------------------------------------------------------------------
# frozen spectrum


@dataclass
class SymbolSpectrum:
    lambda0: complex
    gamma0: float
    m: int
    e_plus: np.ndarray
    P0: np.ndarray
    A0: np.ndarray
    A0_partial_inverse: np.ndarray
    case: RateCase = RateCase.GENERAL
    mu: np.ndarray | None = None
    semisimple: bool = False
    reports: dict = field(default_factory=dict)


def _normalize_eigvec(v: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    v = v / np.linalg.norm(v)
    for comp in v:
        if abs(comp) > tol:
            v = v * (abs(comp) / comp)
            break
    return v


def _spectral_projector(A: np.ndarray, lam: complex, radius: float) -> np.ndarray:
    """Projector onto the invariant subspace of the eigenvalue cluster around
    lam, via an ordered Schur decomposition and a Sylvester solve."""
    T, Z, k = sla.schur(A.astype(np.complex128), output="complex",
                        sort=lambda z: abs(z - lam) <= radius)
    if k == 0:
        raise SymbolError("empty eigenvalue cluster")
    T11, T12, T22 = T[:k, :k], T[:k, k:], T[k:, k:]
    P = np.zeros_like(A, dtype=np.complex128)
    P[:k, :k] = np.eye(k)
    if T12.size:
        X = sla.solve_sylvester(T11, -T22, T12)
        P[:k, k:] = X
    return Z @ P @ Z.conj().T


def _partial_inverse(A: np.ndarray, P: np.ndarray) -> np.ndarray:
    """B with P B = 0 and A B = Id - P (inverse on the complementary range)."""
    Q = np.eye(A.shape[0]) - P
    return Q @ np.linalg.inv(A @ Q + P) @ Q


def check_ellipticity(fam: SymbolFamily, imag_tol: float = IMAG_TOL) -> SymbolSpectrum:
    """Assemble the frozen symbol and select its most unstable eigenvalue.

    Raises NotElliptic when the whole spectrum is real within tolerance.
    Ties between eigenvalues of maximal imaginary part break toward larger
    real part.
    """
    A0 = fam.A0()
    w, V = np.linalg.eig(A0)
    order = np.lexsort((-w.real, -w.imag))
    lam0 = w[order[0]]
    if lam0.imag <= imag_tol:
        raise NotElliptic(
            f"spectrum is real within {imag_tol:g}: max Im = {lam0.imag:.3e}")
    cluster = np.abs(w - lam0) <= CLUSTER_RADIUS
    m = int(np.sum(cluster))
    lam0 = complex(np.mean(w[cluster]))
    vecs = V[:, np.abs(w - lam0) <= CLUSTER_RADIUS]
    e_plus = _normalize_eigvec(vecs[:, 0])
    P0 = _spectral_projector(A0, lam0, CLUSTER_RADIUS)
    Ainv = _partial_inverse(A0, P0)
    return SymbolSpectrum(
        lambda0=lam0, gamma0=float(lam0.imag), m=m, e_plus=e_plus,
        P0=P0, A0=A0, A0_partial_inverse=Ainv)


@dataclass
class BranchReport:
    ok: bool
    semisimple: bool
    min_gap: float
    reason: str = ""


def _ball_samples(d: int, radius: float, n: int, include_origin=True):
    """Low-discrepancy (t, x) samples with t >= 0, sorted by radius."""
    from scipy.stats import qmc

    h = qmc.Halton(d=d + 1, scramble=False)
    pts = h.random(n)
    pts[:, 0] = pts[:, 0] * radius  # t in [0, radius]
    pts[:, 1:] = (2 * pts[:, 1:] - 1) * radius
    if include_origin:
        pts = np.vstack([np.zeros(d + 1), pts])
    order = np.argsort(np.linalg.norm(pts, axis=1))
    return pts[order]


def check_semisimple_noncoalescing(fam: SymbolFamily, spec: SymbolSpectrum,
                                   ball_radius: float = 0.1,
                                   n_samples: int = 64,
                                   gap_tol: float = GAP_TOL) -> BranchReport:
    """Rank test for semisimplicity at the base point, then eigenvalue
    continuation of the branch over a small (t, x) ball checking that its
    distance to the rest of the spectrum stays above gap_tol."""
    A0, lam0, m, N = spec.A0, spec.lambda0, spec.m, fam.N
    sv = np.linalg.svd(A0 - lam0 * np.eye(N), compute_uv=False)
    rank = int(np.sum(sv > 1e-9 * max(1.0, sv[0])))
    semisimple = rank == N - m
    if not semisimple:
        return BranchReport(False, False, 0.0,
                            f"geometric multiplicity {N - rank} < algebraic {m}")

    abar = fam.frozen_symbol()
    u0 = np.zeros(fam.N)
    lam_prev = lam0
    min_gap = np.inf
    init_gap = None
    for pt in _ball_samples(fam.d, ball_radius, n_samples):
        t, x = pt[0], pt[1:]
        w = np.linalg.eigvals(abar.eval(t, x, u0))
        dist = np.abs(w - lam_prev)
        sel = np.argsort(dist)[:m]
        branch = w[sel]
        if init_gap is None:
            others0 = np.delete(w, sel)
            init_gap = float(np.min(np.abs(others0 - lam_prev))) if others0.size else np.inf
        if np.max(np.abs(branch - lam_prev)) > 0.5 * (init_gap if np.isfinite(init_gap) else 1.0):
            raise BranchLost(
                f"continuation jump at (t,x)=({t:.3g},{x}) exceeds half the "
                "initial spectral gap")
        others = np.delete(w, sel)
        if others.size:
            gap = float(np.min(np.abs(others[:, None] - branch[None, :])))
            min_gap = min(min_gap, gap)
        lam_prev = complex(np.mean(branch))
    ok = min_gap > gap_tol
    return BranchReport(ok, True, float(min_gap),
                        "" if ok else f"gap {min_gap:.3e} <= {gap_tol:g}")


@dataclass
class MuReport:
    status: str  # OK | CONDITION_I_VIOLATED | SIGN_FAIL | AMBIGUOUS
    mu: np.ndarray | None = None
    detail: str = ""

    @property
    def ok(self):
        return self.status == "OK"


def compute_mu_and_check_sign(fam: SymbolFamily, spec: SymbolSpectrum,
                              tol: float = 1e-10,
                              def_tol: float = DEF_TOL) -> MuReport:
    """Second-order curvature data of the frozen symbol at the base point.

    Checks the first-derivative null condition, extracts the distinguished
    nonzero eigenvalue of each curvature matrix, and tests negative
    definiteness of its imaginary part.
    """
    abar = fam.frozen_symbol()
    P0, Ainv = spec.P0, spec.A0_partial_inverse
    dim = fam.d + 1
    dA = [abar.tx_derivative_at_origin(i) for i in range(dim)]
    scale = max(1.0, max((np.abs(D).max() for D in dA), default=0.0),
                np.abs(spec.A0).max())
    for i, D in enumerate(dA):
        if np.abs(P0 @ D @ P0).max() > tol * scale:
            return MuReport("CONDITION_I_VIOLATED", None,
                            f"P0 dA_{i} P0 != 0")
    mu = np.zeros((dim, dim), dtype=np.complex128)
    for i in range(dim):
        for j in range(dim):
            Mij = (P0 @ dA[i] @ Ainv @ dA[j] @ P0
                   + P0 @ dA[j] @ Ainv @ dA[i] @ P0
                   + P0 @ abar.tx_second_derivative_at_origin(i, j) @ P0)
            w = np.linalg.eigvals(Mij)
            nz = w[np.abs(w) > tol * max(1.0, scale**2)]
            if nz.size == 0:
                mu[i, j] = 0.0
                continue
            spread = np.max(np.abs(nz[:, None] - nz[None, :]))
            if spread > 1e-6 * max(1.0, np.abs(nz).max()):
                return MuReport(
                    "AMBIGUOUS", None,
                    f"curvature matrix ({i},{j}) has several distinct nonzero "
                    "eigenvalues; no selection rule applies")
            mu[i, j] = nz.mean()
    im = 0.5 * (mu.imag + mu.imag.T)
    ev = np.linalg.eigvalsh(im)
    if np.all(ev < -def_tol):
        return MuReport("OK", mu)
    return MuReport("SIGN_FAIL", mu,
                    f"Im(mu) eigenvalues {ev} not all < -{def_tol:g}")


def check_quadratic_source(fam: SymbolFamily) -> bool:
    """The zeroth-order factor must vanish identically at u = 0, so the
    source F(t,x,u) u has no linear-in-u part."""
    return all(sum(c) >= 1 for _, _, _, c in fam.F.terms)


CEILINGS = {RateCase.GENERAL: None,  # 1/(m+1), multiplicity dependent
            RateCase.SEMISIMPLE: 0.5,
            RateCase.MAXIMAL: 2.0 / 3.0}


def gevrey_ceiling(case: RateCase, m: int) -> float:
    if case is RateCase.GENERAL:
        return 1.0 / (m + 1)
    return CEILINGS[case]


def classify(fam: SymbolFamily, **kw) -> SymbolSpectrum:
    """Run the assumption checkers in order and attach the strongest case the
    family supports, plus the individual reports."""
    spec = check_ellipticity(fam)
    branch = check_semisimple_noncoalescing(fam, spec, **kw)
    spec.semisimple = branch.ok
    spec.reports["branch"] = branch
    spec.reports["quadratic_source"] = check_quadratic_source(fam)
    if branch.ok:
        murep = compute_mu_and_check_sign(fam, spec)
        spec.reports["mu"] = murep
        if murep.ok:
            spec.case = RateCase.MAXIMAL
            spec.mu = murep.mu
        else:
            spec.case = RateCase.SEMISIMPLE
    else:
        spec.case = RateCase.GENERAL
    return spec


# ---------------------------------------------------------------------------
# growth rates


@dataclass
class RateFunction:
    """Upper rate for the propagator and lower rate for the free solution."""

    case: RateCase
    gamma0: float
    eps: float
    R_inv: float
    r: float
    omega: float
    m: int
    im_lambda: object = None  # callable t -> Im lambda(t, 0), MAXIMAL case

    def gamma_sharp(self, tau):
        tau = np.asarray(tau, dtype=float)
        if self.case is RateCase.MAXIMAL:
            return np.full_like(tau, self.gamma0)
        if self.case is RateCase.SEMISIMPLE:
            return self.gamma0 + self.eps * tau + self.R_inv
        return self.gamma0 + self.eps * tau + self.R_inv + self.omega

    def gamma_flat(self, tau):
        tau = np.asarray(tau, dtype=float)
        if self.case is RateCase.MAXIMAL:
            return np.asarray([self.im_lambda(self.eps * t) for t in np.atleast_1d(tau)]
                              ).reshape(tau.shape) - self.r
        if self.case is RateCase.SEMISIMPLE:
            return self.gamma0 - self.eps * tau - self.r
        return self.gamma0 - self.eps * tau - self.r - self.omega

    def int_gamma_sharp(self, s):
        """integral of gamma_sharp from 0 to s (closed form)."""
        s = np.asarray(s, dtype=float)
        if self.case is RateCase.MAXIMAL:
            return self.gamma0 * s
        base = self.gamma0 + self.R_inv + (0.0 if self.case is RateCase.SEMISIMPLE
                                           else self.omega)
        return base * s + 0.5 * self.eps * s**2

    def int_gamma_flat(self, s):
        s = np.asarray(s, dtype=float)
        if self.case is not RateCase.MAXIMAL:
            base = self.gamma0 - self.r - (0.0 if self.case is RateCase.SEMISIMPLE
                                           else self.omega)
            return base * s - 0.5 * self.eps * s**2
        # numeric quadrature against the tracked branch
        out = np.empty(np.atleast_1d(s).shape)
        for i, si in enumerate(np.atleast_1d(s)):
            taus = np.linspace(0.0, si, 257)
            out[i] = np.trapezoid(self.gamma_flat(taus), taus)
        return out.reshape(s.shape)

    def omega_factor(self) -> float:
        """The trigonalization loss omega^{-(m-1)}; 1 outside GENERAL."""
        if self.case is RateCase.GENERAL and self.m > 1:
            return self.omega ** (-(self.m - 1))
        return 1.0


def make_rates(spec: SymbolSpectrum, R: float, r: float, omega: float,
               eps: float, im_lambda=None, case: RateCase | None = None,
               m: int | None = None) -> RateFunction:
    """Rates for the requested case; SEMISIMPLE forces omega = 0 and an
    effective multiplicity of 1, MAXIMAL forces omega = 1."""
    case = spec.case if case is None else case
    m = spec.m if m is None else m
    if case is RateCase.SEMISIMPLE:
        omega, m = 0.0, 1
    elif case is RateCase.MAXIMAL:
        omega = 1.0
        if im_lambda is None:
            raise ValueError("MAXIMAL rates need the tracked branch Im lambda")
    rf = RateFunction(case=case, gamma0=spec.gamma0, eps=eps,
                      R_inv=1.0 / R if R > 0 else 0.0, r=r, omega=omega, m=m,
                      im_lambda=im_lambda)
    return rf


def branch_im_lambda(fam: SymbolFamily, spec: SymbolSpectrum, t_max: float,
                     n_samples: int = 513):
    """Track Im of the distinguished branch along (t, x=0), returning a
    linear interpolant suitable for the MAXIMAL lower rate."""
    abar = fam.frozen_symbol()
    ts = np.linspace(0.0, max(t_max, 1e-12), n_samples)
    vals = np.empty_like(ts)
    lam_prev = spec.lambda0
    x0 = np.zeros(fam.d)
    u0 = np.zeros(fam.N)
    for i, t in enumerate(ts):
        w = np.linalg.eigvals(abar.eval(t, x0, u0))
        sel = np.argsort(np.abs(w - lam_prev))[: spec.m]
        lam_prev = complex(np.mean(w[sel]))
        vals[i] = lam_prev.imag
    return lambda t: float(np.interp(t, ts, vals))


# ---------------------------------------------------------------------------
# JSON interchange for symbol families

FAMILY_SCHEMA = {
    "type": "object",
    "required": ["d", "N", "xi0", "A", "F"],
    "properties": {
        "d": {"type": "integer", "minimum": 1},
        "N": {"type": "integer", "minimum": 1},
        "xi0": {"type": "array", "items": {"type": "number"}},
        "A": {"type": "array"},
        "F": {"type": "array"},
    },
}


def _terms_from_json(doc, d, N):
    terms = []
    for item in doc:
        C = np.asarray(item["coeff"], dtype=float)
        terms.append((C, item.get("t", 0), tuple(item.get("x", [0] * d)),
                      tuple(item.get("u", [0] * N))))
    return MatrixPolynomial(d, N, terms)


def family_from_json(path) -> SymbolFamily:
    import jsonschema

    with open(path) as fh:
        doc = json.load(fh)
    jsonschema.validate(doc, FAMILY_SCHEMA)
    d, N = doc["d"], doc["N"]
    A = [_terms_from_json(a, d, N) for a in doc["A"]]
    F = _terms_from_json(doc["F"], d, N)
    return SymbolFamily(d=d, N=N, A=A, F=F, xi0=np.asarray(doc["xi0"]),
                        name=doc.get("name", str(path)))
