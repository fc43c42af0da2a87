import random

import pytest
import sympy as sp
from hypothesis import given, strategies as st
from sympy.polys.domains import QQ_I

from fiolab.weyl import (
    DimensionMismatchError,
    PolynomialHamiltonian,
    WeylElement,
    build_H_decomposition,
    commutator,
    derivation_bracket,
    fedosov_connection_check,
    lie_algebra_check,
    lift_D,
    lift_D0,
    random_element,
    random_hamiltonian,
    weyl_mul,
)

x1, xi1, x2, xi2, X1, Y1, X2, Y2, hbar = sp.symbols("x1 xi1 x2 xi2 X1 Y1 X2 Y2 hbar")


def W(expr, dim=1, cap=8):
    return WeylElement.from_expr(expr, dim, cap)


def H(expr, dim=1):
    return PolynomialHamiltonian.from_expr(expr, dim)


class TestProduct:
    def test_defining_relation(self):
        assert commutator(W(Y1), W(X1)) == W(sp.I * hbar)

    @pytest.mark.parametrize("k,l", [(1, 1), (1, 2), (2, 1), (2, 2)])
    def test_relations_dim2(self, k, l):
        Yk = WeylElement.generator("Y", k, 2)
        Xl = WeylElement.generator("X", l, 2)
        expect = W(sp.I * hbar, 2) if k == l else WeylElement.zero(2)
        assert commutator(Yk, Xl) == expect
        assert commutator(WeylElement.generator("X", k, 2), Xl).is_zero()

    def test_unit(self):
        a = W(X1**2 * Y1 + 3 * hbar * x1)
        assert weyl_mul(a, WeylElement.scalar(1, 1)) == a

    def test_associativity_instance(self):
        # oracle: both orderings expanded by hand in normal form give X^2 Y - i hbar X
        x, y = W(X1), W(Y1)
        left = weyl_mul(x, weyl_mul(x, y))
        right = weyl_mul(weyl_mul(x, x), y)
        assert left == right == W(X1**2 * Y1 - sp.I * hbar * X1)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            weyl_mul(W(X1), W(X1, dim=2))

    def test_cap_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            weyl_mul(W(X1, cap=8), W(X1, cap=6))

    def test_cap_drops_terms(self):
        a = W(X1**5, cap=8)
        p = weyl_mul(a, a)
        assert p.truncated and all(wt <= 8 for wt in p.weights())

    def test_grading_respected(self):
        a = W(X1**3 + Y1 * X1)
        b = W(Y1**2 * hbar)
        for key in weyl_mul(a, b).terms:
            assert a.weight(key) in (4 + 2, 2 + 2 + 2, 5 + 2, 3 + 2 + 2) or a.weight(key) <= 8

    def test_negative_hbar_powers(self):
        a = W(X1 / hbar)
        assert commutator(W(Y1), a) == W(sp.I)


@given(st.integers(0, 10**6), st.sampled_from([1, 2]))
def test_associativity(seed, dim):
    rng = random.Random(seed)
    a, b, c = (random_element(rng, dim, n_terms=3) for _ in range(3))
    assert weyl_mul(weyl_mul(a, b), c) == weyl_mul(a, weyl_mul(b, c))


@given(st.integers(0, 10**6), st.sampled_from([1, 2]))
def test_lift_restricts_to_H(seed, dim):
    h = random_hamiltonian(random.Random(seed), dim)
    dec = build_H_decomposition(h, degree_cap=20)
    assert dec.Htilde.at_fiber_zero().to_hamiltonian() == h


class TestDecomposition:
    def test_linear(self):
        d = build_H_decomposition(H(x1))
        assert d.H0 == H(x1) and d.H1 == W(X1) and d.Htilde == W(x1 + X1)

    def test_constant(self):
        d = build_H_decomposition(H(5))
        assert d.H1.is_zero() and d.Htilde == W(5)

    def test_bilinear(self):
        d = build_H_decomposition(H(x1 * xi1))
        assert d.Htilde == W(x1 * xi1 + xi1 * X1 + x1 * Y1 + X1 * Y1)

    def test_hbar_part(self):
        d = build_H_decomposition(H(x1**2 + hbar * xi1))
        assert d.H0 == H(x1**2)
        assert d.Htilde == W(x1**2 + 2 * x1 * X1 + X1**2 + hbar * xi1 + hbar * Y1)

    def test_tail_starts_at_degree_two(self):
        D = lift_D0(H(x1**3 * xi1 + xi1**2))
        assert D.weyl_part.min_fiber_degree() >= 2


class TestLiftedDerivations:
    def test_constant_is_zero(self):
        w = W(X1**2 * x1 + xi1 * Y1)
        assert lift_D(H(3))(w).is_zero() and lift_D0(H(3))(w).is_zero()

    def test_linear_on_base(self):
        # vector part (1/i){x1, .} = i d/dxi1 on base polynomials
        p = W(xi1**3 + x1 * xi1)
        assert lift_D(H(x1))(p) == W(sp.I * (3 * xi1**2 + x1))

    def test_bracket_of_quadratics(self):
        h, k = H(x1**2), H(xi1**2)
        w = W(X1**3 * xi1 + Y1 * X1 * x1 + hbar * Y1**2)
        ok, G = lie_algebra_check(h, k, w)
        # oracle: x^2*xi^2 - xi^2*x^2 = 4 i hbar x xi for the induced product
        assert G == H(4 * sp.I * x1 * xi1)
        assert ok

    def test_bracket_explicit(self):
        h, k = H(x1**2 * xi1), H(xi1**3 + hbar * x1)
        w = W(X1**2 * Y1 + x1**2 * Y1)
        G = h.star_commutator_over_hbar(k)
        assert derivation_bracket(lift_D(h), lift_D(k), w) == lift_D(G)(w)

    def test_induced_product_relation(self):
        assert H(x1).star(H(xi1)) - H(xi1).star(H(x1)) == H(sp.I * hbar)


@given(st.integers(0, 10**6), st.sampled_from([1, 2]))
def test_lie_algebra_identity(seed, dim):
    rng = random.Random(seed)
    h, k = random_hamiltonian(rng, dim), random_hamiltonian(rng, dim)
    w = random_element(rng, dim)
    assert lie_algebra_check(h, k, w)[0]


class TestFedosov:
    def test_bilinear_commutes(self):
        rep = fedosov_connection_check(H(x1 * xi1), W(X1**2 * Y1 + x1 * Y1 + xi1**2))
        assert all(r.form_level and r.on_test for r in rep.results["D0"])

    def test_constant(self):
        rep = fedosov_connection_check(H(7), W(X1 * Y1 + x1))
        assert rep.passed
        assert all(r.commutator_form == "0" for rs in rep.results.values() for r in rs)

    def test_scalar_form(self):
        rep = fedosov_connection_check(H(x1**2 * xi1), W(X1 * Y1**2 + x1 * xi1))
        forms = {r.component: r.commutator_form for r in rep.results["D"]}
        assert forms == {"dx1": "-1", "dxi1": "0"}
        assert rep.passed

    def test_overflow_flag(self):
        rep = fedosov_connection_check(H(x1**2), W(X1**8))
        assert rep.overflow and rep.passed

    def test_report_serializable(self):
        import json

        rep = fedosov_connection_check(H(x1**3), W(X1))
        json.dumps(rep.as_dict())

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            fedosov_connection_check(H(x1), W(X1, dim=2))


@given(st.integers(0, 10**6), st.sampled_from([1, 2]))
def test_connection_identities(seed, dim):
    rng = random.Random(seed)
    rep = fedosov_connection_check(random_hamiltonian(rng, dim), random_element(rng, dim))
    assert rep.passed


def test_coefficients_exact():
    assert all(isinstance(c, type(QQ_I(0, 0))) for c in W(sp.Rational(1, 3) * X1 + sp.I).terms.values())
