import numpy as np
import pytest
import sympy as sp
from hypothesis import given, strategies as st

from fiolab.formal_series import FormalSeries
from fiolab.symbols import (
    X,
    XI,
    Grid,
    OperatorMatrix,
    Symbol,
    SymbolSyntaxError,
    boundary_extension_check,
    boundary_limit_check,
    chi_expr,
    constant_symbol,
    default_star_grid,
    dx_spectral,
    dxi_fd,
    full_symbol,
    parse_symbol_expr,
    poisson_bracket,
    quantize,
    random_symbol,
    scale_symbol,
    star_analytic,
    star_numeric,
    star_numeric_many,
    star_series,
    star_symbolic,
)

K = 256


def sym(text, order=0.0):
    return Symbol.parse(text, order)


class TestGrammar:
    def test_parse_basic(self):
        e = parse_symbol_expr("exp(I*x)*chi(xi) + arctan(xi)")
        assert e.has(sp.atan(XI))

    @pytest.mark.parametrize("bad", ["__import__('os')", "x.real", "foo(xi)", "lambda: 1", "x[0]"])
    def test_rejects(self, bad):
        with pytest.raises(SymbolSyntaxError):
            parse_symbol_expr(bad)

    def test_chi_profile(self):
        c = Symbol(chi_expr())
        xi = np.array([0.0, 0.3, 0.5, 0.75, 1.0, 2.0, -0.4, -1.5])
        v = c(np.zeros_like(xi), xi).real
        assert np.all(v[[0, 1, 2, 6]] == 0) and np.all(v[[4, 5, 7]] == 1)
        assert 0 < v[3] < 1


class TestQuantize:
    def test_identity(self):
        P = quantize(constant_symbol(1), 16)
        assert np.allclose(P.entries, np.eye(33))

    def test_shift(self):
        P = quantize(sym("exp(I*x)"), 16)
        assert np.allclose(P.entries, np.eye(33, k=-1))

    def test_multiplier(self):
        P = quantize(sym("xi", 1), 16)
        assert np.allclose(P.entries, np.diag(np.arange(-16, 17)))

    def test_x_independent_is_diagonal(self):
        P = quantize(sym("arctan(xi)"), 20)
        assert np.allclose(P.entries, np.diag(np.arctan(np.arange(-20, 21))))

    def test_operator_matrix_shape(self):
        with pytest.raises(ValueError):
            OperatorMatrix(np.zeros((4, 4)))


class TestFullSymbol:
    def test_constant(self):
        assert np.allclose(full_symbol(quantize(constant_symbol(1), 8)).values, 1)

    def test_exponential(self):
        s = full_symbol(quantize(sym("exp(I*x)"), 8))
        expect = np.exp(1j * s.x)[:, None] * np.ones(17)
        # the last column has no room for the shifted mode
        assert np.allclose(s.values[:, :-1], expect[:, :-1])

    @given(st.integers(0, 10_000))
    def test_round_trip_band_limited(self, seed):
        rng = np.random.default_rng(seed)
        a = random_symbol(rng, max_freq=3)
        P = quantize(a, 64)
        s = full_symbol(P)
        ks = np.arange(-60, 61)
        expect = a(s.x[:, None], ks[None, :].astype(float))
        assert np.max(np.abs(s.at_modes(ks) - expect)) < 1e-12 * max(1.0, np.max(np.abs(expect)))


class TestScaling:
    def test_linear(self):
        a = scale_symbol(sym("xi", 1), 0.25)
        assert a(0.0, 4.0) == pytest.approx(1.0)

    def test_unit(self):
        a = sym("sin(x)*arctan(xi)")
        assert scale_symbol(a, 1.0) is a

    @given(st.floats(0.01, 2), st.floats(0.01, 2))
    def test_composition(self, h1, h2):
        a = sym("cos(x)*xi/sqrt(1+xi**2)")
        x = np.linspace(0, 6, 7)[:, None]
        xi = np.linspace(-5, 5, 9)[None, :]
        assert np.allclose(scale_symbol(scale_symbol(a, h1), h2)(x, xi), scale_symbol(a, h1 * h2)(x, xi))

    def test_order_preserved(self):
        assert scale_symbol(sym("xi**2", 2), 0.5).order == 2


class TestDerivatives:
    def test_spectral(self):
        x = 2 * np.pi * np.arange(64) / 64
        v = np.sin(3 * x)[:, None] * np.ones((1, 3))
        assert np.allclose(dx_spectral(v, 2), -9 * v)

    def test_fd(self):
        xi = np.arange(-4, 4.01, 0.125)
        v = np.exp(-(xi**2))[None, :]
        d = dxi_fd(v, 0.125, 1)
        ok = ~np.isnan(d[0])
        assert np.allclose(d[0, ok], (-2 * xi * np.exp(-(xi**2)))[ok], atol=1e-5)


@pytest.fixture(scope="module")
def commutator_pair():
    a = Symbol(sp.exp(sp.I * X) * chi_expr(), 0.0)
    b = sym("arctan(xi)")
    return a, b, star_numeric(a, b, 3, K=K), star_numeric(b, a, 3, K=K)


class TestStarNumeric:
    def test_unit(self, commutator_pair):
        a = commutator_pair[0]
        fit = star_numeric(a, constant_symbol(1), 3, K=K)
        grid = default_star_grid()
        assert np.max(np.abs(fit.series[0] - a.on_grid(grid))) < 1e-8
        assert max(fit.series.sup_norms()[1:]) < 1e-8

    def test_leading_term_is_product(self, commutator_pair):
        a, b, ab, _ = commutator_pair
        grid = default_star_grid()
        assert np.max(np.abs(ab.series[0] - a.on_grid(grid) * b.on_grid(grid))) < 1e-8

    def test_commutator_is_poisson_bracket(self, commutator_pair):
        a, b, ab, ba = commutator_pair
        grid = default_star_grid()
        # oracle: closed-form bracket of the two expressions, computed by sympy
        pb = sp.diff(a.expr, XI) * sp.diff(b.expr, X) - sp.diff(a.expr, X) * sp.diff(b.expr, XI)
        expect = -1j * Symbol(pb).on_grid(grid)
        assert np.max(np.abs(ab.series[1] - ba.series[1] - expect)) < 1e-6

    def test_poisson_bracket_helper(self):
        pb = poisson_bracket(sym("xi"), sym("sin(x)"))
        assert sp.simplify(pb.expr - sp.cos(X)) == 0

    def test_residual_reported(self, commutator_pair):
        assert commutator_pair[2].max_residual < 1e-6

    def test_mode_cut_insufficient(self):
        with pytest.raises(ValueError, match="mode cut"):
            star_numeric(sym("sin(x)"), sym("xi", 1), 1, K=64)

    def test_triple_matches_analytic_associativity(self, rng):
        a, b, c = (random_symbol(rng, kind="order0") for _ in range(3))
        grid = default_star_grid()
        num = star_numeric_many([a, b, c], 3, K=K).series
        left = star_series(star_symbolic(a, b, 3), FormalSeries([c], 0, 3)).map(lambda s: s.on_grid(grid))
        right = star_series(FormalSeries([a], 0, 3), star_symbolic(b, c, 3)).map(lambda s: s.on_grid(grid))
        for n in range(4):
            assert np.max(np.abs(left[n] - right[n])) < 1e-10
            assert np.max(np.abs(num[n] - left[n])) < 1e-6

    def test_numeric_matches_analytic(self, rng):
        a, b = random_symbol(rng, kind="poly"), random_symbol(rng, kind="gauss")
        num = star_numeric(a, b, 3, K=K).series
        ana = star_analytic(a, b, 3)
        for n in range(4):
            assert np.max(np.abs(num[n] - ana[n])) < 1e-6


class TestStarAnalytic:
    def test_zeroth_order(self, rng):
        a, b = random_symbol(rng), random_symbol(rng)
        grid = default_star_grid()
        assert np.allclose(star_analytic(a, b, 2)[0], a.on_grid(grid) * b.on_grid(grid))

    def test_multipliers_commute(self):
        a, b = sym("arctan(xi)"), sym("xi/sqrt(1+xi**2)")
        s = star_symbolic(a, b, 3)
        assert all(s[n].is_zero() for n in (1, 2, 3))

    @given(st.integers(0, 10_000))
    def test_associative(self, seed):
        rng = np.random.default_rng(seed)
        a, b, c = (random_symbol(rng, max_freq=1) for _ in range(3))
        grid = Grid.make(16, xi_max=2.0, xi_step=0.5)
        N = 2
        left = star_series(star_symbolic(a, b, N), FormalSeries([c], 0, N)).map(lambda s: s.on_grid(grid))
        right = star_series(FormalSeries([a], 0, N), star_symbolic(b, c, N)).map(lambda s: s.on_grid(grid))
        for n in range(N + 1):
            assert np.max(np.abs(left[n] - right[n])) < 1e-9

    def test_order_closure(self):
        a = Symbol(sp.exp(sp.I * X) * chi_expr(), 0.0)
        b = sym("xi/(1+abs(xi))")
        s = star_symbolic(a, b, 2)
        for n in range(3):
            assert s[n].order <= a.order + b.order


class TestSymbolClasses:
    def test_estimate_finite(self):
        assert np.isfinite(symbol_estimate_of("cos(x)*xi/sqrt(1+xi**2)", 0))
        assert np.isfinite(symbol_estimate_of("xi**2+sin(x)*xi", 2))

    def test_estimate_detects_wrong_order(self):
        assert symbol_estimate_of("xi**2", 0) > 1e5

    def test_boundary_continuity(self):
        assert boundary_limit_check(sym("exp(I*x)*xi/sqrt(1+xi**2)"))["continuous"]

    def test_boundary_constants(self):
        grid = Grid.make(32, xi_max=6.0)
        s = star_analytic(constant_symbol(2), constant_symbol(3), 2, grid)
        rep = boundary_extension_check(s, grid)
        assert rep["bounded"] and all(o["sup"] == 0 for o in rep["orders"][1:])

    def test_boundary_first_coefficient_bounded(self):
        grid = Grid.make(64, xi_max=40.0, xi_step=0.5)
        f = Symbol(sp.exp(sp.I * X) * chi_expr(), 0.0)
        g = sym("xi/(1+abs(xi))")
        rep = boundary_extension_check(star_analytic(f, g, 2, grid), grid)
        assert rep["orders"][1]["bounded"] and rep["orders"][1]["sup"] < 10
        assert rep["bounded"]

    def test_corrections_decay_beyond_cutoff(self):
        grid = Grid.make(64, xi_max=40.0, xi_step=0.5)
        f = sym("xi/(1+abs(xi)) + cos(x)*tanh(xi/3)")
        g = Symbol(sp.exp(sp.I * X) * chi_expr(), 0.0)
        rep = boundary_extension_check(star_analytic(f, g, 2, grid), grid)
        assert rep["bounded"]
        assert rep["orders"][1]["sup"] > 0.01
        assert rep["orders"][0]["rays_settle"]

    def test_growth_detected(self):
        grid = Grid.make(16, xi_max=10.0)
        s = star_analytic(sym("xi", 1), sym("sin(x)*xi", 1), 1, grid)
        assert not boundary_extension_check(s, grid)["bounded"]


def symbol_estimate_of(text, order):
    from fiolab.symbols import symbol_estimate

    return symbol_estimate(sym(text, order), max_order=2)
