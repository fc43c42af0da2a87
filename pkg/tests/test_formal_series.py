import numpy as np
import pytest
from hypothesis import given, strategies as st

from fiolab.formal_series import (
    DEFAULT_LADDER,
    FormalSeries,
    IllConditionedFitError,
    IncompatibleSeriesError,
    extrapolate_series,
    hbar_ladder,
    series_add,
    series_mul,
)


def coeffs_equal(a, b):
    return a.min_power == b.min_power and a.trunc_order == b.trunc_order and all(
        np.array_equal(x, y) for x, y in zip(a.coeffs, b.coeffs)
    )


class TestArithmetic:
    def test_termwise_add(self):
        s = series_add(FormalSeries([1, 1]), FormalSeries([0, 2]))
        assert s.coeffs == (1, 3)

    def test_add_zero(self):
        a = FormalSeries([1.5, -2, 3])
        assert coeffs_equal(a + FormalSeries([0, 0, 0]), a)

    def test_laurent_alignment(self):
        s = series_add(FormalSeries([1, 1], min_power=-1, trunc_order=0), FormalSeries([1], 0, 0))
        assert (s.min_power, s.coeffs) == (-1, (1, 2))

    def test_add_truncates_to_min_order(self):
        s = FormalSeries([1, 2, 3]) + FormalSeries([1, 1])
        assert s.trunc_order == 1

    def test_incompatible_shapes(self):
        with pytest.raises(IncompatibleSeriesError):
            FormalSeries([np.ones(3)]) + FormalSeries([np.ones(4)])

    def test_product_difference_of_squares(self):
        s = series_mul(FormalSeries([1, 1, 0]), FormalSeries([1, -1, 0]))
        assert s.coeffs == (1, 0, -1)

    def test_unit(self):
        a = FormalSeries([2, -1, 4])
        assert coeffs_equal(a * FormalSeries([1, 0, 0]), a)

    def test_inverse_powers(self):
        s = series_mul(FormalSeries([1], -1, -1), FormalSeries([1], 1, 1))
        assert s.min_power == 0 and s[0] == 1

    def test_no_silent_extension(self):
        s = FormalSeries([1, 2])
        with pytest.raises(IndexError):
            s[2]
        with pytest.raises(ValueError):
            s.truncate(3)

    def test_coefficient_count(self):
        s = FormalSeries([1], min_power=-2, trunc_order=3)
        assert len(s.coeffs) == 6

    def test_matrix_coefficients(self):
        A = np.array([[0, 1], [0, 0]])
        s = series_mul(FormalSeries([np.eye(2), A]), FormalSeries([np.eye(2), A]), np.matmul)
        assert np.array_equal(s[1], 2 * A)


small_ints = st.lists(st.integers(-5, 5), min_size=1, max_size=5)


@given(small_ints, small_ints, small_ints, st.integers(-2, 1), st.integers(-2, 1), st.integers(-2, 1))
def test_add_associative(a, b, c, pa, pb, pc):
    A, B, C = FormalSeries(a, pa), FormalSeries(b, pb), FormalSeries(c, pc)
    try:
        left = (A + B) + C
    except ValueError:
        return
    assert coeffs_equal(left, A + (B + C))


@given(small_ints, small_ints, small_ints, st.integers(-2, 1), st.integers(-2, 1), st.integers(-2, 1))
def test_mul_associative(a, b, c, pa, pb, pc):
    A, B, C = FormalSeries(a, pa), FormalSeries(b, pb), FormalSeries(c, pc)
    assert coeffs_equal((A * B) * C, A * (B * C))


class TestExtrapolation:
    def test_exact_linear(self):
        hs = [1 / 8, 1 / 16, 1 / 32, 1 / 64]
        fit = extrapolate_series([(h, 3 + 2 * h) for h in hs], 1)
        assert fit.series[0] == pytest.approx(3, abs=1e-13)
        assert fit.series[1] == pytest.approx(2, abs=1e-12)
        assert fit.max_residual < 1e-12

    def test_sin_taylor(self):
        hs = hbar_ladder()
        fit = extrapolate_series([(h, np.sin(h)) for h in hs], 3)
        assert np.allclose(fit.series.coeffs, [0, 1, 0, -1 / 6], atol=1e-8, rtol=0)

    def test_constant(self):
        fit = extrapolate_series([(h, 2.5) for h in hbar_ladder()], 3)
        assert fit.series[0] == pytest.approx(2.5)
        assert max(abs(c) for c in fit.series.coeffs[1:]) < 1e-10

    def test_array_values(self):
        g = np.linspace(0, 1, 5)
        fit = extrapolate_series([(h, np.exp(h * g)) for h in hbar_ladder()], 2)
        assert np.allclose(fit.series[2], g**2 / 2, atol=1e-8)
        assert fit.residual.shape == g.shape

    def test_laurent_input(self):
        fit = extrapolate_series([(h, 1 / h + 4 + h) for h in hbar_ladder()], 1, min_power=-1)
        assert np.allclose(fit.series.coeffs, [1, 4, 1], atol=1e-9)

    @pytest.mark.parametrize("deg", [0, 1, 2, 3])
    def test_polynomial_reproduced(self, deg):
        rng = np.random.default_rng(deg)
        c = rng.normal(size=deg + 1)
        hs = [1 / L for L in (5, 7, 9, 11, 13, 17)]
        fit = extrapolate_series([(h, np.polyval(c[::-1], h)) for h in hs], deg)
        assert np.allclose(fit.series.coeffs, c, atol=1e-12 * fit.cond)

    def test_ill_conditioned(self):
        hs = [1e-3 * (1 + 1e-9 * i) for i in range(6)]
        with pytest.raises(IllConditionedFitError) as err:
            extrapolate_series([(h, h) for h in hs], 3)
        assert err.value.cond > 1e10

    def test_too_few_samples(self):
        with pytest.raises(ValueError):
            extrapolate_series([(0.1, 1.0), (0.2, 1.0)], 2)

    def test_fixed_degree(self):
        fit = extrapolate_series([(h, np.cos(h)) for h in hbar_ladder()], 2, fit_degree=6)
        assert fit.fit_degree == 6
        assert np.allclose(fit.series.coeffs, [1, 0, -0.5], atol=1e-9)

    def test_default_ladder(self):
        hs = hbar_ladder()
        assert len(hs) == len(DEFAULT_LADDER) and np.all(np.diff(hs) < 0)
