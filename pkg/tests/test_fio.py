import numpy as np
import pytest
from hypothesis import given, strategies as st

from fiolab.fio import (
    CanonicalTransformation,
    CircleDiffeo,
    EllipticityError,
    HomogeneousHamiltonian,
    build_clutched_fio,
    build_ode_fio,
    commutator_transport_check,
    defect_profile,
    egorov_conjugate,
    egorov_grid,
    egorov_homomorphism_check,
    egorov_ladder,
    egorov_residuals,
    hardy_projections,
    polar_correction,
    pullback_matrix,
    trusted_window,
)
from fiolab.symbols import OperatorMatrix, Symbol

TWO_PI = 2 * np.pi
K = 128


def sym(text, order=0.0):
    return Symbol.parse(text, order)


@pytest.fixture(scope="module")
def clutched():
    ct = CanonicalTransformation(CircleDiffeo.shifted_sine(0.1, 0.5), CircleDiffeo.shifted_sine(0.08, -1.0))
    return build_clutched_fio(ct, sym("exp(I*x)*(2+cos(x))"), sym("2+sin(x)*tanh(xi)"), K=K)


class TestCircleDiffeo:
    def test_identity(self):
        g = CircleDiffeo.identity()
        x = np.linspace(0, 6, 7)
        assert np.allclose(g(x), x) and g.is_identity()

    def test_shifted_sine_closed_form(self):
        g = CircleDiffeo.shifted_sine(0.3, 0.7)
        x = np.linspace(0, TWO_PI, 50)
        assert np.allclose(g(x), x + 0.3 * np.sin(x + 0.7), atol=1e-14)
        assert np.allclose(g.d1(x), 1 + 0.3 * np.cos(x + 0.7), atol=1e-14)
        assert np.allclose(g.d2(x), -0.3 * np.sin(x + 0.7), atol=1e-14)

    @given(st.floats(-0.9, 0.9), st.floats(-3, 3))
    def test_inverse_round_trip(self, eps, phase):
        g = CircleDiffeo.shifted_sine(eps, phase)
        y = np.linspace(0, TWO_PI, 64)
        assert np.max(np.abs(g(g.inverse(y)) - y)) < 1e-11

    def test_rejects_non_diffeomorphism(self):
        with pytest.raises(ValueError):
            CircleDiffeo.shifted_sine(1.2)
        with pytest.raises(ValueError):
            CircleDiffeo(np.array([-0.8 / 1j, 0, 0.8 / 1j]))  # p = 1.6 sin x, so g' changes sign

    def test_flow_of_constant_field_is_rotation(self):
        g = CircleDiffeo.flow(lambda x: 0.4 + 0 * x, 1.0)
        x = np.linspace(0, TWO_PI, 9)
        assert np.allclose(g(x), x + 0.4, atol=1e-11)

    def test_flow_of_sine_field(self):
        # dx/dt = sin x has the closed-form solution tan(x(t)/2) = tan(x0/2) e^t
        g = CircleDiffeo.flow(np.sin, 0.5, n=512)
        x0 = np.linspace(0.2, 3.0, 7)
        exact = 2 * np.arctan(np.tan(x0 / 2) * np.exp(0.5))
        assert np.allclose(g(x0), exact, atol=1e-9)


class TestCanonicalTransformation:
    def test_identity_extends(self):
        assert CanonicalTransformation.identity().extends_to_zero_section

    def test_different_components_do_not_extend(self):
        ct = CanonicalTransformation(CircleDiffeo.shifted_sine(0.2), CircleDiffeo.identity())
        assert not ct.extends_to_zero_section

    def test_symplectic(self):
        ct = CanonicalTransformation(CircleDiffeo.shifted_sine(0.3, 1.0), CircleDiffeo.shifted_sine(-0.2))
        assert ct.symplectic_defect() < 1e-6

    def test_inverse(self):
        ct = CanonicalTransformation(CircleDiffeo.shifted_sine(0.3, 1.0), CircleDiffeo.shifted_sine(-0.2))
        x = np.linspace(0, 6, 11)
        for xi in (-2.0, 3.0):
            y, eta = ct.apply(x, np.full_like(x, xi))
            xb, xib = ct.inverse(y, eta)
            assert np.allclose(np.mod(xb - x + np.pi, TWO_PI) - np.pi, 0, atol=1e-11)
            assert np.allclose(xib, xi)

    def test_homogeneous(self):
        ct = CanonicalTransformation(CircleDiffeo.shifted_sine(0.3), CircleDiffeo.identity())
        x = np.linspace(0, 6, 5)
        _, e1 = ct.apply(x, np.full_like(x, 2.0))
        _, e2 = ct.apply(x, np.full_like(x, 6.0))
        assert np.allclose(3 * e1, e2)


class TestPullback:
    def test_rotation_is_diagonal(self):
        c = 0.37
        U = pullback_matrix(CircleDiffeo(np.array([c])), 16).entries
        ks = np.arange(-16, 17)
        assert np.allclose(U, np.diag(np.exp(-1j * ks * c)), atol=1e-13)

    def test_entries_match_forward_quadrature(self):
        g = CircleDiffeo.shifted_sine(0.3, 0.4)
        U = pullback_matrix(g, 16)
        # substitute y = g(x): U[j, k] = (1/2pi) int e^{-i j g(x)} e^{i k x} g'(x)^{1/2} dx
        x = TWO_PI * np.arange(4096) / 4096
        for j, k in [(0, 0), (3, 1), (-5, -4), (2, 7)]:
            val = np.mean(np.exp(-1j * j * g(x) + 1j * k * x) * np.sqrt(g.d1(x)))
            assert abs(U.entries[U.index(j), U.index(k)] - val) < 1e-12

    def test_unitary_on_inner_modes(self):
        g = CircleDiffeo.shifted_sine(0.3)
        U = pullback_matrix(g, 64).entries
        G = U.conj().T @ U
        inner = slice(64 - 32, 64 + 33)
        assert np.allclose(G[inner, inner], np.eye(65), atol=1e-10)

    def test_hardy_projections_partition(self):
        pp, pm, p0 = hardy_projections(5)
        assert np.all(pp + pm + p0 == 1)


class TestPolarCorrection:
    def test_known_svd(self, rng):
        Q1, _ = np.linalg.qr(rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6)))
        Q2, _ = np.linalg.qr(rng.normal(size=(6, 6)) + 1j * rng.normal(size=(6, 6)))
        s = np.array([2.0, 1.5, 0.9, 0.7, 0.1, 0.0])
        P = Q1 @ np.diag(s) @ Q2.conj().T
        out, small = polar_correction(P)
        expect = Q1 @ np.diag([1, 1, 1, 1, 0.1, 0.0]) @ Q2.conj().T
        assert small == 2
        assert np.allclose(out, expect, atol=1e-12)


class TestClutched:
    def test_identity(self):
        phi = build_clutched_fio(CanonicalTransformation.identity(), K=32)
        assert np.allclose(phi.matrix.entries, np.eye(65))

    def test_defect_confined_to_low_modes(self, clutched):
        prof = clutched.defect_profile()
        assert prof.ok and prof.k0 <= 20

    def test_window(self, clutched):
        ratio = min(0.9, 1 / 1.1, 0.92, 1 / 1.08)
        assert clutched.window == int(K * ratio ** 2) - 16
        assert trusted_window(clutched.canonical, K) == clutched.window

    def test_toeplitz_shift_defect(self):
        phi = build_clutched_fio(CanonicalTransformation.identity(), sym("exp(I*x)"), None, K=32)
        D = np.eye(65) - phi.matrix.entries @ phi.matrix.entries.conj().T
        # the image misses exactly the mode 1 (mode 0 is kept by the e0 e0^* term, mode 1 is not hit)
        assert np.isclose(np.trace(D).real, 1.0)

    def test_defect_profile_of_identity(self):
        prof = defect_profile(OperatorMatrix.identity(10), 8)
        assert prof.ok and prof.k0 == 0

    def test_ellipticity(self):
        with pytest.raises(EllipticityError):
            build_clutched_fio(CanonicalTransformation.identity(), sym("sin(x)"), None, K=16)

    def test_perturbed_keeps_metadata(self, clutched):
        p = clutched.perturbed(OperatorMatrix(np.zeros_like(clutched.matrix.entries)))
        assert p.meta["perturbed"] and p.window == clutched.window


class TestHamiltonianRoute:
    def test_homogeneity(self):
        H = HomogeneousHamiltonian("0.1*sin(x)", "0.2")
        assert H.homogeneity_defect() < 1e-12

    def test_canonical_map_of_constant_profile(self):
        ct = HomogeneousHamiltonian("0.3", "0.2").canonical_transformation()
        x = np.linspace(0, 6, 5)
        assert np.allclose(ct.g_plus(x), x - 0.3, atol=1e-10)
        assert np.allclose(ct.g_minus(x), x + 0.2, atol=1e-10)

    def test_zero_hamiltonian_gives_identity(self):
        phi = build_ode_fio(HomogeneousHamiltonian("0", "0"), K=16)
        assert np.allclose(phi.matrix.entries, np.eye(33))

    def test_constant_profile_matches_diagonal_exponential(self):
        H = HomogeneousHamiltonian("0.3", "0.3")
        phi = build_ode_fio(H, K=32)
        ks = np.arange(-32, 33)
        h = H.symbol()(np.zeros_like(ks, float), ks.astype(float))
        assert np.allclose(phi.matrix.entries, np.diag(np.exp(1j * h)), atol=1e-8)

    def test_unitarity(self):
        phi = build_ode_fio(HomogeneousHamiltonian("0.1*sin(x)", "0"), K=64)
        assert phi.meta["unitarity_defect"] <= 1e-9


class TestEgorov:
    def test_ladder_respects_window(self, clutched):
        grid = egorov_grid()
        hs = egorov_ladder(clutched, grid)
        assert np.max(np.abs(grid.xi)) / np.min(hs) <= clutched.window

    def test_principal_term_is_transport(self, clutched):
        a = sym("exp(I*x)*arctan(xi)")
        grid = egorov_grid()
        fit = egorov_conjugate(clutched, a, 1, grid=grid)
        target = clutched.canonical.transport(a, grid.x[:, None], grid.xi[None, :])
        assert np.max(np.abs(fit.series[0] - target)) < 1e-8

    def test_residual_rate(self, clutched):
        r = egorov_residuals(clutched, sym("exp(I*x)*arctan(xi)"))
        assert not r["exact"] and r["slope"] >= 0.9

    def test_rotation_is_exact(self):
        phi = build_ode_fio(HomogeneousHamiltonian("0.3", "0.3"), K=K)
        r = egorov_residuals(phi, sym("exp(I*x)*arctan(xi)"))
        assert r["exact"]

    def test_homomorphism(self, clutched):
        out = egorov_homomorphism_check(clutched, sym("exp(I*x)*arctan(xi)"), sym("cos(x)*xi/sqrt(1+xi**2)"), 2)
        assert out["passed"], out

    def test_commutator_transport(self, clutched):
        out = commutator_transport_check(clutched, sym("exp(I*x)*arctan(xi)"), sym("cos(x)*xi/sqrt(1+xi**2)"))
        assert out["passed"], out

    def test_too_small_mode_cut(self):
        ct = CanonicalTransformation(CircleDiffeo.shifted_sine(0.1), CircleDiffeo.identity())
        phi = build_clutched_fio(ct, K=48)
        with pytest.raises(ValueError, match="ladder"):
            egorov_ladder(phi, egorov_grid())
