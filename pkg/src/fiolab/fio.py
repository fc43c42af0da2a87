"""Desk-scale elliptic Fourier integral operators on the circle.

Two constructions are provided:

* clutched: half-density pullbacks by circle diffeomorphisms and amplitude
  multipliers glued along the two Hardy components (positive and negative
  modes), mode 0 routed through a fixed rank-one projection, followed by an
  exact polar correction;
* ode: the time-1 solution of ``T' = A T`` with ``A`` the skew-adjoint part of
  ``Op(i H)`` for a one-homogeneous Hamiltonian ``H``.

The quantized conjugation map (Egorov) extracts the small-hbar expansion of the
symbol of ``Phi Op(a_hbar) Phi^*``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import sympy as sp
from scipy.integrate import solve_ivp

from .formal_series import FormalSeries, SeriesFit, hbar_ladder
from .symbols import (
    DEFAULT_K,
    N_X,
    XI,
    Grid,
    OperatorMatrix,
    Symbol,
    SymbolProduct,
    chi_expr,
    constant_symbol,
    full_symbol,
    lattice_to_grid,
    quantize,
    scale_symbol,
    star_symbolic,
    symbol_expansion,
)

TWO_PI = 2 * np.pi


class UnitarizationError(RuntimeError):
    """The polar correction did not leave a smoothing defect."""


class IntegratorToleranceError(RuntimeError):
    """The fixed-step integrator could not reach the unitarity tolerance."""


class EllipticityError(ValueError):
    """An amplitude vanishes somewhere on the verification grid."""


# ---------------------------------------------------------------------------
# circle diffeomorphisms
# ---------------------------------------------------------------------------


class CircleDiffeo:
    """Orientation-preserving circle diffeomorphism ``g(x) = x + p(x)``, ``p`` periodic.

    ``p`` is stored as a truncated Fourier series so that ``g``, ``g'`` and
    ``g''`` can be evaluated anywhere; the inverse is obtained by Newton
    iteration.
    """

    def __init__(self, coeffs: np.ndarray, name: str = "g", params: dict | None = None):
        self.coeffs = np.asarray(coeffs, complex)  # c_m for m = -M..M
        self.M = (len(self.coeffs) - 1) // 2
        self.name = name
        self.params = params or {}
        x = np.linspace(0, TWO_PI, 512, endpoint=False)
        if np.min(self.d1(x)) <= 0:
            raise ValueError(f"{name} is not an orientation-preserving diffeomorphism")

    # -- constructors ------------------------------------------------------------
    @classmethod
    def identity(cls) -> "CircleDiffeo":
        return cls(np.zeros(1), "id", {"family": "id"})

    @classmethod
    def shifted_sine(cls, eps: float, phase: float = 0.0) -> "CircleDiffeo":
        """``g(x) = x + eps * sin(x + phase)``; requires ``|eps| < 1``."""
        if abs(eps) >= 1:
            raise ValueError("|eps| must be < 1")
        c = np.zeros(3, complex)
        c[2] = eps * np.exp(1j * phase) / 2j
        c[0] = -eps * np.exp(-1j * phase) / 2j
        return cls(c, f"x+{eps:g}sin(x+{phase:g})", {"family": "sine", "eps": eps, "phase": phase})

    @classmethod
    def from_samples(cls, displacement: np.ndarray, name: str = "g", params: dict | None = None,
                     tol: float = 1e-15) -> "CircleDiffeo":
        """Interpolate periodic displacement samples on a uniform grid."""
        n = len(displacement)
        c = np.fft.fft(displacement) / n
        M = n // 2 - 1
        keep = np.concatenate([c[-M:], c[: M + 1]])
        big = np.nonzero(np.abs(keep) > tol)[0]
        if len(big):
            r = max(abs(big[0] - M), abs(big[-1] - M))
            keep = keep[M - r: M + r + 1]
        else:
            keep = np.zeros(1, complex)
        return cls(keep, name, params)

    @classmethod
    def flow(cls, h: Callable[[np.ndarray], np.ndarray], t: float = 1.0, n: int = 256,
             rtol: float = 1e-12, atol: float = 1e-13, name: str = "flow") -> "CircleDiffeo":
        """Time-``t`` flow of the vector field ``h(x) d/dx`` (independent ODE solve)."""
        x0 = TWO_PI * np.arange(n) / n
        sol = solve_ivp(lambda _, x: h(x), (0.0, t), x0, method="DOP853", rtol=rtol, atol=atol)
        if not sol.success:
            raise IntegratorToleranceError(sol.message)
        return cls.from_samples(sol.y[:, -1] - x0, name, {"family": "flow", "t": t})

    # -- evaluation ----------------------------------------------------------------
    def _series(self, x, d: int):
        x = np.asarray(x, float)
        m = np.arange(-self.M, self.M + 1)
        w = self.coeffs * (1j * m) ** d
        out = np.zeros(x.shape, complex)
        for mm, ww in zip(m, w):
            if ww != 0:
                out += ww * np.exp(1j * mm * x)
        return out.real

    def __call__(self, x):
        return np.asarray(x, float) + self._series(x, 0)

    def d1(self, x):
        return 1.0 + self._series(x, 1)

    def d2(self, x):
        return self._series(x, 2)

    def inverse(self, y, tol: float = 1e-14, max_iter: int = 60):
        y = np.asarray(y, float)
        x = y.copy()
        for _ in range(max_iter):
            step = (self(x) - y) / self.d1(x)
            x = x - step
            if np.max(np.abs(step), initial=0.0) < tol:
                break
        return x

    def is_identity(self, tol: float = 1e-12) -> bool:
        return bool(np.max(np.abs(self.coeffs)) < tol)

    def agrees_with(self, other: "CircleDiffeo", tol: float = 1e-12, n: int = 512) -> bool:
        x = TWO_PI * np.arange(n) / n
        return bool(np.max(np.abs(self(x) - other(x))) <= tol)

    def __repr__(self):
        return f"CircleDiffeo({self.name})"


@dataclass(frozen=True)
class CanonicalTransformation:
    """Homogeneous lifts ``(x, xi) -> (g(x), xi / g'(x))`` of ``g_plus`` (xi > 0) and ``g_minus`` (xi < 0)."""

    g_plus: CircleDiffeo
    g_minus: CircleDiffeo

    @classmethod
    def identity(cls) -> "CanonicalTransformation":
        g = CircleDiffeo.identity()
        return cls(g, g)

    @property
    def extends_to_zero_section(self) -> bool:
        return self.g_plus.agrees_with(self.g_minus)

    def _pick(self, xi):
        return np.where(np.asarray(xi) >= 0, 1, -1)

    def apply(self, x, xi):
        x, xi = np.broadcast_arrays(np.asarray(x, float), np.asarray(xi, float))
        out_x = np.where(xi >= 0, self.g_plus(x), self.g_minus(x))
        d = np.where(xi >= 0, self.g_plus.d1(x), self.g_minus.d1(x))
        return np.mod(out_x, TWO_PI), xi / d

    def inverse(self, y, eta):
        y, eta = np.broadcast_arrays(np.asarray(y, float), np.asarray(eta, float))
        xp, xm = self.g_plus.inverse(y), self.g_minus.inverse(y)
        x = np.where(eta >= 0, xp, xm)
        d = np.where(eta >= 0, self.g_plus.d1(xp), self.g_minus.d1(xm))
        return np.mod(x, TWO_PI), eta * d

    def symplectic_defect(self, n: int = 64, xi_values=(-3.0, -1.0, 1.0, 3.0), step: float = 1e-5) -> float:
        """Max ``|det J - 1|`` of the lifts, Jacobian by central differences."""
        x = TWO_PI * np.arange(n) / n
        worst = 0.0
        for xi in xi_values:
            xi_arr = np.full_like(x, xi)
            px = [self.apply(x + s, xi_arr) for s in (step, -step)]
            pxi = [self.apply(x, xi_arr + s) for s in (step, -step)]
            dX_dx = _unwrap_diff(px[0][0], px[1][0]) / (2 * step)
            dE_dx = (px[0][1] - px[1][1]) / (2 * step)
            dX_dxi = _unwrap_diff(pxi[0][0], pxi[1][0]) / (2 * step)
            dE_dxi = (pxi[0][1] - pxi[1][1]) / (2 * step)
            worst = max(worst, float(np.max(np.abs(dX_dx * dE_dxi - dX_dxi * dE_dx - 1))))
        return worst

    def transport(self, a, x, xi) -> np.ndarray:
        """``a o phi^{-1}`` at ``(x, xi)``."""
        y, eta = self.inverse(x, xi)
        return a(y, eta)

    def describe(self) -> dict:
        return {"g_plus": self.g_plus.name, "g_minus": self.g_minus.name,
                "extends_to_zero_section": self.extends_to_zero_section}


def _unwrap_diff(a, b):
    d = a - b
    return (d + np.pi) % TWO_PI - np.pi


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------


def pullback_matrix(g: CircleDiffeo, K: int, n_fft: int | None = None) -> OperatorMatrix:
    """Mode matrix of ``(U_g u)(x) = u(g^{-1} x) |(g^{-1})'(x)|^{1/2}``."""
    if g.is_identity():
        return OperatorMatrix.identity(K)
    n = 2 * K + 1
    if n_fft is None:
        n_fft = 1 << int(math.ceil(math.log2(4 * n)))
    y = TWO_PI * np.arange(n_fft) / n_fft
    ginv = g.inverse(y)
    weight = np.sqrt(1.0 / g.d1(ginv))
    ks = np.arange(-K, K + 1)
    cols = np.exp(1j * np.outer(ginv, ks)) * weight[:, None]
    coef = np.fft.fft(cols, axis=0) / n_fft
    rows = np.mod(ks, n_fft)
    return OperatorMatrix(coef[rows, :])


def hardy_projections(K: int):
    ks = np.arange(-K, K + 1)
    return (ks >= 1).astype(float), (ks <= -1).astype(float), (ks == 0).astype(float)


def polar_correction(P: np.ndarray, floor: float = 0.25):
    """``P f(P^*P)`` with ``f = t^{-1/2}`` above ``floor`` and 1 below.

    Singular values above ``sqrt(floor)`` become exactly one; smaller ones
    (kernel directions) are left untouched.  Returns the corrected matrix and
    the number of directions below the floor.
    """
    w, V = np.linalg.eigh(P.conj().T @ P)
    f = np.where(w > floor, 1.0 / np.sqrt(np.clip(w, floor, None)), 1.0)
    return P @ (V * f) @ V.conj().T, int(np.sum(w <= floor))


@dataclass(frozen=True)
class DefectProfile:
    """Size of ``Id - Phi Phi^*`` and ``Id - Phi^* Phi`` inside the trusted window."""

    k0: int
    window: int
    max_outside: float
    threshold: float

    @property
    def ok(self) -> bool:
        return self.max_outside <= self.threshold

    def as_dict(self) -> dict:
        return {"k0": self.k0, "window": self.window, "max_outside": self.max_outside,
                "threshold": self.threshold, "ok": self.ok}


def defect_profile(M: OperatorMatrix, window: int, threshold: float = 1e-8) -> DefectProfile:
    """Smallest ``k0`` such that defect entries with a mode in ``k0 < |k| <= window`` are below ``threshold``."""
    K = M.K
    P = M.entries
    I = np.eye(2 * K + 1)
    sel = slice(K - window, K + window + 1)
    worst = np.zeros(window + 1)
    for D in (I - P @ P.conj().T, I - P.conj().T @ P):
        B = np.abs(D[sel, sel])
        ks = np.abs(np.arange(-window, window + 1))
        level = np.maximum(ks[:, None], ks[None, :])
        np.maximum.at(worst, level.ravel(), B.ravel())
    big = np.nonzero(worst > threshold)[0]
    k0 = int(big[-1]) if len(big) else 0
    outside = float(np.max(worst[k0 + 1:], initial=0.0))
    return DefectProfile(k0, window, outside, threshold)


@dataclass
class FourierIntegralOperator:
    """Truncated elliptic FIO together with its canonical and principal-symbol data.

    ``window`` is the largest mode ``|k|`` that truncation effects at the mode
    cut are known not to reach; traces and defect profiles are taken there.
    """

    matrix: OperatorMatrix
    canonical: CanonicalTransformation
    b_plus: Symbol
    b_minus: Symbol
    route: str
    window: int
    meta: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.matrix.K

    def defect_profile(self, threshold: float = 1e-8) -> DefectProfile:
        return defect_profile(self.matrix, self.window, threshold)

    def perturbed(self, S: OperatorMatrix) -> "FourierIntegralOperator":
        return FourierIntegralOperator(self.matrix + S, self.canonical, self.b_plus, self.b_minus,
                                       self.route, self.window, dict(self.meta, perturbed=True))


def trusted_window(ct: CanonicalTransformation, K: int, spread: int = 16) -> int:
    """Modes ``|k| <= window`` whose images stay clear of the mode cut."""
    x = TWO_PI * np.arange(512) / 512
    ratio = 1.0
    for g in (ct.g_plus, ct.g_minus):
        d = g.d1(x)
        ratio = min(ratio, float(np.min(d)), float(1 / np.max(d)))
    return max(int(K * ratio * ratio) - spread, 1)


def _check_elliptic(b: Symbol, label: str, n: int = 64) -> float:
    x = TWO_PI * np.arange(n) / n
    xi = np.concatenate([-np.logspace(0, 6, 40), np.logspace(0, 6, 40)])
    m = float(np.min(np.abs(b(x[:, None], xi[None, :]))))
    if m <= 1e-8:
        raise EllipticityError(f"amplitude {label} vanishes (min |b| = {m:.2e})")
    return m


def build_clutched_fio(ct: CanonicalTransformation, b_plus: Symbol | None = None, b_minus: Symbol | None = None,
                       K: int = DEFAULT_K, *, unitarize: bool = True, defect_threshold: float = 1e-8,
                       window: int | None = None) -> FourierIntegralOperator:
    """``Pi+ Op(b+) U_{g+} Pi+ + Pi- Op(b-) U_{g-} Pi- + e0 e0^*``, then polar-corrected.

    Raises
    ------
    EllipticityError
        If an amplitude vanishes on the grid.
    UnitarizationError
        If after the polar correction the defect is not confined to low modes.
    """
    b_plus = b_plus or constant_symbol(1)
    b_minus = b_minus or constant_symbol(1)
    min_b = min(_check_elliptic(b_plus, "b_plus"), _check_elliptic(b_minus, "b_minus"))
    pp, pm, p0 = hardy_projections(K)
    plus = quantize(b_plus, K).entries @ pullback_matrix(ct.g_plus, K).entries
    minus = quantize(b_minus, K).entries @ pullback_matrix(ct.g_minus, K).entries
    P = pp[:, None] * plus * pp[None, :] + pm[:, None] * minus * pm[None, :] + np.diag(p0).astype(complex)
    small = 0
    if unitarize:
        P, small = polar_correction(P)
    if window is None:
        window = trusted_window(ct, K)
    fio = FourierIntegralOperator(OperatorMatrix(P), ct, b_plus, b_minus, "clutched", window,
                                  {"mode0": "e0 e0^*", "min_amplitude": min_b, "unitarized": unitarize,
                                   "small_singular_directions": small})
    if unitarize:
        prof = fio.defect_profile(defect_threshold)
        fio.meta["defect"] = prof.as_dict()
        if not prof.ok or prof.k0 > window // 2:
            raise UnitarizationError(f"defect not confined to low modes: {prof.as_dict()}")
    return fio


# ---------------------------------------------------------------------------
# Hamiltonian route
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HomogeneousHamiltonian:
    """``H(x, xi) = chi(xi) h_+(x) |xi|`` on ``xi > 0`` and ``chi(xi) h_-(x) |xi|`` on ``xi < 0``.

    ``h_plus`` and ``h_minus`` are expressions in ``x`` (strings or sympy).
    """

    h_plus: object
    h_minus: object

    def _expr(self, which):
        from .symbols import parse_symbol_expr

        e = self.h_plus if which > 0 else self.h_minus
        return parse_symbol_expr(e) if isinstance(e, str) else sp.sympify(e)

    def profile(self, which: int) -> Callable:
        from .symbols import X

        f = sp.lambdify(X, self._expr(which), "numpy")
        return lambda x: np.broadcast_to(np.asarray(f(np.asarray(x, float)), float), np.shape(x)).copy()

    def symbol(self) -> Symbol:
        from .symbols import X

        hp, hm = self._expr(1), self._expr(-1)
        expr = chi_expr() * sp.Piecewise((hp * XI, XI >= 0), (-hm * XI, True))
        return Symbol(expr, 1.0, name=f"H[{hp}|{hm}]")

    def homogeneity_defect(self, lambdas=(2.0, 3.5, 10.0), n: int = 64) -> float:
        H = self.symbol()
        x = TWO_PI * np.arange(n) / n
        xi = np.concatenate([-np.linspace(1, 20, 20), np.linspace(1, 20, 20)])
        base = H(x[:, None], xi[None, :])
        return max(float(np.max(np.abs(H(x[:, None], lam * xi[None, :]) - lam * base))) for lam in lambdas)

    def canonical_transformation(self) -> CanonicalTransformation:
        """Time-1 maps matching ``exp(Op(i H))``: flow of ``-h_+ d/dx`` and of ``+h_- d/dx``."""
        hp, hm = self.profile(1), self.profile(-1)
        gp = CircleDiffeo.flow(lambda x: -hp(x), name=f"flow(-{self._expr(1)})")
        gm = CircleDiffeo.flow(lambda x: hm(x), name=f"flow(+{self._expr(-1)})")
        return CanonicalTransformation(gp, gm)


def rk4_step_matrix(Z: np.ndarray) -> np.ndarray:
    """Classical fourth-order Runge-Kutta step for the linear ODE, ``sum_{j<=4} Z^j / j!``."""
    I = np.eye(Z.shape[0], dtype=complex)
    Z2 = Z @ Z
    return I + Z + Z2 / 2 + Z2 @ Z / 6 + Z2 @ Z2 / 24


def build_ode_fio(H: HomogeneousHamiltonian, K: int = DEFAULT_K, steps: int | None = None, *,
                  tol: float = 1e-9, max_doublings: int = 24) -> FourierIntegralOperator:
    """Time-1 solution of ``T' = A T``, ``T(0) = Id``, with fixed-step RK4.

    ``A`` is the skew-adjoint part of ``Op(i H)``; it has the same principal
    symbol and makes ``T(1)`` unitary up to the integrator error.  The number of
    steps is a power of two (``steps`` is rounded up), and the ``2^p`` steps are
    applied by repeated squaring of the one-step matrix.  The step count is
    doubled until ``||T^* T - Id|| <= tol``.
    """
    G = quantize(H.symbol(), K).entries * 1j
    A = (G - G.conj().T) / 2
    norm = np.linalg.norm(A, 2)
    if steps is None:
        p = max(int(math.ceil(math.log2(max(norm, 1e-300) / 0.02))), 4) if norm > 0 else 0
    else:
        p = int(math.ceil(math.log2(max(steps, 1))))
    I = np.eye(2 * K + 1, dtype=complex)
    for _ in range(max_doublings):
        T = rk4_step_matrix(A / 2**p)
        for _ in range(p):
            T = T @ T
        defect = float(np.linalg.norm(T.conj().T @ T - I, 2))
        if defect <= tol:
            break
        p += 1
    else:
        raise IntegratorToleranceError(f"unitarity defect {defect:.2e} > {tol:.1e}")
    ct = H.canonical_transformation()
    one = constant_symbol(1)
    fio = FourierIntegralOperator(OperatorMatrix(T), ct, one, one, "ode", trusted_window(ct, K),
                                  {"steps": 2**p, "unitarity_defect": defect, "generator_norm": float(norm),
                                   "hamiltonian": H.symbol().name})
    fio.meta["defect"] = fio.defect_profile().as_dict()
    return fio


# ---------------------------------------------------------------------------
# Egorov map
# ---------------------------------------------------------------------------


def egorov_grid(n_x: int = N_X) -> Grid:
    """``x`` uniform; ``xi in {-3, -2, 2, 3}`` (clear of the cutoff transition, on every ladder lattice)."""
    return Grid(TWO_PI * np.arange(n_x) / n_x, np.array([-3.0, -2.0, 2.0, 3.0]))


def egorov_ladder(fio: FourierIntegralOperator, grid: Grid, levels: Sequence[int] | None = None,
                  spread: int = 8) -> np.ndarray:
    """Ladder levels ``L`` whose lattice points ``xi * L`` stay inside the trusted window."""
    top = float(np.max(np.abs(grid.xi)))
    cap = int((fio.window - spread) / top)
    levels = [L for L in (levels or range(16, 65)) if L <= cap]
    if len(levels) < 8:
        raise ValueError(f"mode cut K={fio.K} leaves only {len(levels)} ladder levels")
    return hbar_ladder(levels)


def _conjugated(fio: FourierIntegralOperator, a, h: float) -> OperatorMatrix:
    P = fio.matrix.entries
    return OperatorMatrix(P @ quantize(scale_symbol(a, h), fio.K).entries @ P.conj().T)


def egorov_conjugate(fio: FourierIntegralOperator, a, N: int = 2, *, grid: Grid | None = None,
                     hbars: Sequence[float] | None = None, jobs: int = 1) -> SeriesFit:
    """Expansion of ``sigma(Phi Op(a_hbar) Phi^*)(x, xi/hbar)`` in hbar on the grid."""
    grid = grid or egorov_grid()
    hbars = egorov_ladder(fio, grid) if hbars is None else np.asarray(hbars)
    return symbol_expansion(lambda h: _conjugated(fio, a, h), grid, N, hbars, jobs=jobs)


def egorov_residuals(fio: FourierIntegralOperator, a, *, grid: Grid | None = None,
                     hbars: Sequence[float] | None = None, exact_tol: float = 1e-9) -> dict:
    """Sup over the grid of ``|sigma(Phi Op(a_h) Phi^*) - a o phi^{-1}|`` per hbar, and its log-log slope."""
    grid = grid or egorov_grid()
    hbars = egorov_ladder(fio, grid) if hbars is None else np.asarray(hbars)
    target = fio.canonical.transport(a, grid.x[:, None], grid.xi[None, :])
    res = []
    for h in hbars:
        sym = full_symbol(_conjugated(fio, a, h), len(grid.x))
        res.append(float(np.max(np.abs(lattice_to_grid(sym, grid, h) - target))))
    res = np.array(res)
    slope = float(np.polyfit(np.log(hbars), np.log(np.maximum(res, 1e-300)), 1)[0])
    # conjugation reproduces the transported symbol at round-off level; no rate to measure
    exact = bool(np.max(res) < exact_tol)
    return {"hbars": hbars.tolist(), "residuals": res.tolist(), "slope": slope, "exact": exact}


def _series_sum(parts: list[FormalSeries], N: int) -> FormalSeries:
    coeffs = [0] * (N + 1)
    for i, s in enumerate(parts):
        for j in range(N + 1 - i):
            coeffs[i + j] = coeffs[i + j] + s[j]
    return FormalSeries(coeffs, 0, N)


def egorov_homomorphism_check(fio: FourierIntegralOperator, a, b, N: int = 2, *, grid: Grid | None = None,
                              hbars: Sequence[float] | None = None, tol: float = 1e-5, jobs: int = 1) -> dict:
    """Compare ``Phi~(a * b)`` with ``Phi~(a) * Phi~(b)`` order by order.

    The left side conjugates each closed-form coefficient of ``a * b``
    separately and recombines the series.  The right side is the expansion of
    the symbol of ``(Phi Op(a_h) Phi^*)(Phi Op(b_h) Phi^*)``, whose symbol series
    is the star product of the two conjugated series.
    """
    grid = grid or egorov_grid()
    hbars = egorov_ladder(fio, grid) if hbars is None else np.asarray(hbars)
    ab = star_symbolic(a, b, N)
    lhs_parts = [egorov_conjugate(fio, ab[n], N - n, grid=grid, hbars=hbars, jobs=jobs) for n in range(N + 1)]
    lhs = _series_sum([p.series for p in lhs_parts], N)

    def product(h):
        return _conjugated(fio, a, h) @ _conjugated(fio, b, h)

    rhs_fit = symbol_expansion(product, grid, N, hbars, jobs=jobs)
    defects = [float(np.max(np.abs(lhs[n] - rhs_fit.series[n]))) for n in range(N + 1)]
    resid = max([rhs_fit.max_residual] + [p.max_residual for p in lhs_parts])
    return {"defects": defects, "fit_residual": resid, "tol": tol, "passed": all(d <= tol for d in defects)}


def commutator_transport_check(fio: FourierIntegralOperator, a, b, *, grid: Grid | None = None,
                               hbars: Sequence[float] | None = None, tol: float = 1e-5) -> dict:
    """hbar^1 coefficient of ``Phi~([a, b]_*)`` against that of ``[Phi~ a, Phi~ b]_*``."""
    grid = grid or egorov_grid()
    hbars = egorov_ladder(fio, grid) if hbars is None else np.asarray(hbars)
    ab, ba = star_symbolic(a, b, 1), star_symbolic(b, a, 1)
    c1 = SymbolProduct.of(ab[1]) - SymbolProduct.of(ba[1])
    lhs = egorov_conjugate(fio, c1, 0, grid=grid, hbars=hbars).series[0]

    def comm(h):
        A, B = _conjugated(fio, a, h), _conjugated(fio, b, h)
        return A @ B - B @ A

    rhs = symbol_expansion(comm, grid, 1, hbars).series[1]
    d = float(np.max(np.abs(lhs - rhs)))
    return {"defect": d, "tol": tol, "passed": d <= tol}
