"""Regularized trace, analytic index, canonical-trace asymptotics and the noncommutative residue.

All traces of truncated operators are taken over the trusted window
``|k| <= W`` of the coupling FIO, away from the mode cut where truncation
breaks the algebraic identities.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fio import FourierIntegralOperator, build_clutched_fio
from .formal_series import FormalSeries, SeriesFit, extrapolate_series, hbar_ladder
from .fio import CanonicalTransformation
from .symbols import OperatorMatrix, Symbol, full_symbol, quantize, scale_symbol

SMOOTHING_BLOCK = 16
SMOOTHING_TOL = 1e-6
INTEGRALITY_TOL = 1e-6
# Tr Op(a_hbar) ~ (CANONICAL_TRACE_NORMALIZATION / hbar) * int a dx dxi
CANONICAL_TRACE_NORMALIZATION = 1 / (2 * np.pi)


class MembershipError(ValueError):
    """``A - Phi^* B Phi`` is not smoothing at the required tolerance."""


class ResidueFitError(RuntimeError):
    """The symbol does not follow a classical expansion on the fitted modes."""


def windowed_trace(M: np.ndarray, window: int) -> complex:
    K = (M.shape[0] - 1) // 2
    return complex(np.trace(M[K - window: K + window + 1, K - window: K + window + 1]))


def outside_block_max(D: np.ndarray, window: int, block: int) -> float:
    K = (D.shape[0] - 1) // 2
    ks = np.abs(np.arange(-K, K + 1))
    inside_w = ks <= window
    sub = np.abs(D[np.ix_(inside_w, inside_w)])
    kw = ks[inside_w]
    mask = (kw[:, None] > block) | (kw[None, :] > block)
    return float(np.max(sub[mask], initial=0.0))


@dataclass
class TracePair:
    """Pair ``(A, B)`` coupled through ``Phi`` with ``A - Phi^* B Phi`` smoothing."""

    A: OperatorMatrix
    B: OperatorMatrix
    phi: FourierIntegralOperator
    block: int = SMOOTHING_BLOCK
    tol: float = SMOOTHING_TOL

    def coupling_defect(self) -> float:
        P = self.phi.matrix.entries
        D = self.A.entries - P.conj().T @ self.B.entries @ P
        return outside_block_max(D, self.phi.window, self.block)

    def check(self) -> None:
        d = self.coupling_defect()
        if d > self.tol:
            raise MembershipError(f"A - Phi^* B Phi has entries {d:.2e} outside modes |k| <= {self.block}")

    def __add__(self, other: "TracePair") -> "TracePair":
        return TracePair(self.A + other.A, self.B + other.B, self.phi, self.block, self.tol)

    def scale(self, c) -> "TracePair":
        return TracePair(self.A * c, self.B * c, self.phi, self.block, self.tol)

    def __matmul__(self, other: "TracePair") -> "TracePair":
        return TracePair(self.A @ other.A, self.B @ other.B, self.phi, self.block, self.tol)

    def norm(self) -> float:
        return max(self.A.norm(), self.B.norm())

    @classmethod
    def identity(cls, phi: FourierIntegralOperator) -> "TracePair":
        I = OperatorMatrix.identity(phi.K)
        return cls(I, I, phi)

    @classmethod
    def from_b(cls, phi: FourierIntegralOperator, B: OperatorMatrix, S: OperatorMatrix | None = None) -> "TracePair":
        """``A = Phi^* B Phi (+ S)``."""
        P = phi.matrix.entries
        A = P.conj().T @ B.entries @ P
        if S is not None:
            A = A + S.entries
        return cls(OperatorMatrix(A), B, phi)


def pair_commutator(p: TracePair, q: TracePair) -> TracePair:
    pq, qp = p @ q, q @ p
    return TracePair(pq.A - qp.A, pq.B - qp.B, p.phi, p.block, p.tol)


def regularized_trace(p: TracePair, *, check: bool = True) -> complex:
    """``Tr(A - Phi^* B Phi) - Tr(B (Id - Phi Phi^*))`` over the trusted window."""
    if check:
        p.check()
    P = p.phi.matrix.entries
    W = p.phi.window
    first = windowed_trace(p.A.entries - P.conj().T @ p.B.entries @ P, W)
    second = windowed_trace(p.B.entries - p.B.entries @ P @ P.conj().T, W)
    return first - second


def smoothing_matrix(K: int, rng: np.random.Generator, norm: float = 0.25, decay: float = 1.0) -> OperatorMatrix:
    """Random matrix with entries ``~ exp(-(|j| + |k|)/decay)`` scaled to operator norm ``norm``."""
    ks = np.abs(np.arange(-K, K + 1))
    env = np.exp(-(ks[:, None] + ks[None, :]) / decay)
    M = (rng.normal(size=env.shape) + 1j * rng.normal(size=env.shape)) * env
    M *= norm / np.linalg.norm(M, 2)
    return OperatorMatrix(M)


# ---------------------------------------------------------------------------
# index
# ---------------------------------------------------------------------------


@dataclass
class IndexReport:
    tau_id: complex
    route: str
    K: int
    window: int
    kernel: int | None = None
    cokernel: int | None = None
    topological_prediction: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def nearest_integer(self) -> int:
        return int(round(self.tau_id.real))

    @property
    def integrality_gap(self) -> float:
        return float(abs(self.tau_id - self.nearest_integer))

    @property
    def definitive(self) -> bool:
        return self.integrality_gap <= INTEGRALITY_TOL

    @property
    def match(self) -> bool:
        return self.definitive and self.topological_prediction is not None \
            and self.nearest_integer == self.topological_prediction

    def as_dict(self) -> dict:
        return {
            "tau_id_re": self.tau_id.real, "tau_id_im": self.tau_id.imag,
            "nearest_integer": self.nearest_integer, "integrality_gap": self.integrality_gap,
            "route": self.route, "K": self.K, "window": self.window,
            "kernel": self.kernel, "cokernel": self.cokernel,
            "topological_prediction": self.topological_prediction, "match": self.match, **self.extra,
        }


def kernel_cokernel(phi: FourierIntegralOperator, cut: float = 0.5) -> tuple[int, int]:
    """Count singular values below ``cut`` of ``Phi`` restricted to inner modes.

    Columns with ``|k| <= window/2`` give the kernel, rows the cokernel; the
    images of these modes stay inside the trusted window, so spurious null
    directions created at the mode cut do not enter.
    """
    P = phi.matrix.entries
    inner = np.abs(np.arange(-phi.K, phi.K + 1)) <= phi.window // 2
    ker = int(np.sum(np.linalg.svd(P[:, inner], compute_uv=False) < cut))
    coker = int(np.sum(np.linalg.svd(P[inner, :], compute_uv=False) < cut))
    return ker, coker


def analytic_index(phi: FourierIntegralOperator, *, oracle: bool = True) -> IndexReport:
    """``tau(Id, Id) = Tr(Id - Phi^* Phi) - Tr(Id - Phi Phi^*)`` with an SVD count as a cross-check."""
    tau = regularized_trace(TracePair.identity(phi), check=False)
    rep = IndexReport(tau, phi.route, phi.K, phi.window)
    if oracle:
        rep.kernel, rep.cokernel = kernel_cokernel(phi)
    return rep


def index_stability(phi: FourierIntegralOperator, rng: np.random.Generator, n: int = 3, norm: float = 0.4) -> dict:
    """Index after adding random smoothing perturbations of operator norm ``norm`` (< 1/2)."""
    base = analytic_index(phi, oracle=False)
    values = []
    for _ in range(n):
        pert = phi.perturbed(smoothing_matrix(phi.K, rng, norm))
        values.append(analytic_index(pert, oracle=False))
    return {"base": base.nearest_integer,
            "perturbed": [v.nearest_integer for v in values],
            "max_gap": max([base.integrality_gap] + [v.integrality_gap for v in values]),
            "stable": all(v.nearest_integer == base.nearest_integer for v in values)}


# ---------------------------------------------------------------------------
# canonical trace
# ---------------------------------------------------------------------------


def tau_ladder(phi: FourierIntegralOperator, support: float, levels: Sequence[int] | None = None) -> np.ndarray:
    """Ladder levels whose scaled symbols (negligible beyond ``|xi| = support``) fit in the window."""
    cap = int(phi.window / support)
    levels = [L for L in (levels or range(4, 65)) if L <= cap]
    if len(levels) < 8:
        raise ValueError(f"window {phi.window} too small for symbols supported in |xi| <= {support}")
    return hbar_ladder(levels)


def tau_can(phi: FourierIntegralOperator, a: Symbol, b: Symbol | None = None, N: int = 2, *,
            support: float = 6.0, hbars: Sequence[float] | None = None, coupled: bool = False) -> SeriesFit:
    """Expansion (from ``hbar^-1``) of ``hbar -> tau(Op(a_hbar), B_hbar)``.

    ``B_hbar`` is ``Op(b_hbar)`` when ``b`` is given, otherwise the exactly
    coupled ``Phi Op(a_hbar) Phi^*`` (when ``coupled``) or zero.  With
    ``B = 0`` the symbol must decay rapidly in ``xi`` so that ``Op(a_hbar)``
    is smoothing.
    """
    hbars = tau_ladder(phi, support) if hbars is None else np.asarray(hbars)
    samples = []
    P = phi.matrix.entries
    for h in hbars:
        A = quantize(scale_symbol(a, h), phi.K)
        if b is not None:
            B = quantize(scale_symbol(b, h), phi.K)
        elif coupled:
            B = OperatorMatrix(P @ A.entries @ P.conj().T)
        else:
            B = OperatorMatrix(np.zeros_like(A.entries))
        samples.append((h, regularized_trace(TracePair(A, B, phi), check=False)))
    return extrapolate_series(samples, N, min_power=-1)


def tau_can_commutator(phi: FourierIntegralOperator, a: Symbol, a2: Symbol, N: int = 2, *,
                       support: float = 6.0, hbars: Sequence[float] | None = None) -> SeriesFit:
    """Expansion of ``tau([p_a, p_a2])`` for the exactly coupled pairs built from ``a`` and ``a2``."""
    hbars = tau_ladder(phi, support) if hbars is None else np.asarray(hbars)
    P = phi.matrix.entries
    samples = []
    for h in hbars:
        pairs = []
        for s in (a, a2):
            A = quantize(scale_symbol(s, h), phi.K)
            pairs.append(TracePair(A, OperatorMatrix(P @ A.entries @ P.conj().T), phi))
        samples.append((h, regularized_trace(pair_commutator(*pairs), check=False)))
    return extrapolate_series(samples, N, min_power=-1)


def phase_space_integral(a: Symbol, xi_max: float = 12.0, n_x: int = 128, n_xi: int = 4801) -> complex:
    x = 2 * np.pi * np.arange(n_x) / n_x
    xi = np.linspace(-xi_max, xi_max, n_xi)
    vals = a(x[:, None], xi[None, :])
    return complex(np.trapezoid(vals.mean(axis=0), xi) * 2 * np.pi)


def measure_trace_normalization(a: Symbol, K: int = 256) -> dict:
    """Measure ``c`` in ``Tr Op(a_hbar) ~ (c/hbar) int a``; Gaussian-type ``a`` expected."""
    phi = build_clutched_fio(CanonicalTransformation.identity(), K=K)
    fit = tau_can(phi, a, N=1)
    c = fit.series[-1] / phase_space_integral(a)
    return {"c": complex(c), "expected": CANONICAL_TRACE_NORMALIZATION, "fit_residual": fit.max_residual}


# ---------------------------------------------------------------------------
# noncommutative residue
# ---------------------------------------------------------------------------


@dataclass
class ResidueResult:
    value: complex
    fit_residual: float
    order: int
    modes: tuple[int, int]

    def __float__(self):
        return float(self.value.real)


def wodzicki_residue(P: OperatorMatrix, order: int = 0, *, n_x: int = 64, margin: int = 24,
                     lowest_power: int = -6, lo_fraction: float = 0.1875, fit_tol: float = 1e-6) -> ResidueResult:
    """``(1/2pi) int (a_{-1}(x, +) + a_{-1}(x, -)) dx`` from the full symbol of ``P``.

    On each ray the tabulated symbol is fitted by ``sum_p c_p(x) |k|^p`` for
    ``p = order .. lowest_power`` over ``lo_fraction*K <= |k| <= K - margin``.

    Raises
    ------
    ResidueFitError
        If the fit misfit relative to the symbol size exceeds ``fit_tol``.
    """
    sym = full_symbol(P, n_x)
    K = P.K
    lo, hi = max(int(lo_fraction * K), 4), K - margin
    ks = np.arange(lo, hi + 1)
    powers = np.arange(order, lowest_power - 1, -1)
    scale = float(hi)
    V = (ks[:, None] / scale) ** powers[None, :]
    total = 0.0
    worst = 0.0
    for sign in (1, -1):
        vals = sym.at_modes(sign * ks).T  # (modes, x)
        coef, *_ = np.linalg.lstsq(V, vals, rcond=None)
        fit = V @ coef
        size = max(float(np.max(np.abs(vals))), 1.0)
        worst = max(worst, float(np.max(np.abs(fit - vals))) / size)
        c_minus1 = coef[list(powers).index(-1)] * scale if -1 in powers else np.zeros(n_x)
        total = total + np.mean(c_minus1)
    if worst > fit_tol:
        raise ResidueFitError(f"classical expansion misfit {worst:.2e} > {fit_tol:.1e}")
    return ResidueResult(complex(total), worst, order, (lo, hi))


# ---------------------------------------------------------------------------
# trace space
# ---------------------------------------------------------------------------


def trace_space_probe(phi: FourierIntegralOperator, *, compact: Symbol, classical: Symbol, classical_order: int,
                      commutator_pair: tuple[Symbol, Symbol], tol: float = 1e-6) -> dict:
    """Assertable facts about the pair of traces (canonical trace, residue).

    * both vanish on commutators;
    * independence: a compactly supported symbol has canonical trace != 0 and
      residue 0, while ``(A, A)`` over the identity FIO has canonical trace 0
      for every ``A`` although ``Res(A)`` may be nonzero;
    * the residue vanishes on the identity.
    """
    from .fio import CanonicalTransformation as CT

    ident = build_clutched_fio(CT.identity(), K=phi.K)
    K = phi.K
    a1, a2 = commutator_pair
    comm_can = tau_can_commutator(phi, a1, a2, N=1)
    res_comm = wodzicki_residue(extended_commutator(a1, a2, K), 1, margin=16)
    can_compact = tau_can(phi, compact, N=1)
    res_compact = wodzicki_residue(quantize(compact, K), 0)
    Pc = quantize(classical, K)
    res_classical = wodzicki_residue(Pc, classical_order)
    can_diag = tau_can(ident, classical, classical, N=1, hbars=hbar_ladder(range(4, 65)))
    res_identity = wodzicki_residue(OperatorMatrix.identity(K), 0)
    comm_can_max = max(abs(c) for c in comm_can.series.coeffs)
    report = {
        "canonical_trace_on_commutator": comm_can_max,
        "residue_on_commutator": abs(res_comm.value),
        "witness_compact": {"tau_can_leading": complex(can_compact.series[-1]), "residue": res_compact.value},
        "witness_diagonal": {"tau_can_max": max(abs(c) for c in can_diag.series.coeffs),
                             "residue": res_classical.value},
        "residue_identity": res_identity.value,
    }
    report["both_traces"] = comm_can_max <= tol and abs(res_comm.value) <= tol
    report["independent"] = (abs(report["witness_compact"]["tau_can_leading"]) > 1e-3
                             and abs(res_compact.value) <= tol
                             and report["witness_diagonal"]["tau_can_max"] <= tol
                             and abs(res_classical.value) > 1e-3)
    report["residue_identity_zero"] = abs(res_identity.value) <= tol
    return report


def random_classical_symbol(rng: np.random.Generator, order: int = 1, max_freq: int = 2) -> Symbol:
    """Random classical symbol of order ``order`` (0 or 1), band-limited in ``x``.

    Built from ``xi``, ``sqrt(s^2 + xi^2)``, ``xi / sqrt(s^2 + xi^2)`` and constants,
    all of which expand in integer powers of ``1/|xi|`` on each ray.
    """
    import sympy as sp

    from .symbols import X, XI

    expr = sp.Integer(0)
    for m in range(-max_freq, max_freq + 1):
        c = [sp.Float(round(v, 6)) for v in rng.normal(size=8) / (1 + abs(m))]
        s = sp.Float(round(rng.uniform(0.5, 1.5), 4))
        root = sp.sqrt(s ** 2 + XI ** 2)
        prof = (c[0] + sp.I * c[1]) * XI / root + (c[2] + sp.I * c[3])
        if order >= 1:
            prof += (c[4] + sp.I * c[5]) * XI + (c[6] + sp.I * c[7]) * root
        expr += sp.exp(sp.I * m * X) * prof
    return Symbol(expr, float(order))


def _diagonals_extended(a: Symbol, K: int, n_x: int) -> dict[int, np.ndarray]:
    """Diagonals ``m -> (hat a_m(k))_k`` of ``Op(a)`` in extended precision."""
    ks = np.arange(-K, K + 1).astype(np.longdouble)
    x = (2 * np.pi * np.arange(n_x) / n_x).astype(np.longdouble)
    vals = np.asarray(a._numeric(x[:, None], ks[None, :]), dtype=np.clongdouble) * np.ones((n_x, 1), np.longdouble)
    offsets = np.arange(-(n_x // 2), n_x - n_x // 2)
    phase = np.outer(offsets, np.arange(n_x)).astype(np.longdouble) * (2 * np.pi / n_x)
    E = (np.cos(phase) - 1j * np.sin(phase)).astype(np.clongdouble)
    coef = E @ vals / n_x
    return {int(m): coef[r] for r, m in enumerate(offsets)}


def _banded_product(A: dict, B: dict, n: int) -> dict:
    # (AB)[k + m + q, k] = A_m[k + q] * B_q[k]
    out: dict = {}
    for q, bq in B.items():
        for m, am in A.items():
            d = m + q
            k = np.arange(n)
            ok = (k + q >= 0) & (k + q < n) & (k + d >= 0) & (k + d < n)
            term = np.zeros(n, dtype=np.clongdouble)
            term[ok] = am[k[ok] + q] * bq[k[ok]]
            out[d] = out.get(d, 0) + term
    return out


def extended_commutator(a: Symbol, b: Symbol, K: int = 256, n_x: int = 32) -> OperatorMatrix:
    """``[Op(a), Op(b)]`` formed in extended precision and rounded once.

    In double precision the rounding of the order-``k`` entries leaves noise of
    size ``eps * k^2`` in the commutator, which the residue fit amplifies.
    ``a`` and ``b`` must be band-limited in ``x`` below ``n_x / 2``.
    """
    n = 2 * K + 1
    A, B = _diagonals_extended(a, K, n_x), _diagonals_extended(b, K, n_x)
    AB, BA = _banded_product(A, B, n), _banded_product(B, A, n)
    P = np.zeros((n, n), dtype=complex)
    cols = np.arange(n)
    for d in AB:
        rows = cols + d
        ok = (rows >= 0) & (rows < n)
        P[rows[ok], cols[ok]] = (AB[d] - BA[d])[ok].astype(complex)
    return OperatorMatrix(P)
