"""Exact truncated Weyl algebra with base coefficients, and lifted Hamiltonian derivations.

Elements are polynomials in

* base variables ``x_1..x_n, xi_1..xi_n`` (commuting, ungraded),
* fiber generators ``X_1..X_n, Y_1..Y_n`` (``X`` = position, ``Y`` = momentum
  generator, degree 1 each) with ``[Y_k, X_l] = i*hbar*delta_kl``,
* ``hbar`` (degree 2, negative powers allowed),

stored in fully symmetrized (Weyl) normal form, so that the product of two
elements is the Moyal product of their normal-form symbols.  Coefficients are
exact Gaussian rationals.

Sign conventions (fixed by requiring the flatness of Taylor lifts and the
Lie-algebra identity for lifted derivations, both checked exactly in the
test-suite):

* algebra-valued forms act on sections by the right adjoint action
  ``rho(u) w = [w, u]``;
* the vector part of a lifted derivation is ``(1/i) {H_0, .}`` with
  ``{f, g} = d_xi f d_x g - d_x f d_xi g``;
* the induced product on base polynomials is the opposite Moyal product,
  ``x * xi - xi * x = i*hbar``.
"""
from __future__ import annotations

import itertools
import math
import random as _random
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Tuple

import sympy as sp
from sympy.polys.domains import QQ, QQ_I

DEFAULT_CAP = 8

Coeff = type(QQ_I(0, 0))
Key = Tuple[int, ...]  # base exps (2n), fiber exps (2n), hbar power

ZERO = QQ_I(0, 0)
ONE = QQ_I(1, 0)
IMAG = QQ_I(0, 1)
HALF_I = QQ_I(0, QQ(1, 2))


class DimensionMismatchError(ValueError):
    """Operands live over different dimensions or degree caps."""


def to_coeff(c) -> Coeff:
    """Convert an int, Fraction, Gaussian rational or sympy number to an exact coefficient."""
    if isinstance(c, Coeff):
        return c
    if isinstance(c, int):
        return QQ_I(c, 0)
    if isinstance(c, complex):
        raise TypeError("floating-point coefficients are not exact")
    expr = sp.nsimplify(c) if isinstance(c, float) else sp.sympify(c)
    if expr.has(sp.Float):
        raise TypeError("floating-point coefficients are not exact")
    return QQ_I.from_sympy(sp.expand(expr))


def _inv_fact(n: int):
    return QQ(1, math.factorial(n))


def _falling(e: int, k: int) -> int:
    out = 1
    for j in range(k):
        out *= e - j
    return out


def base_symbols(n: int):
    xs = sp.symbols(f"x1:{n + 1}")
    xis = sp.symbols(f"xi1:{n + 1}")
    return list(xs), list(xis)


def fiber_symbols(n: int):
    """Commutative stand-ins for the fiber generators in normal form."""
    X = sp.symbols(f"X1:{n + 1}")
    Y = sp.symbols(f"Y1:{n + 1}")
    return list(X), list(Y)


HBAR = sp.Symbol("hbar")


# ---------------------------------------------------------------------------
# Base polynomials (Hamiltonians)
# ---------------------------------------------------------------------------


class PolynomialHamiltonian:
    """Polynomial in commuting ``x_l, xi_l`` with coefficients polynomial in ``hbar``.

    Terms are keyed by ``(a_1..a_n, b_1..b_n, k)`` for ``x^a xi^b hbar^k``.
    """

    __slots__ = ("terms", "dim")

    def __init__(self, terms: Mapping[Key, object], dim: int):
        clean: Dict[Key, Coeff] = {}
        for key, c in terms.items():
            key = tuple(int(e) for e in key)
            if len(key) != 2 * dim + 1:
                raise DimensionMismatchError(f"key {key} does not match dim {dim}")
            if min(key) < 0:
                raise ValueError("Hamiltonians are polynomials in hbar (no negative powers)")
            c = to_coeff(c)
            if c:
                clean[key] = clean.get(key, ZERO) + c
        self.terms = {k: v for k, v in clean.items() if v}
        self.dim = dim

    @classmethod
    def from_expr(cls, expr, dim: int) -> "PolynomialHamiltonian":
        """Build from a sympy expression in ``x1.., xi1.., hbar``."""
        xs, xis = base_symbols(dim)
        gens = xs + xis + [HBAR]
        poly = sp.Poly(sp.expand(sp.sympify(expr)), *gens)
        return cls({m: QQ_I.from_sympy(c) for m, c in poly.terms()}, dim)

    @classmethod
    def constant(cls, c, dim: int) -> "PolynomialHamiltonian":
        return cls({(0,) * (2 * dim + 1): c}, dim)

    def to_expr(self):
        xs, xis = base_symbols(self.dim)
        gens = xs + xis + [HBAR]
        return sp.Add(*[QQ_I.to_sympy(c) * sp.Mul(*[g**e for g, e in zip(gens, k)]) for k, c in self.terms.items()])

    def __repr__(self) -> str:
        return f"PolynomialHamiltonian({self.to_expr()}, dim={self.dim})"

    def __eq__(self, other) -> bool:
        return isinstance(other, PolynomialHamiltonian) and self.dim == other.dim and self.terms == other.terms

    def __add__(self, other: "PolynomialHamiltonian") -> "PolynomialHamiltonian":
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, ZERO) + c
        return PolynomialHamiltonian(out, self.dim)

    def __neg__(self) -> "PolynomialHamiltonian":
        return PolynomialHamiltonian({k: -c for k, c in self.terms.items()}, self.dim)

    def __sub__(self, other: "PolynomialHamiltonian") -> "PolynomialHamiltonian":
        return self + (-other)

    def scale(self, c) -> "PolynomialHamiltonian":
        c = to_coeff(c)
        return PolynomialHamiltonian({k: c * v for k, v in self.terms.items()}, self.dim)

    def at_hbar_zero(self) -> "PolynomialHamiltonian":
        return PolynomialHamiltonian({k: c for k, c in self.terms.items() if k[-1] == 0}, self.dim)

    def deriv(self, var: int, order: int = 1) -> "PolynomialHamiltonian":
        """Derivative in base variable ``var`` (0..n-1 for x, n..2n-1 for xi)."""
        out = {}
        for k, c in self.terms.items():
            e = k[var]
            if e < order:
                continue
            nk = list(k)
            nk[var] = e - order
            out[tuple(nk)] = c * _falling(e, order)
        return PolynomialHamiltonian(out, self.dim)

    def is_zero(self) -> bool:
        return not self.terms

    def star(self, other: "PolynomialHamiltonian") -> "PolynomialHamiltonian":
        """Induced Moyal product on base polynomials, ``x*xi - xi*x = i hbar``."""
        n = self.dim
        if other.dim != n:
            raise DimensionMismatchError("dimension mismatch")
        out: Dict[Key, Coeff] = {}
        for ka, ca in self.terms.items():
            for kb, cb in other.terms.items():
                # alpha: d_x on left, d_xi on right; beta: d_xi on left, d_x on right
                ranges = [range(min(ka[l], kb[n + l]) + 1) for l in range(n)]
                ranges += [range(min(ka[n + l], kb[l]) + 1) for l in range(n)]
                for ab in itertools.product(*ranges):
                    alpha, beta = ab[:n], ab[n:]
                    s = sum(ab)
                    c = ca * cb * HALF_I**s
                    if sum(beta) % 2:
                        c = -c
                    key = list(ka[i] + kb[i] for i in range(2 * n + 1))
                    for l in range(n):
                        c *= (
                            _falling(ka[l], alpha[l]) * _falling(kb[n + l], alpha[l])
                            * _falling(ka[n + l], beta[l]) * _falling(kb[l], beta[l])
                        )
                        c *= _inv_fact(alpha[l]) * _inv_fact(beta[l])
                        key[l] -= alpha[l] + beta[l]
                        key[n + l] -= alpha[l] + beta[l]
                    key[-1] += s
                    key = tuple(key)
                    out[key] = out.get(key, ZERO) + c
        return PolynomialHamiltonian(out, n)

    def star_commutator_over_hbar(self, other: "PolynomialHamiltonian") -> "PolynomialHamiltonian":
        """``(1/hbar)(H*K - K*H)``; always a polynomial in hbar."""
        diff = self.star(other) - other.star(self)
        out = {}
        for k, c in diff.terms.items():
            if k[-1] < 1:
                raise AssertionError("commutator has an hbar^0 part")
            out[k[:-1] + (k[-1] - 1,)] = c
        return PolynomialHamiltonian(out, self.dim)


# ---------------------------------------------------------------------------
# Weyl algebra elements
# ---------------------------------------------------------------------------


class WeylElement:
    """Exact truncated element of the Weyl algebra with polynomial base coefficients.

    Parameters
    ----------
    terms : mapping
        ``(a_1..a_n, b_1..b_n, p_1..p_n, q_1..q_n, k) -> coefficient`` for
        ``x^a xi^b X^p Y^q hbar^k`` (normal-form symbol).  Short keys
        ``(p_1..p_n, q_1..q_n, k)`` without base exponents are accepted too.
    dim : int
    degree_cap : int
        Terms of weight ``|p| + |q| + 2k`` above the cap are dropped.

    Attributes
    ----------
    truncated : bool
        Whether any term was dropped because of the cap, here or in an operand.
    """

    __slots__ = ("terms", "dim", "degree_cap", "truncated")

    def __init__(self, terms: Mapping[Key, object], dim: int, degree_cap: int = DEFAULT_CAP, truncated: bool = False):
        n = dim
        out: Dict[Key, Coeff] = {}
        for key, c in terms.items():
            key = tuple(int(e) for e in key)
            if len(key) == 2 * n + 1:
                key = (0,) * (2 * n) + key
            if len(key) != 4 * n + 1:
                raise DimensionMismatchError(f"key {key} does not match dim {n}")
            if min(key[:-1]) < 0:
                raise ValueError("negative exponent of a generator")
            c = to_coeff(c)
            if not c:
                continue
            if sum(key[2 * n: 4 * n]) + 2 * key[-1] > degree_cap:
                truncated = True
                continue
            out[key] = out.get(key, ZERO) + c
        self.terms = {k: v for k, v in out.items() if v}
        self.dim = n
        self.degree_cap = degree_cap
        self.truncated = truncated

    # -- constructors -----------------------------------------------------------
    @classmethod
    def _raw(cls, terms: Dict[Key, Coeff], dim: int, cap: int, truncated: bool) -> "WeylElement":
        """Build from already-clean keys, applying only the cap."""
        obj = cls.__new__(cls)
        n = dim
        kept = {}
        for k, c in terms.items():
            if not c:
                continue
            if sum(k[2 * n: 4 * n]) + 2 * k[-1] > cap:
                truncated = True
                continue
            kept[k] = c
        obj.terms = kept
        obj.dim = dim
        obj.degree_cap = cap
        obj.truncated = truncated
        return obj

    @classmethod
    def zero(cls, dim: int, degree_cap: int = DEFAULT_CAP) -> "WeylElement":
        return cls({}, dim, degree_cap)

    @classmethod
    def scalar(cls, c, dim: int, degree_cap: int = DEFAULT_CAP) -> "WeylElement":
        return cls({(0,) * (4 * dim + 1): c}, dim, degree_cap)

    @classmethod
    def generator(cls, name: str, index: int, dim: int, degree_cap: int = DEFAULT_CAP) -> "WeylElement":
        """``name`` in ``{"X", "Y", "x", "xi"}``; ``index`` starts at 1."""
        offset = {"x": 0, "xi": dim, "X": 2 * dim, "Y": 3 * dim}[name]
        if not 1 <= index <= dim:
            raise ValueError(f"index {index} outside 1..{dim}")
        key = [0] * (4 * dim + 1)
        key[offset + index - 1] = 1
        return cls({tuple(key): 1}, dim, degree_cap)

    @classmethod
    def hbar(cls, power: int, dim: int, degree_cap: int = DEFAULT_CAP) -> "WeylElement":
        key = [0] * (4 * dim) + [power]
        return cls({tuple(key): 1}, dim, degree_cap)

    @classmethod
    def from_expr(cls, expr, dim: int, degree_cap: int = DEFAULT_CAP) -> "WeylElement":
        """Build from a sympy expression in ``x1.., xi1.., X1.., Y1.., hbar`` (normal-form symbol)."""
        xs, xis = base_symbols(dim)
        X, Y = fiber_symbols(dim)
        gens = xs + xis + X + Y
        expr = sp.expand(sp.sympify(expr))
        terms: Dict[Key, Coeff] = {}
        for term in sp.Add.make_args(expr):
            k = 0
            rest = []
            for f in sp.Mul.make_args(term):
                b, e = f.as_base_exp()
                if b == HBAR:
                    k += int(e)
                else:
                    rest.append(f)
            poly = sp.Poly(sp.Mul(*rest), *gens)
            for m, c in poly.terms():
                key = tuple(m) + (k,)
                terms[key] = terms.get(key, ZERO) + QQ_I.from_sympy(c)
        return cls(terms, dim, degree_cap)

    def to_expr(self):
        xs, xis = base_symbols(self.dim)
        X, Y = fiber_symbols(self.dim)
        gens = xs + xis + X + Y + [HBAR]
        return sp.Add(*[QQ_I.to_sympy(c) * sp.Mul(*[g**e for g, e in zip(gens, k)]) for k, c in self.terms.items()])

    # -- basic protocol ---------------------------------------------------------
    def __repr__(self) -> str:
        flag = ", truncated" if self.truncated else ""
        return f"WeylElement({self.to_expr()}, dim={self.dim}, cap={self.degree_cap}{flag})"

    def __eq__(self, other) -> bool:
        if isinstance(other, WeylElement):
            return self.dim == other.dim and self.terms == other.terms
        if isinstance(other, (int, Coeff)):
            return self.terms == WeylElement.scalar(other, self.dim, self.degree_cap).terms
        return NotImplemented

    def __hash__(self):
        return hash((self.dim, frozenset(self.terms.items())))

    def is_zero(self) -> bool:
        return not self.terms

    def weight(self, key: Key) -> int:
        n = self.dim
        return sum(key[2 * n: 4 * n]) + 2 * key[-1]

    def weights(self) -> set:
        return {self.weight(k) for k in self.terms}

    def min_fiber_degree(self) -> int | None:
        n = self.dim
        return min((sum(k[2 * n: 4 * n]) for k in self.terms), default=None)

    def below(self, weight: int) -> "WeylElement":
        """Terms of weight at most ``weight``."""
        return WeylElement._raw({k: c for k, c in self.terms.items() if self.weight(k) <= weight}, self.dim, self.degree_cap, self.truncated)

    def _compat(self, other: "WeylElement") -> None:
        if not isinstance(other, WeylElement):
            raise TypeError(f"expected WeylElement, got {type(other).__name__}")
        if other.dim != self.dim:
            raise DimensionMismatchError(f"dimensions {self.dim} and {other.dim} differ")
        if other.degree_cap != self.degree_cap:
            raise DimensionMismatchError(f"degree caps {self.degree_cap} and {other.degree_cap} differ")

    # -- linear structure -------------------------------------------------------
    def __add__(self, other: "WeylElement") -> "WeylElement":
        if isinstance(other, (int, Coeff)):
            other = WeylElement.scalar(other, self.dim, self.degree_cap)
        self._compat(other)
        out = dict(self.terms)
        for k, c in other.terms.items():
            out[k] = out.get(k, ZERO) + c
        return WeylElement._raw(out, self.dim, self.degree_cap, self.truncated or other.truncated)

    __radd__ = __add__

    def __neg__(self) -> "WeylElement":
        return WeylElement._raw({k: -c for k, c in self.terms.items()}, self.dim, self.degree_cap, self.truncated)

    def __sub__(self, other: "WeylElement") -> "WeylElement":
        if isinstance(other, (int, Coeff)):
            other = WeylElement.scalar(other, self.dim, self.degree_cap)
        return self + (-other)

    def __rsub__(self, other) -> "WeylElement":
        return (-self) + other

    def scale(self, c) -> "WeylElement":
        c = to_coeff(c)
        return WeylElement._raw({k: c * v for k, v in self.terms.items()}, self.dim, self.degree_cap, self.truncated)

    def shift_hbar(self, s: int) -> "WeylElement":
        """Multiply by ``hbar**s``."""
        return WeylElement._raw({k[:-1] + (k[-1] + s,): c for k, c in self.terms.items()}, self.dim, self.degree_cap, self.truncated)

    def __mul__(self, other) -> "WeylElement":
        if isinstance(other, WeylElement):
            return weyl_mul(self, other)
        return self.scale(other)

    def __rmul__(self, other) -> "WeylElement":
        return self.scale(other)

    # -- derivatives --------------------------------------------------------------
    def deriv(self, var: int) -> "WeylElement":
        """Partial derivative in position ``var`` of the key (base or fiber)."""
        out: Dict[Key, Coeff] = {}
        for k, c in self.terms.items():
            e = k[var]
            if e == 0:
                continue
            nk = k[:var] + (e - 1,) + k[var + 1:]
            out[nk] = out.get(nk, ZERO) + c * e
        return WeylElement._raw(out, self.dim, self.degree_cap, self.truncated)

    def d_base(self, j: int) -> "WeylElement":
        """Derivative in base variable ``j`` (0..n-1: x, n..2n-1: xi)."""
        return self.deriv(j)

    def d_fiber(self, j: int) -> "WeylElement":
        """Derivative in fiber generator ``j`` (0..n-1: X, n..2n-1: Y)."""
        return self.deriv(2 * self.dim + j)

    def at_fiber_zero(self) -> "WeylElement":
        n = self.dim
        return WeylElement._raw({k: c for k, c in self.terms.items() if not any(k[2 * n: 4 * n])}, n, self.degree_cap, self.truncated)

    def to_hamiltonian(self) -> PolynomialHamiltonian:
        """Base polynomial of a fiber-free element with nonnegative hbar powers."""
        n = self.dim
        out = {}
        for k, c in self.terms.items():
            if any(k[2 * n: 4 * n]):
                raise ValueError("element depends on the fiber generators")
            out[k[: 2 * n] + (k[-1],)] = c
        return PolynomialHamiltonian(out, n)


def weyl_mul(a: WeylElement, b: WeylElement) -> WeylElement:
    """Moyal product of normal-form symbols, realizing ``[Y_k, X_l] = i hbar delta_kl``.

    ``f o g = sum (i hbar/2)^(|al|+|be|) (-1)^|be| / (al! be!) (dY^al dX^be f)(dX^al dY^be g)``;
    base variables multiply commutatively.
    """
    a._compat(b)
    n, cap = a.dim, a.degree_cap
    xo, yo = 2 * n, 3 * n
    out: Dict[Key, Coeff] = {}
    wa = {k: a.weight(k) for k in a.terms}
    wb = {k: b.weight(k) for k in b.terms}
    truncated = a.truncated or b.truncated
    for ka, ca in a.terms.items():
        for kb, cb in b.terms.items():
            if wa[ka] + wb[kb] > cap:
                truncated = True
                continue
            base_key = [x + y for x, y in zip(ka, kb)]
            ranges = [range(min(ka[yo + l], kb[xo + l]) + 1) for l in range(n)]
            ranges += [range(min(ka[xo + l], kb[yo + l]) + 1) for l in range(n)]
            for ab in itertools.product(*ranges):
                s = sum(ab)
                c = ca * cb
                if s:
                    c = c * HALF_I**s
                    key = list(base_key)
                    for l in range(n):
                        al, be = ab[l], ab[n + l]
                        if al or be:
                            c *= (
                                _falling(ka[yo + l], al) * _falling(kb[xo + l], al)
                                * _falling(ka[xo + l], be) * _falling(kb[yo + l], be)
                            )
                            c *= _inv_fact(al) * _inv_fact(be)
                            if be % 2:
                                c = -c
                            key[xo + l] -= al + be
                            key[yo + l] -= al + be
                    key[-1] += s
                    key = tuple(key)
                else:
                    key = tuple(base_key)
                out[key] = out.get(key, ZERO) + c
    return WeylElement._raw(out, n, cap, truncated)


def commutator(a: WeylElement, b: WeylElement) -> WeylElement:
    return weyl_mul(a, b) - weyl_mul(b, a)


# ---------------------------------------------------------------------------
# Taylor lift and lifted derivations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HDecomposition:
    H0: PolynomialHamiltonian
    H1: WeylElement
    Htilde: WeylElement
    H0_lift: WeylElement


def _embed(H: PolynomialHamiltonian, cap: int, hbar_shift: int = 0) -> WeylElement:
    n = H.dim
    zeros = (0,) * (2 * n)
    return WeylElement({k[: 2 * n] + zeros + (k[-1] + hbar_shift,): c for k, c in H.terms.items()}, n, cap)


def taylor_lift(H: PolynomialHamiltonian, cap: int = DEFAULT_CAP, hbar_shift: int = 0) -> WeylElement:
    """``sum X^al Y^be / (al! be!) d_x^al d_xi^be H`` (= ``H(x + X, xi + Y)``), times ``hbar**hbar_shift``."""
    n = H.dim
    out: Dict[Key, Coeff] = {}
    truncated = False
    for k, c in H.terms.items():
        base = k[: 2 * n]
        for split in itertools.product(*[range(e + 1) for e in base]):
            # split = exponents moved from the base variable onto the fiber generator
            coef = c
            for e, s in zip(base, split):
                coef = coef * math.comb(e, s)
            key = tuple(e - s for e, s in zip(base, split)) + tuple(split) + (k[-1] + hbar_shift,)
            if sum(split) + 2 * key[-1] > cap:
                truncated = True
                continue
            out[key] = out.get(key, ZERO) + coef
    return WeylElement._raw(out, n, cap, truncated)


def build_H_decomposition(H: PolynomialHamiltonian, degree_cap: int = DEFAULT_CAP) -> HDecomposition:
    """Return ``H_0 = H|_{hbar=0}``, the linear part ``H_1`` and the full Taylor lift ``H~``."""
    n = H.dim
    H0 = H.at_hbar_zero()
    H1 = WeylElement.zero(n, degree_cap)
    for l in range(n):
        H1 = H1 + weyl_mul(_embed(H0.deriv(l), degree_cap), WeylElement.generator("X", l + 1, n, degree_cap))
        H1 = H1 + weyl_mul(_embed(H0.deriv(n + l), degree_cap), WeylElement.generator("Y", l + 1, n, degree_cap))
    return HDecomposition(H0, H1, taylor_lift(H, degree_cap), _embed(H0, degree_cap))


def trace_hessian(H0: PolynomialHamiltonian) -> PolynomialHamiltonian:
    """``sum_l d^2 H_0 / dx_l dxi_l``."""
    n = H0.dim
    out = PolynomialHamiltonian({}, n)
    for l in range(n):
        out = out + H0.deriv(l).deriv(n + l)
    return out


@dataclass(frozen=True)
class LiftedDerivation:
    """Derivation ``w -> V(w) + [w, weyl_part]`` of algebra-valued sections.

    ``vector_part[j]`` is the base-polynomial coefficient of ``d/dz_j`` for the
    base coordinates ``z = (x_1..x_n, xi_1..xi_n)``.
    """

    vector_part: Tuple[WeylElement, ...]
    weyl_part: WeylElement
    variant: str
    hamiltonian: PolynomialHamiltonian

    @property
    def dim(self) -> int:
        return self.weyl_part.dim

    @property
    def degree_cap(self) -> int:
        return self.weyl_part.degree_cap

    def vector_apply(self, w: WeylElement) -> WeylElement:
        out = WeylElement.zero(w.dim, w.degree_cap)
        for j, coef in enumerate(self.vector_part):
            if coef.is_zero():
                continue
            out = out + weyl_mul(coef, w.d_base(j))
        return out

    def __call__(self, w: WeylElement) -> WeylElement:
        return self.vector_apply(w) + commutator(w, self.weyl_part)

    def apply_form(self, form: Dict[int, WeylElement]) -> Dict[int, WeylElement]:
        """Action on algebra-valued 1-forms ``sum_j dz_j f_j`` (Lie derivative plus adjoint part)."""
        n2 = 2 * self.dim
        out = {j: self(form[j]) for j in range(n2)}
        for z in range(n2):
            vz = self.vector_part[z]
            for y in range(n2):
                dv = vz.d_base(y)
                if not dv.is_zero():
                    out[y] = out[y] + weyl_mul(dv, form[z])
        return out


def _lift(H: PolynomialHamiltonian, degree_cap: int, corrected: bool) -> LiftedDerivation:
    n = H.dim
    dec = build_H_decomposition(H, degree_cap)
    H0 = dec.H0
    # (1/hbar)(H~ - H0 - H1): lift with hbar^-1 directly so the cap applies after division
    a = taylor_lift(H, degree_cap, hbar_shift=-1)
    a = a - _embed(H0, degree_cap, -1) - dec.H1.shift_hbar(-1)
    if corrected:
        a = a + _embed(trace_hessian(H0), degree_cap).scale(QQ(1, 2))
    minus_i = QQ_I(0, -1)
    vec = []
    for l in range(n):  # d/dx_l coefficient: (1/i) d_xi H0
        vec.append(_embed(H0.deriv(n + l), degree_cap).scale(minus_i))
    for l in range(n):  # d/dxi_l coefficient: -(1/i) d_x H0
        vec.append(_embed(H0.deriv(l), degree_cap).scale(IMAG))
    return LiftedDerivation(tuple(vec), a, "D" if corrected else "D0", H)


def lift_D(H: PolynomialHamiltonian, degree_cap: int = DEFAULT_CAP) -> LiftedDerivation:
    """Lifted derivation including the half trace-of-Hessian correction."""
    return _lift(H, degree_cap, corrected=True)


def lift_D0(H: PolynomialHamiltonian, degree_cap: int = DEFAULT_CAP) -> LiftedDerivation:
    """Lifted derivation without the correction; it preserves flat sections."""
    return _lift(H, degree_cap, corrected=False)


def derivation_bracket(D1: LiftedDerivation, D2: LiftedDerivation, w: WeylElement) -> WeylElement:
    return D1(D2(w)) - D2(D1(w))


# ---------------------------------------------------------------------------
# Connection
# ---------------------------------------------------------------------------


def connection_form(dim: int, degree_cap: int = DEFAULT_CAP) -> Dict[int, WeylElement]:
    """Components of the algebra-valued connection 1-form, keyed by base coordinate.

    ``dxi_l`` carries ``(i/hbar) X_l`` and ``dx_l`` carries ``-(i/hbar) Y_l``; with the
    right adjoint action the connection is ``d + dxi (-d_Y) + dx (-d_X)``.
    """
    n = dim
    A = {}
    for l in range(n):
        A[n + l] = WeylElement.generator("X", l + 1, n, degree_cap).shift_hbar(-1).scale(IMAG)
        A[l] = WeylElement.generator("Y", l + 1, n, degree_cap).shift_hbar(-1).scale(QQ_I(0, -1))
    return A


def connection_apply(w: WeylElement) -> Dict[int, WeylElement]:
    A = connection_form(w.dim, w.degree_cap)
    return {j: w.d_base(j) + commutator(w, A[j]) for j in range(2 * w.dim)}


def form_label(j: int, dim: int) -> str:
    return f"dx{j + 1}" if j < dim else f"dxi{j - dim + 1}"


def _exact_scalar_form(f: PolynomialHamiltonian, cap: int) -> Dict[int, WeylElement]:
    return {j: _embed(f.deriv(j), cap) for j in range(2 * f.dim)}


@dataclass
class ComponentResult:
    component: str
    form_level: bool
    on_test: bool
    commutator_form: str
    expected_form: str


@dataclass
class FedosovReport:
    """Exact verification of ``[D, nabla]`` for both lifted derivations.

    ``form_level`` compares the algebra-valued commutator form
    ``L_V A - da + [A, a]`` with its expected value; ``on_test`` compares
    ``D(nabla w) - nabla(D w)`` with the action of the expected form on the test
    element, through weight ``checked_weight``.
    """

    hamiltonian: str
    test: str
    results: Dict[str, list] = field(default_factory=dict)
    checked_weight: int = 0
    overflow: bool = False

    @property
    def passed(self) -> bool:
        return all(r.form_level and r.on_test for rs in self.results.values() for r in rs)

    def as_dict(self) -> dict:
        return {
            "hamiltonian": self.hamiltonian,
            "test": self.test,
            "checked_weight": self.checked_weight,
            "overflow": self.overflow,
            "passed": self.passed,
            "components": {
                v: [r.__dict__ for r in rs] for v, rs in self.results.items()
            },
        }


def commutator_form(D: LiftedDerivation) -> Dict[int, WeylElement]:
    """Algebra-valued 1-form ``E`` with ``[D, nabla] = rho(E)``."""
    n, cap = D.dim, D.degree_cap
    A = connection_form(n, cap)
    a = D.weyl_part
    E = {}
    for y in range(2 * n):
        acc = commutator(A[y], a) - a.d_base(y)
        for z in range(2 * n):
            dv = D.vector_part[z].d_base(y)
            if not dv.is_zero():
                acc = acc + weyl_mul(dv, A[z])
        E[y] = acc
    return E


def expected_commutator_form(H: PolynomialHamiltonian, variant: str, degree_cap: int = DEFAULT_CAP) -> Dict[int, WeylElement]:
    n = H.dim
    if variant == "D0":
        return {j: WeylElement.zero(n, degree_cap) for j in range(2 * n)}
    return {j: e.scale(QQ(-1, 2)) for j, e in _exact_scalar_form(trace_hessian(H.at_hbar_zero()), degree_cap).items()}


def fedosov_connection_check(H: PolynomialHamiltonian, test: WeylElement) -> FedosovReport:
    """Check ``[D_H, nabla] = -1/2 d(tr Hess H_0)`` and ``[D0_H, nabla] = 0`` exactly.

    The commutator form is compared exactly, component by component.  On the test
    element both sides are compared through weight ``cap - 1``; the connection
    lowers the weight by one, so higher terms are not determined by the truncated
    data.  ``overflow`` is set when the test element itself has been truncated or
    has terms above the checkable weight.
    """
    if H.dim != test.dim:
        raise DimensionMismatchError("Hamiltonian and test element dimensions differ")
    n, cap = test.dim, test.degree_cap
    checked = cap - 1
    report = FedosovReport(str(H.to_expr()), str(test.to_expr()), checked_weight=checked)
    report.overflow = test.truncated or any(wt > checked for wt in test.weights())
    nabla_w = connection_apply(test)
    for variant, D in (("D", lift_D(H, cap)), ("D0", lift_D0(H, cap))):
        E = commutator_form(D)
        E_exp = expected_commutator_form(H, variant, cap)
        lhs = D.apply_form(nabla_w)
        Dw = D(test)
        nabla_Dw = connection_apply(Dw)
        rows = []
        for j in range(2 * n):
            on_test_lhs = (lhs[j] - nabla_Dw[j]).below(checked)
            on_test_rhs = commutator(test, E_exp[j]).below(checked)
            rows.append(ComponentResult(
                form_label(j, n),
                (E[j] - E_exp[j]).is_zero(),
                on_test_lhs == on_test_rhs,
                str(E[j].to_expr()),
                str(E_exp[j].to_expr()),
            ))
        report.results[variant] = rows
    return report


def lie_algebra_check(H: PolynomialHamiltonian, K: PolynomialHamiltonian, w: WeylElement) -> tuple[bool, PolynomialHamiltonian]:
    """Check ``[D_H, D_K] w = D_G w`` with ``G = (1/hbar)(H*K - K*H)`` (exact through the cap)."""
    cap = w.degree_cap
    G = H.star_commutator_over_hbar(K)
    DH, DK, DG = lift_D(H, cap), lift_D(K, cap), lift_D(G, cap)
    lhs = derivation_bracket(DH, DK, w)
    return lhs == DG(w), G


# ---------------------------------------------------------------------------
# random data for property tests
# ---------------------------------------------------------------------------


def random_element(rng: _random.Random, dim: int, *, n_terms: int = 4, max_base: int = 2, max_fiber: int = 3,
                   max_hbar: int = 1, degree_cap: int = DEFAULT_CAP, coeff_range: int = 3) -> WeylElement:
    terms = {}
    for _ in range(n_terms):
        base = [0] * (2 * dim)
        for _ in range(rng.randint(0, max_base)):
            base[rng.randrange(2 * dim)] += 1
        fib = [0] * (2 * dim)
        for _ in range(rng.randint(0, max_fiber)):
            fib[rng.randrange(2 * dim)] += 1
        k = rng.randint(0, max_hbar)
        c = QQ_I(rng.randint(-coeff_range, coeff_range), rng.randint(-coeff_range, coeff_range))
        terms[tuple(base + fib + [k])] = c
    return WeylElement(terms, dim, degree_cap)


def random_hamiltonian(rng: _random.Random, dim: int, *, n_terms: int = 4, max_degree: int = 4,
                       max_hbar: int = 1, coeff_range: int = 3) -> PolynomialHamiltonian:
    terms = {}
    for _ in range(n_terms):
        e = [0] * (2 * dim)
        for _ in range(rng.randint(0, max_degree)):
            e[rng.randrange(2 * dim)] += 1
        k = rng.randint(0, max_hbar)
        terms[tuple(e + [k])] = QQ_I(rng.randint(-coeff_range, coeff_range), rng.randint(-coeff_range, coeff_range))
    return PolynomialHamiltonian(terms, dim)
