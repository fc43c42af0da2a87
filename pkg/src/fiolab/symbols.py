"""Classical symbols on the cylinder T*S^1 and their Fourier-truncated quantization.

Quantization convention (left / Kohn-Nirenberg on the circle)::

    (Op(a) u)(x) = sum_k a(x, k) u_k e^{ikx},   Op(a)[j, k] = hat{a}_{j-k}(k)

so that the complete symbol of a mode matrix ``P`` is recovered exactly by
``a(x, k) = sum_j P[j, k] e^{i(j-k)x}``.  Under this convention composition
expands as ``a * b = sum_n (hbar/i)^n / n! d_xi^n a d_x^n b``.
"""
from __future__ import annotations

import ast
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Sequence

import numpy as np
import sympy as sp

X, XI = sp.symbols("x xi", real=True)

N_X = 128
DEFAULT_K = 256
XI_STEP = 0.5


# ---------------------------------------------------------------------------
# cutoff and expression grammar
# ---------------------------------------------------------------------------

def _smooth_step(t):
    f0 = sp.exp(-1 / t)
    f1 = sp.exp(-1 / (1 - t))
    return f0 / (f0 + f1)


def chi_expr(xi=XI):
    """Smooth cutoff: 0 for |xi| <= 1/2, 1 for |xi| >= 1."""
    a = sp.Abs(xi)
    return sp.Piecewise(
        (sp.Integer(0), a <= sp.Rational(1, 2)),
        (sp.Integer(1), a >= 1),
        (_smooth_step(2 * a - 1), True),
    )


GRAMMAR_NAMES = {
    "x": X,
    "xi": XI,
    "chi": chi_expr,
    "sin": sp.sin,
    "cos": sp.cos,
    "exp": sp.exp,
    "arctan": sp.atan,
    "atan": sp.atan,
    "tanh": sp.tanh,
    "sqrt": sp.sqrt,
    "abs": sp.Abs,
    "I": sp.I,
    "pi": sp.pi,
}

_ALLOWED_NODES = (
    ast.Expression, ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Load, ast.Constant,
    ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd,
)


class SymbolSyntaxError(ValueError):
    pass


def parse_symbol_expr(text: str) -> sp.Expr:
    """Parse a symbol expression of the configuration grammar.

    Grammar: arithmetic (``+ - * / **``) on numbers, the variables ``x`` and
    ``xi``, the constants ``I`` and ``pi`` and the functions ``sin cos exp
    arctan tanh sqrt abs chi``.  ``chi(xi)`` is the smooth cutoff vanishing
    for ``|xi| <= 1/2`` and equal to 1 for ``|xi| >= 1``.
    """
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise SymbolSyntaxError(f"cannot parse symbol {text!r}: {exc.msg}") from None
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise SymbolSyntaxError(f"{type(node).__name__} not allowed in symbol {text!r}")
        if isinstance(node, ast.Name) and node.id not in GRAMMAR_NAMES:
            raise SymbolSyntaxError(f"unknown name {node.id!r} in symbol {text!r}")
        if isinstance(node, ast.Call) and not isinstance(node.func, ast.Name):
            raise SymbolSyntaxError(f"only plain function calls allowed in {text!r}")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise SymbolSyntaxError(f"bad literal {node.value!r} in {text!r}")
    expr = eval(compile(tree, "<symbol>", "eval"), {"__builtins__": {}}, dict(GRAMMAR_NAMES))
    return sp.sympify(expr)


# ---------------------------------------------------------------------------
# symbols
# ---------------------------------------------------------------------------

class Symbol:
    """Order-tagged function of ``(x, xi)`` on T*S^1.

    A symbol is given either by a sympy expression in :data:`X`, :data:`XI`
    (closed-form derivatives) or by a plain callable.  ``vanishes_near_zero``
    records that the symbol is identically zero in a neighbourhood of the zero
    section.
    """

    def __init__(self, expr=None, order: float = 0.0, *, func: Callable | None = None,
                 vanishes_near_zero: bool = False, name: str | None = None):
        if expr is None and func is None:
            raise ValueError("need an expression or a callable")
        self.expr = sp.sympify(expr) if expr is not None else None
        self._func = func
        self.order = float(order)
        self.vanishes_near_zero = vanishes_near_zero
        self.name = name or (str(self.expr) if self.expr is not None else "<callable>")
        self._derivs: dict[tuple[int, int], Symbol] = {}

    @classmethod
    def parse(cls, text: str, order: float = 0.0, **kw) -> "Symbol":
        return cls(parse_symbol_expr(text), order, name=text, **kw)

    @cached_property
    def _numeric(self):
        if self.expr is None:
            return self._func
        return sp.lambdify((X, XI), self.expr, modules="numpy")

    def __call__(self, x, xi) -> np.ndarray:
        x, xi = np.broadcast_arrays(np.asarray(x, float), np.asarray(xi, float))
        with np.errstate(all="ignore"):
            out = self._numeric(x, xi)
        out = np.array(np.broadcast_to(np.asarray(out, dtype=complex), x.shape))
        if self.vanishes_near_zero:
            out[~np.isfinite(out) & (np.abs(xi) < 1)] = 0
        return out

    def on_grid(self, grid: "Grid") -> np.ndarray:
        return self(grid.x[:, None], grid.xi[None, :])

    def deriv(self, p: int = 0, q: int = 0) -> "Symbol":
        """``d_x^p d_xi^q`` of the symbol (closed form)."""
        if p == 0 and q == 0:
            return self
        if self.expr is None:
            raise ValueError("closed-form derivatives need a sympy expression")
        key = (p, q)
        if key not in self._derivs:
            e = self.expr
            if p:
                e = sp.diff(e, X, p)
            if q:
                e = sp.diff(e, XI, q)
            # derivatives of abs(xi) are used away from xi = 0 only
            e = e.replace(lambda t: isinstance(t, sp.DiracDelta), lambda t: sp.Integer(0))
            self._derivs[key] = Symbol(e, self.order - q, vanishes_near_zero=self.vanishes_near_zero)
        return self._derivs[key]

    def _combine(self, other, op, order):
        if not isinstance(other, Symbol):
            other = Symbol(sp.sympify(other), 0.0)
        if self.expr is None or other.expr is None:
            fa, fb = self, other
            return Symbol(func=lambda x, xi: op(fa(x, xi), fb(x, xi)), order=order)
        return Symbol(op(self.expr, other.expr), order,
                      vanishes_near_zero=self.vanishes_near_zero and other.vanishes_near_zero)

    def __add__(self, other):
        o = other.order if isinstance(other, Symbol) else 0.0
        return self._combine(other, lambda a, b: a + b, max(self.order, o))

    __radd__ = __add__

    def __sub__(self, other):
        o = other.order if isinstance(other, Symbol) else 0.0
        return self._combine(other, lambda a, b: a - b, max(self.order, o))

    def __mul__(self, other):
        o = other.order if isinstance(other, Symbol) else 0.0
        out = self._combine(other, lambda a, b: a * b, self.order + o)
        if isinstance(other, Symbol):
            out.vanishes_near_zero = self.vanishes_near_zero or other.vanishes_near_zero
        else:
            out.vanishes_near_zero = self.vanishes_near_zero
        return out

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1

    def __repr__(self):
        return f"Symbol({self.name}, order={self.order:g})"


def constant_symbol(c) -> Symbol:
    return Symbol(sp.sympify(c), 0.0)


class _ScaledSymbol(Symbol):
    """``a(x, hbar * xi)`` evaluated through the compiled base symbol."""

    def __init__(self, base: Symbol, hbar: float):
        self.base = base
        self.hbar = float(hbar)
        self._func = lambda x, xi: base(x, self.hbar * np.asarray(xi))
        self.order = base.order
        self.vanishes_near_zero = getattr(base, "vanishes_near_zero", False)
        self.name = f"{getattr(base, 'name', 'symbol')}|h={hbar:g}"
        self._derivs = {}

    @cached_property
    def expr(self):
        if getattr(self.base, "expr", None) is None:
            return None
        return self.base.expr.subs(XI, self.hbar * XI)

    @cached_property
    def _numeric(self):
        return self._func


def scale_symbol(a: Symbol, hbar: float) -> Symbol:
    """``a_hbar(x, xi) = a(x, hbar * xi)``."""
    if hbar == 1:
        return a
    return _ScaledSymbol(a, hbar)


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """Verification grid: uniform ``x`` on the circle, a uniform ``xi`` set."""

    x: np.ndarray
    xi: np.ndarray

    @classmethod
    def make(cls, n_x: int = N_X, xi_max: float = 3.5, xi_step: float = XI_STEP,
             xi_min: float | None = None, both_signs: bool = True) -> "Grid":
        x = 2 * np.pi * np.arange(n_x) / n_x
        if xi_min is None:
            xi = np.arange(-xi_max, xi_max + xi_step / 2, xi_step) if both_signs \
                else np.arange(0, xi_max + xi_step / 2, xi_step)
        else:
            pos = np.arange(xi_min, xi_max + xi_step / 2, xi_step)
            xi = np.concatenate([-pos[::-1], pos]) if both_signs else pos
        return cls(x, np.round(xi / xi_step) * xi_step)

    @property
    def shape(self):
        return (len(self.x), len(self.xi))

    @property
    def xi_step(self) -> float:
        return float(np.min(np.diff(self.xi))) if len(self.xi) > 1 else 1.0


def dx_spectral(values: np.ndarray, p: int = 1) -> np.ndarray:
    """``p``-th x-derivative of grid values (axis 0) by FFT."""
    if p == 0:
        return values
    n = values.shape[0]
    m = np.fft.fftfreq(n, 1.0 / n)
    if n % 2 == 0 and p % 2 == 1:
        m[n // 2] = 0
    f = np.fft.fft(values, axis=0)
    shape = (n,) + (1,) * (values.ndim - 1)
    return np.fft.ifft(f * ((1j * m) ** p).reshape(shape), axis=0)


_FD_WEIGHTS: dict[tuple[int, int], np.ndarray] = {}


def _fd_weights(q: int, half: int) -> np.ndarray:
    key = (q, half)
    if key not in _FD_WEIGHTS:
        nodes = np.arange(-half, half + 1, dtype=float)
        V = np.vander(nodes, increasing=True).T
        rhs = np.zeros(len(nodes))
        rhs[q] = float(np.prod(np.arange(1, q + 1)))
        _FD_WEIGHTS[key] = np.linalg.solve(V, rhs)
    return _FD_WEIGHTS[key]


def dxi_fd(values: np.ndarray, step: float, q: int = 1, half: int = 4) -> np.ndarray:
    """``q``-th xi-derivative (axis 1) by a centred ``2*half+1`` point stencil.

    The outermost ``half`` columns on either side are returned as NaN.
    """
    if q == 0:
        return values
    w = _fd_weights(q, half)
    out = np.full(values.shape, np.nan, dtype=complex)
    n = values.shape[1]
    acc = np.zeros((values.shape[0], n - 2 * half), dtype=complex)
    for i, wi in enumerate(w):
        acc += wi * values[:, i:n - 2 * half + i]
    out[:, half:n - half] = acc / step**q
    return out


# ---------------------------------------------------------------------------
# operator matrices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OperatorMatrix:
    """Dense matrix on Fourier modes ``-K..K`` (row = output mode)."""

    entries: np.ndarray
    K: int = field(default=0)

    def __post_init__(self):
        n = self.entries.shape[0]
        if self.entries.shape != (n, n) or n % 2 == 0:
            raise ValueError("operator matrix must be square of odd size 2K+1")
        object.__setattr__(self, "K", (n - 1) // 2)

    @classmethod
    def identity(cls, K: int) -> "OperatorMatrix":
        return cls(np.eye(2 * K + 1, dtype=complex))

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.K, self.K + 1)

    def index(self, mode: int) -> int:
        return mode + self.K

    @property
    def H(self) -> "OperatorMatrix":
        return OperatorMatrix(self.entries.conj().T)

    def trace(self) -> complex:
        return complex(np.trace(self.entries))

    def __matmul__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return OperatorMatrix(self.entries @ other.entries)

    def __add__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return OperatorMatrix(self.entries + other.entries)

    def __sub__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        return OperatorMatrix(self.entries - other.entries)

    def __mul__(self, s) -> "OperatorMatrix":
        return OperatorMatrix(self.entries * s)

    __rmul__ = __mul__

    def norm(self) -> float:
        return float(np.linalg.norm(self.entries, 2))


def quantize(a: Symbol, K: int = DEFAULT_K, n_x: int = N_X) -> OperatorMatrix:
    """Mode matrix of ``Op(a)``: entry ``(j, k)`` is Fourier coefficient ``j-k`` of ``a(., k)``.

    Fourier coefficients of order ``|j-k| >= n_x/2`` are neglected.
    """
    ks = np.arange(-K, K + 1)
    x = 2 * np.pi * np.arange(n_x) / n_x
    vals = a(x[:, None], ks[None, :].astype(float))
    coef = np.fft.fft(vals, axis=0) / n_x
    offsets = np.fft.fftfreq(n_x, 1.0 / n_x).astype(int)
    if n_x % 2 == 0:
        offsets[n_x // 2] = -n_x // 2
    n = 2 * K + 1
    P = np.zeros((n, n), dtype=complex)
    cols = np.arange(n)
    for r, m in enumerate(offsets):
        rows = cols + m
        ok = (rows >= 0) & (rows < n)
        P[rows[ok], cols[ok]] = coef[r, ok]
    return OperatorMatrix(P)


@dataclass(frozen=True)
class LatticeSymbol:
    """Complete symbol tabulated on ``x`` grid times the integer lattice ``-K..K``."""

    x: np.ndarray
    values: np.ndarray

    @property
    def K(self) -> int:
        return (self.values.shape[1] - 1) // 2

    def at_modes(self, ks) -> np.ndarray:
        return self.values[:, np.asarray(ks, int) + self.K]


def full_symbol(P: OperatorMatrix, n_x: int = N_X) -> LatticeSymbol:
    """``a(x, k) = sum_j P[j, k] e^{i(j-k)x}`` on an ``n_x`` point grid.

    Diagonals with offset outside ``[-n_x/2, n_x/2)`` are ignored.
    """
    K = P.K
    n = 2 * K + 1
    x = 2 * np.pi * np.arange(n_x) / n_x
    offsets = np.arange(-n_x // 2, n_x - n_x // 2)
    cols = np.arange(n)
    D = np.zeros((len(offsets), n), dtype=complex)
    for r, m in enumerate(offsets):
        rows = cols + m
        ok = (rows >= 0) & (rows < n)
        D[r, ok] = P.entries[rows[ok], cols[ok]]
    E = np.exp(1j * np.outer(x, offsets))
    return LatticeSymbol(x, E @ D)


def lattice_to_grid(sym: LatticeSymbol, grid: Grid, hbar: float) -> np.ndarray:
    """Values at ``(x, xi)`` of the unscaled symbol ``xi -> sym(x, xi/hbar)``."""
    ks = grid.xi / hbar
    kr = np.rint(ks)
    if np.max(np.abs(ks - kr)) > 1e-9:
        raise ValueError(f"grid xi values are not on the hbar={hbar:g} lattice")
    if np.max(np.abs(kr)) > sym.K:
        raise ValueError(f"grid needs modes up to {int(np.max(np.abs(kr)))} > K={sym.K}")
    if len(sym.x) != len(grid.x):
        raise ValueError("x grids differ")
    return sym.at_modes(kr.astype(int))


# ---------------------------------------------------------------------------
# star products
# ---------------------------------------------------------------------------

# modes kept between the sampled columns and the cut
STAR_MARGIN = 16


def _check_ladder(grid: Grid, hbars: Sequence[float], K: int, margin: int) -> None:
    top = np.max(np.abs(grid.xi)) / np.min(hbars)
    if top > K - margin:
        raise ValueError(f"mode cut K={K} insufficient: grid needs |k| up to {top:.0f} plus margin {margin}")


def symbol_expansion(matrices: Callable[[float], OperatorMatrix], grid: Grid, N: int,
                     hbars: Sequence[float], *, min_power: int = 0, fit_degree="auto", jobs: int = 1):
    """Extrapolate ``hbar -> sigma(P_hbar)(x, xi/hbar)`` over an hbar ladder.

    ``matrices(hbar)`` builds the operator at one ladder point.
    """
    from .formal_series import extrapolate_series

    def sample(h):
        return h, lattice_to_grid(full_symbol(matrices(h), len(grid.x)), grid, h)

    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(jobs) as pool:
            samples = list(pool.map(sample, hbars))
    else:
        samples = [sample(h) for h in hbars]
    return extrapolate_series(samples, N, min_power=min_power, fit_degree=fit_degree)


def default_star_grid() -> Grid:
    """Integer xi lattice in [-3, 3]: compatible with every ladder level ``L``."""
    return Grid.make(N_X, xi_max=3.0, xi_step=1.0)


def star_numeric(a: Symbol, b: Symbol, N: int = 3, *, K: int = DEFAULT_K, grid: Grid | None = None,
                 hbars: Sequence[float] | None = None, margin: int = STAR_MARGIN, jobs: int = 1):
    """Star product from matrix composition: expansion of ``sigma(Op(a_h) Op(b_h))(x, xi/h)``.

    Returns the :class:`~fiolab.formal_series.SeriesFit`; ``.series`` holds the
    grid-valued coefficients.
    """
    return star_numeric_many([a, b], N, K=K, grid=grid, hbars=hbars, margin=margin, jobs=jobs)


def star_numeric_many(symbols: Sequence[Symbol], N: int = 3, *, K: int = DEFAULT_K,
                      grid: Grid | None = None, hbars: Sequence[float] | None = None,
                      margin: int = STAR_MARGIN, jobs: int = 1, fit_degree="auto"):
    """Expansion of the symbol of ``Op(s1_h) ... Op(sr_h)``.

    Sampled columns stay ``margin`` modes inside the cut, which must exceed
    the ``x``-bandwidth of the product.
    """
    from .formal_series import hbar_ladder

    grid = grid or default_star_grid()
    hbars = hbar_ladder() if hbars is None else np.asarray(hbars)
    _check_ladder(grid, hbars, K, margin)

    def build(h):
        out = None
        for s in symbols:
            M = quantize(scale_symbol(s, h), K)
            out = M if out is None else out @ M
        return out

    return symbol_expansion(build, grid, N, hbars, fit_degree=fit_degree, jobs=jobs)


class SymbolProduct:
    """Finite sum ``sum_t c_t prod_f d_x^p d_xi^q s_f`` of products of symbol derivatives.

    Used for the bidifferential terms of the star product: derivatives follow
    the Leibniz rule and evaluation goes through the cached closed-form
    derivatives of the factors, so nested star products never build large
    symbolic expressions.
    """

    def __init__(self, terms, order: float):
        merged: dict = {}
        for c, factors in terms:
            if c == 0:
                continue
            key = tuple(sorted(factors, key=lambda f: (id(f[0]), f[1], f[2])))
            merged[key] = merged.get(key, 0) + c
        self.terms = [(c, k) for k, c in merged.items() if c != 0]
        self.order = float(order)

    @classmethod
    def of(cls, a) -> "SymbolProduct":
        if isinstance(a, SymbolProduct):
            return a
        return cls([(1.0, ((a, 0, 0),))], a.order)

    def is_zero(self) -> bool:
        return not self.terms

    def __call__(self, x, xi) -> np.ndarray:
        x, xi = np.broadcast_arrays(np.asarray(x, float), np.asarray(xi, float))
        out = np.zeros(x.shape, complex)
        for c, factors in self.terms:
            term = np.full(x.shape, c, complex)
            for sym, p, q in factors:
                term = term * sym.deriv(p, q)(x, xi)
            out += term
        return out

    def on_grid(self, grid: "Grid") -> np.ndarray:
        return self(grid.x[:, None], grid.xi[None, :])

    def _d1(self, axis: int) -> "SymbolProduct":
        terms = []
        for c, factors in self.terms:
            for i, (sym, p, q) in enumerate(factors):
                f = (sym, p + 1, q) if axis == 0 else (sym, p, q + 1)
                if sym.expr is not None and sym.deriv(f[1], f[2]).expr == 0:
                    continue
                terms.append((c, factors[:i] + (f,) + factors[i + 1:]))
        return SymbolProduct(terms, self.order - axis)

    def deriv(self, p: int = 0, q: int = 0) -> "SymbolProduct":
        out = self
        for _ in range(p):
            out = out._d1(0)
        for _ in range(q):
            out = out._d1(1)
        return out

    def __mul__(self, other) -> "SymbolProduct":
        if not isinstance(other, (Symbol, SymbolProduct)):
            return SymbolProduct([(c * complex(other), f) for c, f in self.terms], self.order)
        other = SymbolProduct.of(other)
        return SymbolProduct([(c1 * c2, f1 + f2) for c1, f1 in self.terms for c2, f2 in other.terms],
                             self.order + other.order)

    __rmul__ = __mul__

    def __add__(self, other) -> "SymbolProduct":
        other = SymbolProduct.of(other)
        return SymbolProduct(self.terms + other.terms, max(self.order, other.order))

    __radd__ = __add__

    def __neg__(self) -> "SymbolProduct":
        return self * -1

    def __sub__(self, other) -> "SymbolProduct":
        return self + (-SymbolProduct.of(other))

    @property
    def expr(self):
        """Equivalent sympy expression (built on demand)."""
        out = sp.Integer(0)
        for c, factors in self.terms:
            term = sp.nsimplify(c) if complex(c).imag == 0 else sp.nsimplify(complex(c).real) + sp.I * sp.nsimplify(complex(c).imag)
            for sym, p, q in factors:
                term = term * sym.deriv(p, q).expr
            out += term
        return out


def _star_coefficient(a, b, n: int) -> SymbolProduct:
    c = (-1j) ** n / float(np.prod(np.arange(1, n + 1)))
    return SymbolProduct.of(a).deriv(0, n) * SymbolProduct.of(b).deriv(n, 0) * c


def star_symbolic(a, b, N: int = 3):
    """Closed-form star product ``sum_n hbar^n (1/i)^n/n! d_xi^n a d_x^n b`` as a series."""
    from .formal_series import FormalSeries

    return FormalSeries([_star_coefficient(a, b, n) for n in range(N + 1)], 0, N)


def star_series(S, T, N: int | None = None):
    """Star product of two formal series of symbols (or symbol products)."""
    from .formal_series import FormalSeries

    if N is None:
        N = min(S.trunc_order, T.trunc_order)
    out = [SymbolProduct([], -np.inf) for _ in range(N + 1)]
    for i in range(S.min_power, N + 1):
        for j in range(T.min_power, N + 1 - i):
            si, tj = S[i], T[j]
            if not isinstance(si, (Symbol, SymbolProduct)) or not isinstance(tj, (Symbol, SymbolProduct)):
                continue
            for n in range(N - i - j + 1):
                out[i + j + n] = out[i + j + n] + _star_coefficient(si, tj, n)
    return FormalSeries(out, 0, N)


def star_analytic(a: Symbol, b: Symbol, N: int = 3, grid: Grid | None = None):
    """Bidifferential expansion of the star product evaluated on the verification grid."""
    grid = grid or default_star_grid()
    return star_symbolic(a, b, N).map(lambda s: s.on_grid(grid))


def star_grid_functions(A, B, grid: Grid, N: int | None = None, half: int = 4):
    """Star product of two series of grid functions.

    ``d_x`` is spectral and ``d_xi`` a centred finite difference, so the
    outermost ``half * n`` xi columns of order-``n`` contributions are NaN.
    """
    from .formal_series import FormalSeries

    if N is None:
        N = min(A.trunc_order, B.trunc_order)
    out = [np.zeros(grid.shape, complex) for _ in range(N + 1)]
    fact = 1.0
    for i in range(A.min_power, N + 1):
        for j in range(B.min_power, N + 1 - i):
            a, b = A[i], B[j]
            for n in range(N - i - j + 1):
                fact = float(np.prod(np.arange(1, n + 1)))
                term = (-1j) ** n / fact * dxi_fd(np.asarray(a, complex), grid.xi_step, n, half) \
                    * dx_spectral(np.asarray(b, complex), n)
                out[i + j + n] = out[i + j + n] + term
    return FormalSeries(out, 0, N)


def poisson_bracket(a: Symbol, b: Symbol) -> Symbol:
    """``{a, b} = d_xi a d_x b - d_x a d_xi b`` (symplectic form d xi ^ dx)."""
    return Symbol(a.deriv(0, 1).expr * b.deriv(1, 0).expr - a.deriv(1, 0).expr * b.deriv(0, 1).expr,
                  a.order + b.order - 1)


# ---------------------------------------------------------------------------
# symbol class checks
# ---------------------------------------------------------------------------

def symbol_estimate(a: Symbol, max_order: int = 2, xi_max: float = 1e3, n: int = 64) -> float:
    """Sup over a log-spaced grid of ``|d_x^p d_xi^q a| (1+xi^2)^((q-m)/2)`` for ``p+q <= max_order``."""
    x = 2 * np.pi * np.arange(n) / n
    mags = np.logspace(-1, np.log10(xi_max), 200)
    xi = np.concatenate([-mags[::-1], mags])
    worst = 0.0
    for p in range(max_order + 1):
        for q in range(max_order + 1 - p):
            vals = a.deriv(p, q)(x[:, None], xi[None, :])
            w = (1 + xi**2) ** ((q - a.order) / 2)
            worst = max(worst, float(np.nanmax(np.abs(vals) * w[None, :])))
    return worst


def boundary_limit_check(a: Symbol, radii=(1e2, 1e3, 1e4, 1e5, 1e6), n: int = 64) -> dict:
    """Cauchy test of ``a(x, +-R)`` as ``R -> infinity`` (continuity at the boundary circle)."""
    x = 2 * np.pi * np.arange(n) / n
    report = {}
    for sign, label in ((1, "+"), (-1, "-")):
        vals = [a(x, sign * np.full_like(x, R)) for R in radii]
        steps = [float(np.max(np.abs(v1 - v0))) for v0, v1 in zip(vals, vals[1:])]
        report[label] = {"increments": steps,
                         "converging": all(s1 <= s0 * 1.0000001 + 1e-14 for s0, s1 in zip(steps, steps[1:]))}
    report["continuous"] = report["+"]["converging"] and report["-"]["converging"]
    return report


def boundary_extension_check(coeffs, grid: Grid, shell_start: float = 1.0, growth_tol: float = 1e-6) -> dict:
    """Behaviour of star-product coefficients of order-0 symbols towards |xi| -> infinity.

    ``coeffs`` is a series of grid functions.  For each order ``n`` the sup over
    xi-shells ``|xi| in [s, s + 1/2)`` beyond ``shell_start`` is recorded.  The
    corrections (``n >= 1``) are of negative order, so they pass when no shell
    sup exceeds an inner one by more than ``growth_tol``.  The leading term only
    has to settle: its shell-to-shell changes along the rays ``xi > 0`` and
    ``xi < 0`` must shrink (continuity at the boundary circle).
    """
    absxi = np.abs(grid.xi)
    edges = np.arange(shell_start, absxi.max() + 0.5, 0.5)
    orders = []
    for k, c in zip(coeffs.powers(), coeffs.coeffs):
        c = np.asarray(c)
        if c.ndim == 0:
            c = np.full(grid.shape, complex(c))
        sups = []
        for lo in edges:
            sel = (absxi >= lo) & (absxi < lo + 0.5)
            if sel.any() and np.isfinite(c[:, sel]).any():
                sups.append(float(np.nanmax(np.abs(c[:, sel]))))
        rays = {}
        for label, sign in (("+", 1), ("-", -1)):
            cols = np.where((sign * grid.xi >= shell_start))[0]
            cols = cols[np.argsort(absxi[cols])]
            vals = c[:, cols]
            ok = np.isfinite(vals).all(axis=0)
            vals = vals[:, ok]
            steps = np.max(np.abs(np.diff(vals, axis=1)), axis=0) if vals.shape[1] > 1 else np.zeros(0)
            tail = steps[len(steps) // 2:]
            rays[label] = bool(len(tail) < 2 or tail[-1] <= tail[0] + growth_tol)
        if k >= 1:
            bounded = all(s <= min(sups[: i + 1]) + growth_tol for i, s in enumerate(sups)) if sups else True
        else:
            bounded = all(np.isfinite(sups)) and rays["+"] and rays["-"]
        orders.append({"order": k, "shell_sups": sups, "bounded": bool(bounded),
                       "rays_settle": rays["+"] and rays["-"],
                       "sup": float(np.nanmax(np.abs(c)))})
    return {"orders": orders, "bounded": all(o["bounded"] for o in orders)}


# ---------------------------------------------------------------------------
# random test symbols
# ---------------------------------------------------------------------------

def random_symbol(rng: np.random.Generator, *, max_freq: int = 2, kind: str = "mixed",
                  vanish_near_zero: bool = False) -> Symbol:
    """Random symbol band-limited in ``x`` with an entire or slowly varying xi profile.

    ``kind``: ``"poly"`` (polynomial of degree <= 2 in xi, symbol order 2),
    ``"gauss"`` (Gaussian-modulated, order -inf), ``"order0"`` (``tanh``/
    ``xi/sqrt(s^2+xi^2)`` shapes of order 0) or ``"mixed"``.
    """
    if kind == "mixed":
        kind = rng.choice(["poly", "gauss", "order0"])
    expr = sp.Integer(0)
    for m in range(-max_freq, max_freq + 1):
        c = complex(rng.normal(), rng.normal()) / (1 + abs(m))
        c = sp.Float(round(c.real, 6)) + sp.I * sp.Float(round(c.imag, 6))
        if kind == "poly":
            prof = sum(sp.Float(round(rng.normal() / 2, 6)) * XI**d for d in range(3))
            order = 2.0
        elif kind == "gauss":
            s = sp.Float(round(rng.uniform(2.0, 3.0), 4))
            c0 = sp.Float(round(rng.uniform(-1.0, 1.0), 4))
            prof = sp.exp(-((XI - c0) / s) ** 2) * (1 + sp.Float(round(rng.normal() / 4, 6)) * XI)
            order = -np.inf
        else:
            s = sp.Float(round(rng.uniform(3.0, 4.0), 4))
            if rng.random() < 0.5:
                prof = sp.tanh(XI / s) + sp.Float(round(rng.normal() / 2, 6))
            else:
                prof = XI / sp.sqrt(s**2 + XI**2) + sp.Float(round(rng.normal() / 2, 6))
            order = 0.0
        expr += c * sp.exp(sp.I * m * X) * prof
    if vanish_near_zero:
        expr = expr * chi_expr()
    return Symbol(expr, order if np.isfinite(order) else -10.0, vanishes_near_zero=vanish_near_zero)
