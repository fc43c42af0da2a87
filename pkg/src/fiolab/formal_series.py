"""Truncated formal power series in hbar and their numerical extraction.

Coefficients may live in any space that supports addition and scalar
multiplication (complex numbers, numpy grids, matrices).  Multiplication
additionally requires the coefficients to multiply with each other.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

DEFAULT_LADDER = tuple(range(4, 65))
COND_LIMIT = 1e10


class IncompatibleSeriesError(ValueError):
    """Coefficients of two series cannot be combined."""


class IllConditionedFitError(RuntimeError):
    """The scaled Vandermonde system of an extrapolation is too ill-conditioned."""

    def __init__(self, cond: float, limit: float):
        super().__init__(f"Vandermonde condition number {cond:.3e} exceeds {limit:.1e}")
        self.cond = cond
        self.limit = limit


def _is_zero_like(c: Any) -> bool:
    return np.isscalar(c) and c == 0


def _shape_of(c: Any):
    return np.shape(c)


def _check_compatible(a: Any, b: Any) -> None:
    if _is_zero_like(a) or _is_zero_like(b):
        return
    sa, sb = _shape_of(a), _shape_of(b)
    if sa and sb and sa != sb:
        raise IncompatibleSeriesError(f"coefficient shapes {sa} and {sb} differ")


class FormalSeries:
    """Series ``sum_k coeffs[k - min_power] * hbar**k`` known modulo ``hbar**(trunc_order + 1)``.

    Parameters
    ----------
    coeffs : sequence
        Coefficients of ``hbar**min_power`` up to ``hbar**trunc_order``.  Missing
        trailing coefficients are padded with zero; extra ones are an error.
    min_power : int
        Power of the first coefficient (negative for Laurent-type series).
    trunc_order : int, optional
        Highest power carried.  Defaults to ``min_power + len(coeffs) - 1``.
    """

    __slots__ = ("coeffs", "min_power", "trunc_order")

    def __init__(self, coeffs: Sequence[Any], min_power: int = 0, trunc_order: int | None = None):
        coeffs = list(coeffs)
        if trunc_order is None:
            trunc_order = min_power + max(len(coeffs), 1) - 1
        if trunc_order < min_power:
            raise ValueError("trunc_order must be >= min_power")
        n = trunc_order - min_power + 1
        if len(coeffs) > n:
            raise ValueError(f"{len(coeffs)} coefficients do not fit orders {min_power}..{trunc_order}")
        coeffs += [0] * (n - len(coeffs))
        self.coeffs = tuple(coeffs)
        self.min_power = int(min_power)
        self.trunc_order = int(trunc_order)

    # -- construction helpers -------------------------------------------------
    @classmethod
    def constant(cls, value: Any, trunc_order: int) -> "FormalSeries":
        return cls([value], 0, trunc_order)

    @classmethod
    def monomial(cls, value: Any, power: int, trunc_order: int) -> "FormalSeries":
        return cls([value], power, trunc_order)

    # -- access ---------------------------------------------------------------
    def __getitem__(self, k: int) -> Any:
        """Coefficient of ``hbar**k`` (zero below ``min_power``)."""
        if k > self.trunc_order:
            raise IndexError(f"order {k} beyond truncation {self.trunc_order}")
        if k < self.min_power:
            return 0
        return self.coeffs[k - self.min_power]

    def powers(self) -> range:
        return range(self.min_power, self.trunc_order + 1)

    def __len__(self) -> int:
        return len(self.coeffs)

    def __repr__(self) -> str:
        terms = []
        for k, c in zip(self.powers(), self.coeffs):
            if np.ndim(c) == 0:
                terms.append(f"{c}*h^{k}")
            else:
                terms.append(f"<{np.shape(c)}>*h^{k}")
        return f"FormalSeries({' + '.join(terms)} + O(h^{self.trunc_order + 1}))"

    # -- arithmetic -----------------------------------------------------------
    def __add__(self, other) -> "FormalSeries":
        if not isinstance(other, FormalSeries):
            other = FormalSeries.constant(other, self.trunc_order)
        return series_add(self, other)

    __radd__ = __add__

    def __neg__(self) -> "FormalSeries":
        return self.scale(-1)

    def __sub__(self, other) -> "FormalSeries":
        if not isinstance(other, FormalSeries):
            other = FormalSeries.constant(other, self.trunc_order)
        return series_add(self, -other)

    def __rsub__(self, other) -> "FormalSeries":
        return (-self) + other

    def __mul__(self, other) -> "FormalSeries":
        if isinstance(other, FormalSeries):
            return series_mul(self, other)
        return self.scale(other)

    def __rmul__(self, other) -> "FormalSeries":
        return self.scale(other)

    def scale(self, s: Any) -> "FormalSeries":
        return FormalSeries([s * c for c in self.coeffs], self.min_power, self.trunc_order)

    def shift(self, s: int) -> "FormalSeries":
        """Multiply by ``hbar**s``."""
        return FormalSeries(self.coeffs, self.min_power + s, self.trunc_order + s)

    def truncate(self, order: int) -> "FormalSeries":
        if order > self.trunc_order:
            raise ValueError("truncation cannot extend a series")
        order = max(order, self.min_power)
        return FormalSeries(self.coeffs[: order - self.min_power + 1], self.min_power, order)

    def map(self, fn: Callable[[Any], Any]) -> "FormalSeries":
        return FormalSeries([fn(c) for c in self.coeffs], self.min_power, self.trunc_order)

    def evaluate(self, hbar: float) -> Any:
        return sum(c * hbar**k for k, c in zip(self.powers(), self.coeffs))

    def sup_norms(self) -> list[float]:
        """Maximum absolute value of each coefficient."""
        return [float(np.max(np.abs(c))) if np.size(c) else 0.0 for c in self.coeffs]

    def allclose(self, other: "FormalSeries", atol: float) -> bool:
        diff = self - other
        return all(n <= atol for n in diff.sup_norms())


def series_add(a: FormalSeries, b: FormalSeries) -> FormalSeries:
    """Term-wise sum aligned by power, truncated at the smaller truncation order."""
    lo = min(a.min_power, b.min_power)
    hi = min(a.trunc_order, b.trunc_order)
    if hi < lo:
        raise ValueError("series have no common known orders")
    coeffs = []
    for k in range(lo, hi + 1):
        ca, cb = a[k], b[k]
        _check_compatible(ca, cb)
        coeffs.append(ca + cb)
    return FormalSeries(coeffs, lo, hi)


def series_mul(a: FormalSeries, b: FormalSeries, mul: Callable[[Any, Any], Any] | None = None) -> FormalSeries:
    """Cauchy product.

    ``mul`` multiplies two coefficients (default ``*``; pass ``np.matmul`` for
    matrix-valued series).  The result is known through ``min(a.trunc + b.min_power, b.trunc + a.min_power)``,
    which for ordinary series (``min_power = 0``) is the smaller truncation order.
    """
    lo = a.min_power + b.min_power
    hi = min(a.trunc_order + b.min_power, b.trunc_order + a.min_power)
    coeffs = []
    for k in range(lo, hi + 1):
        acc: Any = 0
        for i in range(a.min_power, k - b.min_power + 1):
            ca, cb = a[i], b[k - i]
            if _is_zero_like(ca) or _is_zero_like(cb):
                continue
            _check_compatible(ca, cb)
            acc = acc + (ca * cb if mul is None else mul(ca, cb))
        coeffs.append(acc)
    return FormalSeries(coeffs, lo, hi)


def hbar_ladder(levels: Sequence[int] = DEFAULT_LADDER) -> np.ndarray:
    """Decreasing hbar values ``1/L`` for the integer levels ``L``."""
    hs = np.array([1.0 / L for L in sorted(levels)])
    return hs


@dataclass(frozen=True)
class SeriesFit:
    """Result of :func:`extrapolate_series`.

    ``residual`` estimates the uncertainty of the reported coefficients
    (entrywise for array coefficients) from the least-squares misfit and the
    sensitivity of the coefficients to the fit degree.
    """

    series: FormalSeries
    residual: np.ndarray
    cond: float
    fit_degree: int

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residual)) if np.size(self.residual) else 0.0


def _vander_solve(h: np.ndarray, Y: np.ndarray, degree: int, cond_limit: float):
    scale = float(np.max(h))
    V = np.vander(h / scale, degree + 1, increasing=True)
    cond = float(np.linalg.cond(V))
    if not np.isfinite(cond) or cond > cond_limit:
        raise IllConditionedFitError(cond, cond_limit)
    sol, *_ = np.linalg.lstsq(V, Y, rcond=None)
    misfit = np.max(np.abs(V @ sol - Y), axis=0) if len(h) > degree + 1 else np.zeros(Y.shape[1])
    sol = sol / (scale ** np.arange(degree + 1))[:, None]
    return sol, cond, misfit


def extrapolate_series(
    samples: Sequence[tuple[float, Any]],
    trunc_order: int,
    *,
    min_power: int = 0,
    fit_degree: int | str | None = "auto",
    cond_limit: float = COND_LIMIT,
) -> SeriesFit:
    """Fit the small-hbar expansion of sampled values.

    Parameters
    ----------
    samples : sequence of (hbar, value)
        ``value`` may be a scalar or an array; arrays are fitted entrywise.
    trunc_order : int
        Highest power of hbar reported.
    min_power : int
        The sampled quantity is assumed to be ``hbar**min_power`` times a
        regular function; values are multiplied by ``hbar**-min_power`` before
        fitting.
    fit_degree : int or "auto"
        Degree of the fitted polynomial, at least ``trunc_order - min_power``.
        Degrees above the reported order absorb the remainder of the
        expansion.  ``"auto"`` tries every admissible degree and keeps the one
        whose reported coefficients change least when the degree is raised by
        one; that change is the residual estimate.

    Raises
    ------
    IllConditionedFitError
        If the scaled Vandermonde matrix has condition number above
        ``cond_limit`` (for ``"auto"``: already at the lowest degree).
    """
    hs = np.array([float(h) for h, _ in samples])
    if np.any(hs <= 0):
        raise ValueError("hbar samples must be positive")
    if len(np.unique(hs)) != len(hs):
        raise ValueError("hbar samples must be distinct")
    n_req = trunc_order - min_power + 1
    if len(hs) < n_req + 1:
        raise ValueError(f"need at least {n_req + 1} samples for order {trunc_order}")

    values = [np.asarray(v) for _, v in samples]
    shape = values[0].shape
    Y = np.stack([v.reshape(-1) * h ** (-min_power) for h, v in zip(hs, values)])

    if fit_degree is None:
        fit_degree = len(hs) - 2
    if fit_degree == "auto":
        fits = []
        for d in range(n_req - 1, len(hs) - 1):
            try:
                fits.append((d,) + _vander_solve(hs, Y, d, cond_limit))
            except IllConditionedFitError:
                if not fits:
                    raise
                break
        best = None
        for (d, sol, cond, misfit), (_, nxt, _, _) in zip(fits, fits[1:]):
            change = np.max(np.abs(nxt[:n_req] - sol[:n_req]), axis=0)
            score = float(np.max(change))
            if best is None or score < best[0]:
                best = (score, d, sol, cond, np.maximum(change, misfit))
        if best is None:
            d, sol, cond, misfit = fits[0]
            best = (0.0, d, sol, cond, misfit)
        _, fit_degree, sol, cond, resid = best
    else:
        if fit_degree < n_req - 1 or fit_degree > len(hs) - 1:
            raise ValueError(f"fit_degree {fit_degree} incompatible with {len(hs)} samples")
        sol, cond, misfit = _vander_solve(hs, Y, fit_degree, cond_limit)
        resid = misfit
        if fit_degree > n_req - 1:
            lower, _, _ = _vander_solve(hs, Y, fit_degree - 1, cond_limit)
            resid = np.maximum(resid, np.max(np.abs(lower[:n_req] - sol[:n_req]), axis=0))

    def unpack(row):
        return row.reshape(shape) if shape else complex(row[0]) if np.iscomplexobj(row) else float(row[0])

    coeffs = [unpack(sol[i]) for i in range(n_req)]
    series = FormalSeries(coeffs, min_power, trunc_order)
    return SeriesFit(series, resid.reshape(shape) if shape else resid, cond, fit_degree)
