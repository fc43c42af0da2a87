"""Circle-model toolkit for Fourier integral operators, their symbol calculus and index."""

__version__ = "0.1.0"

from .formal_series import FormalSeries, extrapolate_series, hbar_ladder  # noqa: E402
from .symbols import Symbol, quantize, full_symbol, star_numeric, star_analytic  # noqa: E402
from .fio import (  # noqa: E402
    CanonicalTransformation,
    CircleDiffeo,
    FourierIntegralOperator,
    HomogeneousHamiltonian,
    build_clutched_fio,
    build_ode_fio,
)
from .traces import TracePair, analytic_index, regularized_trace, tau_can, wodzicki_residue  # noqa: E402
from .geometry import compute_theta0_windings, evaluate_index_formula  # noqa: E402

__all__ = [
    "FormalSeries", "extrapolate_series", "hbar_ladder",
    "Symbol", "quantize", "full_symbol", "star_numeric", "star_analytic",
    "CanonicalTransformation", "CircleDiffeo", "FourierIntegralOperator", "HomogeneousHamiltonian",
    "build_clutched_fio", "build_ode_fio",
    "TracePair", "analytic_index", "regularized_trace", "tau_can", "wodzicki_residue",
    "compute_theta0_windings", "evaluate_index_formula",
]
