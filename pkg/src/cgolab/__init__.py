"""Numerical laboratory for CGO solutions of the conductivity equation and
the Carleman-type estimates behind them."""

__version__ = "0.1.0"

from .lattice import GridSpec, SpectralField, ParameterError, make_test_function  # noqa: E402
from .symbols import CarlemanParams, ZetaVector, RegimeError  # noqa: E402
from .media import ConductivityModel  # noqa: E402
from .carleman import EstimateReport  # noqa: E402
from .cgo import CgoSolver, make_zeta_pair, solve_cgo  # noqa: E402
from .recovery import FourierModeRecovery, recover_fourier_mode  # noqa: E402

__all__ = [
    "__version__",
    "GridSpec",
    "SpectralField",
    "ParameterError",
    "make_test_function",
    "CarlemanParams",
    "ZetaVector",
    "RegimeError",
    "ConductivityModel",
    "EstimateReport",
    "CgoSolver",
    "make_zeta_pair",
    "solve_cgo",
    "FourierModeRecovery",
    "recover_fourier_mode",
]
