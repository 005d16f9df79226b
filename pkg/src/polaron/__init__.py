"""Fröhlich polaron and bipolaron ground states.

Strong-coupling (Pekar, Pekar-Tomasevich) functionals on radial grids,
path-integral Monte Carlo for the full model, and binding analysis.
Units: kinetic energy p^2 = -Delta, coupling alpha, Coulomb repulsion U.
The Monte Carlo module (``polaron.pimc``) is imported on demand since it
compiles its kernels with numba.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BracketFailure,
    ConfigError,
    DegenerateInput,
    GridMismatch,
    InvalidArgument,
    NoConvergence,
    ParseError,
    PolaronError,
    ReportError,
    UnsupportedN,
    ValidationError,
)
from .radial import CouplingParams, RadialField, RadialGrid, build_radial_grid  # noqa: E402
from .pekar import PekarOptions, PekarResult, pekar_energy, solve_pekar  # noqa: E402
from .bipolaron import BipolaronResult, ScfOptions, build_internal_grid, scf_minimize  # noqa: E402
from .binding import (  # noqa: E402
    BindingReport,
    PTSolver,
    ScanResult,
    binding_energy,
    breakup_energy,
    find_critical_ratio,
    radius_profile,
    verify_bounds,
)
