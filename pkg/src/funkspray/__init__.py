"""Spray and Finsler geometry toolkit built on batched Taylor jets.

Submodules: :mod:`jets` (truncated multivariate Taylor arithmetic),
:mod:`expr` (expression language), :mod:`geometry` (sprays, connections,
curvature, Frölicher-Nijenhuis type derivations), :mod:`analysis`
(residual reports), :mod:`search` (numerical search for Funk functions) and
:mod:`cli`.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AnsatzDomainError,
    CompileError,
    DegenerateInput,
    DomainError,
    FunkSprayError,
    HomogeneityError,
    ParseError,
    PreconditionError,
    SingularMetric,
)
from .jets import Jet, PhasePoint, ScalarField, jet_eval  # noqa: E402
from .geometry import (  # noqa: E402
    Spray,
    connection,
    curvature_R,
    d_on_function,
    geodesic_spray,
    jacobi,
    projective_deform,
)
from .analysis import (  # noqa: E402
    flag_curvature,
    funk_residual,
    identity_suite,
    isotropy_decompose,
    obstruction_chain,
    verify_deformation,
)
from .search import SearchConfig, search_funk  # noqa: E402

__all__ = [
    "__version__",
    "AnsatzDomainError", "CompileError", "DegenerateInput", "DomainError", "FunkSprayError",
    "HomogeneityError", "ParseError", "PreconditionError", "SingularMetric",
    "Jet", "PhasePoint", "ScalarField", "jet_eval",
    "Spray", "connection", "curvature_R", "d_on_function", "geodesic_spray", "jacobi", "projective_deform",
    "flag_curvature", "funk_residual", "identity_suite", "isotropy_decompose", "obstruction_chain", "verify_deformation",
    "SearchConfig", "search_funk",
]
