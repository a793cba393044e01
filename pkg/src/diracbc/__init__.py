"""Boundary-control toolkit for 1D Dirac-type operators.

Forward solvers (constrained evolution with boundary sources), boundary-data
inner products, control/focusing primitives, spectral and geometric recovery
from boundary data, and a discrete-exterior-calculus Dirac complex on
triangulated surfaces.
"""
from .errors import DiracBCError
from .fiber import (
    FiberModel,
    Interval1D,
    BoundaryProjector,
    DiscreteOperator,
    SpectralData,
    build_fiber_model,
    boundary_projector,
    assemble_operator,
    inner_product,
    norm,
    oracle_eigendecomposition,
)
from .propagate import (
    TimeGrid,
    BoundarySource,
    BoundaryTrace,
    Wavefield,
    evolve,
    response,
    source_basis,
    spline_bump,
)
from .blago import (
    inner_product_table,
    wave_norm,
    gram_matrix,
    cone_pairing,
)
from .control import (
    ControlProblem,
    ControlReport,
    SliceSpec,
    DistanceProfile,
    ControlSetup,
    make_control_setup,
    solve_control,
    estimate_rad,
    z_membership,
    slice_nonempty,
    boundary_distance_reconstruct,
)
from .spectral import (
    SourceSpace,
    GeneralizedSource,
    ChannelProjectors,
    IndexResult,
    make_source_space,
    recover_eigen,
    dt_apply,
    channel_projectors,
    kernel_split,
    decomposition_test,
    index_from_boundary,
    index_bruteforce,
)

__version__ = "0.1.0"

__all__ = [
    "DiracBCError",
    "FiberModel",
    "Interval1D",
    "BoundaryProjector",
    "DiscreteOperator",
    "SpectralData",
    "build_fiber_model",
    "boundary_projector",
    "assemble_operator",
    "inner_product",
    "norm",
    "oracle_eigendecomposition",
    "TimeGrid",
    "BoundarySource",
    "BoundaryTrace",
    "Wavefield",
    "evolve",
    "response",
    "source_basis",
    "spline_bump",
    "inner_product_table",
    "wave_norm",
    "gram_matrix",
    "cone_pairing",
    "ControlProblem",
    "ControlReport",
    "SliceSpec",
    "DistanceProfile",
    "ControlSetup",
    "make_control_setup",
    "solve_control",
    "estimate_rad",
    "z_membership",
    "slice_nonempty",
    "boundary_distance_reconstruct",
    "SourceSpace",
    "GeneralizedSource",
    "ChannelProjectors",
    "IndexResult",
    "make_source_space",
    "recover_eigen",
    "dt_apply",
    "channel_projectors",
    "kernel_split",
    "decomposition_test",
    "index_from_boundary",
    "index_bruteforce",
    "__version__",
]
