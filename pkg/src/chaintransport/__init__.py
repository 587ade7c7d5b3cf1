"""Energy transport through a chain of two-level systems into a sink.

Coherent ("quantum") and incoherent-hopping ("classical") master equations,
with efficiency, coherence, integrated coherence, intersection time and the
threshold coupling at which both scenarios are equally efficient.
"""

__version__ = "0.1.0"

from .operators import (  # noqa: E402
    DensityState,
    PositivityError,
    Representation,
    embed_site_op,
    initial_state,
    sigma_minus,
    sigma_plus,
    von_neumann_entropy,
)
from .model import (  # noqa: E402
    ChainSpec,
    DimensionError,
    Generator,
    LindbladConvention,
    Scenario,
    build_classical_generator,
    build_generator,
    build_hamiltonian,
    build_quantum_generator,
    build_reduced_generator,
    dissipator,
)
from .dynamics import (  # noqa: E402
    IntegratorError,
    NotConvergedError,
    PropagationControls,
    Trajectory,
    efficiency,
    flux_discrepancy,
    propagate,
    sink_population,
)
from .analysis import (  # noqa: E402
    BracketError,
    GridMismatchError,
    RunSummary,
    find_lambda_qc,
    integrated_coherence,
    intersection_time,
    max_coherence,
    relative_entropy_of_coherence,
    run_point,
)

__all__ = [name for name in dir() if not name.startswith("_")]
