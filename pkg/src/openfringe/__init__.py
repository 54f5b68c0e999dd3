"""Dissipative two-beam interferometer dynamics.

Simulates semigroup evolution of two-level beam states, validates the
complete-positivity constraints on the six dissipative constants, models
the resulting interference fringes, and fits count data to extract the
constants with uncertainties.
"""

from .bloch import (
    BlochState,
    DensityMatrix,
    eigenvalues,
    from_bloch,
    is_physical,
    to_bloch,
    von_neumann_entropy,
)
from .evolution import (
    PerturbativeResult,
    PerturbativeValidity,
    PropagationRequest,
    VALIDITY_THRESHOLD,
    choi_state,
    perturbative_validity,
    propagate_exact,
    propagate_perturbative,
    sinc,
    transfer_matrix,
)
from .fitting import (
    ABEstimate,
    ExtractionResult,
    FitConfig,
    FitResult,
    SimplifiedAlpha,
    chi_squared,
    combined_alpha_simplified,
    extract_a_alpha,
    extract_ab,
    fit_pattern,
    run_extraction,
    synthesize_counts,
)
from .generator import (
    CpVerdict,
    DerivedCombos,
    DissipationParams,
    HamiltonianParams,
    Violation,
    check_complete_positivity,
    derived_combos,
    dissipator_matrix,
    full_generator,
    hamiltonian_matrix,
    kossakowski_matrix,
    params_from_text,
    params_to_text,
)
from .interference import (
    Branch,
    CountModel,
    ExitProjector,
    FringeParams,
    FringeSample,
    contrast_from_extrema,
    conservation_residual,
    count_pattern,
    ideal_pattern,
    intensity,
    pattern_extrema,
    projector_matrix,
    read_fringe_csv,
    simplified_contrast,
    write_fringe_csv,
)
from .values import Measurement

__version__ = "0.1.0"
