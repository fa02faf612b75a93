"""Partial projected ensembles from kicked-Ising and l-bit dynamics."""

from .states import (
    P_FLOOR,
    DiagonalPhases,
    InvalidSpecError,
    MeasurementBasis,
    ProductStateSpec,
    Tripartition,
    apply_diagonal,
    apply_one_qubit,
    make_product_state,
    partial_trace,
    project_and_condition,
    random_product_state,
    trace_norm_distance,
)
from .circuits import (
    KickedIsingParams,
    RegimePreset,
    ergodic_params,
    evolve,
    floquet_step,
    lightcone_onset,
    mbl_params,
    self_dual_params,
)
from .ensembles import (
    PartialProjectedEnsemble,
    build_ppe,
    delta,
    ghs_distance,
    ghs_second_moment,
    moment,
    observable_moment,
    sample_ghs,
)
from .pop import (
    DeltaAtOne,
    Erlang,
    PoPHistogram,
    PorterThomas,
    SdkiBeta,
    is_delta_at_one,
    kl_divergence,
    mellin_convolve,
    pop_bitstrings,
    pop_ppe,
    reference_density,
    relative_conditional_probs,
    sdki_pop_moment,
    sdki_reference,
    tv_distance,
)
from .lbit import (
    LBitHamiltonian,
    build_lbit,
    delta_infinity_x_scaling,
    delta_infinity_z,
    effective_field,
    evolve_lbit,
    x_ppe,
    z_delta_closed_form,
    z_ppe_closed_form,
)

__version__ = "0.1.0"
