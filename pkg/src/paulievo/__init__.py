"""Sparse Pauli-operator dynamics with imaginary-time propagation."""

from .pauli import (
    DimensionMismatchError,
    PauliParseError,
    PauliString,
    Phase,
    commutes,
    multiply,
    pauli_from_text,
    weight,
)
from .opsum import (
    FixedK,
    PauliSum,
    Threshold,
    TraceCollapseError,
    TruncationPolicy,
    WeightCutoff,
    load_pauli_sum,
    normalize_by_trace,
    normalized_trace,
    overlap,
    product,
    purity,
    save_pauli_sum,
    truncate,
)
from .models import (
    Hamiltonian,
    TfimParams,
    build_tfim,
    hamiltonian_from_file,
    hamiltonian_from_terms,
)
from .propagate import (
    DegenerateStateError,
    GateSpec,
    ScheduleConfig,
    Trajectory,
    TrajectoryRecord,
    apply_imaginary_gate,
    apply_real_gate,
    expectation,
    expectation_squared_state,
    reachable_support_size,
    relative_error,
    run_itpp,
    trotter_sequence,
)
from .oracle import (
    SizeGuardError,
    bdg_ground_energy,
    dense_exact_ite,
    dense_trotter_ite,
    ground_energy,
)

__version__ = "0.1.0"

__all__ = [
    "DimensionMismatchError",
    "PauliParseError",
    "PauliString",
    "Phase",
    "commutes",
    "multiply",
    "pauli_from_text",
    "weight",
    "FixedK",
    "PauliSum",
    "Threshold",
    "TraceCollapseError",
    "TruncationPolicy",
    "WeightCutoff",
    "load_pauli_sum",
    "normalize_by_trace",
    "normalized_trace",
    "overlap",
    "product",
    "purity",
    "save_pauli_sum",
    "truncate",
    "Hamiltonian",
    "TfimParams",
    "build_tfim",
    "hamiltonian_from_file",
    "hamiltonian_from_terms",
    "DegenerateStateError",
    "GateSpec",
    "ScheduleConfig",
    "Trajectory",
    "TrajectoryRecord",
    "apply_imaginary_gate",
    "apply_real_gate",
    "expectation",
    "expectation_squared_state",
    "reachable_support_size",
    "relative_error",
    "run_itpp",
    "trotter_sequence",
    "SizeGuardError",
    "bdg_ground_energy",
    "dense_exact_ite",
    "dense_trotter_ite",
    "ground_energy",
]
