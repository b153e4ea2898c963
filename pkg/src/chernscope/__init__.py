"""Haldane-model band oracles and a simulated interferometric Chern detector."""

__version__ = "0.1.0"

from .errors import (
    ChernscopeError,
    DegenerateScan,
    GaplessPoint,
    MalformedPlan,
    NoClosure,
    NotQuantized,
    NotReciprocal,
    PlaquetteSaturated,
    StepTooLarge,
)
from .lattice import (
    DEFAULT_GEOMETRY,
    BandEigensystem,
    BlochComponents,
    LatticeGeometry,
    ModelParams,
    band_energies,
    band_gap_min,
    band_states,
    bloch_components,
    bloch_fields,
    boundary_matrix,
    boundary_phase,
    eigensystem,
    hamiltonian,
    high_symmetry_path,
    reciprocal_coefficients,
    sublattice_matching,
)
from .topology import (
    BerryField,
    ChernResult,
    KPath,
    berry_curvature_fhs,
    berry_phase_loop,
    chern_from_zak,
    chern_number,
    connection_integral,
    noncyclic_zak,
)
from .protocol import (
    ForceSpec,
    PlanDiagnostics,
    ProtocolPlan,
    ProtocolStep,
    perturb_plan,
    plan_site,
    site_displacements,
    site_start,
    validate_plan,
)
from .interferometer import (
    FringeScan,
    PhaseLedger,
    SpinorState,
    TdseDiagnostics,
    apply_pi,
    apply_pi2,
    evolve_adiabatic,
    evolve_tdse,
    initial_state,
    landau_zener_estimate,
    readout,
    run_fringe,
    wrap_angle,
)
from .analysis import (
    ChernReport,
    FringeFit,
    RobustnessRow,
    RobustnessTable,
    TrialRecord,
    classify,
    default_phi_grid,
    dynamic_phase_check,
    fit_fringe,
    robustness_sweep,
)

__all__ = [name for name in dir() if not name.startswith("_")]
