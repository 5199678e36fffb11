"""Coherence-gated qubit routing toolkit.

Simulation of continuously monitored qubits, real-time coherence
estimators, routing/certification metrics, and pointwise
overcertification bounds.
"""

from .core import (
    MeasurementRecord,
    QubitState,
    SimParams,
    TrajectoryPair,
    bloch_from_density,
    density_from_bloch,
    table1_params,
    validate_params,
)
from .dynamics import (
    bloch_drift,
    simulate_ensemble,
    sme_step,
    synthesize_record,
    unconditional_evolve,
    unconditional_steady_state,
)
from .estimators import (
    EstimatorConfig,
    EstimatorDiagnostics,
    direct_sme_step,
    ekf_step,
    psd_repair,
    run_estimator,
    run_estimator_ensemble,
    zakai_step,
)
from .gating import (
    GatingMetrics,
    coherence_score,
    equatorial_phase,
    gating_sweep,
    purity,
    route,
)
from .certify import (
    ComposablePoint,
    bell_fidelity,
    composable_point,
    empirical_min_entropy,
    input_fidelity,
    min_entropy_bound,
    network_rates,
    optimal_eta_ratio,
    pz_interval,
    s_typ,
)
from .bounds import (
    JointState,
    OUParams,
    e_drift_diffusion,
    error_value,
    fit_ou,
    joint_sde_coefficients,
    ou_tail,
    overcert_stats,
    simulate_joint,
    supermartingale_bound,
)

__version__ = "0.1.0"
