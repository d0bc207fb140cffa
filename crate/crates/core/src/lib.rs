//! Robust pulse synthesis for unitary gates under Hamiltonian uncertainty.
//!
//! The crate models a controlled quantum system H(t) = H0 + Σ_j v_{tj} H_j
//! with piecewise-constant pulses, quantifies first-order sensitivity to an
//! uncertainty set through norms of a time-averaged interaction operator, and
//! synthesizes pulses in two stages: reach a fidelity floor, then descend the
//! robustness measure along the fidelity level set via a dual subproblem.

pub mod differentiation;
pub mod error;
pub mod evaluation;
pub mod linalg;
pub mod open_systems;
pub mod optimizer;
pub mod pauli;
pub mod problem;
pub mod propagation;
pub mod uncertainty;

pub use differentiation::{
    fidelity_gradient, fidelity_hessian, fidelity_quadratic, robustness_gradient,
    robustness_hessian, robustness_quadratic, QuadraticModel,
};
pub use error::{Error, Result};
pub use evaluation::{
    check_averaging_bounds, default_frequency_grid, filter_function_measure, interaction_unitary,
    monte_carlo_sweep, worst_gap, BoundCheck, InteractionEvolution, SweepReport, SweepRow,
};
pub use open_systems::{
    bipartite_avg_measure, bipartite_fidelity, bipartite_worst_measure, lifted_fidelity,
    lindblad_assembly, lindblad_lift, lindblad_lifted_propagator, lindblad_measure,
    BipartiteProblem,
};
pub use optimizer::{
    run_two_stage, run_two_stage_observed, solve_dual, stage1_step, stage2_step, DualSolution,
    OptimizationTrace, OptimizerConfig, StopReason, SynthesisOutcome, TraceRow,
};
pub use problem::{ControlProblem, ControlVector};
pub use propagation::{
    infidelity_distance, nominal_fidelity, perturbed_fidelity, propagate_nominal,
    propagate_perturbed, time_averaged_hamiltonian, Trajectory,
};
pub use uncertainty::{
    build_assemblies, combined_measure, concat_assemblies, first_order_filter,
    first_order_spectral_bound, sample_perturbation, spec_assemblies, toeplitz_from_impulse,
    Combine, NoiseDynamics, NoiseFilter, NormKind, OpSequence, ParamBound, PwcKind,
    RobustnessAssembly, RobustnessObjective, Subsystem, UncertaintySpec,
};
