//! Quantum annealing of Ising problems on Rydberg-dressed neutral atoms.
//!
//! Energies are in kHz, times in microseconds and laser parameters in MHz;
//! see [`units`] for the conversions applied at the integration boundary.

pub mod analysis;
pub mod dressing;
pub mod error;
pub mod evolve;
pub mod experiment;
pub mod hamiltonian;
pub mod ising;
pub mod units;

pub use analysis::{
    adiabatic_time_estimate, fidelity_report, fit_power_law, gap_scaling_fit, scan_gap, trials_to_confidence,
    AdiabaticEstimate, FidelityReport, GapScaling, GapScan, PowerLawFit,
};
pub use dressing::{
    diagonalize_pair, j_at_distance, j_closed_form, scattering_and_merit, Blockade, DressedPairResult, DressingParams,
    TailModel, TailRegime,
};
pub use error::{Error, Result};
pub use evolve::{
    evolve_closed, evolve_open, evolve_trajectories, readout, Distribution, IntegratorConfig, IntegratorStats,
    NoiseModel, QuantumState, TimeProfile, TrajectoryResult,
};
pub use experiment::{run, run_anneal, AnnealResult, ExperimentConfig, Method, Mode, RunOptions};
pub use hamiltonian::{
    build_h_b, build_h_p, h_of_t, AnnealSpec, DrivenHamiltonian, Schedule, ScheduleShape, SparseOperator,
};
pub use ising::{
    benchmark_chain, brute_force_ground, brute_force_ground_capped, qubo_to_ising, sign_mask_for_couplings,
    DressingAssignment, GroundState, IsingProblem, QuboProblem, SpinConfiguration,
};
