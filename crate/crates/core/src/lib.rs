//! Simulation core for Trotterized circuits of the (2+1)d Z2 lattice gauge
//! theory in its transverse-field Ising dual.
//!
//! The crate covers the statevector kernel ([`state`]), circuit construction
//! ([`lattice`], [`circuit`]), the depolarizing plus crosstalk noise model
//! ([`noise`]), stochastic two-branch trajectories ([`trajectory`]), dense
//! reference oracles ([`oracle`]) and spectral mass extraction ([`spectral`]).

pub mod circuit;
pub mod error;
pub mod gate;
pub mod lattice;
pub mod noise;
pub mod oracle;
pub mod record;
pub mod rng;
pub mod series;
pub mod spectral;
pub mod state;
pub mod trajectory;

#[cfg(test)]
pub(crate) mod testutil;

pub use circuit::{count_gates, fuse, Circuit, Fuser};
pub use error::{Error, Result};
pub use gate::{Gate, GateKind, GateMatrix, Support, Unitary, C64};
pub use lattice::{
    build_evolution_circuit, build_lattice, build_trotter_step, decompose_zz_to_sqiswap,
    CouplingParams, LatticeSpec,
};
pub use noise::{
    compile_noisy, depol_pmf, sample_pauli, uzz_matrix, NoiseModel, NoisyCircuit, NoisyGateCounts, Pauli,
    PauliString,
};
pub use record::{write_series_csv, RecordKind, ResultRecord};
pub use rng::RngStream;
pub use series::CorrelatorSeries;
pub use spectral::{dft, extract_mass, match_couplings, relative_mass_error, DftOptions, MassEstimate, Spectrum, Window};
pub use state::{apply_gate, pauli_x_cross_term, StateVector};
pub use trajectory::{
    ensemble_workers, memory_estimate, merge_shards, run_ensemble, run_trajectory, MergeOutcome, RunKey, SeriesAccumulator, Shard, ShardPartial,
    TrajectoryEngine, TrajectoryPlan,
};
