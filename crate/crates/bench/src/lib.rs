//! Fixtures shared by the benchmarks.

use z2sim_core::{build_lattice, build_trotter_step, Circuit, CouplingParams, NoiseModel, TrajectoryEngine};

/// Trotter step of the `n x n` lattice at `beta_h = 1.6`, `dt = 0.25`.
pub fn trotter_step(n: usize) -> Circuit {
    let lattice = build_lattice(n).expect("valid side");
    let params = CouplingParams::for_lattice(&lattice, 1.6, 0.25, 1).expect("valid params");
    build_trotter_step(&lattice, &params).expect("step builds")
}

/// Noisy engine recording the source site over `n_steps`.
pub fn noisy_engine(n: usize, n_steps: usize) -> TrajectoryEngine {
    let lattice = build_lattice(n).expect("valid side");
    let params = CouplingParams::for_lattice(&lattice, 1.6, 0.25, n_steps).expect("valid params");
    let model = NoiseModel::from_epsilon2(5e-3, 3e5).expect("valid model");
    TrajectoryEngine::from_model(&lattice, &params, &model, vec![params.source_site]).expect("engine builds")
}
