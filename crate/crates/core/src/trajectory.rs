//! Two-branch stochastic trajectories.
//!
//! Branch 1 starts in `|0...0>` and branch 2 in `X_s |0...0>`. Both see the
//! same gates and the same sampled Pauli insertions, and after every Trotter
//! step the engine records `<psi1| X_i |psi2>`. Averaged over trajectories
//! this converges to `Tr[X_i E(X_s |0><0|)]` for the full noisy channel `E`.
//!
//! Ensemble sums are kept in 128-bit fixed point so that partial results from
//! any split of the trajectory index range merge to the same bits.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::Fuser;
use crate::error::{Error, Result};
use crate::gate::{GateMatrix, Support, C64};
use crate::lattice::{build_evolution_circuit, CouplingParams, LatticeSpec};
use crate::noise::{compile_noisy, sample_pauli_index, NoiseModel, NoisyCircuit, PauliString};
use crate::rng::{splitmix64, RngStream};
use crate::series::{times, CorrelatorSeries};
use crate::state::{pauli_x_cross_term, StateVector, PARALLEL_MIN_QUBITS};

/// Default ensemble size.
pub const DEFAULT_N_TRAJ: usize = 1000;

/// Fixed-point scale of the accumulators: samples are stored as
/// `round(x * 2^94)`, leaving 33 bits of headroom in an `i128`.
const FIXED_BITS: i32 = 94;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shard {
    pub index: usize,
    pub total: usize,
}

impl Shard {
    pub const WHOLE: Shard = Shard { index: 0, total: 1 };

    pub fn new(index: usize, total: usize) -> Result<Self> {
        if total == 0 || index >= total {
            return Err(Error::InvalidParameter(format!("invalid shard {index}/{total}")));
        }
        Ok(Self { index, total })
    }

    /// Number of global indices `k < n_traj` with `k % total == index`.
    pub fn len(&self, n_traj: usize) -> usize {
        if self.index >= n_traj {
            0
        } else {
            (n_traj - self.index).div_ceil(self.total)
        }
    }

    pub fn indices(&self, n_traj: usize) -> impl Iterator<Item = usize> {
        (self.index..n_traj).step_by(self.total)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPlan {
    pub n_traj: usize,
    pub master_seed: u64,
    pub shard: Shard,
    pub record_sites: Vec<usize>,
    /// Refuse to run when the two-branch working set would exceed this.
    pub mem_limit: Option<u64>,
}

impl TrajectoryPlan {
    pub fn new(n_traj: usize, master_seed: u64, record_sites: Vec<usize>) -> Self {
        Self {
            n_traj,
            master_seed,
            shard: Shard::WHOLE,
            record_sites,
            mem_limit: None,
        }
    }

    pub fn with_shard(mut self, shard: Shard) -> Self {
        self.shard = shard;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_traj == 0 {
            return Err(Error::InvalidParameter("n_traj must be at least 1".into()));
        }
        Shard::new(self.shard.index, self.shard.total)?;
        if self.record_sites.is_empty() {
            return Err(Error::InvalidParameter("no sites to record".into()));
        }
        Ok(())
    }
}

/// Fixed allowance for the process image, fused matrices and bookkeeping.
pub const BASE_MEMORY_BYTES: u64 = 32 << 20;

/// Bytes held by concurrently running trajectories plus [`BASE_MEMORY_BYTES`].
pub fn memory_estimate(n_qubits: usize, workers: usize) -> u64 {
    let per_traj = 2 * StateVector::bytes_for(n_qubits);
    per_traj.saturating_mul(workers as u64) + BASE_MEMORY_BYTES
}

/// Workers `run_ensemble` would use for `n_qubits`.
pub fn ensemble_workers(n_qubits: usize) -> usize {
    trajectory_workers(n_qubits)
}

/// Trajectories run side by side only while states are small; larger states
/// run one at a time and parallelize inside each gate.
fn trajectory_workers(n_qubits: usize) -> usize {
    if n_qubits < PARALLEL_MIN_QUBITS {
        rayon::current_num_threads()
    } else {
        1
    }
}

#[derive(Clone, Debug)]
enum Op {
    Gate(GateMatrix),
    Channel { support: Support, epsilon: f64 },
}

#[derive(Clone, Debug)]
struct StepProgram {
    ops: Vec<Op>,
    /// Fused gates for the case where every channel samples the identity.
    clean: Vec<GateMatrix>,
}

/// Per-trajectory output: `values[site_index][k]` for `k = 0..=n_steps`.
#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySamples {
    pub values: Vec<Vec<C64>>,
    /// Largest `| ||psi|| - 1 |` seen on either branch.
    pub max_norm_error: f64,
    /// Number of insertion points that sampled a non-identity string.
    pub n_errors: usize,
    /// Digest of the full sampled label sequence.
    pub pauli_digest: u64,
}

/// Compiled noisy evolution ready for repeated sampling.
#[derive(Clone, Debug)]
pub struct TrajectoryEngine {
    n_qubits: usize,
    source_site: usize,
    sites: Vec<usize>,
    steps: Vec<StepProgram>,
    stochastic: bool,
}

impl TrajectoryEngine {
    /// `noisy` must be built without the source preparation gate; branch 2 is
    /// prepared as `X_s |0...0>` directly.
    pub fn new(noisy: &NoisyCircuit, source_site: usize, sites: Vec<usize>) -> Result<Self> {
        let n = noisy.n_qubits();
        for &q in sites.iter().chain(std::iter::once(&source_site)) {
            if q >= n {
                return Err(Error::QubitOutOfRange { index: q, n_qubits: n });
            }
        }
        let gates: Vec<GateMatrix> = noisy.base.gates().map(|g| g.matrix()).collect();
        let mut steps = Vec::new();
        let mut ins = noisy.insertions.iter().peekable();
        for range in noisy.base.step_ranges() {
            let mut ops = Vec::new();
            for (pos, g) in gates[range.clone()].iter().enumerate() {
                ops.push(Op::Gate(*g));
                let after = range.start + pos + 1;
                while let Some(i) = ins.next_if(|i| i.position <= after) {
                    ops.push(Op::Channel {
                        support: i.support,
                        epsilon: i.epsilon,
                    });
                }
            }
            let mut fuser = Fuser::new(n);
            for op in &ops {
                if let Op::Gate(g) = op {
                    fuser.push_matrix(*g);
                }
            }
            steps.push(StepProgram {
                ops,
                clean: fuser.finish_matrices(),
            });
        }
        Ok(Self {
            n_qubits: n,
            source_site,
            sites,
            steps,
            stochastic: noisy.has_stochastic_noise(),
        })
    }

    /// Compiles `n_steps` Trotter steps of the lattice model under `model`.
    pub fn from_model(
        lattice: &LatticeSpec,
        params: &CouplingParams,
        model: &NoiseModel,
        sites: Vec<usize>,
    ) -> Result<Self> {
        let circuit = build_evolution_circuit(lattice, params, false)?;
        let noisy = compile_noisy(&circuit, model)?;
        Self::new(&noisy, params.source_site, sites)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn sites(&self) -> &[usize] {
        &self.sites
    }

    pub fn is_stochastic(&self) -> bool {
        self.stochastic
    }

    pub fn run_trajectory(&self, seed: u64) -> Result<TrajectorySamples> {
        let mut rng = RngStream::new(seed);
        let mut psi1 = StateVector::zero(self.n_qubits);
        let mut psi2 = StateVector::basis(self.n_qubits, 1 << self.source_site)?;
        let mut values = vec![Vec::with_capacity(self.steps.len() + 1); self.sites.len()];
        let mut max_norm_error = 0.0f64;
        let mut n_errors = 0;
        let mut digest = 0u64;

        let record = |psi1: &StateVector, psi2: &StateVector, values: &mut Vec<Vec<C64>>| -> Result<()> {
            for (slot, &site) in values.iter_mut().zip(&self.sites) {
                slot.push(pauli_x_cross_term(psi1, psi2, site)?);
            }
            Ok(())
        };
        record(&psi1, &psi2, &mut values)?;

        for step in &self.steps {
            let mut sampled: Vec<(usize, PauliString)> = Vec::new();
            if self.stochastic {
                for (at, op) in step.ops.iter().enumerate() {
                    if let Op::Channel { support, epsilon } = op {
                        if *epsilon > 0.0 {
                            let j = sample_pauli_index(support.arity(), *epsilon, &mut rng);
                            digest = splitmix64(digest ^ j as u64);
                            if j != 0 {
                                let targets: Vec<usize> = support.qubits().collect();
                                sampled.push((at, PauliString::from_index(j, &targets)));
                            }
                        }
                    }
                }
            }
            n_errors += sampled.len();
            if sampled.is_empty() {
                psi1.apply_all(&step.clean)?;
                psi2.apply_all(&step.clean)?;
            } else {
                let fused = fuse_with_errors(self.n_qubits, step, &sampled);
                psi1.apply_all(&fused)?;
                psi2.apply_all(&fused)?;
            }
            max_norm_error = max_norm_error
                .max((psi1.norm() - 1.0).abs())
                .max((psi2.norm() - 1.0).abs());
            record(&psi1, &psi2, &mut values)?;
        }
        Ok(TrajectorySamples {
            values,
            max_norm_error,
            n_errors,
            pauli_digest: digest,
        })
    }
}

fn fuse_with_errors(n_qubits: usize, step: &StepProgram, sampled: &[(usize, PauliString)]) -> Vec<GateMatrix> {
    let mut fuser = Fuser::new(n_qubits);
    let mut next = sampled.iter().peekable();
    for (at, op) in step.ops.iter().enumerate() {
        match op {
            Op::Gate(g) => fuser.push_matrix(*g),
            Op::Channel { .. } => {
                if let Some((_, p)) = next.next_if(|(i, _)| *i == at) {
                    for g in p.gates() {
                        fuser.push_gate(g);
                    }
                }
            }
        }
    }
    fuser.finish_matrices()
}

/// Convenience wrapper compiling an engine for a single trajectory.
pub fn run_trajectory(
    noisy: &NoisyCircuit,
    params: &CouplingParams,
    sites: &[usize],
    seed: u64,
) -> Result<TrajectorySamples> {
    TrajectoryEngine::new(noisy, params.source_site, sites.to_vec())?.run_trajectory(seed)
}

/// Exact fixed-point sums of `Re`, `Im` and their squares per `(site, k)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesAccumulator {
    pub n_sites: usize,
    pub n_times: usize,
    pub count: u64,
    #[serde(with = "i128_strings")]
    pub sum_re: Vec<i128>,
    #[serde(with = "i128_strings")]
    pub sum_im: Vec<i128>,
    #[serde(with = "i128_strings")]
    pub sum_sq_re: Vec<i128>,
    #[serde(with = "i128_strings")]
    pub sum_sq_im: Vec<i128>,
}

fn to_fixed(x: f64) -> i128 {
    (x * 2f64.powi(FIXED_BITS)).round() as i128
}

fn from_fixed(x: i128) -> f64 {
    x as f64 * 2f64.powi(-FIXED_BITS)
}

impl SeriesAccumulator {
    pub fn new(n_sites: usize, n_times: usize) -> Self {
        let len = n_sites * n_times;
        Self {
            n_sites,
            n_times,
            count: 0,
            sum_re: vec![0; len],
            sum_im: vec![0; len],
            sum_sq_re: vec![0; len],
            sum_sq_im: vec![0; len],
        }
    }

    /// Adds `weight` copies of one trajectory.
    pub fn add(&mut self, values: &[Vec<C64>], weight: u64) -> Result<()> {
        if values.len() != self.n_sites || values.iter().any(|v| v.len() != self.n_times) {
            return Err(Error::DimensionMismatch {
                left: self.n_sites * self.n_times,
                right: values.iter().map(Vec::len).sum(),
            });
        }
        let w = weight as i128;
        for (s, row) in values.iter().enumerate() {
            for (k, v) in row.iter().enumerate() {
                let i = s * self.n_times + k;
                self.sum_re[i] += w * to_fixed(v.re);
                self.sum_im[i] += w * to_fixed(v.im);
                self.sum_sq_re[i] += w * to_fixed(v.re * v.re);
                self.sum_sq_im[i] += w * to_fixed(v.im * v.im);
            }
        }
        self.count += weight;
        Ok(())
    }

    pub fn merge(&mut self, other: &SeriesAccumulator) -> Result<()> {
        if (self.n_sites, self.n_times) != (other.n_sites, other.n_times) {
            return Err(Error::DimensionMismatch {
                left: self.n_sites * self.n_times,
                right: other.n_sites * other.n_times,
            });
        }
        let pairs = [
            (&mut self.sum_re, &other.sum_re),
            (&mut self.sum_im, &other.sum_im),
            (&mut self.sum_sq_re, &other.sum_sq_re),
            (&mut self.sum_sq_im, &other.sum_sq_im),
        ];
        for (a, b) in pairs {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.count += other.count;
        Ok(())
    }

    fn mean_and_err(&self, sum: i128, sum_sq: i128) -> (f64, f64) {
        let n = self.count as f64;
        let mean = from_fixed(sum) / n;
        if self.count < 2 {
            return (mean, f64::NAN);
        }
        let var = ((from_fixed(sum_sq) - n * mean * mean) / (n - 1.0)).max(0.0);
        (mean, (var / n).sqrt())
    }

    /// Means and standard errors; `std_err` is `None` below two samples.
    pub fn to_series(&self, source_site: usize, sites: &[usize], dt: f64) -> Result<CorrelatorSeries> {
        if self.count == 0 {
            return Err(Error::InvalidParameter("accumulator holds no trajectories".into()));
        }
        if sites.len() != self.n_sites {
            return Err(Error::DimensionMismatch {
                left: self.n_sites,
                right: sites.len(),
            });
        }
        let mut values = Vec::with_capacity(self.n_sites);
        let mut errs = Vec::with_capacity(self.n_sites);
        for s in 0..self.n_sites {
            let mut row = Vec::with_capacity(self.n_times);
            let mut erow = Vec::with_capacity(self.n_times);
            for k in 0..self.n_times {
                let i = s * self.n_times + k;
                let (re, e_re) = self.mean_and_err(self.sum_re[i], self.sum_sq_re[i]);
                let (im, e_im) = self.mean_and_err(self.sum_im[i], self.sum_sq_im[i]);
                row.push(C64::new(re, im));
                erow.push([e_re, e_im]);
            }
            values.push(row);
            errs.push(erow);
        }
        Ok(CorrelatorSeries {
            source_site,
            sites: sites.to_vec(),
            dt,
            times: times(dt, self.n_times - 1),
            values,
            std_err: (self.count >= 2).then_some(errs),
            n_traj_effective: self.count,
        })
    }
}

mod i128_strings {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[i128], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| x.to_string()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<i128>, D::Error> {
        Vec::<String>::deserialize(d)?
            .iter()
            .map(|x| x.parse::<i128>().map_err(D::Error::custom))
            .collect()
    }
}

/// Everything a shard must agree on to be merged.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunKey {
    pub n: usize,
    pub beta_h: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub source_site: usize,
    pub epsilon1: f64,
    pub epsilon2: f64,
    pub zeta: f64,
    pub t_gate: f64,
    pub master_seed: u64,
    pub n_traj: usize,
    pub sites: Vec<usize>,
}

impl RunKey {
    pub fn new(lattice: &LatticeSpec, params: &CouplingParams, model: &NoiseModel, plan: &TrajectoryPlan) -> Self {
        Self {
            n: lattice.n,
            beta_h: params.beta_h,
            dt: params.dt,
            n_steps: params.n_steps,
            source_site: params.source_site,
            epsilon1: model.epsilon1,
            epsilon2: model.epsilon2,
            zeta: model.zeta,
            t_gate: model.t_gate,
            master_seed: plan.master_seed,
            n_traj: plan.n_traj,
            sites: plan.record_sites.clone(),
        }
    }

    /// Name of the first field that differs, if any.
    pub fn first_difference(&self, other: &RunKey) -> Option<String> {
        let a = serde_json::to_value(self).ok()?;
        let b = serde_json::to_value(other).ok()?;
        let (a, b) = (a.as_object()?, b.as_object()?);
        a.iter().find(|(k, v)| b.get(*k) != Some(*v)).map(|(k, _)| k.clone())
    }
}

/// One shard's contribution, as written to a partial-result file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShardPartial {
    pub key: RunKey,
    pub shard: Shard,
    pub accumulator: SeriesAccumulator,
}

impl ShardPartial {
    pub fn series(&self) -> Result<CorrelatorSeries> {
        self.accumulator
            .to_series(self.key.source_site, &self.key.sites, self.key.dt)
    }
}

/// Runs the shard's share of the ensemble.
pub fn run_ensemble(
    lattice: &LatticeSpec,
    params: &CouplingParams,
    model: &NoiseModel,
    plan: &TrajectoryPlan,
) -> Result<ShardPartial> {
    plan.validate()?;
    params.validate()?;
    let n_qubits = lattice.n_sites();
    let workers = trajectory_workers(n_qubits);
    let required = memory_estimate(n_qubits, workers);
    if let Some(limit) = plan.mem_limit {
        if required > limit {
            return Err(Error::MemoryLimit { required, limit });
        }
    }
    let engine = TrajectoryEngine::from_model(lattice, params, model, plan.record_sites.clone())?;
    let accumulator = run_engine(&engine, plan)?;
    Ok(ShardPartial {
        key: RunKey::new(lattice, params, model, plan),
        shard: plan.shard,
        accumulator,
    })
}

/// Accumulates the shard's trajectories for a prepared engine.
pub fn run_engine(engine: &TrajectoryEngine, plan: &TrajectoryPlan) -> Result<SeriesAccumulator> {
    let n_times = engine.n_steps() + 1;
    let n_sites = engine.sites().len();
    let mut acc = SeriesAccumulator::new(n_sites, n_times);
    let len = plan.shard.len(plan.n_traj);
    if len == 0 {
        return Ok(acc);
    }
    if !engine.is_stochastic() {
        // Every trajectory is identical.
        let first = plan.shard.indices(plan.n_traj).next().unwrap_or(0) as u64;
        let t = engine.run_trajectory(crate::rng::trajectory_seed(plan.master_seed, first))?;
        acc.add(&t.values, len as u64)?;
        return Ok(acc);
    }
    let indices: Vec<usize> = plan.shard.indices(plan.n_traj).collect();
    let run_one = |acc: &mut SeriesAccumulator, k: usize| -> Result<()> {
        let t = engine.run_trajectory(crate::rng::trajectory_seed(plan.master_seed, k as u64))?;
        acc.add(&t.values, 1)
    };
    if trajectory_workers(engine.n_qubits()) > 1 {
        indices
            .into_par_iter()
            .try_fold(
                || SeriesAccumulator::new(n_sites, n_times),
                |mut a, k| run_one(&mut a, k).map(|_| a),
            )
            .try_reduce(
                || SeriesAccumulator::new(n_sites, n_times),
                |mut a, b| a.merge(&b).map(|_| a),
            )
    } else {
        for k in indices {
            run_one(&mut acc, k)?;
        }
        Ok(acc)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MergeOutcome {
    pub key: RunKey,
    pub accumulator: SeriesAccumulator,
    pub series: CorrelatorSeries,
    /// Shard indices absent from the cover; empty when complete.
    pub missing: Vec<usize>,
}

impl MergeOutcome {
    pub fn is_complete(&self) -> bool {
        self.missing.is_empty()
    }
}

/// Pools shard partials. Missing shards are reported, not fatal.
pub fn merge_shards(partials: &[ShardPartial]) -> Result<MergeOutcome> {
    let first = partials
        .first()
        .ok_or_else(|| Error::InvalidParameter("no shards to merge".into()))?;
    let total = first.shard.total;
    let mut seen = BTreeSet::new();
    let mut acc = SeriesAccumulator::new(first.accumulator.n_sites, first.accumulator.n_times);
    for p in partials {
        if let Some(field) = first.key.first_difference(&p.key) {
            return Err(Error::ShardMismatch { field });
        }
        if p.shard.total != total {
            return Err(Error::ShardMismatch {
                field: "shard.total".into(),
            });
        }
        if !seen.insert(p.shard.index) {
            return Err(Error::DuplicateShard(p.shard.index));
        }
        acc.merge(&p.accumulator)?;
    }
    let missing = (0..total).filter(|i| !seen.contains(i)).collect();
    let series = acc.to_series(first.key.source_site, &first.key.sites, first.key.dt)?;
    Ok(MergeOutcome {
        key: first.key.clone(),
        accumulator: acc,
        series,
        missing,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_lattice;
    use crate::noise::NoiseModel;

    fn setup(n: usize, steps: usize) -> (LatticeSpec, CouplingParams) {
        let lat = build_lattice(n).unwrap();
        let params = CouplingParams::for_lattice(&lat, 1.6, 0.25, steps).unwrap();
        (lat, params)
    }

    #[test]
    fn shard_partition() {
        let s = Shard::new(1, 4).unwrap();
        assert_eq!(s.indices(10).collect::<Vec<_>>(), vec![1, 5, 9]);
        assert_eq!(s.len(10), 3);
        assert_eq!(Shard::new(3, 4).unwrap().len(2), 0);
        assert!(Shard::new(4, 4).is_err());
        let total: usize = (0..4).map(|i| Shard::new(i, 4).unwrap().len(1001)).sum();
        assert_eq!(total, 1001);
    }

    #[test]
    fn initial_overlaps_noiseless() {
        let (lat, params) = setup(3, 2);
        let sites: Vec<usize> = (0..9).collect();
        let engine = TrajectoryEngine::from_model(&lat, &params, &NoiseModel::noiseless(), sites).unwrap();
        let t = engine.run_trajectory(1).unwrap();
        for (i, row) in t.values.iter().enumerate() {
            let expect = if i == params.source_site { 1.0 } else { 0.0 };
            assert!((row[0] - C64::new(expect, 0.0)).norm() < 1e-12);
            assert_eq!(row.len(), 3);
        }
        assert!(t.max_norm_error < 1e-9);
    }

    #[test]
    fn same_seed_same_paulis() {
        let (lat, params) = setup(2, 5);
        let model = NoiseModel::from_epsilon2(0.05, 3e5).unwrap();
        let engine = TrajectoryEngine::from_model(&lat, &params, &model, vec![params.source_site]).unwrap();
        let a = engine.run_trajectory(42).unwrap();
        let b = engine.run_trajectory(42).unwrap();
        assert_eq!(a, b);
        assert!(a.n_errors > 0);
        let c = engine.run_trajectory(43).unwrap();
        assert_ne!(a.pauli_digest, c.pauli_digest);
        assert!(a.max_norm_error < 1e-9);
    }

    #[test]
    fn fixed_point_roundtrip() {
        for x in [0.0, 1.0, -1.0, 0.3, -0.123456789] {
            assert!((from_fixed(to_fixed(x)) - x).abs() < 1e-27);
        }
    }

    #[test]
    fn accumulator_statistics() {
        let mut acc = SeriesAccumulator::new(1, 1);
        for x in [1.0, 2.0, 3.0, 4.0] {
            acc.add(&[vec![C64::new(x, -x)]], 1).unwrap();
        }
        let s = acc.to_series(0, &[0], 1.0).unwrap();
        assert!((s.values[0][0] - C64::new(2.5, -2.5)).norm() < 1e-15);
        // sample sd of 1..4 is sqrt(5/3); se = sd / 2
        let se = (5.0f64 / 3.0).sqrt() / 2.0;
        let e = s.std_err.unwrap()[0][0];
        assert!((e[0] - se).abs() < 1e-12 && (e[1] - se).abs() < 1e-12);

        let mut one = SeriesAccumulator::new(1, 1);
        one.add(&[vec![C64::new(0.5, 0.0)]], 1).unwrap();
        assert!(one.to_series(0, &[0], 1.0).unwrap().std_err.is_none());
    }

    #[test]
    fn accumulator_json_roundtrip() {
        let mut acc = SeriesAccumulator::new(1, 2);
        acc.add(&[vec![C64::new(0.25, -1.0), C64::new(1.0, 0.0)]], 3).unwrap();
        let text = serde_json::to_string(&acc).unwrap();
        assert_eq!(serde_json::from_str::<SeriesAccumulator>(&text).unwrap(), acc);
    }

    #[test]
    fn shards_merge_exactly() {
        let (lat, params) = setup(2, 4);
        let model = NoiseModel::from_epsilon2(0.02, 3e5).unwrap();
        let plan = TrajectoryPlan::new(37, 9, vec![0, params.source_site]);
        let whole = run_ensemble(&lat, &params, &model, &plan).unwrap();
        let parts: Vec<_> = (0..3)
            .map(|i| run_ensemble(&lat, &params, &model, &plan.clone().with_shard(Shard::new(i, 3).unwrap())).unwrap())
            .collect();
        let merged = merge_shards(&parts).unwrap();
        assert!(merged.is_complete());
        assert_eq!(merged.accumulator, whole.accumulator);
        assert_eq!(merged.series, whole.series().unwrap());

        let partial = merge_shards(&parts[..2]).unwrap();
        assert_eq!(partial.missing, vec![2]);
        assert_eq!(partial.series.n_traj_effective, 25);
    }

    #[test]
    fn merge_errors() {
        let (lat, params) = setup(2, 1);
        let model = NoiseModel::from_epsilon2(0.01, 0.0).unwrap();
        let plan = TrajectoryPlan::new(4, 1, vec![params.source_site]).with_shard(Shard::new(0, 2).unwrap());
        let a = run_ensemble(&lat, &params, &model, &plan).unwrap();
        assert_eq!(merge_shards(&[a.clone(), a.clone()]), Err(Error::DuplicateShard(0)));

        let other = CouplingParams::for_lattice(&lat, 1.4, 0.25, 1).unwrap();
        let b = run_ensemble(&lat, &other, &model, &plan.clone().with_shard(Shard::new(1, 2).unwrap())).unwrap();
        assert_eq!(
            merge_shards(&[a.clone(), b]),
            Err(Error::ShardMismatch { field: "beta_h".into() })
        );
        let zeta = NoiseModel::from_epsilon2(0.01, 3e5).unwrap();
        let c = run_ensemble(&lat, &params, &zeta, &plan.with_shard(Shard::new(1, 2).unwrap())).unwrap();
        assert_eq!(merge_shards(&[a, c]), Err(Error::ShardMismatch { field: "zeta".into() }));
    }

    #[test]
    fn memory_refusal_reports_bytes() {
        let lat = build_lattice(6).unwrap();
        let params = CouplingParams::for_lattice(&lat, 1.6, 0.25, 1).unwrap();
        let mut plan = TrajectoryPlan::new(1, 0, vec![params.source_site]);
        plan.mem_limit = Some(32 << 30);
        match run_ensemble(&lat, &params, &NoiseModel::noiseless(), &plan) {
            Err(Error::MemoryLimit { required, .. }) => assert!(required >= 2 * (1u64 << 36) * 16),
            other => panic!("expected refusal, got {other:?}"),
        }
    }

    #[test]
    fn noiseless_ensemble_has_zero_spread() {
        let (lat, params) = setup(2, 3);
        let plan = TrajectoryPlan::new(10, 5, vec![params.source_site]);
        let r = run_ensemble(&lat, &params, &NoiseModel::noiseless(), &plan).unwrap();
        let s = r.series().unwrap();
        assert_eq!(s.n_traj_effective, 10);
        assert!(s.std_err.unwrap()[0].iter().all(|e| e[0] < 1e-6 && e[1] < 1e-6));
    }
}
