//! Monte-Carlo wave-function unraveling with waiting-time jump sampling.
//!
//! Between jumps the unnormalized state evolves under
//! `H_eff = H - i Σ κ l† l`. A jump fires when `‖ψ‖²` drops below a uniform
//! threshold; channel `k` is picked with weight `κ_k ‖l_k ψ‖²`. Backends
//! that can split a step locate the crossing by bisection down to
//! `dt / 2^levels`; the others jump at the end of the step, which is first
//! order in `dt`. One loop drives every backend, so backends fed the same
//! seed consume random numbers identically.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::basis::Basis;
use crate::darkstate::CorrelatorOrder;
use crate::error::{Error, Result};
use crate::fock::{hopping_correlator_op, number_op, parity_op, total_number, FockSpace, LatticeOperator, LocalOp, StateVector};
use crate::linalg::{eigh, expm};
use crate::lindblad::{ChainModel, LindbladModel};
use crate::sparse::CsrMatrix;
use crate::stats::{mean_stderr, stream_rng};
use crate::C64;

const I: C64 = C64::new(0.0, 1.0);

/// Quantities recorded along trajectories. Values are real parts of the
/// normalized expectation.
#[derive(Clone, Debug)]
pub enum Observable {
    Number(usize),
    Parity(usize),
    Correlator {
        i: usize,
        j: usize,
        order: CorrelatorOrder,
    },
    /// Site average of `(1 - P_j)/2`.
    DefectDensity,
    TotalNumber,
    /// Arbitrary operator on the full space (dense backend only).
    Operator(Arc<LatticeOperator>),
}

impl Observable {
    pub fn label(&self) -> String {
        match self {
            Self::Number(i) => format!("n_{i}"),
            Self::Parity(i) => format!("P_{i}"),
            Self::Correlator { i, j, order: CorrelatorOrder::Single } => format!("a+_{i}a_{j}"),
            Self::Correlator { i, j, order: CorrelatorOrder::Pair } => format!("a+2_{i}a2_{j}"),
            Self::DefectDensity => "defect_density".into(),
            Self::TotalNumber => "N".into(),
            Self::Operator(op) => op.label.clone(),
        }
    }

    /// Full-space operator for dense measurement.
    pub fn operator(&self, space: &FockSpace) -> Result<LatticeOperator> {
        match self {
            Self::Number(i) => number_op(*i, space),
            Self::Parity(i) => parity_op(*i, space),
            Self::Correlator { i, j, order } => hopping_correlator_op(*i, *j, order.power(), space),
            Self::TotalNumber => Ok(total_number(space)),
            Self::DefectDensity => {
                let basis = space.basis();
                let l = space.sites() as f64;
                let trip = (0..space.dim())
                    .map(|k| {
                        let odd = basis.digits(k).iter().filter(|&&n| n % 2 == 1).count();
                        (k, k, C64::new(odd as f64 / l, 0.0))
                    })
                    .collect();
                Ok(LatticeOperator {
                    matrix: CsrMatrix::from_triplets(space.dim(), space.dim(), trip),
                    support: (0..space.sites()).collect(),
                    hermitian: true,
                    local: None,
                    label: "defect_density".into(),
                })
            }
            Self::Operator(op) => Ok((**op).clone()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrajectoryConfig {
    pub dt: f64,
    pub t_final: f64,
    /// Observables are recorded every `sample_every` steps (and at t = 0).
    pub sample_every: usize,
    pub n_traj: usize,
    pub seed: u64,
    pub observables: Vec<Observable>,
    pub jump_log: bool,
}

impl TrajectoryConfig {
    pub fn new(dt: f64, t_final: f64, sample_interval: f64, n_traj: usize, seed: u64) -> Result<Self> {
        let ratio = sample_interval / dt;
        let sample_every = ratio.round() as usize;
        if sample_every == 0 || (ratio - sample_every as f64).abs() > 1e-6 * ratio {
            return Err(Error::InvalidArgument(format!(
                "sample interval {sample_interval} is not a whole number of steps dt = {dt}"
            )));
        }
        let cfg = Self { dt, t_final, sample_every, n_traj, seed, observables: vec![], jump_log: false };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_observables(mut self, obs: Vec<Observable>) -> Self {
        self.observables = obs;
        self
    }

    pub fn with_jump_log(mut self, on: bool) -> Self {
        self.jump_log = on;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final > 0.0) {
            return Err(Error::InvalidArgument(format!("t_final must be positive, got {}", self.t_final)));
        }
        if self.n_traj == 0 {
            return Err(Error::InvalidArgument("n_traj must be at least 1".into()));
        }
        if self.sample_every == 0 {
            return Err(Error::InvalidArgument("sample_every must be at least 1".into()));
        }
        Ok(())
    }

    pub fn n_steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn sample_times(&self) -> Vec<f64> {
        (0..=self.n_steps()).step_by(self.sample_every).map(|k| k as f64 * self.dt).collect()
    }

    /// Rejects steps above `0.05 / max_k κ_k λ_max(l_k† l_k)`.
    pub fn check_step(&self, max_rate: f64) -> Result<()> {
        if max_rate > 0.0 && self.dt > 0.05 / max_rate * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "dt = {} too large for jump rate scale {max_rate:.4}; need dt <= {:.3e}",
                self.dt,
                0.05 / max_rate
            )));
        }
        Ok(())
    }
}

/// Largest local jump rate `κ λ_max(l† l)` from local matrices.
pub fn max_local_rate(chain: &ChainModel) -> f64 {
    chain
        .channels
        .iter()
        .map(|c| {
            let ldl = c.op.matrix.adjoint() * &c.op.matrix;
            c.rate * eigh(&ldl).0.max()
        })
        .fold(0.0, f64::max)
}

/// Largest jump rate `κ λ_max(l† l)` within the model basis.
pub fn max_model_rate(model: &LindbladModel) -> f64 {
    (0..model.channels().len())
        .map(|k| model.channels()[k].rate * model.jump_dag_jump(k).spectral_radius_psd(300))
        .fold(0.0, f64::max)
}

/// State representation driven by the trajectory loop.
pub trait TrajectoryBackend {
    /// One step of `exp(-i H_eff dt)` (not renormalized).
    fn propagate(&mut self) -> Result<()>;
    fn norm_sqr(&self) -> f64;
    /// `κ_k ‖l_k ψ‖²` for every channel, on the current unnormalized state.
    fn jump_weights(&self) -> Result<Vec<f64>>;
    /// Applies channel `k` and renormalizes.
    fn apply_jump(&mut self, k: usize) -> Result<()>;
    /// Configured observables on the normalized state.
    fn measure(&self) -> Result<Vec<f64>>;
    /// Bisection depth available for locating jumps inside a step; 0 means
    /// jumps fire at the end of the step.
    fn substep_levels(&self) -> usize {
        0
    }
    /// Propagates by `dt / 2^level`. Only called for `level <= substep_levels()`.
    fn propagate_part(&mut self, _level: usize) -> Result<()> {
        Err(Error::Unsupported("backend cannot split a step".into()))
    }
    /// Pushes the current state on a checkpoint stack.
    fn save(&mut self) {}
    /// Pops the last checkpoint, restoring it when `restore` is set.
    fn pop(&mut self, _restore: bool) {}
}

/// Builds one backend per trajectory.
pub trait TrajectoryEngine: Sync {
    type Backend<'a>: TrajectoryBackend
    where
        Self: 'a;
    fn spawn(&self) -> Result<Self::Backend<'_>>;
    fn observable_labels(&self) -> Vec<String>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JumpEvent {
    pub step: usize,
    pub channel: usize,
}

#[derive(Clone, Debug)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    /// `values[obs][sample]`.
    pub values: Vec<Vec<f64>>,
    pub jumps: Vec<JumpEvent>,
}

/// Runs one trajectory on random stream `stream` of `cfg.seed`.
pub fn run_trajectory<B: TrajectoryBackend>(backend: &mut B, cfg: &TrajectoryConfig, stream: u64) -> Result<TrajectoryRecord> {
    cfg.validate()?;
    let mut rng = stream_rng(cfg.seed, stream);
    let mut threshold: f64 = rng.random();
    let first = backend.measure()?;
    let mut values: Vec<Vec<f64>> = first.into_iter().map(|v| vec![v]).collect();
    let mut times = vec![0.0];
    let mut jumps = Vec::new();
    let levels = backend.substep_levels();
    for step in 1..=cfg.n_steps() {
        let mut jumper = Jumper { rng: &mut rng, threshold: &mut threshold, jumps: &mut jumps, step, levels };
        if levels > 0 {
            jumper.advance(backend, 0)?;
        } else {
            backend.propagate()?;
            if backend.norm_sqr() < *jumper.threshold {
                jumper.jump(backend)?;
            }
        }
        if step % cfg.sample_every == 0 {
            for (series, v) in values.iter_mut().zip(backend.measure()?) {
                series.push(v);
            }
            times.push(step as f64 * cfg.dt);
        }
    }
    Ok(TrajectoryRecord { times, values, jumps })
}

struct Jumper<'a> {
    rng: &'a mut ChaCha8Rng,
    threshold: &'a mut f64,
    jumps: &'a mut Vec<JumpEvent>,
    step: usize,
    levels: usize,
}

impl Jumper<'_> {
    fn jump<B: TrajectoryBackend>(&mut self, backend: &mut B) -> Result<()> {
        let w = backend.jump_weights()?;
        let total: f64 = w.iter().sum();
        if !(total > 0.0) {
            return Err(Error::NoChannel);
        }
        let target = self.rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = w.iter().rposition(|&x| x > 0.0).expect("positive total");
        for (k, &x) in w.iter().enumerate() {
            acc += x;
            if target < acc && x > 0.0 {
                pick = k;
                break;
            }
        }
        backend.apply_jump(pick)?;
        *self.threshold = self.rng.random();
        self.jumps.push(JumpEvent { step: self.step, channel: pick });
        Ok(())
    }

    /// Advances by `dt / 2^level`, splitting the interval while it contains
    /// a threshold crossing. The norm only decreases between jumps, so the
    /// end of an interval decides whether it holds a crossing.
    fn advance<B: TrajectoryBackend>(&mut self, backend: &mut B, level: usize) -> Result<()> {
        backend.save();
        backend.propagate_part(level)?;
        if backend.norm_sqr() >= *self.threshold {
            backend.pop(false);
            return Ok(());
        }
        if level == self.levels {
            backend.pop(false);
            return self.jump(backend);
        }
        backend.pop(true);
        self.advance(backend, level + 1)?;
        self.advance(backend, level + 1)
    }
}

#[derive(Clone, Debug)]
pub struct ObservableSeries {
    pub times: Vec<f64>,
    pub labels: Vec<String>,
    /// `mean[obs][sample]`.
    pub mean: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
    pub n_traj: usize,
}

impl ObservableSeries {
    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

#[derive(Clone, Debug)]
pub struct EnsembleResult {
    pub series: ObservableSeries,
    pub jump_logs: Option<Vec<Vec<JumpEvent>>>,
    pub total_jumps: usize,
}

/// Runs `cfg.n_traj` independent trajectories (trajectory `k` uses stream
/// `k`) on the current rayon pool. Reductions run in trajectory order, so the
/// result does not depend on the thread count.
pub fn run_ensemble<E: TrajectoryEngine>(engine: &E, cfg: &TrajectoryConfig) -> Result<EnsembleResult> {
    cfg.validate()?;
    let records: Vec<TrajectoryRecord> = (0..cfg.n_traj)
        .into_par_iter()
        .map(|k| {
            let mut b = engine.spawn()?;
            run_trajectory(&mut b, cfg, k as u64)
        })
        .collect::<Result<_>>()?;
    let labels = engine.observable_labels();
    let times = records[0].times.clone();
    let n_obs = labels.len();
    let mut mean = vec![Vec::with_capacity(times.len()); n_obs];
    let mut stderr = vec![Vec::with_capacity(times.len()); n_obs];
    let mut buf = Vec::with_capacity(records.len());
    for o in 0..n_obs {
        for s in 0..times.len() {
            buf.clear();
            buf.extend(records.iter().map(|r| r.values[o][s]));
            let (m, e) = mean_stderr(&buf);
            mean[o].push(m);
            stderr[o].push(e);
        }
    }
    let total_jumps = records.iter().map(|r| r.jumps.len()).sum();
    let jump_logs = cfg.jump_log.then(|| records.into_iter().map(|r| r.jumps).collect());
    Ok(EnsembleResult { series: ObservableSeries { times, labels, mean, stderr, n_traj: cfg.n_traj }, jump_logs, total_jumps })
}

/// First time a series reaches `level` times its saturation value (mean of the
/// final 10% of samples), interpolating linearly between samples.
pub fn equilibrium_time(times: &[f64], values: &[f64], level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must be in (0, 1), got {level}")));
    }
    let n = values.len();
    if n < 2 || times.len() != n {
        return Err(Error::DimensionMismatch { expected: times.len(), got: n });
    }
    let tail = &values[n - (n / 10).max(1)..];
    let sat = tail.iter().sum::<f64>() / tail.len() as f64;
    let spread = tail.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - tail.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if sat == 0.0 || spread > 0.05 * sat.abs() {
        return Err(Error::NotSaturated(format!("final samples span {spread:.3e} around {sat:.3e}")));
    }
    let target = level * sat;
    let above = |v: f64| if sat > 0.0 { v >= target } else { v <= target };
    if above(values[0]) {
        return Ok(times[0]);
    }
    for k in 1..n {
        if above(values[k]) {
            let (v0, v1) = (values[k - 1], values[k]);
            let f = if v1 == v0 { 1.0 } else { (target - v0) / (v1 - v0) };
            return Ok(times[k - 1] + f * (times[k] - times[k - 1]));
        }
    }
    Err(Error::NotSaturated("level never reached".into()))
}

/// How the dense backend advances `exp(-i H_eff dt)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DensePropagator {
    /// Dense matrix exponential of the full `H_eff`.
    Exact,
    /// Second-order Trotter product of bond gates, the same schedule the MPS
    /// backend uses.
    Trotter2,
}

/// One bond gate of a Trotter step.
#[derive(Clone, Debug)]
pub struct BondGate {
    pub bond: usize,
    pub matrix: DMatrix<C64>,
}

/// `exp(-i K_b dt)` for each bond in the order even(dt/2), odd(dt),
/// even(dt/2), where `K_b` collects the bond's share of `H_eff`. Single-site
/// terms are attached to the bond on their right (the last site to the last
/// bond).
pub fn trotter_schedule(
    sites: usize,
    d: usize,
    h_terms: &[LocalOp],
    channels: &[(LocalOp, f64)],
    dt: f64,
) -> Result<Vec<BondGate>> {
    if sites < 2 {
        return Err(Error::Unsupported("Trotter schedule needs at least two sites".into()));
    }
    let n_bonds = sites - 1;
    let id = DMatrix::<C64>::identity(d, d);
    let mut k_bond = vec![DMatrix::<C64>::zeros(d * d, d * d); n_bonds];
    let mut place = |op: &LocalOp, m: DMatrix<C64>| -> Result<()> {
        match op.width {
            1 => {
                let s = op.first_site;
                if s < n_bonds {
                    k_bond[s] += m.kronecker(&id);
                } else {
                    k_bond[n_bonds - 1] += id.kronecker(&m);
                }
                Ok(())
            }
            2 if op.first_site < n_bonds => {
                k_bond[op.first_site] += m;
                Ok(())
            }
            w => Err(Error::Unsupported(format!("term of width {w} at site {} is not bond-local", op.first_site))),
        }
    };
    for t in h_terms {
        place(t, t.matrix.clone())?;
    }
    for (op, rate) in channels {
        let ldl = op.matrix.adjoint() * &op.matrix;
        place(op, ldl * (-I * *rate))?;
    }
    let gate = |b: usize, tau: f64| BondGate { bond: b, matrix: expm(&(&k_bond[b] * (-I * tau))) };
    let mut out = Vec::new();
    for b in (0..n_bonds).step_by(2) {
        out.push(gate(b, dt / 2.0));
    }
    for b in (1..n_bonds).step_by(2) {
        out.push(gate(b, dt));
    }
    for b in (0..n_bonds).step_by(2) {
        out.push(gate(b, dt / 2.0));
    }
    Ok(out)
}

/// Trotter schedule from a dense model's local operator forms.
pub fn model_schedule(model: &LindbladModel, dt: f64) -> Result<Vec<BondGate>> {
    let space = uniform_space(model.basis())?;
    let mut h = Vec::new();
    for t in model.h_terms() {
        h.push(t.local.clone().ok_or_else(|| Error::Unsupported(format!("{} has no local form", t.label)))?);
    }
    let mut ch = Vec::new();
    for c in model.channels() {
        let local = c.op.local.clone().ok_or_else(|| Error::Unsupported(format!("{} has no local form", c.op.label)))?;
        ch.push((local, c.rate));
    }
    trotter_schedule(space.sites(), space.local_dim(), &h, &ch, dt)
}

/// Chain space behind a basis with equal local dimensions.
pub fn uniform_space(basis: &Basis) -> Result<FockSpace> {
    let dims = basis.dims();
    if dims.iter().any(|&d| d != dims[0]) || dims[0] < 2 {
        return Err(Error::Unsupported("basis is not a uniform Fock chain".into()));
    }
    FockSpace::new(dims.len(), dims[0] - 1)
}

/// Bisection depth of the exact dense propagator.
const EXACT_LEVELS: usize = 12;

enum DenseStep {
    /// `exp(-i H_eff dt / 2^k)` for `k = 0..=EXACT_LEVELS`.
    Exact(Vec<DMatrix<C64>>),
    Gates(Vec<CsrMatrix>),
}

/// Shared data for dense trajectories.
pub struct DenseEngine {
    model: LindbladModel,
    psi0: DVector<C64>,
    step: DenseStep,
    observables: Vec<CsrMatrix>,
    labels: Vec<String>,
}

impl DenseEngine {
    /// `psi0` is re-expressed in the model basis (it must have no weight
    /// outside it) and normalized.
    pub fn new(model: &LindbladModel, psi0: &StateVector, cfg: &TrajectoryConfig, propagator: DensePropagator) -> Result<Self> {
        cfg.check_step(max_model_rate(model))?;
        let psi = psi0.restrict(model.basis())?.normalized()?;
        let basis = model.basis();
        let step = match propagator {
            DensePropagator::Exact => {
                let k = model.effective_hamiltonian().to_dense();
                let parts = (0..=EXACT_LEVELS).map(|l| expm(&(&k * (-I * (cfg.dt / (1u64 << l) as f64))))).collect();
                DenseStep::Exact(parts)
            }
            DensePropagator::Trotter2 => {
                let space = uniform_space(basis)?;
                let gates = model_schedule(model, cfg.dt)?;
                let mut mats = Vec::with_capacity(gates.len());
                for g in gates {
                    let full = crate::fock::embed_local(&g.matrix, &[g.bond, g.bond + 1], &space)?;
                    mats.push(match basis.states() {
                        None => full,
                        Some(states) => full.restrict(states),
                    });
                }
                DenseStep::Gates(mats)
            }
        };
        let mut observables = Vec::with_capacity(cfg.observables.len());
        if !cfg.observables.is_empty() {
            let needs_space = cfg.observables.iter().any(|o| !matches!(o, Observable::Operator(_)));
            let space = if needs_space { Some(uniform_space(basis)?) } else { None };
            for o in &cfg.observables {
                let op = match (o, &space) {
                    (Observable::Operator(op), _) => (**op).clone(),
                    (_, Some(sp)) => o.operator(sp)?,
                    _ => unreachable!("space built when needed"),
                };
                if op.dim() != basis.full_dim() {
                    return Err(Error::DimensionMismatch { expected: basis.full_dim(), got: op.dim() });
                }
                observables.push(op.matrix_in(basis));
            }
        }
        Ok(Self {
            model: model.clone(),
            psi0: psi.amplitudes,
            step,
            observables,
            labels: cfg.observables.iter().map(|o| o.label()).collect(),
        })
    }
}

pub struct DenseBackend<'a> {
    engine: &'a DenseEngine,
    psi: DVector<C64>,
    saved: Vec<DVector<C64>>,
}

impl DenseBackend<'_> {
    pub fn state(&self) -> &DVector<C64> {
        &self.psi
    }
}

impl TrajectoryEngine for DenseEngine {
    type Backend<'a> = DenseBackend<'a>;

    fn spawn(&self) -> Result<DenseBackend<'_>> {
        Ok(DenseBackend { engine: self, psi: self.psi0.clone(), saved: Vec::new() })
    }

    fn observable_labels(&self) -> Vec<String> {
        self.labels.clone()
    }
}

impl TrajectoryBackend for DenseBackend<'_> {
    fn propagate(&mut self) -> Result<()> {
        match &self.engine.step {
            DenseStep::Exact(u) => self.psi = &u[0] * &self.psi,
            DenseStep::Gates(gs) => {
                for g in gs {
                    self.psi = g.mul_vec(&self.psi);
                }
            }
        }
        Ok(())
    }

    fn norm_sqr(&self) -> f64 {
        self.psi.norm_squared()
    }

    fn jump_weights(&self) -> Result<Vec<f64>> {
        Ok(self
            .engine
            .model
            .channels()
            .iter()
            .enumerate()
            .map(|(k, c)| c.rate * self.engine.model.jump_matrix(k).mul_vec(&self.psi).norm_squared())
            .collect())
    }

    fn apply_jump(&mut self, k: usize) -> Result<()> {
        let v = self.engine.model.jump_matrix(k).mul_vec(&self.psi);
        let n = v.norm();
        if n == 0.0 {
            return Err(Error::NoChannel);
        }
        self.psi = v / C64::new(n, 0.0);
        Ok(())
    }

    fn substep_levels(&self) -> usize {
        match self.engine.step {
            DenseStep::Exact(_) => EXACT_LEVELS,
            DenseStep::Gates(_) => 0,
        }
    }

    fn propagate_part(&mut self, level: usize) -> Result<()> {
        match &self.engine.step {
            DenseStep::Exact(u) if level < u.len() => {
                self.psi = &u[level] * &self.psi;
                Ok(())
            }
            _ => Err(Error::Unsupported(format!("no sub-step propagator at level {level}"))),
        }
    }

    fn save(&mut self) {
        self.saved.push(self.psi.clone());
    }

    fn pop(&mut self, restore: bool) {
        let s = self.saved.pop().expect("checkpoint saved");
        if restore {
            self.psi = s;
        }
    }

    fn measure(&self) -> Result<Vec<f64>> {
        let n2 = self.psi.norm_squared();
        Ok(self.engine.observables.iter().map(|o| self.psi.dotc(&o.mul_vec(&self.psi)).re / n2).collect())
    }
}
