//! Dense density-matrix evolution of
//! `dρ/dt = -i[H, ρ] + Σ_k κ_k (2 l_k ρ l_k† - l_k† l_k ρ - ρ l_k† l_k)`.
//!
//! This is the reference backend: everything else is checked against it.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::basis::Basis;
use crate::error::{Error, Result};
use crate::fock::{
    hamiltonian_site_matrix, heal_bond_channel, heal_jump, heal_jump_hardcore, hop_noise_jump, lattice_operator, pair_jump,
    FockSpace, HamiltonianKind, HopDirection, LatticeOperator, LocalOp, StateVector,
};
use crate::linalg::{axpy, eigh, hermitian_fn, hermitize, max_abs, thin_svd, trace};
use crate::ode::{integrate, Tolerance};
use crate::sparse::CsrMatrix;
use crate::C64;

const I: C64 = C64::new(0.0, 1.0);

#[derive(Clone, Debug)]
pub struct Channel {
    pub op: LatticeOperator,
    pub rate: f64,
}

/// Hamiltonian plus jump channels, with all matrices cached in one basis
/// (the full space or a photon-number sector).
#[derive(Clone, Debug)]
pub struct LindbladModel {
    basis: Basis,
    h_terms: Vec<LatticeOperator>,
    channels: Vec<Channel>,
    h: CsrMatrix,
    jumps: Vec<CsrMatrix>,
    jumps_dag: Vec<CsrMatrix>,
    /// `l† l` per channel, without the rate.
    ldl: Vec<CsrMatrix>,
}

impl LindbladModel {
    /// Builds a model in the full space of `basis`. Hamiltonian terms are kept
    /// separately (the MPS backend needs their local form) and summed.
    pub fn new(basis: Basis, h_terms: Vec<LatticeOperator>, channels: Vec<Channel>) -> Result<Self> {
        let dim = basis.full_dim();
        for op in h_terms.iter().chain(channels.iter().map(|c| &c.op)) {
            if op.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: op.dim() });
            }
        }
        for t in &h_terms {
            let scale = t.matrix.max_abs().max(1.0);
            if !t.matrix.is_hermitian(1e-12 * scale) {
                return Err(Error::InvalidArgument(format!("Hamiltonian term {} is not Hermitian", t.label)));
            }
        }
        if let Some(c) = channels.iter().find(|c| !(c.rate >= 0.0 && c.rate.is_finite())) {
            return Err(Error::InvalidArgument(format!("rate of {} must be finite and >= 0, got {}", c.op.label, c.rate)));
        }
        let full = Basis::full(basis.dims().to_vec());
        let mut m =
            Self { basis: full, h_terms, channels, h: CsrMatrix::zeros(0, 0), jumps: vec![], jumps_dag: vec![], ldl: vec![] };
        m.rebuild_cache();
        if basis.is_full() {
            Ok(m)
        } else {
            m.restrict(&basis)
        }
    }

    pub fn from_space(space: &FockSpace, h_terms: Vec<LatticeOperator>, channels: Vec<Channel>) -> Result<Self> {
        Self::new(space.basis(), h_terms, channels)
    }

    fn rebuild_cache(&mut self) {
        let n = self.basis.len();
        let mut h = CsrMatrix::zeros(n, n);
        for t in &self.h_terms {
            h = h.add(&t.matrix_in(&self.basis));
        }
        self.h = h;
        self.jumps = self.channels.iter().map(|c| c.op.matrix_in(&self.basis)).collect();
        self.jumps_dag = self.jumps.iter().map(|l| l.adjoint()).collect();
        self.ldl = self.jumps.iter().zip(&self.jumps_dag).map(|(l, ld)| ld.matmul(l)).collect();
    }

    /// Projects the model onto an invariant subspace such as a photon-number
    /// sector. Fails if any operator couples the subspace to its complement.
    pub fn restrict(&self, basis: &Basis) -> Result<Self> {
        if basis.dims() != self.basis.dims() {
            return Err(Error::DimensionMismatch { expected: self.basis.full_dim(), got: basis.full_dim() });
        }
        let states: Vec<usize> = (0..basis.len()).map(|k| basis.full_index(k)).collect();
        let mut inside = vec![false; basis.full_dim()];
        for &s in &states {
            inside[s] = true;
        }
        for op in self.h_terms.iter().chain(self.channels.iter().map(|c| &c.op)) {
            for (r, c, v) in op.matrix.triplets() {
                if inside[c] != inside[r] && v.norm() > 0.0 {
                    return Err(Error::InvalidArgument(format!("{} couples the subspace to its complement", op.label)));
                }
            }
        }
        let mut out = self.clone();
        out.basis = basis.clone();
        out.rebuild_cache();
        Ok(out)
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn h_terms(&self) -> &[LatticeOperator] {
        &self.h_terms
    }

    pub fn hamiltonian(&self) -> &CsrMatrix {
        &self.h
    }

    pub fn jump_matrix(&self, k: usize) -> &CsrMatrix {
        &self.jumps[k]
    }

    pub fn jump_dag_jump(&self, k: usize) -> &CsrMatrix {
        &self.ldl[k]
    }

    /// `H_eff = H - i Σ κ l† l` in the model basis.
    pub fn effective_hamiltonian(&self) -> CsrMatrix {
        let mut k = self.h.clone();
        for (c, ldl) in self.channels.iter().zip(&self.ldl) {
            if c.rate > 0.0 {
                k = k.sub(&ldl.scale(I * c.rate));
            }
        }
        k
    }

    /// Dense superoperator in column-stacking convention.
    pub fn superoperator(&self) -> Result<DMatrix<C64>> {
        let n = self.dim();
        if n > STEADY_STATE_LIMIT {
            return Err(Error::TooLarge { dim: n, limit: STEADY_STATE_LIMIT });
        }
        let id = DMatrix::<C64>::identity(n, n);
        let k = self.effective_hamiltonian().to_dense();
        let mut s = id.kronecker(&k) * (-I) + k.map(|v| v.conj()).kronecker(&id) * I;
        for (c, l) in self.channels.iter().zip(&self.jumps) {
            if c.rate > 0.0 {
                let ld = l.to_dense();
                s += ld.map(|v| v.conj()).kronecker(&ld) * C64::new(2.0 * c.rate, 0.0);
            }
        }
        Ok(s)
    }
}

/// Largest basis dimension accepted by the dense steady-state solver.
pub const STEADY_STATE_LIMIT: usize = 32;

/// Jump channel given by its local matrix on consecutive sites.
#[derive(Clone, Debug)]
pub struct LocalChannel {
    pub op: LocalOp,
    pub rate: f64,
    pub label: String,
}

/// Open-chain model kept in local form. The MPS backend consumes it directly;
/// [`ChainModel::lindblad`] embeds it into the full space for dense work.
#[derive(Clone, Debug)]
pub struct ChainModel {
    pub space: FockSpace,
    pub h_terms: Vec<LocalOp>,
    pub channels: Vec<LocalChannel>,
}

impl ChainModel {
    pub fn sites(&self) -> usize {
        self.space.sites()
    }

    pub fn local_dim(&self) -> usize {
        self.space.local_dim()
    }

    pub fn lindblad(&self) -> Result<LindbladModel> {
        let span = |op: &LocalOp| (op.first_site..op.first_site + op.width).collect::<Vec<_>>();
        let mut h_terms = Vec::with_capacity(self.h_terms.len());
        for (k, t) in self.h_terms.iter().enumerate() {
            let mut op = lattice_operator(&t.matrix, &span(t), &self.space, format!("h{k}"))?;
            op.hermitian = true;
            h_terms.push(op);
        }
        let mut channels = Vec::with_capacity(self.channels.len());
        for c in &self.channels {
            let op = lattice_operator(&c.op.matrix, &span(&c.op), &self.space, c.label.clone())?;
            channels.push(Channel { op, rate: c.rate });
        }
        LindbladModel::from_space(&self.space, h_terms, channels)
    }
}

/// Builder for open-chain models. Operators are taken from the fock builders
/// on a two- or three-site space and placed along the chain.
#[derive(Clone, Debug)]
pub struct ModelBuilder {
    space: FockSpace,
    h_terms: Vec<LocalOp>,
    channels: Vec<LocalChannel>,
}

impl ModelBuilder {
    pub fn new(space: &FockSpace) -> Self {
        Self { space: *space, h_terms: vec![], channels: vec![] }
    }

    pub fn space(&self) -> &FockSpace {
        &self.space
    }

    fn small(&self, sites: usize) -> Result<FockSpace> {
        if self.space.is_periodic() {
            return Err(Error::Unsupported("chain models are open chains".into()));
        }
        if self.space.sites() < sites {
            return Err(Error::InvalidArgument(format!("operator needs {sites} sites, chain has {}", self.space.sites())));
        }
        FockSpace::new(sites, self.space.n_max())
    }

    fn push(&mut self, first_site: usize, op: &LatticeOperator, rate: f64, label: String) {
        let width = op.dim().ilog(self.space.local_dim()) as usize;
        self.channels.push(LocalChannel { op: LocalOp { first_site, width, matrix: op.matrix.to_dense() }, rate, label });
    }

    /// `l_j` on every bond at rate `kappa`.
    pub fn pair_jumps(mut self, kappa: f64) -> Result<Self> {
        let sp2 = self.small(2)?;
        let op = pair_jump(0, &sp2)?;
        for j in 0..self.space.n_bonds() {
            self.push(j, &op, kappa, format!("l_{j}"));
        }
        Ok(self)
    }

    /// Bond-decomposed healing: channels `a†_{j±1} a_j (1-P_j)/2` at rate
    /// `Γ/4` each, so an isolated defect hops each way at rate `Γ/2`.
    pub fn heal_bonds(mut self, gamma: f64) -> Result<Self> {
        let sp2 = self.small(2)?;
        let right = heal_bond_channel(0, HopDirection::Right, &sp2)?;
        let left = heal_bond_channel(1, HopDirection::Left, &sp2)?;
        for b in 0..self.space.n_bonds() {
            self.push(b, &right, gamma / 4.0, format!("c>_{b}"));
            self.push(b, &left, gamma / 4.0, format!("c<_{}", b + 1));
        }
        Ok(self)
    }

    /// Three-site healing jumps `c_j` with the same per-hop normalization as
    /// [`Self::heal_bonds`].
    pub fn heal_sites(mut self, gamma: f64) -> Result<Self> {
        let l = self.space.sites();
        let sp2 = self.small(2)?;
        for j in 0..l {
            if j == 0 {
                self.push(0, &heal_jump(0, &sp2, 1.0)?, gamma / 4.0, "c_0".into());
            } else if j == l - 1 {
                self.push(l - 2, &heal_jump(1, &sp2, 1.0)?, gamma / 4.0, format!("c_{j}"));
            } else {
                let sp3 = self.small(3)?;
                self.push(j - 1, &heal_jump(1, &sp3, 1.0)?, gamma / 4.0, format!("c_{j}"));
            }
        }
        Ok(self)
    }

    pub fn heal_hardcore(mut self, rate: f64) -> Result<Self> {
        let op = heal_jump_hardcore(0, &self.small(2)?)?;
        for j in 0..self.space.n_bonds() {
            self.push(j, &op, rate, format!("c'_{j}"));
        }
        Ok(self)
    }

    /// Incoherent hopping `a†_j a_{j+1}` and its reverse on every bond.
    pub fn hop_noise(mut self, rate: f64) -> Result<Self> {
        let op = hop_noise_jump(0, &self.small(2)?)?;
        let back = op.adjoint();
        for j in 0..self.space.n_bonds() {
            self.push(j, &op, rate, format!("l'_{j}"));
            self.push(j, &back, rate, format!("l'†_{j}"));
        }
        Ok(self)
    }

    pub fn hamiltonian(mut self, kind: HamiltonianKind) -> Result<Self> {
        let m = hamiltonian_site_matrix(kind, self.space.local_dim())?;
        for s in 0..self.space.sites() {
            self.h_terms.push(LocalOp { first_site: s, width: 1, matrix: m.clone() });
        }
        Ok(self)
    }

    /// Adds a channel given as a lattice operator with a local form.
    pub fn channel(mut self, op: &LatticeOperator, rate: f64) -> Result<Self> {
        let local =
            op.local.clone().ok_or_else(|| Error::Unsupported(format!("{} has no local form on consecutive sites", op.label)))?;
        self.channels.push(LocalChannel { op: local, rate, label: op.label.clone() });
        Ok(self)
    }

    /// Drops channels with zero rate.
    pub fn build_chain(self) -> ChainModel {
        let channels = self.channels.into_iter().filter(|c| c.rate > 0.0).collect();
        ChainModel { space: self.space, h_terms: self.h_terms, channels }
    }

    pub fn build(self) -> Result<LindbladModel> {
        self.build_chain().lindblad()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    pub matrix: DMatrix<C64>,
    pub basis: Basis,
}

impl DensityMatrix {
    pub fn new(matrix: DMatrix<C64>, basis: Basis) -> Result<Self> {
        if matrix.nrows() != basis.len() || matrix.ncols() != basis.len() {
            return Err(Error::DimensionMismatch { expected: basis.len(), got: matrix.nrows() });
        }
        Ok(Self { matrix, basis })
    }

    pub fn pure(psi: &StateVector) -> Self {
        Self { matrix: &psi.amplitudes * psi.amplitudes.adjoint(), basis: psi.basis.clone() }
    }

    pub fn maximally_mixed(basis: &Basis) -> Self {
        let n = basis.len();
        Self { matrix: DMatrix::identity(n, n) / C64::new(n as f64, 0.0), basis: basis.clone() }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn trace(&self) -> C64 {
        trace(&self.matrix)
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        eigh(&self.matrix).0[0]
    }

    /// `tr(ρ O)` for an operator on the full space.
    pub fn expect(&self, op: &LatticeOperator) -> Result<C64> {
        let m = op.matrix_in(&self.basis);
        if m.nrows() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: m.nrows() });
        }
        Ok(m.triplets().map(|(r, c, v)| v * self.matrix[(c, r)]).sum())
    }

    pub fn observables(&self, ops: &[LatticeOperator]) -> Result<Vec<C64>> {
        ops.iter().map(|o| self.expect(o)).collect()
    }

    /// Re-expresses the state in `target`. Fails if weight would be lost.
    pub fn restrict(&self, target: &Basis) -> Result<Self> {
        let map: Vec<Option<usize>> = (0..self.dim()).map(|k| target.position(self.basis.full_index(k))).collect();
        let mut out = DMatrix::zeros(target.len(), target.len());
        for (c, pc) in map.iter().enumerate() {
            for (r, pr) in map.iter().enumerate() {
                let v = self.matrix[(r, c)];
                match (pr, pc) {
                    (Some(pr), Some(pc)) => out[(*pr, *pc)] = v,
                    _ if v.norm() > 1e-12 => {
                        return Err(Error::InvalidArgument("density matrix has weight outside the target basis".into()))
                    }
                    _ => {}
                }
            }
        }
        Ok(Self { matrix: out, basis: target.clone() })
    }

    /// Reduced state on the tensor factors in `keep` (kept in ascending order).
    pub fn partial_trace(&self, keep: &[usize]) -> Result<Self> {
        let dims = self.basis.dims();
        let mut keep = keep.to_vec();
        keep.sort_unstable();
        keep.dedup();
        if let Some(&bad) = keep.iter().find(|&&k| k >= dims.len()) {
            return Err(Error::OutOfRange { index: bad, limit: dims.len() });
        }
        if keep.is_empty() {
            return Err(Error::InvalidArgument("partial trace must keep at least one factor".into()));
        }
        let kept_dims: Vec<usize> = keep.iter().map(|&k| dims[k]).collect();
        let out_basis = Basis::full(kept_dims);
        let traced: Vec<usize> = (0..dims.len()).filter(|k| !keep.contains(k)).collect();
        let split: Vec<(usize, Vec<usize>)> = (0..self.dim())
            .map(|k| {
                let dg = self.basis.digits(self.basis.full_index(k));
                let kept: Vec<usize> = keep.iter().map(|&s| dg[s]).collect();
                let rest: Vec<usize> = traced.iter().map(|&s| dg[s]).collect();
                (out_basis.index_of(&kept), rest)
            })
            .collect();
        let n = out_basis.len();
        let mut out = DMatrix::zeros(n, n);
        for (c, (kc, rc)) in split.iter().enumerate() {
            for (r, (kr, rr)) in split.iter().enumerate() {
                if rr == rc {
                    out[(*kr, *kc)] += self.matrix[(r, c)];
                }
            }
        }
        Ok(Self { matrix: out, basis: out_basis })
    }

    /// Squared Uhlmann fidelity `(tr sqrt(sqrt(ρ) σ sqrt(ρ)))²`.
    pub fn fidelity(&self, other: &Self) -> Result<f64> {
        self.check_same(other)?;
        let sr = hermitian_fn(&self.matrix, |x| x.max(0.0).sqrt());
        let inner = &sr * &other.matrix * &sr;
        let (vals, _) = eigh(&inner);
        let t: f64 = vals.iter().map(|v| v.max(0.0).sqrt()).sum();
        Ok(t * t)
    }

    /// `<ψ|ρ|ψ>`.
    pub fn fidelity_pure(&self, psi: &StateVector) -> Result<f64> {
        let v = psi.restrict(&self.basis)?.amplitudes;
        Ok(v.dotc(&(&self.matrix * &v)).re)
    }

    /// `½ ‖ρ - σ‖₁`.
    pub fn trace_distance(&self, other: &Self) -> Result<f64> {
        self.check_same(other)?;
        Ok(0.5 * crate::linalg::trace_norm_hermitian(&(&self.matrix - &other.matrix)))
    }

    fn check_same(&self, other: &Self) -> Result<()> {
        if self.basis != other.basis {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        Ok(())
    }

    /// Hermitizes, clamps negative eigenvalues and renormalizes the trace.
    /// Returns the most negative eigenvalue seen before clamping.
    pub fn clamp_positive(&mut self) -> f64 {
        let h = hermitize(&self.matrix);
        let (vals, vecs) = eigh(&h);
        let min = vals[0];
        if min < 0.0 {
            let clamped = DVector::from_iterator(vals.len(), vals.iter().map(|v| C64::new(v.max(0.0), 0.0)));
            let m = &vecs * DMatrix::from_diagonal(&clamped) * vecs.adjoint();
            let tr = trace(&m).re;
            self.matrix = m / C64::new(tr, 0.0);
        } else {
            self.matrix = h;
        }
        min
    }
}

/// `dρ/dt` for the model.
pub fn liouvillian_apply(model: &LindbladModel, rho: &DensityMatrix) -> Result<DMatrix<C64>> {
    if rho.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: rho.dim() });
    }
    let k = model.effective_hamiltonian();
    Ok(liouvillian_with(model, &k, &rho.matrix))
}

fn liouvillian_with(model: &LindbladModel, k: &CsrMatrix, rho: &DMatrix<C64>) -> DMatrix<C64> {
    // -i K ρ + i ρ K†, with ρ K† = (K ρ†)†
    let k_rho = k.mul_dense(rho);
    let rho_dag = rho.adjoint();
    let k_rho_dag = k.mul_dense(&rho_dag);
    let mut out = k_rho * (-I) + k_rho_dag.adjoint() * I;
    for (c, l) in model.channels.iter().zip(&model.jumps) {
        if c.rate == 0.0 {
            continue;
        }
        // l ρ l† = l (l ρ†)†
        let l_rho_dag = l.mul_dense(&rho_dag);
        let term = l.mul_dense(&l_rho_dag.adjoint());
        axpy(&mut out, C64::new(2.0 * c.rate, 0.0), &term);
    }
    out
}

/// Integrates the master equation, returning `ρ(t)` at each grid time.
/// `t_grid[0]` is the initial time. Output copies are checked for positivity
/// and clamped if needed; the integration state itself is never modified.
pub fn evolve(model: &LindbladModel, rho0: &DensityMatrix, t_grid: &[f64], rtol: f64) -> Result<Vec<DensityMatrix>> {
    let mut out = Vec::with_capacity(t_grid.len());
    evolve_with(model, rho0, t_grid, rtol, |_, rho| {
        out.push(rho.clone());
        Ok(())
    })?;
    Ok(out)
}

/// Streaming form of [`evolve`].
pub fn evolve_with<O>(model: &LindbladModel, rho0: &DensityMatrix, t_grid: &[f64], rtol: f64, mut out: O) -> Result<()>
where
    O: FnMut(usize, &DensityMatrix) -> Result<()>,
{
    if !(rtol > 0.0 && rtol <= 1e-3) {
        return Err(Error::InvalidArgument(format!("rtol must be in (0, 1e-3], got {rtol}")));
    }
    if rho0.basis != model.basis {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: rho0.dim() });
    }
    let k = model.effective_hamiltonian();
    let basis = model.basis.clone();
    integrate(
        |_, y| liouvillian_with(model, &k, y),
        rho0.matrix.clone(),
        t_grid,
        Tolerance::new(rtol),
        |idx, y| {
            let mut rho = DensityMatrix { matrix: y.clone(), basis: basis.clone() };
            let min = rho.clamp_positive();
            if min < -1e-9 {
                warn!("negative eigenvalue {min:.3e} clamped at t = {}", t_grid[idx]);
            }
            out(idx, &rho)
        },
    )?;
    Ok(())
}

#[derive(Clone, Debug)]
pub enum SteadyState {
    Unique(DensityMatrix),
    /// Basis of the Liouvillian null space (as matrices, not normalized).
    Degenerate(Vec<DMatrix<C64>>),
}

/// Null space of the dense Liouvillian.
pub fn steady_state(model: &LindbladModel) -> Result<SteadyState> {
    let s = model.superoperator()?;
    let n = model.dim();
    let (_, sv, v_t) = thin_svd(&s)?;
    let smax = sv.max();
    let threshold = 1e-9 * smax.max(1e-300);
    let null: Vec<DMatrix<C64>> = sv
        .iter()
        .enumerate()
        .filter(|(_, &sv)| sv <= threshold)
        .map(|(k, _)| {
            let v = v_t.row(k).adjoint();
            DMatrix::from_column_slice(n, n, v.as_slice())
        })
        .collect();
    match null.len() {
        0 => Err(Error::NotConverged("Liouvillian has no null vector".into())),
        1 => {
            let h = hermitize(&null[0]);
            let tr = trace(&h);
            // a single null vector is Hermitian up to phase; fix the phase by the trace
            let m = if tr.norm() > 1e-12 { &null[0] / tr } else { h };
            let mut rho = DensityMatrix { matrix: hermitize(&m), basis: model.basis.clone() };
            rho.clamp_positive();
            Ok(SteadyState::Unique(rho))
        }
        _ => Ok(SteadyState::Degenerate(null)),
    }
}

/// Largest deviation from Hermiticity, used by validity checks.
pub fn hermiticity_error(m: &DMatrix<C64>) -> f64 {
    max_abs(&(m - m.adjoint()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::darkstate::{dark_state, DarkStateSpec};
    use crate::fock::{annihilation_matrix, number_op, parity_op};

    fn decay_model(kappa: f64) -> (FockSpace, LindbladModel) {
        let sp = FockSpace::new(1, 1).unwrap();
        let a = lattice_operator(&annihilation_matrix(2).unwrap().matrix, &[0], &sp, "a").unwrap();
        (sp, ModelBuilder::new(&sp).channel(&a, kappa).unwrap().build().unwrap())
    }

    #[test]
    fn two_level_decay_rate_convention() {
        let (sp, m) = decay_model(0.7);
        let rho = DensityMatrix::pure(&StateVector::product(&[1], &sp).unwrap());
        let d = liouvillian_apply(&m, &rho).unwrap();
        let n = number_op(0, &sp).unwrap();
        let dn = DensityMatrix { matrix: d, basis: rho.basis.clone() }.expect(&n).unwrap();
        assert!((dn.re + 2.0 * 0.7).abs() < 1e-14);
        let out = evolve(&m, &rho, &[0.0, 1.0], 1e-9).unwrap();
        let pop = out[1].expect(&n).unwrap().re;
        assert!((pop - (-1.4f64).exp()).abs() < 1e-8);
    }

    #[test]
    fn dark_projector_is_stationary() {
        let spec = DarkStateSpec::new(3, 1, 2);
        let sp = spec.space().unwrap();
        let m = ModelBuilder::new(&sp).pair_jumps(1.0).unwrap().build().unwrap();
        let rho = DensityMatrix::pure(&dark_state(&spec).unwrap());
        assert!(max_abs(&liouvillian_apply(&m, &rho).unwrap()) < 1e-12);
        let out = evolve(&m, &rho, &[0.0, 1.0, 3.0], 1e-8).unwrap();
        for r in &out {
            assert!(max_abs(&(&r.matrix - &rho.matrix)) < 1e-8);
        }
    }

    #[test]
    fn maximally_mixed_commutes_with_hamiltonian() {
        let sp = FockSpace::new(2, 2).unwrap();
        let m = ModelBuilder::new(&sp).hamiltonian(HamiltonianKind::Kerr(0.8)).unwrap().build().unwrap();
        let rho = DensityMatrix::maximally_mixed(m.basis());
        assert!(max_abs(&liouvillian_apply(&m, &rho).unwrap()) < 1e-14);
    }

    #[test]
    fn unitary_limit_keeps_purity_and_trace() {
        let sp = FockSpace::new(2, 2).unwrap();
        let m = ModelBuilder::new(&sp).hamiltonian(HamiltonianKind::Kerr(1.0)).unwrap().hop_noise(0.0).unwrap().build().unwrap();
        let psi = StateVector::new(DVector::from_fn(9, |i, _| C64::new(1.0 + i as f64, 0.5 * i as f64)), sp.basis())
            .unwrap()
            .normalized()
            .unwrap();
        let out = evolve(&m, &DensityMatrix::pure(&psi), &[0.0, 0.5, 2.0], 1e-10).unwrap();
        for r in &out {
            assert!((r.purity() - 1.0).abs() < 1e-9);
            assert!((r.trace().re - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn pair_jumps_conserve_number_and_parity() {
        let sp = FockSpace::new(3, 2).unwrap();
        let m = ModelBuilder::new(&sp).pair_jumps(1.0).unwrap().build().unwrap();
        let rho = DensityMatrix::pure(&StateVector::product(&[2, 0, 2], &sp).unwrap());
        let out = evolve(&m, &rho, &[0.0, 0.5, 1.0, 4.0], 1e-9).unwrap();
        let n_tot = crate::fock::total_number(&sp);
        for r in &out {
            assert!((r.expect(&n_tot).unwrap().re - 4.0).abs() < 1e-8);
            for s in 0..3 {
                assert!((r.expect(&parity_op(s, &sp).unwrap()).unwrap().re - 1.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn sector_restriction_matches_full_evolution() {
        let sp = FockSpace::new(3, 2).unwrap();
        let full = ModelBuilder::new(&sp).pair_jumps(1.0).unwrap().heal_bonds(1.0).unwrap().build().unwrap();
        let sector = Basis::number_sector(&sp, 2).unwrap();
        let small = full.restrict(&sector).unwrap();
        let psi = StateVector::product(&[1, 1, 0], &sp).unwrap();
        let a = evolve(&full, &DensityMatrix::pure(&psi), &[0.0, 1.5], 1e-9).unwrap();
        let b = evolve(&small, &DensityMatrix::pure(&psi).restrict(&sector).unwrap(), &[0.0, 1.5], 1e-9).unwrap();
        let back = a[1].restrict(&sector).unwrap();
        assert!(max_abs(&(&back.matrix - &b[1].matrix)) < 1e-7);
    }

    #[test]
    fn chain_placement_matches_direct_builders() {
        let sp = FockSpace::new(4, 2).unwrap();
        let m = ModelBuilder::new(&sp)
            .pair_jumps(1.0)
            .unwrap()
            .heal_sites(1.0)
            .unwrap()
            .heal_bonds(1.0)
            .unwrap()
            .hop_noise(0.5)
            .unwrap()
            .build()
            .unwrap();
        let ch = m.channels();
        let mut k = 0;
        for j in 0..3 {
            assert_eq!(ch[k].op.matrix, pair_jump(j, &sp).unwrap().matrix);
            k += 1;
        }
        for j in 0..4 {
            assert_eq!(ch[k].op.matrix, heal_jump(j, &sp, 1.0).unwrap().matrix);
            k += 1;
        }
        for b in 0..3 {
            assert_eq!(ch[k].op.matrix, heal_bond_channel(b, HopDirection::Right, &sp).unwrap().matrix);
            assert_eq!(ch[k + 1].op.matrix, heal_bond_channel(b + 1, HopDirection::Left, &sp).unwrap().matrix);
            k += 2;
        }
        for j in 0..3 {
            assert_eq!(ch[k].op.matrix, hop_noise_jump(j, &sp).unwrap().matrix);
            assert_eq!(ch[k + 1].op.matrix, hop_noise_jump(j, &sp).unwrap().matrix.adjoint());
            k += 2;
        }
        assert_eq!(k, ch.len());
    }

    #[test]
    fn restrict_rejects_leaking_operators() {
        let sp = FockSpace::new(1, 1).unwrap();
        let (_, m) = decay_model(1.0);
        let sector = Basis::number_sector(&sp, 1).unwrap();
        assert!(m.restrict(&sector).is_err());
    }

    #[test]
    fn steady_state_two_site_pair_jump() {
        let spec = DarkStateSpec::new(2, 1, 2);
        let sp = spec.space().unwrap();
        let m = ModelBuilder::new(&sp).pair_jumps(1.0).unwrap().build().unwrap();
        // even sector of N = 2: |2,0>, |0,2>
        let even = Basis::subset(sp.basis().dims().to_vec(), vec![sp.index_of(&[2, 0]).unwrap(), sp.index_of(&[0, 2]).unwrap()]);
        let ss = steady_state(&m.restrict(&even).unwrap()).unwrap();
        let SteadyState::Unique(rho) = ss else { panic!("expected unique steady state") };
        assert!((rho.fidelity_pure(&dark_state(&spec).unwrap()).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn steady_state_degenerate_without_dynamics() {
        let sp = FockSpace::new(2, 1).unwrap();
        let m = LindbladModel::from_space(&sp, vec![], vec![]).unwrap();
        match steady_state(&m).unwrap() {
            SteadyState::Degenerate(v) => assert_eq!(v.len(), 16),
            SteadyState::Unique(_) => panic!("expected degenerate"),
        }
    }

    #[test]
    fn healing_selects_the_condensate() {
        let spec = DarkStateSpec::new(2, 1, 2);
        let sp = spec.space().unwrap();
        let m = ModelBuilder::new(&sp).pair_jumps(1.0).unwrap().heal_bonds(1.0).unwrap().build().unwrap();
        let sector = Basis::number_sector(&sp, 2).unwrap();
        let ss = steady_state(&m.restrict(&sector).unwrap()).unwrap();
        let SteadyState::Unique(rho) = ss else { panic!("expected unique steady state") };
        assert!((rho.fidelity_pure(&dark_state(&spec).unwrap()).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn steady_state_size_limit() {
        let sp = FockSpace::new(4, 2).unwrap();
        let m = ModelBuilder::new(&sp).pair_jumps(1.0).unwrap().build().unwrap();
        assert!(matches!(steady_state(&m), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn fidelity_trace_distance_partial_trace() {
        let sp = FockSpace::new(2, 2).unwrap();
        let psi = dark_state(&DarkStateSpec::new(2, 1, 2)).unwrap();
        let rho = DensityMatrix::pure(&psi);
        assert!((rho.fidelity(&rho).unwrap() - 1.0).abs() < 1e-9);
        assert!(rho.trace_distance(&rho).unwrap() < 1e-12);
        let prod = DensityMatrix::pure(&StateVector::product(&[2, 0], &sp).unwrap());
        let red = prod.partial_trace(&[0]).unwrap();
        assert_eq!(red.dim(), 3);
        assert!((red.matrix[(2, 2)].re - 1.0).abs() < 1e-15);
        assert!((rho.fidelity(&prod).unwrap() - 0.5).abs() < 1e-9);
        assert!((rho.fidelity_pure(&StateVector::product(&[2, 0], &sp).unwrap()).unwrap() - 0.5).abs() < 1e-12);
        // orthogonal pure states are at distance one
        let other = DensityMatrix::pure(&StateVector::product(&[1, 1], &sp).unwrap());
        assert!((prod.trace_distance(&other).unwrap() - 1.0).abs() < 1e-12);
    }
}
