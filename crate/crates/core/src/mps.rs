//! Open-chain matrix product states and the TEBD trajectory backend.
//!
//! Site tensors are stored as `d` matrices `A[s]` of shape `χ_left × χ_right`.
//! The state is kept in mixed canonical form: tensors left of `center` are
//! left isometries, tensors right of it are right isometries.

use log::debug;
use nalgebra::{DMatrix, DVector};

use crate::darkstate::CorrelatorOrder;
use crate::error::{Error, Result};
use crate::fock::{annihilation_matrix, FockSpace, SiteOperator, StateVector};
use crate::linalg::{max_abs, thin_svd};
use crate::lindblad::ChainModel;
use crate::trajectory::{
    max_local_rate, trotter_schedule, BondGate, Observable, TrajectoryBackend, TrajectoryConfig, TrajectoryEngine,
};
use crate::C64;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MpsOptions {
    pub chi_max: usize,
    /// Largest relative discarded weight `Σ_dropped s² / Σ s²` per SVD.
    pub svd_cutoff: f64,
}

impl Default for MpsOptions {
    fn default() -> Self {
        Self { chi_max: 64, svd_cutoff: 1e-10 }
    }
}

#[derive(Clone, Debug)]
pub struct MpsState {
    d: usize,
    tensors: Vec<Vec<DMatrix<C64>>>,
    center: usize,
    opts: MpsOptions,
    truncation: f64,
}

impl MpsState {
    pub fn from_product_state(occupations: &[usize], space: &FockSpace, opts: MpsOptions) -> Result<Self> {
        if occupations.len() != space.sites() {
            return Err(Error::DimensionMismatch { expected: space.sites(), got: occupations.len() });
        }
        let d = space.local_dim();
        let mut tensors = Vec::with_capacity(occupations.len());
        for &n in occupations {
            if n > space.n_max() {
                return Err(Error::CutoffOverflow(format!("occupation {n} exceeds n_max = {}", space.n_max())));
            }
            tensors.push((0..d).map(|s| DMatrix::from_element(1, 1, if s == n { ONE } else { ZERO })).collect());
        }
        Ok(Self { d, tensors, center: 0, opts, truncation: 0.0 })
    }

    /// Exact decomposition of a full-space state by successive SVDs, then
    /// truncated under `opts`.
    pub fn from_state_vector(psi: &StateVector, space: &FockSpace, opts: MpsOptions) -> Result<Self> {
        let full = psi.to_full();
        if full.len() != space.dim() {
            return Err(Error::DimensionMismatch { expected: space.dim(), got: full.len() });
        }
        let d = space.local_dim();
        let l = space.sites();
        let mut tensors = Vec::with_capacity(l);
        // remainder as a (χ · d) × rest matrix with rows (s, a)
        let mut rest = DMatrix::from_column_slice(1, full.len(), full.amplitudes.as_slice());
        let mut truncation = 0.0;
        for _site in 0..l - 1 {
            let chi = rest.nrows();
            let cols = rest.ncols() / d;
            // M[(s, a), r] with s the current site's digit (slowest in `rest` columns)
            let mut m = DMatrix::zeros(d * chi, cols);
            for a in 0..chi {
                for s in 0..d {
                    for r in 0..cols {
                        m[(s * chi + a, r)] = rest[(a, s * cols + r)];
                    }
                }
            }
            let (u, sv, vt, w) = truncated_svd(&m, opts)?;
            truncation += w;
            let k = sv.len();
            tensors.push((0..d).map(|s| u.rows(s * chi, chi).into_owned()).collect());
            rest = DMatrix::from_diagonal(&sv.map(|x| C64::new(x, 0.0))) * vt;
            debug_assert_eq!(rest.nrows(), k);
        }
        let chi = rest.nrows();
        tensors.push(
            (0..d).map(|s| rest.columns(s, 1).into_owned().reshape_generic(nalgebra::Dyn(chi), nalgebra::Dyn(1))).collect(),
        );
        Ok(Self { d, tensors, center: l - 1, opts, truncation })
    }

    pub fn sites(&self) -> usize {
        self.tensors.len()
    }

    pub fn local_dim(&self) -> usize {
        self.d
    }

    pub fn center(&self) -> usize {
        self.center
    }

    pub fn options(&self) -> MpsOptions {
        self.opts
    }

    pub fn set_options(&mut self, opts: MpsOptions) {
        self.opts = opts;
    }

    /// Sum of relative discarded weights over all truncations so far.
    pub fn cumulative_truncation(&self) -> f64 {
        self.truncation
    }

    /// Bond dimensions between consecutive sites (length `L - 1`).
    pub fn bond_dims(&self) -> Vec<usize> {
        self.tensors[..self.sites() - 1].iter().map(|t| t[0].ncols()).collect()
    }

    pub fn max_bond_dim(&self) -> usize {
        self.bond_dims().into_iter().max().unwrap_or(1)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.tensors[self.center].iter().map(|a| a.norm_squared()).sum()
    }

    pub fn scale(&mut self, c: C64) {
        for a in &mut self.tensors[self.center] {
            *a *= c;
        }
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm_sqr().sqrt();
        if n == 0.0 {
            return Err(Error::InvalidArgument("cannot normalize the zero state".into()));
        }
        self.scale(C64::new(1.0 / n, 0.0));
        Ok(())
    }

    fn move_right(&mut self) {
        let j = self.center;
        let (chi_l, chi_r) = self.tensors[j][0].shape();
        let d = self.d;
        let mut m = DMatrix::zeros(d * chi_l, chi_r);
        for s in 0..d {
            m.rows_mut(s * chi_l, chi_l).copy_from(&self.tensors[j][s]);
        }
        let qr = m.qr();
        let (q, r) = (qr.q(), qr.r());
        self.tensors[j] = (0..d).map(|s| q.rows(s * chi_l, chi_l).into_owned()).collect();
        for a in &mut self.tensors[j + 1] {
            *a = &r * &*a;
        }
        self.center = j + 1;
    }

    fn move_left(&mut self) {
        let j = self.center;
        let (chi_l, chi_r) = self.tensors[j][0].shape();
        let d = self.d;
        // M = [A[0] A[1] ...] (χ_l × d χ_r); QR of M† gives M = R† Q†
        let mut mh = DMatrix::zeros(d * chi_r, chi_l);
        for s in 0..d {
            mh.rows_mut(s * chi_r, chi_r).copy_from(&self.tensors[j][s].adjoint());
        }
        let qr = mh.qr();
        let (q, r) = (qr.q(), qr.r());
        self.tensors[j] = (0..d).map(|s| q.rows(s * chi_r, chi_r).adjoint()).collect();
        let rd = r.adjoint();
        for a in &mut self.tensors[j - 1] {
            *a = &*a * &rd;
        }
        self.center = j - 1;
    }

    pub fn move_center(&mut self, to: usize) {
        assert!(to < self.sites(), "center {to} out of range");
        while self.center < to {
            self.move_right();
        }
        while self.center > to {
            self.move_left();
        }
    }

    /// Applies a one-site operator (d × d) at `site`.
    pub fn apply_one_site(&mut self, op: &DMatrix<C64>, site: usize) -> Result<()> {
        if site >= self.sites() {
            return Err(Error::OutOfRange { index: site, limit: self.sites() });
        }
        if op.shape() != (self.d, self.d) {
            return Err(Error::DimensionMismatch { expected: self.d, got: op.nrows() });
        }
        self.move_center(site);
        let old = std::mem::take(&mut self.tensors[site]);
        self.tensors[site] = (0..self.d)
            .map(|t| {
                let mut acc = DMatrix::zeros(old[0].nrows(), old[0].ncols());
                for (s, a) in old.iter().enumerate() {
                    let g = op[(t, s)];
                    if g != ZERO {
                        acc += a * g;
                    }
                }
                acc
            })
            .collect();
        Ok(())
    }

    /// Applies a two-site operator (d² × d², first site slowest) on bond
    /// `(j, j+1)`, refactorizes by SVD and truncates. Kept singular values are
    /// rescaled so the truncation does not change the norm. Returns the
    /// relative discarded weight. The center ends at `j + 1`.
    pub fn apply_two_site(&mut self, gate: &DMatrix<C64>, j: usize) -> Result<f64> {
        let d = self.d;
        if j + 1 >= self.sites() {
            return Err(Error::OutOfRange { index: j, limit: self.sites() - 1 });
        }
        if gate.shape() != (d * d, d * d) {
            return Err(Error::DimensionMismatch { expected: d * d, got: gate.nrows() });
        }
        if self.center < j {
            self.move_center(j);
        } else if self.center > j + 1 {
            self.move_center(j + 1);
        }
        let (a, b) = (&self.tensors[j], &self.tensors[j + 1]);
        let chi_l = a[0].nrows();
        let chi_r = b[0].ncols();
        let mut prod = Vec::with_capacity(d * d);
        for s1 in 0..d {
            for s2 in 0..d {
                prod.push(&a[s1] * &b[s2]);
            }
        }
        let mut m = DMatrix::zeros(d * chi_l, d * chi_r);
        for t1 in 0..d {
            for t2 in 0..d {
                let mut block = DMatrix::<C64>::zeros(chi_l, chi_r);
                for (ss, p) in prod.iter().enumerate() {
                    let g = gate[(t1 * d + t2, ss)];
                    if g != ZERO {
                        block += p * g;
                    }
                }
                m.view_mut((t1 * chi_l, t2 * chi_r), (chi_l, chi_r)).copy_from(&block);
            }
        }
        let (u, sv, vt, w) = truncated_svd(&m, self.opts)?;
        let sv_c = DMatrix::from_diagonal(&sv.map(|x| C64::new(x, 0.0)));
        let right = sv_c * vt;
        self.tensors[j] = (0..d).map(|t| u.rows(t * chi_l, chi_l).into_owned()).collect();
        self.tensors[j + 1] = (0..d).map(|t| right.columns(t * chi_r, chi_r).into_owned()).collect();
        self.center = j + 1;
        self.truncation += w;
        Ok(w)
    }

    /// Dense amplitudes in the full space (small chains only).
    pub fn to_dense(&self) -> DVector<C64> {
        let l = self.sites();
        let dim = self.d.pow(l as u32);
        let mut out = DVector::zeros(dim);
        let mut digits = vec![0usize; l];
        for idx in 0..dim {
            let mut rem = idx;
            for s in (0..l).rev() {
                digits[s] = rem % self.d;
                rem /= self.d;
            }
            let mut v = self.tensors[0][digits[0]].clone();
            for s in 1..l {
                v = &v * &self.tensors[s][digits[s]];
            }
            out[idx] = v[(0, 0)];
        }
        out
    }

    /// Largest deviation from the isometry conditions of the mixed form.
    pub fn canonical_error(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (k, t) in self.tensors.iter().enumerate() {
            if k < self.center {
                let chi = t[0].ncols();
                let g: DMatrix<C64> = t.iter().map(|a| a.adjoint() * a).sum();
                worst = worst.max(max_abs(&(g - DMatrix::identity(chi, chi))));
            } else if k > self.center {
                let chi = t[0].nrows();
                let g: DMatrix<C64> = t.iter().map(|a| a * a.adjoint()).sum();
                worst = worst.max(max_abs(&(g - DMatrix::identity(chi, chi))));
            }
        }
        worst
    }

    /// Left and right environments using the canonical form: `left[k]`
    /// contracts sites `0..k`, `right[k]` sites `k..L`.
    fn environments(&self) -> (Vec<DMatrix<C64>>, Vec<DMatrix<C64>>) {
        let l = self.sites();
        let mut left = Vec::with_capacity(l + 1);
        left.push(DMatrix::identity(1, 1));
        for k in 0..l {
            let chi = self.tensors[k][0].ncols();
            if k < self.center {
                left.push(DMatrix::identity(chi, chi));
            } else {
                let e = &left[k];
                let next: DMatrix<C64> = self.tensors[k].iter().map(|a| a.adjoint() * e * a).sum();
                left.push(next);
            }
        }
        let mut right = vec![DMatrix::identity(1, 1); l + 1];
        for k in (0..l).rev() {
            let chi = self.tensors[k][0].nrows();
            right[k] = if k > self.center {
                DMatrix::identity(chi, chi)
            } else {
                let e = &right[k + 1];
                self.tensors[k].iter().map(|a| a * e * a.adjoint()).sum()
            };
        }
        (left, right)
    }

    fn one_site_with(&self, env: &(Vec<DMatrix<C64>>, Vec<DMatrix<C64>>), op: &DMatrix<C64>, k: usize) -> C64 {
        let t = &self.tensors[k];
        let mut acc = ZERO;
        for s in 0..self.d {
            let m = &env.0[k] * &t[s] * &env.1[k + 1];
            for r in 0..self.d {
                let g = op[(r, s)];
                if g != ZERO {
                    acc += g * t[r].dotc(&m);
                }
            }
        }
        acc
    }

    fn two_site_with(&self, env: &(Vec<DMatrix<C64>>, Vec<DMatrix<C64>>), op: &DMatrix<C64>, k: usize) -> C64 {
        let d = self.d;
        let (a, b) = (&self.tensors[k], &self.tensors[k + 1]);
        let theta: Vec<DMatrix<C64>> = (0..d * d).map(|ss| &a[ss / d] * &b[ss % d]).collect();
        let mut acc = ZERO;
        for (ss, th) in theta.iter().enumerate() {
            let m = &env.0[k] * th * &env.1[k + 2];
            for (tt, tht) in theta.iter().enumerate() {
                let g = op[(tt, ss)];
                if g != ZERO {
                    acc += g * tht.dotc(&m);
                }
            }
        }
        acc
    }

    /// Unnormalized `<ψ|O_i O_j|ψ>` for one-site operators at `i < j`.
    fn two_point_with(
        &self,
        env: &(Vec<DMatrix<C64>>, Vec<DMatrix<C64>>),
        op_i: &DMatrix<C64>,
        i: usize,
        op_j: &DMatrix<C64>,
        j: usize,
    ) -> C64 {
        let d = self.d;
        let ti = &self.tensors[i];
        let mut e = DMatrix::<C64>::zeros(ti[0].ncols(), ti[0].ncols());
        for s in 0..d {
            let ls = &env.0[i] * &ti[s];
            for r in 0..d {
                let g = op_i[(r, s)];
                if g != ZERO {
                    e += ti[r].adjoint() * &ls * g;
                }
            }
        }
        for k in i + 1..j {
            e = self.tensors[k].iter().map(|a| a.adjoint() * &e * a).sum();
        }
        let tj = &self.tensors[j];
        let mut acc = ZERO;
        for s in 0..d {
            let m = &e * &tj[s] * &env.1[j + 1];
            for r in 0..d {
                let g = op_j[(r, s)];
                if g != ZERO {
                    acc += g * tj[r].dotc(&m);
                }
            }
        }
        acc
    }

    /// Normalized expectation of a one-site operator.
    pub fn expect_one_site(&self, op: &DMatrix<C64>, k: usize) -> Result<C64> {
        self.check_site(k)?;
        let env = self.environments();
        Ok(self.one_site_with(&env, op, k) / self.norm_sqr())
    }

    /// Normalized expectation of a two-site operator on `(k, k+1)`.
    pub fn expect_two_site(&self, op: &DMatrix<C64>, k: usize) -> Result<C64> {
        self.check_site(k + 1)?;
        let env = self.environments();
        Ok(self.two_site_with(&env, op, k) / self.norm_sqr())
    }

    fn check_site(&self, k: usize) -> Result<()> {
        if k >= self.sites() {
            return Err(Error::OutOfRange { index: k, limit: self.sites() });
        }
        Ok(())
    }

    /// Normalized `<a†^k_i a^k_j>` (`k` = 1 or 2).
    pub fn correlator(&self, i: usize, j: usize, order: CorrelatorOrder) -> Result<C64> {
        let env = self.environments();
        let ops = LocalOps::new(self.d)?;
        Ok(self.correlator_with(&env, &ops, i, j, order)? / self.norm_sqr())
    }

    fn correlator_with(
        &self,
        env: &(Vec<DMatrix<C64>>, Vec<DMatrix<C64>>),
        ops: &LocalOps,
        i: usize,
        j: usize,
        order: CorrelatorOrder,
    ) -> Result<C64> {
        self.check_site(i)?;
        self.check_site(j)?;
        let (cr, an) = match order {
            CorrelatorOrder::Single => (&ops.ad, &ops.a),
            CorrelatorOrder::Pair => (&ops.ad2, &ops.a2),
        };
        Ok(if i == j {
            self.one_site_with(env, &(cr * an), i)
        } else if i < j {
            self.two_point_with(env, cr, i, an, j)
        } else {
            self.two_point_with(env, an, j, cr, i)
        })
    }

    /// Normalized observables sharing one environment computation.
    pub fn measure(&self, observables: &[Observable]) -> Result<Vec<f64>> {
        let env = self.environments();
        let ops = LocalOps::new(self.d)?;
        let n2 = self.norm_sqr();
        let l = self.sites();
        let mut out = Vec::with_capacity(observables.len());
        for o in observables {
            let v = match o {
                Observable::Number(i) => {
                    self.check_site(*i)?;
                    self.one_site_with(&env, &ops.n, *i)
                }
                Observable::Parity(i) => {
                    self.check_site(*i)?;
                    self.one_site_with(&env, &ops.parity, *i)
                }
                Observable::Correlator { i, j, order } => self.correlator_with(&env, &ops, *i, *j, *order)?,
                Observable::DefectDensity => {
                    let odd: C64 = (0..l).map(|k| self.one_site_with(&env, &ops.odd, k)).sum();
                    odd / l as f64
                }
                Observable::TotalNumber => (0..l).map(|k| self.one_site_with(&env, &ops.n, k)).sum(),
                Observable::Operator(op) => {
                    return Err(Error::Unsupported(format!("full-space operator {} on the MPS backend", op.label)))
                }
            };
            out.push(v.re / n2);
        }
        Ok(out)
    }
}

struct LocalOps {
    a: DMatrix<C64>,
    ad: DMatrix<C64>,
    a2: DMatrix<C64>,
    ad2: DMatrix<C64>,
    n: DMatrix<C64>,
    parity: DMatrix<C64>,
    odd: DMatrix<C64>,
}

impl LocalOps {
    fn new(d: usize) -> Result<Self> {
        let a = annihilation_matrix(d)?.matrix;
        let ad = a.adjoint();
        Ok(Self {
            a2: &a * &a,
            ad2: &ad * &ad,
            a,
            ad,
            n: SiteOperator::number(d).matrix,
            parity: SiteOperator::parity(d).matrix,
            odd: SiteOperator::odd_projector(d).matrix,
        })
    }
}

/// SVD of `m` with singular values sorted descending and truncated by
/// relative discarded weight and `chi_max`. Kept values are rescaled to the
/// full norm. Returns `(U, s, V†, discarded weight)`.
fn truncated_svd(m: &DMatrix<C64>, opts: MpsOptions) -> Result<(DMatrix<C64>, DVector<f64>, DMatrix<C64>, f64)> {
    let (u, s, vt) = thin_svd(m)?;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&x, &y| s[y].total_cmp(&s[x]));
    let total: f64 = s.iter().map(|x| x * x).sum();
    if total == 0.0 {
        // zero state: keep a single zero singular value so shapes stay valid
        let k = order[0];
        return Ok((u.columns(k, 1).into_owned(), DVector::from_element(1, 0.0), vt.rows(k, 1).into_owned(), 0.0));
    }
    let mut keep = order.len().min(opts.chi_max.max(1));
    // drop the smallest values while the discarded weight stays within budget
    let mut dropped = order[keep..].iter().map(|&k| s[k] * s[k]).sum::<f64>();
    while keep > 1 {
        let last = s[order[keep - 1]];
        let w = dropped + last * last;
        if w / total <= opts.svd_cutoff || last == 0.0 {
            dropped = w;
            keep -= 1;
        } else {
            break;
        }
    }
    let kept = &order[..keep];
    let rescale = (total / (total - dropped)).sqrt();
    let mut uk = DMatrix::zeros(u.nrows(), keep);
    let mut vk = DMatrix::zeros(keep, vt.ncols());
    let mut sk = DVector::zeros(keep);
    for (c, &k) in kept.iter().enumerate() {
        uk.set_column(c, &u.column(k));
        vk.set_row(c, &vt.row(k));
        sk[c] = s[k] * rescale;
    }
    Ok((uk, sk, vk, dropped / total))
}

/// Shared data for TEBD trajectories.
pub struct MpsEngine {
    chain: ChainModel,
    gates: Vec<BondGate>,
    init: MpsState,
    observables: Vec<Observable>,
}

impl MpsEngine {
    pub fn new(chain: &ChainModel, init: &MpsState, cfg: &TrajectoryConfig) -> Result<Self> {
        cfg.check_step(max_local_rate(chain))?;
        if init.sites() != chain.sites() || init.local_dim() != chain.local_dim() {
            return Err(Error::DimensionMismatch { expected: chain.sites(), got: init.sites() });
        }
        for c in &chain.channels {
            if c.op.width > 2 {
                return Err(Error::Unsupported(format!("channel {} spans {} sites", c.label, c.op.width)));
            }
        }
        let ch: Vec<_> = chain.channels.iter().map(|c| (c.op.clone(), c.rate)).collect();
        let gates = trotter_schedule(chain.sites(), chain.local_dim(), &chain.h_terms, &ch, cfg.dt)?;
        let mut init = init.clone();
        init.normalize()?;
        debug!("TEBD engine: {} gates per step, chi_max {}", gates.len(), init.opts.chi_max);
        Ok(Self { chain: chain.clone(), gates, init, observables: cfg.observables.clone() })
    }
}

pub struct MpsBackend<'a> {
    engine: &'a MpsEngine,
    state: MpsState,
}

impl MpsBackend<'_> {
    pub fn state(&self) -> &MpsState {
        &self.state
    }
}

impl TrajectoryEngine for MpsEngine {
    type Backend<'a> = MpsBackend<'a>;

    fn spawn(&self) -> Result<MpsBackend<'_>> {
        Ok(MpsBackend { engine: self, state: self.init.clone() })
    }

    fn observable_labels(&self) -> Vec<String> {
        self.observables.iter().map(|o| o.label()).collect()
    }
}

impl TrajectoryBackend for MpsBackend<'_> {
    fn propagate(&mut self) -> Result<()> {
        for g in &self.engine.gates {
            self.state.apply_two_site(&g.matrix, g.bond)?;
        }
        Ok(())
    }

    fn norm_sqr(&self) -> f64 {
        self.state.norm_sqr()
    }

    fn jump_weights(&self) -> Result<Vec<f64>> {
        let env = self.state.environments();
        let mut out = Vec::with_capacity(self.engine.chain.channels.len());
        for c in &self.engine.chain.channels {
            let ldl = c.op.matrix.adjoint() * &c.op.matrix;
            let v = match c.op.width {
                1 => self.state.one_site_with(&env, &ldl, c.op.first_site),
                _ => self.state.two_site_with(&env, &ldl, c.op.first_site),
            };
            out.push(c.rate * v.re.max(0.0));
        }
        Ok(out)
    }

    fn apply_jump(&mut self, k: usize) -> Result<()> {
        let c = &self.engine.chain.channels[k];
        match c.op.width {
            1 => self.state.apply_one_site(&c.op.matrix, c.op.first_site)?,
            _ => {
                self.state.apply_two_site(&c.op.matrix, c.op.first_site)?;
            }
        }
        if self.state.norm_sqr() == 0.0 {
            return Err(Error::NoChannel);
        }
        self.state.normalize()
    }

    fn measure(&self) -> Result<Vec<f64>> {
        self.state.measure(&self.engine.observables)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::darkstate::{dark_state, DarkStateSpec};
    use crate::fock::pair_jump;

    fn exact() -> MpsOptions {
        MpsOptions { chi_max: 1000, svd_cutoff: 0.0 }
    }

    fn dense_close(m: &MpsState, v: &DVector<C64>, tol: f64) -> bool {
        (m.to_dense() - v).norm() < tol
    }

    #[test]
    fn product_states() {
        let sp = FockSpace::new(4, 2).unwrap();
        let m = MpsState::from_product_state(&[2, 0, 2, 0], &sp, exact()).unwrap();
        assert_eq!(m.bond_dims(), vec![1, 1, 1]);
        assert!((m.norm_sqr() - 1.0).abs() < 1e-15);
        let dense = StateVector::product(&[2, 0, 2, 0], &sp).unwrap();
        assert!(dense_close(&m, &dense.amplitudes, 1e-15));
        let vac = MpsState::from_product_state(&[0; 4], &sp, exact()).unwrap();
        let ns = vac.measure(&(0..4).map(Observable::Number).collect::<Vec<_>>()).unwrap();
        assert!(ns.iter().all(|&n| n == 0.0));
        let p = MpsState::from_product_state(&[1, 1, 0, 0], &sp, exact()).unwrap();
        let par = p.measure(&(0..4).map(Observable::Parity).collect::<Vec<_>>()).unwrap();
        assert_eq!(par, vec![-1.0, -1.0, 1.0, 1.0]);
        assert!(MpsState::from_product_state(&[3, 0, 0, 0], &sp, exact()).is_err());
    }

    #[test]
    fn pair_correlator_of_product_is_zero() {
        let sp = FockSpace::new(2, 2).unwrap();
        let m = MpsState::from_product_state(&[2, 0], &sp, exact()).unwrap();
        assert_eq!(m.correlator(0, 1, CorrelatorOrder::Pair).unwrap(), ZERO);
    }

    #[test]
    fn identity_and_swap_gates() {
        let sp = FockSpace::new(3, 2).unwrap();
        let mut m = MpsState::from_product_state(&[2, 1, 0], &sp, exact()).unwrap();
        let before = m.to_dense();
        let w = m.apply_two_site(&DMatrix::identity(9, 9), 0).unwrap();
        assert_eq!(w, 0.0);
        assert!(dense_close(&m, &before, 1e-14));
        let swap = DMatrix::from_fn(9, 9, |r, c| if r == (c % 3) * 3 + c / 3 { ONE } else { ZERO });
        m.apply_two_site(&swap, 1).unwrap();
        assert!(m.max_bond_dim() <= 9);
        let want = StateVector::product(&[2, 0, 1], &sp).unwrap();
        assert!(dense_close(&m, &want.amplitudes, 1e-14));
        assert!(m.canonical_error() < 1e-12);
    }

    #[test]
    fn pair_jump_gate_matches_dense() {
        let sp = FockSpace::new(4, 2).unwrap();
        let psi = StateVector::new(
            DVector::from_fn(81, |i, _| C64::new(((i * 7) % 11) as f64 - 5.0, ((i * 3) % 5) as f64)),
            sp.basis(),
        )
        .unwrap()
        .normalized()
        .unwrap();
        let mut m = MpsState::from_state_vector(&psi, &sp, MpsOptions { chi_max: 9, svd_cutoff: 0.0 }).unwrap();
        assert!(dense_close(&m, &psi.amplitudes, 1e-10));
        let l1 = pair_jump(1, &sp).unwrap();
        let small = pair_jump(0, &FockSpace::new(2, 2).unwrap()).unwrap().matrix.to_dense();
        m.apply_two_site(&small, 1).unwrap();
        let want = l1.apply(&psi).unwrap();
        assert!(dense_close(&m, &want.amplitudes, 1e-10));
        assert!(m.canonical_error() < 1e-10);
    }

    #[test]
    fn dark_state_compression_and_correlators() {
        let spec = DarkStateSpec::new(4, 2, 4);
        let sp = spec.space().unwrap();
        let psi = dark_state(&spec).unwrap();
        let m = MpsState::from_state_vector(&psi, &sp, MpsOptions::default()).unwrap();
        assert!(dense_close(&m, &psi.amplitudes, 1e-9));
        for (i, j) in [(0, 1), (0, 3), (2, 1)] {
            assert!(m.correlator(i, j, CorrelatorOrder::Single).unwrap().norm() < 1e-8);
            let dense = crate::darkstate::correlator(&psi, &sp, i, j, CorrelatorOrder::Pair).unwrap();
            assert!((m.correlator(i, j, CorrelatorOrder::Pair).unwrap() - dense).norm() < 1e-10);
        }
    }

    #[test]
    fn center_moves_keep_state_and_isometries() {
        let sp = FockSpace::new(5, 1).unwrap();
        let psi = StateVector::new(DVector::from_fn(32, |i, _| C64::new((i as f64).sin(), (i as f64).cos())), sp.basis())
            .unwrap()
            .normalized()
            .unwrap();
        let mut m = MpsState::from_state_vector(&psi, &sp, exact()).unwrap();
        for to in [0, 4, 2, 3, 1] {
            m.move_center(to);
            assert!(m.canonical_error() < 1e-12);
            assert!(dense_close(&m, &psi.amplitudes, 1e-12));
            assert!((m.norm_sqr() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn truncation_respects_budget() {
        let sp = FockSpace::new(6, 1).unwrap();
        let psi = StateVector::new(DVector::from_fn(64, |i, _| C64::new(1.0 / (1.0 + i as f64), 0.0)), sp.basis())
            .unwrap()
            .normalized()
            .unwrap();
        let m = MpsState::from_state_vector(&psi, &sp, MpsOptions { chi_max: 2, svd_cutoff: 0.0 }).unwrap();
        assert!(m.max_bond_dim() <= 2);
        let v = m.to_dense();
        let fid = psi.amplitudes.dotc(&v).norm_sqr() / v.norm_squared();
        assert!(fid >= 1.0 - m.cumulative_truncation() - 1e-12);
    }

    #[test]
    fn tebd_matches_dense_trotter_jump_for_jump() {
        use crate::fock::HamiltonianKind;
        use crate::lindblad::ModelBuilder;
        use crate::trajectory::{run_trajectory, DenseEngine, DensePropagator};
        let sp = FockSpace::new(6, 2).unwrap();
        let chain = ModelBuilder::new(&sp)
            .pair_jumps(1.0)
            .unwrap()
            .heal_bonds(0.5)
            .unwrap()
            .hamiltonian(HamiltonianKind::Kerr(0.3))
            .unwrap()
            .build_chain();
        let occ = [2, 1, 0, 1, 2, 0];
        let dt = 0.05 / max_local_rate(&chain);
        let cfg = TrajectoryConfig::new(dt, 200.0 * dt, 20.0 * dt, 1, 3)
            .unwrap()
            .with_observables(vec![Observable::DefectDensity, Observable::Number(2)])
            .with_jump_log(true);
        let mps0 = MpsState::from_product_state(&occ, &sp, MpsOptions { chi_max: 27, svd_cutoff: 0.0 }).unwrap();
        let mps = MpsEngine::new(&chain, &mps0, &cfg).unwrap();
        let model = chain.lindblad().unwrap();
        let dense = DenseEngine::new(&model, &StateVector::product(&occ, &sp).unwrap(), &cfg, DensePropagator::Trotter2).unwrap();
        let mut total = 0;
        for stream in 0..4 {
            let mut a = mps.spawn().unwrap();
            let mut b = dense.spawn().unwrap();
            let ra = run_trajectory(&mut a, &cfg, stream).unwrap();
            let rb = run_trajectory(&mut b, &cfg, stream).unwrap();
            assert_eq!(ra.jumps, rb.jumps);
            total += ra.jumps.len();
            for (va, vb) in ra.values.iter().zip(&rb.values) {
                for (x, y) in va.iter().zip(vb) {
                    assert!((x - y).abs() < 1e-9, "{x} vs {y}");
                }
            }
            let mut sa = a.state().clone();
            sa.normalize().unwrap();
            let vb = b.state() / C64::new(b.state().norm(), 0.0);
            assert!((sa.to_dense() - vb).camax() < 1e-9);
        }
        assert!(total > 0);
    }
}
