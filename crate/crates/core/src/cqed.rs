//! Circuit-QED building block for the pair jump: two cavities coupled to a
//! three-level anharmonic oscillator (levels g, e, f) and an optional
//! auxiliary two-level system.
//!
//! The full model is reduced in two steps: a Schrieffer–Wolff transformation
//! removes `|e⟩` (and the auxiliary `|1⟩`), then the fast decay `f → g` is
//! eliminated adiabatically. This module builds both ends of the chain and
//! measures how far apart they are.
//!
//! Detunings enter the Hamiltonian as `−δ1|e⟩⟨e|` and `−δ2|1⟩⟨1|`, so that the
//! dressed shifts of `|g⟩`, `|f⟩` and `|0⟩` are `+|g|²/δ`.
//!
//! Rates follow the crate convention `κ(2lρl† − l†lρ − ρl†l)`. The physical
//! decay rate `κ_f` of `|f⟩` is therefore a channel of rate `κ_f/2`.

use nalgebra::DMatrix;

use crate::basis::Basis;
use crate::error::{Error, Result};
use crate::fock::{annihilation_matrix, LatticeOperator};
use crate::linalg::{expm, max_abs};
use crate::lindblad::{evolve_with, Channel, DensityMatrix, LindbladModel};
use crate::sparse::CsrMatrix;
use crate::C64;

/// Tensor factor positions in [`CompositeSpace`].
pub const CAVITY_L: usize = 0;
pub const CAVITY_R: usize = 1;
pub const OSCILLATOR: usize = 2;
pub const TLS: usize = 3;

/// Oscillator level indices.
pub const LEVEL_G: usize = 0;
pub const LEVEL_E: usize = 1;
pub const LEVEL_F: usize = 2;

/// Largest full-model dimension accepted by [`reduction_error`].
pub const MAX_FULL_DIM: usize = 400;

#[derive(Clone, Debug, PartialEq)]
pub struct CqedParams {
    pub n_max: usize,
    pub g1: C64,
    pub g2: C64,
    pub g3: C64,
    pub delta1: f64,
    pub delta2: f64,
    pub chi: f64,
    pub chi_a_an: f64,
    pub chi_a_t: f64,
    /// Physical decay rate of `|f⟩ → |g⟩`.
    pub kappa_f: f64,
    /// Physical decay rate of the TLS, `|1⟩ → |0⟩`. Any nonzero value drains
    /// photon pairs through the virtual `|1⟩` population at about
    /// `κ_T |g3|²/δ2²`, which the effective model does not contain.
    pub kappa_t: f64,
    pub include_tls: bool,
}

impl Default for CqedParams {
    /// `g = 1`, `δ = 20g`, `κ_f = 40 g²/δ`, with the Kerr-cancelling `χ` and `g3`.
    fn default() -> Self {
        let g = C64::new(1.0, 0.0);
        Self {
            n_max: 2,
            g1: g,
            g2: g,
            g3: g,
            delta1: 20.0,
            delta2: 20.0,
            chi: 0.0,
            chi_a_an: 0.0,
            chi_a_t: 0.0,
            kappa_f: 2.0,
            kappa_t: 0.0,
            include_tls: true,
        }
        .with_kerr_cancellation()
    }
}

/// Ratios that control both reduction steps.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hierarchy {
    /// `min(δ1, δ2) / max|g|`.
    pub delta_over_g: f64,
    /// `κ_f / (max|g|²/min δ)`.
    pub kappa_ratio: f64,
}

impl Hierarchy {
    pub fn satisfied(&self) -> bool {
        self.delta_over_g >= 10.0 && self.kappa_ratio >= 5.0
    }
}

impl CqedParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_max < 2 {
            return Err(Error::InvalidArgument(format!("cavity cutoff must be >= 2, got {}", self.n_max)));
        }
        for (name, v) in [("delta1", self.delta1), ("delta2", self.delta2), ("kappa_f", self.kappa_f)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.kappa_t >= 0.0 && self.kappa_t.is_finite()) {
            return Err(Error::InvalidArgument(format!("kappa_t must be >= 0, got {}", self.kappa_t)));
        }
        let finite = [self.chi, self.chi_a_an, self.chi_a_t, self.g1.norm(), self.g2.norm(), self.g3.norm()];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("couplings must be finite".into()));
        }
        Ok(())
    }

    fn g_max(&self) -> f64 {
        let g3 = if self.include_tls { self.g3.norm() } else { 0.0 };
        self.g1.norm().max(self.g2.norm()).max(g3)
    }

    fn delta_min(&self) -> f64 {
        if self.include_tls {
            self.delta1.min(self.delta2)
        } else {
            self.delta1
        }
    }

    pub fn hierarchy(&self) -> Hierarchy {
        let (g, d) = (self.g_max(), self.delta_min());
        if g == 0.0 {
            return Hierarchy { delta_over_g: f64::INFINITY, kappa_ratio: f64::INFINITY };
        }
        Hierarchy { delta_over_g: d / g, kappa_ratio: self.kappa_f * d / (g * g) }
    }

    /// Sets `χ = 2|g1|²/δ1` and rescales `|g3|` so that `|g3|²/δ2 = |g1|²/δ1`,
    /// keeping the phase of `g3`. Under these relations every nonlinear term
    /// of the effective Hamiltonian cancels.
    pub fn with_kerr_cancellation(mut self) -> Self {
        let c = self.g1.norm_sqr() / self.delta1;
        self.chi = 2.0 * c;
        let mag = (c * self.delta2).sqrt();
        let phase = if self.g3.norm() > 0.0 { self.g3 / self.g3.norm() } else { C64::new(1.0, 0.0) };
        self.g3 = phase * mag;
        self
    }

    /// Same as [`with_kerr_cancellation`](Self::with_kerr_cancellation) but with
    /// `χ = |g1|²/(2δ1) = |g3|²/(2δ2)`. This leaves `3χ Σ a†²a²` behind.
    pub fn with_half_kerr_relation(mut self) -> Self {
        self = self.with_kerr_cancellation();
        self.chi /= 4.0;
        self
    }

    /// Channel rate of the effective pair jump, `2|g1 g2/δ1|²/κ_f`.
    pub fn effective_jump_rate(&self) -> f64 {
        2.0 * (self.g1 * self.g2).norm_sqr() / (self.delta1 * self.delta1 * self.kappa_f)
    }
}

/// Full Hilbert space: cavity L, cavity R, oscillator, optional TLS, in that
/// order (cavity L is the most significant digit).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CompositeSpace {
    pub n_max: usize,
    pub include_tls: bool,
}

impl CompositeSpace {
    pub fn new(p: &CqedParams) -> Self {
        Self { n_max: p.n_max, include_tls: p.include_tls }
    }

    pub fn dims(&self) -> Vec<usize> {
        let c = self.n_max + 1;
        let mut d = vec![c, c, 3];
        if self.include_tls {
            d.push(2);
        }
        d
    }

    pub fn dim(&self) -> usize {
        self.dims().iter().product()
    }

    pub fn basis(&self) -> Basis {
        Basis::full(self.dims())
    }

    pub fn cavity_dim(&self) -> usize {
        (self.n_max + 1).pow(2)
    }

    /// `cav ⊗ osc ⊗ tls`; `tls` is ignored without the TLS factor.
    fn lift(&self, cav: &DMatrix<C64>, osc: &DMatrix<C64>, tls: &DMatrix<C64>) -> DMatrix<C64> {
        let m = cav.kronecker(osc);
        if self.include_tls {
            m.kronecker(tls)
        } else {
            m
        }
    }
}

/// Two-cavity operators.
struct CavityOps {
    /// `a_L² − a_R²`
    t_minus: DMatrix<C64>,
    /// `a_L² + a_R²`
    t_plus: DMatrix<C64>,
    /// `Σ a†²a²`
    kerr: DMatrix<C64>,
    /// `a_L†a_L + a_R†a_R`
    number: DMatrix<C64>,
    id: DMatrix<C64>,
}

fn cavity_ops(n_max: usize) -> Result<CavityOps> {
    let d = n_max + 1;
    let a = annihilation_matrix(d)?.matrix;
    let id1 = DMatrix::<C64>::identity(d, d);
    let a2 = &a * &a;
    let (l2, r2) = (a2.kronecker(&id1), id1.kronecker(&a2));
    let n1 = a.adjoint() * &a;
    let k1 = a2.adjoint() * &a2;
    Ok(CavityOps {
        t_minus: &l2 - &r2,
        t_plus: &l2 + &r2,
        kerr: k1.kronecker(&id1) + id1.kronecker(&k1),
        number: n1.kronecker(&id1) + id1.kronecker(&n1),
        id: DMatrix::identity(d * d, d * d),
    })
}

fn ket_bra(d: usize, i: usize, j: usize) -> DMatrix<C64> {
    let mut m = DMatrix::zeros(d, d);
    m[(i, j)] = C64::new(1.0, 0.0);
    m
}

fn operator(m: &DMatrix<C64>, support: Vec<usize>, label: &str) -> LatticeOperator {
    let hermitian = max_abs(&(m - m.adjoint())) <= 1e-12 * max_abs(m).max(1.0);
    LatticeOperator { matrix: CsrMatrix::from_dense(m), support, hermitian, local: None, label: label.into() }
}

struct FullParts {
    space: CompositeSpace,
    h: DMatrix<C64>,
    /// Anti-Hermitian Schrieffer–Wolff generator, `H' = e^{−S} H e^{S}`.
    s: DMatrix<C64>,
    cav: CavityOps,
}

fn full_parts(p: &CqedParams) -> Result<FullParts> {
    p.validate()?;
    let space = CompositeSpace::new(p);
    let cav = cavity_ops(p.n_max)?;
    let (o, t) = (|i, j| ket_bra(3, i, j), |i, j| ket_bra(2, i, j));
    let (id3, id2) = (DMatrix::<C64>::identity(3, 3), DMatrix::<C64>::identity(2, 2));
    let c = |x: f64| C64::new(x, 0.0);

    let p_e = o(LEVEL_E, LEVEL_E);
    let osc_kerr = &p_e + o(LEVEL_F, LEVEL_F) * c(2.0);
    let mut h = space.lift(&cav.kerr, &id3, &id2) * c(-p.chi)
        - space.lift(&cav.number, &osc_kerr, &id2) * c(p.chi_a_an)
        - space.lift(&cav.id, &p_e, &id2) * c(p.delta1);

    let v1 = space.lift(&cav.t_minus, &o(LEVEL_E, LEVEL_G), &id2) * p.g1;
    let v2 = space.lift(&cav.t_plus.adjoint(), &o(LEVEL_F, LEVEL_E), &id2) * p.g2;
    let mut v = &v1 + &v2;
    let mut s = &v1 * c(1.0 / p.delta1) - &v2 * c(1.0 / p.delta1);
    if p.include_tls {
        let p1 = t(1, 1);
        h -= space.lift(&cav.number, &id3, &p1) * c(p.chi_a_t);
        h -= space.lift(&cav.id, &id3, &p1) * c(p.delta2);
        let v3 = space.lift(&cav.t_plus, &id3, &t(1, 0)) * p.g3;
        s += &v3 * c(1.0 / p.delta2);
        v += v3;
    }
    h += &v + v.adjoint();
    let s = &s - s.adjoint();
    Ok(FullParts { space, h, s, cav })
}

/// Full two-cavity + oscillator (+ TLS) model.
pub fn build_full_model(p: &CqedParams) -> Result<LindbladModel> {
    let parts = full_parts(p)?;
    let space = parts.space;
    let id2 = DMatrix::<C64>::identity(2, 2);
    let support: Vec<usize> = (0..space.dims().len()).collect();
    let lower = space.lift(&parts.cav.id, &ket_bra(3, LEVEL_G, LEVEL_F), &id2);
    let mut channels = vec![Channel { op: operator(&lower, vec![OSCILLATOR], "|g⟩⟨f|"), rate: 0.5 * p.kappa_f }];
    if p.include_tls && p.kappa_t > 0.0 {
        let tls = space.lift(&parts.cav.id, &DMatrix::identity(3, 3), &ket_bra(2, 0, 1));
        channels.push(Channel { op: operator(&tls, vec![TLS], "|0⟩⟨1|"), rate: 0.5 * p.kappa_t });
    }
    LindbladModel::new(space.basis(), vec![operator(&parts.h, support, "H_cqed")], channels)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SwReport {
    /// Max-norm deviation of the transformed `{g, f}` block from its
    /// second-order form.
    pub deviation: f64,
    /// Same, restricted to the `|g⟩⟨g|` block.
    pub gg_deviation: f64,
    /// Largest remaining coupling between the `{g, f}` block and the
    /// eliminated levels.
    pub leakage: f64,
    /// `max|g|²/min δ`, the size of the retained terms.
    pub scale: f64,
    pub hierarchy: Hierarchy,
}

impl SwReport {
    pub fn hierarchy_warning(&self) -> Option<String> {
        (!self.hierarchy.satisfied()).then(|| {
            format!("weak hierarchy: δ/g = {:.3}, κ_f δ/g² = {:.3}", self.hierarchy.delta_over_g, self.hierarchy.kappa_ratio)
        })
    }
}

/// Second-order effective Hamiltonian on the full space, nonzero only on the
/// oscillator levels g, f (TLS in `|0⟩`).
fn second_order_target(p: &CqedParams, parts: &FullParts) -> DMatrix<C64> {
    let (cav, space) = (&parts.cav, parts.space);
    let c = |x: f64| C64::new(x, 0.0);
    let o = |i, j| ket_bra(3, i, j);
    let t0 = ket_bra(2, 0, 0);
    let (tm, tp) = (&cav.t_minus, &cav.t_plus);
    let pq = tp.adjoint() * tp;
    let q = tm.adjoint() * tm * c(p.g1.norm_sqr() / p.delta1);
    let pf = &pq * c(p.g2.norm_sqr() / p.delta1);
    let r = tp.adjoint() * tm * (p.g1 * p.g2 / p.delta1);
    let gf = &o(LEVEL_G, LEVEL_G) + o(LEVEL_F, LEVEL_F);
    let mut cav_gf = &cav.kerr * c(-p.chi);
    if p.include_tls {
        cav_gf += &pq * c(p.g3.norm_sqr() / p.delta2);
    }
    let f_kerr = &cav.number * c(-2.0 * p.chi_a_an) + pf;
    let rfg = space.lift(&r, &o(LEVEL_F, LEVEL_G), &t0);
    space.lift(&cav_gf, &gf, &t0)
        + space.lift(&f_kerr, &o(LEVEL_F, LEVEL_F), &t0)
        + space.lift(&q, &o(LEVEL_G, LEVEL_G), &t0)
        + &rfg
        + rfg.adjoint()
}

/// Applies `e^{−S} H e^{S}` densely and compares the `{g, f}` block with its
/// second-order form.
pub fn schrieffer_wolff_check(p: &CqedParams) -> Result<SwReport> {
    let parts = full_parts(p)?;
    let hp = expm(&(-&parts.s)) * &parts.h * expm(&parts.s);
    let target = second_order_target(p, &parts);
    let basis = parts.space.basis();
    let level = |i: usize| {
        let d = basis.digits(i);
        let tls_ok = !p.include_tls || d[TLS] == 0;
        (d[OSCILLATOR], tls_ok)
    };
    let low = |i: usize| {
        let (l, ok) = level(i);
        ok && l != LEVEL_E
    };
    let (mut dev, mut gg, mut leakage) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..hp.nrows() {
        if !low(i) {
            continue;
        }
        let li = level(i).0;
        for j in 0..hp.ncols() {
            if !low(j) {
                leakage = leakage.max(hp[(i, j)].norm());
                continue;
            }
            let lj = level(j).0;
            let d = (hp[(i, j)] - target[(i, j)]).norm();
            dev = dev.max(d);
            if li == LEVEL_G && lj == LEVEL_G {
                gg = gg.max(d);
            }
        }
    }
    Ok(SwReport { deviation: dev, gg_deviation: gg, leakage, scale: p.g_max().powi(2) / p.delta_min(), hierarchy: p.hierarchy() })
}

/// Two-cavity model with the oscillator (and TLS) eliminated:
/// `H = −χ Σ a†²a² + (|g1|²/δ1) T_−†T_− + (|g3|²/δ2) T_+†T_+` and the pair
/// jump `T_+†T_−` at rate `2|g1 g2/δ1|²/κ_f`.
pub fn build_effective_model(p: &CqedParams) -> Result<LindbladModel> {
    p.validate()?;
    let cav = cavity_ops(p.n_max)?;
    let c = |x: f64| C64::new(x, 0.0);
    let mut h = &cav.kerr * c(-p.chi) + cav.t_minus.adjoint() * &cav.t_minus * c(p.g1.norm_sqr() / p.delta1);
    if p.include_tls {
        h += cav.t_plus.adjoint() * &cav.t_plus * c(p.g3.norm_sqr() / p.delta2);
    }
    let rate = p.effective_jump_rate();
    let mut channels = vec![];
    if rate > 0.0 {
        let l = cav.t_plus.adjoint() * &cav.t_minus;
        channels.push(Channel { op: operator(&l, vec![CAVITY_L, CAVITY_R], "T+†T−"), rate });
    }
    let d = p.n_max + 1;
    LindbladModel::new(Basis::full(vec![d, d]), vec![operator(&h, vec![CAVITY_L, CAVITY_R], "H_eff")], channels)
}

/// Relative max-norm of the effective Hamiltonian, in units of `|g1|²/δ1`.
pub fn kerr_residual(p: &CqedParams) -> Result<f64> {
    let m = build_effective_model(p)?;
    let scale = (p.g1.norm_sqr() / p.delta1).max(p.chi.abs()).max(f64::MIN_POSITIVE);
    Ok(m.hamiltonian().max_abs() / scale)
}

/// Max-norm distance between the effective jump operator and `reference`
/// after the least-squares scale is removed, relative to `‖reference‖`.
pub fn jump_mismatch(p: &CqedParams, reference: &CsrMatrix) -> Result<f64> {
    let m = build_effective_model(p)?;
    if m.channels().is_empty() {
        return Err(Error::InvalidArgument("effective model has no jump (g1 g2 = 0)".into()));
    }
    let (l, r) = (m.jump_matrix(0).to_dense(), reference.to_dense());
    if l.shape() != r.shape() {
        return Err(Error::DimensionMismatch { expected: r.nrows(), got: l.nrows() });
    }
    let num: C64 = r.iter().zip(l.iter()).map(|(a, b)| a.conj() * b).sum();
    let den: f64 = r.iter().map(|a| a.norm_sqr()).sum();
    let scale = num / den;
    Ok(max_abs(&(l - r * scale)) / max_abs(&reference.to_dense()))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReductionReport {
    /// Cavity trace distance between full and effective dynamics per time.
    pub trace_distance: Vec<f64>,
    pub max_trace_distance: f64,
    /// Time average (over the grid) of the `|e⟩` plus `|f⟩` population.
    pub excited_population: f64,
    /// Largest `|e⟩` plus `|f⟩` population seen on the grid.
    pub max_excited_population: f64,
}

/// Evolves the full model from `ρ_cav ⊗ |g⟩⟨g| (⊗ |0⟩⟨0|)` and the effective
/// model from `ρ_cav`, and compares the cavity states on `t_grid`.
pub fn reduction_error(p: &CqedParams, t_grid: &[f64], rho_cav: &DensityMatrix, rtol: f64) -> Result<ReductionReport> {
    let space = CompositeSpace::new(p);
    if space.dim() > MAX_FULL_DIM {
        return Err(Error::TooLarge { dim: space.dim(), limit: MAX_FULL_DIM });
    }
    let d = p.n_max + 1;
    let cav_basis = Basis::full(vec![d, d]);
    if rho_cav.basis != cav_basis {
        return Err(Error::DimensionMismatch { expected: cav_basis.len(), got: rho_cav.dim() });
    }
    let eff = build_effective_model(p)?;
    let ground = space.lift(&DMatrix::identity(1, 1), &ket_bra(3, LEVEL_G, LEVEL_G), &ket_bra(2, 0, 0));
    let rho_full = DensityMatrix::new(rho_cav.matrix.kronecker(&ground), space.basis())?;
    let sectors = excitation_sectors(p, &rho_full);
    let rho_full = rho_full.restrict(&sectors)?;
    let full = build_full_model(p)?.restrict(&sectors)?;

    let mut eff_states = Vec::with_capacity(t_grid.len());
    evolve_with(&eff, rho_cav, t_grid, rtol, |_, rho| {
        eff_states.push(rho.clone());
        Ok(())
    })?;
    let excited: Vec<usize> =
        (0..sectors.len()).filter(|&k| sectors.digits(sectors.full_index(k))[OSCILLATOR] != LEVEL_G).collect();
    let (mut dist, mut pops) = (Vec::with_capacity(t_grid.len()), Vec::with_capacity(t_grid.len()));
    let mut k = 0;
    evolve_with(&full, &rho_full, t_grid, rtol, |_, rho| {
        let cav = rho.partial_trace(&[CAVITY_L, CAVITY_R])?;
        dist.push(cav.trace_distance(&eff_states[k])?);
        pops.push(excited.iter().map(|&k| rho.matrix[(k, k)].re).sum());
        k += 1;
        Ok(())
    })?;
    let max_trace_distance = dist.iter().cloned().fold(0.0, f64::max);
    let excited_population = pops.iter().sum::<f64>() / pops.len().max(1) as f64;
    let max_excited_population = pops.iter().cloned().fold(0.0, f64::max);
    Ok(ReductionReport { trace_distance: dist, max_trace_distance, excited_population, max_excited_population })
}

/// `N_cav + 2 P_e + 2 P_1`, conserved by the Hamiltonian and by the `f → g`
/// decay. TLS decay lowers it by 2.
fn excitations(digits: &[usize]) -> usize {
    digits[CAVITY_L] + digits[CAVITY_R] + 2 * (digits[OSCILLATOR] == LEVEL_E) as usize + 2 * digits.get(TLS).copied().unwrap_or(0)
}

/// Excitation sectors of `rho`. With TLS decay the sectors are not closed
/// and the full basis is returned.
fn excitation_sectors(p: &CqedParams, rho: &DensityMatrix) -> Basis {
    let basis = &rho.basis;
    if p.include_tls && p.kappa_t > 0.0 {
        return basis.clone();
    }
    let present: Vec<usize> =
        (0..rho.dim()).filter(|&k| rho.matrix[(k, k)].norm() > 0.0).map(|k| excitations(&basis.digits(k))).collect();
    let keep = |e: usize| present.contains(&e);
    let states = (0..basis.full_dim()).filter(|&k| keep(excitations(&basis.digits(k)))).collect();
    Basis::subset(basis.dims().to_vec(), states)
}

/// Reduction error from `|2,0⟩` over three effective jump times, 31 samples.
pub fn standard_reduction(p: &CqedParams) -> Result<ReductionReport> {
    let t_end = 3.0 * effective_time_scale(p);
    let grid: Vec<f64> = (0..=30).map(|k| t_end * k as f64 / 30.0).collect();
    reduction_error(p, &grid, &cavity_fock_state(p.n_max, 2, 0)?, 1e-8)
}

/// Two-cavity density matrix of the product state `|n_L, n_R⟩`.
pub fn cavity_fock_state(n_max: usize, n_l: usize, n_r: usize) -> Result<DensityMatrix> {
    if n_l > n_max || n_r > n_max {
        return Err(Error::CutoffOverflow(format!("|{n_l},{n_r}⟩ exceeds n_max = {n_max}")));
    }
    let d = n_max + 1;
    let i = n_l * d + n_r;
    DensityMatrix::new(ket_bra(d * d, i, i), Basis::full(vec![d, d]))
}

/// Two-cavity dark state `(|2,0⟩ + |0,2⟩)/√2`.
pub fn cavity_dark_state(n_max: usize) -> Result<DensityMatrix> {
    if n_max < 2 {
        return Err(Error::CutoffOverflow("dark pair state needs n_max >= 2".into()));
    }
    let d = n_max + 1;
    let mut psi = DMatrix::<C64>::zeros(d * d, 1);
    psi[(2 * d, 0)] = C64::new(0.5f64.sqrt(), 0.0);
    psi[(2, 0)] = C64::new(0.5f64.sqrt(), 0.0);
    DensityMatrix::new(&psi * psi.adjoint(), Basis::full(vec![d, d]))
}

/// Time for the effective pair jump to act a few times: `1/rate`.
pub fn effective_time_scale(p: &CqedParams) -> f64 {
    1.0 / p.effective_jump_rate()
}
