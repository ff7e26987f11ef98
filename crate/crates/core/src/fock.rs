//! Truncated Fock-space operator algebra on a 1D lattice.
//!
//! Every site carries occupations `0..=n_max`. Operators are built directly in
//! the truncated space: `a` has matrix elements `<n-1|a|n> = sqrt(n)` and
//! `a†|n_max>` is dropped. Sites are 0-based.

use std::sync::Arc;

use log::warn;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::basis::Basis;
use crate::error::{Error, Result};
use crate::linalg::max_abs;
use crate::sparse::CsrMatrix;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Lattice of `sites` bosonic modes, each truncated at `n_max` photons.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FockSpace {
    sites: usize,
    n_max: usize,
    periodic: bool,
}

impl FockSpace {
    /// Open chain.
    pub fn new(sites: usize, n_max: usize) -> Result<Self> {
        if sites < 1 {
            return Err(Error::InvalidDimension("a lattice needs at least one site".into()));
        }
        if n_max < 1 {
            return Err(Error::InvalidDimension("n_max must be at least 1".into()));
        }
        Ok(Self { sites, n_max, periodic: false })
    }

    /// Ring; bond `L-1` joins the last site to site 0.
    pub fn periodic(sites: usize, n_max: usize) -> Result<Self> {
        let mut s = Self::new(sites, n_max)?;
        if sites < 3 {
            return Err(Error::InvalidDimension("a periodic chain needs at least three sites".into()));
        }
        s.periodic = true;
        Ok(s)
    }

    pub fn sites(&self) -> usize {
        self.sites
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn is_periodic(&self) -> bool {
        self.periodic
    }

    /// Local dimension `n_max + 1`.
    pub fn local_dim(&self) -> usize {
        self.n_max + 1
    }

    /// Total dimension `d^L`.
    pub fn dim(&self) -> usize {
        self.local_dim().pow(self.sites as u32)
    }

    pub fn n_bonds(&self) -> usize {
        if self.periodic {
            self.sites
        } else {
            self.sites - 1
        }
    }

    /// Sites joined by bond `j`.
    pub fn bond(&self, j: usize) -> Result<(usize, usize)> {
        if j >= self.n_bonds() {
            return Err(Error::OutOfRange { index: j, limit: self.n_bonds() });
        }
        Ok((j, (j + 1) % self.sites))
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.sites {
            return Err(Error::OutOfRange { index: site, limit: self.sites });
        }
        Ok(())
    }

    /// Left and right neighbours of a site, `None` past an open boundary.
    pub fn neighbours(&self, site: usize) -> (Option<usize>, Option<usize>) {
        let l = self.sites;
        if self.periodic {
            (Some((site + l - 1) % l), Some((site + 1) % l))
        } else {
            (site.checked_sub(1), (site + 1 < l).then_some(site + 1))
        }
    }

    pub fn basis(&self) -> Basis {
        Basis::fock(self)
    }

    pub fn index_of(&self, occupations: &[usize]) -> Result<usize> {
        if occupations.len() != self.sites {
            return Err(Error::DimensionMismatch { expected: self.sites, got: occupations.len() });
        }
        if let Some(&n) = occupations.iter().find(|&&n| n > self.n_max) {
            return Err(Error::CutoffOverflow(format!("occupation {n} exceeds n_max = {}", self.n_max)));
        }
        Ok(self.basis().index_of(occupations))
    }
}

/// Dense single-site operator.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteOperator {
    pub matrix: DMatrix<C64>,
    pub label: String,
}

impl SiteOperator {
    pub fn new(matrix: DMatrix<C64>, label: impl Into<String>) -> Self {
        Self { matrix, label: label.into() }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn identity(d: usize) -> Self {
        Self::new(DMatrix::identity(d, d), "I")
    }

    pub fn creation(d: usize) -> Result<Self> {
        let a = annihilation_matrix(d)?;
        Ok(Self::new(a.matrix.adjoint(), "a†"))
    }

    pub fn number(d: usize) -> Self {
        Self::new(DMatrix::from_fn(d, d, |r, c| if r == c { C64::new(r as f64, 0.0) } else { ZERO }), "n")
    }

    /// `(-1)^n`.
    pub fn parity(d: usize) -> Self {
        Self::new(
            DMatrix::from_fn(d, d, |r, c| if r == c { C64::new(if r % 2 == 0 { 1.0 } else { -1.0 }, 0.0) } else { ZERO }),
            "P",
        )
    }

    /// `(1 - P)/2`: projector on odd occupations.
    pub fn odd_projector(d: usize) -> Self {
        Self::new(DMatrix::from_fn(d, d, |r, c| if r == c && r % 2 == 1 { ONE } else { ZERO }), "(1-P)/2")
    }

    /// `|k><k|`.
    pub fn projector(d: usize, k: usize) -> Self {
        Self::new(DMatrix::from_fn(d, d, |r, c| if r == c && r == k { ONE } else { ZERO }), format!("P{k}"))
    }

    pub fn adjoint(&self) -> Self {
        Self::new(self.matrix.adjoint(), format!("({})†", self.label))
    }

    pub fn mul(&self, other: &Self) -> Self {
        Self::new(&self.matrix * &other.matrix, format!("{}{}", self.label, other.label))
    }
}

/// Truncated annihilation operator: `M[n-1][n] = sqrt(n)` for `1 <= n < d`.
pub fn annihilation_matrix(d: usize) -> Result<SiteOperator> {
    if d < 2 {
        return Err(Error::InvalidDimension(format!("local dimension {d} < 2")));
    }
    let m = DMatrix::from_fn(d, d, |r, c| if c == r + 1 { C64::new((c as f64).sqrt(), 0.0) } else { ZERO });
    Ok(SiteOperator::new(m, "a"))
}

/// Dense matrix of a local operator on consecutive lattice sites, used by the
/// MPS backend. Tensor order follows site order, first site slowest.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalOp {
    pub first_site: usize,
    pub width: usize,
    pub matrix: DMatrix<C64>,
}

/// Sparse operator on the full lattice space.
#[derive(Clone, Debug, PartialEq)]
pub struct LatticeOperator {
    pub matrix: CsrMatrix,
    /// Sorted sites on which the operator acts non-trivially.
    pub support: Vec<usize>,
    pub hermitian: bool,
    pub local: Option<LocalOp>,
    pub label: String,
}

impl LatticeOperator {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
            support: self.support.clone(),
            hermitian: self.hermitian,
            local: self.local.as_ref().map(|l| LocalOp { matrix: l.matrix.adjoint(), ..l.clone() }),
            label: format!("({})†", self.label),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            matrix: self.matrix.scale_real(s),
            support: self.support.clone(),
            hermitian: self.hermitian,
            local: self.local.as_ref().map(|l| LocalOp { matrix: &l.matrix * C64::new(s, 0.0), ..l.clone() }),
            label: format!("{s}·{}", self.label),
        }
    }

    /// Matrix expressed in `basis` (restricted if the basis is a sector).
    pub fn matrix_in(&self, basis: &Basis) -> CsrMatrix {
        match basis.states() {
            None => self.matrix.clone(),
            Some(states) => self.matrix.restrict(states),
        }
    }

    pub fn apply(&self, state: &StateVector) -> Result<StateVector> {
        let m = self.matrix_in(&state.basis);
        if m.ncols() != state.amplitudes.len() {
            return Err(Error::DimensionMismatch { expected: m.ncols(), got: state.amplitudes.len() });
        }
        Ok(StateVector { amplitudes: m.mul_vec(&state.amplitudes), basis: state.basis.clone() })
    }
}

/// Embeds a dense operator acting on `sites` (tensor order = slice order)
/// into the full lattice space.
pub fn embed_local(local: &DMatrix<C64>, sites: &[usize], space: &FockSpace) -> Result<CsrMatrix> {
    let d = space.local_dim();
    for &s in sites {
        space.check_site(s)?;
    }
    let ld = d.pow(sites.len() as u32);
    if local.nrows() != ld || local.ncols() != ld {
        return Err(Error::DimensionMismatch { expected: ld, got: local.nrows() });
    }
    let basis = space.basis();
    let mut trip = Vec::new();
    let mut digits_out;
    for col in 0..space.dim() {
        let digits = basis.digits(col);
        let lc = sites.iter().fold(0, |acc, &s| acc * d + digits[s]);
        for lr in 0..ld {
            let v = local[(lr, lc)];
            if v == ZERO {
                continue;
            }
            digits_out = digits.clone();
            let mut rem = lr;
            for &s in sites.iter().rev() {
                digits_out[s] = rem % d;
                rem /= d;
            }
            trip.push((basis.index_of(&digits_out), col, v));
        }
    }
    Ok(CsrMatrix::from_triplets(space.dim(), space.dim(), trip))
}

fn local_op_for(sites: &[usize], matrix: &DMatrix<C64>) -> Option<LocalOp> {
    match sites {
        [s] => Some(LocalOp { first_site: *s, width: 1, matrix: matrix.clone() }),
        [a, b] if *b == a + 1 => Some(LocalOp { first_site: *a, width: 2, matrix: matrix.clone() }),
        _ => None,
    }
}

/// Builds a lattice operator from a dense local matrix on `sites`.
pub fn lattice_operator(
    local: &DMatrix<C64>,
    sites: &[usize],
    space: &FockSpace,
    label: impl Into<String>,
) -> Result<LatticeOperator> {
    let matrix = embed_local(local, sites, space)?;
    let mut support = sites.to_vec();
    support.sort_unstable();
    let hermitian = max_abs(&(local - local.adjoint())) <= 1e-12;
    Ok(LatticeOperator { matrix, support, hermitian, local: local_op_for(sites, local), label: label.into() })
}

/// Embeds a single-site operator: identity everywhere except `site`.
pub fn embed(op: &SiteOperator, site: usize, space: &FockSpace) -> Result<LatticeOperator> {
    space.check_site(site)?;
    if op.dim() != space.local_dim() {
        return Err(Error::DimensionMismatch { expected: space.local_dim(), got: op.dim() });
    }
    let mut out = lattice_operator(&op.matrix, &[site], space, format!("{}_{site}", op.label))?;
    if op.matrix == DMatrix::identity(op.dim(), op.dim()) {
        out.support.clear();
    }
    Ok(out)
}

fn kron(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    a.kronecker(b)
}

fn site_ops(d: usize) -> Result<(DMatrix<C64>, DMatrix<C64>, DMatrix<C64>)> {
    let a = annihilation_matrix(d)?.matrix;
    let ad = a.adjoint();
    Ok((a, ad, DMatrix::identity(d, d)))
}

/// Pair jump on bond `j`: `(a†²_j + a†²_{j+1})(a²_j - a²_{j+1})`.
pub fn pair_jump(j: usize, space: &FockSpace) -> Result<LatticeOperator> {
    let (s0, s1) = space.bond(j)?;
    let d = space.local_dim();
    if d < 3 {
        return Err(Error::DegenerateOperator("pair jump needs n_max >= 2 so that a² is nonzero".into()));
    }
    let (a, ad, id) = site_ops(d)?;
    let a2 = &a * &a;
    let ad2 = &ad * &ad;
    let create = kron(&ad2, &id) + kron(&id, &ad2);
    let annih = kron(&a2, &id) - kron(&id, &a2);
    lattice_operator(&(create * annih), &[s0, s1], space, format!("l_{j}"))
}

/// Parity-healing jump `c_j = Γ (a†_{j+1} a_j + a†_{j-1} a_j)(1 - P_j)/2`.
/// Missing neighbours at an open boundary drop out.
pub fn heal_jump(j: usize, space: &FockSpace, gamma: f64) -> Result<LatticeOperator> {
    space.check_site(j)?;
    let (left, right) = space.neighbours(j);
    let d = space.local_dim();
    let mut total: Option<CsrMatrix> = None;
    let mut support = vec![j];
    for nb in [right, left].into_iter().flatten() {
        let term = heal_bond_local(d)?;
        let m = embed_local(&term, &[j, nb], space)?;
        total = Some(match total {
            Some(t) => t.add(&m),
            None => m,
        });
        support.push(nb);
    }
    support.sort_unstable();
    support.dedup();
    let matrix = total.unwrap_or_else(|| CsrMatrix::zeros(space.dim(), space.dim())).scale_real(gamma);
    Ok(LatticeOperator { matrix, support, hermitian: false, local: None, label: format!("c_{j}") })
}

/// `a†_{nb} a_j (1 - P_j)/2` with tensor order `(j, nb)`.
fn heal_bond_local(d: usize) -> Result<DMatrix<C64>> {
    let (a, ad, _) = site_ops(d)?;
    let odd = SiteOperator::odd_projector(d).matrix;
    Ok(kron(&(&a * &odd), &ad))
}

/// Direction of a bond-local healing channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum HopDirection {
    Left,
    Right,
}

/// One bond term of the healing jump: moves a photon from odd-parity site `j`
/// to its left or right neighbour, without the `Γ` prefactor.
pub fn heal_bond_channel(j: usize, dir: HopDirection, space: &FockSpace) -> Result<LatticeOperator> {
    space.check_site(j)?;
    let (left, right) = space.neighbours(j);
    let nb = match dir {
        HopDirection::Left => left,
        HopDirection::Right => right,
    }
    .ok_or(Error::OutOfRange { index: j, limit: space.sites() })?;
    let local = heal_bond_local(space.local_dim())?;
    let label = match dir {
        HopDirection::Left => format!("c<_{j}"),
        HopDirection::Right => format!("c>_{j}"),
    };
    // local matrices for the MPS backend must be ordered by site
    if nb + 1 == j {
        let swapped = swap_sites(&local, space.local_dim());
        lattice_operator(&swapped, &[nb, j], space, label)
    } else {
        lattice_operator(&local, &[j, nb], space, label)
    }
}

/// Reorders a two-site operator from `(x, y)` to `(y, x)` tensor order.
pub fn swap_sites(m: &DMatrix<C64>, d: usize) -> DMatrix<C64> {
    DMatrix::from_fn(d * d, d * d, |r, c| {
        let (r0, r1) = (r / d, r % d);
        let (c0, c1) = (c / d, c % d);
        m[(r1 * d + r0, c1 * d + c0)]
    })
}

/// Hard-core healing jump `c'_j = (a†_j a_{j+1} + h.c.) n_j (n_j - 2)`.
pub fn heal_jump_hardcore(j: usize, space: &FockSpace) -> Result<LatticeOperator> {
    let (s0, s1) = space.bond(j)?;
    if space.n_max() != 2 {
        warn!("hard-core healing jump built with n_max = {} (intended for n_max = 2)", space.n_max());
    }
    let d = space.local_dim();
    let (a, ad, id) = site_ops(d)?;
    let n = SiteOperator::number(d).matrix;
    let poly = &n * (&n - DMatrix::identity(d, d) * C64::new(2.0, 0.0));
    let hop = kron(&ad, &a) + kron(&a, &ad);
    let m = hop * kron(&poly, &id);
    lattice_operator(&m, &[s0, s1], space, format!("c'_{j}"))
}

/// Incoherent single-photon hop `l'_j = a†_j a_{j+1}`.
pub fn hop_noise_jump(j: usize, space: &FockSpace) -> Result<LatticeOperator> {
    let (s0, s1) = space.bond(j)?;
    let (a, ad, _) = site_ops(space.local_dim())?;
    lattice_operator(&kron(&ad, &a), &[s0, s1], space, format!("l'_{j}"))
}

/// Hamiltonian families summed over all sites.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HamiltonianKind {
    /// `U a†² a²` on every site.
    Kerr(f64),
    /// `-V0 n (n - 2)` on every site.
    Penalty(f64),
}

pub fn hamiltonian_site_matrix(kind: HamiltonianKind, d: usize) -> Result<DMatrix<C64>> {
    let (a, ad, _) = site_ops(d)?;
    Ok(match kind {
        HamiltonianKind::Kerr(u) => (&ad * &ad * &a * &a) * C64::new(u, 0.0),
        HamiltonianKind::Penalty(v0) => {
            let n = SiteOperator::number(d).matrix;
            (&n * (&n - DMatrix::identity(d, d) * C64::new(2.0, 0.0))) * C64::new(-v0, 0.0)
        }
    })
}

/// Single-site term of a Hamiltonian family (what the MPS backend consumes).
pub fn hamiltonian_site_term(kind: HamiltonianKind, site: usize, space: &FockSpace) -> Result<LatticeOperator> {
    let m = hamiltonian_site_matrix(kind, space.local_dim())?;
    let mut op = lattice_operator(&m, &[site], space, format!("{kind:?}_{site}"))?;
    op.hermitian = true;
    Ok(op)
}

/// Sum of a Hamiltonian family over all sites.
pub fn hamiltonian_terms(kind: HamiltonianKind, space: &FockSpace) -> Result<LatticeOperator> {
    let mut total = CsrMatrix::zeros(space.dim(), space.dim());
    for s in 0..space.sites() {
        total = total.add(&hamiltonian_site_term(kind, s, space)?.matrix);
    }
    Ok(LatticeOperator {
        matrix: total,
        support: (0..space.sites()).collect(),
        hermitian: true,
        local: None,
        label: format!("{kind:?}"),
    })
}

pub fn number_op(site: usize, space: &FockSpace) -> Result<LatticeOperator> {
    embed(&SiteOperator::number(space.local_dim()), site, space)
}

pub fn parity_op(site: usize, space: &FockSpace) -> Result<LatticeOperator> {
    embed(&SiteOperator::parity(space.local_dim()), site, space)
}

/// `N_tot = Σ_j n_j`.
pub fn total_number(space: &FockSpace) -> LatticeOperator {
    let basis = space.basis();
    let trip = (0..space.dim()).map(|i| (i, i, C64::new(basis.digits(i).iter().sum::<usize>() as f64, 0.0))).collect();
    LatticeOperator {
        matrix: CsrMatrix::from_triplets(space.dim(), space.dim(), trip),
        support: (0..space.sites()).collect(),
        hermitian: true,
        local: None,
        label: "N".into(),
    }
}

/// Two-point operator `a†^k_i a^k_j` (`k = 1` single, `k = 2` pair).
pub fn hopping_correlator_op(i: usize, j: usize, power: u32, space: &FockSpace) -> Result<LatticeOperator> {
    space.check_site(i)?;
    space.check_site(j)?;
    let (a, ad, _) = site_ops(space.local_dim())?;
    let ak = a.pow(power);
    let adk = ad.pow(power);
    if i == j {
        return lattice_operator(&(adk * ak), &[i], space, format!("a†^{power}_{i} a^{power}_{j}"));
    }
    lattice_operator(&kron(&adk, &ak), &[i, j], space, format!("a†^{power}_{i} a^{power}_{j}"))
}

/// Pure state on a (possibly restricted) product basis.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    pub amplitudes: DVector<C64>,
    pub basis: Basis,
}

impl StateVector {
    pub fn new(amplitudes: DVector<C64>, basis: Basis) -> Result<Self> {
        if amplitudes.len() != basis.len() {
            return Err(Error::DimensionMismatch { expected: basis.len(), got: amplitudes.len() });
        }
        Ok(Self { amplitudes, basis })
    }

    /// Fock product state `|n_0, n_1, ...>` in the full space.
    pub fn product(occupations: &[usize], space: &FockSpace) -> Result<Self> {
        let idx = space.index_of(occupations)?;
        let mut amps = DVector::zeros(space.dim());
        amps[idx] = ONE;
        Ok(Self { amplitudes: amps, basis: space.basis() })
    }

    pub fn vacuum(space: &FockSpace) -> Self {
        Self::product(&vec![0; space.sites()], space).expect("vacuum is always representable")
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    pub fn normalized(&self) -> Result<Self> {
        let n = self.norm();
        if n == 0.0 {
            return Err(Error::InvalidArgument("cannot normalize the zero vector".into()));
        }
        Ok(Self { amplitudes: &self.amplitudes / C64::new(n, 0.0), basis: self.basis.clone() })
    }

    pub fn inner(&self, other: &Self) -> C64 {
        self.amplitudes.dotc(&other.amplitudes)
    }

    pub fn expect(&self, op: &LatticeOperator) -> Result<C64> {
        let applied = op.apply(self)?;
        Ok(self.inner(&applied))
    }

    /// Amplitude of a Fock configuration (zero if outside the basis).
    pub fn amplitude(&self, occupations: &[usize]) -> C64 {
        let full = self.basis.index_of(occupations);
        self.basis.position(full).map(|k| self.amplitudes[k]).unwrap_or(ZERO)
    }

    /// Re-expresses the state in `target`. Fails if weight would be lost.
    pub fn restrict(&self, target: &Basis) -> Result<Self> {
        let mut amps = DVector::zeros(target.len());
        let mut kept = 0.0;
        for k in 0..self.len() {
            let full = self.basis.full_index(k);
            if let Some(p) = target.position(full) {
                amps[p] = self.amplitudes[k];
                kept += self.amplitudes[k].norm_sqr();
            }
        }
        let total = self.amplitudes.norm_squared();
        if (total - kept).abs() > 1e-12 * total.max(1.0) {
            return Err(Error::InvalidArgument("state has weight outside the target basis".into()));
        }
        Ok(Self { amplitudes: amps, basis: target.clone() })
    }

    /// Embeds a sector state back into the full space.
    pub fn to_full(&self) -> Self {
        let full = Basis::full(self.basis.dims().to_vec());
        let mut amps = DVector::zeros(full.len());
        for k in 0..self.len() {
            amps[self.basis.full_index(k)] = self.amplitudes[k];
        }
        Self { amplitudes: amps, basis: full }
    }
}

/// Shared read-only handle, for passing operator sets between threads.
pub type SharedOp = Arc<LatticeOperator>;
