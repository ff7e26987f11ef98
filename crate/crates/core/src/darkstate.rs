//! Exact pair-condensate dark states and their correlators.
//!
//! `|D_2n> ∝ (A†)^n |0>` with `A† = Σ_j a†²_j (n_j+1)^{-1}`; odd-parity
//! defects are added with `a'†_j = a†_j (n_j+1)^{-1}`.

use nalgebra::DMatrix;

use crate::basis::Basis;
use crate::error::{Error, Result};
use crate::fock::{hopping_correlator_op, lattice_operator, pair_jump, FockSpace, LatticeOperator, SiteOperator, StateVector};
use crate::C64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DarkStateSpec {
    pub sites: usize,
    pub n_pairs: usize,
    pub defects: Vec<usize>,
    pub n_max: usize,
}

impl DarkStateSpec {
    pub fn new(sites: usize, n_pairs: usize, n_max: usize) -> Self {
        Self { sites, n_pairs, defects: Vec::new(), n_max }
    }

    pub fn with_defects(mut self, defects: Vec<usize>) -> Self {
        self.defects = defects;
        self
    }

    pub fn total_photons(&self) -> usize {
        2 * self.n_pairs + self.defects.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sites < 2 {
            return Err(Error::InvalidArgument(format!("dark state needs at least 2 sites, got {}", self.sites)));
        }
        if self.n_max < 2 {
            return Err(Error::InvalidDimension(format!("pair creation needs n_max >= 2, got {}", self.n_max)));
        }
        if !self.defects.len().is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!("defects come in pairs, got {}", self.defects.len())));
        }
        let mut sorted = self.defects.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.defects.len() {
            return Err(Error::InvalidArgument("defect sites must be distinct".into()));
        }
        if let Some(&bad) = sorted.iter().find(|&&s| s >= self.sites) {
            return Err(Error::OutOfRange { index: bad, limit: self.sites });
        }
        // every pair may pile onto one site, on top of a defect
        let needed = 2 * self.n_pairs + usize::from(!self.defects.is_empty());
        if self.n_max < needed {
            return Err(Error::CutoffOverflow(format!(
                "{} pairs{} need n_max >= {needed}, got {}",
                self.n_pairs,
                if self.defects.is_empty() { "" } else { " plus defects" },
                self.n_max
            )));
        }
        Ok(())
    }

    pub fn space(&self) -> Result<FockSpace> {
        FockSpace::new(self.sites, self.n_max)
    }
}

/// Single-site block of `A†`: `<n+2| . |n> = sqrt((n+2)/(n+1))`.
pub fn pair_creation_site(d: usize) -> Result<SiteOperator> {
    if d < 3 {
        return Err(Error::InvalidDimension(format!("pair creation needs d >= 3, got {d}")));
    }
    let m = DMatrix::from_fn(d, d, |r, c| {
        if r == c + 2 {
            C64::new(((c + 2) as f64 / (c + 1) as f64).sqrt(), 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    });
    Ok(SiteOperator::new(m, "A†"))
}

/// Single-site block of `a'† = a† (n+1)^{-1}`: `<n+1| . |n> = 1/sqrt(n+1)`.
pub fn defect_creation_site(d: usize) -> SiteOperator {
    let m =
        DMatrix::from_fn(d, d, |r, c| if r == c + 1 { C64::new(1.0 / ((c + 1) as f64).sqrt(), 0.0) } else { C64::new(0.0, 0.0) });
    SiteOperator::new(m, "a'†")
}

/// `A† = Σ_j a†²_j (n_j+1)^{-1}` on the full lattice.
pub fn pair_creation_operator(space: &FockSpace) -> Result<LatticeOperator> {
    let site = pair_creation_site(space.local_dim())?;
    let mut total: Option<LatticeOperator> = None;
    for j in 0..space.sites() {
        let term = lattice_operator(&site.matrix, &[j], space, "A†")?;
        total = Some(match total {
            None => term,
            Some(acc) => LatticeOperator { matrix: acc.matrix.add(&term.matrix), ..acc },
        });
    }
    let mut out = total.expect("at least one site");
    out.support = (0..space.sites()).collect();
    out.local = None;
    out.hermitian = false;
    Ok(out)
}

/// Normalized dark state `Π a'†_{d_i} (A†)^n |0>` in the full space.
pub fn dark_state(spec: &DarkStateSpec) -> Result<StateVector> {
    spec.validate()?;
    let space = spec.space()?;
    let creator = pair_creation_operator(&space)?;
    let mut psi = StateVector::vacuum(&space);
    for _ in 0..spec.n_pairs {
        psi = creator.apply(&psi)?;
    }
    let dsite = defect_creation_site(space.local_dim());
    for &s in &spec.defects {
        psi = lattice_operator(&dsite.matrix, &[s], &space, "a'†")?.apply(&psi)?;
    }
    psi.normalized()
}

/// Dark state expressed in the fixed-photon-number sector it lives in.
pub fn dark_state_in_sector(spec: &DarkStateSpec) -> Result<StateVector> {
    let psi = dark_state(spec)?;
    let basis = Basis::number_sector(&spec.space()?, spec.total_photons())?;
    psi.restrict(&basis)
}

/// `max_j ‖l_j |ψ>‖` over all pair-jump bonds.
pub fn dark_residual(state: &StateVector, space: &FockSpace) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for j in 0..space.n_bonds() {
        worst = worst.max(pair_jump(j, space)?.apply(state)?.norm());
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CorrelatorOrder {
    /// `<a†_i a_j>`
    Single,
    /// `<a†²_i a²_j>`
    Pair,
}

impl CorrelatorOrder {
    pub fn power(self) -> u32 {
        match self {
            Self::Single => 1,
            Self::Pair => 2,
        }
    }
}

pub fn correlator(state: &StateVector, space: &FockSpace, i: usize, j: usize, order: CorrelatorOrder) -> Result<C64> {
    state.expect(&hopping_correlator_op(i, j, order.power(), space)?)
}

/// Max-norm of `[a²_j - a²_{j+1}, A†] - (P¹_j - P¹_{j+1})`, restricted to
/// columns where no site exceeds `n_max - 2` (beyond that the truncated
/// commutator is not the untruncated one).
pub fn commutator_identity_residual(j: usize, space: &FockSpace) -> Result<f64> {
    let (s0, s1) = space.bond(j)?;
    let d = space.local_dim();
    let a = crate::fock::annihilation_matrix(d)?.matrix;
    let a2 = &a * &a;
    let x = lattice_operator(&a2, &[s0], space, "")?.matrix.sub(&lattice_operator(&a2, &[s1], space, "")?.matrix);
    let ad = pair_creation_operator(space)?.matrix;
    let p1 = SiteOperator::projector(d, 1).matrix;
    let rhs = lattice_operator(&p1, &[s0], space, "")?.matrix.sub(&lattice_operator(&p1, &[s1], space, "")?.matrix);
    let diff = x.commutator(&ad).sub(&rhs);
    let basis = space.basis();
    let mut worst: f64 = 0.0;
    for (_, c, v) in diff.triplets() {
        if basis.digits(c).iter().all(|&n| n + 2 <= space.n_max()) {
            worst = worst.max(v.norm());
        }
    }
    Ok(worst)
}

/// Max-norm of `P¹_j A†` on columns with even occupation at `j`. As a full
/// matrix the product is not zero (`A†_k`, `k != j`, leaves `n_j = 1`
/// untouched); the dark-state induction only needs the even-`n_j` part.
pub fn projector_identity_residual(j: usize, space: &FockSpace) -> Result<f64> {
    let prod = projector_times_creation(j, space)?;
    let basis = space.basis();
    Ok(prod.triplets().filter(|&(_, c, _)| basis.digits(c)[j].is_multiple_of(2)).map(|(_, _, v)| v.norm()).fold(0.0, f64::max))
}

fn projector_times_creation(j: usize, space: &FockSpace) -> Result<crate::sparse::CsrMatrix> {
    let p1 = SiteOperator::projector(space.local_dim(), 1).matrix;
    let p = lattice_operator(&p1, &[j], space, "")?;
    Ok(p.matrix.matmul(&pair_creation_operator(space)?.matrix))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn site_blocks() {
        let m3 = pair_creation_site(3).unwrap().matrix;
        assert!((m3[(2, 0)] - c(2f64.sqrt())).norm() < 1e-15);
        assert_eq!(m3.iter().filter(|v| v.norm() > 0.0).count(), 1);
        let m5 = pair_creation_site(5).unwrap().matrix;
        assert!((m5[(4, 2)] - c((4.0f64 / 3.0).sqrt())).norm() < 1e-15);
        assert!(pair_creation_site(2).is_err());
    }

    #[test]
    fn creation_on_vacuum() {
        let sp = FockSpace::new(2, 2).unwrap();
        let v = pair_creation_operator(&sp).unwrap().apply(&StateVector::vacuum(&sp)).unwrap();
        assert!((v.amplitude(&[2, 0]) - c(2f64.sqrt())).norm() < 1e-14);
        assert!((v.amplitude(&[0, 2]) - c(2f64.sqrt())).norm() < 1e-14);
        assert!((v.norm() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn two_site_dark_state() {
        let psi = dark_state(&DarkStateSpec::new(2, 1, 2)).unwrap();
        let h = c(0.5f64.sqrt());
        assert!((psi.amplitude(&[2, 0]) - h).norm() < 1e-14);
        assert!((psi.amplitude(&[0, 2]) - h).norm() < 1e-14);
        let sp = FockSpace::new(2, 2).unwrap();
        let pair = correlator(&psi, &sp, 0, 1, CorrelatorOrder::Pair).unwrap();
        assert!((pair - c(1.0)).norm() < 1e-14);
    }

    #[test]
    fn defect_only_state() {
        let spec = DarkStateSpec::new(3, 0, 2).with_defects(vec![0, 2]);
        let psi = dark_state(&spec).unwrap();
        assert!((psi.amplitude(&[1, 0, 1]) - c(1.0)).norm() < 1e-14);
    }

    #[test]
    fn invalid_specs() {
        assert!(dark_state(&DarkStateSpec::new(1, 1, 2)).is_err());
        assert!(matches!(dark_state(&DarkStateSpec::new(3, 2, 3)), Err(Error::CutoffOverflow(_))));
        assert!(dark_state(&DarkStateSpec::new(3, 0, 2).with_defects(vec![0])).is_err());
        assert!(dark_state(&DarkStateSpec::new(3, 0, 2).with_defects(vec![1, 1])).is_err());
        assert!(dark_state(&DarkStateSpec::new(3, 0, 2).with_defects(vec![0, 3])).is_err());
        assert!(matches!(dark_state(&DarkStateSpec::new(3, 1, 2).with_defects(vec![0, 1])), Err(Error::CutoffOverflow(_))));
    }

    #[test]
    fn residuals() {
        let spec = DarkStateSpec::new(4, 2, 4);
        let sp = spec.space().unwrap();
        assert!(dark_residual(&dark_state(&spec).unwrap(), &sp).unwrap() < 1e-12);
        let product = StateVector::product(&[2, 0, 2, 0], &sp).unwrap();
        assert!(dark_residual(&product, &sp).unwrap() > 0.1);
        assert_eq!(dark_residual(&StateVector::vacuum(&sp), &sp).unwrap(), 0.0);
    }

    #[test]
    fn defect_states_are_dark() {
        let spec = DarkStateSpec::new(4, 1, 3).with_defects(vec![0, 2]);
        let sp = spec.space().unwrap();
        let psi = dark_state(&spec).unwrap();
        assert!(dark_residual(&psi, &sp).unwrap() < 1e-12);
        for s in 0..4 {
            let p = psi.expect(&crate::fock::parity_op(s, &sp).unwrap()).unwrap().re;
            let want = if s == 0 || s == 2 { -1.0 } else { 1.0 };
            assert!((p - want).abs() < 1e-12);
        }
    }

    #[test]
    fn appendix_identities() {
        for (l, n_max) in [(2, 3), (3, 4), (4, 2)] {
            let sp = FockSpace::new(l, n_max).unwrap();
            for j in 0..sp.n_bonds() {
                assert!(commutator_identity_residual(j, &sp).unwrap() < 1e-12);
            }
            for j in 0..l {
                assert!(projector_identity_residual(j, &sp).unwrap() < 1e-12);
            }
        }
    }

    #[test]
    fn projector_identity_needs_even_parity_at_site() {
        let sp = FockSpace::new(2, 3).unwrap();
        assert!(projector_times_creation(0, &sp).unwrap().max_abs() > 0.5);
    }

    #[test]
    fn single_correlator_vanishes_pair_flat() {
        let spec = DarkStateSpec::new(4, 2, 4);
        let sp = spec.space().unwrap();
        let psi = dark_state(&spec).unwrap();
        let reference = correlator(&psi, &sp, 0, 1, CorrelatorOrder::Pair).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i == j {
                    continue;
                }
                assert!(correlator(&psi, &sp, i, j, CorrelatorOrder::Single).unwrap().norm() < 1e-12);
                let p = correlator(&psi, &sp, i, j, CorrelatorOrder::Pair).unwrap();
                assert!((p - reference).norm() < 1e-12);
            }
            assert!(correlator(&psi, &sp, i, i, CorrelatorOrder::Single).unwrap().re >= 0.0);
        }
    }

    #[test]
    fn sector_restriction_keeps_norm() {
        let spec = DarkStateSpec::new(4, 2, 4);
        let psi = dark_state_in_sector(&spec).unwrap();
        assert_eq!(psi.len(), 35);
        assert!((psi.norm() - 1.0).abs() < 1e-12);
    }
}
