//! Product bases and fixed-photon-number sectors.
//!
//! Full-space indices use mixed radix with site 0 as the slowest-varying
//! factor, so `|n_0, n_1, ..., n_{L-1}>` has index
//! `((n_0 * d_1 + n_1) * d_2 + n_2) ...`.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fock::FockSpace;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Basis {
    dims: Vec<usize>,
    /// Sorted full-space indices kept in this basis; `None` means all.
    states: Option<Arc<Vec<usize>>>,
}

impl Basis {
    pub fn full(dims: Vec<usize>) -> Self {
        assert!(!dims.is_empty() && dims.iter().all(|&d| d >= 1));
        Self { dims, states: None }
    }

    pub fn fock(space: &FockSpace) -> Self {
        Self::full(vec![space.local_dim(); space.sites()])
    }

    /// All Fock states of `space` with exactly `n_total` photons.
    pub fn number_sector(space: &FockSpace, n_total: usize) -> Result<Self> {
        let full = Self::fock(space);
        let states: Vec<usize> = (0..full.full_dim()).filter(|&i| full.digits(i).iter().sum::<usize>() == n_total).collect();
        if states.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "no states with {n_total} photons on {} sites with cutoff {}",
                space.sites(),
                space.n_max()
            )));
        }
        Ok(Self { dims: full.dims, states: Some(Arc::new(states)) })
    }

    /// Restricts a full basis to an explicit list of full-space indices.
    pub fn subset(dims: Vec<usize>, mut states: Vec<usize>) -> Self {
        states.sort_unstable();
        states.dedup();
        Self { dims, states: Some(Arc::new(states)) }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn full_dim(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn len(&self) -> usize {
        match &self.states {
            Some(s) => s.len(),
            None => self.full_dim(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_full(&self) -> bool {
        self.states.is_none()
    }

    pub fn states(&self) -> Option<&[usize]> {
        self.states.as_deref().map(|v| v.as_slice())
    }

    /// Full-space index of the `k`-th basis state.
    pub fn full_index(&self, k: usize) -> usize {
        match &self.states {
            Some(s) => s[k],
            None => k,
        }
    }

    /// Position of a full-space index in this basis, if present.
    pub fn position(&self, full: usize) -> Option<usize> {
        match &self.states {
            Some(s) => s.binary_search(&full).ok(),
            None => (full < self.full_dim()).then_some(full),
        }
    }

    pub fn digits(&self, full: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        let mut rem = full;
        for (slot, &d) in out.iter_mut().zip(&self.dims).rev() {
            *slot = rem % d;
            rem /= d;
        }
        out
    }

    pub fn index_of(&self, digits: &[usize]) -> usize {
        digits.iter().zip(&self.dims).fold(0, |acc, (&n, &d)| acc * d + n)
    }

    /// Occupations of the `k`-th basis state.
    pub fn occupations(&self, k: usize) -> Vec<usize> {
        self.digits(self.full_index(k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digits_round_trip_with_site_zero_slowest() {
        let b = Basis::full(vec![3, 3]);
        assert_eq!(b.digits(1), vec![0, 1]);
        assert_eq!(b.digits(3), vec![1, 0]);
        assert_eq!(b.index_of(&[2, 0]), 6);
    }

    #[test]
    fn number_sector_counts() {
        // compositions of 4 into 4 parts each <= 4
        let space = FockSpace::new(4, 4).unwrap();
        let b = Basis::number_sector(&space, 4).unwrap();
        assert_eq!(b.len(), 35);
        assert!(b.position(b.index_of(&[2, 0, 2, 0])).is_some());
        assert!(b.position(b.index_of(&[2, 0, 2, 1])).is_none());
    }
}
