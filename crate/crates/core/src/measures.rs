//! Finite counting measures on the nonnegative half-line.
//!
//! A [`CountingMeasure`] is the service profile of the queue: one atom per
//! customer, located at that customer's remaining processing time. Atoms are
//! kept sorted in non-decreasing order and duplicates are allowed, so the
//! `i`-th atom (1-based in the formulas, 0-based in the slice) is the `i`-th
//! smallest remaining time.

use alloc::vec::Vec;

use thiserror::Error;

/// Absolute tolerance used when two atoms are compared for equality.
pub const ATOM_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum MeasureError {
    #[error("atom {0} is negative")]
    NegativeAtom(f64),
    #[error("atom {0} is not a finite number")]
    NonFiniteAtom(f64),
    #[error("shift amount {0} is negative or not finite")]
    InvalidShift(f64),
}

/// Sorted finite multiset of nonnegative reals.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(try_from = "Vec<f64>", into = "Vec<f64>")
)]
pub struct CountingMeasure {
    atoms: Vec<f64>,
}

fn check_atom(a: f64) -> Result<(), MeasureError> {
    if !a.is_finite() {
        Err(MeasureError::NonFiniteAtom(a))
    } else if a < 0.0 {
        Err(MeasureError::NegativeAtom(a))
    } else {
        Ok(())
    }
}

impl CountingMeasure {
    /// The zero measure.
    pub const fn zero() -> Self {
        Self { atoms: Vec::new() }
    }

    /// Builds a measure from atoms in any order.
    pub fn from_atoms(mut atoms: Vec<f64>) -> Result<Self, MeasureError> {
        for &a in &atoms {
            check_atom(a)?;
        }
        atoms.sort_by(f64::total_cmp);
        Ok(Self { atoms })
    }

    /// Builds a measure from atoms that the caller guarantees are finite,
    /// nonnegative and already sorted.
    pub(crate) fn from_sorted_unchecked(atoms: Vec<f64>) -> Self {
        debug_assert!(atoms.windows(2).all(|w| w[0] <= w[1]));
        debug_assert!(atoms.iter().all(|a| *a >= 0.0 && a.is_finite()));
        Self { atoms }
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn into_atoms(self) -> Vec<f64> {
        self.atoms
    }

    /// `N(mu)`, the number of atoms counted with multiplicity.
    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_zero(&self) -> bool {
        self.atoms.is_empty()
    }

    /// `Z(mu)`, the largest atom; 0 for the zero measure.
    pub fn largest_atom(&self) -> f64 {
        self.atoms.last().copied().unwrap_or(0.0)
    }

    /// `tau_y mu`: deletes every atom `<= y` and moves the survivors left by `y`.
    pub fn shift(&self, y: f64) -> Result<Self, MeasureError> {
        if !(y >= 0.0) || !y.is_finite() {
            return Err(MeasureError::InvalidShift(y));
        }
        let first = self.atoms.partition_point(|&a| a <= y);
        let atoms = self.atoms[first..].iter().map(|&a| a - y).collect();
        Ok(Self::from_sorted_unchecked(atoms))
    }

    /// Partial integral order `self ⪯ other`, decided by top-aligned atom
    /// dominance with tolerance [`ATOM_EPS`].
    pub fn leq(&self, other: &Self) -> bool {
        self.leq_within(other, ATOM_EPS)
    }

    pub fn leq_within(&self, other: &Self, tol: f64) -> bool {
        self.num_atoms() <= other.num_atoms()
            && self
                .atoms
                .iter()
                .rev()
                .zip(other.atoms.iter().rev())
                .all(|(a, b)| *a <= *b + tol)
    }

    /// `<mu, f>`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F) -> f64 {
        self.atoms.iter().fold(0.0, |acc, &a| acc + f(a))
    }

    /// `<mu, I>`, the total remaining work.
    pub fn workload(&self) -> f64 {
        self.atoms.iter().fold(0.0, |acc, a| acc + a)
    }

    /// `mu + delta_s`.
    pub fn add_atom(&self, s: f64) -> Result<Self, MeasureError> {
        let mut out = self.clone();
        out.insert(s)?;
        Ok(out)
    }

    /// In-place `mu + delta_s`.
    pub fn insert(&mut self, s: f64) -> Result<(), MeasureError> {
        check_atom(s)?;
        let at = self.atoms.partition_point(|&a| a <= s);
        self.atoms.insert(at, s);
        Ok(())
    }

    /// Number of atoms left unmatched when the two multisets are paired
    /// with tolerance [`ATOM_EPS`], i.e. the total mass of `|mu - nu|`.
    pub fn tv_distance(&self, other: &Self) -> usize {
        self.tv_distance_within(other, ATOM_EPS)
    }

    pub fn tv_distance_within(&self, other: &Self, tol: f64) -> usize {
        // Greedy two-pointer matching is optimal for interval matching on
        // sorted sequences.
        let (a, b) = (&self.atoms, &other.atoms);
        let (mut i, mut j, mut matched) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            if (a[i] - b[j]).abs() <= tol {
                matched += 1;
                i += 1;
                j += 1;
            } else if a[i] < b[j] {
                i += 1;
            } else {
                j += 1;
            }
        }
        a.len() + b.len() - 2 * matched
    }

    /// Number of atoms strictly greater than `t`.
    pub fn count_above(&self, t: f64) -> usize {
        self.atoms.len() - self.atoms.partition_point(|&a| a <= t)
    }
}

impl TryFrom<Vec<f64>> for CountingMeasure {
    type Error = MeasureError;

    fn try_from(atoms: Vec<f64>) -> Result<Self, Self::Error> {
        Self::from_atoms(atoms)
    }
}

impl From<CountingMeasure> for Vec<f64> {
    fn from(m: CountingMeasure) -> Self {
        m.atoms
    }
}
