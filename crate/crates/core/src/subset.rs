use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SubsetError {
    #[error("sensor subset must be non-empty")]
    Empty,
    #[error("sensor id {id} is outside 1..={k}")]
    OutOfRange { id: usize, k: usize },
}

/// A non-empty set of sensors, stored as sorted zero-based indices.
///
/// Displayed with one-based ids joined by dashes, e.g. `1-3-4`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SensorSet(Vec<usize>);

impl SensorSet {
    /// Builds a set from zero-based indices; duplicates collapse.
    pub fn from_ids(ids: &[usize]) -> Result<Self, SubsetError> {
        let mut v = ids.to_vec();
        v.sort_unstable();
        v.dedup();
        if v.is_empty() {
            return Err(SubsetError::Empty);
        }
        Ok(SensorSet(v))
    }

    /// Builds a set from one-based ids, checking each lies in `1..=k`.
    pub fn from_one_based(ids: &[usize], k: usize) -> Result<Self, SubsetError> {
        if let Some(&id) = ids.iter().find(|&&id| id == 0 || id > k) {
            return Err(SubsetError::OutOfRange { id, k });
        }
        let zero: Vec<usize> = ids.iter().map(|id| id - 1).collect();
        Self::from_ids(&zero)
    }

    /// All sensors `0..k`.
    pub fn full(k: usize) -> Result<Self, SubsetError> {
        Self::from_ids(&(0..k).collect::<Vec<_>>())
    }

    pub fn singleton(id: usize) -> Self {
        SensorSet(vec![id])
    }

    /// Subset encoded by the set bits of `mask`.
    pub fn from_mask(mask: u64) -> Result<Self, SubsetError> {
        let ids: Vec<usize> = (0..64).filter(|b| mask >> b & 1 == 1).collect();
        Self::from_ids(&ids)
    }

    pub fn ids(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: usize) -> bool {
        self.0.binary_search(&id).is_ok()
    }

    /// Largest zero-based index in the set.
    pub fn max_id(&self) -> usize {
        *self.0.last().expect("non-empty by construction")
    }

    /// `sum_{k in set} values[k]`.
    pub fn sum_over(&self, values: &[f64]) -> f64 {
        self.0.iter().map(|&k| values[k]).sum()
    }

    /// The default test plan: every singleton plus the full set.
    pub fn singletons_and_full(k: usize) -> Vec<SensorSet> {
        let mut out: Vec<SensorSet> = (0..k).map(SensorSet::singleton).collect();
        if k > 1 {
            out.push(SensorSet::full(k).expect("k > 1"));
        }
        out
    }
}

impl fmt::Display for SensorSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, id) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("-")?;
            }
            write!(f, "{}", id + 1)?;
        }
        Ok(())
    }
}
