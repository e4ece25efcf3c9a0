//! Sparse points of the standard simplex and the payoff algebra over them.

use serde::{Deserialize, Serialize};

use crate::affinity::AffinitySource;
use crate::error::{AlidError, Result};

/// Weights below this are treated as exact zeros and pruned.
pub const PRUNE_EPS: f64 = 1e-12;

/// Tolerance on `sum(weights) == 1` accepted by [`Subgraph::new`].
pub const SUM_TOL: f64 = 1e-9;

/// A subgraph `x` in the simplex, stored by its support.
///
/// `support` is sorted and unique; every weight is positive and the weights
/// sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSubgraph")]
pub struct Subgraph {
    support: Vec<usize>,
    weights: Vec<f64>,
}

#[derive(Deserialize)]
struct RawSubgraph {
    support: Vec<usize>,
    weights: Vec<f64>,
}

impl TryFrom<RawSubgraph> for Subgraph {
    type Error = AlidError;

    fn try_from(raw: RawSubgraph) -> Result<Self> {
        Subgraph::new(raw.support, raw.weights)
    }
}

impl Subgraph {
    /// Validating constructor.
    pub fn new(support: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if support.is_empty() || support.len() != weights.len() {
            return Err(AlidError::InvalidConfig(format!(
                "subgraph needs matching non-empty support/weights, got {} and {}",
                support.len(),
                weights.len()
            )));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(AlidError::InvalidConfig("subgraph support must be sorted and unique".into()));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(AlidError::InvalidConfig("subgraph weights must be positive".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SUM_TOL {
            return Err(AlidError::InvalidConfig(format!("subgraph weights sum to {total}")));
        }
        Ok(Subgraph { support, weights })
    }

    /// The single-vertex subgraph `s_i`.
    pub fn vertex(i: usize) -> Self {
        Subgraph {
            support: vec![i],
            weights: vec![1.0],
        }
    }

    /// Uniform weights over `ids` (duplicates merged).
    pub fn uniform(ids: &[usize]) -> Result<Self> {
        Self::from_pairs(ids.iter().map(|&i| (i, 1.0)))
    }

    /// Normalizer: sorts, merges repeated indices, drops weights below
    /// [`PRUNE_EPS`] and rescales to unit mass.
    pub fn from_pairs<I: IntoIterator<Item = (usize, f64)>>(pairs: I) -> Result<Self> {
        let mut items: Vec<(usize, f64)> = pairs.into_iter().collect();
        if items.iter().any(|(_, w)| !w.is_finite()) {
            return Err(AlidError::InvalidConfig("non-finite subgraph weight".into()));
        }
        items.sort_by_key(|&(i, _)| i);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(items.len());
        for (i, w) in items {
            match merged.last_mut() {
                Some((j, acc)) if *j == i => *acc += w,
                _ => merged.push((i, w)),
            }
        }
        merged.retain(|&(_, w)| w >= PRUNE_EPS);
        let total: f64 = merged.iter().map(|&(_, w)| w).sum();
        if merged.is_empty() || total <= 0.0 {
            return Err(AlidError::InvalidConfig("subgraph has no positive weight".into()));
        }
        let (support, weights) = merged.into_iter().map(|(i, w)| (i, w / total)).unzip();
        Ok(Subgraph { support, weights })
    }

    /// `(1 - a) * self + a * other`.
    pub fn mix(&self, other: &Subgraph, a: f64) -> Result<Self> {
        let left = self.iter().map(|(i, w)| (i, (1.0 - a) * w));
        let right = other.iter().map(|(i, w)| (i, a * w));
        Self::from_pairs(left.chain(right))
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.support.iter().copied().zip(self.weights.iter().copied())
    }

    /// `x_i`, zero off the support.
    pub fn weight_of(&self, i: usize) -> f64 {
        self.support
            .binary_search(&i)
            .map(|p| self.weights[p])
            .unwrap_or(0.0)
    }

    pub fn check_indices(&self, n: usize) -> Result<()> {
        match self.support.last() {
            Some(&max) if max >= n => Err(AlidError::IndexOutOfRange { index: max, n }),
            _ => Ok(()),
        }
    }
}

/// Graph density `x^T A x`, evaluated over the support only.
pub fn density<S: AffinitySource + ?Sized>(src: &S, x: &Subgraph) -> Result<f64> {
    x.check_indices(src.dataset().n())?;
    let s = x.support();
    let w = x.weights();
    let mut total = 0.0;
    for a in 0..s.len() {
        let mut row = 0.0;
        for b in (a + 1)..s.len() {
            row += w[b] * src.affinity_of(s[a], s[b]);
        }
        total += w[a] * row;
    }
    Ok(2.0 * total)
}

/// Bilinear payoff `y^T A x`.
pub fn cross_payoff<S: AffinitySource + ?Sized>(src: &S, y: &Subgraph, x: &Subgraph) -> Result<f64> {
    let n = src.dataset().n();
    y.check_indices(n)?;
    x.check_indices(n)?;
    let mut total = 0.0;
    for (j, yj) in y.iter() {
        let mut row = 0.0;
        for (i, xi) in x.iter() {
            row += xi * src.affinity_of(j, i);
        }
        total += yj * row;
    }
    Ok(total)
}

/// `pi(y - x, x) = pi(y, x) - pi(x)`; positive iff `y` is infective against `x`.
pub fn payoff_gap<S: AffinitySource + ?Sized>(src: &S, y: &Subgraph, x: &Subgraph) -> Result<f64> {
    Ok(cross_payoff(src, y, x)? - density(src, x)?)
}
