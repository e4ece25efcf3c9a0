//! Candidate infective vertex search: multi-query LSH retrieval from the
//! support of `x_hat`, restricted to the region of interest.

use serde::{Deserialize, Serialize};

use crate::affinity::{AffinitySource, DataSet};
use crate::error::{AlidError, Result};
use crate::lid::LidState;
use crate::lsh::LshIndex;
use crate::roi::RoiBall;
use crate::simplex::Subgraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CivsConfig {
    /// At most this many new vertices per round.
    pub delta: usize,
}

impl Default for CivsConfig {
    fn default() -> Self {
        CivsConfig { delta: 800 }
    }
}

impl CivsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.delta == 0 {
            return Err(AlidError::InvalidConfig("delta must be at least 1".into()));
        }
        Ok(())
    }
}

/// Dense membership set over `0..n`, used for peeled-off items.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExcludedSet {
    bits: Vec<bool>,
    len: usize,
}

impl ExcludedSet {
    pub fn new(n: usize) -> Self {
        ExcludedSet { bits: vec![false; n], len: 0 }
    }

    pub fn contains(&self, i: usize) -> bool {
        self.bits.get(i).copied().unwrap_or(false)
    }

    pub fn insert(&mut self, i: usize) {
        if i >= self.bits.len() {
            self.bits.resize(i + 1, false);
        }
        if !self.bits[i] {
            self.bits[i] = true;
            self.len += 1;
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Retrieves the next-round candidates `psi`, nearest to the ball center first
/// (ties by index).
pub fn retrieve_candidates(
    ds: &DataSet,
    index: &LshIndex,
    xhat: &Subgraph,
    ball: &RoiBall,
    c: usize,
    cfg: &CivsConfig,
    excluded: &ExcludedSet,
) -> Result<Vec<usize>> {
    Ok(retrieve_scored(ds, index, xhat, ball, c, cfg, excluded)?
        .into_iter()
        .map(|(j, _)| j)
        .collect())
}

/// [`retrieve_candidates`] with each candidate's distance to the center.
pub fn retrieve_scored(
    ds: &DataSet,
    index: &LshIndex,
    xhat: &Subgraph,
    ball: &RoiBall,
    c: usize,
    cfg: &CivsConfig,
    excluded: &ExcludedSet,
) -> Result<Vec<(usize, f64)>> {
    let alpha = xhat.support();
    let radius = ball.radius_at(c);
    let mut scored: Vec<(usize, f64)> = index
        .query_many(alpha)?
        .into_iter()
        .filter(|&j| !excluded.contains(j) && alpha.binary_search(&j).is_err())
        .filter_map(|j| {
            let t = ds.distance_to(j, &ball.center);
            (t <= radius).then_some((j, t))
        })
        .collect();
    // Sorting by distance already puts every vertex inside r_in ahead of the rest.
    scored.sort_unstable_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    scored.truncate(cfg.delta);
    Ok(scored)
}

/// Next-round state over `alpha ∪ psi` with `x` carried over.
pub fn update_range<S: AffinitySource + ?Sized>(src: &S, state: &LidState, psi: &[usize]) -> Result<LidState> {
    let n = src.dataset().n();
    let alpha = state.support();
    let mut sorted = psi.to_vec();
    sorted.sort_unstable();
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            return Err(AlidError::InvalidConfig(format!("candidate {} listed twice", w[0])));
        }
    }
    for &j in psi {
        if j >= n {
            return Err(AlidError::IndexOutOfRange { index: j, n });
        }
        if alpha.binary_search(&j).is_ok() {
            return Err(AlidError::InvalidConfig(format!("candidate {j} is already in the support")));
        }
    }
    Ok(state.extend_range(src, psi))
}
