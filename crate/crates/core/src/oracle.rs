//! Full-matrix reference implementations for testing and desk-scale comparison.

use crate::affinity::DataSet;
use crate::alid::ClusterResult;
use crate::error::{AlidError, Result};
use crate::simplex::{Subgraph, PRUNE_EPS};

/// Largest `n` for which a dense matrix may be built.
pub const DENSE_LIMIT: usize = 5000;

/// Symmetric `n x n` affinity matrix with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseAffinity {
    n: usize,
    a: Vec<f64>,
}

impl DenseAffinity {
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.a[i * self.n..(i + 1) * self.n]
    }

    /// `A x` for a sparse `x`.
    pub fn times(&self, x: &Subgraph) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, w) in x.iter() {
            for (o, a) in out.iter_mut().zip(self.row(i)) {
                *o += w * a;
            }
        }
        out
    }

    pub fn density(&self, x: &Subgraph) -> f64 {
        let ax = self.times(x);
        x.iter().map(|(i, w)| w * ax[i]).sum()
    }

    /// `(max gap off the support, max |gap| on the support)`.
    pub fn kkt_residuals(&self, x: &Subgraph) -> (f64, f64) {
        let ax = self.times(x);
        let pi: f64 = x.iter().map(|(i, w)| w * ax[i]).sum();
        let mut off = f64::NEG_INFINITY;
        let mut on: f64 = 0.0;
        for (i, a) in ax.iter().enumerate() {
            let g = a - pi;
            if x.weight_of(i) > 0.0 {
                on = on.max(g.abs());
            } else {
                off = off.max(g);
            }
        }
        (off, on)
    }
}

pub fn build_dense(ds: &DataSet) -> Result<DenseAffinity> {
    let n = ds.n();
    if n > DENSE_LIMIT {
        return Err(AlidError::TooLarge { n, limit: DENSE_LIMIT });
    }
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = ds.kernel_of_distance(ds.distance(i, j));
            a[i * n + j] = v;
            a[j * n + i] = v;
        }
    }
    Ok(DenseAffinity { n, a })
}

/// Infection/immunization over the whole vertex set from `s_seed`.
pub fn run_iid_full(a: &DenseAffinity, seed: usize, tol: f64, max_iters: usize) -> Result<Subgraph> {
    run_iid_active(a, seed, None, tol, max_iters)
}

/// As [`run_iid_full`], restricted to vertices with `active[i]`.
pub fn run_iid_active(
    a: &DenseAffinity,
    seed: usize,
    active: Option<&[bool]>,
    tol: f64,
    max_iters: usize,
) -> Result<Subgraph> {
    let n = a.n;
    if seed >= n {
        return Err(AlidError::IndexOutOfRange { index: seed, n });
    }
    let is_active = |i: usize| active.is_none_or(|m| m[i]);
    let mut x = vec![0.0; n];
    x[seed] = 1.0;
    let mut ax = a.row(seed).to_vec();
    for _ in 0..max_iters {
        let pi: f64 = (0..n).filter(|&i| x[i] > 0.0).map(|i| x[i] * ax[i]).sum();
        let mut pick: Option<(usize, f64)> = None;
        for i in (0..n).filter(|&i| is_active(i)) {
            let g = ax[i] - pi;
            let ok = g > tol || (g < -tol && x[i] > 0.0);
            if ok && pick.is_none_or(|(_, h)| g.abs() > h.abs()) {
                pick = Some((i, g));
            }
        }
        let Some((i, g)) = pick else { break };
        let quad = pi - 2.0 * ax[i];
        let t = if g > 0.0 {
            if quad < 0.0 { (-g / quad).min(1.0) } else { 1.0 }
        } else {
            if x[i] >= 1.0 {
                return Err(AlidError::ImmunizeSingleton { index: i });
            }
            let kappa = x[i] / (x[i] - 1.0);
            let eps = if quad < 0.0 { (-g / (kappa * quad)).min(1.0) } else { 1.0 };
            eps * kappa
        };
        for v in x.iter_mut() {
            *v *= 1.0 - t;
        }
        x[i] += t;
        let row = a.row(i);
        for (v, r) in ax.iter_mut().zip(row) {
            *v += t * (r - *v);
        }
        // prune dust and rescale
        let mut total = 0.0;
        for j in 0..n {
            if x[j] != 0.0 && x[j] < PRUNE_EPS {
                let w = x[j];
                for (v, r) in ax.iter_mut().zip(a.row(j)) {
                    *v -= w * r;
                }
                x[j] = 0.0;
            }
            total += x[j];
        }
        if total != 1.0 {
            x.iter_mut().for_each(|v| *v /= total);
            ax.iter_mut().for_each(|v| *v /= total);
        }
    }
    Subgraph::from_pairs(x.iter().enumerate().filter(|(_, &w)| w > 0.0).map(|(i, &w)| (i, w)))
}

/// Replicator dynamics `x_i <- x_i (Ax)_i / x^T A x`.
pub fn run_replicator(a: &DenseAffinity, x0: &Subgraph, iters: usize) -> Result<Subgraph> {
    x0.check_indices(a.n)?;
    let mut x = x0.clone();
    for _ in 0..iters {
        let ax = a.times(&x);
        let pi: f64 = x.iter().map(|(i, w)| w * ax[i]).sum();
        if !(pi > 0.0) {
            return Err(AlidError::DegenerateStart);
        }
        let next: Vec<(usize, f64)> = x.iter().map(|(i, w)| (i, w * ax[i] / pi)).collect();
        match Subgraph::from_pairs(next) {
            Ok(y) => x = y,
            Err(_) => return Err(AlidError::DegenerateStart),
        }
    }
    Ok(x)
}

/// Every point within `radius` of `center`, ascending.
pub fn exact_range_query(ds: &DataSet, center: &[f64], radius: f64) -> Vec<usize> {
    (0..ds.n()).filter(|&j| ds.distance_to(j, center) <= radius).collect()
}

/// Peeling with full-range IID: seed at the lowest remaining index, peel the
/// support (and the seed), keep clusters at or above `threshold`.
pub fn oracle_detect_all(a: &DenseAffinity, threshold: f64, tol: f64, max_iters: usize) -> Result<Vec<ClusterResult>> {
    let n = a.n;
    let mut active = vec![true; n];
    let mut out = Vec::new();
    for seed in 0..n {
        if !active[seed] {
            continue;
        }
        let x = run_iid_active(a, seed, Some(&active), tol, max_iters)?;
        for &i in x.support() {
            active[i] = false;
        }
        active[seed] = false;
        let density = a.density(&x);
        if density >= threshold {
            out.push(ClusterResult {
                label: out.len(),
                density,
                members: x,
                rounds_used: 1,
                converged: true,
            });
        }
    }
    Ok(out)
}
