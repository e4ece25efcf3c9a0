//! Gaussian-mixture-plus-noise generator with known ground truth.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::affinity::{DataSet, KernelParams};
use crate::error::{AlidError, Result};

/// How the per-cluster size `a*` grows with `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Regime {
    /// `a* = omega n / clusters`
    Proportional(f64),
    /// `a* = n^eta / clusters`
    Sublinear(f64),
    /// `a* = P / clusters`
    Capped(usize),
}

impl Regime {
    /// Items per cluster, rounded down.
    pub fn cluster_size(&self, n: usize, clusters: usize) -> Result<usize> {
        let m = clusters as f64;
        let raw = match *self {
            Regime::Proportional(omega) => omega * n as f64 / m,
            Regime::Sublinear(eta) => (n as f64).powf(eta) / m,
            Regime::Capped(p) => p as f64 / m,
        };
        if !raw.is_finite() || raw < 1.0 {
            return Err(AlidError::InfeasibleSpec(format!(
                "{self:?} with n = {n} gives fewer than one item per cluster"
            )));
        }
        // tolerate representation error such as 0.7 * 2000 / 20 = 69.999...
        let size = (raw + 1e-9).floor() as usize;
        if size * clusters > n {
            return Err(AlidError::InfeasibleSpec(format!(
                "{clusters} clusters of {size} exceed n = {n}"
            )));
        }
        Ok(size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub regime: Regime,
    pub n: usize,
    pub clusters: usize,
    pub d: usize,
    /// Per-dimension variances are drawn uniformly from this range.
    pub var_min: f64,
    pub var_max: f64,
    /// Nearest-mean distance in units of the typical within-cluster pair distance.
    pub separation: f64,
    pub overlap: bool,
    /// Cluster pairs `(0,1), (2,3), ...` pulled to half spacing when `overlap` is set.
    pub overlap_pairs: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(regime: Regime, n: usize, seed: u64) -> Self {
        SynthSpec {
            regime,
            n,
            clusters: 20,
            d: 100,
            var_min: 0.0,
            var_max: 10.0,
            separation: 3.0,
            overlap: false,
            overlap_pairs: 3,
            seed,
        }
    }
}

/// Per-item labels (`None` = noise) and the length scale of the mixture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub n: usize,
    pub clusters: usize,
    pub labels: Vec<Option<usize>>,
    /// Root-mean-square distance between two points of the same cluster.
    pub scale: f64,
    pub seed: u64,
}

impl GroundTruth {
    /// Members of each true cluster, ascending.
    pub fn cluster_members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.clusters];
        for (i, l) in self.labels.iter().enumerate() {
            if let Some(c) = l {
                out[*c].push(i);
            }
        }
        out
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|l| l.is_none()).count()
    }

    /// Affinity `q` of a typical intra-cluster pair under the suggested kernel.
    ///
    /// With a zero diagonal a uniform cluster of `m` items scores about
    /// `q (1 - 1/m)`, while a neighbour three scales away offers `q^3`. Taking
    /// `q = sqrt(1 - 2/m)` keeps the smallest cluster clear of that bound; the
    /// cap at 0.995 keeps `k` away from zero, where noise would form dense groups.
    pub fn suggested_affinity(&self) -> f64 {
        let smallest = self.cluster_members().iter().map(Vec::len).min().unwrap_or(0).max(1);
        (1.0 - 2.0 / smallest as f64).max(0.0).sqrt().clamp(0.5, 0.995)
    }

    pub fn suggested_kernel(&self) -> KernelParams {
        KernelParams { k: -self.suggested_affinity().ln() / self.scale, p: 2.0 }
    }

    pub fn save_path(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let truth: GroundTruth = serde_json::from_reader(std::io::BufReader::new(file))?;
        if truth.labels.len() != truth.n || truth.labels.iter().flatten().any(|&c| c >= truth.clusters) {
            return Err(AlidError::Format("inconsistent ground truth".into()));
        }
        Ok(truth)
    }
}

/// Samples the mixture. Items are shuffled and coordinates rounded to `f32`
/// precision, so writing the binary format loses nothing.
pub fn generate(spec: &SynthSpec) -> Result<(DataSet, GroundTruth)> {
    if spec.clusters == 0 || spec.d == 0 || spec.n == 0 {
        return Err(AlidError::InfeasibleSpec("n, clusters and d must be positive".into()));
    }
    if !(spec.var_min >= 0.0 && spec.var_max >= spec.var_min && spec.separation > 0.0) {
        return Err(AlidError::InfeasibleSpec("bad variance range or separation".into()));
    }
    let a_star = spec.regime.cluster_size(spec.n, spec.clusters)?;
    let (m, d) = (spec.clusters, spec.d);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let variances: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..d).map(|_| rng.random_range(spec.var_min..=spec.var_max)).collect())
        .collect();
    let mean_trace = variances.iter().map(|v| v.iter().sum::<f64>()).sum::<f64>() / m as f64;
    let scale = (2.0 * mean_trace).sqrt().max(f64::MIN_POSITIVE);

    let mut means: Vec<Vec<f64>> = (0..m)
        .map(|_| (0..d).map(|_| rng.random::<f64>()).collect())
        .collect();
    let spacing = spec.separation * scale;
    if m > 1 {
        let mut nearest = f64::INFINITY;
        for a in 0..m {
            for b in (a + 1)..m {
                nearest = nearest.min(euclid(&means[a], &means[b]));
            }
        }
        let factor = spacing / nearest;
        means.iter_mut().flatten().for_each(|v| *v *= factor);
    }
    if spec.overlap {
        for p in 0..spec.overlap_pairs.min(m / 2) {
            let (a, b) = (2 * p, 2 * p + 1);
            let dist = euclid(&means[a], &means[b]);
            let pull = 0.5 * spacing / dist;
            let anchor = means[a].clone();
            for (v, o) in means[b].iter_mut().zip(&anchor) {
                *v = o + (*v - o) * pull;
            }
        }
    }

    let mut points: Vec<(Vec<f64>, Option<usize>)> = Vec::with_capacity(spec.n);
    for c in 0..m {
        let dists: Vec<Normal<f64>> = variances[c]
            .iter()
            .map(|&v| Normal::new(0.0, v.sqrt()).expect("finite deviation"))
            .collect();
        for _ in 0..a_star {
            let p = means[c].iter().zip(&dists).map(|(mu, nd)| mu + nd.sample(&mut rng)).collect();
            points.push((p, Some(c)));
        }
    }

    let noise = spec.n - m * a_star;
    if noise > 0 {
        let mut lo = vec![f64::INFINITY; d];
        let mut hi = vec![f64::NEG_INFINITY; d];
        for (p, _) in &points {
            for k in 0..d {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        for k in 0..d {
            let mid = 0.5 * (lo[k] + hi[k]);
            let half = 0.5 * (hi[k] - lo[k]) * 1.2;
            lo[k] = mid - half;
            hi[k] = mid + half;
        }
        for _ in 0..noise {
            let p = (0..d)
                .map(|k| if hi[k] > lo[k] { rng.random_range(lo[k]..hi[k]) } else { lo[k] })
                .collect();
            points.push((p, None));
        }
    }
    points.shuffle(&mut rng);

    let mut coords = Vec::with_capacity(spec.n * d);
    let mut labels = Vec::with_capacity(spec.n);
    for (p, l) in points {
        coords.extend(p.into_iter().map(|v| v as f32 as f64));
        labels.push(l);
    }
    let truth = GroundTruth { n: spec.n, clusters: m, labels, scale, seed: spec.seed };
    let ds = DataSet::from_flat(coords, d, truth.suggested_kernel())?;
    Ok((ds, truth))
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regime_arithmetic() {
        assert_eq!(Regime::Capped(20).cluster_size(1000, 20).unwrap(), 1);
        assert_eq!(Regime::Proportional(1.0).cluster_size(1000, 20).unwrap(), 50);
        assert_eq!(Regime::Sublinear(0.9).cluster_size(10_000, 20).unwrap(), 199);
        assert!(matches!(Regime::Capped(10).cluster_size(1000, 20), Err(AlidError::InfeasibleSpec(_))));
        assert!(matches!(Regime::Proportional(1.5).cluster_size(1000, 20), Err(AlidError::InfeasibleSpec(_))));
    }

    #[test]
    fn capped_instance_counts() {
        let (ds, truth) = generate(&SynthSpec::new(Regime::Capped(20), 1000, 3)).unwrap();
        assert_eq!((ds.n(), ds.d()), (1000, 100));
        assert_eq!(truth.noise_count(), 980);
        assert!(truth.cluster_members().iter().all(|c| c.len() == 1));
    }

    #[test]
    fn proportional_instance_has_no_noise() {
        let (_, truth) = generate(&SynthSpec::new(Regime::Proportional(1.0), 1000, 3)).unwrap();
        assert_eq!(truth.noise_count(), 0);
        assert!(truth.cluster_members().iter().all(|c| c.len() == 50));
        assert!((truth.scale - 31.6).abs() < 2.0);
    }

    #[test]
    fn same_seed_same_bytes() {
        let spec = SynthSpec { overlap: true, ..SynthSpec::new(Regime::Capped(200), 500, 11) };
        let (a, ta) = generate(&spec).unwrap();
        let (b, tb) = generate(&spec).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (c, _) = generate(&SynthSpec { seed: 12, ..spec }).unwrap();
        assert_ne!(a.coords(), c.coords());
    }

    #[test]
    fn clusters_are_separated() {
        let spec = SynthSpec::new(Regime::Proportional(0.8), 400, 5);
        let (ds, truth) = generate(&spec).unwrap();
        let members = truth.cluster_members();
        let intra = ds.distance(members[0][0], members[0][1]);
        let inter = ds.distance(members[0][0], members[1][0]);
        assert!(intra < 1.5 * truth.scale);
        assert!(inter > 2.0 * truth.scale);
    }
}
