//! The outer detection loop (LID, then ROI, then CIVS) and peeling.

use serde::{Deserialize, Serialize};

use crate::affinity::{AffinitySource, DataSet};
use crate::civs::{retrieve_scored, update_range, CivsConfig, ExcludedSet};
use crate::error::{AlidError, Result};
use crate::lid::{run_lid_observed, LidConfig, LidState, StepReport};
use crate::lsh::{LshIndex, LshParams};
use crate::roi::{build_ball_with_density, RoiBall};
use crate::simplex::Subgraph;

/// Relative slack on `R >= r_out` in the convergence test.
const OUTER_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlidConfig {
    /// Maximum number of outer rounds `C`.
    pub max_rounds: usize,
    pub lid: LidConfig,
    pub civs: CivsConfig,
    /// Search radius while the ball radii are undefined.
    pub bootstrap_radius: f64,
    pub density_threshold: f64,
    pub lsh: LshParams,
}

impl Default for AlidConfig {
    fn default() -> Self {
        AlidConfig {
            max_rounds: 10,
            lid: LidConfig::default(),
            civs: CivsConfig::default(),
            bootstrap_radius: 0.4,
            density_threshold: 0.75,
            lsh: LshParams::with_r(1.0),
        }
    }
}

impl AlidConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_rounds == 0 {
            return Err(AlidError::InvalidConfig("max_rounds must be at least 1".into()));
        }
        if !(self.density_threshold > 0.0 && self.density_threshold < 1.0) {
            return Err(AlidError::InvalidConfig(format!(
                "density threshold {} must lie in (0, 1)",
                self.density_threshold
            )));
        }
        if !(self.bootstrap_radius.is_finite() && self.bootstrap_radius >= 0.0) {
            return Err(AlidError::InvalidConfig("bootstrap radius must be non-negative".into()));
        }
        self.lid.validate()?;
        self.civs.validate()?;
        self.lsh.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    pub label: usize,
    pub density: f64,
    pub members: Subgraph,
    pub rounds_used: usize,
    /// True iff the loop stopped because no infective vertex was left.
    pub converged: bool,
}

/// One line of the clusters JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterLine {
    pub label: usize,
    pub density: f64,
    pub support: Vec<usize>,
    pub weights: Vec<f64>,
    pub converged: bool,
}

impl ClusterResult {
    pub fn to_line(&self) -> ClusterLine {
        ClusterLine {
            label: self.label,
            density: self.density,
            support: self.members.support().to_vec(),
            weights: self.members.weights().to_vec(),
            converged: self.converged,
        }
    }

    pub fn from_line(line: ClusterLine) -> Result<Self> {
        Ok(ClusterResult {
            label: line.label,
            density: line.density,
            members: Subgraph::new(line.support, line.weights)?,
            rounds_used: 0,
            converged: line.converged,
        })
    }
}

/// Per-round snapshot reported by [`detect_one_observed`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundTrace {
    pub round: usize,
    pub support_size: usize,
    pub density: f64,
    pub radius: f64,
    pub bootstrap: bool,
    pub candidates: usize,
}

/// Grows one cluster from `seed`.
pub fn detect_one<S: AffinitySource + ?Sized>(
    src: &S,
    index: &LshIndex,
    cfg: &AlidConfig,
    seed: usize,
    excluded: &ExcludedSet,
) -> Result<ClusterResult> {
    detect_one_observed(src, index, cfg, seed, excluded, &mut |_| {}, &mut |_, _| {})
}

/// [`detect_one`] with callbacks after each outer round and each LID step.
pub fn detect_one_observed<S: AffinitySource + ?Sized>(
    src: &S,
    index: &LshIndex,
    cfg: &AlidConfig,
    seed: usize,
    excluded: &ExcludedSet,
    on_round: &mut dyn FnMut(&RoundTrace),
    on_step: &mut dyn FnMut(usize, &StepReport),
) -> Result<ClusterResult> {
    let ds = src.dataset();
    ds.check_index(seed)?;
    index.check_compatible(ds)?;
    if excluded.contains(seed) {
        return Err(AlidError::SeedExcluded { seed });
    }
    if !index.is_indexed(seed) {
        return Err(AlidError::NotIndexed { index: seed });
    }

    let mut state = LidState::singleton(src, seed)?;
    let mut converged = false;
    let mut rounds_used = 0;
    for c in 1..=cfg.max_rounds {
        rounds_used = c;
        run_lid_observed(src, &mut state, &cfg.lid, &mut |r| on_step(c, r))?;
        let xhat = state.subgraph();
        let pi = state.density();
        let ball = if c == 1 {
            RoiBall::bootstrap(ds, &xhat, cfg.bootstrap_radius)?
        } else {
            match build_ball_with_density(ds, &xhat, pi) {
                Ok(b) => b,
                Err(AlidError::ZeroDensity) => RoiBall::bootstrap(ds, &xhat, cfg.bootstrap_radius)?,
                Err(e) => return Err(e),
            }
        };
        let psi: Vec<usize> = retrieve_scored(ds, index, &xhat, &ball, c, &cfg.civs, excluded)?
            .into_iter()
            .map(|(j, _)| j)
            .collect();
        on_round(&RoundTrace {
            round: c,
            support_size: xhat.len(),
            density: pi,
            radius: ball.radius_at(c),
            bootstrap: ball.bootstrap,
            candidates: psi.len(),
        });

        if psi.is_empty() && ball.bootstrap && xhat.len() == 1 {
            // a lone vertex with nothing in reach stays exactly as it is
            break;
        }
        let next = update_range(src, &state, &psi)?;
        let alpha_len = next.support_len();
        let infective = next.ax()[alpha_len..]
            .iter()
            .any(|&a| a - pi > cfg.lid.gap_eps);
        let at_outer = ball.radius_at(c) >= ball.r_out * (1.0 - OUTER_SLACK);
        state = next;
        if !ball.bootstrap && !infective && at_outer {
            converged = true;
            break;
        }
    }

    Ok(ClusterResult {
        label: seed,
        density: state.density(),
        members: state.subgraph(),
        rounds_used,
        converged,
    })
}

/// Peels clusters until every item is assigned, returning all of them (noise
/// included) in discovery order, labelled `0, 1, ...`.
///
/// Seeds are taken in ascending index order. A seed that ends up outside its
/// own cluster's support is peeled as noise.
pub fn peel_all<S: AffinitySource + ?Sized>(
    src: &S,
    index: &mut LshIndex,
    cfg: &AlidConfig,
) -> Result<Vec<ClusterResult>> {
    peel_all_observed(src, index, cfg, &mut |_, _| {})
}

/// [`peel_all`] reporting every outer round together with its seed.
pub fn peel_all_observed<S: AffinitySource + ?Sized>(
    src: &S,
    index: &mut LshIndex,
    cfg: &AlidConfig,
    on_round: &mut dyn FnMut(usize, &RoundTrace),
) -> Result<Vec<ClusterResult>> {
    cfg.validate()?;
    let ds = src.dataset();
    index.check_compatible(ds)?;
    let n = ds.n();
    let mut excluded = ExcludedSet::new(n);
    for i in 0..n {
        if !index.is_indexed(i) {
            excluded.insert(i);
        }
    }
    let mut out = Vec::new();
    let mut next = 0;
    while next < n {
        if excluded.contains(next) {
            next += 1;
            continue;
        }
        let seed = next;
        let mut cluster =
            detect_one_observed(src, index, cfg, seed, &excluded, &mut |r| on_round(seed, r), &mut |_, _| {})?;
        cluster.label = out.len();
        let mut peel = cluster.members.support().to_vec();
        if cluster.members.weight_of(next) == 0.0 {
            peel.push(next);
        }
        for &i in &peel {
            excluded.insert(i);
        }
        index.remove_points(&peel);
        out.push(cluster);
    }
    Ok(out)
}

/// Clusters at or above the density threshold, relabelled `0, 1, ...`.
pub fn detect_all_with_index<S: AffinitySource + ?Sized>(
    src: &S,
    index: &mut LshIndex,
    cfg: &AlidConfig,
) -> Result<Vec<ClusterResult>> {
    let all = peel_all(src, index, cfg)?;
    Ok(filter_clusters(all, cfg.density_threshold))
}

/// Builds the index from `cfg.lsh` and runs [`detect_all_with_index`].
pub fn detect_all(ds: &DataSet, cfg: &AlidConfig) -> Result<Vec<ClusterResult>> {
    cfg.validate()?;
    let mut index = LshIndex::build(ds, cfg.lsh)?;
    detect_all_with_index(ds, &mut index, cfg)
}

pub fn filter_clusters(all: Vec<ClusterResult>, threshold: f64) -> Vec<ClusterResult> {
    all.into_iter()
        .filter(|c| c.density >= threshold)
        .enumerate()
        .map(|(label, c)| ClusterResult { label, ..c })
        .collect()
}

/// Kernel scale `1 / median pairwise distance` over an evenly strided sample
/// of at most 1000 points. Falls back to 1 when the median is zero.
pub fn auto_k(ds: &DataSet) -> f64 {
    let n = ds.n();
    let m = n.min(1000);
    let ids: Vec<usize> = (0..m).map(|i| i * n / m).collect();
    let mut dists = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for a in 0..m {
        for b in (a + 1)..m {
            dists.push(ds.distance(ids[a], ids[b]));
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    let mid = dists.len() / 2;
    let (_, median, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    if *median > 0.0 {
        1.0 / *median
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::KernelParams;
    use crate::simplex::density;

    fn ds(rows: Vec<Vec<f64>>, k: f64) -> DataSet {
        DataSet::from_rows(&rows, KernelParams::euclidean(k).unwrap()).unwrap()
    }

    fn cfg(r: f64) -> AlidConfig {
        AlidConfig {
            lsh: LshParams { mu: 2, l: 4, r, seed: 5 },
            ..AlidConfig::default()
        }
    }

    #[test]
    fn identical_triple_converges() {
        let data = ds(vec![vec![1.0, 1.0]; 3], 1.0);
        let idx = LshIndex::build(&data, cfg(1.0).lsh).unwrap();
        let res = detect_one(&data, &idx, &cfg(1.0), 1, &ExcludedSet::new(3)).unwrap();
        assert_eq!(res.members.support(), &[0, 1, 2]);
        assert!((res.density - 2.0 / 3.0).abs() < 1e-12);
        assert!(res.converged);
        assert_eq!(res.rounds_used, 2);
    }

    #[test]
    fn isolated_outlier_stays_alone() {
        let mut rows = vec![vec![0.0, 0.0]; 4];
        rows.push(vec![50.0, 50.0]);
        let data = ds(rows, 1.0);
        let idx = LshIndex::build(&data, cfg(2.0).lsh).unwrap();
        let res = detect_one(&data, &idx, &cfg(2.0), 4, &ExcludedSet::new(5)).unwrap();
        assert_eq!(res.members, Subgraph::vertex(4));
        assert_eq!(res.density, 0.0);
        assert!(!res.converged);
    }

    #[test]
    fn excluded_seed_is_rejected() {
        let data = ds(vec![vec![0.0], vec![1.0]], 1.0);
        let idx = LshIndex::build(&data, cfg(1.0).lsh).unwrap();
        let mut ex = ExcludedSet::new(2);
        ex.insert(0);
        assert!(matches!(
            detect_one(&data, &idx, &cfg(1.0), 0, &ex),
            Err(AlidError::SeedExcluded { seed: 0 })
        ));
    }

    #[test]
    fn duplicate_groups_and_threshold() {
        let mut rows = vec![vec![0.0, 0.0]; 5];
        rows.extend(vec![vec![30.0, 0.0]; 3]);
        let data = ds(rows, 1.0);
        let c = cfg(2.0);
        let mut idx = LshIndex::build(&data, c.lsh).unwrap();
        let all = peel_all(&data, &mut idx, &c).unwrap();
        assert_eq!(all.len(), 2);
        assert!((all[0].density - 0.8).abs() < 1e-12);
        assert!((all[1].density - 2.0 / 3.0).abs() < 1e-12);
        let kept = detect_all(&data, &c).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].members.support(), &[0, 1, 2, 3, 4]);
        assert_eq!(kept[0].label, 0);
    }

    #[test]
    fn uniform_noise_yields_nothing() {
        let rows: Vec<Vec<f64>> = (0..60)
            .map(|i| vec![(i * 37 % 61) as f64, (i * 17 % 59) as f64])
            .collect();
        let data = ds(rows, 5.0);
        assert!(detect_all(&data, &cfg(3.0)).unwrap().is_empty());
    }

    #[test]
    fn peeling_partitions_items() {
        let mut rows = Vec::new();
        for c in 0..3 {
            for i in 0..12 {
                rows.push(vec![c as f64 * 20.0 + (i as f64 * 0.7).sin() * 0.05, (i as f64).cos() * 0.05]);
            }
        }
        let data = ds(rows, 1.0);
        let c = AlidConfig { bootstrap_radius: 0.5, ..cfg(4.0) };
        let mut idx = LshIndex::build(&data, c.lsh).unwrap();
        let all = peel_all(&data, &mut idx, &c).unwrap();
        let mut seen = vec![false; data.n()];
        for cl in &all {
            assert!((cl.density - density(&data, &cl.members).unwrap()).abs() < 1e-9);
            for &i in cl.members.support() {
                assert!(!seen[i]);
                seen[i] = true;
            }
        }
        assert_eq!(idx.live_count(), 0);
        let again = detect_all(&data, &c).unwrap();
        assert_eq!(again, detect_all(&data, &c).unwrap());
        assert_eq!(again.len(), 3);
    }

    #[test]
    fn auto_k_uses_median_distance() {
        let data = ds(vec![vec![0.0], vec![1.0], vec![3.0]], 1.0);
        // distances 1, 3, 2
        assert_eq!(auto_k(&data), 0.5);
        let single = ds(vec![vec![0.0]], 1.0);
        assert_eq!(auto_k(&single), 1.0);
    }

    #[test]
    fn config_validation() {
        assert!(AlidConfig::default().validate().is_ok());
        assert!(AlidConfig { density_threshold: 1.0, ..AlidConfig::default() }.validate().is_err());
        assert!(AlidConfig { max_rounds: 0, ..AlidConfig::default() }.validate().is_err());
    }

    #[test]
    fn cluster_line_round_trip() {
        let res = ClusterResult {
            label: 3,
            density: 0.8,
            members: Subgraph::uniform(&[1, 4]).unwrap(),
            rounds_used: 10,
            converged: false,
        };
        let s = serde_json::to_string(&res.to_line()).unwrap();
        assert_eq!(s, r#"{"label":3,"density":0.8,"support":[1,4],"weights":[0.5,0.5],"converged":false}"#);
        let back = ClusterResult::from_line(serde_json::from_str(&s).unwrap()).unwrap();
        assert_eq!(back.members, res.members);
    }
}
