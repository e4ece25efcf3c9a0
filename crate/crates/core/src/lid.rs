//! Localized infection/immunization dynamics inside a fixed local range.
//!
//! The state keeps `x` over the range `beta` together with `A_{beta,alpha} x_alpha`,
//! so every payoff the dynamics needs is available in `O(|beta|)` without touching
//! the affinity matrix. Columns are fetched only when a vertex is infected for the
//! first time.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::affinity::AffinitySource;
use crate::error::{AlidError, Result};
use crate::simplex::{Subgraph, PRUNE_EPS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LidConfig {
    /// Upper limit `T` on iterations per call to [`run_lid`].
    pub max_iters: usize,
    /// A step whose density change is below this ends the run.
    pub stability_eps: f64,
    /// Gaps within `[-gap_eps, gap_eps]` count as zero.
    pub gap_eps: f64,
}

impl Default for LidConfig {
    fn default() -> Self {
        LidConfig {
            max_iters: 1000,
            stability_eps: 1e-15,
            gap_eps: 1e-7,
        }
    }
}

impl LidConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(AlidError::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.stability_eps > 0.0 && self.gap_eps > 0.0) {
            return Err(AlidError::InvalidConfig("lid tolerances must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Infect,
    Immunize,
}

/// Vertex chosen by [`select_vertex`] and its payoff gap `pi(s_i - x, x)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    pub index: usize,
    pub kind: StepKind,
    pub gap: f64,
}

/// One line of the optional LID trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepReport {
    pub iteration: usize,
    pub index: usize,
    pub kind: StepKind,
    pub epsilon: f64,
    pub density: f64,
    #[serde(skip)]
    pub density_before: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// No vertex of the range is infective and no support vertex is weak.
    NoInfective,
    /// Density change fell below `stability_eps`.
    Stable,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LidRun {
    pub steps: usize,
    pub reason: StopReason,
}

/// Dynamics state over a local range.
///
/// Positions are local (into `beta`); the support is kept ordered by global index
/// so floating-point sums are reproducible.
#[derive(Debug, Clone)]
pub struct LidState {
    beta: Vec<usize>,
    pos: HashMap<usize, usize>,
    weights: Vec<f64>,
    support: Vec<usize>,
    ax: Vec<f64>,
    cache: HashMap<usize, Vec<f64>>,
    iterations: usize,
}

impl LidState {
    /// The round-one state: `beta = alpha = {i}`, `x = s_i`, `ax = [0]`.
    pub fn singleton<S: AffinitySource + ?Sized>(src: &S, i: usize) -> Result<Self> {
        src.dataset().check_index(i)?;
        Ok(LidState {
            beta: vec![i],
            pos: HashMap::from([(i, 0)]),
            weights: vec![1.0],
            support: vec![0],
            ax: vec![0.0],
            cache: HashMap::from([(i, vec![0.0])]),
            iterations: 0,
        })
    }

    /// State for an arbitrary range and starting point; computes the support
    /// columns over `beta`.
    pub fn new<S: AffinitySource + ?Sized>(src: &S, beta: Vec<usize>, x: &Subgraph) -> Result<Self> {
        let n = src.dataset().n();
        let mut pos = HashMap::with_capacity(beta.len());
        for (p, &g) in beta.iter().enumerate() {
            if g >= n {
                return Err(AlidError::IndexOutOfRange { index: g, n });
            }
            if pos.insert(g, p).is_some() {
                return Err(AlidError::InvalidConfig(format!("range lists vertex {g} twice")));
            }
        }
        let mut weights = vec![0.0; beta.len()];
        let mut support = Vec::with_capacity(x.len());
        let mut ax = vec![0.0; beta.len()];
        let mut cache = HashMap::with_capacity(x.len());
        for (g, w) in x.iter() {
            let p = *pos.get(&g).ok_or_else(|| {
                AlidError::InvalidConfig(format!("support vertex {g} lies outside the range"))
            })?;
            weights[p] = w;
            support.push(p);
            let mut col = Vec::with_capacity(beta.len());
            src.column_into(g, &beta, &mut col);
            for (a, c) in ax.iter_mut().zip(&col) {
                *a += w * c;
            }
            cache.insert(g, col);
        }
        Ok(LidState {
            beta,
            pos,
            weights,
            support,
            ax,
            cache,
            iterations: 0,
        })
    }

    pub fn beta(&self) -> &[usize] {
        &self.beta
    }

    /// `(A_{beta,alpha} x_alpha)` aligned with [`beta`](Self::beta).
    pub fn ax(&self) -> &[f64] {
        &self.ax
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn support_len(&self) -> usize {
        self.support.len()
    }

    /// Support as sorted global indices.
    pub fn support(&self) -> Vec<usize> {
        self.support.iter().map(|&p| self.beta[p]).collect()
    }

    pub fn subgraph(&self) -> Subgraph {
        let support = self.support();
        let weights = self.support.iter().map(|&p| self.weights[p]).collect();
        Subgraph::new(support, weights).expect("lid state keeps a valid simplex point")
    }

    pub fn weight_of(&self, g: usize) -> f64 {
        self.pos.get(&g).map_or(0.0, |&p| self.weights[p])
    }

    /// `pi(x)` from the maintained products.
    pub fn density(&self) -> f64 {
        self.support.iter().map(|&p| self.weights[p] * self.ax[p]).sum()
    }

    /// `pi(s_g - x, x)` for a vertex of the range.
    pub fn gap(&self, g: usize) -> Option<f64> {
        self.pos.get(&g).map(|&p| self.ax[p] - self.density())
    }

    /// Global indices whose columns are cached, sorted.
    pub fn cached_columns(&self) -> Vec<usize> {
        let mut out: Vec<usize> = self.cache.keys().copied().collect();
        out.sort_unstable();
        out
    }

    /// `A_{beta,alpha} x_alpha` evaluated from scratch.
    pub fn recompute_ax<S: AffinitySource + ?Sized>(&self, src: &S) -> Vec<f64> {
        self.beta
            .iter()
            .map(|&j| {
                self.support
                    .iter()
                    .map(|&p| self.weights[p] * src.affinity_of(j, self.beta[p]))
                    .sum()
            })
            .collect()
    }

    /// Next-round state with range `alpha ∪ psi`. `x` is carried over; rows for
    /// `psi` are filled with `sum_{i in alpha} a_ji x_i`. Entries already known
    /// from the old range are reused rather than recomputed.
    pub(crate) fn extend_range<S: AffinitySource + ?Sized>(&self, src: &S, psi: &[usize]) -> LidState {
        let alpha = self.support();
        let mut beta = alpha.clone();
        beta.extend_from_slice(psi);
        let pos: HashMap<usize, usize> = beta.iter().enumerate().map(|(p, &g)| (g, p)).collect();

        // where each new row comes from: a slot in the old range or the fresh list
        let origin: Vec<Option<usize>> = beta.iter().map(|g| self.pos.get(g).copied()).collect();
        let fresh: Vec<usize> = beta.iter().zip(&origin).filter(|(_, o)| o.is_none()).map(|(&g, _)| g).collect();
        let mut cache = HashMap::with_capacity(alpha.len());
        let mut scratch = Vec::with_capacity(fresh.len());
        for &i in &alpha {
            let old = &self.cache[&i];
            scratch.clear();
            src.column_into(i, &fresh, &mut scratch);
            let mut next_fresh = scratch.iter();
            let col: Vec<f64> = origin
                .iter()
                .map(|o| match *o {
                    Some(p) => old[p],
                    None => *next_fresh.next().expect("fresh rows line up"),
                })
                .collect();
            cache.insert(i, col);
        }

        let mut weights = vec![0.0; beta.len()];
        let mut ax = Vec::with_capacity(beta.len());
        for (p, &g) in alpha.iter().enumerate() {
            let old = self.pos[&g];
            weights[p] = self.weights[old];
            ax.push(self.ax[old]);
        }
        for row in alpha.len()..beta.len() {
            let mut acc = 0.0;
            for (p, i) in alpha.iter().enumerate() {
                acc += weights[p] * cache[i][row];
            }
            ax.push(acc);
        }
        LidState {
            beta,
            pos,
            weights,
            support: (0..alpha.len()).collect(),
            ax,
            cache,
            iterations: self.iterations,
        }
    }

    fn insert_support(&mut self, p: usize) {
        let g = self.beta[p];
        let beta = &self.beta;
        if let Err(at) = self.support.binary_search_by_key(&g, |&q| beta[q]) {
            self.support.insert(at, p);
        }
    }

    /// Drops dust weights and rescales `x` and `ax` back onto the simplex.
    fn prune(&mut self) {
        let mut k = 0;
        while k < self.support.len() {
            let p = self.support[k];
            let w = self.weights[p];
            if w < PRUNE_EPS {
                let col = &self.cache[&self.beta[p]];
                for (a, c) in self.ax.iter_mut().zip(col) {
                    *a -= w * c;
                }
                self.weights[p] = 0.0;
                self.support.remove(k);
            } else {
                k += 1;
            }
        }
        let total: f64 = self.support.iter().map(|&p| self.weights[p]).sum();
        if total != 1.0 {
            for &p in &self.support {
                self.weights[p] /= total;
            }
            for a in &mut self.ax {
                *a /= total;
            }
        }
    }
}

/// Vertex with the largest `|gap|` among infective range vertices and weak
/// support vertices; ties go to the smallest global index.
pub fn select_vertex(state: &LidState, cfg: &LidConfig) -> Option<Selection> {
    let pi = state.density();
    let mut best: Option<(usize, f64)> = None;
    for (p, &a) in state.ax.iter().enumerate() {
        let gap = a - pi;
        let eligible = gap > cfg.gap_eps || (gap < -cfg.gap_eps && state.weights[p] > 0.0);
        if !eligible {
            continue;
        }
        let better = match best {
            None => true,
            Some((q, g)) => {
                gap.abs() > g.abs() || (gap.abs() == g.abs() && state.beta[p] < state.beta[q])
            }
        };
        if better {
            best = Some((p, gap));
        }
    }
    best.map(|(p, gap)| Selection {
        index: state.beta[p],
        kind: if gap > 0.0 { StepKind::Infect } else { StepKind::Immunize },
        gap,
    })
}

/// Invasion share `eps in (0, 1]` for the selected vertex (or its co-vertex).
pub fn invasion_share(state: &LidState, sel: &Selection) -> Result<f64> {
    let p = *state
        .pos
        .get(&sel.index)
        .ok_or(AlidError::IndexOutOfRange { index: sel.index, n: state.beta.len() })?;
    let pi = state.density();
    let gap = state.ax[p] - pi;
    // pi(s_i - x) with a_ii = 0
    let quad = pi - 2.0 * state.ax[p];
    let (num, den) = match sel.kind {
        StepKind::Infect => (gap, quad),
        StepKind::Immunize => {
            let xi = state.weights[p];
            if xi >= 1.0 {
                return Err(AlidError::ImmunizeSingleton { index: sel.index });
            }
            let kappa = xi / (xi - 1.0);
            (kappa * gap, kappa * kappa * quad)
        }
    };
    if den < 0.0 {
        Ok((-num / den).min(1.0))
    } else {
        Ok(1.0)
    }
}

/// One infection or immunization. Returns `None`, leaving the state untouched,
/// when nothing is selectable.
pub fn lid_step<S: AffinitySource + ?Sized>(
    src: &S,
    state: &mut LidState,
    cfg: &LidConfig,
) -> Result<Option<StepReport>> {
    let Some(sel) = select_vertex(state, cfg) else {
        return Ok(None);
    };
    let density_before = state.density();
    let eps = invasion_share(state, &sel)?;
    let p = state.pos[&sel.index];
    let t = match sel.kind {
        StepKind::Infect => eps,
        StepKind::Immunize => {
            let xi = state.weights[p];
            eps * xi / (xi - 1.0)
        }
    };

    if !state.cache.contains_key(&sel.index) {
        let mut col = Vec::with_capacity(state.beta.len());
        src.column_into(sel.index, &state.beta, &mut col);
        state.cache.insert(sel.index, col);
    }
    let col = &state.cache[&sel.index];
    for (a, c) in state.ax.iter_mut().zip(col) {
        *a += t * (c - *a);
    }
    for &q in &state.support {
        state.weights[q] *= 1.0 - t;
    }
    state.weights[p] += t;
    if sel.kind == StepKind::Infect {
        state.insert_support(p);
    }
    state.prune();
    state.iterations += 1;

    Ok(Some(StepReport {
        iteration: state.iterations,
        index: sel.index,
        kind: sel.kind,
        epsilon: eps,
        density: state.density(),
        density_before,
    }))
}

/// Iterates [`lid_step`] until no vertex is selectable, the density is stable,
/// or `max_iters` steps were taken.
pub fn run_lid<S: AffinitySource + ?Sized>(src: &S, state: &mut LidState, cfg: &LidConfig) -> Result<LidRun> {
    run_lid_observed(src, state, cfg, &mut |_| {})
}

pub fn run_lid_observed<S: AffinitySource + ?Sized>(
    src: &S,
    state: &mut LidState,
    cfg: &LidConfig,
    observer: &mut dyn FnMut(&StepReport),
) -> Result<LidRun> {
    let mut steps = 0;
    while steps < cfg.max_iters {
        let Some(report) = lid_step(src, state, cfg)? else {
            return Ok(LidRun { steps, reason: StopReason::NoInfective });
        };
        steps += 1;
        observer(&report);
        if (report.density - report.density_before).abs() < cfg.stability_eps {
            return Ok(LidRun { steps, reason: StopReason::Stable });
        }
    }
    let reason = if select_vertex(state, cfg).is_none() {
        StopReason::NoInfective
    } else {
        StopReason::IterationLimit
    };
    Ok(LidRun { steps, reason })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::{CountingSource, DataSet, KernelParams};
    use crate::simplex::{cross_payoff, density, payoff_gap};
    use proptest::prelude::*;

    fn line(xs: &[f64], k: f64) -> DataSet {
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        DataSet::from_rows(&rows, KernelParams::euclidean(k).unwrap()).unwrap()
    }

    /// 1-d points with `a_01 = 0.9`, `a_02 = 0.5`.
    fn three() -> DataSet {
        let d1 = (1.0f64 / 0.9).ln();
        let d2 = (1.0f64 / 0.5).ln();
        line(&[0.0, d1, -d2], 1.0)
    }

    fn full_state(ds: &DataSet, x: &Subgraph) -> LidState {
        LidState::new(ds, (0..ds.n()).collect(), x).unwrap()
    }

    #[test]
    fn selects_strongest_infective() {
        let ds = three();
        let st = full_state(&ds, &Subgraph::vertex(0));
        let sel = select_vertex(&st, &LidConfig::default()).unwrap();
        assert_eq!((sel.index, sel.kind), (1, StepKind::Infect));
        assert!((sel.gap - 0.9).abs() < 1e-12);
    }

    #[test]
    fn clique_midpoint_has_no_selection() {
        let ds = line(&[0.0, 0.0], 1.0);
        let st = full_state(&ds, &Subgraph::uniform(&[0, 1]).unwrap());
        assert!(select_vertex(&st, &LidConfig::default()).is_none());
    }

    #[test]
    fn infect_share_and_step() {
        let ds = line(&[0.0, (1.0f64 / 0.9).ln()], 1.0);
        let mut st = full_state(&ds, &Subgraph::vertex(0));
        let cfg = LidConfig::default();
        let sel = select_vertex(&st, &cfg).unwrap();
        assert!((invasion_share(&st, &sel).unwrap() - 0.5).abs() < 1e-12);
        let rep = lid_step(&ds, &mut st, &cfg).unwrap().unwrap();
        assert_eq!(rep.density_before, 0.0);
        assert!((rep.density - 0.45).abs() < 1e-12);
        assert!((st.weight_of(0) - 0.5).abs() < 1e-12);
        assert!((st.weight_of(1) - 0.5).abs() < 1e-12);
        assert!(lid_step(&ds, &mut st, &cfg).unwrap().is_none());
    }

    #[test]
    fn share_is_one_when_quadratic_term_nonnegative() {
        // x on vertex 0 with ax[1] = 0 would need quad >= 0: pi(x) >= 2 ax_i.
        // Weak support vertex far from the rest gives exactly that.
        let ds = line(&[0.0, 0.0, 50.0], 1.0);
        let x = Subgraph::new(vec![0, 1, 2], vec![0.4, 0.4, 0.2]).unwrap();
        let st = full_state(&ds, &x);
        let sel = select_vertex(&st, &LidConfig::default()).unwrap();
        assert_eq!((sel.index, sel.kind), (2, StepKind::Immunize));
        // quad = pi - 2 ax_2 > 0 since ax_2 is ~0
        assert_eq!(invasion_share(&st, &sel).unwrap(), 1.0);
    }

    #[test]
    fn immunize_share_matches_dense_co_vertex() {
        let ds = line(&[0.0, 0.2, 1.5], 1.0);
        let x = Subgraph::new(vec![0, 1, 2], vec![0.3, 0.3, 0.4]).unwrap();
        let st = full_state(&ds, &x);
        let sel = select_vertex(&st, &LidConfig::default()).unwrap();
        assert_eq!((sel.index, sel.kind), (2, StepKind::Immunize));
        let eps = invasion_share(&st, &sel).unwrap();

        // co-vertex y = x + kappa (s_i - x), then eps = min(-pi(y-x,x)/pi(y-x), 1)
        let xi = x.weight_of(2);
        let kappa = xi / (xi - 1.0);
        let y: Vec<f64> = (0..3)
            .map(|j| x.weight_of(j) + kappa * ((j == 2) as u8 as f64 - x.weight_of(j)))
            .collect();
        let a = |i: usize, j: usize| ds.affinity(i, j).unwrap();
        let form = |u: &[f64], v: &[f64]| {
            let mut s = 0.0;
            for i in 0..3 {
                for j in 0..3 {
                    s += u[i] * v[j] * a(i, j);
                }
            }
            s
        };
        let xv: Vec<f64> = (0..3).map(|j| x.weight_of(j)).collect();
        let diff: Vec<f64> = (0..3).map(|j| y[j] - xv[j]).collect();
        let num = form(&diff, &xv);
        let den = form(&diff, &diff);
        let expect = if den < 0.0 { (-num / den).min(1.0) } else { 1.0 };
        assert!((eps - expect).abs() < 1e-10);
    }

    #[test]
    fn immunize_on_singleton_is_an_error() {
        let ds = line(&[0.0, 1.0], 1.0);
        let st = full_state(&ds, &Subgraph::vertex(0));
        let sel = Selection { index: 0, kind: StepKind::Immunize, gap: -1.0 };
        assert!(matches!(
            invasion_share(&st, &sel),
            Err(AlidError::ImmunizeSingleton { index: 0 })
        ));
    }

    #[test]
    fn single_vertex_range_returns_immediately() {
        let ds = line(&[0.0, 1.0], 1.0);
        let mut st = LidState::singleton(&ds, 1).unwrap();
        let run = run_lid(&ds, &mut st, &LidConfig::default()).unwrap();
        assert_eq!(run, LidRun { steps: 0, reason: StopReason::NoInfective });
        assert_eq!(st.subgraph(), Subgraph::vertex(1));
    }

    #[test]
    fn clique_plus_outlier_converges_to_uniform() {
        let ds = line(&[3.0, 3.0, 3.0, 40.0], 2.0);
        let mut st = full_state(&ds, &Subgraph::vertex(0));
        run_lid(&ds, &mut st, &LidConfig::default()).unwrap();
        let x = st.subgraph();
        assert_eq!(x.support(), &[0, 1, 2]);
        for w in x.weights() {
            assert!((w - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!((density(&ds, &x).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn iteration_limit_is_reported() {
        let ds = line(&[0.0, 0.1, 0.2, 0.3, 0.45, 0.6], 1.0);
        let mut st = full_state(&ds, &Subgraph::vertex(0));
        let cfg = LidConfig { max_iters: 1, ..LidConfig::default() };
        let run = run_lid(&ds, &mut st, &cfg).unwrap();
        assert_eq!(run, LidRun { steps: 1, reason: StopReason::IterationLimit });
    }

    #[test]
    fn range_extension_fills_new_rows() {
        let ds = line(&[0.0, 0.3, 0.5, 2.0, 2.2], 1.0);
        let mut st = LidState::new(&ds, vec![0, 1, 3], &Subgraph::vertex(0)).unwrap();
        run_lid(&ds, &mut st, &LidConfig::default()).unwrap();
        let next = st.extend_range(&ds, &[2]);
        assert_eq!(next.beta()[..next.support_len()], st.support()[..]);
        assert_eq!(*next.beta().last().unwrap(), 2);
        let x = st.subgraph();
        let row: f64 = x.iter().map(|(i, w)| w * ds.affinity(2, i).unwrap()).sum();
        assert!((next.ax().last().unwrap() - row).abs() < 1e-12);
        for (a, b) in next.ax().iter().zip(next.recompute_ax(&ds)) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    fn instance() -> impl Strategy<Value = (Vec<Vec<f64>>, f64, usize)> {
        (
            proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 2), 6),
            0.3f64..3.0,
            0usize..6,
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn steps_keep_ax_density_and_immunity((rows, k, seed) in instance()) {
            let ds = DataSet::from_rows(&rows, KernelParams::euclidean(k).unwrap()).unwrap();
            let cfg = LidConfig::default();
            let mut st = LidState::new(&ds, (0..6).collect(), &Subgraph::vertex(seed)).unwrap();
            for _ in 0..200 {
                let before = st.subgraph();
                let Some(rep) = lid_step(&ds, &mut st, &cfg).unwrap() else { break };
                for (a, b) in st.ax().iter().zip(st.recompute_ax(&ds)) {
                    prop_assert!((a - b).abs() < 1e-9);
                }
                let after = st.subgraph();
                let d_after = density(&ds, &after).unwrap();
                prop_assert!(d_after >= density(&ds, &before).unwrap() - 1e-12);
                prop_assert!((rep.density - d_after).abs() < 1e-9);
                // the invader is no longer infective against the new point
                let y_gap = match rep.kind {
                    StepKind::Infect => payoff_gap(&ds, &Subgraph::vertex(rep.index), &after).unwrap(),
                    StepKind::Immunize => {
                        let xi = before.weight_of(rep.index);
                        let kappa = xi / (xi - 1.0);
                        let px = cross_payoff(&ds, &before, &after).unwrap();
                        let ps = cross_payoff(&ds, &Subgraph::vertex(rep.index), &after).unwrap();
                        (1.0 - kappa) * px + kappa * ps - d_after
                    }
                };
                prop_assert!(y_gap <= cfg.gap_eps);
            }
        }

        #[test]
        fn run_lid_is_local_and_thrifty((rows, k, seed) in instance(), mask in 1u8..64) {
            let ds = DataSet::from_rows(&rows, KernelParams::euclidean(k).unwrap()).unwrap();
            let mut beta: Vec<usize> = (0..6).filter(|i| mask & (1 << i) != 0).collect();
            if !beta.contains(&seed) {
                beta.push(seed);
            }
            let src = CountingSource::tracking_pairs(&ds);
            let mut st = LidState::new(&src, beta.clone(), &Subgraph::vertex(seed)).unwrap();
            let mut infected = vec![seed];
            let cfg = LidConfig::default();
            run_lid_observed(&src, &mut st, &cfg, &mut |r| {
                if r.kind == StepKind::Infect {
                    infected.push(r.index);
                }
            })
            .unwrap();
            for (i, j) in src.pairs() {
                prop_assert!(beta.contains(&i) && beta.contains(&j));
            }
            for c in st.cached_columns() {
                prop_assert!(infected.contains(&c));
            }
            let x = st.subgraph();
            for &j in &beta {
                let g = payoff_gap(&ds, &Subgraph::vertex(j), &x).unwrap();
                prop_assert!(g <= cfg.gap_eps + 1e-12);
            }
        }
    }
}
