//! Parallel detection: seeds sampled from large buckets, independent mapper
//! tasks over a shared read-only index, and a reduce step that gives each item
//! to the densest cluster containing it.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::affinity::AffinitySource;
use crate::alid::{detect_one, AlidConfig, ClusterResult};
use crate::civs::ExcludedSet;
use crate::error::{AlidError, Result};
use crate::lsh::LshIndex;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskList {
    /// Distinct seed vertices, ascending.
    pub seeds: Vec<usize>,
}

/// Samples `ceil(sample_rate * size)` members without replacement from every
/// bucket holding more than `min_bucket` items.
pub fn build_tasklist(index: &LshIndex, sample_rate: f64, min_bucket: usize, rng_seed: u64) -> Result<TaskList> {
    if !(sample_rate > 0.0 && sample_rate <= 1.0) {
        return Err(AlidError::InvalidConfig(format!("sample rate {sample_rate} must lie in (0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut seeds = Vec::new();
    for stat in index.bucket_stats() {
        if stat.size <= min_bucket {
            continue;
        }
        let members = index.bucket_members(stat.table, stat.bucket);
        // the small slack keeps 0.2 * 15 from rounding up to 4
        let take = ((sample_rate * members.len() as f64) - 1e-9).ceil().max(1.0) as usize;
        let take = take.min(members.len());
        seeds.extend(sample(&mut rng, members.len(), take).into_iter().map(|p| members[p]));
    }
    seeds.sort_unstable();
    seeds.dedup();
    Ok(TaskList { seeds })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssignmentEntry {
    pub item: usize,
    pub label: usize,
    pub density: f64,
}

/// Item-to-cluster map, sorted by item. Unlisted items are noise.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Assignment {
    pub entries: Vec<AssignmentEntry>,
}

impl Assignment {
    pub fn get(&self, item: usize) -> Option<&AssignmentEntry> {
        self.entries
            .binary_search_by_key(&item, |e| e.item)
            .ok()
            .map(|p| &self.entries[p])
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("assignment entries serialize"));
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskFailure {
    pub seed: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PalidOutput {
    /// Clusters above the threshold after merging identical supports, labelled
    /// `0, 1, ...` in ascending order of their seed.
    pub clusters: Vec<ClusterResult>,
    pub assignment: Assignment,
    pub failures: Vec<TaskFailure>,
}

/// Runs one [`detect_one`] per seed on `workers` threads, then reduces.
pub fn run_palid<S: AffinitySource + ?Sized>(
    src: &S,
    index: &LshIndex,
    cfg: &AlidConfig,
    workers: usize,
    tasks: &TaskList,
) -> Result<PalidOutput> {
    cfg.validate()?;
    index.check_compatible(src.dataset())?;
    let none = ExcludedSet::new(0);
    run_palid_with(tasks, workers, cfg.density_threshold, |seed| {
        detect_one(src, index, cfg, seed, &none)
    })
}

/// Map and reduce with an arbitrary per-seed task.
pub fn run_palid_with<F>(tasks: &TaskList, workers: usize, threshold: f64, map: F) -> Result<PalidOutput>
where
    F: Fn(usize) -> Result<ClusterResult> + Sync,
{
    if workers == 0 {
        return Err(AlidError::InvalidConfig("workers must be at least 1".into()));
    }
    let outcomes = map_tasks(&tasks.seeds, workers, &map);
    let mut clusters = Vec::new();
    let mut failures = Vec::new();
    for (&seed, outcome) in tasks.seeds.iter().zip(outcomes) {
        match outcome {
            Ok(mut c) => {
                c.label = seed;
                clusters.push(c);
            }
            Err(message) => failures.push(TaskFailure { seed, message }),
        }
    }
    let (clusters, assignment) = reduce(clusters, threshold);
    Ok(PalidOutput { clusters, assignment, failures })
}

fn map_tasks<F>(seeds: &[usize], workers: usize, map: &F) -> Vec<std::result::Result<ClusterResult, String>>
where
    F: Fn(usize) -> Result<ClusterResult> + Sync,
{
    let slots: Mutex<Vec<Option<std::result::Result<ClusterResult, String>>>> =
        Mutex::new((0..seeds.len()).map(|_| None).collect());
    let next = AtomicUsize::new(0);
    let lanes = workers.min(seeds.len()).max(1);
    thread::scope(|scope| {
        for _ in 0..lanes {
            scope.spawn(|| loop {
                let t = next.fetch_add(1, Ordering::Relaxed);
                if t >= seeds.len() {
                    break;
                }
                let outcome = match catch_unwind(AssertUnwindSafe(|| map(seeds[t]))) {
                    Ok(Ok(c)) => Ok(c),
                    Ok(Err(e)) => Err(e.to_string()),
                    Err(payload) => Err(panic_message(payload.as_ref())),
                };
                slots.lock().unwrap_or_else(|p| p.into_inner())[t] = Some(outcome);
            });
        }
    });
    slots
        .into_inner()
        .unwrap_or_else(|p| p.into_inner())
        .into_iter()
        .map(|o| o.expect("every task slot is filled"))
        .collect()
}

fn panic_message(payload: &(dyn std::any::Any + Send)) -> String {
    if let Some(s) = payload.downcast_ref::<&str>() {
        format!("task panicked: {s}")
    } else if let Some(s) = payload.downcast_ref::<String>() {
        format!("task panicked: {s}")
    } else {
        "task panicked".to_string()
    }
}

fn better(a: &ClusterResult, b: &ClusterResult) -> bool {
    a.density > b.density || (a.density == b.density && a.label < b.label)
}

/// Threshold, merge identical supports, then give each item to its densest
/// cluster (ties to the smaller label). Independent of input order.
pub fn reduce(clusters: Vec<ClusterResult>, threshold: f64) -> (Vec<ClusterResult>, Assignment) {
    let mut by_support: BTreeMap<Vec<usize>, ClusterResult> = BTreeMap::new();
    for c in clusters.into_iter().filter(|c| c.density >= threshold) {
        let key = c.members.support().to_vec();
        match by_support.get(&key) {
            Some(kept) if !better(&c, kept) => {}
            _ => {
                by_support.insert(key, c);
            }
        }
    }
    let mut merged: Vec<ClusterResult> = by_support.into_values().collect();
    merged.sort_by_key(|c| c.label);

    let mut best: BTreeMap<usize, usize> = BTreeMap::new();
    for (pos, c) in merged.iter().enumerate() {
        for &h in c.members.support() {
            match best.get(&h) {
                Some(&q) if !better(c, &merged[q]) => {}
                _ => {
                    best.insert(h, pos);
                }
            }
        }
    }
    for (label, c) in merged.iter_mut().enumerate() {
        c.label = label;
    }
    let entries = best
        .into_iter()
        .map(|(item, pos)| AssignmentEntry {
            item,
            label: pos,
            density: merged[pos].density,
        })
        .collect();
    (merged, Assignment { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affinity::{DataSet, KernelParams};
    use crate::lsh::LshParams;
    use crate::simplex::Subgraph;

    fn cluster(seed: usize, density: f64, ids: &[usize]) -> ClusterResult {
        ClusterResult {
            label: seed,
            density,
            members: Subgraph::uniform(ids).unwrap(),
            rounds_used: 1,
            converged: false,
        }
    }

    #[test]
    fn small_buckets_give_no_tasks() {
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let ds = DataSet::from_rows(&rows, KernelParams::default()).unwrap();
        let idx = LshIndex::build(&ds, LshParams { mu: 1, l: 3, r: 100.0, seed: 0 }).unwrap();
        assert!(build_tasklist(&idx, 0.2, 5, 1).unwrap().seeds.is_empty());
    }

    #[test]
    fn bucket_of_ten_gives_two_seeds() {
        let ds = DataSet::from_rows(&vec![vec![0.5]; 10], KernelParams::default()).unwrap();
        let idx = LshIndex::build(&ds, LshParams { mu: 2, l: 1, r: 1.0, seed: 0 }).unwrap();
        let tl = build_tasklist(&idx, 0.2, 5, 7).unwrap();
        assert_eq!(tl.seeds.len(), 2);
        assert_eq!(tl, build_tasklist(&idx, 0.2, 5, 7).unwrap());
        let fifteen = DataSet::from_rows(&vec![vec![0.5]; 15], KernelParams::default()).unwrap();
        let idx = LshIndex::build(&fifteen, LshParams { mu: 2, l: 1, r: 1.0, seed: 0 }).unwrap();
        assert_eq!(build_tasklist(&idx, 0.2, 5, 7).unwrap().seeds.len(), 3);
    }

    #[test]
    fn overlap_goes_to_denser_cluster() {
        let (clusters, asg) = reduce(
            vec![cluster(9, 0.8, &[1, 2, 3]), cluster(4, 0.9, &[3, 4, 5]), cluster(2, 0.5, &[6, 7])],
            0.75,
        );
        assert_eq!(clusters.len(), 2);
        // labels follow seed order: seed 4 -> 0, seed 9 -> 1
        assert_eq!(asg.get(3).unwrap().label, 0);
        assert_eq!(asg.get(3).unwrap().density, 0.9);
        assert_eq!(asg.get(1).unwrap().label, 1);
        assert!(asg.get(6).is_none());
    }

    #[test]
    fn identical_supports_merge() {
        let (clusters, asg) = reduce(vec![cluster(7, 0.8, &[1, 2]), cluster(3, 0.8, &[1, 2])], 0.75);
        assert_eq!(clusters.len(), 1);
        assert_eq!(asg.entries.len(), 2);
        assert!(asg.entries.iter().all(|e| e.label == 0));
    }

    #[test]
    fn panicking_task_is_reported() {
        let tasks = TaskList { seeds: vec![1, 2, 3] };
        let out = run_palid_with(&tasks, 2, 0.5, |seed| {
            if seed == 2 {
                panic!("boom");
            }
            Ok(cluster(seed, 0.9, &[seed * 10]))
        })
        .unwrap();
        assert_eq!(out.failures, vec![TaskFailure { seed: 2, message: "task panicked: boom".into() }]);
        assert_eq!(out.clusters.len(), 2);
        assert!(run_palid_with(&tasks, 0, 0.5, |s| Ok(cluster(s, 1.0, &[s]))).is_err());
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let tasks = TaskList { seeds: (0..20).collect() };
        let f = |s: usize| Ok(cluster(s, 0.76 + (s % 5) as f64 * 0.01, &[s, (s + 1) % 20, (s + 7) % 20]));
        let one = run_palid_with(&tasks, 1, 0.75, f).unwrap();
        for w in [2, 3, 8] {
            assert_eq!(run_palid_with(&tasks, w, 0.75, f).unwrap(), one);
        }
    }
}
