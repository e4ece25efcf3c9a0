//! Point storage and the Laplacian affinity kernel.
//!
//! `a_ij = exp(-k * ||v_i - v_j||_p)` for `i != j` and `a_ii = 0`. This is the
//! only module that reads raw vectors; everything else sees the implicit
//! affinity graph through [`AffinitySource`].

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{AlidError, Result};

/// Laplacian kernel parameters: scaling factor `k` and norm order `p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub k: f64,
    pub p: f64,
}

impl KernelParams {
    pub fn new(k: f64, p: f64) -> Result<Self> {
        let kp = KernelParams { k, p };
        kp.validate()?;
        Ok(kp)
    }

    /// Euclidean kernel with scale `k`.
    pub fn euclidean(k: f64) -> Result<Self> {
        Self::new(k, 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k.is_finite() && self.k > 0.0 && self.p.is_finite() && self.p >= 1.0) {
            return Err(AlidError::InvalidKernel { k: self.k, p: self.p });
        }
        Ok(())
    }
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams { k: 1.0, p: 2.0 }
    }
}

/// `||a - b||_p`, with dedicated paths for `p = 1` and `p = 2`.
#[inline]
pub fn lp_distance(a: &[f64], b: &[f64], p: f64) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if p == 2.0 {
        let mut acc = 0.0;
        for (x, y) in a.iter().zip(b) {
            let t = x - y;
            acc += t * t;
        }
        acc.sqrt()
    } else if p == 1.0 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
    } else {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs().powf(p))
            .sum::<f64>()
            .powf(1.0 / p)
    }
}

/// Immutable set of `n` points in `R^d` together with the kernel that turns
/// them into an affinity graph.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    coords: Vec<f64>,
    n: usize,
    d: usize,
    kernel: KernelParams,
}

impl DataSet {
    /// Builds a data set from a row-major buffer of `n * d` coordinates.
    pub fn from_flat(coords: Vec<f64>, d: usize, kernel: KernelParams) -> Result<Self> {
        kernel.validate()?;
        if d == 0 || coords.is_empty() {
            return Err(AlidError::EmptyInput);
        }
        if coords.len() % d != 0 {
            return Err(AlidError::Format(format!(
                "{} coordinates do not divide into rows of {d}",
                coords.len()
            )));
        }
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return Err(AlidError::NonFiniteComponent {
                record: pos / d,
                component: pos % d,
            });
        }
        let n = coords.len() / d;
        Ok(DataSet { coords, n, d, kernel })
    }

    pub fn from_rows(rows: &[Vec<f64>], kernel: KernelParams) -> Result<Self> {
        let d = rows.first().map(Vec::len).ok_or(AlidError::EmptyInput)?;
        let mut coords = Vec::with_capacity(rows.len() * d);
        for (line, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(AlidError::WrongArity {
                    line: line + 1,
                    expected: d,
                    found: row.len(),
                });
            }
            coords.extend_from_slice(row);
        }
        Self::from_flat(coords, d, kernel)
    }

    /// Same points under a different kernel.
    pub fn with_kernel(self, kernel: KernelParams) -> Result<Self> {
        kernel.validate()?;
        Ok(DataSet { kernel, ..self })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn kernel(&self) -> KernelParams {
        self.kernel
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.d..(i + 1) * self.d]
    }

    pub fn check_index(&self, i: usize) -> Result<()> {
        if i < self.n {
            Ok(())
        } else {
            Err(AlidError::IndexOutOfRange { index: i, n: self.n })
        }
    }

    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        lp_distance(self.point(i), self.point(j), self.kernel.p)
    }

    #[inline]
    pub fn distance_to(&self, i: usize, center: &[f64]) -> f64 {
        lp_distance(self.point(i), center, self.kernel.p)
    }

    /// Kernel value for a distance, `exp(-k t)`.
    #[inline]
    pub fn kernel_of_distance(&self, t: f64) -> f64 {
        (-self.kernel.k * t).exp()
    }

    /// `a_ij`, zero on the diagonal.
    pub fn affinity(&self, i: usize, j: usize) -> Result<f64> {
        self.check_index(i)?;
        self.check_index(j)?;
        Ok(self.affinity_of(i, j))
    }

    /// Column `A_{rows, i}`.
    pub fn affinity_column(&self, i: usize, rows: &[usize]) -> Result<AffinityColumn> {
        self.check_index(i)?;
        for &r in rows {
            self.check_index(r)?;
        }
        let mut values = Vec::with_capacity(rows.len());
        self.column_into(i, rows, &mut values);
        Ok(AffinityColumn {
            target: i,
            rows: rows.to_vec(),
            values,
        })
    }

    /// Copy of the points at `ids`, in that order.
    pub fn subset(&self, ids: &[usize]) -> Result<DataSet> {
        let mut coords = Vec::with_capacity(ids.len() * self.d);
        for &i in ids {
            self.check_index(i)?;
            coords.extend_from_slice(self.point(i));
        }
        DataSet::from_flat(coords, self.d, self.kernel)
    }
}

/// One affinity column restricted to a row set.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityColumn {
    pub target: usize,
    pub rows: Vec<usize>,
    pub values: Vec<f64>,
}

/// Read access to the implicit affinity graph.
///
/// Indices passed to the `*_of` / `*_into` methods are assumed valid; public
/// entry points validate them first. Implementations must be shareable across
/// detection tasks.
pub trait AffinitySource: Sync {
    fn dataset(&self) -> &DataSet;

    fn affinity_of(&self, i: usize, j: usize) -> f64;

    /// Appends `a_{r,i}` for every `r` in `rows` to `out`.
    fn column_into(&self, i: usize, rows: &[usize], out: &mut Vec<f64>) {
        out.reserve(rows.len());
        for &r in rows {
            out.push(self.affinity_of(r, i));
        }
    }
}

impl AffinitySource for DataSet {
    fn dataset(&self) -> &DataSet {
        self
    }

    #[inline]
    fn affinity_of(&self, i: usize, j: usize) -> f64 {
        if i == j {
            0.0
        } else {
            self.kernel_of_distance(self.distance(i, j))
        }
    }
}

/// Instrumented view of a [`DataSet`] that counts kernel evaluations.
///
/// With pair tracking enabled it also records every distinct unordered
/// off-diagonal pair, so symmetric evaluations are never double counted.
pub struct CountingSource<'a> {
    ds: &'a DataSet,
    evaluations: AtomicU64,
    pairs: Option<Mutex<HashSet<u64>>>,
}

impl<'a> CountingSource<'a> {
    /// Counts evaluations only (cheap enough for benchmarks).
    pub fn new(ds: &'a DataSet) -> Self {
        CountingSource {
            ds,
            evaluations: AtomicU64::new(0),
            pairs: None,
        }
    }

    /// Counts evaluations and remembers distinct pairs.
    pub fn tracking_pairs(ds: &'a DataSet) -> Self {
        CountingSource {
            ds,
            evaluations: AtomicU64::new(0),
            pairs: Some(Mutex::new(HashSet::new())),
        }
    }

    /// Total off-diagonal kernel evaluations, repeats included.
    pub fn evaluations(&self) -> u64 {
        self.evaluations.load(Ordering::Relaxed)
    }

    /// Distinct unordered pairs evaluated, if tracking is enabled.
    pub fn distinct_pairs(&self) -> Option<u64> {
        self.pairs
            .as_ref()
            .map(|p| p.lock().expect("pair set poisoned").len() as u64)
    }

    /// Snapshot of the distinct pairs as `(min, max)` tuples, sorted.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = match &self.pairs {
            Some(p) => p
                .lock()
                .expect("pair set poisoned")
                .iter()
                .map(|&key| ((key >> 32) as usize, (key & 0xffff_ffff) as usize))
                .collect(),
            None => Vec::new(),
        };
        out.sort_unstable();
        out
    }

    pub fn reset(&self) {
        self.evaluations.store(0, Ordering::Relaxed);
        if let Some(p) = &self.pairs {
            p.lock().expect("pair set poisoned").clear();
        }
    }

    fn record(&self, i: usize, j: usize) {
        if let Some(p) = &self.pairs {
            let (lo, hi) = if i < j { (i, j) } else { (j, i) };
            p.lock()
                .expect("pair set poisoned")
                .insert(((lo as u64) << 32) | hi as u64);
        }
    }
}

impl AffinitySource for CountingSource<'_> {
    fn dataset(&self) -> &DataSet {
        self.ds
    }

    fn affinity_of(&self, i: usize, j: usize) -> f64 {
        if i != j {
            self.evaluations.fetch_add(1, Ordering::Relaxed);
            self.record(i, j);
        }
        self.ds.affinity_of(i, j)
    }

    fn column_into(&self, i: usize, rows: &[usize], out: &mut Vec<f64>) {
        let off_diagonal = rows.iter().filter(|&&r| r != i).count() as u64;
        self.evaluations.fetch_add(off_diagonal, Ordering::Relaxed);
        if self.pairs.is_some() {
            for &r in rows {
                if r != i {
                    self.record(r, i);
                }
            }
        }
        self.ds.column_into(i, rows, out);
    }
}

/// On-disk vector formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VectorFormat {
    /// One point per line, comma separated.
    Csv,
    /// Little-endian `u32 d`, `u64 n`, then `n * d` `f32` values.
    Binary,
}

impl VectorFormat {
    /// `.csv` / `.txt` are text, anything else is binary.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") || ext.eq_ignore_ascii_case("txt") => {
                VectorFormat::Csv
            }
            _ => VectorFormat::Binary,
        }
    }
}

pub fn load_dataset<R: Read>(source: R, format: VectorFormat, kernel: KernelParams) -> Result<DataSet> {
    match format {
        VectorFormat::Csv => read_csv(BufReader::new(source), kernel),
        VectorFormat::Binary => read_binary(BufReader::new(source), kernel),
    }
}

pub fn load_path(path: &Path, kernel: KernelParams) -> Result<DataSet> {
    let file = File::open(path)?;
    load_dataset(file, VectorFormat::from_path(path), kernel)
}

fn read_csv<R: BufRead>(reader: R, kernel: KernelParams) -> Result<DataSet> {
    let mut coords = Vec::new();
    let mut d = 0usize;
    let mut records = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        let start = coords.len();
        for token in trimmed.split(',') {
            let token = token.trim();
            let value: f64 = token.parse().map_err(|_| AlidError::Parse {
                line: idx + 1,
                token: token.to_string(),
            })?;
            if !value.is_finite() {
                return Err(AlidError::NonFiniteComponent {
                    record: records,
                    component: coords.len() - start,
                });
            }
            coords.push(value);
        }
        let found = coords.len() - start;
        if records == 0 {
            d = found;
        } else if found != d {
            return Err(AlidError::WrongArity {
                line: idx + 1,
                expected: d,
                found,
            });
        }
        records += 1;
    }
    if records == 0 {
        return Err(AlidError::EmptyInput);
    }
    DataSet::from_flat(coords, d, kernel)
}

fn read_binary<R: Read>(mut reader: R, kernel: KernelParams) -> Result<DataSet> {
    let mut head = [0u8; 12];
    reader
        .read_exact(&mut head)
        .map_err(|_| AlidError::Format("truncated vector file header".into()))?;
    let d = u32::from_le_bytes(head[0..4].try_into().unwrap()) as usize;
    let n = u64::from_le_bytes(head[4..12].try_into().unwrap()) as usize;
    if n == 0 || d == 0 {
        return Err(AlidError::EmptyInput);
    }
    let total = n
        .checked_mul(d)
        .ok_or_else(|| AlidError::Format("header dimensions overflow".into()))?;
    let mut raw = Vec::new();
    reader.read_to_end(&mut raw)?;
    if raw.len() != total * 4 {
        return Err(AlidError::Format(format!(
            "expected {} payload bytes for {n} x {d}, found {}",
            total * 4,
            raw.len()
        )));
    }
    let coords: Vec<f64> = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    DataSet::from_flat(coords, d, kernel)
}

/// Writes the binary vector format. Coordinates are narrowed to `f32`, so the
/// round trip is bit-exact for data that already has `f32` precision.
pub fn write_binary<W: Write>(ds: &DataSet, sink: W) -> Result<()> {
    let mut w = BufWriter::new(sink);
    w.write_all(&(ds.d() as u32).to_le_bytes())?;
    w.write_all(&(ds.n() as u64).to_le_bytes())?;
    for &c in ds.coords() {
        w.write_all(&(c as f32).to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv<W: Write>(ds: &DataSet, sink: W) -> Result<()> {
    let mut w = BufWriter::new(sink);
    for i in 0..ds.n() {
        let row: Vec<String> = ds.point(i).iter().map(|c| c.to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_path(ds: &DataSet, path: &Path) -> Result<()> {
    let file = File::create(path)?;
    match VectorFormat::from_path(path) {
        VectorFormat::Csv => write_csv(ds, file),
        VectorFormat::Binary => write_binary(ds, file),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_ds(xs: &[f64], k: f64) -> DataSet {
        let rows: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        DataSet::from_rows(&rows, KernelParams::euclidean(k).unwrap()).unwrap()
    }

    #[test]
    fn csv_three_rows_of_two() {
        let text = "0.0,1.0\n2.5,3\n-1,4e-2\n";
        let ds = load_dataset(text.as_bytes(), VectorFormat::Csv, KernelParams::default()).unwrap();
        assert_eq!((ds.n(), ds.d()), (3, 2));
        assert_eq!(ds.point(2), &[-1.0, 0.04]);
    }

    #[test]
    fn csv_rejects_nan_and_bad_arity_and_empty() {
        let err = load_dataset("1,2\n3,NaN\n".as_bytes(), VectorFormat::Csv, KernelParams::default());
        assert!(matches!(err, Err(AlidError::NonFiniteComponent { record: 1, component: 1 })));
        let err = load_dataset("1,2\n3\n".as_bytes(), VectorFormat::Csv, KernelParams::default());
        assert!(matches!(err, Err(AlidError::WrongArity { line: 2, expected: 2, found: 1 })));
        let err = load_dataset("".as_bytes(), VectorFormat::Csv, KernelParams::default());
        assert!(matches!(err, Err(AlidError::EmptyInput)));
        let err = load_dataset("1,x\n".as_bytes(), VectorFormat::Csv, KernelParams::default());
        assert!(matches!(err, Err(AlidError::Parse { line: 1, .. })));
    }

    #[test]
    fn binary_truncated_payload_is_rejected() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&2u32.to_le_bytes());
        bytes.extend_from_slice(&3u64.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 20]);
        let err = load_dataset(bytes.as_slice(), VectorFormat::Binary, KernelParams::default());
        assert!(matches!(err, Err(AlidError::Format(_))));
    }

    #[test]
    fn kernel_validation() {
        assert!(KernelParams::new(0.0, 2.0).is_err());
        assert!(KernelParams::new(1.0, 0.5).is_err());
        assert!(KernelParams::new(1.0, f64::NAN).is_err());
        assert!(KernelParams::new(0.3, 1.0).is_ok());
    }

    #[test]
    fn affinity_scalar_cases() {
        let ds = line_ds(&[0.0, 0.0, std::f64::consts::LN_2], 1.0);
        assert_eq!(ds.affinity(1, 1).unwrap(), 0.0);
        assert_eq!(ds.affinity(0, 1).unwrap(), 1.0);
        assert!((ds.affinity(0, 2).unwrap() - 0.5).abs() < 1e-15);
        assert!(matches!(ds.affinity(0, 3), Err(AlidError::IndexOutOfRange { index: 3, n: 3 })));
    }

    #[test]
    fn column_edge_cases() {
        let ds = line_ds(&[0.0, 1.0, 2.0], 1.0);
        let col = ds.affinity_column(1, &[1]).unwrap();
        assert_eq!(col.values, vec![0.0]);
        let col = ds.affinity_column(1, &[]).unwrap();
        assert!(col.values.is_empty());
        assert!(ds.affinity_column(0, &[0, 7]).is_err());
    }

    #[test]
    fn column_matches_dense_matrix() {
        // brute-force n x n build from the closed form
        let pts = [[0.1, 0.2], [1.0, -0.5], [0.3, 0.3], [2.0, 2.0], [-1.0, 0.5]];
        let rows: Vec<Vec<f64>> = pts.iter().map(|p| p.to_vec()).collect();
        let ds = DataSet::from_rows(&rows, KernelParams::euclidean(0.7).unwrap()).unwrap();
        let all: Vec<usize> = (0..5).collect();
        for i in 0..5 {
            let col = ds.affinity_column(i, &all).unwrap();
            for j in 0..5 {
                let dx = pts[i][0] - pts[j][0];
                let dy = pts[i][1] - pts[j][1];
                let expect = if i == j { 0.0 } else { (-0.7 * (dx * dx + dy * dy).sqrt()).exp() };
                assert!((col.values[j] - expect).abs() < 1e-15);
                assert_eq!(col.values[j].to_bits(), ds.affinity(j, i).unwrap().to_bits());
            }
        }
    }

    #[test]
    fn counting_source_dedupes_symmetric_pairs() {
        let ds = line_ds(&[0.0, 1.0, 2.0], 1.0);
        let src = CountingSource::tracking_pairs(&ds);
        src.affinity_of(0, 1);
        src.affinity_of(1, 0);
        src.affinity_of(2, 2);
        let mut out = Vec::new();
        src.column_into(2, &[0, 1, 2], &mut out);
        assert_eq!(src.evaluations(), 4);
        assert_eq!(src.distinct_pairs(), Some(3));
        assert_eq!(src.pairs(), vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn general_p_norm() {
        let a = [0.0, 0.0];
        let b = [3.0, 4.0];
        assert_eq!(lp_distance(&a, &b, 2.0), 5.0);
        assert_eq!(lp_distance(&a, &b, 1.0), 7.0);
        let p3 = lp_distance(&a, &b, 3.0);
        assert!((p3 - (27.0f64 + 64.0).powf(1.0 / 3.0)).abs() < 1e-12);
    }
}
