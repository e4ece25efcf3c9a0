//! p-stable LSH over the point set, with per-point inverted lists.
//!
//! Each table hashes a point to the tuple `floor((a . v + b) / r)` of `mu`
//! Gaussian projections. Points are grouped by the exact tuple while a table is
//! built, so two tuples whose 64-bit digests collide still land in different
//! buckets. Only the digest is kept afterwards.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::affinity::DataSet;
use crate::error::{AlidError, Result};

const MAGIC: &[u8; 8] = b"ALIDLSH\0";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LshParams {
    /// Projections per hash value.
    pub mu: usize,
    /// Number of tables.
    pub l: usize,
    /// Segment length on each projected line.
    pub r: f64,
    pub seed: u64,
}

impl LshParams {
    /// Forty projections per key and fifty tables.
    pub fn with_r(r: f64) -> Self {
        LshParams { mu: 40, l: 50, r, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.mu == 0 || self.l == 0 {
            return Err(AlidError::InvalidConfig("mu and l must be at least 1".into()));
        }
        if !(self.r.is_finite() && self.r > 0.0) {
            return Err(AlidError::InvalidConfig(format!("lsh segment length r = {} must be positive", self.r)));
        }
        if self.mu > u32::MAX as usize || self.l > u32::MAX as usize {
            return Err(AlidError::InvalidConfig("mu and l must fit in 32 bits".into()));
        }
        Ok(())
    }
}

/// Size of one bucket as seen by task seeding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BucketStat {
    pub table: usize,
    pub bucket: usize,
    pub key: u64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Table {
    keys: Vec<u64>,
    members: Vec<Vec<u32>>,
    dead: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LshIndex {
    params: LshParams,
    n: usize,
    d: usize,
    /// `l` blocks of `mu x d` projection rows followed by `mu` offsets each.
    proj: Vec<f64>,
    offsets: Vec<f64>,
    tables: Vec<Table>,
    /// Bucket id of point `i` in table `t` at `i * l + t`.
    inverted: Vec<u32>,
    alive: Vec<bool>,
    live: usize,
}

fn draw_projections(params: &LshParams, d: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut proj = Vec::with_capacity(params.l * params.mu * d);
    let mut offsets = Vec::with_capacity(params.l * params.mu);
    for _ in 0..params.l {
        for _ in 0..params.mu {
            for _ in 0..d {
                proj.push(rng.sample::<f64, _>(StandardNormal));
            }
            offsets.push(rng.random_range(0.0..params.r));
        }
    }
    (proj, offsets)
}

fn digest(tuple: &[i64]) -> u64 {
    // FNV-1a over the little-endian words, then a final avalanche
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in tuple {
        for byte in v.to_le_bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h ^= h >> 33;
    h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
    h ^ (h >> 33)
}

impl LshIndex {
    pub fn build(ds: &DataSet, params: LshParams) -> Result<Self> {
        params.validate()?;
        if ds.n() > u32::MAX as usize {
            return Err(AlidError::InvalidConfig("index supports at most 2^32 points".into()));
        }
        let (n, d, mu, l) = (ds.n(), ds.d(), params.mu, params.l);
        let (proj, offsets) = draw_projections(&params, d);
        let mut tables = Vec::with_capacity(l);
        let mut inverted = vec![0u32; n * l];
        let mut tuples = vec![0i64; n * mu];
        let mut order: Vec<u32> = (0..n as u32).collect();
        for t in 0..l {
            let rows = &proj[t * mu * d..(t + 1) * mu * d];
            let offs = &offsets[t * mu..(t + 1) * mu];
            for i in 0..n {
                let v = ds.point(i);
                let out = &mut tuples[i * mu..(i + 1) * mu];
                for (m, slot) in out.iter_mut().enumerate() {
                    let a = &rows[m * d..(m + 1) * d];
                    let dot: f64 = a.iter().zip(v).map(|(x, y)| x * y).sum();
                    *slot = ((dot + offs[m]) / params.r).floor() as i64;
                }
            }
            let tuple = |i: u32| &tuples[i as usize * mu..(i as usize + 1) * mu];
            order.sort_unstable_by(|&a, &b| tuple(a).cmp(tuple(b)).then(a.cmp(&b)));
            let mut keys = Vec::new();
            let mut members: Vec<Vec<u32>> = Vec::new();
            let mut start = 0;
            while start < n {
                let mut end = start + 1;
                while end < n && tuple(order[end]) == tuple(order[start]) {
                    end += 1;
                }
                let id = members.len() as u32;
                let group = order[start..end].to_vec();
                for &i in &group {
                    inverted[i as usize * l + t] = id;
                }
                keys.push(digest(tuple(order[start])));
                members.push(group);
                start = end;
            }
            let dead = vec![0; members.len()];
            tables.push(Table { keys, members, dead });
        }
        Ok(LshIndex {
            params,
            n,
            d,
            proj,
            offsets,
            tables,
            inverted,
            alive: vec![true; n],
            live: n,
        })
    }

    pub fn params(&self) -> LshParams {
        self.params
    }

    /// Number of points the index was built over, removed ones included.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn live_count(&self) -> usize {
        self.live
    }

    pub fn is_indexed(&self, i: usize) -> bool {
        i < self.n && self.alive[i]
    }

    pub fn check_compatible(&self, ds: &DataSet) -> Result<()> {
        if ds.n() != self.n || ds.d() != self.d {
            return Err(AlidError::IndexMismatch {
                index_n: self.n,
                index_d: self.d,
                data_n: ds.n(),
                data_d: ds.d(),
            });
        }
        Ok(())
    }

    fn check(&self, i: usize) -> Result<()> {
        if self.is_indexed(i) {
            Ok(())
        } else {
            Err(AlidError::NotIndexed { index: i })
        }
    }

    /// Hash tuple of an arbitrary vector in table `t`.
    pub fn hash_vector(&self, t: usize, v: &[f64]) -> Vec<i64> {
        let (mu, d) = (self.params.mu, self.d);
        (0..mu)
            .map(|m| {
                let a = &self.proj[(t * mu + m) * d..(t * mu + m + 1) * d];
                let dot: f64 = a.iter().zip(v).map(|(x, y)| x * y).sum();
                ((dot + self.offsets[t * mu + m]) / self.params.r).floor() as i64
            })
            .collect()
    }

    /// Live points sharing at least one bucket with `i`, sorted, without `i`.
    pub fn query(&self, i: usize) -> Result<Vec<usize>> {
        let mut out = self.query_many(&[i])?;
        out.retain(|&j| j != i);
        Ok(out)
    }

    /// Union of the buckets of all `ids`, sorted and deduplicated. Each bucket is
    /// scanned once per table no matter how many query points share it.
    pub fn query_many(&self, ids: &[usize]) -> Result<Vec<usize>> {
        for &i in ids {
            self.check(i)?;
        }
        let l = self.params.l;
        let mut out = Vec::new();
        let mut seen = Vec::with_capacity(ids.len());
        for (t, table) in self.tables.iter().enumerate() {
            seen.clear();
            seen.extend(ids.iter().map(|&i| self.inverted[i * l + t]));
            seen.sort_unstable();
            seen.dedup();
            for &b in &seen {
                out.extend(
                    table.members[b as usize]
                        .iter()
                        .map(|&j| j as usize)
                        .filter(|&j| self.alive[j]),
                );
            }
        }
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    /// Removes points from every query result. Idempotent; unknown ids are ignored.
    pub fn remove_points(&mut self, ids: &[usize]) {
        let l = self.params.l;
        for &i in ids {
            if !self.is_indexed(i) {
                continue;
            }
            self.alive[i] = false;
            self.live -= 1;
            for t in 0..l {
                let b = self.inverted[i * l + t] as usize;
                let table = &mut self.tables[t];
                table.dead[b] += 1;
                if table.dead[b] as usize * 4 > table.members[b].len() {
                    let alive = &self.alive;
                    table.members[b].retain(|&j| alive[j as usize]);
                    table.dead[b] = 0;
                }
            }
        }
    }

    /// Every non-empty bucket with its live size, table-major.
    pub fn bucket_stats(&self) -> Vec<BucketStat> {
        let mut out = Vec::new();
        for (t, table) in self.tables.iter().enumerate() {
            for (b, members) in table.members.iter().enumerate() {
                let size = members.iter().filter(|&&j| self.alive[j as usize]).count();
                if size > 0 {
                    out.push(BucketStat { table: t, bucket: b, key: table.keys[b], size });
                }
            }
        }
        out
    }

    /// Live members of one bucket, ascending.
    pub fn bucket_members(&self, table: usize, bucket: usize) -> Vec<usize> {
        self.tables[table].members[bucket]
            .iter()
            .map(|&j| j as usize)
            .filter(|&j| self.alive[j])
            .collect()
    }

    /// Content hash used to check that shared indexes are not written to.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        self.n.hash(&mut h);
        self.live.hash(&mut h);
        self.alive.hash(&mut h);
        self.inverted.hash(&mut h);
        for t in &self.tables {
            t.keys.hash(&mut h);
            t.members.hash(&mut h);
            t.dead.hash(&mut h);
        }
        for p in &self.proj {
            p.to_bits().hash(&mut h);
        }
        h.finish()
    }

    /// Versioned little-endian dump: header, then live bucket members per table.
    /// Projections are regenerated from the seed on load.
    pub fn save<W: Write>(&self, sink: W) -> Result<()> {
        let mut w = std::io::BufWriter::new(sink);
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.params.mu as u32).to_le_bytes())?;
        w.write_all(&(self.params.l as u32).to_le_bytes())?;
        w.write_all(&self.params.r.to_le_bytes())?;
        w.write_all(&self.params.seed.to_le_bytes())?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&(self.d as u32).to_le_bytes())?;
        for table in &self.tables {
            let live: Vec<(u64, Vec<u32>)> = table
                .keys
                .iter()
                .zip(&table.members)
                .map(|(&k, m)| (k, m.iter().copied().filter(|&j| self.alive[j as usize]).collect::<Vec<_>>()))
                .filter(|(_, m)| !m.is_empty())
                .collect();
            w.write_all(&(live.len() as u64).to_le_bytes())?;
            for (key, members) in live {
                w.write_all(&key.to_le_bytes())?;
                w.write_all(&(members.len() as u32).to_le_bytes())?;
                for j in members {
                    w.write_all(&j.to_le_bytes())?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn load<R: Read>(source: R) -> Result<Self> {
        let mut r = std::io::BufReader::new(source);
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(AlidError::Format("not an index file".into()));
        }
        let version = read_u32(&mut r)?;
        if version != VERSION {
            return Err(AlidError::Format(format!("unsupported index version {version}")));
        }
        let mu = read_u32(&mut r)? as usize;
        let l = read_u32(&mut r)? as usize;
        let rr = f64::from_bits(read_u64(&mut r)?);
        let seed = read_u64(&mut r)?;
        let n = read_u64(&mut r)? as usize;
        let d = read_u32(&mut r)? as usize;
        let params = LshParams { mu, l, r: rr, seed };
        params.validate().map_err(|e| AlidError::Format(e.to_string()))?;
        if n > u32::MAX as usize || d == 0 {
            return Err(AlidError::Format("bad index dimensions".into()));
        }
        let (proj, offsets) = draw_projections(&params, d);
        let mut inverted = vec![u32::MAX; n * l];
        let mut tables = Vec::with_capacity(l);
        for t in 0..l {
            let count = read_u64(&mut r)? as usize;
            let mut keys = Vec::with_capacity(count.min(n));
            let mut members = Vec::with_capacity(count.min(n));
            for b in 0..count {
                keys.push(read_u64(&mut r)?);
                let size = read_u32(&mut r)? as usize;
                if size == 0 || size > n {
                    return Err(AlidError::Format("bad bucket size".into()));
                }
                let mut group = Vec::with_capacity(size);
                for _ in 0..size {
                    let j = read_u32(&mut r)?;
                    let slot = inverted
                        .get_mut(j as usize * l + t)
                        .ok_or_else(|| AlidError::Format(format!("member {j} out of range")))?;
                    if *slot != u32::MAX {
                        return Err(AlidError::Format(format!("point {j} listed twice in table {t}")));
                    }
                    *slot = b as u32;
                    group.push(j);
                }
                members.push(group);
            }
            let dead = vec![0; members.len()];
            tables.push(Table { keys, members, dead });
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(AlidError::Format("trailing bytes after index".into()));
        }
        let mut alive = vec![false; n];
        for i in 0..n {
            let listed = (0..l).filter(|&t| inverted[i * l + t] != u32::MAX).count();
            if listed == l {
                alive[i] = true;
            } else if listed != 0 {
                return Err(AlidError::Format(format!("point {i} missing from some tables")));
            } else {
                inverted[i * l..(i + 1) * l].fill(0);
            }
        }
        let live = alive.iter().filter(|&&a| a).count();
        Ok(LshIndex { params, n, d, proj, offsets, tables, inverted, alive, live })
    }

    pub fn save_path(&self, path: &std::path::Path) -> Result<()> {
        self.save(std::fs::File::create(path)?)
    }

    pub fn load_path(path: &std::path::Path) -> Result<Self> {
        Self::load(std::fs::File::open(path)?)
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| AlidError::Format("truncated index file".into()))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}
