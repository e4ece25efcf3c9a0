//! The `alid` command line: generate data, build and persist an index, run
//! sequential or parallel detection, evaluate, and benchmark.
//!
//! Data goes to files or standard output. Messages go to standard error, and
//! every run ends with one JSON summary line there.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::affinity::{load_path, save_path, CountingSource, DataSet, KernelParams};
use crate::alid::{auto_k, filter_clusters, peel_all_observed, AlidConfig, ClusterLine, ClusterResult};
use crate::error::{AlidError, Result};
use crate::lsh::{LshIndex, LshParams};
use crate::palid::{build_tasklist, run_palid};
use crate::synth_eval::mem::PeakAlloc;
use crate::synth_eval::{generate, scaling_bench, BenchOptions, EvalReport, GroundTruth, Regime, SynthSpec};

#[derive(Debug, Parser)]
#[command(name = "alid", version, about = "Dominant cluster detection with localized infection immunization dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample a synthetic Gaussian-mixture data set with ground truth.
    Generate(GenerateArgs),
    /// Build an LSH index over a data file.
    Index(IndexArgs),
    /// Peel dominant clusters one after another.
    Detect(DetectArgs),
    /// Detect clusters from sampled seeds on a worker pool.
    Palid(PalidArgs),
    /// Score detected clusters against ground truth.
    Eval(EvalArgs),
    /// Run a scaling benchmark over a grid of sizes.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum RegimeName {
    Prop,
    Sub,
    Cap,
}

#[derive(Debug, Args)]
struct RegimeArgs {
    #[arg(long, value_enum)]
    regime: RegimeName,
    #[arg(long, default_value_t = 1.0)]
    omega: f64,
    #[arg(long, default_value_t = 0.9)]
    eta: f64,
    #[arg(long, default_value_t = 1000)]
    cap: usize,
}

impl RegimeArgs {
    fn regime(&self) -> Regime {
        match self.regime {
            RegimeName::Prop => Regime::Proportional(self.omega),
            RegimeName::Sub => Regime::Sublinear(self.eta),
            RegimeName::Cap => Regime::Capped(self.cap),
        }
    }
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[command(flatten)]
    regime: RegimeArgs,
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Vector file; `.csv` for text, anything else for binary.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    truth: PathBuf,
}

#[derive(Debug, Args)]
struct IndexArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = 40)]
    mu: usize,
    #[arg(long, default_value_t = 50)]
    tables: usize,
    /// Segment width.
    #[arg(long)]
    r: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    index: PathBuf,
    /// Kernel scale, or `auto` for the inverse median pairwise distance.
    #[arg(long, default_value = "auto")]
    k: String,
    /// Minkowski exponent of the distance.
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    /// Base settings in TOML; explicit flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "C")]
    rounds: Option<usize>,
    #[arg(long)]
    delta: Option<usize>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long = "bootstrap-r")]
    bootstrap_r: Option<f64>,
    /// Print every outer round as a JSON line on standard error.
    #[arg(long)]
    trace: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct PalidArgs {
    #[command(flatten)]
    detect: DetectArgs,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long = "sample-rate", default_value_t = 0.2)]
    sample_rate: f64,
    #[arg(long = "min-bucket", default_value_t = 5)]
    min_bucket: usize,
    /// Seed for sampling the task list.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    assign: PathBuf,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    truth: PathBuf,
    #[arg(long)]
    clusters: PathBuf,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    regime: RegimeArgs,
    /// Comma-separated sizes, e.g. `2e3,4e3,8e3`.
    #[arg(long)]
    grid: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long = "lsh-seed", default_value_t = 0)]
    lsh_seed: u64,
    #[arg(long, default_value_t = 1)]
    reps: usize,
    /// CSV destination (standard output when absent). The full report goes
    /// next to it with a `.json` extension.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure of a subcommand, split by exit code.
enum Failure {
    Usage(String),
    Data(AlidError),
}

impl From<AlidError> for Failure {
    fn from(e: AlidError) -> Self {
        match e {
            AlidError::InvalidConfig(_) | AlidError::InvalidKernel { .. } | AlidError::InfeasibleSpec(_) => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Data(other),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.into())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Data(e.into())
    }
}

type Outcome = std::result::Result<Value, Failure>;

/// Runs the command line in `argv` (program name first) and returns the exit
/// code: 0 on success, 1 on usage errors, 2 on data errors.
pub fn run<I, T>(argv: I, alloc: Option<&PeakAlloc>) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            summary("none", code, json!({}), None);
            return code;
        }
    };
    let started = Instant::now();
    let (name, outcome) = match &cli.command {
        Command::Generate(a) => ("generate", cmd_generate(a)),
        Command::Index(a) => ("index", cmd_index(a)),
        Command::Detect(a) => ("detect", cmd_detect(a)),
        Command::Palid(a) => ("palid", cmd_palid(a)),
        Command::Eval(a) => ("eval", cmd_eval(a)),
        Command::Bench(a) => ("bench", cmd_bench(a, alloc)),
    };
    let total_s = started.elapsed().as_secs_f64();
    match outcome {
        Ok(mut info) => {
            info["timings"]["total_s"] = json!(total_s);
            summary(name, 0, info, None);
            0
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("alid {name}: {msg}");
            summary(name, 1, json!({}), Some(msg));
            1
        }
        Err(Failure::Data(e)) => {
            eprintln!("alid {name}: {e}");
            summary(name, 2, json!({}), Some(e.to_string()));
            2
        }
    }
}

fn summary(command: &str, code: i32, mut info: Value, error: Option<String>) {
    info["command"] = json!(command);
    info["exit_code"] = json!(code);
    if let Some(msg) = error {
        info["error"] = json!(msg);
    }
    eprintln!("{info}");
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn cmd_generate(a: &GenerateArgs) -> Outcome {
    let spec = SynthSpec::new(a.regime.regime(), a.n, a.seed);
    let t = Instant::now();
    let (ds, truth) = generate(&spec)?;
    let gen_s = t.elapsed().as_secs_f64();
    save_path(&ds, &a.out)?;
    truth.save_path(&a.truth)?;
    Ok(json!({
        "config": spec,
        "kernel": truth.suggested_kernel(),
        "scale": truth.scale,
        "noise": truth.noise_count(),
        "timings": { "generate_s": gen_s },
    }))
}

fn cmd_index(a: &IndexArgs) -> Outcome {
    let params = LshParams { mu: a.mu, l: a.tables, r: a.r, seed: a.seed };
    params.validate()?;
    let ds = load_path(&a.data, KernelParams::default())?;
    let t = Instant::now();
    let index = LshIndex::build(&ds, params)?;
    let build_s = t.elapsed().as_secs_f64();
    index.save_path(&a.out)?;
    Ok(json!({
        "config": params,
        "n": ds.n(),
        "d": ds.d(),
        "timings": { "build_s": build_s },
    }))
}

/// Settings shared by `detect` and `palid`, resolved and validated before the
/// data is touched.
struct Resolved {
    cfg: AlidConfig,
    k: Option<f64>,
    p: f64,
}

fn resolve(a: &DetectArgs) -> std::result::Result<Resolved, Failure> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            toml::from_str::<AlidConfig>(&text)
                .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?
        }
        None => AlidConfig::default(),
    };
    if let Some(c) = a.rounds {
        cfg.max_rounds = c;
    }
    if let Some(d) = a.delta {
        cfg.civs.delta = d;
    }
    if let Some(t) = a.threshold {
        cfg.density_threshold = t;
    }
    if let Some(b) = a.bootstrap_r {
        cfg.bootstrap_radius = b;
    }
    let k = if a.k == "auto" {
        None
    } else {
        let k: f64 = a
            .k
            .parse()
            .map_err(|_| Failure::Usage(format!("--k expects a number or `auto`, got {:?}", a.k)))?;
        KernelParams::new(k, a.p)?;
        Some(k)
    };
    KernelParams::new(1.0, a.p)?;
    cfg.validate()?;
    Ok(Resolved { cfg, k, p: a.p })
}

/// Loads data and index, fixing the kernel and adopting the index's LSH
/// parameters.
fn load_inputs(a: &DetectArgs, r: &mut Resolved) -> Result<(DataSet, LshIndex, f64)> {
    let ds = load_path(&a.data, KernelParams::new(1.0, r.p)?)?;
    let index = LshIndex::load_path(&a.index)?;
    index.check_compatible(&ds)?;
    let k = match r.k {
        Some(k) => k,
        None => auto_k(&ds),
    };
    let ds = ds.with_kernel(KernelParams::new(k, r.p)?)?;
    r.cfg.lsh = index.params();
    Ok((ds, index, k))
}

fn write_clusters(path: &Path, clusters: &[ClusterResult]) -> Result<()> {
    let mut w = create(path)?;
    for c in clusters {
        serde_json::to_writer(&mut w, &c.to_line())?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_clusters(path: &Path) -> Result<Vec<ClusterResult>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (no, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: ClusterLine = serde_json::from_str(&line)
            .map_err(|e| AlidError::Format(format!("{} line {}: {e}", path.display(), no + 1)))?;
        out.push(ClusterResult::from_line(parsed)?);
    }
    Ok(out)
}

fn cmd_detect(a: &DetectArgs) -> Outcome {
    let mut r = resolve(a)?;
    let (ds, mut index, k) = load_inputs(a, &mut r)?;
    let src = CountingSource::new(&ds);
    let t = Instant::now();
    let trace = a.trace;
    let all = peel_all_observed(&src, &mut index, &r.cfg, &mut |seed, round| {
        if trace {
            eprintln!("{}", json!({ "seed": seed, "round": round }));
        }
    })?;
    let detect_s = t.elapsed().as_secs_f64();
    let peeled = all.len();
    let clusters = filter_clusters(all, r.cfg.density_threshold);
    write_clusters(&a.out, &clusters)?;
    Ok(json!({
        "config": r.cfg,
        "k": k,
        "p": r.p,
        "clusters": clusters.len(),
        "peeled": peeled,
        "kernel_evals": src.evaluations(),
        "timings": { "detect_s": detect_s },
    }))
}

fn cmd_palid(a: &PalidArgs) -> Outcome {
    if a.workers == 0 {
        return Err(Failure::Usage("--workers must be at least 1".into()));
    }
    if !(a.sample_rate > 0.0 && a.sample_rate <= 1.0) {
        return Err(Failure::Usage(format!("--sample-rate {} must lie in (0, 1]", a.sample_rate)));
    }
    let mut r = resolve(&a.detect)?;
    let (ds, index, k) = load_inputs(&a.detect, &mut r)?;
    let t = Instant::now();
    let tasks = build_tasklist(&index, a.sample_rate, a.min_bucket, a.seed)?;
    let out = run_palid(&ds, &index, &r.cfg, a.workers, &tasks)?;
    let palid_s = t.elapsed().as_secs_f64();
    for f in &out.failures {
        eprintln!("alid palid: task for seed {} failed: {}", f.seed, f.message);
    }
    write_clusters(&a.detect.out, &out.clusters)?;
    let mut w = create(&a.assign)?;
    w.write_all(out.assignment.to_jsonl().as_bytes())?;
    w.flush()?;
    Ok(json!({
        "config": r.cfg,
        "k": k,
        "p": r.p,
        "workers": a.workers,
        "sample_rate": a.sample_rate,
        "min_bucket": a.min_bucket,
        "seed": a.seed,
        "tasks": tasks.seeds.len(),
        "failures": out.failures.len(),
        "clusters": out.clusters.len(),
        "assigned": out.assignment.entries.len(),
        "timings": { "palid_s": palid_s },
    }))
}

fn cmd_eval(a: &EvalArgs) -> Outcome {
    let truth = GroundTruth::load_path(&a.truth)?;
    let clusters = read_clusters(&a.clusters)?;
    for c in &clusters {
        c.members.check_indices(truth.n)?;
    }
    let report = EvalReport::quality(&truth, &clusters);
    println!("{}", serde_json::to_string(&report)?);
    Ok(json!({ "avg_f": report.avg_f, "clusters": clusters.len(), "timings": {} }))
}

fn parse_grid(text: &str) -> std::result::Result<Vec<usize>, Failure> {
    text.split(',')
        .map(|tok| {
            let v: f64 = tok
                .trim()
                .parse()
                .map_err(|_| Failure::Usage(format!("--grid: cannot parse {tok:?}")))?;
            if !(v >= 1.0 && v.fract() == 0.0 && v < usize::MAX as f64) {
                return Err(Failure::Usage(format!("--grid: {tok:?} is not a positive integer")));
            }
            Ok(v as usize)
        })
        .collect()
}

fn cmd_bench(a: &BenchArgs, alloc: Option<&PeakAlloc>) -> Outcome {
    let grid = parse_grid(&a.grid)?;
    let regime = a.regime.regime();
    if grid.len() < 2 || grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Failure::Usage("--grid needs at least two increasing sizes".into()));
    }
    for &n in &grid {
        regime.cluster_size(n, SynthSpec::new(regime, n, a.seed).clusters)?;
    }
    let opts = BenchOptions { data_seed: a.seed, lsh_seed: a.lsh_seed, reps: a.reps.max(1) };
    let report = scaling_bench(regime, &grid, &opts, alloc, |row| {
        eprintln!("{}", json!({ "bench_row": row }));
    })?;
    match &a.out {
        Some(path) => {
            let mut w = create(path)?;
            crate::synth_eval::bench::write_csv(&report, &mut w)?;
            w.flush()?;
            let mut side = create(&path.with_extension("json"))?;
            serde_json::to_writer_pretty(&mut side, &report)?;
            side.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            crate::synth_eval::bench::write_csv(&report, stdout.lock())?;
        }
    }
    Ok(json!({
        "config": { "regime": regime, "grid": grid, "data_seed": a.seed, "lsh_seed": a.lsh_seed, "reps": opts.reps },
        "runtime_slope": report.runtime_slope,
        "memory_slope": report.memory_slope,
        "memory_method": report.memory_method,
        "timings": { "runtime_s": report.rows.iter().map(|r| r.runtime_s).collect::<Vec<_>>() },
    }))
}
