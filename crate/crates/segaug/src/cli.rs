//! The `segaug` command-line interface.
//!
//! Subcommands: `augment` (seeded batch augmentation of an image directory),
//! `eval` (NAR / Recall@K over run + relevance files), `loss-check` (loss,
//! gradient, and finite-difference report for a batch file), and
//! `sample-batches` (mini-batch lines from a similarity manifest).
//!
//! Option precedence, lowest to highest: built-in defaults, `--preset`,
//! command-line flags, `--config` file entries. `SEGAUG_SEED` supplies the
//! master seed when neither a flag nor the config file sets one.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::augment::{
    augment_image, AugmentationConfig, ManifestEntry, SegmentCountPolicy, TransformKind,
};
use crate::evaluation::{evaluate, MissingPolicy, RankingRun, RecallMode, RelevanceSet};
use crate::image::{load_image, save_image};
use crate::losses::{grad_check, smooth_ap_loss, ScoreBatch, SmoothApParams};
use crate::sampler::{sample_batch, SimilarityManifest};
use crate::seed::{hash64, new_rng};
use crate::segmentation::{label_visualization, segment_image, segment_report, Connectivity};

/// Environment variable consulted when no seed is given explicitly.
pub const SEED_ENV_VAR: &str = "SEGAUG_SEED";

/// `loss-check` exits nonzero above this finite-difference disagreement.
pub const GRADIENT_TOLERANCE: f64 = 1e-4;

/// Manifest filename written into the augment output directory.
pub const MANIFEST_NAME: &str = "manifest.jsonl";

#[derive(Debug, Parser)]
#[command(name = "segaug", version, about = "Segment-level logo augmentation toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Augment every image in a directory, writing outputs plus a manifest
    Augment(AugmentArgs),
    /// Score a retrieval run against ground-truth relevance
    Eval(EvalArgs),
    /// Report loss, gradient, and a finite-difference check for a batch file
    LossCheck(LossCheckArgs),
    /// Emit mini-batch lines sampled from a similarity manifest
    SampleBatches(SampleBatchesArgs),
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Input directory scanned recursively for .png / .ppm images
    #[arg(long = "in", value_name = "DIR")]
    pub in_dir: PathBuf,
    /// Output directory; mirrors the input tree and receives the manifest
    #[arg(long = "out", value_name = "DIR")]
    pub out_dir: PathBuf,
    /// Per-(segment, transform) application probability
    #[arg(long)]
    pub p: Option<f64>,
    /// Segment count policy: "third", "half", or "fixed:K"
    #[arg(long)]
    pub n_policy: Option<String>,
    /// Comma-separated transforms: color_change, rotation, removal
    #[arg(long)]
    pub transforms: Option<String>,
    /// Named transform preset: "smooth-ap" or "triplet"
    #[arg(long)]
    pub preset: Option<String>,
    /// Channel bits dropped before labeling (0-7)
    #[arg(long)]
    pub drop_bits: Option<u8>,
    /// Pixel connectivity: "four" or "eight"
    #[arg(long)]
    pub connectivity: Option<String>,
    /// Minimum segment area eligible for augmentation
    #[arg(long)]
    pub min_area: Option<u32>,
    /// Rotation angle interval in degrees, e.g. "-90,90"
    #[arg(long)]
    pub rotation_range: Option<String>,
    /// Master seed; per-image seeds derive from it and the relative path
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; any value produces byte-identical outputs
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// key=value file overriding the flags above
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Also write per-image label visualizations and segment reports here
    #[arg(long, value_name = "DIR")]
    pub debug_segments: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Run file: "#N=<int>" header, then "query<TAB>doc<TAB>rank" lines
    #[arg(long, value_name = "FILE")]
    pub run: PathBuf,
    /// Relevance file: "query<TAB>doc" lines
    #[arg(long, value_name = "FILE")]
    pub rel: PathBuf,
    /// Comma-separated recall cutoffs
    #[arg(long, default_value = "1,8")]
    pub ks: String,
    /// "hit" (any relevant in top K) or "fraction"
    #[arg(long, default_value = "hit")]
    pub recall_mode: String,
    /// "pessimistic" (missing docs score rank N) or "error"
    #[arg(long, default_value = "pessimistic")]
    pub missing_policy: String,
}

#[derive(Debug, Args)]
pub struct LossCheckArgs {
    /// Batch file: one "score,label" pair per line
    #[arg(long, value_name = "FILE")]
    pub batch: PathBuf,
    /// Sigmoid temperature
    #[arg(long, default_value_t = 0.01)]
    pub tau: f64,
    /// Finite-difference step
    #[arg(long, default_value_t = 1e-5)]
    pub h: f64,
}

#[derive(Debug, Args)]
pub struct SampleBatchesArgs {
    /// Similarity manifest with [group] and [pool] sections
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    /// Total batch size (4 positives + the rest negatives)
    #[arg(long, default_value_t = 256)]
    pub batch_size: usize,
    /// Number of batches to emit
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    /// Sampler seed
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Runs a parsed command; the returned code is the process exit status.
pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Augment(args) => run_augment(&args),
        Command::Eval(args) => run_eval(&args),
        Command::LossCheck(args) => run_loss_check(&args),
        Command::SampleBatches(args) => run_sample_batches(&args),
    }
}

fn env_seed() -> Result<Option<u64>> {
    match std::env::var(SEED_ENV_VAR) {
        Ok(v) => {
            let seed = v
                .trim()
                .parse::<u64>()
                .map_err(|_| anyhow!("{SEED_ENV_VAR}={v:?} is not a u64"))?;
            Ok(Some(seed))
        }
        Err(_) => Ok(None),
    }
}

fn parse_policy(text: &str) -> Result<SegmentCountPolicy> {
    match text {
        "third" | "third_of_l" => Ok(SegmentCountPolicy::ThirdOfEligible),
        "half" | "half_of_l" => Ok(SegmentCountPolicy::HalfOfEligible),
        other => {
            let k = other
                .strip_prefix("fixed:")
                .and_then(|k| k.parse::<usize>().ok())
                .ok_or_else(|| {
                    anyhow!("n-policy must be 'third', 'half', or 'fixed:K', got {other:?}")
                })?;
            Ok(SegmentCountPolicy::Fixed(k))
        }
    }
}

fn parse_transforms(text: &str) -> Result<Vec<TransformKind>> {
    let mut transforms = Vec::new();
    for name in text.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let kind = match name.replace('-', "_").as_str() {
            "color_change" => TransformKind::ColorChange,
            "rotation" => TransformKind::Rotation,
            "removal" => TransformKind::Removal,
            other => bail!("unknown transform {other:?}"),
        };
        if !transforms.contains(&kind) {
            transforms.push(kind);
        }
    }
    if transforms.is_empty() {
        bail!("transform list is empty");
    }
    Ok(transforms)
}

fn parse_connectivity(text: &str) -> Result<Connectivity> {
    match text {
        "four" | "4" => Ok(Connectivity::Four),
        "eight" | "8" => Ok(Connectivity::Eight),
        other => bail!("connectivity must be 'four' or 'eight', got {other:?}"),
    }
}

fn parse_rotation_range(text: &str) -> Result<(f64, f64)> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        bail!("rotation range must be 'lo,hi', got {text:?}");
    }
    let lo: f64 = parts[0].parse().context("rotation range low bound")?;
    let hi: f64 = parts[1].parse().context("rotation range high bound")?;
    Ok((lo, hi))
}

fn preset_transforms(name: &str) -> Result<Vec<TransformKind>> {
    match name {
        // best single transform for the ranking-loss setup
        "smooth-ap" => Ok(vec![TransformKind::ColorChange]),
        // color change + removal is the strongest pairing for triplet training
        "triplet" => Ok(vec![TransformKind::ColorChange, TransformKind::Removal]),
        other => bail!("unknown preset {other:?} (expected 'smooth-ap' or 'triplet')"),
    }
}

/// Raw augmentation options before precedence resolution.
#[derive(Debug, Default, Clone)]
struct AugmentOverrides {
    p: Option<f64>,
    n_policy: Option<String>,
    transforms: Option<String>,
    preset: Option<String>,
    drop_bits: Option<u8>,
    connectivity: Option<String>,
    min_area: Option<u32>,
    rotation_range: Option<String>,
    seed: Option<u64>,
    jobs: Option<usize>,
}

impl AugmentOverrides {
    fn from_flags(args: &AugmentArgs) -> Self {
        Self {
            p: args.p,
            n_policy: args.n_policy.clone(),
            transforms: args.transforms.clone(),
            preset: args.preset.clone(),
            drop_bits: args.drop_bits,
            connectivity: args.connectivity.clone(),
            min_area: args.min_area,
            rotation_range: args.rotation_range.clone(),
            seed: args.seed,
            jobs: Some(args.jobs),
        }
    }

    /// Applies `key=value` config lines on top; the file wins over flags.
    fn overlay_config(&mut self, path: &Path) -> Result<()> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("config line {}: expected key=value, got {line:?}", i + 1))?;
            let (key, value) = (key.trim(), value.trim());
            let ctx = || format!("config line {}: bad value for {key}", i + 1);
            match key {
                "p" => self.p = Some(value.parse().with_context(ctx)?),
                "n_policy" => self.n_policy = Some(value.to_string()),
                "transforms" => self.transforms = Some(value.to_string()),
                "preset" => self.preset = Some(value.to_string()),
                "drop_bits" => self.drop_bits = Some(value.parse().with_context(ctx)?),
                "connectivity" => self.connectivity = Some(value.to_string()),
                "min_area" => self.min_area = Some(value.parse().with_context(ctx)?),
                "rotation_range" => self.rotation_range = Some(value.to_string()),
                "seed" => self.seed = Some(value.parse().with_context(ctx)?),
                "jobs" => self.jobs = Some(value.parse().with_context(ctx)?),
                other => bail!("config line {}: unknown key {other:?}", i + 1),
            }
        }
        Ok(())
    }

    fn resolve(&self) -> Result<(AugmentationConfig, usize)> {
        let mut config = AugmentationConfig::default();
        if let Some(preset) = &self.preset {
            config.transforms = preset_transforms(preset)?;
        }
        if let Some(p) = self.p {
            config.p = p;
        }
        if let Some(policy) = &self.n_policy {
            config.n_policy = parse_policy(policy)?;
        }
        if let Some(transforms) = &self.transforms {
            config.transforms = parse_transforms(transforms)?;
        }
        if let Some(bits) = self.drop_bits {
            config.drop_bits = bits;
        }
        if let Some(conn) = &self.connectivity {
            config.connectivity = parse_connectivity(conn)?;
        }
        if let Some(area) = self.min_area {
            config.min_area = area;
        }
        if let Some(range) = &self.rotation_range {
            config.rotation_range_deg = parse_rotation_range(range)?;
        }
        config.seed = match self.seed {
            Some(seed) => seed,
            None => env_seed()?.unwrap_or(0),
        };
        config.validate().map_err(|e| anyhow!(e))?;
        let jobs = self.jobs.unwrap_or(1).max(1);
        Ok((config, jobs))
    }
}

fn is_supported_image(path: &Path) -> bool {
    matches!(
        path.extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref(),
        Some("png") | Some("ppm")
    )
}

/// Relative path with `/` separators, used both on disk and as the seed key.
fn rel_key(rel: &Path) -> String {
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

fn run_augment(args: &AugmentArgs) -> Result<i32> {
    let mut overrides = AugmentOverrides::from_flags(args);
    if let Some(config_path) = &args.config {
        overrides.overlay_config(config_path)?;
    }
    let (base_config, jobs) = overrides.resolve()?;

    let mut rel_paths: Vec<PathBuf> = walkdir::WalkDir::new(&args.in_dir)
        .sort_by_file_name()
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .with_context(|| format!("walking {}", args.in_dir.display()))?
        .into_iter()
        .filter(|e| e.file_type().is_file() && is_supported_image(e.path()))
        .map(|e| {
            e.path()
                .strip_prefix(&args.in_dir)
                .expect("walked entries live under in_dir")
                .to_path_buf()
        })
        .collect();
    rel_paths.sort();

    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .context("building worker pool")?;
    let results: Vec<(String, Result<ManifestEntry>)> = pool.install(|| {
        rel_paths
            .par_iter()
            .map(|rel| {
                let key = rel_key(rel);
                let entry = process_one(args, &base_config, rel, &key);
                (key, entry)
            })
            .collect()
    });

    let manifest_path = args.out_dir.join(MANIFEST_NAME);
    let mut manifest = fs::File::create(&manifest_path)
        .with_context(|| format!("creating {}", manifest_path.display()))?;
    let mut failures = 0usize;
    let mut written = 0usize;
    for (key, result) in &results {
        match result {
            Ok(entry) => {
                let line = serde_json::to_string(entry).context("encoding manifest line")?;
                writeln!(manifest, "{line}")?;
                written += 1;
            }
            Err(error) => {
                eprintln!("error: {key}: {error:#}");
                failures += 1;
            }
        }
    }
    println!(
        "augmented {written}/{} images into {} ({failures} failed)",
        results.len(),
        args.out_dir.display()
    );
    Ok(if failures == 0 { 0 } else { 1 })
}

fn process_one(
    args: &AugmentArgs,
    base_config: &AugmentationConfig,
    rel: &Path,
    key: &str,
) -> Result<ManifestEntry> {
    let src_path = args.in_dir.join(rel);
    let dst_path = args.out_dir.join(rel);
    let image = load_image(&src_path)?;
    let config = AugmentationConfig {
        seed: hash64(base_config.seed, key),
        ..base_config.clone()
    };
    let (output, mut record) = augment_image(&image, &config)?;
    record.source = key.to_string();
    if let Some(parent) = dst_path.parent() {
        fs::create_dir_all(parent)?;
    }
    save_image(&output, &dst_path)?;

    if let Some(debug_dir) = &args.debug_segments {
        let map = segment_image(&image, config.drop_bits, config.connectivity);
        let base = debug_dir.join(rel);
        if let Some(parent) = base.parent() {
            fs::create_dir_all(parent)?;
        }
        save_image(&label_visualization(&map), base.with_extension("labels.png"))?;
        fs::write(base.with_extension("segments.txt"), segment_report(&map))?;
    }

    // src/dst are directory-relative so manifests do not depend on where the
    // corpus lives
    Ok(ManifestEntry::new(key.to_string(), key.to_string(), &record))
}

fn run_eval(args: &EvalArgs) -> Result<i32> {
    let run_text = fs::read_to_string(&args.run)
        .with_context(|| format!("reading run file {}", args.run.display()))?;
    let rel_text = fs::read_to_string(&args.rel)
        .with_context(|| format!("reading relevance file {}", args.rel.display()))?;
    let run = RankingRun::parse(&run_text)
        .with_context(|| format!("parsing run file {}", args.run.display()))?;
    let rel = RelevanceSet::parse(&rel_text)
        .with_context(|| format!("parsing relevance file {}", args.rel.display()))?;
    let ks: Vec<usize> = args
        .ks
        .split(',')
        .map(|k| k.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|_| anyhow!("--ks must be comma-separated integers, got {:?}", args.ks))?;
    let mode = match args.recall_mode.as_str() {
        "hit" => RecallMode::Hit,
        "fraction" => RecallMode::Fraction,
        other => bail!("--recall-mode must be 'hit' or 'fraction', got {other:?}"),
    };
    let policy = match args.missing_policy.as_str() {
        "pessimistic" => MissingPolicy::Pessimistic,
        "error" => MissingPolicy::Error,
        other => bail!("--missing-policy must be 'pessimistic' or 'error', got {other:?}"),
    };
    let report = evaluate(&run, &rel, &ks, mode, policy)?;
    print!("{}", report.render());
    Ok(0)
}

fn parse_batch_file(text: &str) -> Result<ScoreBatch> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line
            .split(|c: char| c == ',' || c.is_whitespace())
            .filter(|s| !s.is_empty())
            .collect();
        if fields.len() != 2 {
            bail!("batch line {}: expected 'score, label', got {line:?}", i + 1);
        }
        let score: f64 = fields[0]
            .parse()
            .map_err(|_| anyhow!("batch line {}: bad score {:?}", i + 1, fields[0]))?;
        let label = match fields[1] {
            "0" => false,
            "1" => true,
            other => bail!("batch line {}: label must be 0 or 1, got {other:?}", i + 1),
        };
        scores.push(score);
        labels.push(label);
    }
    ScoreBatch::new(scores, labels).map_err(|e| anyhow!(e))
}

fn run_loss_check(args: &LossCheckArgs) -> Result<i32> {
    let text = fs::read_to_string(&args.batch)
        .with_context(|| format!("reading batch file {}", args.batch.display()))?;
    let batch = parse_batch_file(&text)?;
    let params = SmoothApParams { tau: args.tau };
    let (loss, grad) = smooth_ap_loss(&batch, &params)?;
    let labels = batch.labels().to_vec();
    let check = move |scores: &[f64]| {
        let batch = ScoreBatch::new(scores.to_vec(), labels.clone())?;
        smooth_ap_loss(&batch, &params)
    };
    let max_rel = grad_check(check, batch.scores(), args.h)?;
    println!("items={} positives={}", batch.len(), batch.positive_count());
    println!("tau={} h={}", args.tau, args.h);
    println!("loss={loss:.12}");
    let grad_text: Vec<String> = grad.iter().map(|g| format!("{g:.12e}")).collect();
    println!("grad=[{}]", grad_text.join(", "));
    println!("max_fd_rel_err={max_rel:.6e}");
    let pass = max_rel <= GRADIENT_TOLERANCE;
    println!("status={}", if pass { "pass" } else { "fail" });
    Ok(if pass { 0 } else { 1 })
}

fn run_sample_batches(args: &SampleBatchesArgs) -> Result<i32> {
    let text = fs::read_to_string(&args.manifest)
        .with_context(|| format!("reading manifest {}", args.manifest.display()))?;
    let manifest = SimilarityManifest::parse(&text)?;
    let seed = match args.seed {
        Some(seed) => seed,
        None => env_seed()?.unwrap_or(0),
    };
    let mut rng = new_rng(seed);
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for _ in 0..args.count {
        let spec = sample_batch(&manifest, args.batch_size, &mut rng)?;
        writeln!(out, "{}", spec.render_line())?;
    }
    Ok(0)
}

/// Splits manifest text into parsed entries; used by tests and tooling.
pub fn read_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).context("parsing manifest line"))
        .collect()
}
