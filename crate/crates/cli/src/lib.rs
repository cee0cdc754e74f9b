//! Argument parsing and command execution behind the `repscore` binary.
//!
//! Exit codes: 0 on success (quarantined grid cells included), 1 when a
//! verification check fails or every grid cell fails, 2 on usage errors.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use repscore::colorspace::PrecTransform;
use repscore::complexity::DEFAULT_THRESHOLD_FACTOR;
use repscore::dataset::store::{self, RepresentationRecord};
use repscore::dataset::{
    make_quadratic_task, make_synthetic_regression, make_texture_classification, split_dataset,
    write_image_dataset, SyntheticSpec, TextureSpec,
};
use repscore::features::{FeatureMode, DEFAULT_STRIDE, DEFAULT_TILE};
use repscore::regression::{VarianceEstimator, DEFAULT_BATCH, DEFAULT_LAMBDA, DEFAULT_RUNS};
use repscore::spectral::DEFAULT_BLOCK;
use repscore::verify::verify_suite;
use repscore::{
    run_grid, Error, FittedRepresentation, GridSpec, RepresentationKind, RidgeConfig, TaskKind,
    ThresholdRule,
};

pub const SEED_ENV: &str = "REPSCORE_SEED";

#[derive(Debug, Parser)]
#[command(name = "repscore", version, about = "Score data representations by how well a linear model can use them")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Worker threads [default: available cores]. Never changes results.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset directory
    Synth(SynthArgs),
    /// Apply or invert a representation over a dataset directory
    Transform(TransformArgs),
    /// Run the (representation x feature mode) grid and write reports
    Analyze(AnalyzeArgs),
    /// Run the self-check suite
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SynthTask {
    /// Linear-Gaussian regression with stored ground truth
    Lemma2,
    /// y = x² + noise under the representations x and x² (writes r1/ and r2/)
    Quadratic,
    /// Grating textures as PNG files plus manifest.csv
    Textures,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, value_enum)]
    pub task: SynthTask,
    /// Input features (lemma2) [default: 10]
    #[arg(long)]
    pub n: Option<usize>,
    /// Outputs (lemma2) [default: 2]
    #[arg(long)]
    pub m: Option<usize>,
    /// Samples [default: 4096 lemma2, 5000 quadratic, 300 textures]
    #[arg(long)]
    pub samples: Option<usize>,
    /// Noise standard deviation [default: 0.1 lemma2, 0.05 quadratic and textures]
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Scale of the AR(1) input covariance (lemma2) [default: 1]
    #[arg(long)]
    pub cov_scale: Option<f64>,
    /// Classes (textures) [default: 3]
    #[arg(long)]
    pub classes: Option<usize>,
    /// Image side length (textures) [default: 32]
    #[arg(long)]
    pub size: Option<usize>,
    /// Channels, 1 or 3 (textures) [default: 3]
    #[arg(long)]
    pub channels: Option<usize>,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TaskKindArg {
    Classification,
    Regression,
}

impl From<TaskKindArg> for TaskKind {
    fn from(k: TaskKindArg) -> Self {
        match k {
            TaskKindArg::Classification => TaskKind::Classification,
            TaskKindArg::Regression => TaskKind::Regression,
        }
    }
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[arg(long, value_parser = parse_rep)]
    pub rep: RepresentationKind,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "1e-8")]
    pub prec_epsilon: f64,
    /// Invert a directory previously written by `transform`
    #[arg(long)]
    pub inverse: bool,
    /// Block size for blockdct
    #[arg(long, default_value_t = DEFAULT_BLOCK)]
    pub block: usize,
    /// How manifest targets are read
    #[arg(long, value_enum, default_value_t = TaskKindArg::Classification)]
    pub task_kind: TaskKindArg,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum VarianceArg {
    /// Divide by the number of runs
    Population,
    /// Divide by the number of runs minus one
    Sample,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_delimiter = ',', value_parser = parse_rep, default_value = "rgb,ycbcr,prec,dct,blockdct")]
    pub reps: Vec<RepresentationKind>,
    #[arg(long, value_delimiter = ',', value_parser = parse_mode, default_value = "dense,conv_tile")]
    pub modes: Vec<FeatureMode>,
    /// Ridge regularization
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    pub lambda: f64,
    /// Source samples per batch
    #[arg(long, default_value_t = DEFAULT_BATCH)]
    pub batch: usize,
    /// Independent batch refits
    #[arg(long, default_value_t = DEFAULT_RUNS)]
    pub runs: usize,
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    /// Absolute train-loss threshold; overrides --threshold-factor
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Threshold as a multiple of the best train loss in each feature mode
    #[arg(long, default_value_t = DEFAULT_THRESHOLD_FACTOR)]
    pub threshold_factor: f64,
    /// Append a constant feature
    #[arg(long)]
    pub bias: bool,
    #[arg(long, value_enum, default_value_t = VarianceArg::Population)]
    pub variance: VarianceArg,
    /// Re-split as train,val,test fractions (seeded); otherwise the stored
    /// split is used, or all samples train
    #[arg(long, value_parser = parse_fractions)]
    pub split: Option<(f64, f64, f64)>,
    /// How manifest targets are read
    #[arg(long, value_enum, default_value_t = TaskKindArg::Classification)]
    pub task_kind: TaskKindArg,
    #[arg(long, default_value_t = DEFAULT_TILE)]
    pub tile: usize,
    #[arg(long, default_value_t = DEFAULT_STRIDE)]
    pub stride: usize,
    #[arg(long, default_value_t = DEFAULT_BLOCK)]
    pub block: usize,
    #[arg(long, default_value = "1e-8")]
    pub prec_epsilon: f64,
    /// Covariance eigenvalue floor for the entropy estimate
    #[arg(long, default_value = "1e-12")]
    pub entropy_floor: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, env = SEED_ENV, default_value_t = 0)]
    pub seed: u64,
    /// Also write the report as JSON
    #[arg(long)]
    pub json: Option<PathBuf>,
}

fn parse_rep(s: &str) -> Result<RepresentationKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<FeatureMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_fractions(s: &str) -> Result<(f64, f64, f64), String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [a, b, c] => Ok((a, b, c)),
        _ => Err(format!("expected three comma-separated fractions, got {}", parts.len())),
    }
}

/// A mistake in how the command was invoked.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(UsageError(msg.into()).into())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exit {
    Success = 0,
    Failure = 1,
    Usage = 2,
}

impl Exit {
    /// Exit status for an error raised while running a command.
    pub fn for_error(err: &anyhow::Error) -> Exit {
        if err.chain().any(|e| e.is::<UsageError>()) {
            return Exit::Usage;
        }
        let core_usage = err.chain().filter_map(|e| e.downcast_ref::<Error>()).any(|e| {
            matches!(
                e,
                Error::UnsupportedPairing { .. }
                    | Error::InvalidConfig(_)
                    | Error::InvalidFractions(_)
                    | Error::InvalidBlock
            )
        });
        if core_usage {
            Exit::Usage
        } else {
            Exit::Failure
        }
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> anyhow::Result<Exit> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs.unwrap_or(0))
        .build()
        .context("building the worker pool")?;
    let mut buf = Vec::new();
    let result = pool.install(|| match cli.command {
        Command::Synth(a) => synth(a, &mut buf),
        Command::Transform(a) => transform(a, &mut buf),
        Command::Analyze(a) => analyze(a, &mut buf),
        Command::Verify(a) => verify(a, &mut buf),
    });
    out.write_all(&buf)?;
    result
}

fn synth(a: SynthArgs, out: &mut Vec<u8>) -> anyhow::Result<Exit> {
    let linear_only = [("--n", a.n.is_some()), ("--m", a.m.is_some()), ("--cov-scale", a.cov_scale.is_some())];
    let texture_only = [("--classes", a.classes.is_some()), ("--size", a.size.is_some()), ("--channels", a.channels.is_some())];
    let mut stray = Vec::new();
    if a.task != SynthTask::Lemma2 {
        stray.extend(linear_only.iter().filter(|(_, given)| *given).map(|(flag, _)| *flag));
    }
    if a.task != SynthTask::Textures {
        stray.extend(texture_only.iter().filter(|(_, given)| *given).map(|(flag, _)| *flag));
    }
    if !stray.is_empty() {
        return usage(format!("{} not used by --task {}", stray.join(", "), task_name(a.task)));
    }

    match a.task {
        SynthTask::Lemma2 => {
            let spec = SyntheticSpec::linear_family(
                a.n.unwrap_or(10),
                a.m.unwrap_or(2),
                a.samples.unwrap_or(4096),
                a.sigma.unwrap_or(0.1),
                a.cov_scale.unwrap_or(1.0),
                a.seed,
            );
            let ds = make_synthetic_regression(&spec)?;
            store::save(&ds, &a.out, None)?;
            writeln!(out, "wrote {} samples ({}→{}) to {}", ds.len(), spec.n_features, spec.m_outputs, a.out.display())?;
        }
        SynthTask::Quadratic => {
            let (r1, r2) = make_quadratic_task(a.samples.unwrap_or(5000), a.sigma.unwrap_or(0.05), a.seed)?;
            store::save(&r1, &a.out.join("r1"), None)?;
            store::save(&r2, &a.out.join("r2"), None)?;
            writeln!(out, "wrote {} samples to {}/r1 and {}/r2", r1.len(), a.out.display(), a.out.display())?;
        }
        SynthTask::Textures => {
            let spec = TextureSpec {
                sample_count: a.samples.unwrap_or(300),
                classes: a.classes.unwrap_or(3),
                size: a.size.unwrap_or(32),
                channels: a.channels.unwrap_or(3),
                noise: a.sigma.unwrap_or(0.05),
                seed: a.seed,
            };
            let ds = make_texture_classification(&spec)?;
            write_image_dataset(&ds, &a.out)?;
            writeln!(out, "wrote {} images in {} classes to {}", ds.len(), spec.classes, a.out.display())?;
        }
    }
    Ok(Exit::Success)
}

fn task_name(t: SynthTask) -> String {
    t.to_possible_value().map(|v| v.get_name().to_string()).unwrap_or_default()
}

const PREC_ARTIFACT: &str = "prec.json";

fn transform(a: TransformArgs, out: &mut Vec<u8>) -> anyhow::Result<Exit> {
    if a.input == a.out {
        return usage("--in and --out must differ");
    }
    let (ds, header) = store::load_any(&a.input, a.task_kind.into())
        .with_context(|| format!("loading {}", a.input.display()))?;
    let (h, w, c) = ds.sample_shape().context("dataset has no samples")?;

    if a.inverse {
        let Some(record) = header.and_then(|h| h.representation) else {
            return usage(format!("{} was not written by `transform`; nothing to invert", a.input.display()));
        };
        if record.kind != a.rep.name() {
            return usage(format!("{} holds the {} representation, not {}", a.input.display(), record.kind, a.rep));
        }
        let fitted = match a.rep {
            RepresentationKind::Prec => {
                let name = record.artifact.as_deref().unwrap_or(PREC_ARTIFACT);
                let path = a.input.join(name);
                let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                FittedRepresentation::Prec(PrecTransform::from_json(&text)?)
            }
            RepresentationKind::Blockdct => FittedRepresentation::BlockDct { block: record.block.unwrap_or(a.block) },
            RepresentationKind::Rgb => FittedRepresentation::Identity,
            RepresentationKind::Ycbcr => FittedRepresentation::Ycbcr,
            RepresentationKind::Dct => FittedRepresentation::Dct,
        };
        let restored = fitted.invert(&ds, (record.original_height, record.original_width))?;
        store::save(&restored, &a.out, None)?;
        writeln!(out, "inverted {} on {} samples into {}", a.rep, restored.len(), a.out.display())?;
        return Ok(Exit::Success);
    }

    if let Some(existing) = header.as_ref().and_then(|h| h.representation.as_ref()) {
        return usage(format!(
            "{} already holds the {} representation; invert it first",
            a.input.display(),
            existing.kind
        ));
    }
    a.rep.check_channels(c).map_err(|e| {
        anyhow::Error::new(e).context(format!(
            "--rep {} on {}: grayscale data is analyzed with rgb, dct and blockdct only",
            a.rep,
            a.input.display()
        ))
    })?;
    let fitted = FittedRepresentation::fit(a.rep, &ds.train_subset()?, a.prec_epsilon, a.block)?;
    let transformed = fitted.apply(&ds)?;
    let mut artifact = None;
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    if let FittedRepresentation::Prec(t) = &fitted {
        let path = a.out.join(PREC_ARTIFACT);
        fs::write(&path, t.to_json()?).with_context(|| format!("writing {}", path.display()))?;
        artifact = Some(PREC_ARTIFACT.to_string());
    }
    let record = RepresentationRecord {
        kind: a.rep.name().to_string(),
        original_height: h,
        original_width: w,
        block: (a.rep == RepresentationKind::Blockdct).then_some(a.block),
        artifact,
    };
    store::save(&transformed, &a.out, Some(record))?;
    writeln!(out, "applied {} to {} samples into {}", a.rep, transformed.len(), a.out.display())?;
    Ok(Exit::Success)
}

fn analyze(a: AnalyzeArgs, out: &mut Vec<u8>) -> anyhow::Result<Exit> {
    let (mut ds, _) = store::load_any(&a.input, a.task_kind.into())
        .with_context(|| format!("loading {}", a.input.display()))?;
    if let Some(fractions) = a.split {
        ds = split_dataset(ds, fractions, a.seed)?;
    }
    let spec = GridSpec {
        representations: a.reps,
        modes: a.modes,
        ridge: RidgeConfig {
            lambda: a.lambda,
            batch_size: a.batch,
            runs: a.runs,
            seed: a.seed,
            bias: a.bias,
            variance: match a.variance {
                VarianceArg::Population => VarianceEstimator::Population,
                VarianceArg::Sample => VarianceEstimator::Sample,
            },
        },
        prec_epsilon: a.prec_epsilon,
        entropy_floor: a.entropy_floor,
        threshold: match a.threshold {
            Some(t) => ThresholdRule::Absolute(t),
            None => ThresholdRule::Relative(a.threshold_factor),
        },
        tile: a.tile,
        stride: a.stride,
        block: a.block,
        jobs: None,
    };
    let grid = run_grid(&ds, &spec)?;
    if grid.cells.is_empty() {
        return usage("every requested representation was rejected for this dataset");
    }
    grid.write_outputs(&a.out)?;
    for r in &grid.rejected {
        writeln!(out, "skipped {}: {}", r.representation, r.reason)?;
    }
    for c in &grid.cells {
        if let Err(e) = &c.result {
            writeln!(out, "cell failed: {e}")?;
        }
    }
    write!(out, "{}", grid.ranking_text())?;
    writeln!(out, "reports written to {}", a.out.display())?;
    if grid.failed_cells() == grid.cells.len() {
        bail!("all {} cells failed", grid.cells.len());
    }
    Ok(Exit::Success)
}

fn verify(a: VerifyArgs, out: &mut Vec<u8>) -> anyhow::Result<Exit> {
    let report = verify_suite(a.seed);
    write!(out, "{}", report.to_text())?;
    if let Some(path) = &a.json {
        write_file(path, &report.to_json()?)?;
    }
    Ok(if report.passed() { Exit::Success } else { Exit::Failure })
}

fn write_file(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
