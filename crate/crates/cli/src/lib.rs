//! Implementation of the `tpursuit` command line tool.
//!
//! Each subcommand writes its bulk output to files and prints one JSON
//! record to stdout. Failures map to fixed exit codes: 2 usage, 3 I/O,
//! 4 shape, 5 numerical.

pub mod pnm;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

use tpursuit_core::io::{load_mask, load_tensor, save_tensor};
use tpursuit_core::pursuit::{self, check_rate, metrics_csv, PursuitConfig, Variant};
use tpursuit_core::trip::{sample_rank_r_unit, scaling_study, TripStudyConfig};
use tpursuit_core::tsvd::tubal_rank_default;
use tpursuit_core::{Dims, Ensemble, MeasurementMap, SamplingMask, Scalar, Tensor, Tensor3};

use crate::pnm::{Image, Kind, PnmError};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_SHAPE: i32 = 4;
pub const EXIT_NUMERICAL: i32 = 5;

#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: msg.into(),
        }
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_SHAPE,
            message: msg.into(),
        }
    }
}

impl From<tpursuit_core::Error> for CliError {
    fn from(e: tpursuit_core::Error) -> Self {
        use tpursuit_core::Error as E;
        let code = match &e {
            E::Io(_) | E::Format(_) | E::NonFinite(_) => EXIT_IO,
            E::ShapeMismatch(_) | E::InvalidMask(_) => EXIT_SHAPE,
            E::NumericalFailure(_)
            | E::NonNegligibleImaginaryPart(_)
            | E::RankDeficientMap
            | E::DivergenceDetected { .. } => EXIT_NUMERICAL,
            E::RankOutOfRange { .. } | E::EmptyMask | E::MapTooLarge { .. } | E::InvalidArgument(_) => {
                EXIT_USAGE
            }
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self {
            code: EXIT_IO,
            message: e.to_string(),
        }
    }
}

impl From<PnmError> for CliError {
    fn from(e: PnmError) -> Self {
        Self {
            code: EXIT_IO,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "tpursuit", version, about = "Greedy low-tubal-rank tensor completion and sensing")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a random tensor of exact tubal rank.
    Synth(SynthArgs),
    /// Complete a tensor from a subset of its entries.
    Complete(CompleteArgs),
    /// Recover a tensor from dense random measurements.
    Sense(SenseArgs),
    /// Estimate restricted isometry constants over a grid of measurement counts.
    Trip(TripArgs),
    /// Stack PGM frames or one PPM image into a tensor.
    Ingest(IngestArgs),
    /// Write a tensor's frontal slices as images.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum VariantArg {
    Standard,
    Economic,
}

impl From<VariantArg> for Variant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Standard => Variant::Standard,
            VariantArg::Economic => Variant::Economic,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EnsembleArg {
    Gaussian,
    Rademacher,
    Identity,
}

impl From<EnsembleArg> for Ensemble {
    fn from(e: EnsembleArg) -> Self {
        match e {
            EnsembleArg::Gaussian => Ensemble::Gaussian,
            EnsembleArg::Rademacher => Ensemble::Rademacher,
            EnsembleArg::Identity => Ensemble::Identity,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FrameFormat {
    Pgm,
    Ppm,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub dims: Dims,
    #[arg(long)]
    pub rank: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PursuitArgs {
    /// Target tubal rank.
    #[arg(long)]
    pub rank: usize,
    /// Atoms added per iteration.
    #[arg(long, default_value_t = 1)]
    pub batch: usize,
    #[arg(long, value_enum, default_value_t = VariantArg::Economic)]
    pub variant: VariantArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Early stop once the residual falls below this fraction of the first.
    #[arg(long, default_value_t = 1e-12)]
    pub residual_tol: f64,
    /// Reconstruction output (.t3b).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-iteration metrics CSV.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Write measured wall times into the metrics CSV instead of zeros.
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Args)]
pub struct CompleteArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Observed entries (.msk); overrides --missing.
    #[arg(long, conflicts_with = "missing")]
    pub mask: Option<PathBuf>,
    /// Fraction of entries to hide, drawn with --seed.
    #[arg(long)]
    pub missing: Option<f64>,
    /// Standard deviation of additive noise relative to max |entry|.
    #[arg(long, default_value_t = 0.0)]
    pub noise_sigma: f64,
    #[command(flatten)]
    pub pursuit: PursuitArgs,
}

#[derive(Debug, Args)]
pub struct SenseArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = EnsembleArg::Gaussian)]
    pub ensemble: EnsembleArg,
    /// Number of measurements; defaults to the entry count for identity.
    #[arg(long)]
    pub m: Option<usize>,
    #[command(flatten)]
    pub pursuit: PursuitArgs,
}

#[derive(Debug, Args)]
pub struct TripArgs {
    #[arg(long)]
    pub dims: Dims,
    #[arg(long)]
    pub rank: usize,
    #[arg(long, value_delimiter = ',', required = true)]
    pub m_grid: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    pub samples: usize,
    #[arg(long, default_value_t = 20)]
    pub trials: usize,
    #[arg(long, value_enum, default_value_t = EnsembleArg::Gaussian)]
    pub ensemble: EnsembleArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Study CSV.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// PGM frames in order, one PPM image, or a directory of either.
    #[arg(long = "in", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = FrameFormat::Pgm)]
    pub format: FrameFormat,
}

/// JSON line printed by every command.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub command: &'static str,
    pub config: Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub baseline_rmse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate_bound_holds: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual_curve: Option<String>,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub extra: Value,
    /// Informational only; excluded from reproducibility comparisons.
    pub wall_ms: f64,
}

impl RunRecord {
    fn new(command: &'static str, config: Value) -> Self {
        Self {
            command,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            rmse: None,
            baseline_rmse: None,
            iterations: None,
            converged: None,
            rate_bound_holds: None,
            residual_curve: None,
            extra: Value::Null,
            wall_ms: 0.0,
        }
    }
}

/// `sqrt(|X - Y|² / (n1 n2 n3))`.
pub fn rmse<T: Scalar>(x: &Tensor3<T>, y: &Tensor3<T>) -> tpursuit_core::Result<f64> {
    let d = x.sub(y)?;
    Ok((d.norm_sqr().as_f64() / x.dims().numel() as f64).sqrt())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

/// Runs one parsed command and prints its record to `stdout`.
pub fn execute(cli: Cli, stdout: &mut dyn Write) -> CliResult<()> {
    let started = Instant::now();
    let mut record = match cli.command {
        Command::Synth(a) => synth(a)?,
        Command::Complete(a) => complete(a)?,
        Command::Sense(a) => sense(a)?,
        Command::Trip(a) => trip(a)?,
        Command::Ingest(a) => ingest(a)?,
        Command::Export(a) => export(a)?,
    };
    record.wall_ms = started.elapsed().as_secs_f64() * 1e3;
    let line = serde_json::to_string(&record).map_err(|e| CliError {
        code: EXIT_IO,
        message: e.to_string(),
    })?;
    writeln!(stdout, "{line}")?;
    Ok(())
}

fn synth(a: SynthArgs) -> CliResult<RunRecord> {
    let max = a.dims.min_side();
    if a.rank == 0 || a.rank > max {
        return Err(CliError::usage(format!("rank {} outside 1..={max}", a.rank)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
    let unit: Tensor = sample_rank_r_unit(a.dims, a.rank, &mut rng)?;
    // entries end up with root-mean-square between 1 and 2
    let magnitude = rng.random_range(1.0..2.0) * (a.dims.numel() as f64).sqrt();
    let y = unit.scale(magnitude);
    save_tensor(&a.out, &y)?;
    let mut rec = RunRecord::new(
        "synth",
        json!({"dims": a.dims.to_string(), "rank": a.rank, "seed": a.seed}),
    );
    rec.outputs.push(display(&a.out));
    rec.extra = json!({"tubal_rank": tubal_rank_default(&y)?, "frobenius_norm": y.frobenius_norm()});
    Ok(rec)
}

fn pursuit_config(p: &PursuitArgs) -> PursuitConfig {
    let mut cfg = PursuitConfig::new(p.rank, p.batch, p.variant.into());
    cfg.residual_tol = p.residual_tol;
    cfg.seed = p.seed;
    cfg
}

fn pursuit_echo(p: &PursuitArgs) -> Value {
    json!({
        "rank": p.rank,
        "batch": p.batch,
        "variant": Variant::from(p.variant).name(),
        "seed": p.seed,
        "residual_tol": p.residual_tol,
    })
}

/// Runs the pursuit and fills the shared part of the record.
fn solve_and_report(
    rec: &mut RunRecord,
    y: &Tensor,
    phi: &MeasurementMap<f64>,
    b: &DVector<f64>,
    p: &PursuitArgs,
) -> CliResult<Tensor> {
    let res = pursuit::run(b, phi, &pursuit_config(p))?;
    rec.rmse = Some(rmse(&res.estimate, y)?);
    rec.iterations = Some(res.iterations);
    rec.converged = Some(res.converged);
    rec.rate_bound_holds = Some(check_rate(&res, res.residual_norms[0]));
    if let Some(out) = &p.out {
        save_tensor(out, &res.estimate)?;
        rec.outputs.push(display(out));
    }
    if let Some(path) = &p.metrics {
        fs::write(path, metrics_csv(&res.history, p.timings))?;
        rec.outputs.push(display(path));
        rec.residual_curve = Some(display(path));
    }
    let (first, last) = (res.residual_norms[0], *res.residual_norms.last().unwrap_or(&0.0));
    rec.extra = json!({"initial_residual": first, "final_residual": last});
    Ok(res.estimate)
}

fn complete(a: CompleteArgs) -> CliResult<RunRecord> {
    let y: Tensor = load_tensor(&a.input)?;
    let dims = y.dims();
    let mut inputs = vec![display(&a.input)];
    let (mask, missing) = match (&a.mask, a.missing) {
        (Some(path), _) => {
            let m = load_mask(path)?;
            if m.dims() != dims {
                return Err(CliError::shape(format!(
                    "mask is for {} tensors, input is {dims}",
                    m.dims()
                )));
            }
            inputs.push(display(path));
            (m, None)
        }
        (None, ratio) => {
            let r = ratio.unwrap_or(0.5);
            if !(0.0..1.0).contains(&r) {
                return Err(CliError::usage(format!("missing ratio {r} outside [0, 1)")));
            }
            (SamplingMask::random(dims, r, a.pursuit.seed)?, Some(r))
        }
    };
    if !a.noise_sigma.is_finite() || a.noise_sigma < 0.0 {
        return Err(CliError::usage("noise sigma must be a nonnegative number"));
    }
    let phi = MeasurementMap::sampling(mask);
    let mut b = phi.apply(&y)?;
    if a.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(a.pursuit.seed);
        rng.set_stream(2);
        let scale = a.noise_sigma * y.max_abs();
        for v in b.iter_mut() {
            *v += scale * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let mut config = pursuit_echo(&a.pursuit);
    config["missing"] = json!(missing);
    config["observed"] = json!(phi.m());
    config["noise_sigma"] = json!(a.noise_sigma);
    let mut rec = RunRecord::new("complete", config);
    rec.inputs = inputs;
    solve_and_report(&mut rec, &y, &phi, &b, &a.pursuit)?;
    let zero_filled = phi.pinv_apply(&b)?;
    rec.baseline_rmse = Some(rmse(&zero_filled, &y)?);
    Ok(rec)
}

fn sense(a: SenseArgs) -> CliResult<RunRecord> {
    let y: Tensor = load_tensor(&a.input)?;
    let dims = y.dims();
    let ensemble = Ensemble::from(a.ensemble);
    let m = match (a.m, ensemble) {
        (Some(m), _) => m,
        (None, Ensemble::Identity) => dims.numel(),
        (None, _) => return Err(CliError::usage("--m is required for random ensembles")),
    };
    if m == 0 {
        return Err(CliError::usage("--m must be positive"));
    }
    let phi = MeasurementMap::<f64>::from_ensemble(ensemble, m, dims, a.pursuit.seed)?;
    let b = phi.apply(&y)?;
    let mut config = pursuit_echo(&a.pursuit);
    config["ensemble"] = json!(ensemble.name());
    config["m"] = json!(m);
    let mut rec = RunRecord::new("sense", config);
    rec.inputs.push(display(&a.input));
    solve_and_report(&mut rec, &y, &phi, &b, &a.pursuit)?;
    Ok(rec)
}

fn trip(a: TripArgs) -> CliResult<RunRecord> {
    let cfg = TripStudyConfig {
        dims: a.dims,
        rank: a.rank,
        n_samples: a.samples,
        m_grid: a.m_grid.clone(),
        trials: a.trials,
        ensemble: a.ensemble.into(),
        seed: a.seed,
    };
    if cfg.ensemble == Ensemble::Identity && a.m_grid.iter().any(|&m| m != a.dims.numel()) {
        return Err(CliError::usage("the identity ensemble needs m equal to the entry count"));
    }
    let table = scaling_study::<f64>(&cfg)?;
    fs::write(&a.out, table.to_csv())?;
    let mut rec = RunRecord::new(
        "trip",
        json!({
            "dims": a.dims.to_string(),
            "rank": a.rank,
            "m_grid": a.m_grid,
            "samples": a.samples,
            "trials": a.trials,
            "ensemble": cfg.ensemble.name(),
            "seed": a.seed,
        }),
    );
    rec.outputs.push(display(&a.out));
    rec.extra = json!({
        "dimension_count": cfg.dimension_count(),
        "slope": table.log_log_slope(),
        "inversions": table.inversions(),
        "medians": table.rows.iter().map(|r| r.median).collect::<Vec<_>>(),
    });
    Ok(rec)
}

fn is_image(p: &Path) -> bool {
    matches!(
        p.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()),
        Some(ref e) if e == "pgm" || e == "ppm"
    )
}

fn expand_inputs(inputs: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = fs::read_dir(p)?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            found.retain(|f| f.is_file() && is_image(f));
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        return Err(CliError::usage("no PGM or PPM files found"));
    }
    Ok(files)
}

/// Frames to `height x width x frames`; one colour image to
/// `height x width x 3` with the channel planes as frontal slices.
pub fn images_to_tensor(images: &[Image]) -> CliResult<Tensor> {
    let first = images
        .first()
        .ok_or_else(|| CliError::usage("no images given"))?;
    if images.iter().any(|i| i.kind == Kind::Rgb) {
        if images.len() != 1 {
            return Err(CliError::usage("a colour image must be ingested on its own"));
        }
        let d = Dims::new(first.height, first.width, 3)?;
        return Ok(Tensor::from_fn(d, |i, j, k| first.at(i, j, k)));
    }
    for img in images {
        if (img.width, img.height) != (first.width, first.height) {
            return Err(CliError::shape(format!(
                "frame of {}x{} differs from {}x{}",
                img.width, img.height, first.width, first.height
            )));
        }
    }
    let d = Dims::new(first.height, first.width, images.len())?;
    Ok(Tensor::from_fn(d, |i, j, k| images[k].at(i, j, 0)))
}

fn ingest(a: IngestArgs) -> CliResult<RunRecord> {
    let files = expand_inputs(&a.inputs)?;
    let images = files
        .iter()
        .map(|f| {
            let bytes = fs::read(f)?;
            pnm::decode(&bytes).map_err(|e| CliError {
                code: EXIT_IO,
                message: format!("{}: {e}", f.display()),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let t = images_to_tensor(&images)?;
    save_tensor(&a.out, &t)?;
    let mut rec = RunRecord::new("ingest", json!({}));
    rec.inputs = files.iter().map(|f| display(f)).collect();
    rec.outputs.push(display(&a.out));
    rec.extra = json!({"dims": t.dims().to_string()});
    Ok(rec)
}

fn export(a: ExportArgs) -> CliResult<RunRecord> {
    let t: Tensor = load_tensor(&a.input)?;
    let Dims { n1, n2, n3 } = t.dims();
    fs::create_dir_all(&a.out)?;
    let mut outputs = Vec::new();
    match a.format {
        FrameFormat::Pgm => {
            for k in 0..n3 {
                let img = Image {
                    kind: Kind::Gray,
                    width: n2,
                    height: n1,
                    samples: (0..n1 * n2).map(|p| t.get(p / n2, p % n2, k)).collect(),
                };
                let path = a.out.join(format!("frame_{k:04}.pgm"));
                pnm::encode(std::io::BufWriter::new(fs::File::create(&path)?), &img)?;
                outputs.push(display(&path));
            }
        }
        FrameFormat::Ppm => {
            if n3 != 3 {
                return Err(CliError::shape(format!("a colour image needs 3 slices, found {n3}")));
            }
            let img = Image {
                kind: Kind::Rgb,
                width: n2,
                height: n1,
                samples: (0..n1 * n2 * 3)
                    .map(|q| t.get(q / 3 / n2, (q / 3) % n2, q % 3))
                    .collect(),
            };
            let path = a.out.join("image.ppm");
            pnm::encode(std::io::BufWriter::new(fs::File::create(&path)?), &img)?;
            outputs.push(display(&path));
        }
    }
    let mut rec = RunRecord::new("export", json!({"format": format!("{:?}", a.format).to_lowercase()}));
    rec.inputs.push(display(&a.input));
    rec.outputs = outputs;
    Ok(rec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rmse_basics() {
        let d = Dims::new(2, 3, 2).unwrap();
        let x = Tensor::from_fn(d, |i, j, k| (i + 2 * j + 5 * k) as f64);
        assert_eq!(rmse(&x, &x).unwrap(), 0.0);
        let y = Tensor::from_fn(d, |i, j, k| x.get(i, j, k) + 1.0);
        assert!((rmse(&x, &y).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rmse_matches_naive_loop() {
        let d = Dims::new(3, 2, 4).unwrap();
        let x = Tensor::from_fn(d, |i, j, k| ((i * 7 + j * 3 + k) % 5) as f64 - 2.0);
        let y = Tensor::from_fn(d, |i, j, k| (i as f64 - j as f64) * 0.5 + k as f64);
        let mut acc = 0.0;
        for k in 0..4 {
            for j in 0..2 {
                for i in 0..3 {
                    acc += (x.get(i, j, k) - y.get(i, j, k)).powi(2);
                }
            }
        }
        assert!((rmse(&x, &y).unwrap() - (acc / 24.0).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn exit_codes() {
        use tpursuit_core::Error as E;
        assert_eq!(CliError::from(E::EmptyMask).code, EXIT_USAGE);
        assert_eq!(CliError::from(E::Format("x".into())).code, EXIT_IO);
        assert_eq!(CliError::from(E::ShapeMismatch("x".into())).code, EXIT_SHAPE);
        assert_eq!(CliError::from(E::RankDeficientMap).code, EXIT_NUMERICAL);
    }

    #[test]
    fn colour_image_maps_channels_to_slices() {
        let img = Image {
            kind: Kind::Rgb,
            width: 2,
            height: 2,
            samples: (0..12).map(|v| v as f64).collect(),
        };
        let t = images_to_tensor(&[img]).unwrap();
        assert_eq!(t.dims(), Dims::new(2, 2, 3).unwrap());
        // pixel (1, 0) is the third pixel, channel 2 is its last sample
        assert_eq!(t.get(1, 0, 2), 8.0);
    }
}
