//! Command-line front end: `train`, `acquire`, `reconstruct`, `eval`,
//! `analyze`, `export-lsm`, plus the `make-matrix` and `synth` helpers.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use autobcs::autobcs_net::{load_model, save_model, train, AutoBcsModel, EpochLog};
use autobcs::classic_recon::{reconstruct_image, ReconConfig, ReconMethod};
use autobcs::cli_io::{
    build_dataset, load_directory, load_pgm, save_pgm, synthetic_image, write_analysis_csv, write_epoch_csv,
    write_eval_csv, write_histogram_csv, AnalysisReport, EvalRow, Precision, RunConfig,
};
use autobcs::matrix_analysis::{
    coherence, coherence_rip_bound_check, gaussianity_stats, normalize_columns, rip_constant_exact,
    rip_constant_montecarlo, welch_bound,
};
use autobcs::metrics::{add_image_noise, add_measurement_noise, quality, NoisePlacement};
use autobcs::sensing::{
    acquire_image, make_bernoulli, make_chebyshev, make_gaussian, read_matrix, read_measurements, rows_for_rate,
    write_matrix, write_measurements, ChebyshevConfig, MeasurementSet, SensingMatrix,
};
use autobcs::{Error, GrayImage, Scalar};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "autobcs", version, about = "Block compressive sensing: learned sampling and reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a model from a JSON run config.
    Train(TrainArgs),
    /// Acquire block measurements of an image.
    Acquire(AcquireArgs),
    /// Reconstruct an image with a trained model or a classical solver.
    Reconstruct(ReconstructArgs),
    /// Score reconstructions against ground truth as CSV.
    Eval(EvalArgs),
    /// Coherence, RIP and entry statistics of a sensing matrix.
    Analyze(AnalyzeArgs),
    /// Write a model's learned sampling matrix as a BCSM file.
    ExportLsm(ExportArgs),
    /// Generate a random sensing matrix.
    MakeMatrix(MakeMatrixArgs),
    /// Write seeded synthetic piecewise-smooth PGM images.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides `dataset.source`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Overrides `model_out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `log_out`.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[group(id = "operator", required = true, multiple = false)]
struct Operator {
    /// BCSM sensing matrix.
    #[arg(long, group = "operator")]
    matrix: Option<PathBuf>,
    /// ABCS model; its learned sampling layer acquires.
    #[arg(long, group = "operator")]
    model: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NoiseOn {
    Measurements,
    Image,
}

impl From<NoiseOn> for NoisePlacement {
    fn from(n: NoiseOn) -> Self {
        match n {
            NoiseOn::Measurements => NoisePlacement::Measurements,
            NoiseOn::Image => NoisePlacement::Image,
        }
    }
}

#[derive(Debug, Args)]
struct AcquireArgs {
    #[command(flatten)]
    operator: Operator,
    #[arg(long = "in")]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Gaussian noise standard deviation.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, value_enum, default_value = "measurements")]
    noise_on: NoiseOn,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Method {
    Mmse,
    Iht,
    Irls,
}

impl From<Method> for ReconMethod {
    fn from(m: Method) -> Self {
        match m {
            Method::Mmse => ReconMethod::Mmse,
            Method::Iht => ReconMethod::Iht,
            Method::Irls => ReconMethod::Irls,
        }
    }
}

#[derive(Debug, Args)]
struct SolverArgs {
    /// IHT sparsity per block (DCT domain).
    #[arg(long, default_value_t = ReconConfig::default().sparsity)]
    sparsity: usize,
    /// IRLS regularization weight.
    #[arg(long, default_value_t = ReconConfig::default().lambda)]
    lambda: f64,
    #[arg(long, default_value_t = ReconConfig::default().max_iterations)]
    max_iter: usize,
}

impl SolverArgs {
    fn config(&self) -> ReconConfig {
        ReconConfig {
            sparsity: self.sparsity,
            lambda: self.lambda,
            max_iterations: self.max_iter,
            ..ReconConfig::default()
        }
    }
}

#[derive(Debug, Args)]
#[group(id = "source", required = true, multiple = false)]
struct ReconSource {
    /// Image to acquire and reconstruct.
    #[arg(long = "in", group = "source")]
    input: Option<PathBuf>,
    /// BCSY measurement file.
    #[arg(long, group = "source")]
    measurements: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReconstructArgs {
    #[command(flatten)]
    operator: Operator,
    #[command(flatten)]
    source: ReconSource,
    /// Classical solver; requires --matrix.
    #[arg(long, value_enum)]
    method: Option<Method>,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct EvalArgs {
    /// Ground-truth PGM or a directory of them.
    #[arg(long = "in")]
    input: PathBuf,
    /// Trained models; each contributes `autobcs` and `autobcs-init` rows.
    #[arg(long)]
    model: Vec<PathBuf>,
    /// Sensing matrices for the classical methods.
    #[arg(long)]
    matrix: Vec<PathBuf>,
    /// Classical methods applied with every --matrix.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "mmse")]
    method: Vec<Method>,
    /// Noise levels σ_n.
    #[arg(long, value_delimiter = ',', default_value = "0")]
    noise: Vec<f64>,
    #[arg(long, value_enum, default_value = "measurements")]
    noise_on: NoiseOn,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Debug, Args)]
struct AnalyzeArgs {
    #[arg(long)]
    matrix: PathBuf,
    /// Sparsity order of the RIP estimate.
    #[arg(long, default_value_t = 2)]
    rip_s: usize,
    /// Monte-Carlo supports; 0 enumerates all supports exactly.
    #[arg(long, default_value_t = 1000)]
    mc_trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 50)]
    bins: usize,
    /// Statistics CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Histogram CSV of the matrix entries.
    #[arg(long)]
    hist: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExportArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Kind {
    Gaussian,
    Bernoulli,
    Chebyshev,
}

#[derive(Debug, Args)]
struct MakeMatrixArgs {
    #[arg(long, value_enum, default_value = "gaussian")]
    kind: Kind,
    #[arg(long, default_value_t = 32)]
    block: usize,
    #[arg(long, default_value_t = 0.1)]
    tau: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 192)]
    height: usize,
    #[arg(long, default_value_t = 192)]
    width: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Data(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn run_cli<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Train(a) => cmd_train(a),
        Command::Acquire(a) => cmd_acquire(a),
        Command::Reconstruct(a) => cmd_reconstruct(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Analyze(a) => cmd_analyze(a),
        Command::ExportLsm(a) => cmd_export(a),
        Command::MakeMatrix(a) => cmd_make_matrix(a),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> CliResult<()> {
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

fn load_matrix(path: &Path) -> CliResult<SensingMatrix> {
    Ok(read_matrix(open(path)?).map_err(|e| with_path(e, path))?)
}

fn load_measurements(path: &Path) -> CliResult<MeasurementSet> {
    Ok(read_measurements(open(path)?).map_err(|e| with_path(e, path))?)
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Parse { offset, message } => Error::Parse { offset, message: format!("{}: {message}", path.display()) },
        other => other,
    }
}

/// Inference always runs in f64; stored weights are f32 and widen exactly.
fn open_model(path: &Path) -> CliResult<AutoBcsModel<f64>> {
    Ok(load_model(path).map_err(|e| with_path(e, path))?)
}

fn cmd_train(a: TrainArgs) -> CliResult<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(d) = a.data {
        cfg.dataset.source = d;
    }
    if a.out.is_some() {
        cfg.model_out = a.out;
    }
    if a.log.is_some() {
        cfg.log_out = a.log;
    }
    if cfg.model_out.is_none() {
        return Err(CliError::Usage("no model output: pass --out or set model_out in the config".into()));
    }
    cfg.validate()?;
    match cfg.precision {
        Precision::F32 => train_with::<f32>(&cfg),
        Precision::F64 => train_with::<f64>(&cfg),
    }
}

fn train_with<T: Scalar>(cfg: &RunConfig) -> CliResult<()> {
    let sources = load_directory(&cfg.dataset.source)?;
    let data = build_dataset(&sources, &cfg.dataset)?;
    eprintln!(
        "{} training patches from {} images, {} holdout patches from {} images",
        data.train.len(),
        data.train_sources.len(),
        data.holdout.len(),
        data.holdout_sources.len()
    );
    let mut model = AutoBcsModel::<T>::new(cfg.network.clone(), cfg.model_seed)?;
    model.init_from_data(&data.train)?;
    let mut logs: Vec<EpochLog> = Vec::new();
    train(&mut model, &data.train, &cfg.train, |log| {
        eprintln!(
            "epoch {:>3}  lr {:.0e}  loss {:.6}  (output {:.6}, initial {:.6})",
            log.epoch, log.lr, log.loss, log.loss_output, log.loss_initial
        );
        logs.push(*log);
    })?;
    let out = cfg.model_out.as_ref().expect("checked by caller");
    save_model(out, &mut model)?;
    if let Some(path) = &cfg.log_out {
        let mut w = create(path)?;
        write_epoch_csv(&mut w, &logs)?;
        finish(w, path)?;
    }
    if !data.holdout.is_empty() {
        let (mut init, mut full) = (0.0, 0.0);
        for img in &data.holdout {
            let y = model.measure(img)?;
            init += quality(img, &model.initial_image(&y)?)?.psnr.value();
            full += quality(img, &model.reconstruct_measurements(&y)?)?.psnr.value();
        }
        let n = data.holdout.len() as f64;
        println!("holdout mean PSNR: initial {:.3} dB, full {:.3} dB", init / n, full / n);
    }
    Ok(())
}

fn cmd_acquire(a: AcquireArgs) -> CliResult<()> {
    let mut img = load_pgm(&a.input)?;
    let placement = NoisePlacement::from(a.noise_on);
    if placement == NoisePlacement::Image {
        img = add_image_noise(&img, a.noise, a.seed)?;
    }
    let mut y = match (&a.operator.matrix, &a.operator.model) {
        (Some(m), _) => acquire_image(&load_matrix(m)?, &img)?,
        (_, Some(m)) => open_model(m)?.measure(&img)?,
        _ => unreachable!("clap enforces exactly one operator"),
    };
    if placement == NoisePlacement::Measurements {
        y = add_measurement_noise(&y, a.noise, a.seed)?;
    }
    let mut w = create(&a.out)?;
    write_measurements(&mut w, &y)?;
    finish(w, &a.out)
}

fn cmd_reconstruct(a: ReconstructArgs) -> CliResult<()> {
    let img = match (&a.operator.matrix, &a.operator.model, a.method) {
        (Some(path), None, Some(method)) => {
            let matrix = load_matrix(path)?;
            let y = match (&a.source.input, &a.source.measurements) {
                (Some(i), _) => acquire_image(&matrix, &load_pgm(i)?)?,
                (_, Some(m)) => load_measurements(m)?,
                _ => unreachable!("clap enforces one source"),
            };
            reconstruct_image(method.into(), &matrix, &y, None, &a.solver.config())?
        }
        (Some(_), None, None) => return Err(CliError::Usage("--matrix needs --method mmse|iht|irls".into())),
        (None, Some(path), None) => {
            let model = open_model(path)?;
            match (&a.source.input, &a.source.measurements) {
                (Some(i), _) => model.reconstruct(&load_pgm(i)?)?,
                (_, Some(m)) => model.reconstruct_measurements(&load_measurements(m)?)?,
                _ => unreachable!("clap enforces one source"),
            }
        }
        (None, Some(_), Some(_)) => return Err(CliError::Usage("--method applies to --matrix only".into())),
        _ => unreachable!("clap enforces exactly one operator"),
    };
    save_pgm(&img, &a.out)?;
    Ok(())
}

fn ground_truth(path: &Path) -> CliResult<Vec<(String, GrayImage)>> {
    if path.is_dir() {
        Ok(load_directory(path)?.into_iter().map(|s| (s.name, s.image)).collect())
    } else {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(vec![(name, load_pgm(path)?)])
    }
}

enum Reconstructor {
    Model { label: String, model: AutoBcsModel<f64> },
    Classic { label: String, matrix: SensingMatrix, method: ReconMethod },
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    if a.model.is_empty() && a.matrix.is_empty() {
        return Err(CliError::Usage("eval needs at least one --model or --matrix".into()));
    }
    if let Some(s) = a.noise.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
        return Err(CliError::Usage(format!("noise level {s} must be finite and non-negative")));
    }
    let images = ground_truth(&a.input)?;
    let mut recons = Vec::new();
    for (k, path) in a.model.iter().enumerate() {
        let label = if a.model.len() > 1 { format!("autobcs{k}") } else { "autobcs".into() };
        recons.push(Reconstructor::Model { label, model: open_model(path)? });
    }
    for path in &a.matrix {
        let matrix = load_matrix(path)?;
        let kind = serde_kind(&matrix);
        for &m in &a.method {
            let method = ReconMethod::from(m);
            let label = format!("{kind}-{}", format!("{m:?}").to_lowercase());
            recons.push(Reconstructor::Classic { label, matrix: matrix.clone(), method });
        }
    }
    let cfg = a.solver.config();
    let placement = NoisePlacement::from(a.noise_on);
    let mut rows = Vec::new();
    for (k, (name, img)) in images.iter().enumerate() {
        for &sigma in &a.noise {
            let seed = a.seed.wrapping_add(k as u64);
            let observed = match placement {
                NoisePlacement::Image => add_image_noise(img, sigma, seed)?,
                NoisePlacement::Measurements => img.clone(),
            };
            let noisy = |y: MeasurementSet| -> CliResult<MeasurementSet> {
                Ok(match placement {
                    NoisePlacement::Measurements => add_measurement_noise(&y, sigma, seed)?,
                    NoisePlacement::Image => y,
                })
            };
            for r in &recons {
                match r {
                    Reconstructor::Model { label, model } => {
                        let y = noisy(model.measure(&observed)?)?;
                        let tau = y.tau;
                        for (suffix, out) in
                            [("", model.reconstruct_measurements(&y)?), ("-init", model.initial_image(&y)?)]
                        {
                            rows.push(EvalRow {
                                image: name.clone(),
                                tau,
                                sigma,
                                method: format!("{label}{suffix}"),
                                quality: quality(img, &out)?,
                            });
                        }
                    }
                    Reconstructor::Classic { label, matrix, method } => {
                        let y = noisy(acquire_image(matrix, &observed)?)?;
                        let out = reconstruct_image(*method, matrix, &y, None, &cfg)?;
                        rows.push(EvalRow {
                            image: name.clone(),
                            tau: matrix.sampling_rate(),
                            sigma,
                            method: label.clone(),
                            quality: quality(img, &out)?,
                        });
                    }
                }
            }
        }
    }
    match &a.out {
        Some(path) => {
            let mut w = create(path)?;
            write_eval_csv(&mut w, &rows)?;
            finish(w, path)
        }
        None => Ok(write_eval_csv(&mut std::io::stdout().lock(), &rows)?),
    }
}

fn serde_kind(m: &SensingMatrix) -> String {
    serde_json::to_value(m.kind()).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_else(|| "matrix".into())
}

fn cmd_analyze(a: AnalyzeArgs) -> CliResult<()> {
    let matrix = load_matrix(&a.matrix)?;
    let b = matrix.entries();
    if a.rip_s == 0 || a.rip_s > b.ncols() {
        return Err(CliError::Usage(format!("--rip-s must be in 1..={}", b.ncols())));
    }
    let rip = if a.mc_trials == 0 {
        rip_constant_exact(b, a.rip_s)?
    } else {
        rip_constant_montecarlo(b, a.rip_s, a.mc_trials, a.seed)?
    };
    // The coherence bound needs an exact constant; only attempt it when that is cheap.
    let bound = if a.mc_trials == 0 && a.rip_s >= 2 {
        Some(coherence_rip_bound_check(&normalize_columns(b)?, a.rip_s)?)
    } else {
        None
    };
    let report = AnalysisReport {
        rows: b.nrows(),
        cols: b.ncols(),
        coherence: coherence(b)?,
        welch_bound: welch_bound(b.nrows(), b.ncols()),
        rip: Some(rip),
        bound,
        stats: gaussianity_stats(b, a.bins)?,
    };
    match &a.out {
        Some(path) => {
            let mut w = create(path)?;
            write_analysis_csv(&mut w, &report)?;
            finish(w, path)?;
        }
        None => write_analysis_csv(&mut std::io::stdout().lock(), &report)?,
    }
    if let Some(path) = &a.hist {
        let mut w = create(path)?;
        write_histogram_csv(&mut w, &report.stats.histogram)?;
        finish(w, path)?;
    }
    Ok(())
}

fn cmd_export(a: ExportArgs) -> CliResult<()> {
    let lsm = open_model(&a.model)?.export_lsm()?;
    let mut w = create(&a.out)?;
    write_matrix(&mut w, &lsm)?;
    finish(w, &a.out)
}

fn cmd_make_matrix(a: MakeMatrixArgs) -> CliResult<()> {
    let rows = rows_for_rate(a.tau, a.block)?;
    let m = match a.kind {
        Kind::Gaussian => make_gaussian(rows, a.block, a.seed)?,
        Kind::Bernoulli => make_bernoulli(rows, a.block, a.seed)?,
        Kind::Chebyshev => make_chebyshev(rows, a.block, a.seed, ChebyshevConfig::default())?,
    };
    let mut w = create(&a.out)?;
    write_matrix(&mut w, &m)?;
    finish(w, &a.out)
}

fn cmd_synth(a: SynthArgs) -> CliResult<()> {
    if !a.out_dir.is_dir() {
        std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    }
    for k in 0..a.count {
        let img = synthetic_image(a.height, a.width, a.seed.wrapping_add(k as u64))?;
        save_pgm(&img, &a.out_dir.join(format!("synth_{k:04}.pgm")))?;
    }
    Ok(())
}
