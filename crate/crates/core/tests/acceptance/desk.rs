//! Criteria sharing one desk-scale model: training (7), learned-matrix
//! analysis (8) and the noise sweep (9).

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use autobcs::autobcs_net::{train, AutoBcsModel, NetworkConfig, TrainConfig, DEFAULT_RATES};
use autobcs::classic_recon::{
    estimate_autocorrelation, reconstruct_image, AutocorrelationModel, ReconConfig, ReconMethod,
};
use autobcs::cli_io::{build_dataset, synthetic_image, write_histogram_csv, DatasetSpec, Source};
use autobcs::matrix_analysis::{gaussianity_stats, rip_constant_montecarlo};
use autobcs::metrics::{add_measurement_noise, psnr};
use autobcs::sensing::{acquire_image, block_partition, make_gaussian, SensingMatrix};
use autobcs::GrayImage;

use super::{e, ensure, Check};

pub const TRAIN_LIMIT: Duration = Duration::from_secs(30 * 60);

const SOURCES: u64 = 60;
const SOURCE_SIZE: usize = 192;
const PATCHES_PER_SOURCE: usize = 10;
const EPOCHS: usize = 60;
const BATCH: usize = 4;
const LINEAR_LR_SCALE: f64 = 0.01;
const MODEL_SEED: u64 = 7;
const GAUSSIAN_SEED: u64 = 8;

const MIN_GAIN_OVER_INITIAL: f64 = 1.5;
const MIN_GAIN_OVER_GAUSSIAN: f64 = 2.0;
const OVERFIT_STEPS: usize = 2000;
const OVERFIT_PSNR: f64 = 40.0;
const RIP_RATIO: f64 = 2.0;
const RIP_TRIALS: usize = 2000;
const LSM_SLACK_DB: f64 = 0.2;
const NOISE_LEVELS: [f64; 4] = [0.0, 0.02, 0.05, 0.1];
const NOISE_SLACK_DB: f64 = 0.1;

fn network() -> NetworkConfig {
    NetworkConfig { block_size: 32, tau: 0.1, base_width: 8, depth: 2, octave_ratio: 0.5 }
}

struct Desk {
    model: AutoBcsModel<f32>,
    train: Vec<GrayImage>,
    holdout: Vec<GrayImage>,
    /// Block autocorrelation of the training patches.
    rho: AutocorrelationModel,
    initial_lsm: SensingMatrix,
    train_time: Duration,
    final_loss: f64,
}

static DESK: OnceLock<Result<Desk, String>> = OnceLock::new();

fn desk() -> Result<&'static Desk, String> {
    DESK.get_or_init(build).as_ref().map_err(Clone::clone)
}

/// Trains the shared model if no criterion has yet, so a criterion's own
/// time limit excludes training.
pub fn prepare() {
    let _ = desk();
}

/// 500 training and 100 holdout 96x96 patches from 60 synthetic 192x192 scenes,
/// split by scene.
fn build() -> Result<Desk, String> {
    let sources: Vec<Source> = (0..SOURCES)
        .map(|k| {
            synthetic_image(SOURCE_SIZE, SOURCE_SIZE, 1000 + k).map(|image| Source { name: format!("scene{k}"), image })
        })
        .collect::<Result<_, _>>()
        .map_err(e)?;
    let spec = DatasetSpec { patches_per_image: PATCHES_PER_SOURCE, holdout_fraction: 1.0 / 6.0, ..Default::default() };
    let data = build_dataset(&sources, &spec).map_err(e)?;
    ensure(data.train.len() == 500 && data.holdout.len() == 100, || {
        format!("dataset has {} training and {} holdout patches", data.train.len(), data.holdout.len())
    })?;

    let start = Instant::now();
    let mut model = AutoBcsModel::<f32>::new(network(), MODEL_SEED).map_err(e)?;
    model.init_from_data(&data.train).map_err(e)?;
    let initial_lsm = model.export_lsm().map_err(e)?;
    let mut cfg = TrainConfig::with_thirds(EPOCHS, BATCH, DEFAULT_RATES, 3);
    cfg.linear_lr_scale = LINEAR_LR_SCALE;
    let report = train(&mut model, &data.train, &cfg, |_| {}).map_err(e)?;
    let train_time = start.elapsed();

    let mut blocks = Vec::new();
    for p in &data.train {
        blocks.extend(block_partition(p, 32).map_err(e)?.blocks);
    }
    let rho = estimate_autocorrelation(&blocks, 32).map_err(e)?;
    Ok(Desk {
        model,
        train: data.train,
        holdout: data.holdout,
        rho,
        initial_lsm,
        train_time,
        final_loss: report.epochs.last().map_or(f64::NAN, |l| l.loss),
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn classic_psnr(matrix: &SensingMatrix, method: ReconMethod, d: &Desk) -> Result<f64, String> {
    let cfg = ReconConfig::default();
    let mut out = Vec::new();
    for img in &d.holdout {
        let y = acquire_image(matrix, img).map_err(e)?;
        let rec = reconstruct_image(method, matrix, &y, Some(&d.rho), &cfg).map_err(e)?;
        out.push(psnr(img, &rec).map_err(e)?.value());
    }
    Ok(mean(&out))
}

fn gaussian(d: &Desk) -> Result<SensingMatrix, String> {
    make_gaussian(d.model.measurements(), 32, GAUSSIAN_SEED).map_err(e)
}

/// Criterion 7: trained pipeline against its own initial reconstruction and
/// against a fixed Gaussian matrix with MMSE, plus a single-patch overfit.
pub fn training() -> Check {
    let d = desk()?;
    let (mut initial, mut full) = (Vec::new(), Vec::new());
    for img in &d.holdout {
        let y = d.model.measure(img).map_err(e)?;
        initial.push(psnr(img, &d.model.initial_image(&y).map_err(e)?).map_err(e)?.value());
        full.push(psnr(img, &d.model.reconstruct_measurements(&y).map_err(e)?).map_err(e)?.value());
    }
    let (initial, full) = (mean(&initial), mean(&full));
    let baseline = classic_psnr(&gaussian(d)?, ReconMethod::Mmse, d)?;
    let overfit = overfit()?;
    let detail = format!(
        "trained in {:.0}s (final loss {:.4}); holdout full {full:.2} dB, initial {initial:.2} dB (+{:.2}), \
         Gaussian+MMSE {baseline:.2} dB (+{:.2}); single-patch overfit {overfit:.2} dB",
        d.train_time.as_secs_f64(),
        d.final_loss,
        full - initial,
        full - baseline
    );
    ensure(full - initial >= MIN_GAIN_OVER_INITIAL, || format!("(a) failed: {detail}"))?;
    ensure(full - baseline >= MIN_GAIN_OVER_GAUSSIAN, || format!("(b) failed: {detail}"))?;
    ensure(overfit > OVERFIT_PSNR, || format!("(c) failed: {detail}"))?;
    Ok(detail)
}

/// PSNR on one training patch after fitting the whole network to it alone.
fn overfit() -> Result<f64, String> {
    let d = desk()?;
    let patch = d.train[0].clone();
    let mut model = AutoBcsModel::<f32>::new(network(), MODEL_SEED).map_err(e)?;
    model.init_from_data(&d.train).map_err(e)?;
    let cfg = TrainConfig::constant(OVERFIT_STEPS, 1, 1e-3, 0);
    train(&mut model, std::slice::from_ref(&patch), &cfg, |_| {}).map_err(e)?;
    Ok(psnr(&patch, &model.reconstruct(&patch).map_err(e)?).map_err(e)?.value())
}

/// Criterion 8: histogram export, restricted isometry against a Gaussian
/// matrix of the same shape, and classical reconstruction with the learned matrix.
pub fn lsm_analysis() -> Check {
    let d = desk()?;
    let lsm = d.model.export_lsm().map_err(e)?;
    let g = gaussian(d)?;

    let dir = tempfile::tempdir().map_err(e)?;
    let path = dir.path().join("lsm_hist.csv");
    let stats = gaussianity_stats(lsm.entries(), 50).map_err(e)?;
    let mut file = std::fs::File::create(&path).map_err(e)?;
    write_histogram_csv(&mut file, &stats.histogram).map_err(e)?;
    drop(file);
    let csv = std::fs::read_to_string(&path).map_err(e)?;
    let rows = csv.lines().count();
    ensure(csv.starts_with("bin_lo,bin_hi,count") && rows == 51, || format!("histogram CSV has {rows} lines"))?;

    let d_lsm = rip_constant_montecarlo(lsm.entries(), 2, RIP_TRIALS, 1).map_err(e)?.delta;
    let d_gauss = rip_constant_montecarlo(g.entries(), 2, RIP_TRIALS, 1).map_err(e)?.delta;
    let ratio = d_lsm / d_gauss;

    let drift = (lsm.entries() - d.initial_lsm.entries()).norm() / d.initial_lsm.entries().norm();
    let mut detail = format!(
        "δ_2 LSM {d_lsm:.3} vs Gaussian {d_gauss:.3} (ratio {ratio:.2}); LSM moved {:.1}% from its initialization",
        100.0 * drift
    );
    ensure((1.0 / RIP_RATIO..=RIP_RATIO).contains(&ratio), || format!("δ_2 ratio outside 2x: {detail}"))?;

    for method in [ReconMethod::Mmse, ReconMethod::Iht] {
        let p_lsm = classic_psnr(&lsm, method, d)?;
        let p_gauss = classic_psnr(&g, method, d)?;
        detail.push_str(&format!("; {method:?} LSM {p_lsm:.2} dB vs Gaussian {p_gauss:.2} dB"));
        ensure(p_lsm >= p_gauss - LSM_SLACK_DB, || format!("{method:?} below Gaussian: {detail}"))?;
    }
    Ok(detail)
}

/// Criterion 9: holdout PSNR under measurement noise of increasing strength.
pub fn noise_trend() -> Check {
    let d = desk()?;
    let mut means = Vec::new();
    for (k, &sigma) in NOISE_LEVELS.iter().enumerate() {
        let mut v = Vec::new();
        for (i, img) in d.holdout.iter().enumerate() {
            let y = d.model.measure(img).map_err(e)?;
            let y = add_measurement_noise(&y, sigma, 100 * k as u64 + i as u64).map_err(e)?;
            v.push(psnr(img, &d.model.reconstruct_measurements(&y).map_err(e)?).map_err(e)?.value());
        }
        means.push(mean(&v));
    }
    let detail =
        NOISE_LEVELS.iter().zip(&means).map(|(s, p)| format!("σ={s}: {p:.2} dB")).collect::<Vec<_>>().join(", ");
    ensure(means.windows(2).all(|w| w[1] <= w[0] + NOISE_SLACK_DB), || format!("PSNR rises with noise: {detail}"))?;
    Ok(detail)
}
