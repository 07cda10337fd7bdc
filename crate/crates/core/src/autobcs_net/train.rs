use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{half_mse, AutoBcsModel};
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::scalar::Scalar;
use crate::tensor::{AdamConfig, AdamState, Tensor4};

/// Constant learning rate over an inclusive, 1-based epoch range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrPhase {
    pub first_epoch: usize,
    pub last_epoch: usize,
    pub lr: f64,
}

/// Missing fields deserialize to the defaults; an empty or missing
/// `schedule` means [`DEFAULT_RATES`] over epoch thirds (see
/// [`TrainConfig::fill_schedule`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default)]
    pub schedule: Vec<LrPhase>,
    #[serde(default)]
    pub seed: u64,
    /// Weight of the initial-reconstruction loss in `L + λ_int·L_int`.
    #[serde(default = "default_lambda")]
    pub lambda_init: f64,
    /// Learning-rate multiplier for the sampling and initial-reconstruction
    /// layers relative to the U-net.
    #[serde(default = "default_linear_scale")]
    pub linear_lr_scale: f64,
}

pub const DEFAULT_RATES: [f64; 3] = [1e-3, 1e-4, 1e-5];

fn default_epochs() -> usize {
    60
}

fn default_batch() -> usize {
    16
}

fn default_lambda() -> f64 {
    1.0
}

fn default_linear_scale() -> f64 {
    1.0
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::with_thirds(default_epochs(), default_batch(), DEFAULT_RATES, 0)
    }
}

impl TrainConfig {
    /// `epochs` split into three near-equal phases with the given rates.
    pub fn with_thirds(epochs: usize, batch_size: usize, rates: [f64; 3], seed: u64) -> Self {
        let cut1 = epochs.div_ceil(3);
        let cut2 = (2 * epochs).div_ceil(3);
        let mut schedule = Vec::new();
        let mut start = 1;
        for (end, lr) in [cut1, cut2, epochs].into_iter().zip(rates) {
            if end >= start {
                schedule.push(LrPhase { first_epoch: start, last_epoch: end, lr });
                start = end + 1;
            }
        }
        TrainConfig { epochs, batch_size, schedule, seed, lambda_init: 1.0, linear_lr_scale: default_linear_scale() }
    }

    /// Single constant learning rate.
    pub fn constant(epochs: usize, batch_size: usize, lr: f64, seed: u64) -> Self {
        TrainConfig {
            epochs,
            batch_size,
            schedule: vec![LrPhase { first_epoch: 1, last_epoch: epochs, lr }],
            seed,
            lambda_init: 1.0,
            linear_lr_scale: default_linear_scale(),
        }
    }

    /// Replaces an empty schedule by [`DEFAULT_RATES`] over epoch thirds.
    pub fn fill_schedule(&mut self) {
        if self.schedule.is_empty() {
            self.schedule = Self::with_thirds(self.epochs, self.batch_size, DEFAULT_RATES, self.seed).schedule;
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be positive".into()));
        }
        if !(self.lambda_init >= 0.0) {
            return Err(Error::Config("lambda_init must be non-negative".into()));
        }
        if !(self.linear_lr_scale >= 0.0) || !self.linear_lr_scale.is_finite() {
            return Err(Error::Config("linear_lr_scale must be finite and non-negative".into()));
        }
        let mut next = 1;
        for p in &self.schedule {
            if p.first_epoch != next || p.last_epoch < p.first_epoch {
                return Err(Error::Config(format!(
                    "schedule phase {}..={} does not continue from epoch {next}",
                    p.first_epoch, p.last_epoch
                )));
            }
            if !(p.lr > 0.0) || !p.lr.is_finite() {
                return Err(Error::Config(format!("learning rate {} must be positive", p.lr)));
            }
            next = p.last_epoch + 1;
        }
        if next != self.epochs + 1 {
            return Err(Error::Config(format!("schedule covers epochs 1..{next}, expected 1..={}", self.epochs)));
        }
        Ok(())
    }

    pub fn lr_for_epoch(&self, epoch: usize) -> Option<f64> {
        self.schedule.iter().find(|p| (p.first_epoch..=p.last_epoch).contains(&epoch)).map(|p| p.lr)
    }
}

/// Mean losses over one epoch's minibatches.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    /// `L + λ_int·L_int`.
    pub loss: f64,
    pub loss_output: f64,
    pub loss_initial: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochLog>,
    pub steps: u64,
}

/// Minibatch Adam on `L + λ_int·L_int`.
///
/// Samples are processed one at a time with gradients accumulated in fixed
/// order, so a run is fully determined by the config seed. `on_epoch` sees
/// every epoch's log as it completes.
pub fn train<T: Scalar>(
    model: &mut AutoBcsModel<T>,
    patches: &[GrayImage],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainReport> {
    cfg.validate()?;
    if patches.is_empty() {
        return Err(Error::arg("no training patches"));
    }
    let tensors: Vec<Tensor4<T>> = patches.iter().map(|p| p.to_tensor()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::<T>::new(AdamConfig::default());
    let mut order: Vec<usize> = (0..tensors.len()).collect();
    let mut report = TrainReport::default();
    let lambda = T::from_f64_lossy(cfg.lambda_init);

    for epoch in 1..=cfg.epochs {
        let lr = cfg.lr_for_epoch(epoch).expect("validated schedule covers every epoch");
        order.shuffle(&mut rng);
        let (mut sum_out, mut sum_init, mut batches) = (0.0, 0.0, 0usize);
        for batch in order.chunks(cfg.batch_size) {
            model.zero_grad();
            let scale = T::one() / T::from_f64_lossy(batch.len() as f64);
            let (mut l_out, mut l_init) = (0.0, 0.0);
            for &i in batch {
                let x = &tensors[i];
                let out = model.forward(x)?;
                l_out += half_mse(&out.output, x)?;
                l_init += half_mse(&out.initial, x)?;
                let mut d_out = out.output.sub(x)?;
                d_out.scale(scale);
                let mut d_init = out.initial.sub(x)?;
                d_init.scale(scale * lambda);
                model.backward(&d_out, &d_init)?;
            }
            let n = batch.len() as f64;
            let (l_out, l_init) = (l_out / n, l_init / n);
            if !(l_out + cfg.lambda_init * l_init).is_finite() {
                return Err(Error::NonFiniteLoss { step: report.steps as usize, lr, param_norm: model.param_norm() });
            }
            let lr_of = |name: &str| if name.starts_with("unet.") { lr } else { lr * cfg.linear_lr_scale };
            adam.update_with(&lr_of, |f| model.visit_params(f))?;
            report.steps += 1;
            sum_out += l_out;
            sum_init += l_init;
            batches += 1;
        }
        let b = batches as f64;
        let log = EpochLog {
            epoch,
            lr,
            loss: (sum_out + cfg.lambda_init * sum_init) / b,
            loss_output: sum_out / b,
            loss_initial: sum_init / b,
        };
        on_epoch(&log);
        report.epochs.push(log);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autobcs_net::NetworkConfig;
    use rand::Rng;

    fn tiny() -> NetworkConfig {
        NetworkConfig { block_size: 4, tau: 0.25, base_width: 2, depth: 1, octave_ratio: 0.5 }
    }

    fn patches(n: usize, seed: u64) -> Vec<GrayImage> {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let (a, b) = (r.gen_range(0.0..0.5), r.gen_range(0.0..0.5));
                GrayImage::from_fn(8, 8, |y, x| (a + b * ((x + y) as f64 / 14.0)).min(1.0)).unwrap()
            })
            .collect()
    }

    #[test]
    fn schedule_validation() {
        let c = TrainConfig::with_thirds(60, 16, [1e-3, 1e-4, 1e-5], 0);
        c.validate().unwrap();
        assert_eq!(c.lr_for_epoch(20), Some(1e-3));
        assert_eq!(c.lr_for_epoch(21), Some(1e-4));
        assert_eq!(c.lr_for_epoch(60), Some(1e-5));
        assert_eq!(c.lr_for_epoch(61), None);
        TrainConfig::with_thirds(2, 1, [1e-3, 1e-4, 1e-5], 0).validate().unwrap();
        let mut bad = c.clone();
        bad.schedule[1].first_epoch = 22;
        assert!(bad.validate().is_err());
        let mut short = c;
        short.epochs = 61;
        assert!(short.validate().is_err());
    }

    #[test]
    fn deterministic_and_descending() {
        let data = patches(6, 1);
        let cfg = TrainConfig::constant(8, 2, 1e-3, 5);
        let run = || {
            let mut m = AutoBcsModel::<f64>::new(tiny(), 2).unwrap();
            train(&mut m, &data, &cfg, |_| {}).unwrap()
        };
        let a = run();
        assert_eq!(a, run());
        assert_eq!(a.steps, 24);
        assert!(a.epochs.last().unwrap().loss < a.epochs[0].loss);
    }

    #[test]
    fn empty_dataset_is_rejected() {
        let mut m = AutoBcsModel::<f64>::new(tiny(), 2).unwrap();
        assert!(train(&mut m, &[], &TrainConfig::constant(1, 1, 1e-3, 0), |_| {}).is_err());
    }

    #[test]
    fn diverging_run_reports_diagnostics() {
        let data = patches(2, 3);
        let mut m = AutoBcsModel::<f64>::new(tiny(), 4).unwrap();
        m.visit_params(&mut |p| {
            if p.name == "init.weight" {
                p.value[0] = f64::NAN;
            }
        });
        let err = train(&mut m, &data, &TrainConfig::constant(1, 2, 1e-3, 0), |_| {}).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { step: 0, .. }), "{err}");
    }
}
