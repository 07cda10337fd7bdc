use super::layers::ParamRef;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// One bias-corrected Adam update of a single parameter slice. `step` is the
/// 1-based index of this update.
pub fn adam_step<T: Scalar>(
    param: &mut [T],
    grad: &[T],
    m: &mut [T],
    v: &mut [T],
    step: u64,
    lr: f64,
    cfg: &AdamConfig,
) {
    let b1 = T::from_f64_lossy(cfg.beta1);
    let b2 = T::from_f64_lossy(cfg.beta2);
    let eps = T::from_f64_lossy(cfg.eps);
    let bc1 = T::from_f64_lossy(1.0 - cfg.beta1.powf(step as f64));
    let bc2 = T::from_f64_lossy(1.0 - cfg.beta2.powf(step as f64));
    let lr = T::from_f64_lossy(lr);
    for (((p, &g), m), v) in param.iter_mut().zip(grad).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = b1 * *m + (T::one() - b1) * g;
        *v = b2 * *v + (T::one() - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// First and second moment accumulators for every parameter tensor, in the
/// order the model visits them.
#[derive(Clone, Debug, Default)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub first: Vec<Vec<T>>,
    pub second: Vec<Vec<T>>,
    pub step: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig) -> Self {
        AdamState { config, first: Vec::new(), second: Vec::new(), step: 0 }
    }

    /// Applies one update to every parameter yielded by `visit`, using the
    /// gradients stored alongside them.
    pub fn update(&mut self, lr: f64, visit: impl FnOnce(&mut dyn FnMut(ParamRef<'_, T>))) -> Result<()> {
        self.update_with(&|_| lr, visit)
    }

    /// [`update`](Self::update) with a learning rate chosen per parameter name.
    pub fn update_with(
        &mut self,
        lr_of: &dyn Fn(&str) -> f64,
        visit: impl FnOnce(&mut dyn FnMut(ParamRef<'_, T>)),
    ) -> Result<()> {
        self.step += 1;
        let step = self.step;
        let cfg = self.config;
        let fresh = self.first.is_empty();
        let mut slot = 0usize;
        let mut err = None;
        let first = &mut self.first;
        let second = &mut self.second;
        visit(&mut |p: ParamRef<'_, T>| {
            if err.is_some() {
                return;
            }
            if fresh {
                first.push(vec![T::zero(); p.value.len()]);
                second.push(vec![T::zero(); p.value.len()]);
            }
            match (first.get_mut(slot), second.get_mut(slot)) {
                (Some(m), Some(v)) if m.len() == p.value.len() && p.grad.len() == p.value.len() => {
                    adam_step(p.value, p.grad, m, v, step, lr_of(&p.name), &cfg);
                }
                _ => err = Some(Error::dim(format!("adam: state does not match parameter {}", p.name))),
            }
            slot += 1;
        });
        if let Some(e) = err {
            return Err(e);
        }
        if slot != self.first.len() {
            return Err(Error::dim(format!("adam: {} parameter tensors, state holds {}", slot, self.first.len())));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = vec![0.5f64, -2.0];
        let (mut m, mut v) = (vec![0.0; 2], vec![0.0; 2]);
        for step in 1..=5 {
            adam_step(&mut p, &[0.0, 0.0], &mut m, &mut v, step, 1e-3, &AdamConfig::default());
        }
        assert_eq!(p, vec![0.5, -2.0]);
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = vec![0.0f64];
        let (mut m, mut v) = (vec![0.0], vec![0.0]);
        adam_step(&mut p, &[1.0], &mut m, &mut v, 1, 1e-3, &AdamConfig::default());
        // bias correction makes the first step lr * g / (|g| + eps)
        let want = -1e-3 / (1.0 + 1e-8);
        assert!((p[0] - want).abs() < 1e-18);
        assert!((p[0] - (-9.99999995e-4)).abs() < 1e-11);
    }

    #[test]
    fn state_update_is_deterministic() {
        let run = || {
            let mut params = vec![vec![0.1f64, 0.2, 0.3], vec![1.0]];
            let mut state = AdamState::new(AdamConfig::default());
            for k in 0..10 {
                let mut grads: Vec<Vec<f64>> =
                    params.iter().map(|p| p.iter().map(|&x| (x * 3.0 + k as f64).sin()).collect()).collect();
                state
                    .update(1e-2, |f| {
                        for (i, (p, g)) in params.iter_mut().zip(grads.iter_mut()).enumerate() {
                            let shape = [p.len(), 1, 1, 1];
                            f(ParamRef { name: format!("p{i}"), shape, value: p, grad: g });
                        }
                    })
                    .unwrap();
            }
            (params, state.step)
        };
        let (a, sa) = run();
        let (b, sb) = run();
        assert_eq!(sa, 10);
        assert_eq!(sa, sb);
        assert!(a.iter().flatten().zip(b.iter().flatten()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}
