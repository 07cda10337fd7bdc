use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::layers::{Layer, Vectorize};
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
}

impl GradCheckReport {
    fn empty() -> Self {
        GradCheckReport { max_rel_error: 0.0, worst_index: 0, analytic: 0.0, numeric: 0.0, coordinates: 0 }
    }

    fn merge(self, other: Self) -> Self {
        let coordinates = self.coordinates + other.coordinates;
        let mut worst = if other.max_rel_error > self.max_rel_error { other } else { self };
        worst.coordinates = coordinates;
        worst
    }
}

/// Compares `analytic` against central differences of `f` at `point`.
///
/// The error of a coordinate is `|a - n| / max(|a|, |n|, 1e-8)`; the report
/// carries the maximum over all coordinates.
pub fn grad_check(point: &[f64], analytic: &[f64], eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> GradCheckReport {
    assert_eq!(point.len(), analytic.len(), "grad_check: gradient length mismatch");
    let mut x = point.to_vec();
    let mut report = GradCheckReport { coordinates: point.len(), ..GradCheckReport::empty() };
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + eps;
        let plus = f(&x);
        x[i] = orig - eps;
        let minus = f(&x);
        x[i] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        if err > report.max_rel_error {
            report =
                GradCheckReport { max_rel_error: err, worst_index: i, analytic: a, numeric, coordinates: point.len() };
        }
    }
    report
}

/// [`grad_check`] for piecewise-smooth functions such as ReLU networks.
///
/// Each coordinate uses the widest step in `steps` (tried in order) whose
/// forward and backward one-sided differences agree to relative tolerance
/// `agree` (plus a round-off allowance of 256 ulps of `|f|` per step, enough for
/// objectives summing thousands of terms), i.e.
/// whose stencil does not straddle a kink; wide steps keep round-off small.
/// Coordinates where no step qualifies use the last one.
pub fn grad_check_piecewise(
    point: &[f64],
    analytic: &[f64],
    steps: &[f64],
    agree: f64,
    mut f: impl FnMut(&[f64]) -> f64,
) -> GradCheckReport {
    assert_eq!(point.len(), analytic.len(), "grad_check_piecewise: gradient length mismatch");
    assert!(!steps.is_empty(), "grad_check_piecewise: no steps");
    let mut x = point.to_vec();
    let f0 = f(&x);
    let mut report = GradCheckReport { coordinates: point.len(), ..GradCheckReport::empty() };
    for i in 0..x.len() {
        let orig = x[i];
        let mut numeric = 0.0;
        for &eps in steps {
            x[i] = orig + eps;
            let plus = f(&x);
            x[i] = orig - eps;
            let minus = f(&x);
            let (fwd, bwd) = ((plus - f0) / eps, (f0 - minus) / eps);
            numeric = (plus - minus) / (2.0 * eps);
            let noise = 256.0 * f64::EPSILON * (1.0 + f0.abs().max(plus.abs()).max(minus.abs())) / eps;
            if (fwd - bwd).abs() <= agree * fwd.abs().max(bwd.abs()) + noise {
                break;
            }
        }
        x[i] = orig;
        let a = analytic[i];
        let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
        if err > report.max_rel_error {
            report =
                GradCheckReport { max_rel_error: err, worst_index: i, analytic: a, numeric, coordinates: point.len() };
        }
    }
    report
}

fn projected<V: Vectorize<f64>>(y: &V, r: &[f64]) -> f64 {
    y.flatten().iter().zip(r).map(|(a, b)| a * b).sum()
}

fn param_values<L: Layer<f64>>(layer: &mut L) -> (Vec<f64>, Vec<f64>) {
    let mut vals = Vec::new();
    let mut grads = Vec::new();
    layer.visit_params("", &mut |p| {
        vals.extend_from_slice(p.value);
        grads.extend_from_slice(p.grad);
    });
    (vals, grads)
}

fn set_param_values<L: Layer<f64>>(layer: &mut L, values: &[f64]) {
    let mut offset = 0;
    layer.visit_params("", &mut |p| {
        let n = p.value.len();
        p.value.copy_from_slice(&values[offset..offset + n]);
        offset += n;
    });
}

/// Finite-difference check of a layer's input and parameter gradients.
///
/// The scalar objective is a fixed random projection of the layer output, so
/// every output coordinate contributes.
pub fn check_layer<L: Layer<f64>>(layer: &mut L, x: &L::Input, eps: f64, seed: u64) -> Result<GradCheckReport> {
    let y = layer.infer(x)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r: Vec<f64> = (0..y.flatten().len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let dy = y.unflatten_like(&r)?;

    layer.zero_grad();
    layer.forward(x)?;
    let dx = layer.backward(&dy)?;

    let x_flat = x.flatten();
    let input_report = grad_check(&x_flat, &dx.flatten(), eps, |p| {
        let xi = x.unflatten_like(p).expect("same structure");
        projected(&layer.infer(&xi).expect("forward on perturbed input"), &r)
    });

    let (values, grads) = param_values(layer);
    let mut param_report = GradCheckReport::empty();
    if !values.is_empty() {
        let mut work = values.clone();
        param_report = grad_check(&values, &grads, eps, |p| {
            work.copy_from_slice(p);
            set_param_values(layer, &work);
            projected(&layer.infer(x).expect("forward on perturbed parameters"), &r)
        });
        set_param_values(layer, &values);
        param_report.worst_index += x_flat.len();
    }
    layer.zero_grad();
    Ok(input_report.merge(param_report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_is_exact() {
        let w = [0.3, -1.2, 2.5, 0.7];
        let f = |x: &[f64]| x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let report = grad_check(&[1.0, 2.0, -3.0, 0.5], &w, 1e-5, f);
        assert!(report.max_rel_error < 1e-9, "{report:?}");
    }

    #[test]
    fn piecewise_check_avoids_kinks() {
        // |x| has a kink at 0; a 1e-2 step around 0.005 straddles it
        let f = |x: &[f64]| x[0].abs() + 3.0 * x[1];
        let narrow = grad_check_piecewise(&[0.005, 1.0], &[1.0, 3.0], &[1e-2, 1e-4], 1e-6, f);
        assert!(narrow.max_rel_error < 1e-9, "{narrow:?}");
        let wide = grad_check(&[0.005, 1.0], &[1.0, 3.0], 1e-2, f);
        assert!(wide.max_rel_error > 0.1);
        let wrong = grad_check_piecewise(&[0.5, 1.0], &[1.0, 2.0], &[1e-2, 1e-4], 1e-6, f);
        assert_eq!(wrong.worst_index, 1);
        assert!(wrong.max_rel_error > 0.3);
    }

    #[test]
    fn detects_wrong_gradient() {
        let report = grad_check(&[1.0, 2.0], &[2.0, 5.0], 1e-5, |x| x[0] * x[0] + x[1] * x[1]);
        assert!(report.max_rel_error > 0.1);
        assert_eq!(report.worst_index, 1);
    }
}
