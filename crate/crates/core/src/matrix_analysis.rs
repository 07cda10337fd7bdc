//! Restricted isometry, coherence, spark and entry-distribution statistics for
//! sensing matrices.
//!
//! All routines take a dense `DMatrix<f64>` so they apply to arbitrary small
//! test matrices as well as to [`SensingMatrix::entries`](crate::sensing::SensingMatrix::entries).
//! Exact quantities enumerate column subsets and are guarded against
//! combinatorial blow-up with [`Error::Capacity`].

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest number of supports `rip_constant_exact` will enumerate.
pub const RIP_SUPPORT_LIMIT: u128 = 1_000_000;
/// Largest number of subsets `spark_bruteforce` will enumerate.
pub const SPARK_SUBSET_LIMIT: u128 = 10_000_000;
/// Relative singular-value threshold below which a subset counts as dependent.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RipMethod {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RipReport {
    pub sparsity: usize,
    pub delta: f64,
    pub method: RipMethod,
    /// Number of sampled supports; `None` for exact enumeration.
    pub trials: Option<usize>,
    /// Support attaining `delta`.
    pub worst_support: Vec<usize>,
}

/// Outcome of a spark search limited to subsets of size `≤ s_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Spark {
    Exact(usize),
    GreaterThan(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub sparsity: usize,
    pub delta: f64,
    pub coherence: f64,
    /// `(s - 1) * μ`.
    pub bound: f64,
    /// `bound - delta`; non-negative when the inequality holds.
    pub slack: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` ascending edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionStats {
    pub count: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Set when all entries are equal; higher moments are then reported as 0.
    pub degenerate: bool,
    pub histogram: Histogram,
}

/// Binomial coefficient, saturating at `u128::MAX`.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step
        acc = match acc.checked_mul((n - i) as u128) {
            Some(v) => v / (i as u128 + 1),
            None => return u128::MAX,
        };
    }
    acc
}

/// Lexicographic k-subsets of `0..n`.
struct Combinations {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Combinations { n, idx: (0..k).collect(), done: k > n }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let k = self.idx.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

fn column_norms(b: &DMatrix<f64>) -> Vec<f64> {
    b.column_iter().map(|c| c.norm()).collect()
}

/// Rescales every column to unit Euclidean norm. Zero columns are an error.
pub fn normalize_columns(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut out = b.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        let n = col.norm();
        if n == 0.0 {
            return Err(Error::arg(format!("column {j} is zero")));
        }
        col /= n;
    }
    Ok(out)
}

/// Mutual coherence: largest normalized inner product between distinct columns.
pub fn coherence(b: &DMatrix<f64>) -> Result<f64> {
    let norms = column_norms(b);
    if let Some(j) = norms.iter().position(|&n| n == 0.0) {
        return Err(Error::arg(format!("column {j} is zero")));
    }
    let gram = b.transpose() * b;
    let mut mu = 0.0f64;
    for i in 0..b.ncols() {
        for j in i + 1..b.ncols() {
            mu = mu.max(gram[(i, j)].abs() / (norms[i] * norms[j]));
        }
    }
    Ok(mu.min(1.0))
}

/// Lower bound on the coherence of any `m × n` matrix with unit-norm columns.
pub fn welch_bound(m: usize, n: usize) -> f64 {
    if n <= m || m == 0 {
        return 0.0;
    }
    ((n - m) as f64 / (m as f64 * (n - 1) as f64)).sqrt()
}

fn subset_dependent(b: &DMatrix<f64>, cols: &[usize]) -> bool {
    let sub = b.select_columns(cols.iter());
    let sv = sub.singular_values();
    let max = sv.max();
    let min = sv.min();
    max == 0.0 || min < RANK_TOLERANCE * max
}

/// Smallest number of linearly dependent columns, searching subsets up to `s_max`.
///
/// A matrix whose `n` columns are all independent has spark `n + 1` by
/// convention, reported when `s_max ≥ n`.
pub fn spark_bruteforce(b: &DMatrix<f64>, s_max: usize) -> Result<Spark> {
    let (m, n) = b.shape();
    let top = s_max.min(n);
    let work = binomial(n, top);
    if work > SPARK_SUBSET_LIMIT {
        return Err(Error::Capacity(format!("C({n}, {top}) = {work} subsets exceeds {SPARK_SUBSET_LIMIT}")));
    }
    for k in 1..=top {
        if k > m {
            // any k > rank columns are dependent
            return Ok(Spark::Exact(k));
        }
        if Combinations::new(n, k).any(|s| subset_dependent(b, &s)) {
            return Ok(Spark::Exact(k));
        }
    }
    if s_max >= n {
        Ok(Spark::Exact(n + 1))
    } else {
        Ok(Spark::GreaterThan(s_max))
    }
}

fn support_delta(b: &DMatrix<f64>, support: &[usize]) -> f64 {
    let sub = b.select_columns(support.iter());
    let gram = sub.transpose() * &sub;
    let eig = SymmetricEigen::new(gram).eigenvalues;
    (eig.max() - 1.0).max(1.0 - eig.min())
}

fn check_sparsity(n: usize, s: usize) -> Result<()> {
    if s == 0 || s > n {
        return Err(Error::arg(format!("sparsity {s} outside 1..={n}")));
    }
    Ok(())
}

/// Exact restricted isometry constant of order `s` by enumerating every support.
pub fn rip_constant_exact(b: &DMatrix<f64>, s: usize) -> Result<RipReport> {
    let n = b.ncols();
    check_sparsity(n, s)?;
    let work = binomial(n, s);
    if work > RIP_SUPPORT_LIMIT {
        return Err(Error::Capacity(format!("C({n}, {s}) = {work} supports exceeds {RIP_SUPPORT_LIMIT}")));
    }
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for support in Combinations::new(n, s) {
        let d = support_delta(b, &support);
        if d > best.0 {
            best = (d, support);
        }
    }
    Ok(RipReport { sparsity: s, delta: best.0.max(0.0), method: RipMethod::Exact, trials: None, worst_support: best.1 })
}

/// Restricted isometry estimate over `trials` uniformly drawn supports; a lower
/// bound on the exact constant.
pub fn rip_constant_montecarlo(b: &DMatrix<f64>, s: usize, trials: usize, seed: u64) -> Result<RipReport> {
    let n = b.ncols();
    check_sparsity(n, s)?;
    if trials == 0 {
        return Err(Error::arg("trials must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for _ in 0..trials {
        let mut support = rand::seq::index::sample(&mut rng, n, s).into_vec();
        support.sort_unstable();
        let d = support_delta(b, &support);
        if d > best.0 {
            best = (d, support);
        }
    }
    Ok(RipReport {
        sparsity: s,
        delta: best.0.max(0.0),
        method: RipMethod::MonteCarlo,
        trials: Some(trials),
        worst_support: best.1,
    })
}

/// Checks `δ_s ≤ (s − 1)·μ`. The inequality is only guaranteed for unit-norm columns.
pub fn coherence_rip_bound_check(b: &DMatrix<f64>, s: usize) -> Result<BoundCheck> {
    if s < 2 {
        return Err(Error::arg("bound check needs sparsity ≥ 2"));
    }
    let delta = rip_constant_exact(b, s)?.delta;
    let mu = coherence(b)?;
    let bound = (s - 1) as f64 * mu;
    let slack = bound - delta;
    Ok(BoundCheck { sparsity: s, delta, coherence: mu, bound, slack, holds: slack >= -1e-12 })
}

/// Moments and an equal-width histogram of a set of values.
pub fn distribution_stats(values: &[f64], bins: usize) -> Result<DistributionStats> {
    if bins < 2 {
        return Err(Error::arg("need at least 2 histogram bins"));
    }
    if values.is_empty() {
        return Err(Error::arg("no values"));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let std_dev = var.sqrt();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let degenerate = hi == lo || std_dev == 0.0;

    let (skewness, excess_kurtosis) = if degenerate {
        (0.0, 0.0)
    } else {
        let (mut m3, mut m4) = (0.0, 0.0);
        for v in values {
            let z = (v - mean) / std_dev;
            m3 += z * z * z;
            m4 += z * z * z * z;
        }
        (m3 / n, m4 / n - 3.0)
    };

    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| if i == bins { hi } else { lo + width * i as f64 }).collect();
    let mut counts = vec![0usize; bins];
    for v in values {
        let bin = if degenerate { 0 } else { (((v - lo) / width) as usize).min(bins - 1) };
        counts[bin] += 1;
    }

    Ok(DistributionStats {
        count: values.len(),
        mean,
        std_dev,
        skewness,
        excess_kurtosis,
        degenerate,
        histogram: Histogram { edges, counts },
    })
}

/// Entry statistics of a sensing matrix.
pub fn gaussianity_stats(b: &DMatrix<f64>, bins: usize) -> Result<DistributionStats> {
    distribution_stats(b.as_slice(), bins)
}

/// Normal density with the given mean and standard deviation, for histogram overlays.
pub fn normal_density(x: f64, mean: f64, std_dev: f64) -> f64 {
    let z = (x - mean) / std_dev;
    (-0.5 * z * z).exp() / (std_dev * (2.0 * std::f64::consts::PI).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(m: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(m, n, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(12, 3), 220);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial(64, 32), 1_832_624_140_942_590_534);
    }

    #[test]
    fn combinations_enumerate_all() {
        let all: Vec<_> = Combinations::new(5, 3).collect();
        assert_eq!(all.len(), 10);
        assert_eq!(all[0], vec![0, 1, 2]);
        assert_eq!(all[9], vec![2, 3, 4]);
        assert_eq!(Combinations::new(3, 0).count(), 1);
    }

    #[test]
    fn coherence_examples() {
        assert_eq!(coherence(&DMatrix::identity(4, 4)).unwrap(), 0.0);
        let b = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        assert!((coherence(&b).unwrap() - 0.5f64.sqrt()).abs() < 1e-15);
        let dup = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        assert!((coherence(&dup).unwrap() - 1.0).abs() < 1e-15);
        let zero = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 2.0, 0.0]);
        assert!(matches!(coherence(&zero), Err(Error::Argument(_))));
    }

    #[test]
    fn coherence_ignores_column_scaling() {
        let b = gaussian(5, 9, 1);
        let mut scaled = b.clone();
        for (j, mut c) in scaled.column_iter_mut().enumerate() {
            c *= 0.3 + j as f64;
        }
        assert!((coherence(&b).unwrap() - coherence(&scaled).unwrap()).abs() < 1e-12);
        let d1 = rip_constant_exact(&b, 2).unwrap().delta;
        let d2 = rip_constant_exact(&scaled, 2).unwrap().delta;
        assert!((d1 - d2).abs() > 1e-3);
    }

    #[test]
    fn spark_examples() {
        assert_eq!(spark_bruteforce(&DMatrix::identity(4, 4), 4).unwrap(), Spark::Exact(5));
        assert_eq!(spark_bruteforce(&DMatrix::identity(4, 4), 3).unwrap(), Spark::GreaterThan(3));
        let b = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0]);
        assert_eq!(spark_bruteforce(&b, 3).unwrap(), Spark::Exact(3));
        let z = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
        assert_eq!(spark_bruteforce(&z, 3).unwrap(), Spark::Exact(1));
        let big = gaussian(30, 60, 2);
        assert!(matches!(spark_bruteforce(&big, 10), Err(Error::Capacity(_))));
    }

    #[test]
    fn rip_trivial_cases() {
        let q = DMatrix::<f64>::identity(5, 5);
        for s in 1..=5 {
            assert!(rip_constant_exact(&q, s).unwrap().delta < 1e-12);
        }
        let b = gaussian(4, 7, 3);
        let want = b.column_iter().map(|c| (c.norm_squared() - 1.0).abs()).fold(0.0, f64::max);
        assert!((rip_constant_exact(&b, 1).unwrap().delta - want).abs() < 1e-12);
        assert!(matches!(rip_constant_exact(&b, 0), Err(Error::Argument(_))));
        let wide = gaussian(4, 64, 3);
        assert!(matches!(rip_constant_exact(&wide, 8), Err(Error::Capacity(_))));
    }

    #[test]
    fn rip_two_sparse_matches_closed_form() {
        // eigenvalues of a 2x2 Gram [[a, c], [c, d]] in closed form
        let b = gaussian(4, 8, 4) / 2.0;
        let mut want = 0.0f64;
        for i in 0..8 {
            for j in i + 1..8 {
                let (ci, cj) = (b.column(i), b.column(j));
                let (a, d, c) = (ci.dot(&ci), cj.dot(&cj), ci.dot(&cj));
                let r = (((a - d) / 2.0).powi(2) + c * c).sqrt();
                let (hi, lo) = ((a + d) / 2.0 + r, (a + d) / 2.0 - r);
                want = want.max(hi - 1.0).max(1.0 - lo);
            }
        }
        assert!((rip_constant_exact(&b, 2).unwrap().delta - want).abs() < 1e-12);
    }

    #[test]
    fn montecarlo_bounds_exact() {
        let b = normalize_columns(&gaussian(4, 6, 5)).unwrap();
        let exact = rip_constant_exact(&b, 2).unwrap();
        let mc = rip_constant_montecarlo(&b, 2, 10, 9).unwrap();
        assert!(mc.delta <= exact.delta + 1e-15);
        let full = rip_constant_montecarlo(&b, 2, 400, 9).unwrap();
        assert!((full.delta - exact.delta).abs() < 1e-15);
        assert_eq!(mc, rip_constant_montecarlo(&b, 2, 10, 9).unwrap());
        assert!(rip_constant_montecarlo(&b, 2, 0, 9).is_err());
    }

    #[test]
    fn rip_monotone_in_sparsity() {
        let b = normalize_columns(&gaussian(6, 10, 6)).unwrap();
        let d: Vec<f64> = (1..=4).map(|s| rip_constant_exact(&b, s).unwrap().delta).collect();
        assert!(d.windows(2).all(|w| w[0] <= w[1] + 1e-12), "{d:?}");
    }

    #[test]
    fn bound_check_cases() {
        let q = DMatrix::<f64>::identity(4, 4);
        let c = coherence_rip_bound_check(&q, 2).unwrap();
        assert!(c.holds && c.slack.abs() < 1e-12);
        let dup = DMatrix::from_row_slice(2, 2, &[0.6, 0.6, 0.8, 0.8]);
        let c = coherence_rip_bound_check(&dup, 2).unwrap();
        assert!((c.delta - 1.0).abs() < 1e-12 && (c.bound - 1.0).abs() < 1e-12 && c.holds);
        let b = normalize_columns(&gaussian(6, 12, 7)).unwrap();
        assert!(coherence_rip_bound_check(&b, 3).unwrap().holds);
    }

    #[test]
    fn welch_bound_holds() {
        for seed in 0..5 {
            let b = normalize_columns(&gaussian(5, 11, seed)).unwrap();
            assert!(coherence(&b).unwrap() >= welch_bound(5, 11) - 1e-12);
        }
        assert_eq!(welch_bound(4, 4), 0.0);
    }

    #[test]
    fn spark_exceeds_twice_sparsity_when_rip_below_one() {
        for seed in 0..4 {
            let b = normalize_columns(&gaussian(6, 9, 10 + seed)).unwrap();
            for s in 1..=3 {
                if rip_constant_exact(&b, 2 * s).unwrap().delta < 1.0 {
                    match spark_bruteforce(&b, 2 * s).unwrap() {
                        Spark::Exact(k) => assert!(k > 2 * s),
                        Spark::GreaterThan(_) => {}
                    }
                }
            }
        }
    }

    #[test]
    fn distribution_of_constant_and_gaussian() {
        let c = DMatrix::from_element(3, 4, 0.25);
        let st = gaussianity_stats(&c, 5).unwrap();
        assert!(st.degenerate && st.std_dev == 0.0);
        assert_eq!(st.histogram.counts.iter().sum::<usize>(), 12);

        let g = gaussian(100, 1000, 11);
        let st = gaussianity_stats(&g, 40).unwrap();
        assert!(st.skewness.abs() < 0.1 && st.excess_kurtosis.abs() < 0.2, "{st:?}");
        assert_eq!(st.histogram.counts.iter().sum::<usize>(), 100_000);
        assert_eq!(st.histogram.edges.len(), 41);
        assert!(gaussianity_stats(&g, 1).is_err());
    }

    #[test]
    fn normal_density_peak() {
        assert!((normal_density(0.0, 0.0, 1.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
    }
}
