//! CSV reports. Floats use Rust's shortest round-trip formatting; an infinite
//! PSNR prints as `inf`.

use std::io::Write;

use crate::autobcs_net::EpochLog;
use crate::error::{Error, Result};
use crate::matrix_analysis::{BoundCheck, DistributionStats, Histogram, RipReport};
use crate::metrics::QualityReport;

fn field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn emit(w: &mut impl Write, text: String) -> Result<()> {
    w.write_all(text.as_bytes()).map_err(|e| Error::io("<csv>", e))
}

/// One `eval` result.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub image: String,
    pub tau: f64,
    pub sigma: f64,
    pub method: String,
    pub quality: QualityReport,
}

pub const EVAL_HEADER: &str = "image,tau,sigma_n,method,psnr,ssim";

pub fn write_eval_csv(w: &mut impl Write, rows: &[EvalRow]) -> Result<()> {
    let mut out = format!("{EVAL_HEADER}\n");
    for r in rows {
        out += &format!(
            "{},{},{},{},{},{}\n",
            field(&r.image),
            r.tau,
            r.sigma,
            field(&r.method),
            r.quality.psnr,
            r.quality.ssim
        );
    }
    emit(w, out)
}

/// Everything `analyze` computes for one matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisReport {
    pub rows: usize,
    pub cols: usize,
    pub coherence: f64,
    pub welch_bound: f64,
    pub rip: Option<RipReport>,
    /// Computed on the column-normalized matrix.
    pub bound: Option<BoundCheck>,
    pub stats: DistributionStats,
}

/// `metric,value` rows.
pub fn write_analysis_csv(w: &mut impl Write, r: &AnalysisReport) -> Result<()> {
    let mut rows: Vec<(&str, String)> = vec![
        ("rows", r.rows.to_string()),
        ("cols", r.cols.to_string()),
        ("coherence", r.coherence.to_string()),
        ("welch_bound", r.welch_bound.to_string()),
    ];
    if let Some(rip) = &r.rip {
        rows.push(("rip_s", rip.sparsity.to_string()));
        rows.push(("rip_delta", rip.delta.to_string()));
        rows.push(("rip_method", format!("{:?}", rip.method).to_lowercase()));
        rows.push(("rip_trials", rip.trials.map_or_else(|| "all".into(), |t| t.to_string())));
        rows.push(("rip_worst_support", rip.worst_support.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")));
    }
    if let Some(b) = &r.bound {
        rows.push(("normalized_delta", b.delta.to_string()));
        rows.push(("coherence_bound", b.bound.to_string()));
        rows.push(("bound_holds", b.holds.to_string()));
    }
    let s = &r.stats;
    rows.push(("entries", s.count.to_string()));
    rows.push(("mean", s.mean.to_string()));
    rows.push(("std_dev", s.std_dev.to_string()));
    rows.push(("skewness", s.skewness.to_string()));
    rows.push(("excess_kurtosis", s.excess_kurtosis.to_string()));
    rows.push(("degenerate", s.degenerate.to_string()));
    let mut out = String::from("metric,value\n");
    for (k, v) in rows {
        out += &format!("{k},{v}\n");
    }
    emit(w, out)
}

pub const HISTOGRAM_HEADER: &str = "bin_lo,bin_hi,count";

pub fn write_histogram_csv(w: &mut impl Write, h: &Histogram) -> Result<()> {
    let mut out = format!("{HISTOGRAM_HEADER}\n");
    for (k, c) in h.counts.iter().enumerate() {
        out += &format!("{},{},{c}\n", h.edges[k], h.edges[k + 1]);
    }
    emit(w, out)
}

pub fn write_epoch_csv(w: &mut impl Write, logs: &[EpochLog]) -> Result<()> {
    let mut out = String::from("epoch,lr,loss,loss_output,loss_initial\n");
    for l in logs {
        out += &format!("{},{},{},{},{}\n", l.epoch, l.lr, l.loss, l.loss_output, l.loss_initial);
    }
    emit(w, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix_analysis::distribution_stats;
    use crate::metrics::Psnr;

    #[test]
    fn eval_rows_and_sentinel() {
        let rows = vec![
            EvalRow {
                image: "a,b.pgm".into(),
                tau: 0.1,
                sigma: 0.0,
                method: "mmse".into(),
                quality: QualityReport { psnr: Psnr::Identical, ssim: 1.0 },
            },
            EvalRow {
                image: "c.pgm".into(),
                tau: 0.25,
                sigma: 0.02,
                method: "autobcs".into(),
                quality: QualityReport { psnr: Psnr::Db(27.5), ssim: 0.75 },
            },
        ];
        let mut out = Vec::new();
        write_eval_csv(&mut out, &rows).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(
            text,
            "image,tau,sigma_n,method,psnr,ssim\n\"a,b.pgm\",0.1,0,mmse,inf,1\nc.pgm,0.25,0.02,autobcs,27.500000,0.75\n"
        );
    }

    #[test]
    fn histogram_rows() {
        let stats = distribution_stats(&[0.0, 0.5, 1.0, 1.0], 2).unwrap();
        let mut out = Vec::new();
        write_histogram_csv(&mut out, &stats.histogram).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "bin_lo,bin_hi,count\n0,0.5,1\n0.5,1,3\n");
    }
}
