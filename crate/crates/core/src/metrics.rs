//! Evaluation quantities and multi-trial aggregation.

use std::io::Write;

use serde::Serialize;

use crate::error::{check_dim, invalid, Result};

/// Added to the squared tracking error before taking logs.
pub const MSE_FLOOR: f64 = 1e-12;
/// Lower bound on SNR denominators.
pub const SNR_DENOM_FLOOR: f64 = 1e-20;

/// `10 log10(|theta_hat - theta|^2 + 1e-12)`.
pub fn mse_db(theta_hat: &[f64], theta: &[f64]) -> Result<f64> {
    check_dim(theta.len(), theta_hat.len())?;
    let sq: f64 = theta_hat.iter().zip(theta).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(10.0 * (sq + MSE_FLOOR).log10())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SnrMetrics {
    pub snr_in: f64,
    pub snr_out: f64,
    pub delta: f64,
    /// The input residual energy was zero and got floored.
    pub in_saturated: bool,
    /// The output residual energy was zero and got floored.
    pub out_saturated: bool,
}

fn residual_energy(x: &[f64], clean: &[f64]) -> (f64, bool) {
    let e: f64 = x.iter().zip(clean).map(|(a, c)| (a - c) * (a - c)).sum();
    if e < SNR_DENOM_FLOOR {
        (SNR_DENOM_FLOOR, true)
    } else {
        (e, false)
    }
}

/// Input SNR of `noisy`, output SNR of `output`, both against `clean`.
pub fn snr_metrics(noisy: &[f64], clean: &[f64], output: &[f64]) -> Result<SnrMetrics> {
    check_dim(clean.len(), noisy.len())?;
    check_dim(clean.len(), output.len())?;
    let signal: f64 = clean.iter().map(|c| c * c).sum();
    if !(signal > 0.0) {
        return Err(invalid("clean signal has zero energy"));
    }
    let (din, in_saturated) = residual_energy(noisy, clean);
    let (dout, out_saturated) = residual_energy(output, clean);
    let snr_in = 10.0 * (signal / din).log10();
    let snr_out = 10.0 * (signal / dout).log10();
    Ok(SnrMetrics { snr_in, snr_out, delta: snr_out - snr_in, in_saturated, out_saturated })
}

/// Mean of `seq[n1+1..=n2]` in 1-based indexing, i.e. `seq[n1..n2]` 0-based.
pub fn cesaro_avg(seq: &[f64], n1: usize, n2: usize) -> Result<f64> {
    if !(n1 < n2 && n2 <= seq.len()) {
        return Err(invalid(format!("window ({n1}, {n2}] invalid for length {}", seq.len())));
    }
    Ok(seq[n1..n2].iter().sum::<f64>() / (n2 - n1) as f64)
}

/// Per-run metrics.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrialReport {
    pub per_step_mse_db: Vec<f64>,
    pub per_step_sq_pred_err: Vec<f64>,
    pub snr_in_db: Option<f64>,
    pub snr_out_db: Option<f64>,
    pub delta_snr_db: Option<f64>,
    pub config_digest: String,
    pub seed: u64,
}

impl TrialReport {
    pub fn set_snr(&mut self, snr: &SnrMetrics) {
        self.snr_in_db = Some(snr.snr_in);
        self.snr_out_db = Some(snr.snr_out);
        self.delta_snr_db = Some(snr.delta);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Unbiased (n − 1) standard deviation; 0 when n = 1.
    pub std: f64,
    pub n: usize,
}

impl MeanStd {
    /// `std` is meaningless when only one sample was seen.
    pub fn is_degenerate(&self) -> bool {
        self.n < 2
    }
}

pub fn mean_std(values: &[f64]) -> Result<MeanStd> {
    if values.is_empty() {
        return Err(invalid("mean of an empty sample"));
    }
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    Ok(MeanStd { mean, std, n })
}

/// How per-step MSE curves are combined across trials.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveMode {
    /// Average the dB values.
    #[default]
    MeanOfDb,
    /// Average the linear errors, then convert to dB.
    DbOfMean,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub trials: usize,
    pub mean_mse_db: Vec<f64>,
    pub mean_sq_pred_err: Vec<f64>,
    pub snr_in: Option<MeanStd>,
    pub snr_out: Option<MeanStd>,
    pub delta_snr: Option<MeanStd>,
    /// Set when fewer than two reports were aggregated.
    pub degenerate: bool,
}

pub fn aggregate(reports: &[TrialReport]) -> Result<Summary> {
    aggregate_with(reports, CurveMode::MeanOfDb)
}

fn mean_curve(curves: &[&[f64]], transform: impl Fn(f64) -> f64, back: impl Fn(f64) -> f64) -> Vec<f64> {
    let t = curves[0].len();
    let n = curves.len() as f64;
    (0..t)
        .map(|k| back(curves.iter().map(|c| transform(c[k])).sum::<f64>() / n))
        .collect()
}

pub fn aggregate_with(reports: &[TrialReport], mode: CurveMode) -> Result<Summary> {
    let first = reports.first().ok_or_else(|| invalid("no reports to aggregate"))?;
    for r in reports {
        check_dim(first.per_step_mse_db.len(), r.per_step_mse_db.len())?;
        check_dim(first.per_step_sq_pred_err.len(), r.per_step_sq_pred_err.len())?;
    }
    let mse: Vec<&[f64]> = reports.iter().map(|r| r.per_step_mse_db.as_slice()).collect();
    let sq: Vec<&[f64]> = reports.iter().map(|r| r.per_step_sq_pred_err.as_slice()).collect();
    let mean_mse_db = match mode {
        CurveMode::MeanOfDb => mean_curve(&mse, |v| v, |v| v),
        CurveMode::DbOfMean => mean_curve(&mse, |v| 10f64.powf(v / 10.0), |v| 10.0 * v.log10()),
    };
    let mean_sq_pred_err = mean_curve(&sq, |v| v, |v| v);

    let stat = |f: fn(&TrialReport) -> Option<f64>| -> Result<Option<MeanStd>> {
        let vals: Option<Vec<f64>> = reports.iter().map(f).collect();
        vals.map(|v| mean_std(&v)).transpose()
    };
    Ok(Summary {
        trials: reports.len(),
        mean_mse_db,
        mean_sq_pred_err,
        snr_in: stat(|r| r.snr_in_db)?,
        snr_out: stat(|r| r.snr_out_db)?,
        delta_snr: stat(|r| r.delta_snr_db)?,
        degenerate: reports.len() < 2,
    })
}

/// Columns `k, mse_db, sq_pred_err`.
pub fn write_per_step_csv<W: Write>(writer: W, mse_db: &[f64], sq_pred_err: &[f64]) -> Result<()> {
    check_dim(mse_db.len(), sq_pred_err.len())?;
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["k", "mse_db", "sq_pred_err"])?;
    for (k, (m, s)) in mse_db.iter().zip(sq_pred_err).enumerate() {
        w.write_record(&[k.to_string(), m.to_string(), s.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub algorithm: String,
    pub snr_in: f64,
    pub snr_out: f64,
    pub delta_snr_mean: f64,
    pub delta_snr_std: f64,
}

/// Columns `algorithm, snr_in, snr_out, delta_snr_mean, delta_snr_std`.
pub fn write_summary_csv<W: Write>(writer: W, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record(["algorithm", "snr_in", "snr_out", "delta_snr_mean", "delta_snr_std"])?;
    }
    w.flush()?;
    Ok(())
}
