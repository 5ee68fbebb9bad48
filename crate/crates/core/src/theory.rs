//! Stability machinery of the MLMS error recursion.
//!
//! With `theta_tilde[k] = theta[k] - theta_hat[k]`, the stacked error
//! `Z[k] = (theta_tilde[k]; mu * theta_tilde[k-1])` evolves as
//!
//! ```text
//! Z[k+1] = (I0 - Abar[k]) Z[k] + (tau[k]; 0)
//! I0 - Abar[k] = [[I - A[k], -mu I], [mu I, 0]]
//! A[k] = mu phi phi^T / (delta + |phi|^2) - beta I
//! tau[k] = Delta[k+1] - beta Delta[k] - alpha[k] v[k+1] phi[k]
//! ```
//!
//! The matrix above is `P T[k] P^{-1}` with `P = diag(I, mu I)` and
//! `T[k] = [[I - A[k], -beta I], [I, 0]]`, the transition of
//! `(theta_tilde[k]; theta_tilde[k-1])`, only when `beta = mu^2`. For other
//! β the transform has top-right block `-(beta/mu) I`; [`exact_transition`]
//! builds that version.
//!
//! Homogeneous products of these matrices decay geometrically when the
//! regressors are persistently exciting and μ is small enough; this module
//! evaluates the admissible step-size bound, the decay rate and a Monte Carlo
//! probe of the product norms.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng;
use crate::systems::RegressorGen;

/// Norm above which a probe trial is abandoned.
pub const PROBE_OVERFLOW: f64 = 1e12;

/// The 2m×2m homogeneous transition `I0 - Abar[k]` and its inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedTransition {
    pub matrix: DMatrix<f64>,
    pub mu: f64,
    pub delta: f64,
    pub beta: f64,
    pub phi: Vec<f64>,
}

impl AugmentedTransition {
    pub fn dim(&self) -> usize {
        self.phi.len()
    }
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteInput(format!("{name} = {v}")))
    }
}

/// `A[k] = mu phi phi^T / (delta + |phi|^2) - beta I`.
pub fn a_matrix(phi: &[f64], mu: f64, delta: f64, beta: f64) -> Result<DMatrix<f64>> {
    if !(delta > 0.0) {
        return Err(invalid(format!("delta must be positive, got {delta}")));
    }
    check_finite("mu", mu)?;
    check_finite("beta", beta)?;
    if let Some(v) = phi.iter().find(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput(format!("phi component {v}")));
    }
    if phi.is_empty() {
        return Err(invalid("phi must be non-empty"));
    }
    let m = phi.len();
    let scale = mu / (delta + phi.iter().map(|x| x * x).sum::<f64>());
    Ok(DMatrix::from_fn(m, m, |i, j| {
        scale * (phi[i] * phi[j]) - if i == j { beta } else { 0.0 }
    }))
}

pub fn augmented_transition(phi: &[f64], mu: f64, delta: f64, beta: f64) -> Result<AugmentedTransition> {
    let a = a_matrix(phi, mu, delta, beta)?;
    let m = phi.len();
    let mut t = DMatrix::zeros(2 * m, 2 * m);
    t.view_mut((0, 0), (m, m)).copy_from(&(DMatrix::identity(m, m) - a));
    for i in 0..m {
        t[(i, m + i)] = -mu;
        t[(m + i, i)] = mu;
    }
    Ok(AugmentedTransition { matrix: t, mu, delta, beta, phi: phi.to_vec() })
}

/// `P T[k] P^{-1} = [[I - A[k], -(beta/mu) I], [mu I, 0]]`, which propagates
/// `Z[k]` exactly for any β. Coincides with [`augmented_transition`] when
/// `beta = mu^2`.
pub fn exact_transition(phi: &[f64], mu: f64, delta: f64, beta: f64) -> Result<AugmentedTransition> {
    if !(mu > 0.0) {
        return Err(invalid(format!("mu must be positive, got {mu}")));
    }
    let mut t = augmented_transition(phi, mu, delta, beta)?;
    let m = phi.len();
    for i in 0..m {
        t.matrix[(i, m + i)] = -beta / mu;
    }
    Ok(t)
}

/// Which moment order enters the step-size bound: `q = p - 1/2` for the
/// homogeneous product estimate, `q = 2p - 1/2` for the tracking bounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QMode {
    Homogeneous,
    Tracking,
}

impl QMode {
    pub fn q(self, p: u32) -> f64 {
        match self {
            QMode::Homogeneous => p as f64 - 0.5,
            QMode::Tracking => 2.0 * p as f64 - 0.5,
        }
    }
}

/// The four constituents of the step-size bound and their minimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuMaxTerms {
    pub terms: [f64; 4],
    pub value: f64,
}

pub fn mu_max_terms(alpha: f64, h: usize, p: u32, kappa: f64, q_mode: QMode) -> Result<MuMaxTerms> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if h == 0 || p == 0 {
        return Err(invalid("h and p must be at least 1"));
    }
    if !(kappa > 1.0) {
        return Err(invalid(format!("kappa must exceed 1, got {kappa}")));
    }
    let s = kappa.min(2.0);
    let q = q_mode.q(p);
    let h = h as f64;
    let terms = [
        (9.0 * h * h).powf(-1.0 / (4.0 - s)),
        (3.0 * q).powf(-1.0 / s),
        alpha / (2.0 * (alpha * alpha + 9.0)),
        (alpha / (24.0 * q * (1.0 + 3.0 * q))).powf(1.0 / (s - 1.0)),
    ];
    let value = terms.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(MuMaxTerms { terms, value })
}

/// Largest step size for which the product-norm decay is guaranteed.
pub fn mu_max(alpha: f64, h: usize, p: u32, kappa: f64, q_mode: QMode) -> Result<f64> {
    mu_max_terms(alpha, h, p, kappa, q_mode).map(|t| t.value)
}

/// Per-block decay rate `(1 - alpha*mu/8)^(1/p)`.
pub fn lambda_p(alpha: f64, mu: f64, p: u32) -> Result<f64> {
    let x = alpha * mu / 8.0;
    if p == 0 {
        return Err(invalid("p must be at least 1"));
    }
    if !(x > 0.0 && x < 1.0) {
        return Err(invalid(format!("alpha*mu/8 must lie in (0, 1), got {x}")));
    }
    Ok((1.0 - x).powf(1.0 / p as f64))
}

/// Smallest eigenvalue, over complete blocks of `h` regressors, of
/// `sum phi phi^T / (1 + |phi|^2)`.
///
/// This is a per-realization stand-in for the conditional-expectation bound
/// in the excitation condition; it is exact for deterministic streams.
pub fn estimate_alpha(phis: &[Vec<f64>], h: usize) -> Result<f64> {
    if h == 0 {
        return Err(invalid("h must be at least 1"));
    }
    if phis.len() < h {
        return Err(invalid(format!("need at least one block of {h} regressors, got {}", phis.len())));
    }
    let m = phis[0].len();
    if m == 0 {
        return Err(invalid("regressors must be non-empty"));
    }
    let mut best = f64::INFINITY;
    for block in phis.chunks_exact(h) {
        let mut s = DMatrix::<f64>::zeros(m, m);
        for phi in block {
            crate::error::check_dim(m, phi.len())?;
            let w = 1.0 / (1.0 + phi.iter().map(|x| x * x).sum::<f64>());
            for i in 0..m {
                for j in 0..m {
                    s[(i, j)] += w * phi[i] * phi[j];
                }
            }
        }
        best = best.min(s.symmetric_eigenvalues().min());
    }
    Ok(best.max(0.0))
}

/// Largest singular value.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().max()
}

/// Settings of a product-norm probe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub regressors: RegressorGen,
    pub dim: usize,
    pub mu: f64,
    pub delta: f64,
    pub beta: f64,
    pub h: usize,
    pub p: u32,
    pub max_blocks: usize,
    pub trials: usize,
    pub seed: u64,
    /// Excitation constant; estimated from the first trial's stream when absent.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Run even when μ exceeds the admissible bound.
    #[serde(default)]
    pub allow_inadmissible: bool,
}

/// Empirical L_p norms of homogeneous products next to the geometric bound.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityProbeReport {
    pub p: u32,
    pub h: usize,
    pub alpha_hat: f64,
    pub mu: f64,
    pub block_counts: Vec<usize>,
    pub empirical_pnorm: Vec<f64>,
    pub theoretical_bound: Vec<f64>,
    pub trials: usize,
    /// Trials abandoned by the overflow guard, and other notes.
    pub diagnostics: Vec<String>,
}

/// Least-squares line `y = slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn affine_fit(xs: &[f64], ys: &[f64]) -> Result<AffineFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(invalid("affine fit needs two or more paired points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(invalid("affine fit needs distinct abscissae"));
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(AffineFit { slope, intercept: my - slope * mx, r_squared })
}

impl StabilityProbeReport {
    pub fn ratio(&self) -> Vec<f64> {
        self.empirical_pnorm.iter().zip(&self.theoretical_bound).map(|(e, b)| e / b).collect()
    }

    /// Fit of `ln(empirical_pnorm)` against the block count.
    pub fn log_slope(&self) -> Result<AffineFit> {
        let xs: Vec<f64> = self.block_counts.iter().map(|&n| n as f64).collect();
        let ys: Vec<f64> = self.empirical_pnorm.iter().map(|v| v.ln()).collect();
        affine_fit(&xs, &ys)
    }

    /// Columns `n_blocks, empirical_pnorm, theoretical_bound, ratio`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["n_blocks", "empirical_pnorm", "theoretical_bound", "ratio"])?;
        for (i, r) in self.ratio().iter().enumerate() {
            w.write_record(&[
                self.block_counts[i].to_string(),
                self.empirical_pnorm[i].to_string(),
                self.theoretical_bound[i].to_string(),
                r.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

enum TrialOutcome {
    Norms(Vec<f64>),
    Aborted(String),
}

fn probe_trial(cfg: &ProbeConfig, trial: usize) -> Result<TrialOutcome> {
    let mut r = rng::substream(cfg.seed, trial as u64);
    // Factors k = 1 ..= n*h + 1; index 0 is drawn but unused.
    let phis = cfg.regressors.generate(cfg.dim, cfg.max_blocks * cfg.h + 2, &mut r);
    let mut prod = DMatrix::<f64>::identity(2 * cfg.dim, 2 * cfg.dim);
    let mut norms = Vec::with_capacity(cfg.max_blocks);
    let mut k = 1;
    for n in 1..=cfg.max_blocks {
        while k <= n * cfg.h + 1 {
            let t = augmented_transition(&phis[k], cfg.mu, cfg.delta, cfg.beta)?;
            prod = &t.matrix * &prod;
            k += 1;
        }
        let norm = operator_norm(&prod);
        if !(norm <= PROBE_OVERFLOW) {
            return Ok(TrialOutcome::Aborted(format!(
                "trial {trial}: product norm {norm:e} after {n} blocks exceeds {PROBE_OVERFLOW:e}"
            )));
        }
        norms.push(norm);
    }
    Ok(TrialOutcome::Norms(norms))
}

/// Monte Carlo estimate of `|| prod_{k=1}^{n h + 1} (I0 - Abar[k]) ||_{L_p}`
/// for `n = 1 ..= max_blocks`.
///
/// Trials run in parallel on independent substreams and are reduced in trial
/// order, so the report does not depend on scheduling.
pub fn product_norm_probe(cfg: &ProbeConfig) -> Result<StabilityProbeReport> {
    if cfg.trials == 0 || cfg.max_blocks == 0 || cfg.h == 0 || cfg.p == 0 {
        return Err(invalid("trials, max_blocks, h and p must all be at least 1"));
    }
    if !(cfg.mu >= 0.0 && cfg.delta > 0.0 && (0.0..1.0).contains(&cfg.beta)) {
        return Err(invalid("need mu >= 0, delta > 0 and 0 <= beta < 1"));
    }
    cfg.regressors.validate(cfg.dim)?;

    let mut diagnostics = Vec::new();
    let alpha_hat = match cfg.alpha {
        Some(a) => a,
        None => {
            let mut r = rng::substream(cfg.seed, 0);
            let phis = cfg.regressors.generate(cfg.dim, cfg.max_blocks * cfg.h + 2, &mut r);
            estimate_alpha(&phis[1..], cfg.h)?
        }
    };

    let kappa = if cfg.beta == 0.0 {
        f64::INFINITY
    } else if cfg.mu > 0.0 && cfg.mu < 1.0 {
        cfg.beta.ln() / cfg.mu.ln()
    } else {
        f64::NAN
    };
    let admissible = alpha_hat > 0.0
        && cfg.mu > 0.0
        && kappa > 1.0
        && mu_max(alpha_hat.min(1.0), cfg.h, cfg.p, kappa, QMode::Homogeneous)
            .is_ok_and(|bound| cfg.mu <= bound);
    if !admissible {
        if !cfg.allow_inadmissible {
            return Err(invalid(format!(
                "mu = {} is not admissible for alpha = {alpha_hat}, h = {}, p = {}, beta = {}; set allow_inadmissible to probe anyway",
                cfg.mu, cfg.h, cfg.p, cfg.beta
            )));
        }
        diagnostics.push(format!("mu = {} outside the admissible range; bound reported as 1", cfg.mu));
    }
    let lambda = if admissible { lambda_p(alpha_hat, cfg.mu, cfg.p).ok() } else { None };

    let outcomes: Vec<Result<TrialOutcome>> =
        (0..cfg.trials).into_par_iter().map(|t| probe_trial(cfg, t)).collect();
    let mut sums = vec![0.0; cfg.max_blocks];
    let mut completed = 0usize;
    for o in outcomes {
        match o? {
            TrialOutcome::Norms(norms) => {
                completed += 1;
                for (s, v) in sums.iter_mut().zip(norms) {
                    *s += v.powi(cfg.p as i32);
                }
            }
            TrialOutcome::Aborted(msg) => diagnostics.push(msg),
        }
    }
    if completed == 0 {
        return Err(Error::NumericalDegeneracy("every probe trial overflowed".into()));
    }
    let block_counts: Vec<usize> = (1..=cfg.max_blocks).collect();
    let empirical_pnorm = sums.iter().map(|s| (s / completed as f64).powf(1.0 / cfg.p as f64)).collect();
    let theoretical_bound = block_counts
        .iter()
        .map(|&n| lambda.map_or(1.0, |l| l.powi(n as i32)))
        .collect();
    Ok(StabilityProbeReport {
        p: cfg.p,
        h: cfg.h,
        alpha_hat,
        mu: cfg.mu,
        block_counts,
        empirical_pnorm,
        theoretical_bound,
        trials: completed,
        diagnostics,
    })
}

/// Parameter-variation regime for [`tracking_bound_shape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundRegime {
    /// Bounded variation of size ν and noise level σ: `nu/mu + sigma`.
    Bounded,
    /// Zero-mean variation: `c_delta/sqrt(mu) + c_v*sqrt(mu)`.
    ZeroMean,
}

/// Order-level tracking bound with unit constants. Diagnostic only.
pub fn tracking_bound_shape(
    nu: f64,
    sigma: f64,
    mu: f64,
    regime: BoundRegime,
    c_delta: Option<f64>,
    c_v: Option<f64>,
) -> Result<f64> {
    if !(mu > 0.0) {
        return Err(invalid(format!("mu must be positive, got {mu}")));
    }
    match regime {
        BoundRegime::Bounded => Ok(nu / mu + sigma),
        BoundRegime::ZeroMean => match (c_delta, c_v) {
            (Some(cd), Some(cv)) => Ok(cd / mu.sqrt() + cv * mu.sqrt()),
            _ => Err(invalid("zero_mean regime needs both c_delta and c_v")),
        },
    }
}

/// Order-level averaged prediction-error bound
/// `(1 + mu) sigma_v^2 + mu^(kappa-1) + mu^kappa sigma_v + xi/mu`. Diagnostic only.
pub fn prediction_bound_shape(mu: f64, kappa: f64, sigma_v: f64, xi: f64) -> Result<f64> {
    if !(mu > 0.0) || !(kappa > 1.0) || !(xi >= 0.0) || !(sigma_v >= 0.0) {
        return Err(invalid("need mu > 0, kappa > 1, xi >= 0 and sigma_v >= 0"));
    }
    Ok((1.0 + mu) * sigma_v * sigma_v + mu.powf(kappa - 1.0) + mu.powf(kappa) * sigma_v + xi / mu)
}
