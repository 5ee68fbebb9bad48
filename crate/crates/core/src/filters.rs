//! Online update rules.
//!
//! Every filter estimates the parameter vector of
//! `y[k+1] = phi[k]^T theta[k] + v[k+1]` one sample at a time. The shared
//! pattern is
//!
//! ```text
//! prediction = phi^T theta_hat[k]
//! error      = y[k+1] - prediction
//! theta_hat[k+1] = theta_hat[k] + gain * error * phi + beta * (theta_hat[k] - theta_hat[k-1])
//! ```
//!
//! with `gain = mu / (delta + |phi|^2)` for MLMS and NLMS, `gain = mu` for the
//! unnormalized SGD variants, an adaptive regularizer for GNGD and a
//! Riccati-style gain vector for RLS.
//!
//! NLMS is literally MLMS with `beta = 0`: both go through the same kernel, so
//! the two produce bit-identical estimates.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::theory::{self, QMode};

/// Lower bound applied to the adaptive GNGD regularizer.
pub const GNGD_EPS_FLOOR: f64 = 1e-12;

/// Tolerance used by [`FilterState::check_invariants`] for RLS covariance
/// symmetry, relative to the largest entry (at least 1).
pub const RLS_SYMMETRY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Mlms,
    ProjectedMlms,
    Sgd,
    SgdMomentum,
    Nlms,
    Rls,
    Gngd,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::Mlms,
        Algorithm::ProjectedMlms,
        Algorithm::Sgd,
        Algorithm::SgdMomentum,
        Algorithm::Nlms,
        Algorithm::Rls,
        Algorithm::Gngd,
    ];

    /// Short display name used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Mlms => "MLMS",
            Algorithm::ProjectedMlms => "P-MLMS",
            Algorithm::Sgd => "SGD",
            Algorithm::SgdMomentum => "SGD-M",
            Algorithm::Nlms => "NLMS",
            Algorithm::Rls => "RLS",
            Algorithm::Gngd => "GNGD",
        }
    }

    fn uses_momentum(self) -> bool {
        matches!(
            self,
            Algorithm::Mlms | Algorithm::ProjectedMlms | Algorithm::SgdMomentum
        )
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace(['-', ' '], "_");
        Ok(match key.as_str() {
            "mlms" => Algorithm::Mlms,
            "projected_mlms" | "p_mlms" => Algorithm::ProjectedMlms,
            "sgd" | "lms" => Algorithm::Sgd,
            "sgd_momentum" | "sgd_m" => Algorithm::SgdMomentum,
            "nlms" => Algorithm::Nlms,
            "rls" => Algorithm::Rls,
            "gngd" => Algorithm::Gngd,
            _ => return Err(invalid(format!("unknown algorithm `{s}`"))),
        })
    }
}

/// Algorithm selector plus every hyperparameter any of the filters uses.
///
/// Fields that an algorithm does not use are ignored by it (e.g. `rho` outside
/// GNGD), but they are still validated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub algorithm: Algorithm,
    /// Step size μ.
    pub mu: f64,
    /// Regularization δ. Also the initial GNGD regularizer and the RLS
    /// initialization `P0 = I / δ`.
    pub delta: f64,
    /// Momentum coefficient β.
    pub beta: f64,
    /// RLS forgetting factor λ.
    pub lambda_forget: f64,
    /// GNGD regularizer adaptation rate ρ.
    pub rho: f64,
    /// Half-width L of the projection box `[-L, L]^m`.
    pub box_half_width: f64,
    pub dim: usize,
}

impl FilterConfig {
    pub fn new(algorithm: Algorithm, dim: usize) -> Self {
        Self {
            algorithm,
            mu: 0.1,
            delta: if algorithm == Algorithm::Rls { 1e-2 } else { 0.1 },
            beta: 0.0,
            lambda_forget: 1.0,
            rho: 0.01,
            box_half_width: f64::INFINITY,
            dim,
        }
    }

    pub fn mlms(dim: usize, mu: f64, delta: f64, beta: f64) -> Self {
        Self { mu, delta, beta, ..Self::new(Algorithm::Mlms, dim) }
    }

    pub fn projected_mlms(dim: usize, mu: f64, delta: f64, beta: f64, half_width: f64) -> Self {
        Self {
            mu,
            delta,
            beta,
            box_half_width: half_width,
            ..Self::new(Algorithm::ProjectedMlms, dim)
        }
    }

    pub fn nlms(dim: usize, mu: f64, delta: f64) -> Self {
        Self { mu, delta, ..Self::new(Algorithm::Nlms, dim) }
    }

    pub fn sgd(dim: usize, mu: f64) -> Self {
        Self { mu, ..Self::new(Algorithm::Sgd, dim) }
    }

    pub fn sgd_momentum(dim: usize, mu: f64, beta: f64) -> Self {
        Self { mu, beta, ..Self::new(Algorithm::SgdMomentum, dim) }
    }

    pub fn rls(dim: usize, lambda_forget: f64, delta: f64) -> Self {
        Self { lambda_forget, delta, ..Self::new(Algorithm::Rls, dim) }
    }

    pub fn gngd(dim: usize, mu: f64, rho: f64, eps0: f64) -> Self {
        Self { mu, rho, delta: eps0, ..Self::new(Algorithm::Gngd, dim) }
    }

    pub fn with_algorithm(mut self, algorithm: Algorithm) -> Self {
        self.algorithm = algorithm;
        self
    }

    pub fn with_beta(mut self, beta: f64) -> Self {
        self.beta = beta;
        self
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim;
        self
    }

    /// κ such that `beta = mu^kappa` (momentum scale fixed to one).
    ///
    /// `None` unless both μ and β lie in (0, 1); β = 0 corresponds to κ = ∞.
    pub fn implied_kappa(&self) -> Option<f64> {
        if self.beta == 0.0 && self.mu > 0.0 && self.mu < 1.0 {
            return Some(f64::INFINITY);
        }
        if self.mu > 0.0 && self.mu < 1.0 && self.beta > 0.0 && self.beta < 1.0 {
            Some(self.beta.ln() / self.mu.ln())
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub severity: Severity,
    pub message: String,
}

impl Diagnostic {
    fn error(message: impl Into<String>) -> Self {
        Self { severity: Severity::Error, message: message.into() }
    }

    fn warning(message: impl Into<String>) -> Self {
        Self { severity: Severity::Warning, message: message.into() }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        write!(f, "{tag}: {}", self.message)
    }
}

/// Excitation data `(alpha, h, p)` against which μ is checked for stability
/// admissibility.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Admissibility {
    pub alpha: f64,
    pub h: usize,
    pub p: u32,
    pub q_mode: QMode,
}

pub fn validate_config(cfg: &FilterConfig) -> Vec<Diagnostic> {
    validate_config_with(cfg, None)
}

/// Hard invariant violations are reported as errors, questionable but legal
/// settings as warnings. Never fails; diagnostics are data.
pub fn validate_config_with(cfg: &FilterConfig, adm: Option<&Admissibility>) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    if !(cfg.mu > 0.0 && cfg.mu.is_finite()) {
        out.push(Diagnostic::error(format!("mu must be positive and finite, got {}", cfg.mu)));
    }
    if !(cfg.delta > 0.0 && cfg.delta.is_finite()) {
        out.push(Diagnostic::error(format!("delta must be positive and finite, got {}", cfg.delta)));
    }
    if !(0.0..1.0).contains(&cfg.beta) {
        out.push(Diagnostic::error(format!("beta must lie in [0, 1), got {}", cfg.beta)));
    }
    if !(cfg.lambda_forget > 0.0 && cfg.lambda_forget <= 1.0) {
        out.push(Diagnostic::error(format!(
            "lambda_forget must lie in (0, 1], got {}",
            cfg.lambda_forget
        )));
    }
    if !(cfg.rho > 0.0 && cfg.rho.is_finite()) {
        out.push(Diagnostic::error(format!("rho must be positive, got {}", cfg.rho)));
    }
    if !(cfg.box_half_width > 0.0) {
        out.push(Diagnostic::error(format!(
            "box_half_width must be positive, got {}",
            cfg.box_half_width
        )));
    }
    if cfg.dim == 0 {
        out.push(Diagnostic::error("dim must be at least 1"));
    }
    if !cfg.algorithm.uses_momentum() && cfg.beta != 0.0 {
        out.push(Diagnostic::warning(format!(
            "beta = {} is ignored by {}",
            cfg.beta, cfg.algorithm
        )));
    }

    if matches!(cfg.algorithm, Algorithm::Mlms | Algorithm::ProjectedMlms) && cfg.beta > 0.0 {
        match cfg.implied_kappa() {
            Some(kappa) if kappa <= 1.0 => out.push(Diagnostic::warning(format!(
                "implied kappa = ln(beta)/ln(mu) = {kappa:.4} <= 1; tracking guarantees need beta = mu^kappa with kappa > 1"
            ))),
            None if cfg.mu >= 1.0 => out.push(Diagnostic::warning(format!(
                "mu = {} >= 1, so beta = mu^kappa has no kappa > 1",
                cfg.mu
            ))),
            _ => {}
        }
    }

    if let Some(adm) = adm {
        let kappa = cfg.implied_kappa().unwrap_or(2.0);
        if kappa > 1.0 {
            match theory::mu_max(adm.alpha, adm.h, adm.p, kappa, adm.q_mode) {
                Ok(bound) if cfg.mu > bound => out.push(Diagnostic::warning(format!(
                    "mu = {} exceeds the stability bound {bound:.6} for alpha = {}, h = {}, p = {}",
                    cfg.mu, adm.alpha, adm.h, adm.p
                ))),
                Ok(_) => {}
                Err(e) => out.push(Diagnostic::warning(format!("stability bound unavailable: {e}"))),
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
struct GngdMemory {
    error: f64,
    phi: Vec<f64>,
    norm_sq: f64,
    eps: f64,
}

/// Live state of one adaptive filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterState {
    /// θ̂_k
    pub theta_hat: Vec<f64>,
    /// θ̂_{k−1}
    pub theta_hat_prev: Vec<f64>,
    /// RLS inverse-covariance accumulator.
    pub rls_cov: Option<DMatrix<f64>>,
    /// Current GNGD regularizer ε_k.
    pub gngd_eps: Option<f64>,
    gngd_memory: Option<GngdMemory>,
}

impl FilterState {
    /// Zero estimates (θ̂_{−1} = θ̂_0 = 0) plus the algorithm's auxiliaries.
    pub fn new(cfg: &FilterConfig) -> Self {
        Self::with_estimates(cfg, vec![0.0; cfg.dim], vec![0.0; cfg.dim])
    }

    pub fn with_estimates(cfg: &FilterConfig, theta_hat: Vec<f64>, theta_hat_prev: Vec<f64>) -> Self {
        let rls_cov = (cfg.algorithm == Algorithm::Rls)
            .then(|| DMatrix::identity(cfg.dim, cfg.dim) / cfg.delta);
        let gngd_eps = (cfg.algorithm == Algorithm::Gngd).then_some(cfg.delta);
        Self { theta_hat, theta_hat_prev, rls_cov, gngd_eps, gngd_memory: None }
    }

    pub fn dim(&self) -> usize {
        self.theta_hat.len()
    }

    /// Checks the structural invariants: matching lengths, box membership for
    /// projected MLMS, and symmetric positive definiteness of the RLS matrix.
    pub fn check_invariants(&self, cfg: &FilterConfig) -> Result<()> {
        check_dim(cfg.dim, self.theta_hat.len())?;
        check_dim(cfg.dim, self.theta_hat_prev.len())?;
        if cfg.algorithm == Algorithm::ProjectedMlms {
            let l = cfg.box_half_width;
            if let Some(x) = self.theta_hat.iter().find(|x| x.abs() > l) {
                return Err(Error::NumericalDegeneracy(format!("estimate {x} outside [-{l}, {l}]")));
            }
        }
        if let Some(p) = &self.rls_cov {
            let asym = (p - p.transpose()).abs().max();
            if asym > RLS_SYMMETRY_TOL * p.abs().max().max(1.0) {
                return Err(Error::NumericalDegeneracy(format!(
                    "RLS covariance asymmetry {asym:e}"
                )));
            }
            let min_eig = p.clone().symmetric_eigenvalues().min();
            if !(min_eig > 0.0) {
                return Err(Error::NumericalDegeneracy(format!(
                    "RLS covariance min eigenvalue {min_eig:e}"
                )));
            }
        }
        Ok(())
    }
}

/// Per-step outputs of a filter update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    /// ŷ_{k+1} = φ_k^T θ̂_k
    pub prediction: f64,
    /// e_k = y_{k+1} − ŷ_{k+1}
    pub error: f64,
    /// Scalar step multiplying `error * phi`; for RLS the inverse of the
    /// gain denominator `lambda + phi^T P phi`.
    pub effective_step: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_inputs(state: &FilterState, phi: &[f64], y: f64) -> Result<()> {
    check_dim(state.dim(), phi.len())?;
    if let Some(i) = phi.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteInput(format!("phi[{i}] = {}", phi[i])));
    }
    if !y.is_finite() {
        return Err(Error::NonFiniteInput(format!("y = {y}")));
    }
    Ok(())
}

fn check_algorithm(cfg: &FilterConfig, allowed: &[Algorithm]) -> Result<()> {
    if allowed.contains(&cfg.algorithm) {
        Ok(())
    } else {
        Err(invalid(format!("operation does not apply to {}", cfg.algorithm)))
    }
}

pub fn predict(state: &FilterState, phi: &[f64]) -> Result<f64> {
    check_dim(state.dim(), phi.len())?;
    Ok(dot(phi, &state.theta_hat))
}

/// `theta <- theta + gain*e*phi + beta*(theta - prev)`, `prev <- old theta`.
fn momentum_update(state: &mut FilterState, phi: &[f64], gain: f64, error: f64, beta: f64) {
    let step = gain * error;
    for ((t, p), &x) in state
        .theta_hat
        .iter_mut()
        .zip(state.theta_hat_prev.iter_mut())
        .zip(phi)
    {
        let current = *t;
        *t = current + step * x + beta * (current - *p);
        *p = current;
    }
}

fn normalized_momentum_step(
    state: &mut FilterState,
    mu: f64,
    delta: f64,
    beta: f64,
    phi: &[f64],
    y: f64,
) -> StepOutput {
    let alpha = mu / (delta + dot(phi, phi));
    let prediction = dot(phi, &state.theta_hat);
    let error = y - prediction;
    momentum_update(state, phi, alpha, error, beta);
    StepOutput { prediction, error, effective_step: alpha }
}

/// One MLMS update: normalized gradient step plus heavy-ball momentum.
pub fn step_mlms(state: &mut FilterState, cfg: &FilterConfig, phi: &[f64], y: f64) -> Result<StepOutput> {
    check_algorithm(cfg, &[Algorithm::Mlms])?;
    check_inputs(state, phi, y)?;
    Ok(normalized_momentum_step(state, cfg.mu, cfg.delta, cfg.beta, phi, y))
}

/// MLMS followed by Euclidean projection onto the box `[-L, L]^m`.
pub fn step_projected_mlms(
    state: &mut FilterState,
    cfg: &FilterConfig,
    phi: &[f64],
    y: f64,
) -> Result<StepOutput> {
    check_algorithm(cfg, &[Algorithm::ProjectedMlms])?;
    if !(cfg.box_half_width > 0.0) {
        return Err(invalid("box_half_width must be positive"));
    }
    check_inputs(state, phi, y)?;
    let out = normalized_momentum_step(state, cfg.mu, cfg.delta, cfg.beta, phi, y);
    project_box_in_place(&mut state.theta_hat, cfg.box_half_width);
    Ok(out)
}

/// SGD, SGD-momentum, NLMS, RLS and GNGD updates.
pub fn step_baseline(state: &mut FilterState, cfg: &FilterConfig, phi: &[f64], y: f64) -> Result<StepOutput> {
    check_algorithm(
        cfg,
        &[Algorithm::Sgd, Algorithm::SgdMomentum, Algorithm::Nlms, Algorithm::Rls, Algorithm::Gngd],
    )?;
    check_inputs(state, phi, y)?;
    match cfg.algorithm {
        Algorithm::Nlms => Ok(normalized_momentum_step(state, cfg.mu, cfg.delta, 0.0, phi, y)),
        Algorithm::Sgd | Algorithm::SgdMomentum => {
            let beta = if cfg.algorithm == Algorithm::Sgd { 0.0 } else { cfg.beta };
            let prediction = dot(phi, &state.theta_hat);
            let error = y - prediction;
            momentum_update(state, phi, cfg.mu, error, beta);
            Ok(StepOutput { prediction, error, effective_step: cfg.mu })
        }
        Algorithm::Rls => rls_step(state, cfg, phi, y),
        Algorithm::Gngd => Ok(gngd_step(state, cfg, phi, y)),
        Algorithm::Mlms | Algorithm::ProjectedMlms => unreachable!(),
    }
}

/// Dispatches to the update rule selected by `cfg.algorithm`.
pub fn step(state: &mut FilterState, cfg: &FilterConfig, phi: &[f64], y: f64) -> Result<StepOutput> {
    match cfg.algorithm {
        Algorithm::Mlms => step_mlms(state, cfg, phi, y),
        Algorithm::ProjectedMlms => step_projected_mlms(state, cfg, phi, y),
        _ => step_baseline(state, cfg, phi, y),
    }
}

fn rls_step(state: &mut FilterState, cfg: &FilterConfig, phi: &[f64], y: f64) -> Result<StepOutput> {
    let lambda = cfg.lambda_forget;
    let p = state
        .rls_cov
        .as_mut()
        .ok_or_else(|| invalid("RLS state has no covariance matrix"))?;
    let x = DVector::from_column_slice(phi);
    let px = &*p * &x;
    let denom = lambda + x.dot(&px);
    if !(denom > 0.0 && denom.is_finite()) {
        return Err(Error::NumericalDegeneracy(format!("RLS gain denominator {denom:e}")));
    }
    // Diagonal of the updated matrix, checked before anything is committed.
    for i in 0..px.len() {
        let d = (p[(i, i)] - px[i] * px[i] / denom) / lambda;
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::NumericalDegeneracy(format!(
                "RLS covariance lost positive definiteness (P[{i},{i}] = {d:e})"
            )));
        }
    }

    let prediction = dot(phi, &state.theta_hat);
    let error = y - prediction;
    for (t, g) in state.theta_hat.iter_mut().zip(px.iter()) {
        *t += g / denom * error;
    }
    state.theta_hat_prev.clone_from(&state.theta_hat);
    // P <- (P - P x x^T P / denom) / lambda, filled from one triangle so P
    // stays exactly symmetric.
    let m = px.len();
    for j in 0..m {
        for i in 0..=j {
            let v = (p[(i, j)] - px[i] * px[j] / denom) / lambda;
            p[(i, j)] = v;
            p[(j, i)] = v;
        }
    }
    Ok(StepOutput { prediction, error, effective_step: 1.0 / denom })
}

fn gngd_step(state: &mut FilterState, cfg: &FilterConfig, phi: &[f64], y: f64) -> StepOutput {
    let eps = state.gngd_eps.unwrap_or(cfg.delta);
    let norm_sq = dot(phi, phi);
    let alpha = cfg.mu / (eps + norm_sq);
    let prediction = dot(phi, &state.theta_hat);
    let error = y - prediction;
    momentum_update(state, phi, alpha, error, 0.0);

    // eps[k+1] = eps[k] - rho*mu * e[k] e[k-1] phi[k]^T phi[k-1] / (|phi[k-1]|^2 + eps[k-1])^2
    let next_eps = match &state.gngd_memory {
        Some(prev) => {
            let denom = prev.norm_sq + prev.eps;
            let grad = error * prev.error * dot(phi, &prev.phi) / (denom * denom);
            (eps - cfg.rho * cfg.mu * grad).max(GNGD_EPS_FLOOR)
        }
        None => eps,
    };
    match &mut state.gngd_memory {
        Some(mem) => {
            mem.error = error;
            mem.phi.copy_from_slice(phi);
            mem.norm_sq = norm_sq;
            mem.eps = eps;
        }
        None => {
            state.gngd_memory = Some(GngdMemory { error, phi: phi.to_vec(), norm_sq, eps });
        }
    }
    state.gngd_eps = Some(next_eps);
    StepOutput { prediction, error, effective_step: alpha }
}

/// Componentwise clamp to `[-L, L]`, the Euclidean projection onto the box.
pub fn project_box(x: &[f64], half_width: f64) -> Vec<f64> {
    let mut out = x.to_vec();
    project_box_in_place(&mut out, half_width);
    out
}

pub fn project_box_in_place(x: &mut [f64], half_width: f64) {
    for v in x {
        *v = v.clamp(-half_width, half_width);
    }
}

/// A configured filter owning its state.
#[derive(Debug, Clone)]
pub struct Filter {
    cfg: FilterConfig,
    state: FilterState,
}

impl Filter {
    /// Fails if the configuration violates a hard invariant.
    pub fn new(cfg: FilterConfig) -> Result<Self> {
        if let Some(d) = validate_config(&cfg).into_iter().find(Diagnostic::is_error) {
            return Err(invalid(d.message));
        }
        let state = FilterState::new(&cfg);
        Ok(Self { cfg, state })
    }

    pub fn config(&self) -> &FilterConfig {
        &self.cfg
    }

    pub fn state(&self) -> &FilterState {
        &self.state
    }

    pub fn estimate(&self) -> &[f64] {
        &self.state.theta_hat
    }

    /// Back to θ̂_{−1} = θ̂_0 = 0 and fresh auxiliaries.
    pub fn reset(&mut self) {
        self.state = FilterState::new(&self.cfg);
    }

    pub fn predict(&self, phi: &[f64]) -> Result<f64> {
        predict(&self.state, phi)
    }

    pub fn step(&mut self, phi: &[f64], y: f64) -> Result<StepOutput> {
        step(&mut self.state, &self.cfg, phi, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn predict_examples() {
        let cfg = FilterConfig::mlms(3, 0.1, 0.1, 0.0);
        let state = FilterState::new(&cfg);
        assert_eq!(predict(&state, &[1.0, 2.0, 3.0]).unwrap(), 0.0);

        let cfg2 = FilterConfig::mlms(2, 0.1, 0.1, 0.0);
        let s = FilterState::with_estimates(&cfg2, vec![1.0, 1.0], vec![0.0, 0.0]);
        assert_eq!(predict(&s, &[2.0, 3.0]).unwrap(), 5.0);
        let s = FilterState::with_estimates(&cfg2, vec![1.0, 0.0], vec![0.0, 0.0]);
        assert_eq!(predict(&s, &[0.0, 1.0]).unwrap(), 0.0);

        assert!(matches!(
            predict(&s, &[1.0, 2.0, 3.0]),
            Err(Error::DimensionMismatch { expected: 2, got: 3 })
        ));
    }

    #[test]
    fn mlms_single_step() {
        let cfg = FilterConfig::mlms(2, 0.1, 0.1, 0.099);
        let mut s = FilterState::new(&cfg);
        let out = step_mlms(&mut s, &cfg, &[1.0, 0.0], 1.0).unwrap();
        // alpha = 0.1 / 1.1; error = 1; momentum term vanishes
        assert!(close(out.effective_step, 0.090_909_090_909_090_9, 1e-15));
        assert_eq!(out.prediction, 0.0);
        assert_eq!(out.error, 1.0);
        assert!(close(s.theta_hat[0], 0.090_909_090_909_090_9, 1e-15));
        assert_eq!(s.theta_hat[1], 0.0);
        assert_eq!(s.theta_hat_prev, vec![0.0, 0.0]);
    }

    #[test]
    fn mlms_fixed_point_and_coast() {
        let cfg = FilterConfig::mlms(2, 0.1, 0.1, 0.2);
        let theta = vec![1.0, -2.0];
        let phi = [0.5, 0.25];
        let y = dot(&phi, &theta);

        let mut s = FilterState::with_estimates(&cfg, theta.clone(), theta.clone());
        let out = step_mlms(&mut s, &cfg, &phi, y).unwrap();
        assert_eq!(out.error, 0.0);
        assert_eq!(s.theta_hat, theta);

        let prev = vec![0.5, -1.0];
        let mut s = FilterState::with_estimates(&cfg, theta.clone(), prev.clone());
        step_mlms(&mut s, &cfg, &phi, y).unwrap();
        for i in 0..2 {
            assert!(close(s.theta_hat[i], theta[i] + 0.2 * (theta[i] - prev[i]), 1e-15));
        }
        assert_eq!(s.theta_hat_prev, theta);
    }

    #[test]
    fn mlms_rejects_non_finite_and_leaves_state() {
        let cfg = FilterConfig::mlms(2, 0.1, 0.1, 0.05);
        let mut s = FilterState::with_estimates(&cfg, vec![0.3, 0.4], vec![0.1, 0.2]);
        let before = s.clone();
        assert!(matches!(
            step_mlms(&mut s, &cfg, &[f64::NAN, 0.0], 1.0),
            Err(Error::NonFiniteInput(_))
        ));
        assert!(matches!(
            step_mlms(&mut s, &cfg, &[1.0, 0.0], f64::INFINITY),
            Err(Error::NonFiniteInput(_))
        ));
        assert_eq!(s, before);
    }

    #[test]
    fn step_mlms_requires_mlms_config() {
        let cfg = FilterConfig::nlms(2, 0.1, 0.1);
        let mut s = FilterState::new(&cfg);
        assert!(step_mlms(&mut s, &cfg, &[1.0, 0.0], 1.0).is_err());
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_box(&[0.5, -0.5], 1.0), vec![0.5, -0.5]);
        assert_eq!(project_box(&[2.0, -3.0], 1.0), vec![1.0, -1.0]);
        assert_eq!(project_box(&[1.0, 1.0], 1.0), vec![1.0, 1.0]);
    }

    #[test]
    fn projected_mlms_clamps_one_coordinate() {
        // Unprojected update (1.5, -0.2): start at (1, -0.2) coasting upward.
        let cfg = FilterConfig::projected_mlms(2, 0.1, 0.1, 0.5, 1.0);
        let mut s = FilterState::with_estimates(&cfg, vec![1.0, -0.2], vec![0.0, -0.2]);
        let phi = [0.0, 1.0];
        let y = -0.2; // zero error
        step_projected_mlms(&mut s, &cfg, &phi, y).unwrap();
        assert_eq!(s.theta_hat, vec![1.0, -0.2]);

        // Already at the corner and pushed outward: absorbed.
        let mut s = FilterState::with_estimates(&cfg, vec![1.0, 1.0], vec![0.9, 0.9]);
        step_projected_mlms(&mut s, &cfg, &[1.0, 1.0], 10.0).unwrap();
        assert_eq!(s.theta_hat, vec![1.0, 1.0]);
    }

    #[test]
    fn projected_matches_plain_inside_box() {
        let plain = FilterConfig::mlms(2, 0.1, 0.1, 0.05);
        let proj = FilterConfig::projected_mlms(2, 0.1, 0.1, 0.05, 10.0);
        let mut a = FilterState::new(&plain);
        let mut b = FilterState::new(&proj);
        for k in 0..50 {
            let phi = [(k as f64).sin(), (k as f64 * 0.7).cos()];
            let y = 0.3 * phi[0] - 0.8 * phi[1];
            step_mlms(&mut a, &plain, &phi, y).unwrap();
            step_projected_mlms(&mut b, &proj, &phi, y).unwrap();
        }
        assert_eq!(a.theta_hat, b.theta_hat);
    }

    #[test]
    fn sgd_single_step() {
        let cfg = FilterConfig::sgd(2, 1e-3);
        let mut s = FilterState::new(&cfg);
        step_baseline(&mut s, &cfg, &[1.0, 0.0], 1.0).unwrap();
        assert_eq!(s.theta_hat, vec![0.001, 0.0]);
    }

    #[test]
    fn sgd_momentum_uses_previous_estimate() {
        let cfg = FilterConfig::sgd_momentum(1, 0.5, 0.1);
        let mut s = FilterState::with_estimates(&cfg, vec![1.0], vec![0.0]);
        step_baseline(&mut s, &cfg, &[1.0], 2.0).unwrap();
        // 1 + 0.5*1*1 + 0.1*(1 - 0)
        assert!(close(s.theta_hat[0], 1.6, 1e-15));
    }

    #[test]
    fn nlms_matches_mlms_without_momentum() {
        let nlms = FilterConfig::nlms(3, 0.3, 0.2);
        let mlms = FilterConfig::mlms(3, 0.3, 0.2, 0.0);
        let mut a = FilterState::new(&nlms);
        let mut b = FilterState::new(&mlms);
        for k in 0..20 {
            let t = k as f64;
            let phi = [t.sin(), (2.0 * t).cos(), 0.5];
            let y = phi[0] - phi[2];
            let oa = step_baseline(&mut a, &nlms, &phi, y).unwrap();
            let ob = step_mlms(&mut b, &mlms, &phi, y).unwrap();
            assert_eq!(oa, ob);
        }
        assert_eq!(a.theta_hat, b.theta_hat);
    }

    /// Offline least squares over the same data, via the normal equations.
    fn least_squares(phis: &[Vec<f64>], ys: &[f64]) -> Vec<f64> {
        let m = phis[0].len();
        let mut a = DMatrix::<f64>::zeros(m, m);
        let mut b = DVector::<f64>::zeros(m);
        for (phi, &y) in phis.iter().zip(ys) {
            let x = DVector::from_column_slice(phi);
            a += &x * x.transpose();
            b += x * y;
        }
        a.lu().solve(&b).unwrap().iter().copied().collect()
    }

    #[test]
    fn rls_recovers_constant_parameter() {
        let theta = [0.7, -1.3];
        let mut rng = crate::rng::substream(11, 0);
        let phis: Vec<Vec<f64>> = (0..50).map(|_| crate::rng::normal_vec(&mut rng, 2, 1.0)).collect();
        let ys: Vec<f64> = phis.iter().map(|p| dot(p, &theta)).collect();
        let oracle = least_squares(&phis, &ys);
        assert!(close(oracle[0], theta[0], 1e-12) && close(oracle[1], theta[1], 1e-12));

        // Tiny regularization so the prior (1/delta)^-1 pull is negligible.
        let cfg = FilterConfig::rls(2, 1.0, 1e-12);
        let mut s = FilterState::new(&cfg);
        for (phi, &y) in phis.iter().zip(&ys) {
            step_baseline(&mut s, &cfg, phi, y).unwrap();
        }
        let err = ((s.theta_hat[0] - oracle[0]).powi(2) + (s.theta_hat[1] - oracle[1]).powi(2)).sqrt();
        assert!(err < 1e-8, "err = {err:e}");
        s.check_invariants(&cfg).unwrap();
    }

    #[test]
    fn rls_detects_lost_definiteness() {
        let cfg = FilterConfig::rls(2, 1.0, 1e-2);
        let mut s = FilterState::new(&cfg);
        s.rls_cov = Some(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -5.0]));
        let before = s.clone();
        let r = step_baseline(&mut s, &cfg, &[0.0, 1.0], 1.0);
        assert!(matches!(r, Err(Error::NumericalDegeneracy(_))));
        assert_eq!(s, before);
    }

    #[test]
    fn gngd_first_step_is_nlms_with_eps0() {
        let g = FilterConfig::gngd(2, 0.1, 0.01, 0.5);
        let n = FilterConfig::nlms(2, 0.1, 0.5);
        let mut a = FilterState::new(&g);
        let mut b = FilterState::new(&n);
        step_baseline(&mut a, &g, &[1.0, 2.0], 1.0).unwrap();
        step_baseline(&mut b, &n, &[1.0, 2.0], 1.0).unwrap();
        assert_eq!(a.theta_hat, b.theta_hat);
        assert_eq!(a.gngd_eps, Some(0.5));
    }

    #[test]
    fn gngd_regularizer_gradient_step() {
        let cfg = FilterConfig::gngd(1, 0.1, 0.01, 0.5);
        let mut s = FilterState::new(&cfg);
        // step 0: phi=1, y=1 -> e0 = 1, theta = 0.1/1.5
        step_baseline(&mut s, &cfg, &[1.0], 1.0).unwrap();
        let theta1 = 0.1 / 1.5;
        assert!(close(s.theta_hat[0], theta1, 1e-15));
        // step 1: phi=2, y=1 -> e1 = 1 - 2*theta1
        step_baseline(&mut s, &cfg, &[2.0], 1.0).unwrap();
        let e1 = 1.0 - 2.0 * theta1;
        let expected = 0.5 - 0.01 * 0.1 * e1 * 1.0 * 2.0 / (1.5f64 * 1.5);
        assert!(close(s.gngd_eps.unwrap(), expected, 1e-15));
    }

    #[test]
    fn gngd_regularizer_is_floored() {
        let cfg = FilterConfig { rho: 1e6, ..FilterConfig::gngd(1, 0.1, 1.0, 1e-3) };
        let mut s = FilterState::new(&cfg);
        step_baseline(&mut s, &cfg, &[1.0], 1.0).unwrap();
        step_baseline(&mut s, &cfg, &[1.0], 1.0).unwrap();
        assert_eq!(s.gngd_eps, Some(GNGD_EPS_FLOOR));
    }

    #[test]
    fn validation_examples() {
        let d = validate_config(&FilterConfig::mlms(6, 0.1, 0.1, 0.099));
        assert!(d.is_empty(), "{d:?}");
        let kappa = FilterConfig::mlms(6, 0.1, 0.1, 0.099).implied_kappa().unwrap();
        assert!(close(kappa, 1.004, 5e-4));

        let kappa = FilterConfig::mlms(50, 0.25, 1e-12, 0.15).implied_kappa().unwrap();
        assert!(close(kappa, 1.368, 5e-4));

        let d = validate_config(&FilterConfig::mlms(2, 0.1, 0.1, 1.2));
        assert!(d.iter().any(|d| d.is_error() && d.message.contains("beta")));

        // beta = 0.2 > mu = 0.1: kappa < 1, warning only
        let d = validate_config(&FilterConfig::mlms(2, 0.1, 0.1, 0.2));
        assert!(d.iter().all(|d| !d.is_error()));
        assert!(d.iter().any(|d| d.message.contains("kappa")));
    }

    #[test]
    fn validation_flags_hard_errors() {
        let bad = FilterConfig {
            mu: 0.0,
            delta: -1.0,
            lambda_forget: 1.5,
            dim: 0,
            ..FilterConfig::new(Algorithm::Rls, 1)
        };
        let errors: Vec<_> = validate_config(&bad).into_iter().filter(Diagnostic::is_error).collect();
        assert_eq!(errors.len(), 4, "{errors:?}");
        assert!(Filter::new(bad).is_err());
    }

    #[test]
    fn validation_checks_stability_bound() {
        let adm = Admissibility { alpha: 0.5, h: 5, p: 1, q_mode: QMode::Homogeneous };
        let ok = FilterConfig::mlms(2, 0.01, 0.1, 1e-4);
        assert!(validate_config_with(&ok, Some(&adm)).is_empty());
        let big = FilterConfig::mlms(2, 0.1, 0.1, 0.01);
        let d = validate_config_with(&big, Some(&adm));
        assert!(d.iter().any(|d| d.message.contains("stability bound")), "{d:?}");
    }

    #[test]
    fn filter_reset_restores_zero_state() {
        let mut f = Filter::new(FilterConfig::mlms(2, 0.2, 0.1, 0.04)).unwrap();
        f.step(&[1.0, 0.5], 2.0).unwrap();
        f.step(&[0.2, 0.5], 1.0).unwrap();
        assert_ne!(f.estimate(), &[0.0, 0.0]);
        f.reset();
        assert_eq!(f.state().theta_hat, vec![0.0, 0.0]);
        assert_eq!(f.state().theta_hat_prev, vec![0.0, 0.0]);
    }

    #[test]
    fn algorithm_names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.label().parse::<Algorithm>().unwrap(), a);
        }
        assert!("adam".parse::<Algorithm>().is_err());
    }

    fn stream(m: usize, t: usize) -> impl Strategy<Value = Vec<(Vec<f64>, f64)>> {
        prop::collection::vec((prop::collection::vec(-3.0..3.0f64, m), -5.0..5.0f64), t)
    }

    fn permute(v: &[f64], perm: &[usize]) -> Vec<f64> {
        perm.iter().map(|&i| v[i]).collect()
    }

    proptest! {
        #[test]
        fn projection_idempotent_nonexpansive(
            x in prop::collection::vec(-10.0..10.0f64, 4),
            y in prop::collection::vec(-10.0..10.0f64, 4),
            l in 0.1..5.0f64,
        ) {
            let px = project_box(&x, l);
            let py = project_box(&y, l);
            prop_assert_eq!(project_box(&px, l), px.clone());
            let d = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
            prop_assert!(d(&px, &py) <= d(&x, &y) + 1e-12);
        }

        #[test]
        fn projected_estimates_stay_in_box(data in stream(3, 40), l in 0.05..2.0f64, beta in 0.0..0.9f64) {
            let cfg = FilterConfig::projected_mlms(3, 0.8, 0.01, beta, l);
            let mut s = FilterState::new(&cfg);
            for (phi, y) in &data {
                step_projected_mlms(&mut s, &cfg, phi, *y * 10.0).unwrap();
                prop_assert!(s.theta_hat.iter().all(|v| v.abs() <= l));
            }
        }

        #[test]
        fn steps_commute_with_coordinate_permutation(
            data in stream(4, 25),
            perm in Just(vec![0usize, 1, 2, 3]).prop_shuffle(),
            algo in prop::sample::select(Algorithm::ALL.to_vec()),
        ) {
            let cfg = FilterConfig {
                mu: if matches!(algo, Algorithm::Sgd | Algorithm::SgdMomentum) { 0.01 } else { 0.3 },
                beta: if algo.uses_momentum() { 0.05 } else { 0.0 },
                box_half_width: 2.0,
                lambda_forget: 0.99,
                ..FilterConfig::new(algo, 4)
            };
            let mut a = FilterState::new(&cfg);
            let mut b = FilterState::new(&cfg);
            for (phi, y) in &data {
                let oa = step(&mut a, &cfg, phi, *y).unwrap();
                let ob = step(&mut b, &cfg, &permute(phi, &perm), *y).unwrap();
                prop_assert!((oa.prediction - ob.prediction).abs() < 1e-9);
            }
            let pa = permute(&a.theta_hat, &perm);
            for (u, v) in pa.iter().zip(&b.theta_hat) {
                prop_assert!((u - v).abs() < 1e-9 * (1.0 + u.abs()));
            }
        }

        #[test]
        fn rls_covariance_stays_spd(data in stream(3, 60)) {
            let cfg = FilterConfig::rls(3, 0.99, 1e-2);
            let mut s = FilterState::new(&cfg);
            for (phi, y) in &data {
                step_baseline(&mut s, &cfg, phi, *y).unwrap();
            }
            prop_assert!(s.check_invariants(&cfg).is_ok());
        }
    }
}
