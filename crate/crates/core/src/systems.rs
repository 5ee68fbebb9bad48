//! Seeded data generators.
//!
//! A [`Trajectory`] holds aligned samples `(phi[k], theta[k], y[k])` where
//! `y[k] = phi[k]^T theta[k] + noise[k]`: the output a filter sees after
//! regressing on `phi[k]`. Every generator is a pure function of its
//! arguments and seed. Regressors, parameters and observation noise come from
//! separate substreams of the seed, so e.g. switching the jumps off leaves the
//! regressor sequence untouched.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, invalid, Error, Result};
use crate::rng::{self, StreamRng};

const LANE_REGRESSORS: u64 = 0;
const LANE_PARAMETERS: u64 = 1;
const LANE_NOISE: u64 = 2;

/// The linear stochastic system with AR regressors and piecewise-constant
/// parameters that jump every `jump_period` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JumpSystemSpec {
    pub a_diag: Vec<f64>,
    /// Regressor innovation covariance is `state_noise_cov_scale * I`.
    pub state_noise_cov_scale: f64,
    pub jump_period: usize,
    pub jump_scale: f64,
    pub obs_noise_std: f64,
    pub dim: usize,
    pub horizon: usize,
    pub theta0_std: f64,
}

impl Default for JumpSystemSpec {
    /// Six-dimensional system with `A = diag(0.6, 0.7, 0.9, 0.2, 0.5, 0.3)`,
    /// innovations `N(0, 4I)`, jumps `0.5 * U([-1, 1]^6)` every 100 steps,
    /// observation noise std 0.1 and 500 steps.
    fn default() -> Self {
        Self {
            a_diag: vec![0.6, 0.7, 0.9, 0.2, 0.5, 0.3],
            state_noise_cov_scale: 4.0,
            jump_period: 100,
            jump_scale: 0.5,
            obs_noise_std: 0.1,
            dim: 6,
            horizon: 500,
            theta0_std: 1.0,
        }
    }
}

impl JumpSystemSpec {
    pub fn validate(&self) -> Result<()> {
        check_dim(self.dim, self.a_diag.len())?;
        if self.dim == 0 {
            return Err(invalid("dim must be at least 1"));
        }
        if let Some(a) = self.a_diag.iter().find(|a| !(a.abs() < 1.0)) {
            return Err(invalid(format!("a_diag entries must satisfy |a| < 1, got {a}")));
        }
        if self.jump_period == 0 {
            return Err(invalid("jump_period must be at least 1"));
        }
        for (name, v) in [
            ("state_noise_cov_scale", self.state_noise_cov_scale),
            ("jump_scale", self.jump_scale),
            ("obs_noise_std", self.obs_noise_std),
            ("theta0_std", self.theta0_std),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        Ok(())
    }
}

/// A stream of regressors, true parameters and outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub phi: Vec<Vec<f64>>,
    pub theta: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    /// Realized observation noise `y[k] - phi[k]^T theta[k]`.
    pub noise: Vec<f64>,
    pub seed: u64,
    pub meta: String,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl Trajectory {
    /// Assembles a trajectory from regressors, parameters and noise draws.
    pub fn from_parts(
        phi: Vec<Vec<f64>>,
        theta: Vec<Vec<f64>>,
        noise_draws: &[f64],
        seed: u64,
        meta: impl Into<String>,
    ) -> Result<Self> {
        let n = phi.len();
        check_dim(n, theta.len())?;
        check_dim(n, noise_draws.len())?;
        let mut y = Vec::with_capacity(n);
        let mut noise = Vec::with_capacity(n);
        for ((p, t), &v) in phi.iter().zip(&theta).zip(noise_draws) {
            check_dim(p.len(), t.len())?;
            let clean = dot(p, t);
            let out = clean + v;
            y.push(out);
            noise.push(out - clean);
        }
        Ok(Self { phi, theta, y, noise, seed, meta: meta.into() })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.phi.first().map_or(0, Vec::len)
    }

    /// `theta[k] - theta[k-1]`, zero at `k = 0`.
    pub fn variation(&self, k: usize) -> Vec<f64> {
        if k == 0 {
            return vec![0.0; self.dim()];
        }
        self.theta[k].iter().zip(&self.theta[k - 1]).map(|(a, b)| a - b).collect()
    }

    /// Hash over the bit patterns of every sample.
    pub fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for ((p, t), y) in self.phi.iter().zip(&self.theta).zip(&self.y) {
            p.iter().chain(t).chain(std::iter::once(y)).for_each(|v| v.to_bits().hash(&mut h));
        }
        h.finish()
    }

    /// CSV with columns `k, phi_0..phi_{m-1}, theta_0..theta_{m-1}, y`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let m = self.dim();
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["k".to_string()];
        header.extend((0..m).map(|i| format!("phi_{i}")));
        header.extend((0..m).map(|i| format!("theta_{i}")));
        header.push("y".into());
        w.write_record(&header)?;
        for k in 0..self.len() {
            let mut rec = vec![k.to_string()];
            rec.extend(self.phi[k].iter().map(f64::to_string));
            rec.extend(self.theta[k].iter().map(f64::to_string));
            rec.push(self.y[k].to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format produced by [`Trajectory::write_csv`]. Lines starting
    /// with `#` are skipped.
    pub fn read_csv<R: Read>(reader: R, seed: u64) -> Result<Self> {
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(reader);
        let headers = r.headers()?.clone();
        let m = headers.iter().filter(|h| h.starts_with("phi_")).count();
        if headers.len() != 2 * m + 2 || headers.get(0) != Some("k") {
            return Err(Error::Format(format!("unexpected trajectory header {headers:?}")));
        }
        let (mut phi, mut theta, mut y, mut noise) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for rec in r.records() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .skip(1)
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("bad number in trajectory CSV: {e}")))?;
            check_dim(2 * m + 1, vals.len())?;
            let p = vals[..m].to_vec();
            let t = vals[m..2 * m].to_vec();
            let out = vals[2 * m];
            noise.push(out - dot(&p, &t));
            y.push(out);
            phi.push(p);
            theta.push(t);
        }
        Ok(Self { phi, theta, y, noise, seed, meta: "ingested from CSV".into() })
    }
}

/// Jump system: `phi[k+1] = A phi[k] + v[k]`, `phi[0] = 0`; `theta[0] ~ N(0, s^2 I)`
/// and `theta[k] = theta[k-1] + jump_scale * U([-1,1]^m)` when `k` is a
/// positive multiple of `jump_period`; `y[k] = phi[k]^T theta[k] + eps[k]`.
pub fn gen_jump_system(spec: &JumpSystemSpec, seed: u64) -> Result<Trajectory> {
    spec.validate()?;
    let m = spec.dim;
    let t = spec.horizon;
    let mut r_phi = rng::substream(seed, LANE_REGRESSORS);
    let mut r_theta = rng::substream(seed, LANE_PARAMETERS);
    let mut r_noise = rng::substream(seed, LANE_NOISE);
    let v_std = spec.state_noise_cov_scale.sqrt();

    let mut phi = Vec::with_capacity(t);
    let mut theta = Vec::with_capacity(t);
    let mut cur_phi = vec![0.0; m];
    let mut cur_theta = rng::normal_vec(&mut r_theta, m, spec.theta0_std);
    for k in 0..t {
        if k > 0 {
            let v = rng::normal_vec(&mut r_phi, m, v_std);
            for ((p, a), vi) in cur_phi.iter_mut().zip(&spec.a_diag).zip(v) {
                *p = a * *p + vi;
            }
            if k % spec.jump_period == 0 {
                let zeta = rng::uniform_vec(&mut r_theta, m, -1.0, 1.0);
                for (th, z) in cur_theta.iter_mut().zip(zeta) {
                    *th += spec.jump_scale * z;
                }
            }
        }
        phi.push(cur_phi.clone());
        theta.push(cur_theta.clone());
    }
    let eps = rng::normal_vec(&mut r_noise, t, spec.obs_noise_std);
    let meta = format!(
        "jump system m={m} T={t} period={} scale={}; theta0 is the Gaussian draw, first jump at k={}",
        spec.jump_period, spec.jump_scale, spec.jump_period
    );
    Trajectory::from_parts(phi, theta, &eps, seed, meta)
}

/// Gaussian random walk `theta[k] = theta[k-1] + N(0, s^2 I)` with `theta[0] = 0`.
pub fn gen_random_walk_params(
    dim: usize,
    increment_std: f64,
    horizon: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if horizon == 0 {
        return Err(invalid("horizon must be at least 1"));
    }
    if !(increment_std >= 0.0 && increment_std.is_finite()) {
        return Err(invalid(format!("increment_std must be non-negative, got {increment_std}")));
    }
    let mut r = rng::substream(seed, LANE_PARAMETERS);
    let mut out = Vec::with_capacity(horizon);
    let mut cur = vec![0.0; dim];
    out.push(cur.clone());
    for _ in 1..horizon {
        for (c, d) in cur.iter_mut().zip(rng::normal_vec(&mut r, dim, increment_std)) {
            *c += d;
        }
        out.push(cur.clone());
    }
    Ok(out)
}

/// How regressors are produced for constant-parameter streams and probes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RegressorGen {
    /// i.i.d. `N(0, I)`.
    IidGaussian,
    /// `e_1, e_2, ..., e_m, e_1, ...`; with `random_phase` the starting basis
    /// vector is drawn from the seed.
    CyclingBasis {
        #[serde(default)]
        random_phase: bool,
    },
    /// Diagonal AR(1): `phi[k+1] = diag(a) phi[k] + N(0, s^2 I)`, `phi[0] = 0`.
    ArDiag { a_diag: Vec<f64>, noise_std: f64 },
}

impl RegressorGen {
    pub fn cycling() -> Self {
        RegressorGen::CyclingBasis { random_phase: false }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if dim == 0 {
            return Err(invalid("dim must be at least 1"));
        }
        if let RegressorGen::ArDiag { a_diag, noise_std } = self {
            check_dim(dim, a_diag.len())?;
            if a_diag.iter().any(|a| !(a.abs() < 1.0)) {
                return Err(invalid("ar_diag coefficients must satisfy |a| < 1"));
            }
            if !(*noise_std >= 0.0) {
                return Err(invalid("ar_diag noise_std must be non-negative"));
            }
        }
        Ok(())
    }

    /// Draws `horizon` regressors of length `dim` from `rng`.
    pub fn generate(&self, dim: usize, horizon: usize, rng: &mut StreamRng) -> Vec<Vec<f64>> {
        match self {
            RegressorGen::IidGaussian => (0..horizon).map(|_| rng::normal_vec(rng, dim, 1.0)).collect(),
            RegressorGen::CyclingBasis { random_phase } => {
                let phase = if *random_phase {
                    (rng::uniform(rng, 0.0, dim as f64) as usize).min(dim - 1)
                } else {
                    0
                };
                (0..horizon)
                    .map(|k| {
                        let mut e = vec![0.0; dim];
                        e[(k + phase) % dim] = 1.0;
                        e
                    })
                    .collect()
            }
            RegressorGen::ArDiag { a_diag, noise_std } => {
                let mut cur = vec![0.0; dim];
                let mut out = Vec::with_capacity(horizon);
                for k in 0..horizon {
                    if k > 0 {
                        for ((p, a), v) in cur.iter_mut().zip(a_diag).zip(rng::normal_vec(rng, dim, *noise_std)) {
                            *p = a * *p + v;
                        }
                    }
                    out.push(cur.clone());
                }
                out
            }
        }
    }
}

/// Stream with `theta[k] = theta` for all `k`.
pub fn gen_constant_param_stream(
    theta: &[f64],
    regressor_gen: &RegressorGen,
    noise_std: f64,
    horizon: usize,
    seed: u64,
) -> Result<Trajectory> {
    if horizon == 0 {
        return Err(invalid("horizon must be at least 1"));
    }
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(invalid(format!("noise_std must be non-negative, got {noise_std}")));
    }
    let m = theta.len();
    regressor_gen.validate(m)?;
    let phi = regressor_gen.generate(m, horizon, &mut rng::substream(seed, LANE_REGRESSORS));
    let noise = rng::normal_vec(&mut rng::substream(seed, LANE_NOISE), horizon, noise_std);
    let meta = format!("constant parameters m={m} T={horizon} regressors={regressor_gen:?}");
    Trajectory::from_parts(phi, vec![theta.to_vec(); horizon], &noise, seed, meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_jump_schedule() {
        let spec = JumpSystemSpec::default();
        let tr = gen_jump_system(&spec, 3).unwrap();
        assert_eq!(tr.len(), 500);
        let jumps: Vec<usize> = (1..tr.len())
            .filter(|&k| tr.variation(k).iter().any(|d| *d != 0.0))
            .collect();
        assert_eq!(jumps, vec![100, 200, 300, 400]);
        for k in jumps {
            assert!(tr.variation(k).iter().all(|d| d.abs() <= 0.5 + 1e-12));
        }
    }

    #[test]
    fn degenerate_jump_systems() {
        let spec = JumpSystemSpec { jump_scale: 0.0, theta0_std: 0.0, ..Default::default() };
        let tr = gen_jump_system(&spec, 1).unwrap();
        assert!(tr.theta.iter().flatten().all(|v| *v == 0.0));
        assert_eq!(tr.y, tr.noise);

        let spec = JumpSystemSpec { state_noise_cov_scale: 0.0, a_diag: vec![0.0; 6], ..Default::default() };
        let tr = gen_jump_system(&spec, 1).unwrap();
        assert!(tr.phi.iter().flatten().all(|v| *v == 0.0));
        assert_eq!(tr.y, tr.noise);
    }

    #[test]
    fn jump_spec_validation() {
        let bad = JumpSystemSpec { a_diag: vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0], ..Default::default() };
        assert!(gen_jump_system(&bad, 0).is_err());
        let bad = JumpSystemSpec { jump_period: 0, ..Default::default() };
        assert!(gen_jump_system(&bad, 0).is_err());
        let bad = JumpSystemSpec { dim: 5, ..Default::default() };
        assert!(matches!(gen_jump_system(&bad, 0), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn reproducible_and_seed_sensitive() {
        let spec = JumpSystemSpec::default();
        let a = gen_jump_system(&spec, 9).unwrap();
        let b = gen_jump_system(&spec, 9).unwrap();
        let c = gen_jump_system(&spec, 10).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }

    #[test]
    fn model_consistency_is_exact() {
        let tr = gen_jump_system(&JumpSystemSpec::default(), 4).unwrap();
        for k in 0..tr.len() {
            assert_eq!(tr.y[k] - dot(&tr.phi[k], &tr.theta[k]), tr.noise[k]);
        }
    }

    #[test]
    fn ar_regressors_stay_bounded() {
        let spec = JumpSystemSpec { horizon: 20_000, ..Default::default() };
        let tr = gen_jump_system(&spec, 5).unwrap();
        let second_moment = tr.phi.iter().map(|p| dot(p, p)).sum::<f64>() / tr.len() as f64;
        // Stationary value: sum_i 4 / (1 - a_i^2) ~= 42.3
        assert!(second_moment.is_finite() && (30.0..55.0).contains(&second_moment), "{second_moment}");
    }

    #[test]
    fn random_walk_examples() {
        let flat = gen_random_walk_params(3, 0.0, 10, 1).unwrap();
        assert!(flat.iter().flatten().all(|v| *v == 0.0));
        let a = gen_random_walk_params(4, 1.0, 2, 77).unwrap();
        let b = gen_random_walk_params(4, 1.0, 2, 77).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0], vec![0.0; 4]);
        assert!(gen_random_walk_params(2, 1.0, 0, 1).is_err());
    }

    #[test]
    fn cycling_basis_visits_each_axis() {
        let tr = gen_constant_param_stream(&[1.0, 2.0, 3.0], &RegressorGen::cycling(), 0.0, 7, 0).unwrap();
        let axes: Vec<usize> = tr.phi.iter().map(|p| p.iter().position(|v| *v == 1.0).unwrap()).collect();
        assert_eq!(axes, vec![0, 1, 2, 0, 1, 2, 0]);
        assert_eq!(tr.y, vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 1.0]);
    }

    #[test]
    fn zero_theta_zero_noise_gives_zero_output() {
        let tr = gen_constant_param_stream(&[0.0; 4], &RegressorGen::IidGaussian, 0.0, 50, 2).unwrap();
        assert!(tr.y.iter().all(|v| *v == 0.0));
        let again = gen_constant_param_stream(&[0.0; 4], &RegressorGen::IidGaussian, 0.0, 50, 2).unwrap();
        assert_eq!(tr, again);
    }

    #[test]
    fn csv_round_trip() {
        let spec = JumpSystemSpec { horizon: 30, ..Default::default() };
        let tr = gen_jump_system(&spec, 8).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let back = Trajectory::read_csv(buf.as_slice(), 8).unwrap();
        assert_eq!(back.phi, tr.phi);
        assert_eq!(back.theta, tr.theta);
        assert_eq!(back.y, tr.y);
    }
}
