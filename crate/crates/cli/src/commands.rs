use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use mlms::anc::{load_wav, make_scene, run_anc_with, sweep_beta_with, synthetic_scene, AncScene, DEFAULT_PATH};
use mlms::filters::{step, validate_config_with, Admissibility, Algorithm, FilterConfig, FilterState};
use mlms::metrics::{aggregate, cesaro_avg, mean_std, mse_db, TrialReport};
use mlms::rng::trial_seed;
use mlms::systems::gen_jump_system;
use mlms::theory::{lambda_p, mu_max_terms, product_norm_probe, ProbeConfig};
use rayon::prelude::*;

use crate::config::{
    default_betas, AlgorithmEntry, CorpusSection, ExperimentConfig, Loaded, SceneSection, SweepSection, CORPUS_ENV,
};
use crate::output::{slug, OutputDir};

fn entry(algorithm: Algorithm, mu: f64, delta: Option<f64>, beta: Option<f64>) -> AlgorithmEntry {
    AlgorithmEntry {
        algorithm,
        label: None,
        mu: Some(mu),
        delta,
        beta,
        lambda_forget: None,
        rho: None,
        box_half_width: None,
    }
}

/// The four trackers compared on the jump system.
pub fn default_tracking_algorithms() -> Vec<AlgorithmEntry> {
    vec![
        entry(Algorithm::Mlms, 0.1, Some(0.1), Some(0.099)),
        entry(Algorithm::Nlms, 0.1, Some(0.1), None),
        entry(Algorithm::SgdMomentum, 1e-3, None, Some(0.1)),
        entry(Algorithm::Sgd, 1e-3, None, None),
    ]
}

/// The six enhancement filters.
pub fn default_anc_algorithms() -> Vec<AlgorithmEntry> {
    let mut rls = entry(Algorithm::Rls, 0.1, Some(1e-2), None);
    rls.lambda_forget = Some(0.999);
    let mut gngd = entry(Algorithm::Gngd, 0.1, Some(1e-12), None);
    gngd.rho = Some(0.01);
    vec![
        entry(Algorithm::Sgd, 0.1, None, None),
        entry(Algorithm::SgdMomentum, 0.1, None, Some(0.2)),
        rls,
        gngd,
        entry(Algorithm::Nlms, 0.25, Some(1e-12), None),
        entry(Algorithm::Mlms, 0.25, Some(1e-12), Some(0.15)),
    ]
}

fn algorithms_or(cfg: &ExperimentConfig, default: fn() -> Vec<AlgorithmEntry>) -> Vec<AlgorithmEntry> {
    if cfg.algorithms.is_empty() {
        default()
    } else {
        cfg.algorithms.clone()
    }
}

/// Rejects configurations with hard errors before anything runs.
fn preflight(entries: &[AlgorithmEntry], dim: usize) -> Result<Vec<(String, FilterConfig)>> {
    entries
        .iter()
        .map(|e| {
            let fc = e.filter_config(dim);
            let errors: Vec<String> =
                validate_config_with(&fc, None).into_iter().filter(|d| d.is_error()).map(|d| d.message).collect();
            if !errors.is_empty() {
                bail!("[[algorithms]] entry `{}`: {}", e.label(), errors.join("; "));
            }
            Ok((e.label(), fc))
        })
        .collect()
}

fn csv_writer(buf: &mut Vec<u8>) -> csv::Writer<&mut Vec<u8>> {
    csv::Writer::from_writer(buf)
}

pub struct RunSummary {
    pub files: Vec<PathBuf>,
}

pub fn synth_track(loaded: &Loaded, out_dir: &Path) -> Result<RunSummary> {
    let cfg = &loaded.config;
    let spec = cfg.system.clone().unwrap_or_default();
    spec.validate().context("[system]")?;
    let trials = cfg.trials_or(10);
    let algos = preflight(&algorithms_or(cfg, default_tracking_algorithms), spec.dim)?;

    let trajectories = (0..trials as u64)
        .into_par_iter()
        .map(|t| gen_jump_system(&spec, trial_seed(cfg.seed, t)))
        .collect::<mlms::Result<Vec<_>>>()?;

    let mut out = OutputDir::create(out_dir, "synth-track", &loaded.digest, cfg.seed)?;
    let mut curves = Vec::new();
    let mut summary = Vec::new();
    for (label, fc) in &algos {
        let reports = trajectories
            .par_iter()
            .map(|tr| {
                let mut s = FilterState::new(fc);
                let mut rep = TrialReport { seed: tr.seed, config_digest: loaded.digest.clone(), ..Default::default() };
                for k in 0..tr.len() {
                    rep.per_step_mse_db.push(mse_db(&s.theta_hat, &tr.theta[k])?);
                    let o = step(&mut s, fc, &tr.phi[k], tr.y[k])?;
                    rep.per_step_sq_pred_err.push(o.error * o.error);
                }
                Ok(rep)
            })
            .collect::<mlms::Result<Vec<_>>>()
            .with_context(|| format!("running {label}"))?;
        let agg = aggregate(&reports)?;
        out.write(&format!("per_step_{}.csv", slug(label)), |w| {
            mlms::metrics::write_per_step_csv(w, &agg.mean_mse_db, &agg.mean_sq_pred_err)?;
            Ok(())
        })?;

        let period = spec.jump_period;
        let windows: Vec<f64> = (0..spec.horizon / period)
            .map(|j| cesaro_avg(&agg.mean_mse_db, j * period + period / 2, (j + 1) * period))
            .collect::<mlms::Result<_>>()?;
        let window_mean = if windows.is_empty() { f64::NAN } else { windows.iter().sum::<f64>() / windows.len() as f64 };
        let overall = cesaro_avg(&agg.mean_mse_db, 0, spec.horizon)?;
        summary.push((label.clone(), overall, window_mean, *agg.mean_mse_db.last().unwrap()));
        curves.push((label.clone(), agg.mean_mse_db));
    }

    out.write("curves.csv", |buf| {
        let mut w = csv_writer(buf);
        let mut head = vec!["k".to_string()];
        head.extend(curves.iter().map(|(l, _)| l.clone()));
        w.write_record(&head)?;
        for k in 0..spec.horizon {
            let mut row = vec![k.to_string()];
            row.extend(curves.iter().map(|(_, c)| c[k].to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    })?;
    out.write("summary.csv", |buf| {
        let mut w = csv_writer(buf);
        w.write_record(["algorithm", "mean_mse_db", "settled_window_mse_db", "final_mse_db"])?;
        for (l, a, b, c) in &summary {
            w.write_record(&[l.clone(), a.to_string(), b.to_string(), c.to_string()])?;
        }
        w.flush()?;
        Ok(())
    })?;

    println!("{:<10} {:>12} {:>14} {:>12}", "algorithm", "mean MSE dB", "settled MSE dB", "final MSE dB");
    for (l, a, b, c) in &summary {
        println!("{l:<10} {a:>12.3} {b:>14.3} {c:>12.3}");
    }
    Ok(RunSummary { files: out.written().to_vec() })
}

fn corpus_root(corpus: &CorpusSection) -> Result<PathBuf> {
    match (&corpus.dir, std::env::var_os(CORPUS_ENV)) {
        (Some(d), _) => Ok(d.clone()),
        (None, Some(d)) => Ok(PathBuf::from(d)),
        (None, None) => Err(anyhow!(
            "no corpus root: set `scenes.corpus.dir` in the config or the {CORPUS_ENV} environment variable"
        )),
    }
}

fn corpus_scenes(corpus: &CorpusSection, levels: &[f64], seed: u64) -> Result<Vec<Vec<AncScene>>> {
    let root = corpus_root(corpus)?;
    if !root.is_dir() {
        bail!(
            "corpus root {} does not exist; fix `scenes.corpus.dir` (or {CORPUS_ENV}), \
             or set `scenes.synthetic_fallback = true`",
            root.display()
        );
    }
    let noise_path = root.join(&corpus.noise);
    if !noise_path.is_file() {
        bail!("`scenes.corpus.noise`: {} not found", noise_path.display());
    }
    let noise = load_wav(&noise_path).with_context(|| format!("`scenes.corpus.noise`: {}", noise_path.display()))?;
    if corpus.clean.is_empty() {
        bail!("`scenes.corpus.clean` lists no files");
    }
    let mut clean = Vec::new();
    for (i, c) in corpus.clean.iter().enumerate() {
        let p = root.join(c);
        if !p.is_file() {
            bail!("`scenes.corpus.clean[{i}]`: {} not found", p.display());
        }
        clean.push(load_wav(&p).with_context(|| format!("`scenes.corpus.clean[{i}]`: {}", p.display()))?);
    }
    let path = corpus.path_fir.clone().unwrap_or_else(|| DEFAULT_PATH.to_vec());
    levels
        .iter()
        .map(|&level| {
            clean
                .iter()
                .enumerate()
                .map(|(u, c)| {
                    make_scene(c, &noise, level, &path, trial_seed(seed, u as u64))
                        .with_context(|| format!("`scenes.corpus.clean[{u}]`"))
                })
                .collect()
        })
        .collect()
}

/// One list of scenes per level: the corpus when configured and present,
/// synthetic scenes otherwise.
fn resolve_scenes(sec: &SceneSection, levels: &[f64], seed: u64) -> Result<Vec<Vec<AncScene>>> {
    if let Some(corpus) = &sec.corpus {
        match corpus_scenes(corpus, levels, seed) {
            Ok(s) => return Ok(s),
            Err(e) if sec.synthetic_fallback => {
                eprintln!("warning: {e:#}; using synthetic scenes");
            }
            Err(e) => return Err(e),
        }
    }
    levels
        .iter()
        .map(|&level| {
            (0..sec.utterances as u64)
                .into_par_iter()
                .map(|u| synthetic_scene(&sec.synthetic, level, trial_seed(seed, u)))
                .collect::<mlms::Result<Vec<_>>>()
                .context("[scenes.synthetic]")
        })
        .collect()
}

pub fn anc(loaded: &Loaded, out_dir: &Path) -> Result<RunSummary> {
    let cfg = &loaded.config;
    let sec = cfg.scenes.clone().unwrap_or_default();
    if sec.snr_levels.is_empty() {
        bail!("`scenes.snr_levels` is empty");
    }
    let algos = preflight(&algorithms_or(cfg, default_anc_algorithms), sec.taps)?;
    let scenes = resolve_scenes(&sec, &sec.snr_levels, cfg.seed)?;

    struct Row {
        level: f64,
        utterance: usize,
        label: String,
        snr_in: f64,
        snr_out: f64,
        delta: f64,
    }
    let mut rows = Vec::new();
    for (level, level_scenes) in sec.snr_levels.iter().zip(&scenes) {
        for (label, fc) in &algos {
            let runs = level_scenes
                .par_iter()
                .map(|s| run_anc_with(fc, s, sec.taps, sec.topology))
                .collect::<mlms::Result<Vec<_>>>()
                .with_context(|| format!("running {label} at {level} dB"))?;
            for (u, r) in runs.iter().enumerate() {
                let rep = &r.report;
                let (Some(snr_in), Some(snr_out), Some(delta)) = (rep.snr_in_db, rep.snr_out_db, rep.delta_snr_db)
                else {
                    bail!("scene {u} at {level} dB has a silent clean signal; SNR is undefined");
                };
                rows.push(Row { level: *level, utterance: u, label: label.clone(), snr_in, snr_out, delta });
            }
        }
    }

    let mut out = OutputDir::create(out_dir, "anc", &loaded.digest, cfg.seed)?;
    out.write("per_utterance.csv", |buf| {
        let mut w = csv_writer(buf);
        w.write_record(["snr_level_db", "utterance", "algorithm", "snr_in", "snr_out", "delta_snr"])?;
        for r in &rows {
            w.write_record(&[
                r.level.to_string(),
                r.utterance.to_string(),
                r.label.clone(),
                r.snr_in.to_string(),
                r.snr_out.to_string(),
                r.delta.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    })?;

    let mut table = Vec::new();
    for (label, _) in &algos {
        let mut cells = Vec::new();
        for level in &sec.snr_levels {
            let d: Vec<f64> = rows.iter().filter(|r| &r.label == label && r.level == *level).map(|r| r.delta).collect();
            cells.push(mean_std(&d)?);
        }
        table.push((label.clone(), cells));
    }
    out.write("table.csv", |buf| {
        let mut w = csv_writer(buf);
        let mut head = vec!["algorithm".to_string()];
        for l in &sec.snr_levels {
            head.push(format!("delta_snr_{l}db_mean"));
            head.push(format!("delta_snr_{l}db_std"));
        }
        w.write_record(&head)?;
        for (label, cells) in &table {
            let mut row = vec![label.clone()];
            for c in cells {
                row.push(c.mean.to_string());
                row.push(c.std.to_string());
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    })?;

    print!("{:<10}", "ΔSNR dB");
    for l in &sec.snr_levels {
        print!(" {:>16}", format!("{l} dB"));
    }
    println!();
    for (label, cells) in &table {
        print!("{label:<10}");
        for c in cells {
            print!(" {:>16}", format!("{:.2} ± {:.2}", c.mean, c.std));
        }
        println!();
    }
    Ok(RunSummary { files: out.written().to_vec() })
}

pub fn sweep_beta(loaded: &Loaded, out_dir: &Path) -> Result<RunSummary> {
    let cfg = &loaded.config;
    let sec = cfg.scenes.clone().unwrap_or_default();
    let sweep = cfg.sweep.clone().unwrap_or(SweepSection { betas: default_betas(), snr_db: 0.0 });
    if sweep.betas.is_empty() {
        bail!("`sweep.betas` is empty");
    }
    let base = match cfg.algorithms.as_slice() {
        [] => vec![entry(Algorithm::Mlms, 0.35, Some(1e-12), Some(0.0))],
        [one] => vec![one.clone()],
        _ => bail!("sweep-beta takes exactly one [[algorithms]] entry, found {}", cfg.algorithms.len()),
    };
    let (label, fc) = preflight(&base, sec.taps)?.remove(0);
    let scenes = resolve_scenes(&sec, &[sweep.snr_db], cfg.seed)?.remove(0);
    let rows = sweep_beta_with(&fc, &scenes, &sweep.betas, sec.taps, sec.topology)?;

    let mut out = OutputDir::create(out_dir, "sweep-beta", &loaded.digest, cfg.seed)?;
    out.write("sweep.csv", |buf| {
        let mut w = csv_writer(buf);
        for r in &rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    })?;
    println!("{label} at {} dB, mu = {}", sweep.snr_db, fc.mu);
    println!("{:>6} {:>10} {:>8}", "beta", "mean ΔSNR", "std");
    for r in &rows {
        println!("{:>6.3} {:>10.3} {:>8.3}", r.beta, r.mean_delta_snr, r.std_delta_snr);
    }
    Ok(RunSummary { files: out.written().to_vec() })
}

pub fn stability_probe(loaded: &Loaded, out_dir: &Path) -> Result<RunSummary> {
    let cfg = &loaded.config;
    let p = cfg.probe.clone().ok_or_else(|| anyhow!("stability-probe needs a [probe] table"))?;
    let h = p.h.unwrap_or(p.dim);
    let mu = match (p.mu, p.alpha) {
        (Some(mu), _) => mu,
        (None, Some(alpha)) => mu_max_terms(alpha, h, p.p, p.kappa, p.q_mode).context("[probe]")?.value,
        (None, None) => bail!("[probe] needs `mu`, or `alpha` so that the admissible bound can be used"),
    };
    let probe = ProbeConfig {
        regressors: p.regressors.clone(),
        dim: p.dim,
        mu,
        delta: p.delta,
        beta: p.beta.unwrap_or(mu * mu),
        h,
        p: p.p,
        max_blocks: p.max_blocks,
        trials: cfg.trials_or(200),
        seed: cfg.seed,
        alpha: p.alpha,
        allow_inadmissible: p.allow_inadmissible,
    };
    let report = product_norm_probe(&probe).context("[probe]")?;
    let mut out = OutputDir::create(out_dir, "stability-probe", &loaded.digest, cfg.seed)?;
    out.write("probe.csv", |buf| {
        report.write_csv(buf)?;
        Ok(())
    })?;
    let fit = report.log_slope()?;
    let worst = report.ratio().into_iter().fold(0.0, f64::max);
    println!(
        "mu = {mu:.6e}, alpha_hat = {:.4}, log-norm slope per block = {:.4e}, max empirical/bound = {worst:.4}",
        report.alpha_hat, fit.slope
    );
    for d in &report.diagnostics {
        println!("note: {d}");
    }
    Ok(RunSummary { files: out.written().to_vec() })
}

/// Prints diagnostics; returns whether any of them is an error.
pub fn validate(loaded: &Loaded, mut sink: impl Write) -> Result<bool> {
    let cfg = &loaded.config;
    let adm = cfg.admissibility.as_ref();
    let mut any_error = false;
    if let Some(a) = adm {
        let terms = mu_max_terms(a.alpha, a.h, a.p, a.kappa, a.q_mode).context("[admissibility]")?;
        let lam = lambda_p(a.alpha, terms.value, a.p)?;
        writeln!(sink, "mu_max = {:.15} (terms {:?})", terms.value, terms.terms)?;
        writeln!(sink, "lambda_{} at mu_max = {lam:.15}", a.p)?;
    }
    let dim = adm.map_or(1, |a| a.dim);
    let admissibility = adm.map(|a| Admissibility { alpha: a.alpha, h: a.h, p: a.p, q_mode: a.q_mode });
    for e in &cfg.algorithms {
        let fc = e.filter_config(dim);
        let diags = validate_config_with(&fc, admissibility.as_ref());
        if diags.is_empty() {
            writeln!(sink, "{}: ok", e.label())?;
        }
        for d in diags {
            any_error |= d.is_error();
            writeln!(sink, "{}: {d}", e.label())?;
        }
    }
    Ok(any_error)
}
