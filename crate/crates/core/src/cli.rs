//! Command-line front end. Every stage reads its inputs from the run
//! directory written by the previous stage.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::pipeline;

#[derive(Debug, Parser)]
#[command(name = "koopdrift", version, about = "Koopman forecasting of classifier weights under periodic drift")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the packed training stream and its seed manifest.
    Generate(Common),
    /// Warm-start training over the training window.
    Train(Common),
    /// Fit the Koopman model to the stored trajectory.
    Fit(Common),
    /// Autonomous rollout plus frozen and retrained baselines.
    Rollout(Common),
    /// Distance correlation and transfer entropy matrices.
    Couple(Common),
    /// Assemble the run report from stored stages.
    Report(Common),
    /// Run every stage in sequence.
    All(Common),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Config file with `key = value` lines; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset kind, A-F.
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// fourier, detrend_fourier or auto.
    #[arg(long)]
    pub strategy: Option<String>,
    #[arg(long)]
    pub harmonics: Option<usize>,
    #[arg(long)]
    pub pca_threshold: Option<f64>,
    #[arg(long)]
    pub te_bins: Option<usize>,
    /// Run directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Compute coupling even on a non-periodic stream.
    #[arg(long)]
    pub force: bool,
    /// autonomous or reproject_time.
    #[arg(long)]
    pub rollout_mode: Option<String>,
    /// Worker threads for per-timestep evaluation and coupling pairs.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Any config key, e.g. `--set train.lambda_wd=0`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl Common {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut pairs = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| Error::Config(format!("cannot read config {}: {e}", p.display())))?;
                RunConfig::parse_pairs(&text)?
            }
            None => Vec::new(),
        };
        let mut push = |k: &str, v: String| pairs.push((k.to_string(), v));
        if let Some(d) = &self.dataset {
            push("dataset", d.clone());
        }
        if let Some(s) = self.seed {
            push("seed", s.to_string());
        }
        if let Some(s) = &self.strategy {
            push("koopman.strategy", s.clone());
        }
        if let Some(h) = self.harmonics {
            push("koopman.harmonics", h.to_string());
        }
        if let Some(p) = self.pca_threshold {
            push("koopman.pca_threshold", p.to_string());
        }
        if let Some(b) = self.te_bins {
            push("coupling.te_bins", b.to_string());
        }
        if let Some(m) = &self.rollout_mode {
            push("koopman.rollout_mode", m.clone());
        }
        if let Some(o) = &self.out {
            push("out", o.display().to_string());
        }
        if let Some(j) = self.jobs {
            push("jobs", j.to_string());
        }
        if self.force {
            push("force", "true".into());
        }
        for kv in &self.overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        RunConfig::from_pairs(&pairs)
    }
}

fn stage_generate(cfg: &RunConfig) -> Result<()> {
    pipeline::save_dataset(&cfg.out, cfg)?;
    println!(
        "dataset {}: {} steps x {} samples -> {}",
        cfg.kind(),
        cfg.spec.total_steps,
        cfg.train.batch_size,
        cfg.out.join("dataset.csv").display()
    );
    Ok(())
}

fn stage_train(cfg: &RunConfig) -> Result<()> {
    let t = pipeline::train(cfg)?;
    pipeline::save_train(&cfg.out, cfg, &t)?;
    println!(
        "trained t=0..{}: mean epochs {:.1}, mean train acc {:.4}, min {:.4}{}",
        cfg.train_end - 1,
        t.trajectory.mean_epochs(),
        t.trajectory.mean_accuracy(),
        t.trajectory.min_accuracy(),
        t.cold_mean_epochs()
            .map(|c| format!(", cold-moment mean epochs {c:.1}"))
            .unwrap_or_default()
    );
    Ok(())
}

fn stage_fit(cfg: &RunConfig) -> Result<()> {
    let t = pipeline::load_train(&cfg.out, cfg)?;
    let m = pipeline::fit(cfg, &t)?;
    pipeline::save_fit(&cfg.out, cfg, &m)?;
    println!(
        "fit {}: p={} (explained {:.4}), rho pre {:.4}, post {:.6}, residual {:.4}",
        m.options.strategy,
        m.basis.dim(),
        m.basis.explained_ratio(),
        m.spectral_radius_pre,
        m.spectral_radius,
        m.fit_residual
    );
    for w in &m.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn stage_rollout(cfg: &RunConfig) -> Result<()> {
    let t = pipeline::load_train(&cfg.out, cfg)?;
    let m = pipeline::load_fit(&cfg.out, cfg)?;
    let r = pipeline::rollout(cfg, &t, &m)?;
    pipeline::save_rollout(&cfg.out, cfg, &t.names, &r)?;
    for s in [&r.koopman_auto, &r.frozen, &r.retrained] {
        println!(
            "{:<13} mean {:.4}  min {:.4}  below 90%: {}/{}",
            s.mode.to_string(),
            s.mean,
            s.min,
            s.steps_below_90,
            s.len()
        );
    }
    Ok(())
}

fn stage_couple(cfg: &RunConfig) -> Result<()> {
    let t = pipeline::load_train(&cfg.out, cfg)?;
    let c = pipeline::couple(cfg, &t)?;
    pipeline::save_coupling(&cfg.out, cfg, &c)?;
    println!(
        "dCor mean off-diagonal {:.3}, fraction > 0.5 {:.1}%, TE ratio L1/L2 {}",
        c.dcor_mean_offdiag,
        100.0 * c.dcor_frac_above_half,
        c.te_ratio_l1_l2.map(|r| format!("{r:.3}")).unwrap_or_else(|| "undefined".into())
    );
    Ok(())
}

fn stage_report(cfg: &RunConfig) -> Result<()> {
    let t = pipeline::load_train(&cfg.out, cfg)?;
    let m = pipeline::load_fit(&cfg.out, cfg)?;
    let r = pipeline::load_rollout(&cfg.out, cfg)?;
    let c = pipeline::load_coupling(&cfg.out, cfg)?;
    let report = pipeline::build_report(cfg, &t, &m, &r, c)?;
    pipeline::save_report(&cfg.out, cfg, &report)?;
    print!("{}", report.table_csv());
    Ok(())
}

fn stage_all(cfg: &RunConfig) -> Result<()> {
    stage_generate(cfg)?;
    stage_train(cfg)?;
    stage_fit(cfg)?;
    stage_rollout(cfg)?;
    match stage_couple(cfg) {
        Err(e @ Error::Unsupported(_)) => eprintln!("skipping coupling: {e}"),
        other => other?,
    }
    stage_report(cfg)
}

pub fn execute(command: &Command) -> Result<()> {
    let (common, stage): (&Common, fn(&RunConfig) -> Result<()>) = match command {
        Command::Generate(c) => (c, stage_generate),
        Command::Train(c) => (c, stage_train),
        Command::Fit(c) => (c, stage_fit),
        Command::Rollout(c) => (c, stage_rollout),
        Command::Couple(c) => (c, stage_couple),
        Command::Report(c) => (c, stage_report),
        Command::All(c) => (c, stage_all),
    };
    let cfg = common.resolve()?;
    std::fs::create_dir_all(&cfg.out)?;
    crate::io::write_atomic(&cfg.out.join("config.txt"), cfg.to_text().as_bytes())?;
    match cfg.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))?
            .install(|| stage(&cfg)),
        None => stage(&cfg),
    }
}

/// Parses `args` (including the program name) and runs the command;
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
