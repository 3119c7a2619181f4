//! Warm-start sequential training on one dataset, with and without carrying
//! the Adam moments across timesteps.
//!
//!     cargo run --release --example train_trajectory -- [A-F] [steps]

use koopdrift::config::RunConfig;
use koopdrift::datasets::DriftKind;
use koopdrift::trainer::{layer2_trend_fraction, run_sequence};

fn main() -> koopdrift::Result<()> {
    let mut args = std::env::args().skip(1);
    let kind: DriftKind = args.next().as_deref().unwrap_or("D").parse()?;
    let cfg = RunConfig::new(kind);
    let steps: usize = args.next().and_then(|s| s.parse().ok()).unwrap_or(cfg.spec.period);

    let warm = run_sequence(&cfg.spec, &cfg.net(), &cfg.train, steps, cfg.seed)?;
    let mut cold_cfg = cfg.train.clone();
    cold_cfg.carry_moments = false;
    let cold = run_sequence(&cfg.spec, &cfg.net(), &cold_cfg, steps, cfg.seed)?;

    let w = &warm.trajectory;
    println!("{kind}: {} params, {steps} timesteps", w.n_params());
    println!("  train accuracy mean {:.4}, min {:.4}", w.mean_accuracy(), w.min_accuracy());
    println!("  epochs per step: carried moments {:.1}, reset moments {:.1}", w.mean_epochs(), cold.trajectory.mean_epochs());
    println!("  layer-2 parameters with a significant trend: {:.2}", layer2_trend_fraction(w, &cfg.net()));
    for t in (0..steps).step_by((steps / 5).max(1)) {
        let row: Vec<String> = w.columns[t].as_slice().iter().take(4).map(|v| format!("{v:+.3}")).collect();
        println!("  t={t:<4} epochs {:<4} first weights {}", w.epochs[t], row.join(" "));
    }
    Ok(())
}
