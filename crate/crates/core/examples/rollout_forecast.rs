//! Forecasts classifier weights over the held-out window without retraining
//! and compares accuracy against the frozen and retrained baselines.
//!
//!     cargo run --release --example rollout_forecast -- [A-F]

use koopdrift::config::RunConfig;
use koopdrift::datasets::DriftKind;
use koopdrift::pipeline;

fn main() -> koopdrift::Result<()> {
    let kind: DriftKind = std::env::args().nth(1).as_deref().unwrap_or("D").parse()?;
    let mut cfg = RunConfig::new(kind);
    cfg.cold_ablation = false;
    let train = pipeline::train(&cfg)?;
    let model = pipeline::fit(&cfg, &train)?;
    let out = pipeline::rollout(&cfg, &train, &model)?;

    for s in [&out.koopman_auto, &out.frozen, &out.retrained] {
        println!(
            "{:<13} mean {:.4}  min {:.4}  below 90%: {}/{}",
            s.mode.to_string(),
            s.mean,
            s.min,
            s.steps_below_90,
            s.len()
        );
    }
    println!("\n t    koopman  frozen  retrained");
    for i in (0..out.koopman_auto.len()).step_by(10) {
        println!(
            "{:<4}  {:.3}    {:.3}   {:.3}",
            out.koopman_auto.first_timestep + i,
            out.koopman_auto.accuracies[i],
            out.frozen.accuracies[i],
            out.retrained.accuracies[i]
        );
    }
    Ok(())
}
