//! Fits the Koopman surrogate to a trained trajectory and prints its spectrum.
//!
//!     cargo run --release --example koopman_spectrum -- [A-F]

use koopdrift::config::RunConfig;
use koopdrift::datasets::DriftKind;
use koopdrift::pipeline;

fn main() -> koopdrift::Result<()> {
    let kind: DriftKind = std::env::args().nth(1).as_deref().unwrap_or("E").parse()?;
    let mut cfg = RunConfig::new(kind);
    cfg.cold_ablation = false;
    let train = pipeline::train(&cfg)?;
    let model = pipeline::fit(&cfg, &train)?;

    println!("{kind} with {:?}", model.options.strategy);
    println!(
        "  latent dim {} (explained {:.4}), lifted dim {}",
        model.latent_dim(),
        model.basis.explained_ratio(),
        model.dict.lifted_dim()
    );
    println!(
        "  spectral radius {:.4} before, {:.6} after enforcement; latent block {:.4}",
        model.spectral_radius_pre, model.spectral_radius, model.latent_spectral_radius
    );
    println!("  one-step residual {:.4}", model.fit_residual);
    let mut eig = model.eigenvalues.clone();
    eig.sort_by(|a, b| b.0.hypot(b.1).total_cmp(&a.0.hypot(a.1)));
    println!("  |lambda|   arg/2pi   period (steps)");
    for (re, im) in eig.iter().take(12) {
        let phase = im.atan2(*re) / std::f64::consts::TAU;
        let period = if phase.abs() > 1e-9 { format!("{:.1}", 1.0 / phase.abs()) } else { "-".into() };
        println!("  {:.5}   {:+.4}   {period}", re.hypot(*im), phase);
    }
    Ok(())
}
