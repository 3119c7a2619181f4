//! Samples a few timesteps of every drift geometry and prints class centroids
//! and the empirical Bayes accuracy.
//!
//!     cargo run --example generate_stream -- [seed]

use koopdrift::datasets::{bayes_label, centroids, sample_timestep, DriftKind, DriftSpec};

fn main() -> koopdrift::Result<()> {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(0);
    for kind in DriftKind::ALL {
        let spec = DriftSpec::new(kind);
        println!("{kind}: {}", kind.description());
        for t in [0, spec.period / 4, spec.period / 2, 3 * spec.period] {
            let batch = sample_timestep(&spec, t, 2000, seed)?;
            let mut hits = 0;
            for (x, &y) in batch.inputs.iter().zip(&batch.labels) {
                if bayes_label(&spec, t, *x)? == y {
                    hits += 1;
                }
            }
            let cs: Vec<String> = centroids(&spec, t)?
                .iter()
                .map(|c| format!("{}:({:+.2},{:+.2})", c.class, c.position[0], c.position[1]))
                .collect();
            println!("  t={t:<4} bayes acc {:.3}  centroids {}", hits as f64 / batch.len() as f64, cs.join(" "));
        }
    }
    Ok(())
}
